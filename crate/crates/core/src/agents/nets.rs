use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::neural::{Mlp, MlpRecord};
use crate::ppo::{ActorCritic, PpoConfig};

/// Controller θ (with its critic) and sub-policies φ₁..φ_k (each with a critic).
/// `subs[0]` is φ₁, the environmental-reward sub-policy.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalNets {
    pub controller: ActorCritic,
    pub subs: Vec<ActorCritic>,
}

/// Parameters owned by one learner (shared by several agents under weight sharing).
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySet {
    Hierarchical(HierarchicalNets),
    Flat(ActorCritic),
}

impl PolicySet {
    pub fn hierarchical<R: Rng + ?Sized>(
        obs_dim: usize,
        controller_dim: usize,
        hidden: usize,
        num_actions: usize,
        num_subs: usize,
        ppo: &PpoConfig,
        rng: &mut R,
    ) -> Self {
        let controller = ActorCritic::new(controller_dim, hidden, num_subs, ppo, rng);
        let subs = (0..num_subs)
            .map(|_| ActorCritic::new(obs_dim, hidden, num_actions, ppo, rng))
            .collect();
        PolicySet::Hierarchical(HierarchicalNets { controller, subs })
    }

    pub fn as_hierarchical(&self) -> Option<&HierarchicalNets> {
        match self {
            PolicySet::Hierarchical(h) => Some(h),
            PolicySet::Flat(_) => None,
        }
    }

    pub fn as_flat(&self) -> Option<&ActorCritic> {
        match self {
            PolicySet::Flat(f) => Some(f),
            PolicySet::Hierarchical(_) => None,
        }
    }

    pub fn to_record(&self) -> NetsRecord {
        let pair = |ac: &ActorCritic| PairRecord {
            policy: ac.policy.to_record(),
            value: ac.value.to_record(),
        };
        match self {
            PolicySet::Hierarchical(h) => NetsRecord::Hierarchical {
                controller: pair(&h.controller),
                subs: h.subs.iter().map(pair).collect(),
            },
            PolicySet::Flat(f) => NetsRecord::Flat { policy: pair(f) },
        }
    }

    /// Rebuilds networks from a record; optimizer moments start fresh.
    pub fn from_record(rec: &NetsRecord, ppo: &PpoConfig) -> Result<Self> {
        let pair = |p: &PairRecord| -> Result<ActorCritic> {
            Ok(ActorCritic::from_nets(
                Mlp::from_record(&p.policy)?,
                Mlp::from_record(&p.value)?,
                ppo,
            ))
        };
        Ok(match rec {
            NetsRecord::Hierarchical { controller, subs } => {
                PolicySet::Hierarchical(HierarchicalNets {
                    controller: pair(controller)?,
                    subs: subs.iter().map(pair).collect::<Result<_>>()?,
                })
            }
            NetsRecord::Flat { policy } => PolicySet::Flat(pair(policy)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub policy: MlpRecord,
    pub value: MlpRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetsRecord {
    Hierarchical {
        controller: PairRecord,
        subs: Vec<PairRecord>,
    },
    Flat {
        policy: PairRecord,
    },
}
