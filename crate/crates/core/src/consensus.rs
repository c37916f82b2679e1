//! Gossip-based distributed average consensus over the neighbor graph
//! induced by what each agent can observe.

use serde::{Deserialize, Serialize};

/// Undirected neighbor relation over agent indices. No self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborGraph {
    adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Builds the symmetric closure of a possibly directed relation:
    /// `j` is a neighbor of `i` iff `j` is listed for `i` or `i` for `j`.
    pub fn from_directed(lists: &[Vec<usize>]) -> Self {
        let n = lists.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j == i || j >= n {
                    continue;
                }
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
        }
        Self { adjacency }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); n];
        for &(a, b) in edges {
            lists[a].push(b);
        }
        Self::from_directed(&lists)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&j| j != i && self.contains(j, i)))
    }

    /// Number of connected components (isolated agents count as one each).
    pub fn components(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for &j in &self.adjacency[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }
}

/// `1 / (max(d_i, d_j) + 1)`
pub fn gossip_weight(d_i: usize, d_j: usize) -> f64 {
    1.0 / (d_i.max(d_j) as f64 + 1.0)
}

/// One synchronous gossip round computed from a snapshot of `estimates`.
pub fn gossip_round(estimates: &[f64], graph: &NeighborGraph) -> Vec<f64> {
    debug_assert_eq!(estimates.len(), graph.len());
    estimates
        .iter()
        .enumerate()
        .map(|(i, &x_i)| {
            let d_i = graph.degree(i);
            x_i + graph
                .neighbors(i)
                .iter()
                .map(|&j| gossip_weight(d_i, graph.degree(j)) * (estimates[j] - x_i))
                .sum::<f64>()
        })
        .collect()
}

/// One agent's local belief of the average utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossipState {
    pub estimate: f64,
    pub last_self_utility: f64,
}

impl GossipState {
    /// Estimate starts at the agent's own utility.
    pub fn new(u_i: f64) -> Self {
        Self {
            estimate: u_i,
            last_self_utility: u_i,
        }
    }
}

/// Folds the drift of the agent's own utility since the last update into its estimate.
pub fn self_correct(state: GossipState, current_u_i: f64) -> GossipState {
    GossipState {
        estimate: state.estimate + (current_u_i - state.last_self_utility),
        last_self_utility: current_u_i,
    }
}

/// Gossip states of a whole population.
///
/// Each agent contributes only its own utility (through self-correction);
/// everything else it learns comes from neighbors' estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipNetwork {
    states: Vec<GossipState>,
}

impl GossipNetwork {
    pub fn new(n: usize) -> Self {
        Self {
            states: vec![GossipState::new(0.0); n],
        }
    }

    pub fn estimate(&self, i: usize) -> f64 {
        self.states[i].estimate
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.estimate).collect()
    }

    pub fn states(&self) -> &[GossipState] {
        &self.states
    }

    /// Self-correction with each agent's own utility followed by `rounds` gossip rounds.
    pub fn update(&mut self, own_utilities: &[f64], graph: &NeighborGraph, rounds: usize) {
        for (s, &u) in self.states.iter_mut().zip(own_utilities) {
            *s = self_correct(*s, u);
        }
        let mut est = self.estimates();
        for _ in 0..rounds {
            est = gossip_round(&est, graph);
        }
        for (s, e) in self.states.iter_mut().zip(est) {
            s.estimate = e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights() {
        assert_eq!(gossip_weight(1, 1), 0.5);
        assert_eq!(gossip_weight(3, 1), 0.25);
        assert_eq!(gossip_weight(1, 3), 0.25);
    }

    #[test]
    fn two_nodes_exact_in_one_round() {
        let g = NeighborGraph::from_edges(2, &[(0, 1)]);
        assert_eq!(gossip_round(&[0.0, 1.0], &g), vec![0.5, 0.5]);
    }

    #[test]
    fn star_graph_round() {
        let g = NeighborGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let next = gossip_round(&[1.0, 0.0, 0.0, 0.0], &g);
        for x in next {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_and_isolated_agents() {
        let g = NeighborGraph::from_edges(5, &[(0, 1), (1, 2), (3, 1)]);
        assert_eq!(gossip_round(&[0.7; 5], &g), vec![0.7; 5]);
        let next = gossip_round(&[0.1, 0.2, 0.3, 0.4, 0.9], &g);
        assert_eq!(next[4], 0.9);
    }

    #[test]
    fn self_correct_examples() {
        let s = self_correct(
            GossipState {
                estimate: 0.5,
                last_self_utility: 0.4,
            },
            0.5,
        );
        assert!((s.estimate - 0.6).abs() < 1e-12);
        let same = GossipState {
            estimate: 0.3,
            last_self_utility: 0.2,
        };
        assert_eq!(self_correct(same, 0.2), same);
        assert_eq!(self_correct(GossipState::new(0.3), 0.8).estimate, 0.8);
    }

    #[test]
    fn network_sum_tracks_true_total() {
        let g = NeighborGraph::from_edges(4, &[(0, 1), (2, 3)]);
        let mut net = GossipNetwork::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            net.update(&u, &g, 2);
            let total: f64 = u.iter().sum();
            assert!((net.estimates().iter().sum::<f64>() - total).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_closure() {
        let g = NeighborGraph::from_directed(&[vec![1, 2, 3], vec![0], vec![], vec![2]]);
        assert!(g.is_symmetric());
        assert!(g.contains(2, 0) && g.contains(2, 3) && g.contains(3, 0));
        assert_eq!(g.degree(0), 3);
        assert_eq!(g.components(), 1);
    }

    proptest! {
        #[test]
        fn weight_symmetric(a in 0usize..100, b in 0usize..100) {
            prop_assert_eq!(gossip_weight(a, b), gossip_weight(b, a));
        }

        #[test]
        fn round_conserves_sum_and_contracts(seed in any::<u64>(), n in 2usize..30, p in 0.05f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            let g = NeighborGraph::from_edges(n, &edges);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let y = gossip_round(&x, &g);
            let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
            prop_assert!((sx - sy).abs() < 1e-9);
            let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
            let min = |v: &[f64]| v.iter().copied().fold(f64::MAX, f64::min);
            prop_assert!(max(&y) <= max(&x) + 1e-12);
            prop_assert!(min(&y) >= min(&x) - 1e-12);
        }
    }
}
