//! Controller selection statistics binned by relative utility deviation.

use serde::{Deserialize, Serialize};

/// One controller decision seen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub step: u64,
    pub agent: usize,
    /// `(u_i - ū) / ū` at the decision.
    pub deviation: f64,
    /// Controller probability of φ₁.
    pub p_phi1: f64,
    pub chosen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean probability of φ₁ over the bin; `None` when the bin is empty.
    pub p_phi1: Option<f64>,
}

impl SelectionBin {
    pub fn p_other(&self) -> Option<f64> {
        self.p_phi1.map(|p| 1.0 - p)
    }
}

/// Bins decisions into `bins` equal-width bins over `[-1, 1]`. Deviations
/// outside the range fall into the edge bins.
pub fn selection_profile(records: &[SelectionRecord], bins: usize) -> Vec<SelectionBin> {
    let bins = bins.max(1);
    let width = 2.0 / bins as f64;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for r in records.iter().filter(|r| r.deviation.is_finite()) {
        let k = (((r.deviation + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
        sums[k] += r.p_phi1;
        counts[k] += 1;
    }
    (0..bins)
        .map(|k| SelectionBin {
            lo: -1.0 + k as f64 * width,
            hi: -1.0 + (k + 1) as f64 * width,
            count: counts[k],
            p_phi1: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
        })
        .collect()
}
