use rand::Rng;

/// Categorical distribution over action (or sub-policy) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            logits: logits.to_vec(),
            log_probs: log_softmax(logits),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_logits(&vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn prob(&self, a: usize) -> f64 {
        self.log_probs[a].exp()
    }

    pub fn log_prob(&self, a: usize) -> f64 {
        self.log_probs[a]
    }

    pub fn entropy(&self) -> f64 {
        -self.log_probs.iter().map(|l| l.exp() * l).sum::<f64>()
    }

    /// Inverse-CDF sample; never returns an index of zero probability.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, l) in self.log_probs.iter().enumerate() {
            let p = l.exp();
            if p <= 0.0 {
                continue;
            }
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Lowest index among the most probable outcomes.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
