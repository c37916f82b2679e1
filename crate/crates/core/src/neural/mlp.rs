//! Two-hidden-layer ReLU perceptron with hand-written reverse mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::CategoricalDist;
use super::loss::LossHead;
use super::matrix::{gemm, Matrix, View};
use crate::error::{Error, Result};

/// Scale applied to the output layer at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputInit {
    /// Near-uniform initial action distribution (output weights ×0.01).
    Policy,
    Value,
}

/// Parameters of an `input → hidden → hidden → output` network.
///
/// Layer `l` stores its weights as an `in × out` row-major block followed by
/// `out` biases, all inside one flat vector so optimizers see a single slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: [usize; 4],
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    h1: Matrix,
    h2: Matrix,
    pub output: Matrix,
}

/// Scalar loss together with its gradient for every parameter.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub output: Matrix,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let dims = [input, hidden, hidden, output];
        Self {
            dims,
            params: vec![0.0; Self::count(&dims)],
        }
    }

    /// He-uniform hidden layers, fan-in scaled output layer.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        init: OutputInit,
        rng: &mut R,
    ) -> Self {
        let mut mlp = Self::zeros(input, hidden, output);
        for l in 0..3 {
            let (fan_in, _) = mlp.layer_shape(l);
            let bound = if l < 2 {
                (6.0 / fan_in as f64).sqrt()
            } else {
                let s = match init {
                    OutputInit::Policy => 0.01,
                    OutputInit::Value => 1.0,
                };
                s / (fan_in as f64).sqrt()
            };
            let (w, _) = mlp.layer_range(l);
            for p in &mut mlp.params[w] {
                *p = rng.gen_range(-bound..=bound);
            }
        }
        mlp
    }

    fn count(dims: &[usize; 4]) -> usize {
        (0..3).map(|l| dims[l] * dims[l + 1] + dims[l + 1]).sum()
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.dims[l], self.dims[l + 1])
    }

    /// Index ranges of layer `l`'s weights and biases inside the flat vector.
    fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for k in 0..l {
            off += self.dims[k] * self.dims[k + 1] + self.dims[k + 1];
        }
        let (i, o) = self.layer_shape(l);
        (off..off + i * o, off + i * o..off + i * o + o)
    }

    fn dense(&self, l: usize, x: &Matrix, relu: bool) -> Matrix {
        let (i, o) = self.layer_shape(l);
        let (wr, br) = self.layer_range(l);
        let b = &self.params[br];
        let mut y = Matrix::zeros(x.rows(), o);
        for r in 0..x.rows() {
            y.row_mut(r).copy_from_slice(b);
        }
        gemm(
            x.rows(),
            i,
            o,
            View {
                data: x.as_slice(),
                rs: i,
                cs: 1,
            },
            View {
                data: &self.params[wr],
                rs: o,
                cs: 1,
            },
            1.0,
            y.as_mut_slice(),
        );
        if relu {
            for v in y.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        y
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dims[0] {
            return Err(Error::DimensionMismatch {
                expected: self.dims[0],
                got: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        self.check_input(x)?;
        let h1 = self.dense(0, x, true);
        let h2 = self.dense(1, &h1, true);
        let output = self.dense(2, &h2, false);
        Ok(ForwardCache {
            input: x.clone(),
            h1,
            h2,
            output,
        })
    }

    /// Batched forward pass; one output row per input row.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let h1 = self.dense(0, x, true);
        let h2 = self.dense(1, &h1, true);
        Ok(self.dense(2, &h2, false))
    }

    pub fn forward_one(&self, observation: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, observation.len(), observation.to_vec())?;
        Ok(self.forward(&x)?.into_vec())
    }

    pub fn forward_policy(&self, observation: &[f64]) -> Result<CategoricalDist> {
        Ok(CategoricalDist::from_logits(
            &self.forward_one(observation)?,
        ))
    }

    pub fn forward_value(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.forward_one(observation)?[0])
    }

    /// Gradient of every parameter given `d_output = ∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Matrix) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let d_h2 = self.dense_backward(2, &cache.h2, d_output, &mut grads);
        let d_h2 = relu_mask(d_h2, &cache.h2);
        let d_h1 = self.dense_backward(1, &cache.h1, &d_h2, &mut grads);
        let d_h1 = relu_mask(d_h1, &cache.h1);
        self.dense_weight_grads(0, &cache.input, &d_h1, &mut grads);
        grads
    }

    fn dense_weight_grads(&self, l: usize, x: &Matrix, dy: &Matrix, grads: &mut [f64]) {
        let (i, o) = self.layer_shape(l);
        let (wr, br) = self.layer_range(l);
        let batch = x.rows();
        // dW = xᵀ · dy
        gemm(
            i,
            batch,
            o,
            View {
                data: x.as_slice(),
                rs: 1,
                cs: i,
            },
            View {
                data: dy.as_slice(),
                rs: o,
                cs: 1,
            },
            0.0,
            &mut grads[wr],
        );
        let db = &mut grads[br];
        for r in 0..batch {
            for (g, d) in db.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
    }

    fn dense_backward(&self, l: usize, x: &Matrix, dy: &Matrix, grads: &mut [f64]) -> Matrix {
        self.dense_weight_grads(l, x, dy, grads);
        let (i, o) = self.layer_shape(l);
        let (wr, _) = self.layer_range(l);
        // dx = dy · Wᵀ
        let mut dx = Matrix::zeros(x.rows(), i);
        gemm(
            x.rows(),
            o,
            i,
            View {
                data: dy.as_slice(),
                rs: o,
                cs: 1,
            },
            View {
                data: &self.params[wr],
                rs: 1,
                cs: o,
            },
            0.0,
            dx.as_mut_slice(),
        );
        dx
    }

    /// Weighted sum of loss heads and its exact gradient.
    pub fn loss_and_grad(&self, x: &Matrix, heads: &[(f64, LossHead<'_>)]) -> Result<LossAndGrad> {
        let cache = self.forward_cached(x)?;
        let mut loss = 0.0;
        let mut d_out = Matrix::zeros(x.rows(), self.output_dim());
        for (weight, head) in heads {
            if *weight == 0.0 {
                continue;
            }
            let (l, g) = head.evaluate(&cache.output)?;
            loss += weight * l;
            for (d, gi) in d_out.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *d += weight * gi;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let grads = self.backward(&cache, &d_out);
        Ok(LossAndGrad {
            loss,
            grads,
            output: cache.output,
        })
    }

    pub fn to_record(&self) -> MlpRecord {
        let layers = (0..3)
            .map(|l| {
                let (i, o) = self.layer_shape(l);
                let (wr, br) = self.layer_range(l);
                LayerRecord {
                    rows: i,
                    cols: o,
                    weights: self.params[wr].to_vec(),
                    bias: self.params[br].to_vec(),
                }
            })
            .collect();
        MlpRecord {
            format: MLP_FORMAT.to_string(),
            version: MLP_VERSION,
            dims: self.dims.to_vec(),
            layers,
        }
    }

    pub fn from_record(rec: &MlpRecord) -> Result<Self> {
        if rec.format != MLP_FORMAT || rec.version != MLP_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network format {} v{}",
                rec.format, rec.version
            )));
        }
        let dims: [usize; 4] = rec
            .dims
            .as_slice()
            .try_into()
            .map_err(|_| Error::Checkpoint("expected 4 layer dims".into()))?;
        if dims[1] != dims[2] || rec.layers.len() != 3 {
            return Err(Error::Checkpoint("malformed layer list".into()));
        }
        let mut params = Vec::with_capacity(Self::count(&dims));
        for (l, layer) in rec.layers.iter().enumerate() {
            let (i, o) = (dims[l], dims[l + 1]);
            if layer.rows != i
                || layer.cols != o
                || layer.weights.len() != i * o
                || layer.bias.len() != o
            {
                return Err(Error::Checkpoint(format!("layer {l} shape mismatch")));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { dims, params })
    }
}

fn relu_mask(mut d: Matrix, activation: &Matrix) -> Matrix {
    for (g, &a) in d.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

pub const MLP_FORMAT: &str = "fen-mlp";
pub const MLP_VERSION: u32 = 1;

/// Serialized network: version tag, layer dims and row-major (`in × out`) weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub format: String,
    pub version: u32,
    pub dims: Vec<usize>,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_is_uniform_and_zero_valued() {
        let m = Mlp::zeros(7, 16, 5);
        let d = m.forward_policy(&[0.3; 7]).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert!((d.entropy() - 5f64.ln()).abs() < 1e-12);
        assert_eq!(Mlp::zeros(7, 16, 1).forward_value(&[1.0; 7]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::zeros(3, 4, 2);
        assert!(matches!(
            m.forward_one(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn deterministic_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Mlp::new(6, 32, 1, OutputInit::Value, &mut rng);
        let x = [0.5, -0.2, 0.1, 0.9, -1.0, 0.0];
        assert_eq!(m.forward_value(&x).unwrap(), m.forward_value(&x).unwrap());
        for _ in 0..100 {
            let big: Vec<f64> = (0..6).map(|_| rng.gen_range(-1e3..1e3)).collect();
            assert!(m.forward_value(&big).unwrap().is_finite());
        }
    }

    #[test]
    fn batched_matches_single_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mlp::new(4, 8, 3, OutputInit::Policy, &mut rng);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let out = m.forward(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let single = m.forward_one(row).unwrap();
            for (a, b) in out.row(r).iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn policy_init_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::new(20, 64, 5, OutputInit::Policy, &mut rng);
        let d = m.forward_policy(&[1.0; 20]).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.2).abs() < 0.02));
    }

    #[test]
    fn record_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Mlp::new(5, 12, 3, OutputInit::Policy, &mut rng);
        let json = serde_json::to_string(&m.to_record()).unwrap();
        let back: MlpRecord = serde_json::from_str(&json).unwrap();
        let m2 = Mlp::from_record(&back).unwrap();
        assert_eq!(
            m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            m2.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        let mut bad = back.clone();
        bad.version = 99;
        assert!(Mlp::from_record(&bad).is_err());
    }
}
