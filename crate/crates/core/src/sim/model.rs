//! A one-hidden-layer tanh network classifying every frame into a token,
//! standing in for an ASR model.
//!
//! ```text
//! h_t      = tanh(x_t W1 + b1)          W1: D x H, b1: H
//! logits_t = h_t W2 + b2                W2: H x V, b2: V
//! loss     = mean_t  -log softmax(logits_t)[y_t]
//! ```

use super::world::Utterance;
use super::SimError;
use crate::rng::SplitMix64;
use crate::snapshot::{TensorRecord, WeightSnapshot};

pub const HIDDEN_BIAS: &str = "hidden.bias";
pub const HIDDEN_WEIGHT: &str = "hidden.weight";
pub const OUTPUT_BIAS: &str = "output.bias";
pub const OUTPUT_WEIGHT: &str = "output.weight";

/// Tensor names in canonical (sorted) order.
pub const TENSOR_NAMES: [&str; 4] = [HIDDEN_BIAS, HIDDEN_WEIGHT, OUTPUT_BIAS, OUTPUT_WEIGHT];

/// Half-width of the uniform initialization range.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TinyModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub vocab: usize,
    /// Row-major `input_dim x hidden`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `hidden x vocab`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl TinyModel {
    pub fn zeros(input_dim: usize, hidden: usize, vocab: usize) -> Self {
        Self {
            input_dim,
            hidden,
            vocab,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * vocab],
            b2: vec![0.0; vocab],
        }
    }

    /// Every parameter uniform in `[-INIT_RANGE, INIT_RANGE)`. Tensors are
    /// filled in canonical name order, each from its own sub-stream
    /// `derive(seed, [tensor position])`, values in row-major order.
    pub fn init(input_dim: usize, hidden: usize, vocab: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input_dim, hidden, vocab);
        for (k, name) in TENSOR_NAMES.iter().enumerate() {
            let mut rng = SplitMix64::derive(seed, &[k as u64]);
            for v in m.tensor_mut(name) {
                *v = rng.uniform(-INIT_RANGE, INIT_RANGE);
            }
        }
        m
    }

    fn tensor_mut(&mut self, name: &str) -> &mut Vec<f64> {
        match name {
            HIDDEN_BIAS => &mut self.b1,
            HIDDEN_WEIGHT => &mut self.w1,
            OUTPUT_BIAS => &mut self.b2,
            OUTPUT_WEIGHT => &mut self.w2,
            _ => unreachable!("unknown tensor {name}"),
        }
    }

    fn tensors(&self) -> [(&'static str, Vec<usize>, &Vec<f64>); 4] {
        [
            (HIDDEN_BIAS, vec![self.hidden], &self.b1),
            (HIDDEN_WEIGHT, vec![self.input_dim, self.hidden], &self.w1),
            (OUTPUT_BIAS, vec![self.vocab], &self.b2),
            (OUTPUT_WEIGHT, vec![self.hidden, self.vocab], &self.w2),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn to_snapshot(&self, model_id: impl Into<String>) -> WeightSnapshot {
        WeightSnapshot {
            model_id: model_id.into(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, shape, values)| TensorRecord {
                    name: name.to_string(),
                    shape,
                    values: values.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(s: &WeightSnapshot) -> Result<Self, SimError> {
        s.validate()?;
        let names: Vec<&str> = s.names().collect();
        if names != TENSOR_NAMES {
            return Err(SimError::ArchitectureMismatch(format!(
                "expected tensors {TENSOR_NAMES:?}, found {names:?}"
            )));
        }
        let get = |n: &str| s.tensor(n).expect("checked above");
        let (w1, w2) = (get(HIDDEN_WEIGHT), get(OUTPUT_WEIGHT));
        let (b1, b2) = (get(HIDDEN_BIAS), get(OUTPUT_BIAS));
        let shapes_ok = w1.shape.len() == 2
            && w2.shape.len() == 2
            && b1.shape == [w1.shape[1]]
            && w2.shape[0] == w1.shape[1]
            && b2.shape == [w2.shape[1]];
        if !shapes_ok {
            return Err(SimError::ArchitectureMismatch(format!(
                "inconsistent shapes: {:?} {:?} {:?} {:?}",
                b1.shape, w1.shape, b2.shape, w2.shape
            )));
        }
        Ok(Self {
            input_dim: w1.shape[0],
            hidden: w1.shape[1],
            vocab: w2.shape[1],
            w1: w1.values.clone(),
            b1: b1.values.clone(),
            w2: w2.values.clone(),
            b2: b2.values.clone(),
        })
    }

    pub fn check_shapes(&self, u: &Utterance) -> Result<(), SimError> {
        if u.dim != self.input_dim {
            return Err(SimError::ShapeMismatch(format!(
                "utterance frames have dim {}, model expects {}",
                u.dim, self.input_dim
            )));
        }
        if u.frames.len() != u.tokens.len() * u.dim || u.tokens.is_empty() {
            return Err(SimError::ShapeMismatch(format!(
                "{} frame values for {} tokens of dim {}",
                u.frames.len(),
                u.tokens.len(),
                u.dim
            )));
        }
        if let Some(&t) = u.tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(SimError::ShapeMismatch(format!(
                "token {t} outside vocabulary of {}",
                self.vocab
            )));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64], h: &mut [f64]) {
        h.copy_from_slice(&self.b1);
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (hj, wij) in h.iter_mut().zip(row) {
                *hj += xi * wij;
            }
        }
        for hj in h.iter_mut() {
            *hj = hj.tanh();
        }
    }

    fn logits(&self, h: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.b2);
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.w2[j * self.vocab..(j + 1) * self.vocab];
            for (zk, wjk) in z.iter_mut().zip(row) {
                *zk += hj * wjk;
            }
        }
    }

    /// `-log softmax(z)[y]`, computed stably; leaves softmax(z) in `z`.
    fn softmax_xent(z: &mut [f64], y: usize) -> f64 {
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted_y = z[y] - max;
        let mut sum = 0.0;
        for zk in z.iter_mut() {
            *zk = (*zk - max).exp();
            sum += *zk;
        }
        let loss = sum.ln() - shifted_y;
        for zk in z.iter_mut() {
            *zk /= sum;
        }
        loss
    }

    pub fn forward_loss(&self, u: &Utterance) -> Result<f64, SimError> {
        self.check_shapes(u)?;
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.vocab];
        let mut total = 0.0;
        for (t, &y) in u.tokens.iter().enumerate() {
            self.hidden_activations(u.frame(t), &mut h);
            self.logits(&h, &mut z);
            total += log_sum_exp(&z) - z[y];
        }
        Ok(total / u.len() as f64)
    }

    /// Mean loss and its gradient with respect to every parameter, returned
    /// as a model-shaped value.
    pub fn loss_and_gradient(&self, u: &Utterance) -> Result<(f64, TinyModel), SimError> {
        self.check_shapes(u)?;
        let inv_t = 1.0 / u.len() as f64;
        let mut g = TinyModel::zeros(self.input_dim, self.hidden, self.vocab);
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.vocab];
        let mut dh = vec![0.0; self.hidden];
        let mut total = 0.0;
        for (t, &y) in u.tokens.iter().enumerate() {
            let x = u.frame(t);
            self.hidden_activations(x, &mut h);
            self.logits(&h, &mut z);
            total += Self::softmax_xent(&mut z, y);
            // z now holds probabilities; dL/dlogits = (p - onehot) / T
            z[y] -= 1.0;
            for zk in z.iter_mut() {
                *zk *= inv_t;
            }
            for (gb, dz) in g.b2.iter_mut().zip(&z) {
                *gb += dz;
            }
            for (j, &hj) in h.iter().enumerate() {
                let grow = &mut g.w2[j * self.vocab..(j + 1) * self.vocab];
                let wrow = &self.w2[j * self.vocab..(j + 1) * self.vocab];
                let mut back = 0.0;
                for k in 0..self.vocab {
                    grow[k] += hj * z[k];
                    back += wrow[k] * z[k];
                }
                dh[j] = back * (1.0 - hj * hj);
            }
            for (gb, d) in g.b1.iter_mut().zip(&dh) {
                *gb += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                let grow = &mut g.w1[i * self.hidden..(i + 1) * self.hidden];
                for (gw, d) in grow.iter_mut().zip(&dh) {
                    *gw += xi * d;
                }
            }
        }
        Ok((total * inv_t, g))
    }

    /// One full-batch gradient-descent step; `self` is left untouched.
    pub fn train_step(&self, u: &Utterance, lr: f64) -> Result<TinyModel, SimError> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(SimError::InvalidTrainConfig(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        if lr == 0.0 {
            self.check_shapes(u)?;
            return Ok(self.clone());
        }
        let (_, g) = self.loss_and_gradient(u)?;
        let mut next = self.clone();
        next.axpy(-lr, &g);
        Ok(next)
    }

    fn axpy(&mut self, a: f64, other: &TinyModel) {
        for (dst, src) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    /// All parameters flattened in canonical tensor order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (_, _, v) in self.tensors() {
            out.extend_from_slice(v);
        }
        out
    }

    /// Inverse of [`TinyModel::flat`] for a model of this shape.
    pub fn with_flat(&self, flat: &[f64]) -> TinyModel {
        assert_eq!(flat.len(), self.num_parameters());
        let mut m = self.clone();
        let mut off = 0;
        for name in TENSOR_NAMES {
            let t = m.tensor_mut(name);
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        m
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_utterance(d: usize, v: usize, t: usize, seed: u64) -> Utterance {
        let mut rng = SplitMix64::new(seed);
        Utterance {
            frames: (0..t * d).map(|_| rng.gaussian()).collect(),
            dim: d,
            tokens: (0..t).map(|_| rng.below(v)).collect(),
        }
    }

    /// Direct transcription of the forward equations, no shared helpers.
    fn oracle_loss(m: &TinyModel, u: &Utterance) -> f64 {
        let mut total = 0.0;
        for t in 0..u.len() {
            let x = u.frame(t);
            let h: Vec<f64> = (0..m.hidden)
                .map(|j| {
                    let a: f64 =
                        m.b1[j] + (0..m.input_dim).map(|i| x[i] * m.w1[i * m.hidden + j]).sum::<f64>();
                    a.tanh()
                })
                .collect();
            let z: Vec<f64> = (0..m.vocab)
                .map(|k| m.b2[k] + (0..m.hidden).map(|j| h[j] * m.w2[j * m.vocab + k]).sum::<f64>())
                .collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            total += -(z[u.tokens[t]].exp() / denom).ln();
        }
        total / u.len() as f64
    }

    #[test]
    fn zero_model_loss_is_log_vocab() {
        let m = TinyModel::zeros(3, 4, 5);
        let u = random_utterance(3, 5, 6, 1);
        assert!((m.forward_loss(&u).unwrap() - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_give_near_zero_loss() {
        let mut m = TinyModel::zeros(1, 1, 2);
        // h = tanh(big * x); x = +1 for token 1, -1 for token 0
        m.w1 = vec![50.0];
        m.w2 = vec![-40.0, 40.0];
        let u = Utterance {
            frames: vec![1.0, -1.0, 1.0],
            dim: 1,
            tokens: vec![1, 0, 1],
        };
        assert!(m.forward_loss(&u).unwrap() < 1e-30);
    }

    #[test]
    fn forward_matches_oracle() {
        for seed in 0..5 {
            let m = TinyModel::init(4, 6, 3, seed);
            let mut big = m.clone();
            for v in big.w1.iter_mut() {
                *v *= 10.0;
            }
            let u = random_utterance(4, 3, 9, 100 + seed);
            for model in [&m, &big] {
                let a = model.forward_loss(&u).unwrap();
                let b = oracle_loss(model, &u);
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_loss_matches_forward() {
        let m = TinyModel::init(3, 4, 3, 9);
        let u = random_utterance(3, 3, 5, 2);
        let (l, _) = m.loss_and_gradient(&u).unwrap();
        assert!((l - m.forward_loss(&u).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = TinyModel::init(3, 4, 3, 21);
        let u = random_utterance(3, 3, 5, 22);
        let (_, g) = m.loss_and_gradient(&u).unwrap();
        let flat = m.flat();
        let gflat = g.flat();
        let step = 1e-5;
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += step;
            let lp = m.with_flat(&p).forward_loss(&u).unwrap();
            p[i] -= 2.0 * step;
            let lm = m.with_flat(&p).forward_loss(&u).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            assert!((fd - gflat[i]).abs() < 1e-6, "param {i}: {fd} vs {}", gflat[i]);
        }
    }

    #[test]
    fn zero_lr_is_identity() {
        let m = TinyModel::init(3, 4, 3, 5);
        let u = random_utterance(3, 3, 5, 6);
        assert_eq!(m.train_step(&u, 0.0).unwrap(), m);
    }

    #[test]
    fn small_step_descends() {
        for seed in 0..10 {
            let m = TinyModel::init(3, 4, 3, seed);
            let u = random_utterance(3, 3, 5, seed + 50);
            let before = m.forward_loss(&u).unwrap();
            let after = m.train_step(&u, 1e-3).unwrap().forward_loss(&u).unwrap();
            assert!(after < before, "seed {seed}: {after} >= {before}");
        }
    }

    #[test]
    fn shape_errors() {
        let m = TinyModel::init(3, 4, 3, 5);
        let u = random_utterance(2, 3, 5, 6);
        assert!(matches!(m.forward_loss(&u), Err(SimError::ShapeMismatch(_))));
        let mut u = random_utterance(3, 3, 5, 6);
        u.tokens[0] = 7;
        assert!(matches!(m.train_step(&u, 0.1), Err(SimError::ShapeMismatch(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let m = TinyModel::init(3, 4, 5, 8);
        let s = m.to_snapshot("x");
        s.validate().unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), TENSOR_NAMES);
        assert_eq!(TinyModel::from_snapshot(&s).unwrap(), m);
    }

    #[test]
    fn init_range_and_determinism() {
        let a = TinyModel::init(5, 6, 7, 3);
        assert_eq!(a, TinyModel::init(5, 6, 7, 3));
        assert_ne!(a, TinyModel::init(5, 6, 7, 4));
        assert!(a.flat().iter().all(|v| v.abs() <= INIT_RANGE));
    }
}
