//! Two-layer include/exclude policy: `softmax(W2 · tanh(W1 · s + b1) + b2)`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, TraversalState};
use crate::error::{Error, Result};
use crate::scalar::{from_hex, to_hex, Scalar};

pub const INPUT: usize = 3;
pub const HIDDEN: usize = 20;
pub const OUTPUT: usize = 2;
pub const PARAM_COUNT: usize = HIDDEN * INPUT + HIDDEN + OUTPUT * HIDDEN + OUTPUT;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN * INPUT;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + OUTPUT * HIDDEN;

/// Probabilities are kept inside `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

pub const POLICY_FORMAT_VERSION: &str = "1";

/// Flat parameter vector laid out as `W1 (20x3, row-major) | b1 | W2 (2x20)
/// | b2`. Output 0 is "include", output 1 is "exclude".
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<F> {
    pub data: Vec<F>,
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Copy)]
pub struct Forward<F> {
    pub input: [F; INPUT],
    pub hidden: [F; HIDDEN],
    pub logits: [F; OUTPUT],
    pub probs: [F; OUTPUT],
}

impl<F: Scalar> PolicyParams<F> {
    pub fn zeros() -> Self {
        Self { data: vec![F::zero(); PARAM_COUNT] }
    }

    /// Uniform fan-in initialisation of the hidden layer; the output layer
    /// starts at zero so the initial policy is exactly uniform.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        let a1 = 1.0 / (INPUT as f64).sqrt();
        for w in &mut p.data[W1..B1] {
            *w = F::of(rng.random_range(-a1..a1));
        }
        p
    }

    /// Like [`init`](Self::init) but with random output weights as well.
    pub fn init_random(seed: u64) -> Self {
        let mut p = Self::init(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let a2 = 1.0 / (HIDDEN as f64).sqrt();
        for w in &mut p.data[W2..B2] {
            *w = F::of(rng.random_range(-a2..a2));
        }
        p
    }

    pub fn from_flat(data: Vec<F>) -> Result<Self> {
        if data.len() != PARAM_COUNT {
            return Err(Error::Config(format!("policy needs {PARAM_COUNT} parameters, got {}", data.len())));
        }
        Ok(Self { data })
    }

    pub fn w1(&self) -> &[F] {
        &self.data[W1..B1]
    }

    pub fn b1(&self) -> &[F] {
        &self.data[B1..W2]
    }

    pub fn w2(&self) -> &[F] {
        &self.data[W2..B2]
    }

    pub fn b2(&self) -> &[F] {
        &self.data[B2..]
    }

    pub fn b2_mut(&mut self) -> &mut [F] {
        &mut self.data[B2..]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("policy parameters contain non-finite values".into()))
        }
    }

    pub fn cast<G: Scalar>(&self) -> PolicyParams<G> {
        PolicyParams { data: self.data.iter().map(|v| G::of(v.as_f64())).collect() }
    }

    pub fn forward(&self, state: &TraversalState) -> Forward<F> {
        let input = state.s.map(F::of);
        let mut hidden = [F::zero(); HIDDEN];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.data[W1 + j * INPUT..W1 + (j + 1) * INPUT];
            let pre = row.iter().zip(&input).map(|(&w, &x)| w * x).sum::<F>() + self.data[B1 + j];
            *h = pre.tanh();
        }
        let mut logits = [F::zero(); OUTPUT];
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.data[W2 + k * HIDDEN..W2 + (k + 1) * HIDDEN];
            *z = row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<F>() + self.data[B2 + k];
        }
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let total = e[0] + e[1];
        Forward { input, hidden, logits, probs: [e[0] / total, e[1] / total] }
    }

    /// `(p_include, p_exclude)`.
    pub fn probabilities(&self, state: &TraversalState) -> Result<(F, F)> {
        self.check_finite()?;
        let f = self.forward(state);
        Ok((f.probs[0], f.probs[1]))
    }

    /// Adds the parameter gradient implied by `dlogits` at `fwd` to `grad`.
    pub fn backprop(&self, fwd: &Forward<F>, dlogits: [F; OUTPUT], grad: &mut [F]) {
        let mut dhidden = [F::zero(); HIDDEN];
        for k in 0..OUTPUT {
            grad[B2 + k] = grad[B2 + k] + dlogits[k];
            for j in 0..HIDDEN {
                grad[W2 + k * HIDDEN + j] = grad[W2 + k * HIDDEN + j] + dlogits[k] * fwd.hidden[j];
                dhidden[j] = dhidden[j] + dlogits[k] * self.data[W2 + k * HIDDEN + j];
            }
        }
        for j in 0..HIDDEN {
            let dpre = dhidden[j] * (F::one() - fwd.hidden[j] * fwd.hidden[j]);
            grad[B1 + j] = grad[B1 + j] + dpre;
            for i in 0..INPUT {
                grad[W1 + j * INPUT + i] = grad[W1 + j * INPUT + i] + dpre * fwd.input[i];
            }
        }
    }

    /// `-log π(a | s)` and its gradient.
    pub fn neg_log_prob_grad(&self, state: &TraversalState, action: Action) -> (F, Vec<F>) {
        let fwd = self.forward(state);
        let a = action.output_index();
        let mut grad = vec![F::zero(); PARAM_COUNT];
        let mut dz = fwd.probs;
        dz[a] = dz[a] - F::one();
        self.backprop(&fwd, dz, &mut grad);
        (-(fwd.probs[a].max(F::of(CLAMP)).ln()), grad)
    }

    /// Mean binary cross-entropy of `p_include` against membership labels,
    /// and its gradient.
    pub fn bce_loss_grad(&self, batch: &[(TraversalState, bool)]) -> (F, Vec<F>) {
        let mut grad = vec![F::zero(); PARAM_COUNT];
        if batch.is_empty() {
            return (F::zero(), grad);
        }
        let n = F::of(batch.len() as f64);
        let (lo, hi) = (F::of(CLAMP), F::one() - F::of(CLAMP));
        let mut loss = F::zero();
        for (state, label) in batch {
            let fwd = self.forward(state);
            let raw = fwd.probs[0];
            let p = raw.max(lo).min(hi);
            let y = if *label { F::one() } else { F::zero() };
            loss = loss - (y * p.ln() + (F::one() - y) * (F::one() - p).ln());
            if raw > lo && raw < hi {
                let d = (raw - y) / n;
                self.backprop(&fwd, [d, -d], &mut grad);
            }
        }
        (loss / n, grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PolicyFile {
            format_version: POLICY_FORMAT_VERSION.into(),
            kind: "policy".into(),
            scalar: F::NAME.into(),
            shape: Shape { input: INPUT, hidden: HIDDEN, output: OUTPUT },
            data: to_hex(&self.data),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        crate::check_format_version(&value, POLICY_FORMAT_VERSION, path)?;
        let file: PolicyFile =
            serde_json::from_value(value).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        if file.kind != "policy" {
            return Err(Error::MalformedFile(format!("{}: expected a policy file, found {:?}", path.display(), file.kind)));
        }
        if file.scalar != F::NAME {
            return Err(Error::MalformedFile(format!(
                "{}: stored as {}, requested {}",
                path.display(),
                file.scalar,
                F::NAME
            )));
        }
        if file.shape != (Shape { input: INPUT, hidden: HIDDEN, output: OUTPUT }) {
            return Err(Error::MalformedFile(format!("{}: unexpected shape {:?}", path.display(), file.shape)));
        }
        Self::from_flat(from_hex(&file.data, Some(PARAM_COUNT))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Shape {
    input: usize,
    hidden: usize,
    output: usize,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: String,
    kind: String,
    scalar: String,
    shape: Shape,
    data: String,
}
