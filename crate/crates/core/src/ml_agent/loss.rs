//! Contrastive alignment, pair matching and pool fine-tuning objectives,
//! each with its analytic gradient.
//!
//! The `*_encodings` kernels work on explicit unit vectors and return the
//! loss gradient with respect to those vectors; the parameter-level
//! functions embed text, call the kernels and backpropagate through the
//! projections.

use crate::error::{Error, Result};
use crate::graph::render_instructions;
use crate::optim::sgd_step;
use crate::scalar::{dot, Scalar};

use super::encoder::{Encoded, EncoderParams, Side};
use super::pool::PathPool;

/// One anchor of a contrastive loss: `-log softmax` of the positive among
/// `candidates` (all indices into a shared vector table).
struct Term {
    anchor: usize,
    candidates: Vec<usize>,
    positive: usize,
}

/// Sum over terms of `-s⁺/τ + log Σ_{j∈D} exp(s_j/τ)`, where `D` is every
/// candidate, or every candidate except the positive when `strict`.
fn contrastive<F: Scalar>(vectors: &[&[F]], terms: &[Term], tau: f64, strict: bool) -> Result<(F, Vec<Vec<F>>)> {
    let tau_f = F::of(tau);
    let mut grads: Vec<Vec<F>> = vectors.iter().map(|v| vec![F::zero(); v.len()]).collect();
    let mut loss = F::zero();
    for term in terms {
        let a = vectors[term.anchor];
        let scores: Vec<F> = term.candidates.iter().map(|&c| dot(a, vectors[c]) / tau_f).collect();
        let denom: Vec<usize> = (0..scores.len()).filter(|&j| !strict || j != term.positive).collect();
        if denom.is_empty() {
            return Err(Error::DegenerateBatch(
                "the denominator without the positive pair is empty; use at least two items".into(),
            ));
        }
        let m = denom.iter().map(|&j| scores[j]).fold(F::neg_infinity(), F::max);
        let z: F = denom.iter().map(|&j| (scores[j] - m).exp()).sum();
        loss = loss - scores[term.positive] + m + z.ln();

        // d loss / d s_j (scores already divided by τ)
        let mut ds = vec![F::zero(); scores.len()];
        ds[term.positive] = -F::one();
        for &j in &denom {
            ds[j] = ds[j] + (scores[j] - m).exp() / z;
        }
        for (k, &c) in term.candidates.iter().enumerate() {
            let w = ds[k] / tau_f;
            if w.is_zero() {
                continue;
            }
            for i in 0..a.len() {
                grads[term.anchor][i] = grads[term.anchor][i] + w * vectors[c][i];
                grads[c][i] = grads[c][i] + w * a[i];
            }
        }
    }
    Ok((loss, grads))
}

fn half<F: Scalar>(x: F) -> F {
    x * F::of(0.5)
}

/// Loss and gradients of the symmetric in-batch contrastive objective for
/// aligned `questions[i]` / `paths[i]`:
/// `(Σ_i -log softmax_j(q_i·p_j/τ)[i] + Σ_i -log softmax_j(p_i·q_j/τ)[i]) / 2`.
/// Returns `(loss, d/dq, d/dp)`.
#[allow(clippy::type_complexity)]
pub fn qpa_encodings<F: Scalar>(
    questions: &[Vec<F>],
    paths: &[Vec<F>],
    tau: f64,
    strict: bool,
) -> Result<(F, Vec<Vec<F>>, Vec<Vec<F>>)> {
    let n = questions.len();
    if n != paths.len() {
        return Err(Error::Precondition(format!("{n} questions but {} paths", paths.len())));
    }
    if n == 0 {
        return Ok((F::zero(), Vec::new(), Vec::new()));
    }
    let vectors: Vec<&[F]> = questions.iter().chain(paths).map(|v| v.as_slice()).collect();
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        terms.push(Term { anchor: i, candidates: (n..2 * n).collect(), positive: i });
        terms.push(Term { anchor: n + i, candidates: (0..n).collect(), positive: i });
    }
    let (loss, mut grads) = contrastive(&vectors, &terms, tau, strict)?;
    for g in &mut grads {
        for x in g.iter_mut() {
            *x = half(*x);
        }
    }
    let gp = grads.split_off(n);
    Ok((half(loss), grads, gp))
}

/// Loss and gradients of the pool objective. Question `i` is contrasted
/// against its own pool with `best[i]` as the positive; symmetrically each
/// positive path is contrasted against every question of the batch. The
/// two sums are averaged. Returns `(loss, d/dq, d/dpool)`.
#[allow(clippy::type_complexity)]
pub fn ft_encodings<F: Scalar>(
    questions: &[Vec<F>],
    pools: &[Vec<Vec<F>>],
    best: &[usize],
    tau: f64,
    strict: bool,
) -> Result<(F, Vec<Vec<F>>, Vec<Vec<Vec<F>>>)> {
    let n = questions.len();
    if pools.len() != n || best.len() != n {
        return Err(Error::Precondition("questions, pools and positives must align".into()));
    }
    let mut vectors: Vec<&[F]> = questions.iter().map(|v| v.as_slice()).collect();
    let mut starts = Vec::with_capacity(n);
    for (i, pool) in pools.iter().enumerate() {
        if best[i] >= pool.len() {
            return Err(Error::Precondition(format!("positive index {} outside a pool of {}", best[i], pool.len())));
        }
        starts.push(vectors.len());
        vectors.extend(pool.iter().map(|v| v.as_slice()));
    }
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        let pool: Vec<usize> = (starts[i]..starts[i] + pools[i].len()).collect();
        terms.push(Term { anchor: i, candidates: pool, positive: best[i] });
        terms.push(Term { anchor: starts[i] + best[i], candidates: (0..n).collect(), positive: i });
    }
    let (loss, grads) = contrastive(&vectors, &terms, tau, strict)?;
    let mut grads: Vec<Vec<F>> = grads.into_iter().map(|g| g.into_iter().map(half).collect()).collect();
    let mut pool_grads = Vec::with_capacity(n);
    let mut rest = grads.split_off(n);
    for pool in pools.iter().rev() {
        pool_grads.push(rest.split_off(rest.len() - pool.len()));
    }
    pool_grads.reverse();
    Ok((half(loss), grads, pool_grads))
}

fn softplus<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Mean binary cross-entropy of `σ(w_q·q + w_p·p + b)` against `labels`.
/// `head` is `w_q | w_p | b`. Returns `(loss, d/dhead, d/dq, d/dp)`.
#[allow(clippy::type_complexity)]
pub fn qpm_encodings<F: Scalar>(
    head: &[F],
    questions: &[Vec<F>],
    paths: &[Vec<F>],
    labels: &[bool],
) -> Result<(F, Vec<F>, Vec<Vec<F>>, Vec<Vec<F>>)> {
    let n = labels.len();
    if questions.len() != n || paths.len() != n {
        return Err(Error::Precondition("questions, paths and labels must align".into()));
    }
    let mut gh = vec![F::zero(); head.len()];
    if n == 0 {
        return Ok((F::zero(), gh, Vec::new(), Vec::new()));
    }
    let d = (head.len() - 1) / 2;
    let (wq, wp, b) = (&head[..d], &head[d..2 * d], head[2 * d]);
    let nf = F::of(n as f64);
    let mut loss = F::zero();
    let mut gq = Vec::with_capacity(n);
    let mut gp = Vec::with_capacity(n);
    for i in 0..n {
        let z = dot(wq, &questions[i]) + dot(wp, &paths[i]) + b;
        let y = if labels[i] { F::one() } else { F::zero() };
        // -y ln σ(z) - (1-y) ln(1-σ(z)) = softplus(z) - y z
        loss = loss + softplus(z) - y * z;
        let dz = (sigmoid(z) - y) / nf;
        for k in 0..d {
            gh[k] = gh[k] + dz * questions[i][k];
            gh[d + k] = gh[d + k] + dz * paths[i][k];
        }
        gh[2 * d] = gh[2 * d] + dz;
        gq.push(wq.iter().map(|&w| dz * w).collect());
        gp.push(wp.iter().map(|&w| dz * w).collect());
    }
    Ok((loss / nf, gh, gq, gp))
}

/// A question and the instruction path that solved it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionPath {
    pub question: String,
    pub path: Vec<String>,
}

impl QuestionPath {
    pub fn new(question: impl Into<String>, path: Vec<String>) -> Self {
        Self { question: question.into(), path }
    }
}

/// Loss value with the gradient over the flat encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<F> {
    pub loss: F,
    pub grad: Vec<F>,
}

fn encode_pairs<F: Scalar>(params: &EncoderParams<F>, pairs: &[QuestionPath]) -> (Vec<Encoded<F>>, Vec<Encoded<F>>) {
    let q = pairs.iter().map(|p| params.encode_text(Side::Question, &p.question)).collect();
    let p = pairs.iter().map(|p| params.encode_text(Side::Path, &render_instructions(&p.path))).collect();
    (q, p)
}

fn units<F: Scalar>(encoded: &[Encoded<F>]) -> Vec<Vec<F>> {
    encoded.iter().map(|e| e.unit.clone()).collect()
}

/// Contrastive alignment loss over in-batch pairs. A batch of one has loss 0
/// in the default form and is a [`Error::DegenerateBatch`] in the strict
/// form.
pub fn qpa_loss<F: Scalar>(params: &EncoderParams<F>, pairs: &[QuestionPath]) -> Result<LossGrad<F>> {
    params.validate()?;
    let (q, p) = encode_pairs(params, pairs);
    let (loss, gq, gp) = qpa_encodings(&units(&q), &units(&p), params.temperature, params.strict_qpa)?;
    let mut grad = vec![F::zero(); params.data.len()];
    for (e, g) in q.iter().zip(&gq).chain(p.iter().zip(&gp)) {
        params.backprop(e, g, &mut grad);
    }
    Ok(LossGrad { loss, grad })
}

/// Matching loss over labelled `(question, path)` pairs.
pub fn qpm_loss<F: Scalar>(params: &EncoderParams<F>, pairs: &[(QuestionPath, bool)]) -> Result<LossGrad<F>> {
    params.validate()?;
    let plain: Vec<QuestionPath> = pairs.iter().map(|(p, _)| p.clone()).collect();
    let labels: Vec<bool> = pairs.iter().map(|(_, l)| *l).collect();
    let (q, p) = encode_pairs(params, &plain);
    let o = params.head_offset();
    let (loss, gh, gq, gp) = qpm_encodings(&params.data[o..], &units(&q), &units(&p), &labels)?;
    let mut grad = vec![F::zero(); params.data.len()];
    grad[o..].copy_from_slice(&gh);
    for (e, g) in q.iter().zip(&gq).chain(p.iter().zip(&gp)) {
        params.backprop(e, g, &mut grad);
    }
    Ok(LossGrad { loss, grad })
}

/// Every aligned pair labelled as a match, plus one mismatch per question
/// formed by shifting the paths by one position (a derangement). Batches of
/// one have no mismatch.
pub fn qpm_batch(pairs: &[QuestionPath]) -> Vec<(QuestionPath, bool)> {
    let n = pairs.len();
    let mut out: Vec<(QuestionPath, bool)> = pairs.iter().map(|p| (p.clone(), true)).collect();
    if n >= 2 {
        for (i, p) in pairs.iter().enumerate() {
            out.push((QuestionPath::new(p.question.clone(), pairs[(i + 1) % n].path.clone()), false));
        }
    }
    out
}

/// Pre-training loss: alignment plus matching (on [`qpm_batch`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PtLoss<F> {
    pub qpa: F,
    pub qpm: F,
    pub grad: Vec<F>,
}

impl<F: Scalar> PtLoss<F> {
    pub fn total(&self) -> F {
        self.qpa + self.qpm
    }
}

pub fn pt_loss<F: Scalar>(params: &EncoderParams<F>, pairs: &[QuestionPath]) -> Result<PtLoss<F>> {
    let a = qpa_loss(params, pairs)?;
    let m = qpm_loss(params, &qpm_batch(pairs))?;
    let grad = a.grad.iter().zip(&m.grad).map(|(&x, &y)| x + y).collect();
    Ok(PtLoss { qpa: a.loss, qpm: m.loss, grad })
}

/// One gradient step on the summed pre-training loss. Returns the two
/// components measured before the step.
pub fn pt_step<F: Scalar>(params: &mut EncoderParams<F>, pairs: &[QuestionPath], learning_rate: f64) -> Result<(F, F)> {
    let pt = pt_loss(params, pairs)?;
    sgd_step(&mut params.data, &pt.grad, learning_rate);
    Ok((pt.qpa, pt.qpm))
}

/// A question with its evaluated path pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FtItem {
    pub question: String,
    pub pool: PathPool,
}

/// Fine-tuning loss over a batch of evaluated pools; every pool must have
/// its best index set.
pub fn ft_loss<F: Scalar>(params: &EncoderParams<F>, items: &[FtItem]) -> Result<LossGrad<F>> {
    params.validate()?;
    let mut best = Vec::with_capacity(items.len());
    let mut q = Vec::with_capacity(items.len());
    let mut pools: Vec<Vec<Encoded<F>>> = Vec::with_capacity(items.len());
    for item in items {
        let b = item
            .pool
            .best_index
            .ok_or_else(|| Error::Precondition(format!("pool for {:?} has not been evaluated", item.question)))?;
        best.push(b);
        q.push(params.encode_text(Side::Question, &item.question));
        pools.push(
            item.pool.paths.iter().map(|p| params.encode_text(Side::Path, &render_instructions(p))).collect(),
        );
    }
    let pool_units: Vec<Vec<Vec<F>>> = pools.iter().map(|p| units(p)).collect();
    let (loss, gq, gpools) = ft_encodings(&units(&q), &pool_units, &best, params.temperature, params.strict_qpa)?;
    let mut grad = vec![F::zero(); params.data.len()];
    for (e, g) in q.iter().zip(&gq) {
        params.backprop(e, g, &mut grad);
    }
    for (pool, gpool) in pools.iter().zip(&gpools) {
        for (e, g) in pool.iter().zip(gpool) {
            params.backprop(e, g, &mut grad);
        }
    }
    Ok(LossGrad { loss, grad })
}

/// One gradient step on [`ft_loss`]; returns the loss before the step.
pub fn ft_step<F: Scalar>(params: &mut EncoderParams<F>, items: &[FtItem], learning_rate: f64) -> Result<F> {
    let lg = ft_loss(params, items)?;
    sgd_step(&mut params.data, &lg.grad, learning_rate);
    Ok(lg.loss)
}
