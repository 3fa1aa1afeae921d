//! Dual encoder: a frozen hashing embedding followed by a trainable linear
//! projection per side, then unit normalisation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{embed_text, EmbedderConfig, EmbeddingVector};
use crate::error::{Error, Result};
use crate::graph::render_instructions;
use crate::scalar::{dot, from_hex, to_hex, Scalar};

pub const ENCODER_FORMAT_VERSION: &str = "1";
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Question,
    Path,
}

/// Parameters laid out flat as `Wq (d×d, row-major) | Wp (d×d) | qpm_w
/// (2d+1, last entry is the bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    pub data: Vec<F>,
    pub dim: usize,
    pub temperature: f64,
    /// Use the contrastive denominator that leaves the positive pair out.
    pub strict_qpa: bool,
    pub embedder: EmbedderConfig,
}

/// A projected, normalised encoding together with what backpropagation
/// through it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<F> {
    pub side: Side,
    pub base: Vec<F>,
    /// Norm of the projection before normalisation.
    pub norm: F,
    pub unit: Vec<F>,
}

impl<F: Scalar> EncoderParams<F> {
    pub fn parameter_count(dim: usize) -> usize {
        2 * dim * dim + 2 * dim + 1
    }

    /// Both projections start as the identity and the matching head at zero,
    /// so the untrained encoder ranks paths by plain embedding cosine.
    pub fn identity(embedder: EmbedderConfig) -> Self {
        let d = embedder.dimension;
        let mut data = vec![F::zero(); Self::parameter_count(d)];
        for i in 0..d {
            data[i * d + i] = F::one();
            data[d * d + i * d + i] = F::one();
        }
        Self { data, dim: d, temperature: DEFAULT_TEMPERATURE, strict_qpa: false, embedder }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_strict_qpa(mut self, strict: bool) -> Self {
        self.strict_qpa = strict;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedder.dimension != self.dim || self.data.len() != Self::parameter_count(self.dim) {
            return Err(Error::Config(format!(
                "encoder of dimension {} holds {} parameters (embedder dimension {})",
                self.dim,
                self.data.len(),
                self.embedder.dimension
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("encoder parameters contain non-finite values".into()));
        }
        Ok(())
    }

    pub(crate) fn matrix_offset(&self, side: Side) -> usize {
        match side {
            Side::Question => 0,
            Side::Path => self.dim * self.dim,
        }
    }

    pub(crate) fn head_offset(&self) -> usize {
        2 * self.dim * self.dim
    }

    /// Matching head weights `(w_q, w_p, bias)`.
    pub fn qpm_head(&self) -> (&[F], &[F], F) {
        let o = self.head_offset();
        let d = self.dim;
        (&self.data[o..o + d], &self.data[o + d..o + 2 * d], self.data[o + 2 * d])
    }

    /// Projects and normalises an already embedded vector.
    pub fn encode_base(&self, side: Side, base: Vec<F>) -> Encoded<F> {
        let d = self.dim;
        let off = self.matrix_offset(side);
        let u: Vec<F> = (0..d).map(|i| dot(&self.data[off + i * d..off + (i + 1) * d], &base)).collect();
        let norm = dot(&u, &u).sqrt();
        let unit = if norm.is_zero() || !norm.is_finite() {
            vec![F::zero(); d]
        } else {
            u.into_iter().map(|v| v / norm).collect()
        };
        Encoded { side, base, norm, unit }
    }

    pub fn encode_text(&self, side: Side, text: &str) -> Encoded<F> {
        self.encode_base(side, embed_text::<F>(text, &self.embedder).values)
    }

    /// Unit-norm encoding of a question.
    pub fn encode_question(&self, question: &str) -> EmbeddingVector<F> {
        EmbeddingVector::from_values(self.encode_text(Side::Question, question).unit)
    }

    /// Unit-norm encoding of a path, serialised with `" -> "`.
    pub fn encode_path<S: AsRef<str>>(&self, path: &[S]) -> EmbeddingVector<F> {
        EmbeddingVector::from_values(self.encode_text(Side::Path, &render_instructions(path)).unit)
    }

    /// Adds the parameter gradient implied by `grad_unit` (the loss gradient
    /// with respect to `enc.unit`) to `grad`.
    pub(crate) fn backprop(&self, enc: &Encoded<F>, grad_unit: &[F], grad: &mut [F]) {
        if enc.norm.is_zero() || !enc.norm.is_finite() {
            return;
        }
        let d = self.dim;
        let off = self.matrix_offset(enc.side);
        let along = dot(&enc.unit, grad_unit);
        for i in 0..d {
            let gu = (grad_unit[i] - enc.unit[i] * along) / enc.norm;
            if gu.is_zero() {
                continue;
            }
            let row = &mut grad[off + i * d..off + (i + 1) * d];
            for (g, &x) in row.iter_mut().zip(&enc.base) {
                *g = *g + gu * x;
            }
        }
    }

    pub fn cast<G: Scalar>(&self) -> EncoderParams<G> {
        EncoderParams {
            data: self.data.iter().map(|v| G::of(v.as_f64())).collect(),
            dim: self.dim,
            temperature: self.temperature,
            strict_qpa: self.strict_qpa,
            embedder: self.embedder.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = EncoderFile {
            format_version: ENCODER_FORMAT_VERSION.into(),
            kind: "encoder".into(),
            scalar: F::NAME.into(),
            dimension: self.dim,
            temperature: self.temperature,
            strict_qpa: self.strict_qpa,
            embedder: self.embedder.clone(),
            data: to_hex(&self.data),
        };
        fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        crate::check_format_version(&value, ENCODER_FORMAT_VERSION, path)?;
        let file: EncoderFile =
            serde_json::from_value(value).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        if file.kind != "encoder" {
            return Err(Error::MalformedFile(format!("{}: expected an encoder file, found {:?}", path.display(), file.kind)));
        }
        if file.scalar != F::NAME {
            return Err(Error::MalformedFile(format!(
                "{}: stored as {}, requested {}",
                path.display(),
                file.scalar,
                F::NAME
            )));
        }
        let data = from_hex(&file.data, Some(Self::parameter_count(file.dimension)))?;
        let params = Self {
            data,
            dim: file.dimension,
            temperature: file.temperature,
            strict_qpa: file.strict_qpa,
            embedder: file.embedder,
        };
        params.validate().map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    format_version: String,
    kind: String,
    scalar: String,
    dimension: usize,
    temperature: f64,
    strict_qpa: bool,
    embedder: EmbedderConfig,
    data: String,
}
