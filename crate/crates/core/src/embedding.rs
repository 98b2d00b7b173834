//! Embeddings in the shared audio/text latent space and the arithmetic
//! performed on them.
//!
//! Every module measures closeness with [`cosine_distance`], defined as
//! `1 - cos(a, b)`, so values live in `[0, 2]`.

use crate::error::{check_dim, Error, Result};

/// Default latent dimension, matching CLIP ViT-B/32.
pub const DEFAULT_DIM: usize = 512;

const NORMALIZED_TOL: f64 = 1e-5;
const MIN_NORM: f64 = 1e-12;

/// A point in the shared latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wraps raw values. The `normalized` flag is set when the vector
    /// already has unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding has dimension 0"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {i}")));
        }
        let normalized = (l2_norm(&values) - 1.0).abs() <= NORMALIZED_TOL;
        Ok(Self { values, normalized })
    }

    /// Builds a unit-norm embedding from raw values.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        Self::new(values)?.normalize()
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm < MIN_NORM {
            return Err(Error::ZeroNorm("cannot normalize a zero vector"));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / norm).collect(),
            normalized: true,
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// Mixing coefficients `[alpha_source, alpha_prompt_1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights(Vec<f64>);

impl MixWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Empty("mix weights"));
        }
        if let Some(i) = alphas.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("mix weight {i}")));
        }
        Ok(Self(alphas))
    }

    /// `n` equal weights of `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("mix weights"));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `1 - (a . b) / (|a| |b|)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::ZeroNorm("cosine distance of a zero vector"));
    }
    let cos = dot(&a.values, &b.values) / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Gradient of `cosine_distance(a, b)` with respect to `a`.
pub fn cosine_distance_grad(a: &Embedding, b: &Embedding) -> Result<Vec<f64>> {
    check_dim(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::ZeroNorm("cosine distance of a zero vector"));
    }
    let cos = dot(&a.values, &b.values) / (na * nb);
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| -(y / (na * nb) - cos * x / (na * na)))
        .collect())
}

/// Weighted sum `sum_i alpha_i z_i`, optionally projected back onto the
/// unit sphere.
pub fn mix_embeddings(
    parts: &[Embedding],
    weights: &MixWeights,
    renormalize: bool,
) -> Result<Embedding> {
    if parts.is_empty() {
        return Err(Error::Empty("no embeddings to mix"));
    }
    if parts.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: parts.len(),
            found: weights.len(),
        });
    }
    let dim = parts[0].dim();
    let mut acc = vec![0.0; dim];
    for (part, &alpha) in parts.iter().zip(weights.alphas()) {
        check_dim(dim, part.dim())?;
        for (a, v) in acc.iter_mut().zip(&part.values) {
            *a += alpha * v;
        }
    }
    let mixed = Embedding::new(acc)?;
    if renormalize {
        mixed.normalize()
    } else {
        Ok(mixed)
    }
}

/// `softmax(scores / temperature)` with max subtraction.
pub fn softmax_weights(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax over no scores"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("softmax score {i}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Direction an effect moves an embedding: `z_wet - z_dry`.
pub fn effect_embedding(
    z_wet: &Embedding,
    z_dry: &Embedding,
    renormalize: bool,
) -> Result<Embedding> {
    check_dim(z_wet.dim(), z_dry.dim())?;
    let diff = Embedding::new(
        z_wet
            .values
            .iter()
            .zip(&z_dry.values)
            .map(|(w, d)| w - d)
            .collect(),
    )?;
    if renormalize {
        diff.normalize()
            .map_err(|_| Error::ZeroNorm("effect embedding is zero (wet equals dry)"))
    } else {
        Ok(diff)
    }
}
