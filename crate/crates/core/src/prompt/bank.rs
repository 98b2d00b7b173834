use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::matrices::PromptMatrixStore;
use crate::audio::AudioBuffer;
use crate::embedding::{cosine_distance, effect_embedding, softmax_weights, Embedding};
use crate::encoders::{AudioEncoder, EmbeddingStore};
use crate::error::{Error, Result};

pub const KEYWORD_PLACEHOLDER: &str = "<keyword>";

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Substitutes each keyword into `template`, which must hold the
/// placeholder exactly once.
pub fn build_prompts<S: AsRef<str>>(template: &str, keywords: &[S]) -> Result<Vec<String>> {
    match template.matches(KEYWORD_PLACEHOLDER).count() {
        1 => {}
        0 => return Err(Error::invalid(format!("template {template:?} lacks {KEYWORD_PLACEHOLDER}"))),
        n => return Err(Error::invalid(format!("template {template:?} holds {KEYWORD_PLACEHOLDER} {n} times"))),
    }
    if keywords.is_empty() {
        return Err(Error::Empty("no keywords"));
    }
    Ok(keywords
        .iter()
        .map(|k| template.replacen(KEYWORD_PLACEHOLDER, k.as_ref(), 1))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// `w_i = dist(z, z_i)`.
    LiteralDistance,
    /// `w = softmax((1 - dist(z, z_i)) / T)`.
    #[default]
    SoftmaxSimilarity,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::LiteralDistance => "literal",
            WeightingMode::SoftmaxSimilarity => "softmax",
        }
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" | "literal_distance" => Ok(WeightingMode::LiteralDistance),
            "softmax" | "softmax_similarity" => Ok(WeightingMode::SoftmaxSimilarity),
            other => Err(Error::invalid(format!("unknown weighting mode {other:?}"))),
        }
    }
}

/// Keywords with their latent embeddings `z_i` and the generator's prompt
/// matrices `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    keywords: Vec<String>,
    keyword_embeddings: Vec<Embedding>,
    prompt_matrices: Vec<Array2<f64>>,
}

impl PromptBank {
    pub fn new(keywords: Vec<String>, keyword_embeddings: Vec<Embedding>, prompt_matrices: Vec<Array2<f64>>) -> Result<Self> {
        if keywords.is_empty() {
            return Err(Error::Empty("prompt bank has no keywords"));
        }
        for found in [keyword_embeddings.len(), prompt_matrices.len()] {
            if found != keywords.len() {
                return Err(Error::LengthMismatch {
                    expected: keywords.len(),
                    found,
                });
            }
        }
        let dim = keyword_embeddings[0].dim();
        if let Some(e) = keyword_embeddings.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
        let shape = prompt_matrices[0].dim();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::invalid("prompt matrices must be nonempty"));
        }
        if let Some(t) = prompt_matrices.iter().find(|t| t.dim() != shape) {
            return Err(Error::invalid(format!("prompt matrix shape {:?} differs from {shape:?}", t.dim())));
        }
        Ok(Self {
            keywords,
            keyword_embeddings,
            prompt_matrices,
        })
    }

    /// Pairs keyword embeddings with prompt matrices by id, in the prompt
    /// store's order. Ids present in only one of the two are unresolved.
    pub fn from_stores(keywords: &EmbeddingStore, prompts: &PromptMatrixStore) -> Result<Self> {
        let mut missing: Vec<String> = prompts.ids().iter().filter(|id| !keywords.contains(id)).cloned().collect();
        missing.extend(
            keywords
                .ids()
                .iter()
                .filter(|id| prompts.raw(id).is_none())
                .cloned(),
        );
        if !missing.is_empty() {
            return Err(Error::Unresolved(missing));
        }
        let ids = prompts.ids().to_vec();
        let z = ids.iter().map(|id| keywords.require(id)).collect::<Result<Vec<_>>>()?;
        let t = ids
            .iter()
            .map(|id| prompts.get(id).expect("checked above"))
            .collect();
        Self::new(ids, z, t)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn keyword_embeddings(&self) -> &[Embedding] {
        &self.keyword_embeddings
    }

    pub fn prompt_matrices(&self) -> &[Array2<f64>] {
        &self.prompt_matrices
    }

    pub fn dim(&self) -> usize {
        self.keyword_embeddings[0].dim()
    }

    /// `(M, d_tau)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        self.prompt_matrices[0].dim()
    }
}

pub fn keyword_weights(z: &Embedding, bank: &PromptBank, mode: WeightingMode, temperature: f64) -> Result<Vec<f64>> {
    let distances = bank
        .keyword_embeddings
        .iter()
        .map(|k| cosine_distance(z, k))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        WeightingMode::LiteralDistance => Ok(distances),
        WeightingMode::SoftmaxSimilarity => {
            let sims: Vec<f64> = distances.iter().map(|d| 1.0 - d).collect();
            softmax_weights(&sims, temperature)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningResult {
    pub weights: Vec<f64>,
    /// `sum_i w_i t_i`.
    pub conditioning: Array2<f64>,
}

pub fn condition(z: &Embedding, bank: &PromptBank, mode: WeightingMode, temperature: f64) -> Result<ConditioningResult> {
    let weights = keyword_weights(z, bank, mode, temperature)?;
    let mut conditioning = Array2::zeros(bank.matrix_shape());
    for (w, t) in weights.iter().zip(&bank.prompt_matrices) {
        conditioning.scaled_add(*w, t);
    }
    Ok(ConditioningResult {
        weights,
        conditioning,
    })
}

/// Conditions on `encode(wet) - encode(dry)` for every wet variant. Each
/// item succeeds or fails on its own.
pub fn effect_series(
    dry: &AudioBuffer,
    wet_variants: &[AudioBuffer],
    encoder: &dyn AudioEncoder,
    bank: &PromptBank,
    mode: WeightingMode,
    temperature: f64,
) -> Result<Vec<Result<ConditioningResult>>> {
    if dry.is_empty() {
        return Err(Error::Empty("dry audio is empty"));
    }
    let z_dry = encoder.encode_audio(dry)?;
    Ok(wet_variants
        .iter()
        .map(|wet| {
            if wet.is_empty() {
                return Err(Error::Empty("wet audio is empty"));
            }
            let z_wet = encoder.encode_audio(wet)?;
            let z = effect_embedding(&z_wet, &z_dry, true)?;
            condition(&z, bank, mode, temperature)
        })
        .collect())
}

/// `input,<keyword>...` rows of per-input weights.
pub fn write_weights_csv<W: std::io::Write>(out: W, keywords: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["input".to_string()];
    header.extend(keywords.iter().cloned());
    w.write_record(&header)?;
    for (input, weights) in rows {
        if weights.len() != keywords.len() {
            return Err(Error::LengthMismatch {
                expected: keywords.len(),
                found: weights.len(),
            });
        }
        let mut rec = vec![input.clone()];
        rec.extend(weights.iter().map(|v| format!("{v:.12}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<weights>", e))?;
    Ok(())
}
