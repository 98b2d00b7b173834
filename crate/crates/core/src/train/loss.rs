use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// One training batch with the text side formed as the union of every
/// record's attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub audio_features: Array2<f64>,
    pub texts: Vec<Vec<String>>,
    /// Deduplicated attributes, first occurrence wins.
    pub unioned_texts: Vec<String>,
    /// `positives[[i, j]]` iff `unioned_texts[j]` is an attribute of record `i`.
    pub positives: Array2<bool>,
}

/// Builds a batch from `(features, attributes)` records.
pub fn build_batch<S: AsRef<str>>(records: &[(&[f64], &[S])]) -> Result<Batch> {
    if records.len() < 2 {
        return Err(Error::invalid(format!(
            "a batch needs at least 2 records, got {}",
            records.len()
        )));
    }
    let dim = records[0].0.len();
    let mut unioned: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut texts = Vec::with_capacity(records.len());
    for (i, (features, attrs)) in records.iter().enumerate() {
        if features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: features.len(),
            });
        }
        if attrs.is_empty() {
            return Err(Error::invalid(format!("record {i} has no text attributes")));
        }
        let owned: Vec<String> = attrs.iter().map(|s| s.as_ref().to_string()).collect();
        for a in &owned {
            if !index.contains_key(a) {
                index.insert(a.clone(), unioned.len());
                unioned.push(a.clone());
            }
        }
        texts.push(owned);
    }
    let mut positives = Array2::from_elem((records.len(), unioned.len()), false);
    for (i, attrs) in texts.iter().enumerate() {
        for a in attrs {
            positives[[i, index[a]]] = true;
        }
    }
    let audio_features = Array2::from_shape_fn((records.len(), dim), |(i, j)| records[i].0[j]);
    Ok(Batch {
        audio_features,
        texts,
        unioned_texts: unioned,
        positives,
    })
}

/// Loss value and analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_audio: Array2<f64>,
    pub grad_text: Array2<f64>,
    /// Gradient with respect to `ln(inv_temperature)`.
    pub grad_temperature_logit: f64,
}

/// Cross-entropy of `softmax(logits)` against the uniform distribution over
/// `positive` entries; writes `softmax - target` scaled by `scale` into
/// `grad`.
fn soft_target_ce(
    logits: &[f64],
    positive: &[bool],
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + sum_exp.ln();
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let mut ce = 0.0;
    for ((l, &p), g) in logits.iter().zip(positive).zip(grad.iter_mut()) {
        let prob = (l - log_z).exp();
        let target = if p { 1.0 / n_pos } else { 0.0 };
        if p {
            ce -= (l - log_z) / n_pos;
        }
        *g += scale * (prob - target);
    }
    ce
}

/// Symmetric contrastive loss over `logits = s * A T^T` with multi-positive
/// soft targets.
///
/// The audio-to-text term averages over audio rows; the text-to-audio term
/// averages over text columns that have at least one positive. The total is
/// the mean of the two.
pub fn contrastive_loss(
    audio: ArrayView2<f64>,
    text: ArrayView2<f64>,
    positives: ArrayView2<bool>,
    inv_temperature: f64,
) -> Result<LossOutput> {
    let (b, d) = audio.dim();
    let (u, dt) = text.dim();
    if d != dt {
        return Err(Error::DimensionMismatch { expected: d, found: dt });
    }
    if positives.dim() != (b, u) {
        return Err(Error::invalid(format!(
            "positives shape {:?} does not match ({b}, {u})",
            positives.dim()
        )));
    }
    if b == 0 || u == 0 {
        return Err(Error::Empty("contrastive loss over an empty batch"));
    }
    if !(inv_temperature > 0.0 && inv_temperature.is_finite()) {
        return Err(Error::invalid(format!(
            "inverse temperature must be positive, got {inv_temperature}"
        )));
    }
    if let Some(i) = (0..b).find(|&i| !positives.row(i).iter().any(|&p| p)) {
        return Err(Error::invalid(format!("audio row {i} has no positive text")));
    }

    let sims = audio.dot(&text.t());
    let logits = &sims * inv_temperature;
    let mut grad_logits = Array2::<f64>::zeros((b, u));

    let mut a2t = 0.0;
    let row_scale = 0.5 / b as f64;
    for i in 0..b {
        let row: Vec<f64> = logits.row(i).to_vec();
        let pos: Vec<bool> = positives.row(i).to_vec();
        let mut g = vec![0.0; u];
        a2t += soft_target_ce(&row, &pos, row_scale, &mut g);
        for (j, gj) in g.into_iter().enumerate() {
            grad_logits[[i, j]] += gj;
        }
    }
    a2t /= b as f64;

    let valid: Vec<usize> = (0..u)
        .filter(|&j| positives.column(j).iter().any(|&p| p))
        .collect();
    let mut t2a = 0.0;
    if !valid.is_empty() {
        let col_scale = 0.5 / valid.len() as f64;
        for &j in &valid {
            let col: Vec<f64> = logits.column(j).to_vec();
            let pos: Vec<bool> = positives.column(j).to_vec();
            let mut g = vec![0.0; b];
            t2a += soft_target_ce(&col, &pos, col_scale, &mut g);
            for (i, gi) in g.into_iter().enumerate() {
                grad_logits[[i, j]] += gi;
            }
        }
        t2a /= valid.len() as f64;
    }

    let loss = 0.5 * (a2t + t2a);
    let grad_audio = grad_logits.dot(&text) * inv_temperature;
    let grad_text = grad_logits.t().dot(&audio) * inv_temperature;
    let grad_temperature_logit = inv_temperature * (&grad_logits * &sims).sum();
    Ok(LossOutput {
        loss,
        grad_audio,
        grad_text,
        grad_temperature_logit,
    })
}
