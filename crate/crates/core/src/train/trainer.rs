use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{build_batch, contrastive_loss};
use crate::encoders::TextEncoder;
use crate::error::{Error, Result};

/// Initial inverse temperature, as in CLIP.
pub const INITIAL_INV_TEMPERATURE: f64 = 14.3;
/// Upper clamp on the learned inverse temperature.
pub const MAX_INV_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub learn_temperature: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            lr: 2e-5,
            patience: 10,
            seed: 0,
            max_epochs: 100,
            learn_temperature: true,
        }
    }
}

/// Feature rows paired with their text attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: Array2<f64>,
    pub attributes: Vec<Vec<String>>,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, attributes: Vec<Vec<String>>) -> Result<Self> {
        if features.nrows() != attributes.len() {
            return Err(Error::LengthMismatch {
                expected: features.nrows(),
                found: attributes.len(),
            });
        }
        if let Some(i) = attributes.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("record {i} has no text attributes")));
        }
        Ok(Self {
            features,
            attributes,
        })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Linear map from fixed audio features to the latent space, plus the
/// learnable log inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weights: Array2<f64>,
    pub temperature_logit: f64,
}

/// Loss and gradients of one batch with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub loss: f64,
    pub weights: Array2<f64>,
    pub temperature_logit: f64,
}

impl ProjectionHead {
    /// `W ~ N(0, 1/f)`, inverse temperature 14.3.
    pub fn init(dim: usize, feature_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (feature_dim.max(1) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((dim, feature_dim), || {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * scale
        });
        Self {
            weights,
            temperature_logit: INITIAL_INV_TEMPERATURE.ln(),
        }
    }

    pub fn inv_temperature(&self) -> f64 {
        self.temperature_logit.exp()
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Projects `[B x f]` features, returning unit rows and the pre-norm
    /// row lengths.
    pub fn project(&self, features: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        if features.ncols() != self.weights.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.ncols(),
                found: features.ncols(),
            });
        }
        let mut y = features.dot(&self.weights.t());
        let mut norms = Array1::zeros(y.nrows());
        for (i, mut row) in y.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if n < 1e-300 {
                return Err(Error::ZeroNorm("projected audio row"));
            }
            row /= n;
            norms[i] = n;
        }
        Ok((y, norms))
    }

    /// Contrastive loss of a batch, back-propagated through row
    /// normalization and the projection.
    pub fn loss_and_gradient(
        &self,
        features: ArrayView2<f64>,
        text: ArrayView2<f64>,
        positives: ArrayView2<bool>,
    ) -> Result<HeadGradient> {
        let (audio, norms) = self.project(features)?;
        let out = contrastive_loss(audio.view(), text, positives, self.inv_temperature())?;
        let mut d_y = out.grad_audio;
        for (i, mut row) in d_y.rows_mut().into_iter().enumerate() {
            let a = audio.row(i);
            let radial = a.dot(&row);
            row.zip_mut_with(&a, |g, &ai| *g = (*g - radial * ai) / norms[i]);
        }
        Ok(HeadGradient {
            loss: out.loss,
            weights: d_y.t().dot(&features),
            temperature_logit: out.grad_temperature_logit,
        })
    }

    fn to_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.weights.iter().copied().collect();
        p.push(self.temperature_logit);
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let n = self.weights.len();
        for (w, &p) in self.weights.iter_mut().zip(&params[..n]) {
            *w = p;
        }
        self.temperature_logit = params[n];
    }
}

/// Outcome of feeding one epoch's validation loss to an [`EarlyStopper`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the validation loss has failed to improve on its best value
/// for more than `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopper {
    pub best_loss: f64,
    pub epochs_since_best: usize,
    pub patience: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            best_loss: f64::INFINITY,
            epochs_since_best: 0,
            patience,
        }
    }

    pub fn update(&mut self, loss: f64) -> StopDecision {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.epochs_since_best = 0;
            return StopDecision::Improved;
        }
        self.epochs_since_best += 1;
        if self.epochs_since_best > self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub head: ProjectionHead,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub early_stopped: bool,
}

/// Writes `epoch,train_loss,val_loss` rows with a header.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

/// Splits `order` into batches; a trailing batch is kept only with >= 2 items.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .collect()
}

struct TextCache<'a> {
    encoder: &'a dyn TextEncoder,
    cache: HashMap<String, Vec<f64>>,
}

impl<'a> TextCache<'a> {
    fn matrix(&mut self, texts: &[String]) -> Result<Array2<f64>> {
        let d = self.encoder.dim();
        let mut m = Array2::zeros((texts.len(), d));
        for (j, t) in texts.iter().enumerate() {
            if !self.cache.contains_key(t) {
                let e = self.encoder.encode_text(t)?.normalize()?;
                self.cache.insert(t.clone(), e.into_values());
            }
            m.row_mut(j).assign(&Array1::from(self.cache[t].clone()));
        }
        Ok(m)
    }
}

fn batch_loss(
    head: &ProjectionHead,
    set: &TrainingSet,
    idx: &[usize],
    texts: &mut TextCache<'_>,
) -> Result<HeadGradient> {
    let features = set.features.select(Axis(0), idx);
    let rows: Vec<(&[f64], &[String])> = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            (
                features.row(k).to_slice().expect("standard layout"),
                set.attributes[i].as_slice(),
            )
        })
        .collect();
    let batch = build_batch(&rows)?;
    let text = texts.matrix(&batch.unioned_texts)?;
    head.loss_and_gradient(batch.audio_features.view(), text.view(), batch.positives.view())
}

fn validation_loss(
    head: &ProjectionHead,
    set: &TrainingSet,
    batch_size: usize,
    texts: &mut TextCache<'_>,
) -> Result<f64> {
    let order: Vec<usize> = (0..set.len()).collect();
    let chunks = batches(&order, batch_size);
    let mut total = 0.0;
    for c in &chunks {
        total += batch_loss(head, set, c, texts)?.loss;
    }
    Ok(total / chunks.len() as f64)
}

/// Trains a projection head with batch-union contrastive loss, Adam and
/// early stopping on the validation loss.
pub fn train_projection(
    train: &TrainingSet,
    validation: &TrainingSet,
    text_encoder: &dyn TextEncoder,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.batch_size < 2 {
        return Err(Error::invalid(format!(
            "batch_size must be at least 2, got {}",
            config.batch_size
        )));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Empty("training and validation splits must be nonempty"));
    }
    if train.len() < 2 || validation.len() < 2 {
        return Err(Error::invalid("each split needs at least 2 records to form a batch"));
    }
    if train.feature_dim() != validation.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.feature_dim(),
            found: validation.feature_dim(),
        });
    }
    let mut texts = TextCache {
        encoder: text_encoder,
        cache: HashMap::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = ProjectionHead::init(text_encoder.dim(), train.feature_dim(), config.seed);
    let mut params = head.to_params();
    let mut adam = AdamState::new(params.len(), config.lr)?;
    let initial_val_loss = validation_loss(&head, validation, config.batch_size, &mut texts)?;

    let mut stopper = EarlyStopper::new(config.patience);
    let mut best = (head.clone(), 0usize);
    let mut history = Vec::new();
    let mut early_stopped = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let max_logit = MAX_INV_TEMPERATURE.ln();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        let chunks = batches(&order, config.batch_size);
        for idx in &chunks {
            let grad = batch_loss(&head, train, idx, &mut texts)?;
            train_total += grad.loss;
            let mut flat: Vec<f64> = grad.weights.iter().copied().collect();
            flat.push(if config.learn_temperature {
                grad.temperature_logit
            } else {
                0.0
            });
            adam.step(&mut params, &flat)?;
            let last = params.len() - 1;
            params[last] = params[last].min(max_logit);
            head.set_params(&params);
        }
        let train_loss = train_total / chunks.len() as f64;
        let val_loss = validation_loss(&head, validation, config.batch_size, &mut texts)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        match stopper.update(val_loss) {
            StopDecision::Improved => best = (head.clone(), epoch),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                early_stopped = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        head: best.0,
        best_epoch: best.1,
        initial_val_loss,
        history,
        early_stopped,
    })
}
