use rand::Rng;
use serde::{Deserialize, Serialize};

use super::resample::interpolate;
use super::{AudioBuffer, Channels};
use crate::error::{Error, Result};

/// Largest supported pitch shift magnitude, in semitones.
pub const MAX_PITCH_SHIFT: f64 = 24.0;

/// Which augmentation recipe a note follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetStyle {
    /// One extra copy shifted by U[-0.5, 0.5] semitones.
    Nsynth,
    /// Two extra copies shifted by U[-3, 3] semitones.
    Alv,
}

impl DatasetStyle {
    pub fn copies(self) -> usize {
        match self {
            DatasetStyle::Nsynth => 1,
            DatasetStyle::Alv => 2,
        }
    }

    pub fn max_offset(self) -> f64 {
        match self {
            DatasetStyle::Nsynth => 0.5,
            DatasetStyle::Alv => 3.0,
        }
    }
}

/// One entry of the augmentation manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub style: DatasetStyle,
    pub pitch_midi: i32,
}

/// Draws the pitch offsets (semitones) for the augmented copies of one note.
pub fn augmentation_offsets<R: Rng + ?Sized>(style: DatasetStyle, rng: &mut R) -> Vec<f64> {
    let max = style.max_offset();
    (0..style.copies())
        .map(|_| rng.random_range(-max..=max))
        .collect()
}

/// `w * L + (1 - w) * R`. With no explicit weight, `w ~ U[0, 1]` is drawn
/// from `rng`. Mono input is returned unchanged and consumes no randomness.
pub fn downmix_mono<R: Rng + ?Sized>(
    buffer: &AudioBuffer,
    weight_left: Option<f64>,
    rng: &mut R,
) -> Result<AudioBuffer> {
    let (left, right) = match buffer.channels() {
        Channels::Mono(_) => return Ok(buffer.clone()),
        Channels::Stereo(l, r) => (l, r),
    };
    let w = match weight_left {
        Some(w) if (0.0..=1.0).contains(&w) => w,
        Some(w) => return Err(Error::invalid(format!("downmix weight {w} outside [0, 1]"))),
        None => rng.random_range(0.0..=1.0),
    };
    let mono = left
        .iter()
        .zip(right)
        .map(|(l, r)| w * l + (1.0 - w) * r)
        .collect();
    AudioBuffer::mono(mono, buffer.sample_rate())
}

/// Shifts pitch by resampling with factor `2^(semitones / 12)` and playing
/// the result back at the original rate; duration scales by the inverse
/// factor.
pub fn pitch_shift(buffer: &AudioBuffer, semitones: f64) -> Result<AudioBuffer> {
    if !semitones.is_finite() || semitones.abs() > MAX_PITCH_SHIFT {
        return Err(Error::invalid(format!(
            "pitch shift of {semitones} semitones exceeds ±{MAX_PITCH_SHIFT}"
        )));
    }
    if semitones == 0.0 {
        return Ok(buffer.clone());
    }
    let factor = 2f64.powf(semitones / 12.0);
    let out_len = (buffer.len() as f64 / factor).round() as usize;
    let channels = buffer.map_channels(|s| interpolate(s, factor, out_len));
    AudioBuffer::from_channels(channels, buffer.sample_rate())
}

/// Scales the buffer so that its largest absolute sample is 1.
pub fn peak_normalize(buffer: &AudioBuffer) -> Result<AudioBuffer> {
    let peak = buffer.peak();
    if peak == 0.0 {
        return Err(Error::ZeroNorm("cannot peak-normalize silence"));
    }
    let gain = 1.0 / peak;
    let channels = buffer.map_channels(|s| s.iter().map(|v| v * gain).collect());
    AudioBuffer::from_channels(channels, buffer.sample_rate())
}
