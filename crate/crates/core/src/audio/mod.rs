//! Audio buffers and the preprocessing front-end: WAV I/O, resampling,
//! downmixing, augmentation, normalization, STFT and mel filterbanks.

mod augment;
mod mel;
mod resample;
mod stft;
mod wav;

pub use augment::{
    augmentation_offsets, downmix_mono, peak_normalize, pitch_shift, DatasetStyle, ManifestEntry,
    MAX_PITCH_SHIFT,
};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use stft::{istft, stft, Spectrogram};
pub use wav::{load_wav, save_wav, WavFormat};

use crate::error::{Error, Result};

/// Analysis constants shared by the reference encoder and the EQ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEnd {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 1024,
            hop: 256,
            n_mels: 64,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Channels {
    Mono(Vec<f64>),
    Stereo(Vec<f64>, Vec<f64>),
}

/// PCM audio at a declared sample rate, one or two channels.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Channels,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::from_channels(Channels::Mono(samples), sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::LengthMismatch {
                expected: left.len(),
                found: right.len(),
            });
        }
        Self::from_channels(Channels::Stereo(left, right), sample_rate)
    }

    pub fn from_channels(channels: Channels, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let finite = match &channels {
            Channels::Mono(s) => s.iter().all(|v| v.is_finite()),
            Channels::Stereo(l, r) => l.iter().chain(r).all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite("audio sample".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> &Channels {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        match self.channels {
            Channels::Mono(_) => 1,
            Channels::Stereo(..) => 2,
        }
    }

    /// Frames per channel.
    pub fn len(&self) -> usize {
        match &self.channels {
            Channels::Mono(s) => s.len(),
            Channels::Stereo(l, _) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    /// Samples of a mono buffer; `None` for stereo.
    pub fn as_mono(&self) -> Option<&[f64]> {
        match &self.channels {
            Channels::Mono(s) => Some(s),
            Channels::Stereo(..) => None,
        }
    }

    pub fn peak(&self) -> f64 {
        let peak = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match &self.channels {
            Channels::Mono(s) => peak(s),
            Channels::Stereo(l, r) => peak(l).max(peak(r)),
        }
    }

    pub(crate) fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Channels {
        match &self.channels {
            Channels::Mono(s) => Channels::Mono(f(s)),
            Channels::Stereo(l, r) => Channels::Stereo(f(l), f(r)),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_signals {
    use std::f64::consts::PI;

    pub fn sine(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f64> {
        let n = (secs * f64::from(rate)).round() as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin())
            .collect()
    }

    /// Frequency of the largest FFT magnitude, refined by parabolic
    /// interpolation over the log magnitude.
    pub fn peak_frequency(samples: &[f64], rate: u32) -> f64 {
        use rustfft::{num_complex::Complex, FftPlanner};
        let n = samples.len().next_power_of_two() * 4;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| {
                let x = samples.get(i).copied().unwrap_or(0.0);
                let w = if i < samples.len() {
                    0.5 - 0.5 * (2.0 * PI * i as f64 / samples.len() as f64).cos()
                } else {
                    0.0
                };
                Complex::new(x * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mags: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
        let k = (1..n / 2 - 1)
            .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
            .unwrap();
        let (a, b, c) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let offset = 0.5 * (a - c) / (a - 2.0 * b + c);
        (k as f64 + offset) * f64::from(rate) / n as f64
    }
}
