use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::audio::{hz_to_mel, mel_to_hz, Spectrogram};
use crate::error::{Error, Result};

pub const DEFAULT_BANDS: usize = 32;

/// Bound applied to every log-gain after each optimizer step.
pub const MAX_LOG_GAIN: f64 = 10.0;

/// Per-band natural-log gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqParams {
    pub log_gains: Vec<f64>,
}

impl EqParams {
    pub fn unity(bands: usize) -> Result<Self> {
        Self::new(vec![0.0; bands])
    }

    pub fn new(log_gains: Vec<f64>) -> Result<Self> {
        if log_gains.is_empty() {
            return Err(Error::Empty("EQ needs at least one band"));
        }
        if let Some(i) = log_gains.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("log gain {i}")));
        }
        Ok(Self { log_gains })
    }

    pub fn bands(&self) -> usize {
        self.log_gains.len()
    }

    pub fn clamp(&mut self) {
        for g in &mut self.log_gains {
            *g = g.clamp(-MAX_LOG_GAIN, MAX_LOG_GAIN);
        }
    }
}

/// Triangular bands with peaks evenly spaced on the mel scale from 0 Hz to
/// Nyquist. Adjacent triangles overlap so every bin's weights sum to one;
/// each bin touches at most two bands.
#[derive(Debug, Clone, PartialEq)]
pub struct EqBasis {
    centers_hz: Vec<f64>,
    /// Per bin: lower band index and that band's weight. The band above
    /// (if any) carries the remainder.
    segments: Vec<(usize, f64)>,
    n_fft: usize,
    sample_rate: u32,
}

impl EqBasis {
    pub fn new(bands: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        if bands == 0 {
            return Err(Error::Empty("EQ needs at least one band"));
        }
        if n_fft < 2 || sample_rate == 0 {
            return Err(Error::invalid("EQ basis needs n_fft >= 2 and a positive rate"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let n_bins = n_fft / 2 + 1;
        let (centers_hz, segments) = if bands == 1 {
            (vec![0.0], vec![(0, 1.0); n_bins])
        } else {
            let step = mel_max / (bands - 1) as f64;
            let centers = (0..bands)
                .map(|k| if k == bands - 1 { nyquist } else { mel_to_hz(k as f64 * step) })
                .collect();
            let segments = (0..n_bins)
                .map(|bin| {
                    let hz = bin as f64 * sample_rate as f64 / n_fft as f64;
                    let pos = if hz >= nyquist {
                        (bands - 1) as f64
                    } else {
                        (hz_to_mel(hz) / step).clamp(0.0, (bands - 1) as f64)
                    };
                    let lo = (pos.floor() as usize).min(bands - 2);
                    (lo, 1.0 - (pos - lo as f64))
                })
                .collect();
            (centers, segments)
        };
        Ok(Self {
            centers_hz,
            segments,
            n_fft,
            sample_rate,
        })
    }

    pub fn bands(&self) -> usize {
        self.centers_hz.len()
    }

    pub fn bins(&self) -> usize {
        self.segments.len()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense `[bins x bands]` basis matrix.
    pub fn matrix(&self) -> Array2<f64> {
        let mut b = Array2::zeros((self.bins(), self.bands()));
        for (bin, &(lo, w)) in self.segments.iter().enumerate() {
            b[[bin, lo]] += w;
            if lo + 1 < self.bands() {
                b[[bin, lo + 1]] += 1.0 - w;
            }
        }
        b
    }

    fn check(&self, params: &EqParams) -> Result<()> {
        if params.bands() != self.bands() {
            return Err(Error::DimensionMismatch {
                expected: self.bands(),
                found: params.bands(),
            });
        }
        Ok(())
    }

    fn log_curve_at(&self, bin: usize, g: &[f64]) -> f64 {
        let (lo, w) = self.segments[bin];
        match g.get(lo + 1) {
            Some(&hi) => w * g[lo] + (1.0 - w) * hi,
            None => g[lo],
        }
    }

    /// `G(bin) = exp(sum_k g_k b_k(bin))`.
    pub fn gain_curve(&self, params: &EqParams) -> Result<Vec<f64>> {
        self.check(params)?;
        Ok((0..self.bins())
            .map(|bin| self.log_curve_at(bin, &params.log_gains).exp())
            .collect())
    }

    /// `dG(bin)/dg_k = G(bin) b_k(bin)`, as `[bins x bands]`.
    pub fn jacobian(&self, params: &EqParams) -> Result<Array2<f64>> {
        let gains = self.gain_curve(params)?;
        let mut j = self.matrix();
        for (mut row, g) in j.rows_mut().into_iter().zip(gains) {
            row *= g;
        }
        Ok(j)
    }

    /// Pulls a per-bin gradient back to the log-gains: `J^T upstream`.
    pub fn pullback(&self, params: &EqParams, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.bins() {
            return Err(Error::LengthMismatch {
                expected: self.bins(),
                found: upstream.len(),
            });
        }
        let gains = self.gain_curve(params)?;
        let mut out = vec![0.0; self.bands()];
        for (&(lo, w), (&g, &u)) in self.segments.iter().zip(gains.iter().zip(upstream)) {
            out[lo] += w * g * u;
            if lo + 1 < out.len() {
                out[lo + 1] += (1.0 - w) * g * u;
            }
        }
        Ok(out)
    }

    fn check_spec(&self, spec: &Spectrogram) -> Result<()> {
        if spec.n_fft != self.n_fft || spec.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "EQ basis built for n_fft {} at {} Hz, spectrogram is n_fft {} at {} Hz",
                self.n_fft, self.sample_rate, spec.n_fft, spec.sample_rate
            )));
        }
        Ok(())
    }

    /// Multiplies every frame's magnitudes by the gain curve. Phases are
    /// carried over unchanged.
    pub fn apply(&self, spec: &Spectrogram, params: &EqParams) -> Result<Spectrogram> {
        self.check_spec(spec)?;
        let gains = Array1::from(self.gain_curve(params)?);
        spec.with_magnitudes(&spec.magnitudes * &gains)
    }

    /// Log-gain gradient given `dL/dM'` for `M' = apply(spec, params)`.
    pub fn backward(&self, spec: &Spectrogram, params: &EqParams, grad_out: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_spec(spec)?;
        if grad_out.dim() != spec.magnitudes.dim() {
            return Err(Error::invalid("gradient shape differs from the spectrogram"));
        }
        let per_bin = (grad_out * &spec.magnitudes).sum_axis(ndarray::Axis(0)).to_vec();
        self.pullback(params, &per_bin)
    }
}

/// Per-bin gain for `n_fft / 2 + 1` bins.
pub fn gain_curve(params: &EqParams, n_fft: usize, sample_rate: u32) -> Result<Vec<f64>> {
    EqBasis::new(params.bands(), n_fft, sample_rate)?.gain_curve(params)
}

pub fn apply_eq(spec: &Spectrogram, params: &EqParams) -> Result<Spectrogram> {
    EqBasis::new(params.bands(), spec.n_fft, spec.sample_rate)?.apply(spec, params)
}
