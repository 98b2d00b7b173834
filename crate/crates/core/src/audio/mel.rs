use ndarray::Array2;

use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, each peak-normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    centers_hz: Vec<f64>,
    /// Half-open range of nonzero bins per filter.
    support: Vec<(usize, usize)>,
    n_fft: usize,
    sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Self> {
        if n_mels == 0 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        if n_fft < 2 || sample_rate == 0 {
            return Err(Error::invalid("n_fft and sample rate must be positive"));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
            )));
        }
        let bins = n_fft / 2 + 1;
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = |b: usize| b as f64 * f64::from(sample_rate) / n_fft as f64;

        let mut weights = Array2::zeros((n_mels, bins));
        let mut support = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for b in 0..bins {
                let f = bin_hz(b);
                let w = if f > lo && f < center {
                    (f - lo) / (center - lo)
                } else if f >= center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                weights[[m, b]] = w.max(0.0);
            }
            let mut row = weights.row_mut(m);
            let peak = row.iter().copied().fold(0.0, f64::max);
            if peak > 0.0 {
                row.mapv_inplace(|w| w / peak);
            } else {
                // Filter narrower than a bin: fall back to the nearest bin.
                let nearest = ((center / bin_hz(1)).round() as usize).min(bins - 1);
                row[nearest] = 1.0;
            }
            let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let last = row.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            support.push((first, last + 1));
        }
        Ok(Self {
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
            support,
            n_fft,
            sample_rate,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub(crate) fn support(&self, mel: usize) -> (usize, usize) {
        self.support[mel]
    }
}
