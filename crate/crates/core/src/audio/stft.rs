use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Magnitude/phase short-time spectrum, `[frames x bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub phases: Array2<f64>,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// Length of the analysed signal, used to trim the reconstruction.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    /// Centre frequency of `bin` in Hz.
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * f64::from(self.sample_rate) / self.n_fft as f64
    }

    /// Same analysis geometry with replaced magnitudes.
    pub fn with_magnitudes(&self, magnitudes: Array2<f64>) -> Result<Self> {
        if magnitudes.dim() != self.magnitudes.dim() {
            return Err(Error::invalid(format!(
                "magnitude shape {:?} does not match {:?}",
                magnitudes.dim(),
                self.magnitudes.dim()
            )));
        }
        Ok(Self {
            magnitudes,
            phases: self.phases.clone(),
            n_fft: self.n_fft,
            hop: self.hop,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        })
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn check_geometry(n_fft: usize, hop: usize) -> Result<()> {
    if n_fft < 2 || !n_fft.is_power_of_two() {
        return Err(Error::invalid(format!("n_fft {n_fft} must be a power of two")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::invalid(format!("hop {hop} must be in 1..={n_fft}")));
    }
    // Hann overlap-add is constant only when the hop divides the frame
    // into at least two pieces.
    if !n_fft.is_multiple_of(hop) || n_fft / hop < 2 {
        return Err(Error::invalid(format!(
            "hop {hop} violates the Hann COLA condition for n_fft {n_fft}"
        )));
    }
    Ok(())
}

/// Number of frames used for a signal of `len` samples. The signal is
/// zero-padded by `n_fft / 2` on the left and padded on the right until the
/// last sample is covered by a full frame.
fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    let padded = len + n_fft;
    1 + (padded.saturating_sub(n_fft)).div_ceil(hop)
}

/// Hann-windowed STFT of a mono buffer, frames centred on multiples of `hop`.
pub fn stft(buffer: &AudioBuffer, n_fft: usize, hop: usize) -> Result<Spectrogram> {
    check_geometry(n_fft, hop)?;
    let samples = buffer
        .as_mono()
        .ok_or_else(|| Error::invalid("stft expects mono audio"))?;
    let window = hann(n_fft);
    let frames = frame_count(samples.len(), n_fft, hop);
    let bins = n_fft / 2 + 1;
    let pad = n_fft / 2;
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut magnitudes = Array2::zeros((frames, bins));
    let mut phases = Array2::zeros((frames, bins));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..frames {
        let start = (f * hop) as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let x = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            };
            *slot = Complex::new(x * window[i], 0.0);
        }
        fft.process(&mut buf);
        for b in 0..bins {
            magnitudes[[f, b]] = buf[b].norm();
            phases[[f, b]] = buf[b].arg();
        }
    }
    Ok(Spectrogram {
        magnitudes,
        phases,
        n_fft,
        hop,
        sample_rate: buffer.sample_rate(),
        signal_len: samples.len(),
    })
}

/// Weighted overlap-add inverse of [`stft`].
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    let (n_fft, hop) = (spec.n_fft, spec.hop);
    check_geometry(n_fft, hop)?;
    let bins = n_fft / 2 + 1;
    if spec.bins() != bins || spec.phases.dim() != spec.magnitudes.dim() {
        return Err(Error::invalid("spectrogram shape inconsistent with n_fft"));
    }
    let window = hann(n_fft);
    let pad = n_fft / 2;
    let total = (spec.frames().saturating_sub(1)) * hop + n_fft;
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..spec.frames() {
        for b in 0..bins {
            let c = Complex::from_polar(spec.magnitudes[[f, b]], spec.phases[[f, b]]);
            buf[b] = c;
            if b > 0 && b < n_fft - b {
                buf[n_fft - b] = c.conj();
            }
        }
        ifft.process(&mut buf);
        let start = f * hop;
        for i in 0..n_fft {
            out[start + i] += buf[i].re / n_fft as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let samples = (0..spec.signal_len)
        .map(|i| {
            let j = i + pad;
            match (out.get(j), norm.get(j)) {
                (Some(&v), Some(&w)) if w > 1e-10 => v / w,
                _ => 0.0,
            }
        })
        .collect();
    AudioBuffer::mono(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::test_signals::sine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..16000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = AudioBuffer::mono(x.clone(), 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        assert_eq!(s.bins(), 513);
        let y = istft(&s).unwrap();
        assert_eq!(y.len(), x.len());
        let y = y.as_mono().unwrap();
        let err = (1024..x.len() - 1024)
            .map(|i| (x[i] - y[i]).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let b = AudioBuffer::mono(vec![0.5; 4096], 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        let f = s.frames() / 2;
        let row = s.magnitudes.row(f);
        let total: f64 = row.iter().map(|m| m * m).sum();
        // Hann leaks DC into bin 1 only.
        assert!((row[0] * row[0] + row[1] * row[1]) / total > 0.999);
        assert!(row[0] > row[1]);
    }

    #[test]
    fn sine_peak_bin() {
        let b = AudioBuffer::mono(sine(440.0, 16000, 1.0, 0.5), 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        let row = s.magnitudes.row(s.frames() / 2);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(peak, (440.0f64 * 1024.0 / 16000.0).round() as usize);
        assert_eq!(peak, 28);
    }

    #[test]
    fn geometry_errors() {
        let b = AudioBuffer::mono(vec![0.0; 128], 16000).unwrap();
        assert!(stft(&b, 1000, 250).is_err());
        assert!(stft(&b, 1024, 0).is_err());
        assert!(stft(&b, 1024, 2048).is_err());
        assert!(stft(&b, 1024, 1024).is_err());
        assert!(stft(&b, 1024, 300).is_err());
        let st = AudioBuffer::stereo(vec![0.0; 8], vec![0.0; 8], 16000).unwrap();
        assert!(stft(&st, 16, 4).is_err());
    }

    #[test]
    fn short_and_empty_signals() {
        let b = AudioBuffer::mono(vec![0.25; 10], 16000).unwrap();
        let s = stft(&b, 64, 16).unwrap();
        let y = istft(&s).unwrap();
        assert_eq!(y.len(), 10);
        for v in y.as_mono().unwrap() {
            assert!((v - 0.25).abs() < 1e-9);
        }
        let e = AudioBuffer::mono(vec![], 16000).unwrap();
        let s = stft(&e, 64, 16).unwrap();
        assert!(istft(&s).unwrap().is_empty());
    }
}
