use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{stft, AudioBuffer, FrontEnd, MelFilterbank, Spectrogram};
use crate::embedding::{Embedding, DEFAULT_DIM};
use crate::encoders::{AudioEncoder, SpectralEncoder};
use crate::error::{check_dim, Error, Result};

/// Keeps the standard deviation differentiable when a band is constant.
const STD_EPS: f64 = 1e-12;

/// Reference audio encoder: log-mel statistics followed by a fixed random
/// projection.
///
/// ```text
/// P = fb . |X|^2            per frame
/// L = ln(1 + P)
/// f = [mean_t L, std_t L]   length 2 * n_mels
/// z = W f / |W f|           W ~ N(0, 1) / sqrt(2 * n_mels)
/// ```
#[derive(Debug, Clone)]
pub struct MelStatEncoder {
    filterbank: MelFilterbank,
    projection: Array2<f64>,
    hop: usize,
    seed: u64,
}

/// Forward intermediates kept for the backward pass.
struct Forward {
    power: Array2<f64>,
    log_mel: Array2<f64>,
    mean: Array1<f64>,
    std: Array1<f64>,
    projected: Array1<f64>,
    norm: f64,
}

impl MelStatEncoder {
    pub fn new(filterbank: MelFilterbank, hop: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let features = 2 * filterbank.n_mels();
        let scale = 1.0 / (features as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = Array2::from_shape_simple_fn((dim, features), || {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * scale
        });
        Ok(Self {
            filterbank,
            projection,
            hop,
            seed,
        })
    }

    pub fn from_front_end(front: &FrontEnd, dim: usize, seed: u64) -> Result<Self> {
        let fb = MelFilterbank::new(
            front.n_mels,
            front.n_fft,
            front.sample_rate,
            front.f_min,
            front.f_max,
        )?;
        Self::new(fb, front.hop, dim, seed)
    }

    /// Default front-end and `d = 512`.
    pub fn with_seed(seed: u64) -> Result<Self> {
        Self::from_front_end(&FrontEnd::default(), DEFAULT_DIM, seed)
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_rate(&self) -> u32 {
        self.filterbank.sample_rate()
    }

    fn check(&self, spec: &Spectrogram) -> Result<()> {
        if spec.n_fft != self.filterbank.n_fft() || spec.sample_rate != self.filterbank.sample_rate() {
            return Err(Error::invalid(format!(
                "spectrogram ({} Hz, n_fft {}) does not match filterbank ({} Hz, n_fft {})",
                spec.sample_rate,
                spec.n_fft,
                self.filterbank.sample_rate(),
                self.filterbank.n_fft()
            )));
        }
        check_dim(self.filterbank.bins(), spec.bins())?;
        if spec.frames() == 0 {
            return Err(Error::Empty("spectrogram has no frames"));
        }
        Ok(())
    }

    fn forward(&self, mags: &Array2<f64>) -> Result<Forward> {
        let mags = mags.as_standard_layout();
        let frames = mags.nrows();
        let bins = mags.ncols();
        let mags = mags.as_slice().expect("standard layout");
        let n_mels = self.filterbank.n_mels();
        let weights = self.filterbank.weights();
        let mut power = Array2::zeros((frames, n_mels));
        for m in 0..n_mels {
            let (lo, hi) = self.filterbank.support(m);
            let w = &weights.row(m).to_slice().expect("standard layout")[lo..hi];
            for t in 0..frames {
                let row = &mags[t * bins + lo..t * bins + hi];
                power[[t, m]] = w.iter().zip(row).map(|(w, x)| w * x * x).sum::<f64>();
            }
        }
        let log_mel = power.mapv(f64::ln_1p);
        let mean = log_mel.mean_axis(Axis(0)).expect("frames > 0");
        let mut var = Array1::zeros(n_mels);
        for row in log_mel.rows() {
            for m in 0..n_mels {
                var[m] += (row[m] - mean[m]).powi(2);
            }
        }
        let std = var.mapv(|v: f64| (v / frames as f64 + STD_EPS).sqrt());
        let mut features = Array1::zeros(2 * n_mels);
        features.slice_mut(ndarray::s![..n_mels]).assign(&mean);
        features.slice_mut(ndarray::s![n_mels..]).assign(&std);
        let projected = self.projection.dot(&features);
        let norm = projected.dot(&projected).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("mel-stat projection".into()));
        }
        if norm < 1e-300 {
            return Err(Error::ZeroNorm("mel-stat projection vanished"));
        }
        Ok(Forward {
            power,
            log_mel,
            mean,
            std,
            projected,
            norm,
        })
    }

    fn embedding(fw: &Forward) -> Result<Embedding> {
        Embedding::new(fw.projected.iter().map(|v| v / fw.norm).collect())
    }

    fn backward(&self, mags: &Array2<f64>, fw: &Forward, upstream: &[f64]) -> Array2<f64> {
        let (frames, bins) = mags.dim();
        let mags = mags.as_standard_layout();
        let mags = mags.as_slice().expect("standard layout");
        let n_mels = self.filterbank.n_mels();
        let z = &fw.projected / fw.norm;
        let g = Array1::from(upstream.to_vec());
        let radial = z.dot(&g);
        let d_proj = (&g - &(&z * radial)) / fw.norm;
        let d_feat = self.projection.t().dot(&d_proj);

        let inv_t = 1.0 / frames as f64;
        let weights = self.filterbank.weights();
        let mut grad = vec![0.0; frames * bins];
        for m in 0..n_mels {
            let d_mean = d_feat[m] * inv_t;
            let d_std = d_feat[n_mels + m] * inv_t / fw.std[m];
            let (lo, hi) = self.filterbank.support(m);
            let w = &weights.row(m).to_slice().expect("standard layout")[lo..hi];
            for t in 0..frames {
                let d_log = d_mean + d_std * (fw.log_mel[[t, m]] - fw.mean[m]);
                let d_pow = 2.0 * d_log / (1.0 + fw.power[[t, m]]);
                let base = t * bins;
                let out = &mut grad[base + lo..base + hi];
                let x = &mags[base + lo..base + hi];
                for ((o, w), x) in out.iter_mut().zip(w).zip(x) {
                    *o += d_pow * w * x;
                }
            }
        }
        Array2::from_shape_vec((frames, bins), grad).expect("shape matches")
    }
}

impl AudioEncoder for MelStatEncoder {
    fn dim(&self) -> usize {
        self.projection.nrows()
    }

    fn encode_audio(&self, audio: &AudioBuffer) -> Result<Embedding> {
        self.encode(&self.analyze(audio)?)
    }
}

impl SpectralEncoder for MelStatEncoder {
    fn analyze(&self, audio: &AudioBuffer) -> Result<Spectrogram> {
        if audio.sample_rate() != self.filterbank.sample_rate() {
            return Err(Error::invalid(format!(
                "encoder expects {} Hz audio, got {} Hz",
                self.filterbank.sample_rate(),
                audio.sample_rate()
            )));
        }
        stft(audio, self.filterbank.n_fft(), self.hop)
    }

    fn encode(&self, spec: &Spectrogram) -> Result<Embedding> {
        self.check(spec)?;
        Self::embedding(&self.forward(&spec.magnitudes)?)
    }

    fn vjp(&self, spec: &Spectrogram, upstream: &[f64]) -> Result<Array2<f64>> {
        self.check(spec)?;
        check_dim(self.dim(), upstream.len())?;
        let fw = self.forward(&spec.magnitudes)?;
        Ok(self.backward(&spec.magnitudes, &fw, upstream))
    }

    fn encode_with_vjp(
        &self,
        spec: &Spectrogram,
        upstream: &mut dyn FnMut(&Embedding) -> Result<Vec<f64>>,
    ) -> Result<(Embedding, Array2<f64>)> {
        self.check(spec)?;
        let fw = self.forward(&spec.magnitudes)?;
        let z = Self::embedding(&fw)?;
        let g = upstream(&z)?;
        check_dim(self.dim(), g.len())?;
        let grad = self.backward(&spec.magnitudes, &fw, &g);
        Ok((z, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::test_signals::sine;
    use rand::Rng;

    fn small_encoder(seed: u64) -> MelStatEncoder {
        let fb = MelFilterbank::new(8, 64, 8000, 0.0, 4000.0).unwrap();
        MelStatEncoder::new(fb, 16, 12, seed).unwrap()
    }

    fn random_spec(frames: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Spectrogram {
            magnitudes: Array2::from_shape_simple_fn((frames, 33), || rng.random_range(0.05..2.0)),
            phases: Array2::zeros((frames, 33)),
            n_fft: 64,
            hop: 16,
            sample_rate: 8000,
            signal_len: frames * 16,
        }
    }

    #[test]
    fn deterministic_unit_output() {
        let enc = MelStatEncoder::with_seed(3).unwrap();
        let audio = AudioBuffer::mono(sine(440.0, 16000, 0.5, 0.5), 16000).unwrap();
        let a = enc.encode_audio(&audio).unwrap();
        let b = enc.encode_audio(&audio).unwrap();
        assert_eq!(a.dim(), 512);
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let other = MelStatEncoder::with_seed(4).unwrap().encode_audio(&audio).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn zero_input_still_normalizes() {
        let enc = small_encoder(0);
        let mut s = random_spec(4, 0);
        s.magnitudes.fill(0.0);
        assert!((enc.encode(&s).unwrap().norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for seed in 0..20u64 {
            let enc = small_encoder(seed);
            let spec = random_spec(10, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let upstream: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grad = enc.vjp(&spec, &upstream).unwrap();
            let objective = |s: &Spectrogram| {
                let z = enc.encode(s).unwrap();
                z.values().iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
            };
            let h = 1e-4;
            let mut worst = 0.0f64;
            for t in 0..10 {
                for b in 0..33 {
                    let mut p = spec.clone();
                    p.magnitudes[[t, b]] += h;
                    let mut m = spec.clone();
                    m.magnitudes[[t, b]] -= h;
                    let fd = (objective(&p) - objective(&m)) / (2.0 * h);
                    let a = grad[[t, b]];
                    let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
            assert!(worst <= 1e-4, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn small_magnitude_scaling_is_continuous() {
        let enc = small_encoder(1);
        let spec = random_spec(12, 5);
        let z = enc.encode(&spec).unwrap();
        let mut prev = f64::INFINITY;
        for c in [1.1, 1.01, 1.001] {
            let scaled = spec.with_magnitudes(spec.magnitudes.mapv(|m| m * c)).unwrap();
            let zc = enc.encode(&scaled).unwrap();
            let dist: f64 = z
                .values()
                .iter()
                .zip(zc.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            // Lipschitz in ln(c) with a constant calibrated on this fixture.
            assert!(dist <= 2.0 * c.ln(), "c={c}: {dist}");
            assert!(dist < prev);
            prev = dist;
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let enc = small_encoder(0);
        let mut s = random_spec(3, 1);
        s.sample_rate = 16000;
        assert!(enc.encode(&s).is_err());
        let empty = random_spec(0, 1);
        assert!(matches!(enc.encode(&empty), Err(Error::Empty(_))));
        let s = random_spec(3, 1);
        assert!(enc.vjp(&s, &[0.0; 5]).is_err());
        let audio = AudioBuffer::mono(vec![0.0; 100], 44100).unwrap();
        assert!(MelStatEncoder::with_seed(0).unwrap().encode_audio(&audio).is_err());
    }
}
