use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Sinc zero crossings on each side of the kernel, measured at the lower
/// of the two rates (128 taps per phase).
const ZERO_CROSSINGS: f64 = 64.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;
const KAISER_BETA: f64 = 10.0;
const WINDOW_TABLE: usize = 8192;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct KaiserTable {
    values: Vec<f64>,
}

impl KaiserTable {
    fn new(beta: f64) -> Self {
        let norm = bessel_i0(beta);
        let values = (0..=WINDOW_TABLE)
            .map(|i| {
                let u = i as f64 / WINDOW_TABLE as f64;
                bessel_i0(beta * (1.0 - u * u).max(0.0).sqrt()) / norm
            })
            .collect();
        Self { values }
    }

    /// Window value at `u = |t| / half_width`, zero outside `[0, 1]`.
    fn at(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return 0.0;
        }
        let pos = u * WINDOW_TABLE as f64;
        let i = pos as usize;
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited interpolation: output sample `n` is the signal evaluated at
/// source position `n * step`. `step > 1` decimates and lowers the cutoff
/// accordingly.
pub(crate) fn interpolate(samples: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let window = KaiserTable::new(KAISER_BETA);
    let cutoff = ROLLOFF * (1.0 / step).min(1.0);
    let half = ZERO_CROSSINGS / cutoff;
    let n = samples.len() as isize;
    (0..out_len)
        .map(|i| {
            let t = i as f64 * step;
            let lo = ((t - half).ceil() as isize).max(0);
            let hi = ((t + half).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                let tau = t - k as f64;
                acc += samples[k as usize] * cutoff * sinc(cutoff * tau) * window.at(tau.abs() / half);
            }
            acc
        })
        .collect()
}

/// Windowed-sinc (Kaiser) sample-rate conversion. Duration is preserved to
/// within one output sample.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    let source_rate = buffer.sample_rate();
    if source_rate == target_rate {
        return Ok(buffer.clone());
    }
    let step = f64::from(source_rate) / f64::from(target_rate);
    let out_len =
        (buffer.len() as f64 * f64::from(target_rate) / f64::from(source_rate)).round() as usize;
    let channels = buffer.map_channels(|s| interpolate(s, step, out_len));
    AudioBuffer::from_channels(channels, target_rate)
}
