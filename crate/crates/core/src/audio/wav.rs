use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{AudioBuffer, Channels};
use crate::error::{Error, Result};

/// Sample encoding used when writing WAV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Int16,
    #[default]
    Float32,
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        // The file is already open, so read failures mean short or corrupt data.
        hound::Error::IoError(e) => Error::MalformedHeader(format!("{}: {e}", path.display())),
        hound::Error::FormatError(msg) => {
            Error::MalformedHeader(format!("{}: {msg}", path.display()))
        }
        hound::Error::TooWide | hound::Error::Unsupported | hound::Error::InvalidSampleFormat => {
            Error::UnsupportedEncoding(format!("{}: {err}", path.display()))
        }
        other => Error::MalformedHeader(format!("{}: {other}", path.display())),
    }
}

fn map_write(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => map_hound(path, other),
    }
}

/// Reads a 16-bit integer or 32-bit float PCM WAV with one or two channels.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: {channels} channels",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{}: {bits}-bit {fmt:?}",
                path.display()
            )))
        }
    };
    if channels == 1 {
        return AudioBuffer::mono(interleaved, spec.sample_rate);
    }
    let left = interleaved.iter().step_by(2).copied().collect();
    let right = interleaved.iter().skip(1).step_by(2).copied().collect();
    AudioBuffer::stereo(left, right, spec.sample_rate)
}

/// Writes a WAV file. 16-bit output is rounded and clipped to the integer
/// range.
pub fn save_wav(path: impl AsRef<Path>, buffer: &AudioBuffer, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let (bits, sample_format) = match format {
        WavFormat::Int16 => (16, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer =
        hound::WavWriter::new(BufWriter::new(file), spec).map_err(|e| map_write(path, e))?;
    let frames: Box<dyn Iterator<Item = f64> + '_> = match buffer.channels() {
        Channels::Mono(s) => Box::new(s.iter().copied()),
        Channels::Stereo(l, r) => Box::new(l.iter().zip(r).flat_map(|(&a, &b)| [a, b])),
    };
    for sample in frames {
        let res = match format {
            WavFormat::Int16 => {
                writer.write_sample((sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            }
            WavFormat::Float32 => writer.write_sample(sample as f32),
        };
        res.map_err(|e| map_write(path, e))?;
    }
    writer.finalize().map_err(|e| map_write(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::test_signals::sine;

    #[test]
    fn int16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let samples = sine(440.0, 16000, 1.0, 0.9);
        let buf = AudioBuffer::mono(samples.clone(), 16000).unwrap();
        save_wav(&path, &buf, WavFormat::Int16).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        let err = samples
            .iter()
            .zip(back.as_mono().unwrap())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1.0 / 32768.0, "{err}");
    }

    #[test]
    fn float32_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let l: Vec<f64> = (0..100).map(|i| f64::from((i as f32 * 0.013).sin())).collect();
        let r: Vec<f64> = (0..100).map(|i| f64::from((i as f32 * 0.029).cos())).collect();
        let buf = AudioBuffer::stereo(l, r, 44100).unwrap();
        save_wav(&path, &buf, WavFormat::Float32).unwrap();
        assert_eq!(load_wav(&path).unwrap(), buf);
    }

    #[test]
    fn empty_wav_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        save_wav(&path, &AudioBuffer::mono(vec![], 16000).unwrap(), WavFormat::Int16).unwrap();
        let b = load_wav(&path).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.sample_rate(), 16000);
    }

    #[test]
    fn truncated_header_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x24\x00\x00\x00WAVEfm").unwrap();
        let r = load_wav(&path);
        assert!(matches!(r, Err(Error::MalformedHeader(_))), "{r:?}");
        std::fs::write(&path, b"not a wav file at all").unwrap();
        assert!(matches!(load_wav(&path), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn rejects_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1000i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::UnsupportedEncoding(_))));
    }
}
