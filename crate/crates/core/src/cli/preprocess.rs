use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::io::{list_wavs, skip_warning, stem, write_file};
use super::PreprocessArgs;
use crate::audio::{
    augmentation_offsets, downmix_mono, load_wav, peak_normalize, pitch_shift, resample, save_wav,
    DatasetStyle, ManifestEntry, WavFormat,
};
use crate::error::{Error, Result};

/// Reads the pitch from names shaped like `name-060-100` (pitch, velocity).
pub(crate) fn pitch_from_name(stem: &str) -> Option<i32> {
    let mut parts = stem.rsplit('-');
    let _velocity = parts.next().filter(|v| is_digits(v))?;
    let pitch = parts.next().filter(|p| is_digits(p))?;
    parts.next()?;
    pitch.parse().ok().filter(|p| (0..=127).contains(p))
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn process_file(
    path: &Path,
    out_dir: &Path,
    style: DatasetStyle,
    rate: u32,
    default_pitch: i32,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = stem(path)?;
    let pitch = pitch_from_name(&name).unwrap_or(default_pitch);
    let raw = load_wav(path)?;
    let mono = downmix_mono(&raw, None, &mut rng)?;
    let base = resample(&mono, rate)?;
    let mut entries = Vec::new();
    let mut write = |file: String, buf: &crate::audio::AudioBuffer, pitch_midi: i32| -> Result<()> {
        save_wav(out_dir.join(&file), &peak_normalize(buf)?, WavFormat::Float32)?;
        entries.push(ManifestEntry {
            path: file,
            style,
            pitch_midi,
        });
        Ok(())
    };
    write(format!("{name}.wav"), &base, pitch)?;
    for (i, offset) in augmentation_offsets(style, &mut rng).into_iter().enumerate() {
        let shifted = pitch_shift(&base, offset)?;
        write(format!("{name}_aug{}.wav", i + 1), &shifted, pitch + offset.round() as i32)?;
    }
    Ok(entries)
}

pub fn run(args: &PreprocessArgs, seed: u64) -> Result<()> {
    let files = list_wavs(&args.input)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let style = DatasetStyle::from(args.style);
    let results: Vec<(PathBuf, Result<Vec<ManifestEntry>>)> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let r = process_file(path, &args.out, style, args.rate, args.pitch_midi, seed.wrapping_add(i as u64));
            (path.clone(), r)
        })
        .collect();
    let mut manifest = Vec::new();
    for (path, r) in results {
        match r {
            Ok(entries) => manifest.extend(entries),
            Err(e) => skip_warning(&path, &e),
        }
    }
    if manifest.is_empty() {
        return Err(Error::invalid(format!("none of the {} input files could be processed", files.len())));
    }
    info!("wrote {} files to {}", manifest.len(), args.out.display());
    let manifest_path = args.out.join("manifest.json");
    write_file(&manifest_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        std::io::Write::write_all(w, b"\n").map_err(|e| Error::io(&manifest_path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pitch_in_file_names() {
        assert_eq!(pitch_from_name("keyboard_acoustic_004-060-025"), Some(60));
        assert_eq!(pitch_from_name("bass-024-127"), Some(24));
        assert_eq!(pitch_from_name("060-100"), None);
        assert_eq!(pitch_from_name("lead"), None);
        assert_eq!(pitch_from_name("x-200-100"), None);
        assert_eq!(pitch_from_name("x-6a-100"), None);
    }
}
