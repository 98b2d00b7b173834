use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{downmix_mono, load_wav, resample, AudioBuffer};
use crate::error::{Error, Result};

/// WAV files directly inside `dir`, sorted by name. A single file path is
/// returned as is.
pub fn list_wavs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = std::fs::read_dir(input).map_err(|e| Error::io(input, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(input, e))?.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty("no input files"));
    }
    Ok(files)
}

pub fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("{} has no UTF-8 file stem", path.display())))
}

/// Loads a WAV as mono at `rate`, averaging stereo channels.
pub fn load_for_encoder(path: &Path, rate: u32) -> Result<AudioBuffer> {
    let buf = load_wav(path)?;
    // A fixed weight never draws from the generator.
    let mono = downmix_mono(&buf, Some(0.5), &mut ChaCha8Rng::seed_from_u64(0))?;
    resample(&mono, rate)
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn skip_warning(path: &Path, err: &Error) {
    warn!("skipping {}: {err}", path.display());
}
