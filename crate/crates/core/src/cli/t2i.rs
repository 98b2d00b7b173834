use log::{info, warn};
use rayon::prelude::*;

use super::io::{load_for_encoder, stem, write_file};
use super::T2iArgs;
use crate::encoders::{AudioEncoder, EmbeddingStore, MelStatEncoder};
use crate::embedding::effect_embedding;
use crate::error::{Error, Result};
use crate::prompt::{condition, write_weights_csv, PromptBank, PromptMatrixStore};

pub fn run(args: &T2iArgs, seed: u64) -> Result<()> {
    let keywords = EmbeddingStore::load(&args.bank)?;
    let matrices = PromptMatrixStore::load(&args.prompts)?;
    let bank = PromptBank::from_stores(&keywords, &matrices)?;
    let encoder = MelStatEncoder::from_front_end(&Default::default(), bank.dim(), seed)?;
    let rate = encoder.sample_rate();
    let dry = match &args.dry {
        Some(path) => Some(encoder.encode_audio(&load_for_encoder(path, rate)?)?),
        None => None,
    };
    let mode = args.mode.into();

    let results: Vec<_> = args
        .inputs
        .par_iter()
        .map(|path| {
            let id = stem(path)?;
            let mut z = encoder.encode_audio(&load_for_encoder(path, rate)?)?;
            if let Some(z_dry) = &dry {
                z = effect_embedding(&z, z_dry, true)?;
            }
            Ok::<_, Error>((id, condition(&z, &bank, mode, args.temperature)?))
        })
        .collect();

    let (rows, cols) = bank.matrix_shape();
    let mut out = PromptMatrixStore::new(rows, cols)?;
    let mut weight_rows = Vec::new();
    for (path, r) in args.inputs.iter().zip(results) {
        match r {
            Ok((id, c)) => {
                out.insert(id.clone(), &c.conditioning)?;
                weight_rows.push((id, c.weights));
            }
            Err(e) => warn!("no conditioning for {}: {e}", path.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("no input produced a conditioning"));
    }
    out.save(&args.out)?;
    write_file(&args.weights, |w| write_weights_csv(w, bank.keywords(), &weight_rows))?;
    info!("wrote {} conditioning records", out.len());
    Ok(())
}
