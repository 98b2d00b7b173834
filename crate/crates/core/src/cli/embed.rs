use log::info;
use rayon::prelude::*;

use super::io::{list_wavs, load_for_encoder, skip_warning, stem};
use super::{EmbedArgs, EncoderArg};
use crate::encoders::{save_metadata, AudioEncoder, EmbeddingStore, MelStatEncoder, StoreMetadata};
use crate::error::{Error, Result};

pub fn run(args: &EmbedArgs, seed: u64) -> Result<()> {
    let files = list_wavs(&args.input)?;
    let encoder = match args.encoder {
        EncoderArg::Melstat => MelStatEncoder::from_front_end(&Default::default(), args.dim, seed)?,
    };
    let rate = encoder.sample_rate();
    let encoded: Vec<_> = files
        .par_iter()
        .map(|path| {
            let r = stem(path).and_then(|id| Ok((id, encoder.encode_audio(&load_for_encoder(path, rate)?)?)));
            (path, r)
        })
        .collect();
    let mut store = EmbeddingStore::new(encoder.dim())?;
    for (path, r) in encoded {
        match r {
            Ok((id, z)) => store.insert(id, &z)?,
            Err(e) => skip_warning(path, &e),
        }
    }
    if store.is_empty() {
        return Err(Error::invalid(format!("none of the {} input files could be encoded", files.len())));
    }
    store.save(&args.out)?;
    save_metadata(
        &args.out,
        &StoreMetadata {
            model: "melstat".into(),
            notes: format!("seed={seed} dim={}", encoder.dim()),
        },
    )?;
    info!("wrote {} embeddings to {}", store.len(), args.out.display());
    Ok(())
}
