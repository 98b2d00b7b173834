use log::info;

use super::io::{load_for_encoder, write_file};
use super::{EqArgs, SOURCE_SENTINEL};
use crate::audio::{save_wav, WavFormat};
use crate::encoders::{AudioEncoder, EmbeddingStore, HashedTextEncoder, MelStatEncoder, TextEncoder};
use crate::eq::{build_target, optimize_eq, save_params_json, write_trace_csv, EqRunConfig};
use crate::error::{Error, Result};
use crate::retrieval::encode_texts;

pub fn run(args: &EqArgs, seed: u64) -> Result<()> {
    let encoder = MelStatEncoder::with_seed(seed)?;
    let source = load_for_encoder(&args.input, encoder.sample_rate())?;
    let z_source = encoder.encode_audio(&source)?;

    let text: Box<dyn TextEncoder> = match (&args.prompt_store, args.hash_prompts) {
        (_, true) => Box::new(HashedTextEncoder::new(encoder.dim(), seed)?),
        (Some(path), false) => Box::new(EmbeddingStore::load(path)?),
        (None, false) => unreachable!("clap requires --prompt-store without --hash-prompts"),
    };
    let named: Vec<String> = args.prompts.iter().filter(|p| *p != SOURCE_SENTINEL).cloned().collect();
    let mut resolved = encode_texts(text.as_ref(), &named)?.into_iter();
    let prompts: Vec<_> = args
        .prompts
        .iter()
        .map(|p| {
            if p == SOURCE_SENTINEL {
                z_source.clone()
            } else {
                resolved.next().expect("one embedding per named prompt")
            }
        })
        .collect();

    let alphas = if args.alphas.is_empty() {
        None
    } else if args.alphas.len() != prompts.len() + 1 {
        return Err(Error::invalid(format!(
            "{} --alpha values given; expected {} (source plus one per prompt)",
            args.alphas.len(),
            prompts.len() + 1
        )));
    } else {
        Some(args.alphas.clone())
    };
    let target = build_target(&z_source, &prompts, alphas.as_deref())?;
    let config = EqRunConfig {
        iterations: args.iters,
        lr: args.lr,
        alphas,
        l2_penalty: args.l2,
        seed,
        bands: args.bands,
        init_scale: 0.0,
    };
    let run = optimize_eq(&source, &target, &encoder, &config)?;
    info!("eq loss {:.6} -> {:.6} over {} iterations", run.initial_loss, run.final_loss, args.iters);

    save_wav(&args.out, &run.processed, WavFormat::Float32)?;
    write_file(&args.trace, |w| write_trace_csv(w, &run.trace))?;
    save_params_json(&args.params, &run.params_file())
}
