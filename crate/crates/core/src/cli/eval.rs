use log::info;

use super::io::write_file;
use super::EvalArgs;
use crate::encoders::{load_metadata, EmbeddingStore, HashedTextEncoder, TextEncoder};
use crate::error::Result;
use crate::retrieval::{
    load_patch_manifest, resolve_patches, write_report_csv, ReportRow, RetrievalTask, DEFAULT_KS,
};

pub fn run(args: &EvalArgs, seed: u64) -> Result<()> {
    let entries = load_patch_manifest(&args.patches)?;
    let audio = EmbeddingStore::load(&args.audio_store)?;
    let patches = resolve_patches(&entries, &audio)?;
    let text: Box<dyn TextEncoder> = match (&args.text_store, args.hash_text) {
        (_, true) => Box::new(HashedTextEncoder::new(audio.dim(), seed)?),
        (Some(path), false) => Box::new(EmbeddingStore::load(path)?),
        (None, false) => unreachable!("clap requires --text-store without --hash-text"),
    };
    let mode = args.mode.into();
    let direction = args.direction.into();
    let task = RetrievalTask::new(&patches, mode, direction, text.as_ref())?;
    let model = match &args.model {
        Some(m) => m.clone(),
        None => load_metadata(&args.audio_store)?
            .map(|m| m.model)
            .unwrap_or_else(|| "model".into()),
    };
    let row = |model: String, report| ReportRow {
        mode,
        direction,
        model,
        report,
    };
    let mut rows = vec![row(model, task.evaluate(&DEFAULT_KS)?)];
    if args.baselines {
        rows.push(row("perfect".into(), task.perfect(&DEFAULT_KS)?));
        rows.push(row("random".into(), task.random(&DEFAULT_KS, args.runs, seed)?));
    }
    info!(
        "{} queries over {} documents ({mode}, {direction})",
        task.queries.len(),
        task.documents.len()
    );
    write_file(&args.out, |w| write_report_csv(w, &rows))
}
