//! Cross-modal retrieval evaluation over synth patches: query construction,
//! normalized recall at k, first-relevant rank and the perfect and random
//! reference rows.

mod metrics;
mod queries;
mod tasks;

pub use metrics::{
    evaluate, evaluate_detailed, evaluate_orderings, perfect_baseline, random_baseline,
    random_baseline_runs, score_orderings, summarize, QueryScore, RetrievalReport, DEFAULT_KS,
    DEFAULT_RANDOM_RUNS,
};
pub use queries::{build_queries, normalize_title, patch_distance, PatchRecord, Query, QueryMode, QuerySet};
pub use tasks::{
    encode_texts, load_patch_manifest, resolve_patches, write_report_csv, Direction, NoteRef,
    PatchEntry, ReportRow, RetrievalTask,
};
