use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, perfect_baseline, random_baseline, RetrievalReport};
use super::queries::{build_queries, patch_distance, PatchRecord, Query, QueryMode};
use crate::embedding::{cosine_distance, Embedding};
use crate::encoders::{EmbeddingStore, TextEncoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteRef {
    pub midi_pitch: u8,
    pub embedding_id: String,
}

/// One entry of a patch manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub patch_id: String,
    pub title: String,
    pub category: String,
    pub notes: Vec<NoteRef>,
}

pub fn load_patch_manifest(path: impl AsRef<Path>) -> Result<Vec<PatchEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Resolves note embeddings against `store`. Every missing id is collected
/// before failing.
pub fn resolve_patches(entries: &[PatchEntry], store: &EmbeddingStore) -> Result<Vec<PatchRecord>> {
    let mut seen = HashSet::new();
    let mut missing = BTreeSet::new();
    let mut patches = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.patch_id.as_str()) {
            return Err(Error::DuplicateId(entry.patch_id.clone()));
        }
        let mut notes = Vec::with_capacity(entry.notes.len());
        for n in &entry.notes {
            match store.get(&n.embedding_id) {
                Some(e) => notes.push((n.midi_pitch, e)),
                None => {
                    missing.insert(n.embedding_id.clone());
                }
            }
        }
        if missing.is_empty() {
            patches.push(PatchRecord::new(&entry.patch_id, &entry.title, &entry.category, notes)?);
        }
    }
    if !missing.is_empty() {
        return Err(Error::Unresolved(missing.into_iter().collect()));
    }
    Ok(patches)
}

/// Encodes every text, collecting unresolved ones into a single error.
pub fn encode_texts<E: TextEncoder + ?Sized>(encoder: &E, texts: &[String]) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(texts.len());
    let mut missing = Vec::new();
    for t in texts {
        match encoder.encode_text(t) {
            Ok(e) => out.push(e),
            Err(Error::Unresolved(ids)) => missing.extend(ids),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Unresolved(missing));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Text queries ranking patches.
    TextToPatch,
    /// Audio (note) queries ranking texts.
    AudioToText,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TextToPatch => "t2p",
            Direction::AudioToText => "a2t",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2p" => Ok(Direction::TextToPatch),
            "a2t" => Ok(Direction::AudioToText),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

/// A fully materialized retrieval problem: queries, document ids and the
/// embeddings needed to compute distances.
#[derive(Debug, Clone)]
pub struct RetrievalTask {
    pub mode: QueryMode,
    pub direction: Direction,
    pub queries: Vec<Query>,
    pub documents: Vec<String>,
    query_embeddings: Vec<Embedding>,
    kind: TaskKind,
}

#[derive(Debug, Clone)]
enum TaskKind {
    Patches(Vec<PatchRecord>),
    Texts(Vec<Embedding>),
}

impl RetrievalTask {
    pub fn text_to_patch<E: TextEncoder + ?Sized>(
        patches: &[PatchRecord],
        mode: QueryMode,
        text_encoder: &E,
    ) -> Result<Self> {
        let qs = build_queries(patches, mode)?;
        let texts: Vec<String> = qs.queries.iter().map(|q| q.text.clone()).collect();
        let query_embeddings = encode_texts(text_encoder, &texts)?;
        Ok(Self {
            mode,
            direction: Direction::TextToPatch,
            queries: qs.queries,
            documents: patches.iter().map(|p| p.patch_id.clone()).collect(),
            query_embeddings,
            kind: TaskKind::Patches(patches.to_vec()),
        })
    }

    /// Every note is a query; documents are the distinct texts of `mode`
    /// and the single relevant one is the note's own patch text.
    pub fn audio_to_text<E: TextEncoder + ?Sized>(
        patches: &[PatchRecord],
        mode: QueryMode,
        text_encoder: &E,
    ) -> Result<Self> {
        let qs = build_queries(patches, mode)?;
        let documents: Vec<String> = qs.queries.iter().map(|q| q.text.clone()).collect();
        let doc_embeddings = encode_texts(text_encoder, &documents)?;
        let mut queries = Vec::new();
        let mut query_embeddings = Vec::new();
        for p in patches {
            let text = p.text(mode);
            for (pitch, e) in &p.note_embeddings {
                queries.push(Query {
                    text: format!("{}@{}", p.patch_id, pitch),
                    relevant: BTreeSet::from([text.clone()]),
                });
                query_embeddings.push(e.clone());
            }
        }
        Ok(Self {
            mode,
            direction: Direction::AudioToText,
            queries,
            documents,
            query_embeddings,
            kind: TaskKind::Texts(doc_embeddings),
        })
    }

    pub fn new<E: TextEncoder + ?Sized>(
        patches: &[PatchRecord],
        mode: QueryMode,
        direction: Direction,
        text_encoder: &E,
    ) -> Result<Self> {
        match direction {
            Direction::TextToPatch => Self::text_to_patch(patches, mode, text_encoder),
            Direction::AudioToText => Self::audio_to_text(patches, mode, text_encoder),
        }
    }

    pub fn distance(&self, query: usize, document: usize) -> Result<f64> {
        let q = &self.query_embeddings[query];
        match &self.kind {
            TaskKind::Patches(p) => patch_distance(q, &p[document]),
            TaskKind::Texts(t) => cosine_distance(q, &t[document]),
        }
    }

    pub fn evaluate(&self, ks: &[usize]) -> Result<RetrievalReport> {
        evaluate(&self.queries, &self.documents, ks, |q, d| self.distance(q, d))
    }

    pub fn perfect(&self, ks: &[usize]) -> Result<RetrievalReport> {
        perfect_baseline(&self.queries, &self.documents, ks)
    }

    pub fn random(&self, ks: &[usize], runs: usize, seed: u64) -> Result<RetrievalReport> {
        random_baseline(&self.queries, &self.documents, ks, runs, seed)
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mode: QueryMode,
    pub direction: Direction,
    pub model: String,
    pub report: RetrievalReport,
}

/// Writes `mode,direction,model,R@k...,RANK` with one column per cutoff of
/// the first row.
pub fn write_report_csv<W: std::io::Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let Some(first) = rows.first() else {
        return Err(Error::Empty("no report rows"));
    };
    let ks: Vec<usize> = first.report.r_at.keys().copied().collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["mode".to_string(), "direction".into(), "model".into()];
    header.extend(ks.iter().map(|k| format!("R@{k}")));
    header.push("RANK".into());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.mode.to_string(), row.direction.to_string(), row.model.clone()];
        for k in &ks {
            let v = row
                .report
                .recall(*k)
                .ok_or_else(|| Error::invalid(format!("row {:?} lacks R@{k}", row.model)))?;
            rec.push(format!("{v:.3}"));
        }
        rec.push(format!("{:.3}", row.report.rank));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}
