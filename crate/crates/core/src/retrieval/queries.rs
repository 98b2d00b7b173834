use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_distance, Embedding};
use crate::error::{Error, Result};

/// A synth patch: metadata plus one embedding per recorded pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub patch_id: String,
    pub title: String,
    pub category: String,
    pub note_embeddings: Vec<(u8, Embedding)>,
}

impl PatchRecord {
    pub fn new(
        patch_id: impl Into<String>,
        title: impl Into<String>,
        category: impl Into<String>,
        note_embeddings: Vec<(u8, Embedding)>,
    ) -> Result<Self> {
        let patch_id = patch_id.into();
        let Some((_, first)) = note_embeddings.first() else {
            return Err(Error::invalid(format!("patch {patch_id:?} has no notes")));
        };
        let dim = first.dim();
        if let Some((_, e)) = note_embeddings.iter().find(|(_, e)| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
        Ok(Self {
            patch_id,
            title: title.into(),
            category: category.into(),
            note_embeddings,
        })
    }

    /// Query text this patch produces under `mode`.
    pub fn text(&self, mode: QueryMode) -> String {
        let title = normalize_title(&self.title);
        match mode {
            QueryMode::Title => title,
            QueryMode::Category => self.category.trim().to_string(),
            QueryMode::TitleCategory => format!("{} {}", title, self.category.trim()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Title,
    Category,
    TitleCategory,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Title => "title",
            QueryMode::Category => "category",
            QueryMode::TitleCategory => "title_category",
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" => Ok(QueryMode::Title),
            "category" => Ok(QueryMode::Category),
            "title_category" => Ok(QueryMode::TitleCategory),
            other => Err(Error::invalid(format!("unknown query mode {other:?}"))),
        }
    }
}

/// A query and the ids of the documents relevant to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub relevant: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySet {
    pub mode: QueryMode,
    pub queries: Vec<Query>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Drops a trailing all-digit token ("Blue smile 2" -> "Blue smile").
pub fn normalize_title(raw: &str) -> String {
    let trimmed = raw.trim();
    match trimmed.rsplit_once(char::is_whitespace) {
        Some((head, last)) if !last.is_empty() && last.bytes().all(|b| b.is_ascii_digit()) => {
            head.trim().to_string()
        }
        _ => trimmed.to_string(),
    }
}

/// One query per distinct text; relevant = every patch producing that text.
/// Queries keep first-occurrence order.
pub fn build_queries(patches: &[PatchRecord], mode: QueryMode) -> Result<QuerySet> {
    if patches.is_empty() {
        return Err(Error::Empty("no patches to build queries from"));
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut queries: Vec<Query> = Vec::new();
    for p in patches {
        let text = p.text(mode);
        let slot = *index.entry(text.clone()).or_insert_with(|| {
            queries.push(Query {
                text,
                relevant: BTreeSet::new(),
            });
            queries.len() - 1
        });
        queries[slot].relevant.insert(p.patch_id.clone());
    }
    Ok(QuerySet { mode, queries })
}

/// Distance between a text embedding and a patch: the minimum over the
/// patch's notes.
pub fn patch_distance(query: &Embedding, patch: &PatchRecord) -> Result<f64> {
    if patch.note_embeddings.is_empty() {
        return Err(Error::invalid(format!("patch {:?} has no notes", patch.patch_id)));
    }
    let mut best = f64::INFINITY;
    for (_, note) in &patch.note_embeddings {
        best = best.min(cosine_distance(query, note)?);
    }
    Ok(best)
}
