use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::queries::Query;
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 50];

pub const DEFAULT_RANDOM_RUNS: usize = 100;

/// Recall percentages per cutoff and the mean first-relevant rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub r_at: BTreeMap<usize, f64>,
    pub rank: f64,
}

impl RetrievalReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.r_at.get(&k).copied()
    }

    /// True when `self` is at least as good as `other` in every metric.
    pub fn dominates(&self, other: &RetrievalReport) -> bool {
        self.rank <= other.rank
            && other
                .r_at
                .iter()
                .all(|(k, v)| self.r_at.get(k).is_some_and(|s| s >= v))
    }
}

/// Outcome for a single query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryScore {
    /// 1-based position of the first relevant document.
    pub first_relevant_rank: usize,
    /// Relevant documents among the top k, one entry per cutoff.
    pub hits: Vec<usize>,
    pub num_relevant: usize,
}

impl QueryScore {
    fn recall(&self, i: usize, k: usize) -> f64 {
        self.hits[i] as f64 / k.min(self.num_relevant) as f64
    }
}

/// Relevant sets translated to document indices, validated once.
struct Resolved {
    relevant: Vec<Vec<usize>>,
}

fn resolve(queries: &[Query], documents: &[String], ks: &[usize]) -> Result<Resolved> {
    if queries.is_empty() {
        return Err(Error::Empty("no queries"));
    }
    if documents.is_empty() {
        return Err(Error::Empty("no documents"));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("cutoffs must be nonempty and positive"));
    }
    let mut index = HashMap::with_capacity(documents.len());
    for (i, id) in documents.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let mut missing = Vec::new();
    let mut relevant = Vec::with_capacity(queries.len());
    for q in queries {
        if q.relevant.is_empty() {
            return Err(Error::invalid(format!("query {:?} has no relevant documents", q.text)));
        }
        let mut idx = Vec::with_capacity(q.relevant.len());
        for id in &q.relevant {
            match index.get(id.as_str()) {
                Some(&i) => idx.push(i),
                None => missing.push(id.clone()),
            }
        }
        relevant.push(idx);
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::Unresolved(missing));
    }
    Ok(Resolved { relevant })
}

fn score_ordering(order: &[usize], relevant: &[usize], n_docs: usize, ks: &[usize]) -> Result<QueryScore> {
    if order.len() != n_docs {
        return Err(Error::LengthMismatch {
            expected: n_docs,
            found: order.len(),
        });
    }
    let mut position = vec![usize::MAX; n_docs];
    for (pos, &d) in order.iter().enumerate() {
        if d >= n_docs || position[d] != usize::MAX {
            return Err(Error::invalid("ordering is not a permutation of the documents"));
        }
        position[d] = pos;
    }
    let positions: Vec<usize> = relevant.iter().map(|&d| position[d]).collect();
    let first = positions.iter().copied().min().unwrap_or(usize::MAX);
    let hits = ks
        .iter()
        .map(|&k| positions.iter().filter(|&&p| p < k).count())
        .collect();
    Ok(QueryScore {
        first_relevant_rank: first + 1,
        hits,
        num_relevant: relevant.len(),
    })
}

/// Averages per-query scores in query order.
pub fn summarize(scores: &[QueryScore], ks: &[usize]) -> Result<RetrievalReport> {
    if scores.is_empty() {
        return Err(Error::Empty("no query scores"));
    }
    let n = scores.len() as f64;
    let mut r_at = BTreeMap::new();
    for (i, &k) in ks.iter().enumerate() {
        let total: f64 = scores.iter().map(|s| s.recall(i, k)).sum();
        r_at.insert(k, 100.0 * total / n);
    }
    let rank = scores.iter().map(|s| s.first_relevant_rank as f64).sum::<f64>() / n;
    Ok(RetrievalReport { r_at, rank })
}

/// Scores explicit per-query orderings (document indices, best first).
pub fn score_orderings(
    queries: &[Query],
    documents: &[String],
    ks: &[usize],
    orderings: &[Vec<usize>],
) -> Result<Vec<QueryScore>> {
    let resolved = resolve(queries, documents, ks)?;
    if orderings.len() != queries.len() {
        return Err(Error::LengthMismatch {
            expected: queries.len(),
            found: orderings.len(),
        });
    }
    orderings
        .iter()
        .zip(&resolved.relevant)
        .map(|(o, rel)| score_ordering(o, rel, documents.len(), ks))
        .collect()
}

pub fn evaluate_orderings(
    queries: &[Query],
    documents: &[String],
    ks: &[usize],
    orderings: &[Vec<usize>],
) -> Result<RetrievalReport> {
    summarize(&score_orderings(queries, documents, ks, orderings)?, ks)
}

/// Ranks documents ascending by `distance(query_index, document_index)`,
/// ties broken by ascending document id, and scores each query.
pub fn evaluate_detailed<F>(
    queries: &[Query],
    documents: &[String],
    ks: &[usize],
    distance: F,
) -> Result<Vec<QueryScore>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let resolved = resolve(queries, documents, ks)?;
    let n_docs = documents.len();
    (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let mut scored = Vec::with_capacity(n_docs);
            for d in 0..n_docs {
                let dist = distance(q, d)?;
                if dist.is_nan() {
                    return Err(Error::NonFinite(format!(
                        "distance between query {q} and document {:?}",
                        documents[d]
                    )));
                }
                scored.push((dist, d));
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| documents[a.1].cmp(&documents[b.1])));
            let order: Vec<usize> = scored.into_iter().map(|(_, d)| d).collect();
            score_ordering(&order, &resolved.relevant[q], n_docs, ks)
        })
        .collect()
}

pub fn evaluate<F>(queries: &[Query], documents: &[String], ks: &[usize], distance: F) -> Result<RetrievalReport>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    summarize(&evaluate_detailed(queries, documents, ks, distance)?, ks)
}

/// The optimum: every query's relevant documents first (by id), then the
/// rest (by id).
pub fn perfect_baseline(queries: &[Query], documents: &[String], ks: &[usize]) -> Result<RetrievalReport> {
    let resolved = resolve(queries, documents, ks)?;
    let mut by_id: Vec<usize> = (0..documents.len()).collect();
    by_id.sort_by(|&a, &b| documents[a].cmp(&documents[b]));
    let orderings: Vec<Vec<usize>> = resolved
        .relevant
        .iter()
        .map(|rel| {
            let mut is_rel = vec![false; documents.len()];
            for &d in rel {
                is_rel[d] = true;
            }
            let (mut first, rest): (Vec<usize>, Vec<usize>) = by_id.iter().partition(|&&d| is_rel[d]);
            first.extend(rest);
            first
        })
        .collect();
    evaluate_orderings(queries, documents, ks, &orderings)
}

/// One report per run; each run draws an independent uniform permutation
/// per query from its own ChaCha stream.
pub fn random_baseline_runs(
    queries: &[Query],
    documents: &[String],
    ks: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<RetrievalReport>> {
    if runs == 0 {
        return Err(Error::invalid("random baseline needs at least one run"));
    }
    let resolved = resolve(queries, documents, ks)?;
    let n_docs = documents.len();
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            let mut scores = Vec::with_capacity(queries.len());
            for rel in &resolved.relevant {
                let mut order: Vec<usize> = (0..n_docs).collect();
                order.shuffle(&mut rng);
                scores.push(score_ordering(&order, rel, n_docs, ks)?);
            }
            summarize(&scores, ks)
        })
        .collect()
}

/// Mean of [`random_baseline_runs`].
pub fn random_baseline(
    queries: &[Query],
    documents: &[String],
    ks: &[usize],
    runs: usize,
    seed: u64,
) -> Result<RetrievalReport> {
    let reports = random_baseline_runs(queries, documents, ks, runs, seed)?;
    Ok(mean_report(&reports))
}

fn mean_report(reports: &[RetrievalReport]) -> RetrievalReport {
    let n = reports.len() as f64;
    let mut r_at = BTreeMap::new();
    for &k in reports[0].r_at.keys() {
        r_at.insert(k, reports.iter().map(|r| r.r_at[&k]).sum::<f64>() / n);
    }
    let rank = reports.iter().map(|r| r.rank).sum::<f64>() / n;
    RetrievalReport { r_at, rank }
}
