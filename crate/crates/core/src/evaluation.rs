//! Rankings and the recall@K / hit@K metrics averaged over queries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::dataset::{RelevanceTable, VideoId};
use crate::{Error, Result};

/// Hit@K cut-offs reported by default.
pub const DEFAULT_HIT_KS: [usize; 4] = [5, 10, 20, 30];
/// Recall@K cut-offs reported by default.
pub const DEFAULT_RECALL_KS: [usize; 4] = [50, 100, 200, 300];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreOrder {
    /// Smaller score ranks first (distances, forest outputs).
    Ascending,
    /// Larger score ranks first (probabilities).
    Descending,
}

/// Candidates for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub query: VideoId,
    pub ranked: Vec<(VideoId, f64)>,
}

impl RankingResult {
    /// Validates an already ordered list.
    pub fn new(query: VideoId, ranked: Vec<(VideoId, f64)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, _) in &ranked {
            if *id == query {
                return Err(Error::Eval(format!("{query} is ranked against itself")));
            }
            if !seen.insert(id) {
                return Err(Error::Eval(format!("{query}: {id} ranked twice")));
            }
        }
        Ok(Self { query, ranked })
    }

    /// Sorts scored candidates, breaking ties by id.
    pub fn from_scores(query: VideoId, mut scored: Vec<(VideoId, f64)>, order: ScoreOrder) -> Result<Self> {
        scored.sort_by(|(ia, sa), (ib, sb)| {
            let by_score = match order {
                ScoreOrder::Ascending => sa.total_cmp(sb),
                ScoreOrder::Descending => sb.total_cmp(sa),
            };
            by_score.then_with(|| ia.cmp(ib))
        });
        Self::new(query, scored)
    }

    pub fn ids(&self) -> impl Iterator<Item = &VideoId> {
        self.ranked.iter().map(|(id, _)| id)
    }

    pub fn truncate(&mut self, k: usize) {
        self.ranked.truncate(k);
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

fn check_args(truth: &[VideoId], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Eval("K must be at least 1".into()));
    }
    if truth.is_empty() {
        return Err(Error::Eval("empty relevance list".into()));
    }
    Ok(())
}

/// `|top-K ∩ truth| / |truth|`. The denominator is the full list length even
/// when `K < |truth|`.
pub fn recall_at_k(pred: &RankingResult, truth: &[VideoId], k: usize) -> Result<f64> {
    check_args(truth, k)?;
    let truth: BTreeSet<&VideoId> = truth.iter().collect();
    let found = pred.ids().take(k).filter(|id| truth.contains(id)).count();
    Ok(found as f64 / truth.len() as f64)
}

/// 1 when at least one relevant item is in the top K.
pub fn hit_at_k(pred: &RankingResult, truth: &[VideoId], k: usize) -> Result<u8> {
    Ok(u8::from(recall_at_k(pred, truth, k)? > 0.0))
}

/// Expected recall@K of a uniformly random permutation of `n_candidates`,
/// i.e. the hypergeometric mean `K·R/N` divided by `R`.
pub fn uniform_expected_recall(n_candidates: usize, k: usize) -> f64 {
    if n_candidates == 0 {
        return 0.0;
    }
    k.min(n_candidates) as f64 / n_candidates as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub hit_at: BTreeMap<usize, f64>,
    pub recall_at: BTreeMap<usize, f64>,
    pub n_queries: usize,
}

/// Macro-averages over every query of `rel`. A query in `rel` without a
/// prediction is an error, as is a prediction for an unknown query.
pub fn evaluate(
    preds: &[RankingResult],
    rel: &RelevanceTable,
    hit_ks: &[usize],
    recall_ks: &[usize],
) -> Result<MetricReport> {
    if rel.is_empty() {
        return Err(Error::Eval("no queries to evaluate".into()));
    }
    let mut by_query: BTreeMap<&VideoId, &RankingResult> = BTreeMap::new();
    for p in preds {
        match rel.get(p.query.as_str()) {
            None => return Err(Error::Eval(format!("prediction for {} which has no relevance row", p.query))),
            Some([]) => return Err(Error::Eval(format!("{} has an empty relevance list", p.query))),
            Some(_) => {}
        }
        if by_query.insert(&p.query, p).is_some() {
            return Err(Error::Eval(format!("{} predicted twice", p.query)));
        }
    }

    let mut hit_sum: BTreeMap<usize, f64> = hit_ks.iter().map(|&k| (k, 0.0)).collect();
    let mut recall_sum: BTreeMap<usize, f64> = recall_ks.iter().map(|&k| (k, 0.0)).collect();
    for (query, truth) in rel.rows() {
        let pred = by_query.get(query).ok_or_else(|| Error::Eval(format!("no prediction for query {query}")))?;
        for (&k, sum) in hit_sum.iter_mut() {
            *sum += f64::from(hit_at_k(pred, truth, k)?);
        }
        for (&k, sum) in recall_sum.iter_mut() {
            *sum += recall_at_k(pred, truth, k)?;
        }
    }
    let n = rel.len() as f64;
    let mean = |m: BTreeMap<usize, f64>| m.into_iter().map(|(k, s)| (k, s / n)).collect();
    Ok(MetricReport { hit_at: mean(hit_sum), recall_at: mean(recall_sum), n_queries: rel.len() })
}
