use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Category, EntityId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub query: usize,
    /// 1-based rank of the true tail.
    pub rank: usize,
    pub candidates: usize,
}

/// Ascending rank of `true_tail`. Candidates tied with it count as ranked
/// ahead of it.
pub fn rank_candidates(
    query: usize,
    scores: &[(EntityId, f64)],
    true_tail: EntityId,
) -> Result<RankResult> {
    let mut truth = None;
    for (i, &(c, s)) in scores.iter().enumerate() {
        if c == true_tail {
            if truth.is_some() {
                return Err(Error::Evaluation(format!(
                    "query {query}: true tail {true_tail} appears twice among candidates"
                )));
            }
            truth = Some((i, s));
        }
    }
    let (at, target) = truth.ok_or_else(|| {
        Error::Evaluation(format!(
            "query {query}: true tail {true_tail} is not a candidate"
        ))
    })?;
    if !target.is_finite() {
        return Err(Error::Evaluation(format!(
            "query {query}: true tail score is {target}"
        )));
    }
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &(_, s))| i != at && s.partial_cmp(&target) != Some(Ordering::Greater))
        .count();
    Ok(RankResult {
        query,
        rank: 1 + ahead,
        candidates: scores.len(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub count: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Metrics::default();
        for r in ranks {
            m.count += 1;
            m.mrr += 1.0 / r as f64;
            m.hits1 += (r <= 1) as u8 as f64;
            m.hits5 += (r <= 5) as u8 as f64;
            m.hits10 += (r <= 10) as u8 as f64;
        }
        if m.count > 0 {
            let n = m.count as f64;
            m.mrr /= n;
            m.hits1 /= n;
            m.hits5 /= n;
            m.hits10 /= n;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub overall: Metrics,
    /// Only categories with at least one query appear.
    pub by_category: BTreeMap<Category, Metrics>,
}

impl MetricsTable {
    /// Query-count-weighted mean of the per-category MRRs.
    pub fn recombined_mrr(&self) -> f64 {
        let n: usize = self.by_category.values().map(|m| m.count).sum();
        self.by_category
            .values()
            .map(|m| m.mrr * m.count as f64)
            .sum::<f64>()
            / n as f64
    }
}

pub fn aggregate_metrics(results: &[(RankResult, Category)]) -> Result<MetricsTable> {
    if results.is_empty() {
        return Err(Error::Evaluation("no queries to aggregate".into()));
    }
    let mut by: BTreeMap<Category, Vec<usize>> = BTreeMap::new();
    for (r, c) in results {
        by.entry(*c).or_default().push(r.rank);
    }
    Ok(MetricsTable {
        overall: Metrics::from_ranks(results.iter().map(|(r, _)| r.rank)),
        by_category: by
            .into_iter()
            .map(|(c, ranks)| (c, Metrics::from_ranks(ranks)))
            .collect(),
    })
}
