//! Candidate ranking, link-prediction metrics, and gate-profile export.

mod gates;
mod rank;

use rayon::prelude::*;
use serde::Serialize;

pub use gates::{
    cluster_similarity, cosine, gate_profile, gates_csv, write_gates_csv, ClusterSimilarity,
    GateProfile,
};
pub use rank::{aggregate_metrics, rank_candidates, Metrics, MetricsTable, RankResult};

use crate::error::Result;
use crate::graph::{
    classify_relation, eval_task, Category, KnowledgeGraph, Partition, RelationId, TaskSplit,
};
use crate::model::{Episode, Eta, Net};
use crate::numeric::rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub relation: String,
    pub category: Category,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub metrics: MetricsTable,
    pub tasks: Vec<TaskMetrics>,
}

/// Ranks every query of one task after adapting on its first `k` pairs.
pub fn evaluate_task(
    net: &Net,
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    partition: Partition,
    relation: RelationId,
    k: usize,
    seed: u64,
) -> Result<Vec<RankResult>> {
    let task = eval_task(graph, split, partition, relation, k)?;
    let mut r = rng::derived(rng::sub_seed(seed, "eval"), relation as u64);
    let ep = Episode::build(
        graph,
        relation,
        &task.support,
        &[],
        net.config.negatives_per_positive,
        &mut r,
    )?;
    let eta0 = Eta::init(net.config.eta_init, net.config.embed_dim, &mut r);
    let fwd = net.forward(&ep, eta0, net.config.eval_inner_steps())?;
    let cands: Vec<Vec<f64>> = task
        .candidates
        .iter()
        .map(|&c| net.encode(c).map(|e| e.output))
        .collect::<Result<_>>()?;
    let cand_refs: Vec<&[f64]> = cands.iter().map(Vec::as_slice).collect();
    let mut out = Vec::with_capacity(task.query.len());
    for (i, &(h, t)) in task.query.iter().enumerate() {
        let head = net.encode(h)?.output;
        let scores = net.score_tails(fwd.eta(), fwd.relation(), &head, &cand_refs);
        let pairs: Vec<_> = task.candidates.iter().copied().zip(scores).collect();
        out.push(rank_candidates(i, &pairs, t)?);
    }
    Ok(out)
}

/// Meta-test over a partition. The model is only read.
pub fn meta_test(
    net: &Net,
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    partition: Partition,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let relations: Vec<RelationId> = split.pool(partition).keys().copied().collect();
    let per_task: Vec<Vec<RankResult>> = relations
        .par_iter()
        .map(|&r| evaluate_task(net, graph, split, partition, r, k, seed))
        .collect::<Result<_>>()?;
    let mut all = Vec::new();
    let mut tasks = Vec::new();
    for (&relation, ranks) in relations.iter().zip(per_task) {
        let category = classify_relation(graph, relation).category;
        tasks.push(TaskMetrics {
            relation: graph.relations.name(relation).to_string(),
            category,
            metrics: Metrics::from_ranks(ranks.iter().map(|r| r.rank)),
        });
        for r in ranks {
            all.push((
                RankResult {
                    query: all.len(),
                    ..r
                },
                category,
            ));
        }
    }
    Ok(EvalReport {
        metrics: aggregate_metrics(&all)?,
        tasks,
    })
}
