use std::sync::OnceLock;

use rand::seq::{index, IndexedRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{
    EntityId, KnowledgeGraph, Neighbor, Partition, RelationId, Task, TaskSplit, Triplet,
};
use crate::numeric::rng;

/// Per-run neighbor view with the degree cap applied.
///
/// An entity with more than `cap` neighbors gets a uniform sample without
/// replacement, drawn from a stream keyed by `(seed, entity)` and cached, so
/// the result is a pure function of the dataset, the seed and the entity.
pub struct NeighborSampler<'g> {
    graph: &'g KnowledgeGraph,
    cap: usize,
    seed: u64,
    cache: Vec<OnceLock<Vec<Neighbor>>>,
}

impl<'g> NeighborSampler<'g> {
    pub fn new(graph: &'g KnowledgeGraph, cap: usize, seed: u64) -> Self {
        assert!(cap >= 1, "neighbor cap must be at least 1");
        NeighborSampler {
            graph,
            cap,
            seed: rng::sub_seed(seed, "neighbors"),
            cache: (0..graph.num_entities()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn neighbors(&self, entity: EntityId) -> &[Neighbor] {
        let all = &self.graph.neighbor_index[entity];
        if all.len() <= self.cap {
            return all;
        }
        self.cache[entity].get_or_init(|| {
            let mut r = rng::derived(self.seed, entity as u64);
            let mut picked = index::sample(&mut r, all.len(), self.cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| all[i]).collect()
        })
    }
}

/// Picks an eligible relation uniformly, then `k` support and up to
/// `query_batch` query pairs without replacement.
pub fn sample_task<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    partition: Partition,
    k: usize,
    query_batch: usize,
    rng: &mut R,
) -> Result<Task> {
    if k == 0 {
        return Err(Error::Config("shots K must be at least 1".into()));
    }
    let eligible: Vec<(&RelationId, &Vec<(EntityId, EntityId)>)> = split
        .pool(partition)
        .iter()
        .filter(|(_, pairs)| pairs.len() > k)
        .collect();
    let &(&relation, pairs) = eligible.choose(rng).ok_or_else(|| {
        Error::Sampling(format!(
            "no {partition:?} relation has more than K={k} triplets"
        ))
    })?;
    let take = (k + query_batch).min(pairs.len());
    let picked = index::sample(rng, pairs.len(), take);
    let mut picked: Vec<(EntityId, EntityId)> = picked.into_iter().map(|i| pairs[i]).collect();
    let query = picked.split_off(k);
    let candidates = graph
        .candidates_of(relation)
        .ok_or_else(|| Error::Sampling(format!("relation {relation} has no candidates")))?
        .clone();
    Ok(Task {
        relation,
        support: picked,
        query,
        candidates,
    })
}

/// Evaluation episode: the first `k` pairs in file order are the support set,
/// the rest are queries.
pub fn eval_task(
    graph: &KnowledgeGraph,
    split: &TaskSplit,
    partition: Partition,
    relation: RelationId,
    k: usize,
) -> Result<Task> {
    let pairs = split.pool(partition).get(&relation).ok_or_else(|| {
        Error::Evaluation(format!("relation {relation} is not a {partition:?} task"))
    })?;
    if pairs.len() <= k {
        return Err(Error::Evaluation(format!(
            "relation {} has {} triplets, needs more than K={k}",
            graph.relations.name(relation),
            pairs.len()
        )));
    }
    Ok(Task {
        relation,
        support: pairs[..k].to_vec(),
        query: pairs[k..].to_vec(),
        candidates: graph
            .candidates_of(relation)
            .ok_or_else(|| Error::Evaluation(format!("relation {relation} has no candidates")))?
            .clone(),
    })
}

/// Uniform corrupted tail such that `(head, relation, tail')` is not a known
/// triplet.
pub fn sample_negative<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    head: EntityId,
    relation: RelationId,
    rng: &mut R,
) -> Result<EntityId> {
    let n = graph.num_entities();
    let known = graph
        .tail_counts
        .get(&(head, relation))
        .copied()
        .unwrap_or(0);
    if known >= n {
        return Err(Error::DegenerateRelation { head, relation });
    }
    loop {
        let tail = rng.random_range(0..n);
        if !graph.contains(&Triplet::new(head, relation, tail)) {
            return Ok(tail);
        }
    }
}
