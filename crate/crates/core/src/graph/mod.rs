//! Knowledge-graph storage, dataset ingestion, and episode sampling.

mod cardinality;
mod dataset;
mod sampler;
pub mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

pub use cardinality::{classify_pairs, classify_relation, Category, RelationCardinality};
pub use dataset::{load_dataset, RawDataset, DATASET_FILES};
pub use sampler::{eval_task, sample_negative, sample_task, NeighborSampler};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triplet {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triplet {
            head,
            relation,
            tail,
        }
    }
}

/// Bidirectional name ↔ dense id map.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Self {
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Vocab { names, ids }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One neighboring tuple `(relation, entity)` of an entity.
pub type Neighbor = (RelationId, EntityId);

/// Immutable after construction.
///
/// Relation ids are laid out as background relations `0..B`, their inverses
/// `B..2B`, then task relations. Only the first `2B` have embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    pub entities: Vocab,
    pub relations: Vocab,
    pub num_background_relations: usize,
    pub background: Vec<Triplet>,
    pub neighbor_index: Vec<Vec<Neighbor>>,
    pub triplet_set: HashSet<Triplet>,
    /// All known `(head, tail)` pairs per relation, background and task.
    pub pairs_by_relation: Vec<Vec<(EntityId, EntityId)>>,
    pub candidates: HashMap<RelationId, Arc<[EntityId]>>,
    /// Distinct true tails per `(head, relation)`.
    pub tail_counts: HashMap<(EntityId, RelationId), usize>,
    /// Row-aligned with entity ids when a pretrained file was supplied.
    pub pretrained: Option<Vec<Vec<f64>>>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Background relations plus their inverses: the rows of the relation
    /// embedding table.
    pub fn num_embedded_relations(&self) -> usize {
        2 * self.num_background_relations
    }

    pub fn inverse(&self, relation: RelationId) -> Option<RelationId> {
        let b = self.num_background_relations;
        match relation {
            r if r < b => Some(r + b),
            r if r < 2 * b => Some(r - b),
            _ => None,
        }
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.triplet_set.contains(t)
    }

    pub fn candidates_of(&self, relation: RelationId) -> Option<&Arc<[EntityId]>> {
        self.candidates.get(&relation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub fn file_name(self) -> &'static str {
        match self {
            Partition::Train => "train_tasks.json",
            Partition::Dev => "dev_tasks.json",
            Partition::Test => "test_tasks.json",
        }
    }
}

/// Task relation → its `(head, tail)` pairs, in file order.
pub type TaskPool = BTreeMap<RelationId, Vec<(EntityId, EntityId)>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskSplit {
    pub train: TaskPool,
    pub dev: TaskPool,
    pub test: TaskPool,
}

impl TaskSplit {
    pub fn pool(&self, partition: Partition) -> &TaskPool {
        match partition {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn num_triplets(&self) -> usize {
        [&self.train, &self.dev, &self.test]
            .iter()
            .flat_map(|p| p.values())
            .map(Vec::len)
            .sum()
    }
}

/// One relation's episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub relation: RelationId,
    pub support: Vec<(EntityId, EntityId)>,
    pub query: Vec<(EntityId, EntityId)>,
    /// Shared candidate tails for every query of the relation.
    pub candidates: Arc<[EntityId]>,
}
