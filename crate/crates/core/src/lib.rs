//! Few-shot knowledge-graph relation learning with a sparse mixture of
//! relation experts and task-local projection adaptation.

pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{meta_test, EvalReport, GateProfile, Metrics, MetricsTable, RankResult};
pub use graph::synth::{generate_synthetic, SynthConfig, SynthMeta, SyntheticDataset};
pub use graph::{
    load_dataset, Category, KnowledgeGraph, NeighborSampler, Partition, RelationCardinality, Task,
    TaskSplit, Triplet,
};
pub use model::{AdaptState, Eta, EtaInit, MetaGradient, Model, ModelConfig, RelationMeta};
pub use numeric::{AdamState, Checkpoint, ParamGroup, ParamStore, Tensor};
pub use trainer::{meta_train, TrainConfig, TrainOutcome, TrainReport};
