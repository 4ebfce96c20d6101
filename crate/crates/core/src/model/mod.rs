//! The MoEMeta network: neighbor encoder, expert mixture, task-local
//! projections, and their gradients.

pub mod adapt;
pub mod check;
mod config;
pub mod encoder;
pub mod episode;
pub mod moe;
pub mod params;

use rand::Rng;

pub use adapt::{margin_loss, project, score, AdaptState, Eta};
pub use config::{EtaInit, MetaGradient, ModelConfig};
pub use episode::{Encodings, Episode, EpisodeForward, EpisodeGrads, Example, Net, RelationMeta};
pub use params::{init_params, InitSpec, MlpIds, ParamLayout};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, NeighborSampler};
use crate::numeric::{AdamState, Checkpoint, ParamStore};

/// Configuration plus the global parameters it describes.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub layout: ParamLayout,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        graph: &KnowledgeGraph,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let spec = InitSpec {
            num_entities: graph.num_entities(),
            num_relations: graph.num_embedded_relations(),
            dim: config.embed_dim,
            num_experts: config.num_experts,
            expert_hidden: config.expert_hidden,
            gate_hidden: config.gate_hidden,
            pretrained: graph.pretrained.as_deref(),
            freeze_embeddings: config.freeze_embeddings,
        };
        let (store, layout) = init_params(&spec, rng)?;
        Ok(Model {
            config,
            store,
            layout,
        })
    }

    pub fn net<'a>(&'a self, neighbors: &'a NeighborSampler<'a>) -> Net<'a> {
        Net {
            config: &self.config,
            store: &self.store,
            layout: &self.layout,
            neighbors,
        }
    }

    /// Captures the parameters; `meta` holds `{"model": config}` plus any
    /// `extra` fields.
    pub fn checkpoint(
        &self,
        adam: Option<&AdamState>,
        seed: u64,
        step: u64,
        extra: serde_json::Map<String, serde_json::Value>,
    ) -> Checkpoint {
        let mut meta = extra;
        meta.insert(
            "model".into(),
            serde_json::to_value(&self.config).expect("config serializes"),
        );
        Checkpoint::capture(
            &self.store,
            adam,
            seed,
            step,
            serde_json::Value::Object(meta),
        )
    }

    /// Rebuilds a model from a checkpoint; the layout comes from the saved
    /// config and every value from the saved groups.
    pub fn from_checkpoint(ckpt: &Checkpoint, graph: &KnowledgeGraph) -> Result<Self> {
        let config: ModelConfig =
            serde_json::from_value(ckpt.meta.get("model").cloned().unwrap_or_default())
                .map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
        let mut model = Model::new(config, graph, &mut crate::numeric::rng::seeded(ckpt.seed))?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }
}
