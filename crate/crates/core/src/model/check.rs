//! End-to-end finite-difference check of the bi-level query-loss gradient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::synth::{generate_synthetic, SynthConfig};
use crate::graph::{KnowledgeGraph, NeighborSampler, Partition, TaskSplit};
use crate::model::{Episode, Eta, EtaInit, MetaGradient, Model, ModelConfig, Net};
use crate::numeric::gradcheck::{grad_check, Evaluation, GradCheckOptions, GradCheckReport};
use crate::numeric::{rng, GroupId, ParamGroup, ParamStore, Tensor};

/// Shape of the tiny problem the check runs on.
#[derive(Clone, Debug, Serialize)]
pub struct BilevelCheck {
    pub dim: usize,
    pub seed: u64,
    pub num_experts: usize,
    pub top_n: usize,
    pub shots: usize,
    pub queries: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub margin: f64,
    pub meta_gradient: MetaGradient,
}

impl Default for BilevelCheck {
    fn default() -> Self {
        BilevelCheck {
            dim: 4,
            seed: 0,
            num_experts: 4,
            top_n: 2,
            shots: 2,
            queries: 4,
            inner_steps: 2,
            inner_lr: 0.5,
            margin: 4.0,
            meta_gradient: MetaGradient::SecondOrder,
        }
    }
}

/// A graph, a model, and one fixed episode.
pub struct TinyProblem {
    pub graph: KnowledgeGraph,
    pub split: TaskSplit,
    pub model: Model,
    pub episode: Episode,
    pub eta: Eta,
}

pub fn tiny_synth_config() -> SynthConfig {
    SynthConfig {
        num_entities: 30,
        num_clusters: 2,
        num_relations: 6,
        triplets_per_relation: 10,
        latent_dim: 4,
        background_relations: 2,
        background_triplets_per_relation: 30,
        candidates_per_relation: 15,
        ..SynthConfig::default()
    }
}

impl BilevelCheck {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.dim,
            num_experts: self.num_experts,
            top_n: self.top_n,
            neighbor_cap: 5,
            inner_lr: self.inner_lr,
            margin: self.margin,
            inner_steps: self.inner_steps,
            eta_init: EtaInit::Gaussian { std: 0.1 },
            meta_gradient: self.meta_gradient,
            ..ModelConfig::default()
        }
    }

    pub fn build(&self) -> Result<TinyProblem> {
        let config = self.model_config();
        let mut r = rng::seeded(self.seed);
        let (graph, split) = generate_synthetic(&tiny_synth_config(), &mut r)?.build()?;
        let model = Model::new(config.clone(), &graph, &mut r)?;
        let (&relation, pairs) = split
            .pool(Partition::Train)
            .iter()
            .find(|(_, p)| p.len() > self.shots)
            .ok_or_else(|| Error::Sampling("no train relation has enough pairs".into()))?;
        let end = pairs.len().min(self.shots + self.queries);
        let episode = Episode::build(
            &graph,
            relation,
            &pairs[..self.shots],
            &pairs[self.shots..end],
            config.negatives_per_positive,
            &mut r,
        )?;
        let eta = Eta::init(config.eta_init, self.dim, &mut r);
        Ok(TinyProblem {
            graph,
            split,
            model,
            episode,
            eta,
        })
    }

    /// Builds the problem, fills analytic gradients, and compares them
    /// against central differences of the full pass, inner loop included.
    pub fn run(&self, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        let problem = self.build()?;
        let TinyProblem {
            graph,
            model,
            episode,
            eta,
            ..
        } = problem;
        let sampler = NeighborSampler::new(&graph, model.config.neighbor_cap, self.seed);
        let Model {
            config,
            mut store,
            layout,
        } = model;
        let eta_ids = [
            store.add(ParamGroup::new("eta.p_h", Tensor::from_vector(eta.p_h)))?,
            store.add(ParamGroup::new("eta.p_r", Tensor::from_vector(eta.p_r)))?,
            store.add(ParamGroup::new("eta.p_t", Tensor::from_vector(eta.p_t)))?,
        ];
        let steps = config.inner_steps;
        let eta_of = |s: &ParamStore| Eta {
            p_h: s.value(eta_ids[0]).as_slice().to_vec(),
            p_r: s.value(eta_ids[1]).as_slice().to_vec(),
            p_t: s.value(eta_ids[2]).as_slice().to_vec(),
        };

        let net = Net {
            config: &config,
            store: &store,
            layout: &layout,
            neighbors: &sampler,
        };
        let fwd = net.forward(&episode, eta_of(&store), steps)?;
        if !fwd.steps.iter().flat_map(|s| &s.items).any(|i| i.active()) {
            return Err(Error::Evaluation(
                "no support hinge is active, so the inner loop is not exercised".into(),
            ));
        }
        let grads = net.backward(&fwd)?;
        store.zero_grads();
        store.accumulate(&grads.buf);
        if let Some(g) = grads.eta {
            set_grad(&mut store, eta_ids[0], &g.p_h);
            set_grad(&mut store, eta_ids[1], &g.p_r);
            set_grad(&mut store, eta_ids[2], &g.p_t);
        }

        let closure = |s: &ParamStore| -> Result<Evaluation> {
            let net = Net {
                config: &config,
                store: s,
                layout: &layout,
                neighbors: &sampler,
            };
            let fwd = net.forward(&episode, eta_of(s), steps)?;
            Ok(Evaluation {
                loss: fwd.query_loss,
                signature: net.signature(&fwd),
            })
        };
        grad_check(&mut store, closure, opts)
    }
}

fn set_grad(store: &mut ParamStore, id: GroupId, values: &[f64]) {
    store
        .group_mut(id)
        .grad
        .as_mut_slice()
        .copy_from_slice(values);
}
