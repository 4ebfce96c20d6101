//! Forward and backward passes over one task episode.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hasher};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{sample_negative, EntityId, KnowledgeGraph, NeighborSampler, RelationId, Task};
use crate::model::adapt::{self, AdaptState, Eta, ScoreTrace};
use crate::model::config::{MetaGradient, ModelConfig};
use crate::model::encoder::{encode_backward, encode_entity, relu_pattern, EntityEncoding};
use crate::model::moe::{moe_forward, pair_backward, pair_pattern, single_forward, PairTrace};
use crate::model::params::ParamLayout;
use crate::numeric::{ops, GradBuffer, ParamStore};

/// A positive triplet paired with one corrupted tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Example {
    pub head: EntityId,
    pub tail: EntityId,
    pub negative: EntityId,
}

/// A task with negatives drawn, ready for a deterministic forward pass.
#[derive(Clone, Debug)]
pub struct Episode {
    pub relation: RelationId,
    /// Support pairs that define the relation-meta.
    pub pairs: Vec<(EntityId, EntityId)>,
    pub support: Vec<Example>,
    pub query: Vec<Example>,
}

fn corrupt<R: Rng + ?Sized>(
    graph: &KnowledgeGraph,
    relation: RelationId,
    pairs: &[(EntityId, EntityId)],
    per_positive: usize,
    rng: &mut R,
) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(pairs.len() * per_positive);
    for &(head, tail) in pairs {
        for _ in 0..per_positive {
            out.push(Example {
                head,
                tail,
                negative: sample_negative(graph, head, relation, rng)?,
            });
        }
    }
    Ok(out)
}

impl Episode {
    pub fn build<R: Rng + ?Sized>(
        graph: &KnowledgeGraph,
        relation: RelationId,
        support: &[(EntityId, EntityId)],
        query: &[(EntityId, EntityId)],
        negatives_per_positive: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Sampling(format!(
                "relation {relation} has an empty support set"
            )));
        }
        Ok(Episode {
            relation,
            pairs: support.to_vec(),
            support: corrupt(graph, relation, support, negatives_per_positive, rng)?,
            query: corrupt(graph, relation, query, negatives_per_positive, rng)?,
        })
    }

    pub fn from_task<R: Rng + ?Sized>(
        graph: &KnowledgeGraph,
        task: &Task,
        negatives_per_positive: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(
            graph,
            task.relation,
            &task.support,
            &task.query,
            negatives_per_positive,
            rng,
        )
    }

    pub fn entities(&self) -> BTreeSet<EntityId> {
        let mut set = BTreeSet::new();
        for ex in self.support.iter().chain(&self.query) {
            set.extend([ex.head, ex.tail, ex.negative]);
        }
        for &(h, t) in &self.pairs {
            set.extend([h, t]);
        }
        set
    }
}

/// Entity encodings with their traces, keyed by entity.
#[derive(Clone, Debug, Default)]
pub struct Encodings(BTreeMap<EntityId, EntityEncoding>);

impl Encodings {
    pub fn get(&self, entity: EntityId) -> &[f64] {
        &self.0[&entity].output
    }

    pub fn contains(&self, entity: EntityId) -> bool {
        self.0.contains_key(&entity)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Task-level relation vector and the per-pair traces that produced it.
#[derive(Clone, Debug)]
pub struct RelationMeta {
    pub relation: Vec<f64>,
    pub pairs: Vec<(EntityId, EntityId)>,
    pub traces: Vec<PairTrace>,
}

impl RelationMeta {
    /// One sparse gate row per support pair.
    pub fn gate_rows(&self, num_experts: usize) -> Vec<Vec<f64>> {
        self.traces
            .iter()
            .map(|t| t.gate_row(num_experts))
            .collect()
    }

    pub fn pair_outputs(&self) -> Vec<&[f64]> {
        self.traces.iter().map(|t| t.output()).collect()
    }
}

/// Scores of one example and its hinge value.
#[derive(Clone, Debug)]
pub struct ItemTrace {
    pub example: Example,
    pub pos: ScoreTrace,
    pub neg: ScoreTrace,
    pub hinge: f64,
}

impl ItemTrace {
    pub fn active(&self) -> bool {
        self.hinge > 0.0
    }
}

/// Support pass at one inner step, taken before the update.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub eta: Eta,
    pub relation: Vec<f64>,
    pub items: Vec<ItemTrace>,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct EpisodeForward {
    pub encodings: Encodings,
    pub meta: RelationMeta,
    pub steps: Vec<StepRecord>,
    /// `None` when local adaptation is disabled.
    pub adapted: Option<AdaptState>,
    pub query: Vec<ItemTrace>,
    pub query_loss: f64,
}

impl EpisodeForward {
    /// Relation vector used for query scoring.
    pub fn relation(&self) -> &[f64] {
        self.adapted
            .as_ref()
            .map_or(&self.meta.relation, |s| &s.relation)
    }

    pub fn eta(&self) -> Option<&Eta> {
        self.adapted.as_ref().map(|s| &s.eta)
    }
}

/// Gradients of the query loss.
#[derive(Clone, Debug)]
pub struct EpisodeGrads {
    pub buf: GradBuffer,
    /// With respect to the initial task parameters. Exact only under
    /// second-order meta-gradients.
    pub eta: Option<Eta>,
}

/// Read-only view of a model for one pass.
#[derive(Clone, Copy)]
pub struct Net<'a> {
    pub config: &'a ModelConfig,
    pub store: &'a ParamStore,
    pub layout: &'a ParamLayout,
    pub neighbors: &'a NeighborSampler<'a>,
}

fn score_item(
    eta: Option<&Eta>,
    relation: &[f64],
    encs: &Encodings,
    ex: &Example,
    margin: f64,
) -> ItemTrace {
    let h = encs.get(ex.head);
    let pos = adapt::score_traced(eta, h, relation, encs.get(ex.tail));
    let neg = adapt::score_traced(eta, h, relation, encs.get(ex.negative));
    let hinge = (pos.value + margin - neg.value).max(0.0);
    ItemTrace {
        example: *ex,
        pos,
        neg,
        hinge,
    }
}

impl<'a> Net<'a> {
    pub fn encode(&self, entity: EntityId) -> Result<EntityEncoding> {
        encode_entity(
            self.store,
            self.layout,
            entity,
            self.neighbors.neighbors(entity),
            self.config.use_neighbor_agg,
        )
    }

    pub fn encode_all(&self, entities: impl IntoIterator<Item = EntityId>) -> Result<Encodings> {
        let mut map = BTreeMap::new();
        for e in entities {
            if let std::collections::btree_map::Entry::Vacant(slot) = map.entry(e) {
                slot.insert(self.encode(e)?);
            }
        }
        Ok(Encodings(map))
    }

    pub fn pair_forward(&self, head: &[f64], tail: &[f64]) -> Result<PairTrace> {
        if self.config.use_moe {
            moe_forward(self.store, self.layout, head, tail, self.config.top_n)
        } else {
            single_forward(self.store, self.layout, head, tail)
        }
    }

    pub fn relation_meta(
        &self,
        encs: &Encodings,
        pairs: &[(EntityId, EntityId)],
    ) -> Result<RelationMeta> {
        let traces = pairs
            .iter()
            .map(|&(h, t)| self.pair_forward(encs.get(h), encs.get(t)))
            .collect::<Result<Vec<_>>>()?;
        let relation = ops::mean_rows(traces.iter().map(|t| t.output())).ok_or_else(|| {
            Error::Sampling("relation-meta needs at least one support pair".into())
        })?;
        Ok(RelationMeta {
            relation,
            pairs: pairs.to_vec(),
            traces,
        })
    }

    /// Relation-meta for a bare list of support pairs.
    pub fn relation_meta_for(&self, pairs: &[(EntityId, EntityId)]) -> Result<RelationMeta> {
        let encs = self.encode_all(pairs.iter().flat_map(|&(h, t)| [h, t]))?;
        self.relation_meta(&encs, pairs)
    }

    pub fn support_items(
        &self,
        encs: &Encodings,
        eta: Option<&Eta>,
        relation: &[f64],
        support: &[Example],
    ) -> Vec<ItemTrace> {
        support
            .iter()
            .map(|ex| score_item(eta, relation, encs, ex, self.config.margin))
            .collect()
    }

    pub fn support_loss(
        &self,
        encs: &Encodings,
        eta: Option<&Eta>,
        relation: &[f64],
        support: &[Example],
    ) -> f64 {
        self.support_items(encs, eta, relation, support)
            .iter()
            .map(|i| i.hinge)
            .sum()
    }

    /// Runs `steps` plain gradient steps on `(η, R)` over the support set.
    pub fn inner_adapt(
        &self,
        encs: &Encodings,
        relation: &[f64],
        eta: Eta,
        support: &[Example],
        steps: usize,
    ) -> Result<(AdaptState, Vec<StepRecord>)> {
        let alpha = self.config.inner_lr;
        let mut state = AdaptState {
            eta,
            relation: relation.to_vec(),
            steps: 0,
        };
        let mut records = Vec::with_capacity(steps);
        for _ in 0..steps {
            let items = self.support_items(encs, Some(&state.eta), &state.relation, support);
            let loss: f64 = items.iter().map(|i| i.hinge).sum();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "support loss is {loss} at inner step {}",
                    state.steps
                )));
            }
            let q = state.eta.combined();
            let (g_q, g_r) = hinge_grads(&items, Some(&q), &state.relation, |_, _, _| {});
            records.push(StepRecord {
                eta: state.eta.clone(),
                relation: state.relation.clone(),
                items,
                loss,
            });
            ops::axpy(-alpha, &g_q, &mut state.eta.p_h);
            ops::axpy(-alpha, &g_q, &mut state.eta.p_r);
            ops::axpy(alpha, &g_q, &mut state.eta.p_t);
            ops::axpy(-alpha, &g_r, &mut state.relation);
            state.steps += 1;
        }
        if !(state.eta.is_finite() && state.relation.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite(
                "inner update produced non-finite values".into(),
            ));
        }
        Ok((state, records))
    }

    /// Full episode forward: encode, relation-meta, inner loop, query loss.
    pub fn forward(&self, ep: &Episode, eta0: Eta, inner_steps: usize) -> Result<EpisodeForward> {
        let encs = self.encode_all(ep.entities())?;
        let meta = self.relation_meta(&encs, &ep.pairs)?;
        let (adapted, steps) = if self.config.use_local_adapt {
            let (state, steps) =
                self.inner_adapt(&encs, &meta.relation, eta0, &ep.support, inner_steps)?;
            (Some(state), steps)
        } else {
            (None, Vec::new())
        };
        let relation = adapted.as_ref().map_or(&meta.relation, |s| &s.relation);
        let eta = adapted.as_ref().map(|s| &s.eta);
        let query: Vec<ItemTrace> = ep
            .query
            .iter()
            .map(|ex| score_item(eta, relation, &encs, ex, self.config.margin))
            .collect();
        let query_loss = query.iter().map(|i| i.hinge).sum::<f64>();
        if !query_loss.is_finite() {
            return Err(Error::NonFinite(format!("query loss is {query_loss}")));
        }
        Ok(EpisodeForward {
            encodings: encs,
            meta,
            steps,
            adapted,
            query,
            query_loss,
        })
    }

    /// Gradient of the query loss with respect to every global parameter.
    pub fn backward(&self, fwd: &EpisodeForward) -> Result<EpisodeGrads> {
        let d = self.config.embed_dim;
        let mut enc_grads: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
        let mut add_enc = |e: EntityId, g: &[f64], scale: f64| {
            let slot = enc_grads.entry(e).or_insert_with(|| vec![0.0; d]);
            ops::axpy(scale, g, slot);
        };

        let q_final = fwd.eta().map(Eta::combined);
        let (c_q, mut c_r) = hinge_grads(
            &fwd.query,
            q_final.as_deref(),
            fwd.relation(),
            |ex, g, sign| {
                add_enc(ex.head, &g.head, sign);
                add_enc(
                    if sign > 0.0 { ex.tail } else { ex.negative },
                    &g.tail,
                    sign,
                );
            },
        );

        let mut eta_grad = fwd.adapted.as_ref().map(|_| Eta {
            p_h: c_q.clone(),
            p_r: c_q.clone(),
            p_t: c_q.iter().map(|x| -x).collect(),
        });

        if let (Some(g), MetaGradient::SecondOrder) = (eta_grad.as_mut(), self.config.meta_gradient)
        {
            let alpha = self.config.inner_lr;
            for rec in fwd.steps.iter().rev() {
                let q = rec.eta.combined();
                let cq: Vec<f64> = g
                    .p_h
                    .iter()
                    .zip(&g.p_r)
                    .zip(&g.p_t)
                    .map(|((a, b), c)| -alpha * (a + b - c))
                    .collect();
                let cr: Vec<f64> = c_r.iter().map(|x| -alpha * x).collect();
                let mut dq = vec![0.0; d];
                let mut dr = vec![0.0; d];
                for item in rec.items.iter().filter(|i| i.active()) {
                    let ex = item.example;
                    for (trace, sign, tail) in
                        [(&item.pos, 1.0, ex.tail), (&item.neg, -1.0, ex.negative)]
                    {
                        let scq: Vec<f64> = cq.iter().map(|x| sign * x).collect();
                        let scr: Vec<f64> = cr.iter().map(|x| sign * x).collect();
                        let v = adapt::score_grads_vjp(trace, &q, &rec.relation, &scq, &scr);
                        add_enc(ex.head, &v.head, 1.0);
                        add_enc(tail, &v.tail, 1.0);
                        ops::add_assign(&mut dq, &v.q);
                        ops::add_assign(&mut dr, &v.relation);
                    }
                }
                ops::add_assign(&mut g.p_h, &dq);
                ops::add_assign(&mut g.p_r, &dq);
                ops::axpy(-1.0, &dq, &mut g.p_t);
                ops::add_assign(&mut c_r, &dr);
            }
        }

        let mut buf = GradBuffer::for_store(self.store);
        let per_pair = 1.0 / fwd.meta.traces.len() as f64;
        let grad_pair: Vec<f64> = c_r.iter().map(|x| x * per_pair).collect();
        for (&(h, t), trace) in fwd.meta.pairs.iter().zip(&fwd.meta.traces) {
            let (gh, gt) = pair_backward(self.store, self.layout, trace, &grad_pair, &mut buf)?;
            add_enc(h, &gh, 1.0);
            add_enc(t, &gt, 1.0);
        }
        for (e, g) in &enc_grads {
            encode_backward(self.store, self.layout, &fwd.encodings.0[e], g, &mut buf)?;
        }
        if !buf.is_finite() || eta_grad.as_ref().is_some_and(|g| !g.is_finite()) {
            return Err(Error::NonFinite("query-loss gradient is not finite".into()));
        }
        Ok(EpisodeGrads { buf, eta: eta_grad })
    }

    /// Hash of every discrete choice in the pass: ReLU masks, expert
    /// selection, hinge activity, and zero-residual kinks.
    pub fn signature(&self, fwd: &EpisodeForward) -> u64 {
        let mut hasher = DefaultHasher::new();
        let mut eat = |b: bool| hasher.write_u8(b as u8);
        for enc in fwd.encodings.0.values() {
            relu_pattern(enc, &mut eat);
        }
        for trace in &fwd.meta.traces {
            pair_pattern(trace, &mut eat);
        }
        for item in fwd.steps.iter().flat_map(|s| &s.items).chain(&fwd.query) {
            eat(item.active());
            eat(item.pos.norm == 0.0);
            eat(item.neg.norm == 0.0);
        }
        hasher.finish()
    }

    /// Scores `head` against every candidate tail under an adapted state.
    pub fn score_tails(
        &self,
        eta: Option<&Eta>,
        relation: &[f64],
        head: &[f64],
        tails: &[&[f64]],
    ) -> Vec<f64> {
        tails
            .iter()
            .map(|t| adapt::score_traced(eta, head, relation, t).value)
            .collect()
    }
}

/// Sums signed score gradients over active hinges. `visit` receives each
/// example, the score gradients, and the sign (+1 positive, −1 negative).
fn hinge_grads(
    items: &[ItemTrace],
    q: Option<&[f64]>,
    relation: &[f64],
    mut visit: impl FnMut(&Example, &adapt::ScoreGrads, f64),
) -> (Vec<f64>, Vec<f64>) {
    let d = relation.len();
    let mut g_q = vec![0.0; d];
    let mut g_r = vec![0.0; d];
    for item in items.iter().filter(|i| i.active()) {
        for (trace, sign) in [(&item.pos, 1.0), (&item.neg, -1.0)] {
            let g = adapt::score_grads(trace, q, relation);
            ops::axpy(sign, &g.q, &mut g_q);
            ops::axpy(sign, &g.relation, &mut g_r);
            visit(&item.example, &g, sign);
        }
    }
    (g_q, g_r)
}
