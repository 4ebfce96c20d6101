//! Attentive one-hop neighbor aggregation.
//!
//! For neighbor tuples `(rᵢ, e'ᵢ)` of entity `e`:
//! `cᵢ = rᵢ ⊕ e'ᵢ`, `c'ᵢ = ReLU(W cᵢ)`, `gᵢ = σ(βᵀ c'ᵢ)`, and the encoding is
//! `mean(gᵢ · c'ᵢ) + e`.

use crate::error::Result;
use crate::graph::{EntityId, Neighbor};
use crate::model::params::ParamLayout;
use crate::numeric::{ops, GradBuffer, ParamStore};

#[derive(Clone, Debug)]
pub struct NeighborTrace {
    pub relation: usize,
    pub entity: EntityId,
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub gate: f64,
}

#[derive(Clone, Debug)]
pub struct EntityEncoding {
    pub entity: EntityId,
    pub output: Vec<f64>,
    pub neighbors: Vec<NeighborTrace>,
}

pub fn encode_entity(
    store: &ParamStore,
    layout: &ParamLayout,
    entity: EntityId,
    neighbors: &[Neighbor],
    aggregate: bool,
) -> Result<EntityEncoding> {
    let own = store.value(layout.entity).row(entity);
    let mut output = own.to_vec();
    let mut traces = Vec::new();
    if aggregate && !neighbors.is_empty() {
        let w = store.value(layout.nbr_w);
        let beta = store.value(layout.nbr_beta).as_slice();
        let rel = store.value(layout.relation);
        let ent = store.value(layout.entity);
        let mut sum = vec![0.0; own.len()];
        traces.reserve(neighbors.len());
        for &(r, e) in neighbors {
            let input = ops::concat(rel.row(r), ent.row(e));
            let pre = ops::linear_forward(w, &input, None)?;
            let act = ops::relu(&pre);
            let gate = ops::sigmoid(ops::dot(beta, &act));
            ops::axpy(gate, &act, &mut sum);
            traces.push(NeighborTrace {
                relation: r,
                entity: e,
                input,
                pre,
                act,
                gate,
            });
        }
        let inv = 1.0 / neighbors.len() as f64;
        for (o, s) in output.iter_mut().zip(&sum) {
            *o += s * inv;
        }
    }
    Ok(EntityEncoding {
        entity,
        output,
        neighbors: traces,
    })
}

pub fn encode_backward(
    store: &ParamStore,
    layout: &ParamLayout,
    enc: &EntityEncoding,
    grad_out: &[f64],
    buf: &mut GradBuffer,
) -> Result<()> {
    ops::add_assign(buf.row_mut(layout.entity, enc.entity), grad_out);
    if enc.neighbors.is_empty() {
        return Ok(());
    }
    let d = grad_out.len();
    let inv = 1.0 / enc.neighbors.len() as f64;
    let scaled: Vec<f64> = grad_out.iter().map(|g| g * inv).collect();
    let w = store.value(layout.nbr_w);
    let beta = store.value(layout.nbr_beta).as_slice();
    for tr in &enc.neighbors {
        // term = g · c'
        let d_gate = ops::dot(&scaled, &tr.act);
        let d_logit = ops::sigmoid_backward(tr.gate, d_gate);
        ops::axpy(d_logit, &tr.act, buf.dense_mut(layout.nbr_beta));
        let mut d_act: Vec<f64> = scaled.iter().map(|g| g * tr.gate).collect();
        ops::axpy(d_logit, beta, &mut d_act);
        let d_pre = ops::relu_backward(&tr.pre, &d_act);
        let d_input =
            ops::linear_backward(w, &tr.input, &d_pre, buf.dense_mut(layout.nbr_w), None)?;
        ops::add_assign(buf.row_mut(layout.relation, tr.relation), &d_input[..d]);
        ops::add_assign(buf.row_mut(layout.entity, tr.entity), &d_input[d..]);
    }
    Ok(())
}

/// Bit pattern of the ReLU masks, for kink detection in gradient checks.
pub fn relu_pattern(enc: &EntityEncoding, mut eat: impl FnMut(bool)) {
    for tr in &enc.neighbors {
        tr.pre.iter().for_each(|&x| eat(x > 0.0));
    }
}
