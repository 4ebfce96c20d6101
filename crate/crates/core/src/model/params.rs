use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{ops, GradBuffer, GroupId, ParamGroup, ParamStore, Tensor};

/// Group ids of a two-layer MLP `in → hidden (ReLU) → out`.
#[derive(Clone, Copy, Debug)]
pub struct MlpIds {
    pub w1: GroupId,
    pub b1: GroupId,
    pub w2: GroupId,
    pub b2: GroupId,
}

/// Where every model parameter lives in the store.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub entity: GroupId,
    pub relation: GroupId,
    pub nbr_w: GroupId,
    pub nbr_beta: GroupId,
    pub experts: Vec<MlpIds>,
    pub gate: MlpIds,
    /// Single relation learner used when the expert mixture is disabled.
    pub relation_mlp: MlpIds,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

fn xavier<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_matrix(rows, cols, uniform(rng, rows * cols, bound)).expect("shape")
}

fn add_mlp<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
) -> Result<MlpIds> {
    Ok(MlpIds {
        w1: store.add(ParamGroup::new(
            format!("{prefix}.w1"),
            xavier(rng, hidden, input),
        ))?,
        b1: store.add(ParamGroup::new(
            format!("{prefix}.b1"),
            Tensor::zeros_vector(hidden),
        ))?,
        w2: store.add(ParamGroup::new(
            format!("{prefix}.w2"),
            xavier(rng, output, hidden),
        ))?,
        b2: store.add(ParamGroup::new(
            format!("{prefix}.b2"),
            Tensor::zeros_vector(output),
        ))?,
    })
}

pub struct InitSpec<'a> {
    pub num_entities: usize,
    pub num_relations: usize,
    pub dim: usize,
    pub num_experts: usize,
    pub expert_hidden: usize,
    pub gate_hidden: usize,
    pub pretrained: Option<&'a [Vec<f64>]>,
    pub freeze_embeddings: bool,
}

pub fn init_params<R: Rng + ?Sized>(
    spec: &InitSpec,
    rng: &mut R,
) -> Result<(ParamStore, ParamLayout)> {
    let d = spec.dim;
    let mut store = ParamStore::new();
    let emb_bound = (6.0 / d as f64).sqrt();

    let entity_values = match spec.pretrained {
        Some(rows) => {
            if rows.len() != spec.num_entities || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!(
                    "pretrained embeddings must be {} × {d}",
                    spec.num_entities
                )));
            }
            rows.concat()
        }
        None => uniform(rng, spec.num_entities * d, emb_bound),
    };
    let mut entity = ParamGroup::new(
        "entity_embeddings",
        Tensor::from_matrix(spec.num_entities, d, entity_values)?,
    );
    entity.row_sparse = true;
    entity.trainable = !spec.freeze_embeddings;
    let mut relation = ParamGroup::new(
        "relation_embeddings",
        Tensor::from_matrix(
            spec.num_relations,
            d,
            uniform(rng, spec.num_relations * d, emb_bound),
        )?,
    );
    relation.row_sparse = true;
    relation.trainable = !spec.freeze_embeddings;
    let entity = store.add(entity)?;
    let relation = store.add(relation)?;

    let nbr_w = store.add(ParamGroup::new("neighbor.w", xavier(rng, d, 2 * d)))?;
    let beta_bound = (6.0 / (d + 1) as f64).sqrt();
    let nbr_beta = store.add(ParamGroup::new(
        "neighbor.beta",
        Tensor::from_vector(uniform(rng, d, beta_bound)),
    ))?;

    let experts = (0..spec.num_experts)
        .map(|i| {
            add_mlp(
                &mut store,
                rng,
                &format!("expert{i}"),
                2 * d,
                spec.expert_hidden,
                d,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let gate = add_mlp(
        &mut store,
        rng,
        "gate",
        2 * d,
        spec.gate_hidden,
        spec.num_experts,
    )?;
    let relation_mlp = add_mlp(
        &mut store,
        rng,
        "relation_mlp",
        2 * d,
        spec.expert_hidden,
        d,
    )?;

    Ok((
        store,
        ParamLayout {
            entity,
            relation,
            nbr_w,
            nbr_beta,
            experts,
            gate,
            relation_mlp,
        },
    ))
}

/// Intermediate values of one MLP evaluation.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub input: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn mlp_forward(store: &ParamStore, ids: &MlpIds, input: &[f64]) -> Result<MlpTrace> {
    let hidden_pre = ops::linear_forward(
        store.value(ids.w1),
        input,
        Some(store.value(ids.b1).as_slice()),
    )?;
    let hidden = ops::relu(&hidden_pre);
    let output = ops::linear_forward(
        store.value(ids.w2),
        &hidden,
        Some(store.value(ids.b2).as_slice()),
    )?;
    Ok(MlpTrace {
        input: input.to_vec(),
        hidden_pre,
        hidden,
        output,
    })
}

/// Accumulates parameter gradients into `buf`; returns the input gradient.
pub fn mlp_backward(
    store: &ParamStore,
    ids: &MlpIds,
    trace: &MlpTrace,
    grad_out: &[f64],
    buf: &mut GradBuffer,
) -> Result<Vec<f64>> {
    let (gw2, gb2) = buf.dense_pair_mut(ids.w2, ids.b2);
    let grad_hidden =
        ops::linear_backward(store.value(ids.w2), &trace.hidden, grad_out, gw2, Some(gb2))?;
    let grad_pre = ops::relu_backward(&trace.hidden_pre, &grad_hidden);
    let (gw1, gb1) = buf.dense_pair_mut(ids.w1, ids.b1);
    let grad_in =
        ops::linear_backward(store.value(ids.w1), &trace.input, &grad_pre, gw1, Some(gb1))?;
    Ok(grad_in)
}
