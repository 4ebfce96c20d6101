//! Sparsely gated mixture of relation experts.
//!
//! For an encoded pair `x = h ⊕ t`: `s = softmax(Gate(x))`, keep the `N`
//! largest entries of `s` (ties to the lower expert index), and
//! `r = (1/N) Σ_{i selected} sᵢ · MLPᵢ(x)`.

use crate::error::Result;
use crate::model::params::{mlp_backward, mlp_forward, MlpTrace, ParamLayout};
use crate::numeric::{ops, GradBuffer, ParamStore};

#[derive(Clone, Debug)]
pub enum PairTrace {
    Moe {
        gate: MlpTrace,
        probs: Vec<f64>,
        /// Selected experts in descending score order.
        selected: Vec<usize>,
        experts: Vec<MlpTrace>,
        output: Vec<f64>,
    },
    Single {
        mlp: MlpTrace,
    },
}

impl PairTrace {
    pub fn output(&self) -> &[f64] {
        match self {
            PairTrace::Moe { output, .. } => output,
            PairTrace::Single { mlp } => &mlp.output,
        }
    }

    /// Sparse gate row over all experts (empty for the single-MLP learner).
    pub fn gate_row(&self, num_experts: usize) -> Vec<f64> {
        match self {
            PairTrace::Moe {
                probs, selected, ..
            } => {
                let mut row = vec![0.0; num_experts];
                for &i in selected {
                    row[i] = probs[i];
                }
                row
            }
            PairTrace::Single { .. } => Vec::new(),
        }
    }
}

/// Indices of the `n` largest scores; equal scores go to the lower index.
pub fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

pub fn moe_forward(
    store: &ParamStore,
    layout: &ParamLayout,
    head: &[f64],
    tail: &[f64],
    top: usize,
) -> Result<PairTrace> {
    let x = ops::concat(head, tail);
    let gate = mlp_forward(store, &layout.gate, &x)?;
    let probs = ops::softmax(&gate.output);
    let selected = top_n(&probs, top);
    let scale = 1.0 / top as f64;
    let mut output = vec![0.0; head.len()];
    let mut experts = Vec::with_capacity(top);
    for &i in &selected {
        let tr = mlp_forward(store, &layout.experts[i], &x)?;
        ops::axpy(probs[i] * scale, &tr.output, &mut output);
        experts.push(tr);
    }
    Ok(PairTrace::Moe {
        gate,
        probs,
        selected,
        experts,
        output,
    })
}

pub fn single_forward(
    store: &ParamStore,
    layout: &ParamLayout,
    head: &[f64],
    tail: &[f64],
) -> Result<PairTrace> {
    let x = ops::concat(head, tail);
    Ok(PairTrace::Single {
        mlp: mlp_forward(store, &layout.relation_mlp, &x)?,
    })
}

/// Backpropagates `∂L/∂r` with the expert selection held fixed. Returns the
/// gradients for the head and tail encodings.
pub fn pair_backward(
    store: &ParamStore,
    layout: &ParamLayout,
    trace: &PairTrace,
    grad_out: &[f64],
    buf: &mut GradBuffer,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grad_x = match trace {
        PairTrace::Single { mlp } => mlp_backward(store, &layout.relation_mlp, mlp, grad_out, buf)?,
        PairTrace::Moe {
            gate,
            probs,
            selected,
            experts,
            ..
        } => {
            let scale = 1.0 / selected.len() as f64;
            let mut grad_x = vec![0.0; gate.input.len()];
            let mut grad_probs = vec![0.0; probs.len()];
            for (&i, tr) in selected.iter().zip(experts) {
                grad_probs[i] = scale * ops::dot(&tr.output, grad_out);
                let up: Vec<f64> = grad_out.iter().map(|g| g * probs[i] * scale).collect();
                let gx = mlp_backward(store, &layout.experts[i], tr, &up, buf)?;
                ops::add_assign(&mut grad_x, &gx);
            }
            let grad_logits = ops::softmax_backward(probs, &grad_probs);
            let gx = mlp_backward(store, &layout.gate, gate, &grad_logits, buf)?;
            ops::add_assign(&mut grad_x, &gx);
            grad_x
        }
    };
    let d = grad_x.len() / 2;
    Ok((grad_x[..d].to_vec(), grad_x[d..].to_vec()))
}

pub fn pair_pattern(trace: &PairTrace, mut eat: impl FnMut(bool)) {
    let mlp =
        |t: &MlpTrace, eat: &mut dyn FnMut(bool)| t.hidden_pre.iter().for_each(|&x| eat(x > 0.0));
    match trace {
        PairTrace::Single { mlp: m } => mlp(m, &mut eat),
        PairTrace::Moe {
            gate,
            selected,
            experts,
            probs,
            ..
        } => {
            mlp(gate, &mut eat);
            for i in 0..probs.len() {
                eat(selected.contains(&i));
            }
            experts.iter().for_each(|t| mlp(t, &mut eat));
        }
    }
}
