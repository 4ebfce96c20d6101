//! Task-local projections, the translational score, and the margin loss.
//!
//! With task parameters `η = (p_h, p_r, p_t)` and relation-meta `R`:
//! `h' = h + (p_hᵀR)R`, `R' = R + (p_rᵀR)R`, `t' = t + (p_tᵀR)R`, and
//! `score = ‖h' + R' − t'‖₂`. Writing `q = p_h + p_r − p_t`, the residual is
//! `v = h − t + (1 + qᵀR)R`, which is what the gradient formulas use.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::EtaInit;
use crate::numeric::ops;

/// Task-local projection vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub p_h: Vec<f64>,
    pub p_r: Vec<f64>,
    pub p_t: Vec<f64>,
}

impl Eta {
    pub fn zeros(dim: usize) -> Self {
        Eta {
            p_h: vec![0.0; dim],
            p_r: vec![0.0; dim],
            p_t: vec![0.0; dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(init: EtaInit, dim: usize, rng: &mut R) -> Self {
        match init {
            EtaInit::Zero => Self::zeros(dim),
            EtaInit::Gaussian { std } => {
                let normal = Normal::new(0.0, std).expect("validated std");
                let mut draw = || (0..dim).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
                Eta {
                    p_h: draw(),
                    p_r: draw(),
                    p_t: draw(),
                }
            }
        }
    }

    /// `p_h + p_r − p_t`
    pub fn combined(&self) -> Vec<f64> {
        self.p_h
            .iter()
            .zip(&self.p_r)
            .zip(&self.p_t)
            .map(|((h, r), t)| h + r - t)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.p_h
            .iter()
            .chain(&self.p_r)
            .chain(&self.p_t)
            .all(|x| x.is_finite())
    }
}

/// Task-local state: projections plus the (possibly updated) relation-meta.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptState {
    pub eta: Eta,
    pub relation: Vec<f64>,
    pub steps: usize,
}

/// Projected `(h', R', t')`.
pub fn project(
    eta: &Eta,
    head: &[f64],
    relation: &[f64],
    tail: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let shift = |p: &[f64], base: &[f64]| {
        let a = ops::dot(p, relation);
        base.iter()
            .zip(relation)
            .map(|(b, r)| b + a * r)
            .collect::<Vec<f64>>()
    };
    (
        shift(&eta.p_h, head),
        shift(&eta.p_r, relation),
        shift(&eta.p_t, tail),
    )
}

/// `‖h' + R' − t'‖₂`
pub fn score(head: &[f64], relation: &[f64], tail: &[f64]) -> f64 {
    ops::l2_norm(&residual(head, relation, tail))
}

fn residual(head: &[f64], relation: &[f64], tail: &[f64]) -> Vec<f64> {
    head.iter()
        .zip(relation)
        .zip(tail)
        .map(|((h, r), t)| h + r - t)
        .collect()
}

/// One scored pair with what its gradients need.
#[derive(Clone, Debug)]
pub struct ScoreTrace {
    pub value: f64,
    /// Unit residual `v/‖v‖` (zero at the kink).
    pub unit: Vec<f64>,
    pub norm: f64,
}

pub fn score_traced(eta: Option<&Eta>, head: &[f64], relation: &[f64], tail: &[f64]) -> ScoreTrace {
    let v = match eta {
        Some(eta) => {
            let (h, r, t) = project(eta, head, relation, tail);
            residual(&h, &r, &t)
        }
        None => residual(head, relation, tail),
    };
    let norm = ops::l2_norm(&v);
    let unit = ops::l2_norm_backward(&v, norm, 1.0);
    ScoreTrace {
        value: norm,
        unit,
        norm,
    }
}

/// First derivatives of one score.
#[derive(Clone, Debug)]
pub struct ScoreGrads {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
    pub relation: Vec<f64>,
    /// `∂s/∂q`; equals `∂s/∂p_h = ∂s/∂p_r = −∂s/∂p_t`.
    pub q: Vec<f64>,
}

/// `q` and `qᵀR` for the score formulas; `None` means no projection.
pub fn alignment(q: Option<&[f64]>, relation: &[f64]) -> f64 {
    q.map_or(0.0, |q| ops::dot(q, relation))
}

pub fn score_grads(trace: &ScoreTrace, q: Option<&[f64]>, relation: &[f64]) -> ScoreGrads {
    let u = &trace.unit;
    let a = alignment(q, relation);
    let b = ops::dot(u, relation);
    let mut grad_r: Vec<f64> = u.iter().map(|x| (1.0 + a) * x).collect();
    if let Some(q) = q {
        ops::axpy(b, q, &mut grad_r);
    }
    ScoreGrads {
        head: u.clone(),
        tail: u.iter().map(|x| -x).collect(),
        relation: grad_r,
        q: relation.iter().map(|r| b * r).collect(),
    }
}

/// Vector-Jacobian product through the first derivatives of one score.
///
/// Given cotangents `c_q` on `∂s/∂q` and `c_R` on `∂s/∂R`, returns the
/// gradient of `c_qᵀ ∂s/∂q + c_Rᵀ ∂s/∂R` with respect to `(h, t, R, q)`.
pub fn score_grads_vjp(
    trace: &ScoreTrace,
    q: &[f64],
    relation: &[f64],
    c_q: &[f64],
    c_r: &[f64],
) -> ScoreGrads {
    let d = relation.len();
    if trace.norm == 0.0 {
        let z = vec![0.0; d];
        return ScoreGrads {
            head: z.clone(),
            tail: z.clone(),
            relation: z.clone(),
            q: z,
        };
    }
    let u = &trace.unit;
    let n = trace.norm;
    let a = ops::dot(q, relation);
    let b = ops::dot(u, relation);
    let lambda = ops::dot(c_q, relation) + ops::dot(c_r, q);
    let cr_u = ops::dot(c_r, u);
    // w = λR + (1+a)c_R, z = (I − uuᵀ)w / n
    let w: Vec<f64> = relation
        .iter()
        .zip(c_r)
        .map(|(r, c)| lambda * r + (1.0 + a) * c)
        .collect();
    let uw = ops::dot(u, &w);
    let z: Vec<f64> = w.iter().zip(u).map(|(wi, ui)| (wi - ui * uw) / n).collect();
    let zr = ops::dot(&z, relation);

    let mut grad_r: Vec<f64> = z.iter().map(|x| (1.0 + a) * x).collect();
    ops::axpy(zr + cr_u, q, &mut grad_r);
    ops::axpy(lambda, u, &mut grad_r);
    ops::axpy(b, c_q, &mut grad_r);

    let mut grad_q: Vec<f64> = relation.iter().map(|r| (zr + cr_u) * r).collect();
    ops::axpy(b, c_r, &mut grad_q);

    ScoreGrads {
        head: z.clone(),
        tail: z.iter().map(|x| -x).collect(),
        relation: grad_r,
        q: grad_q,
    }
}

/// `Σ max(0, pos + γ − neg)` over paired scores.
pub fn margin_loss(pos: &[f64], neg: &[f64], margin: f64) -> Result<f64> {
    if pos.len() != neg.len() {
        return Err(Error::Dimension(format!(
            "{} positive scores paired with {} negative scores",
            pos.len(),
            neg.len()
        )));
    }
    Ok(pos
        .iter()
        .zip(neg)
        .map(|(p, n)| (p + margin - n).max(0.0))
        .sum())
}
