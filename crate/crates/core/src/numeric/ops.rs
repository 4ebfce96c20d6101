//! Forward and backward passes for the handful of blocks the model is built
//! from. Backward functions accumulate into caller-owned gradient slices and
//! return the gradient with respect to the block input.

use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add_assign(y: &mut [f64], x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Element-wise mean of equal-length rows. Returns `None` for an empty set.
pub fn mean_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for row in rows {
        match acc.as_mut() {
            Some(a) => add_assign(a, row),
            None => acc = Some(row.to_vec()),
        }
        n += 1;
    }
    acc.map(|mut a| {
        let inv = 1.0 / n as f64;
        a.iter_mut().for_each(|x| *x *= inv);
        a
    })
}

fn check_linear(w: &Tensor, x: &[f64], b_len: Option<usize>) -> Result<()> {
    if !w.is_matrix() {
        return Err(Error::Dimension(format!(
            "linear weight must be a matrix, got shape {:?}",
            w.shape()
        )));
    }
    if w.cols() != x.len() {
        return Err(Error::Dimension(format!(
            "weight {:?} applied to input of length {}",
            w.shape(),
            x.len()
        )));
    }
    if let Some(bl) = b_len {
        if bl != w.rows() {
            return Err(Error::Dimension(format!(
                "bias of length {bl} for weight {:?}",
                w.shape()
            )));
        }
    }
    Ok(())
}

/// `y = W x (+ b)`
pub fn linear_forward(w: &Tensor, x: &[f64], b: Option<&[f64]>) -> Result<Vec<f64>> {
    check_linear(w, x, b.map(<[f64]>::len))?;
    let mut y: Vec<f64> = (0..w.rows()).map(|r| dot(w.row(r), x)).collect();
    if let Some(b) = b {
        add_assign(&mut y, b);
    }
    Ok(y)
}

/// Accumulates `dW += g xᵀ` and `db += g`; returns `Wᵀ g`.
pub fn linear_backward(
    w: &Tensor,
    x: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: Option<&mut [f64]>,
) -> Result<Vec<f64>> {
    check_linear(w, x, grad_b.as_ref().map(|b| b.len()))?;
    if grad_out.len() != w.rows() || grad_w.len() != w.len() {
        return Err(Error::Dimension(format!(
            "linear backward: weight {:?}, upstream {}, grad buffer {}",
            w.shape(),
            grad_out.len(),
            grad_w.len()
        )));
    }
    let cols = w.cols();
    let mut grad_x = vec![0.0; cols];
    for (r, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        axpy(g, x, &mut grad_w[r * cols..(r + 1) * cols]);
        axpy(g, w.row(r), &mut grad_x);
    }
    if let Some(gb) = grad_b {
        add_assign(gb, grad_out);
    }
    Ok(grad_x)
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(pre_activation: &[f64], grad_out: &[f64]) -> Vec<f64> {
    pre_activation
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative expressed through the forward output `s = sigmoid(x)`.
pub fn sigmoid_backward(s: f64, grad_out: f64) -> f64 {
    grad_out * s * (1.0 - s)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Jacobian-vector product of softmax given its output `s`:
/// `dlogits = s ⊙ (g − ⟨s, g⟩)`.
pub fn softmax_backward(s: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let inner = dot(s, grad_out);
    s.iter()
        .zip(grad_out)
        .map(|(&si, &gi)| si * (gi - inner))
        .collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `v / ‖v‖`, or the zero vector at `v = 0`.
pub fn l2_norm_backward(v: &[f64], norm: f64, grad_out: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    let scale = grad_out / norm;
    v.iter().map(|x| x * scale).collect()
}
