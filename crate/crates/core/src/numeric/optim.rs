use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamStore, Tensor};

/// Adam with bias correction. Moments are allocated lazily on the first step
/// so the state can be built before the store is final.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    fn ensure_moments(&mut self, store: &ParamStore) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = store
                .groups()
                .iter()
                .map(|g| Tensor::zeros_like(&g.value))
                .collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != store.len()
            || self
                .first_moment
                .iter()
                .zip(store.groups())
                .any(|(m, g)| !m.same_shape(&g.value))
        {
            return Err(Error::Checkpoint(
                "optimizer moments do not match the parameter store".into(),
            ));
        }
        Ok(())
    }
}

/// One Adam update over every trainable group. Gradients are left in place.
///
/// Groups whose gradient is entirely zero are skipped, and row-sparse groups
/// only update rows that received gradient, so parameters disconnected from
/// the loss never drift.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    for g in store.groups() {
        if g.trainable && !g.grad.is_finite() {
            return Err(Error::NonFiniteGradient {
                group: g.name.clone(),
            });
        }
    }
    state.ensure_moments(store)?;
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - state.beta1.powf(t);
    let c2 = 1.0 - state.beta2.powf(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);

    for (i, g) in store.groups_mut().iter_mut().enumerate() {
        if !g.trainable || g.grad.as_slice().iter().all(|&x| x == 0.0) {
            continue;
        }
        let cols = g.value.cols();
        let m = state.first_moment[i].as_mut_slice();
        let v = state.second_moment[i].as_mut_slice();
        let value = g.value.as_mut_slice();
        let grad = g.grad.as_slice();
        let mut update = |j: usize| {
            let gj = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        if g.row_sparse {
            for r in 0..grad.len() / cols.max(1) {
                let span = r * cols..(r + 1) * cols;
                if grad[span.clone()].iter().any(|&x| x != 0.0) {
                    span.for_each(&mut update);
                }
            }
        } else {
            (0..grad.len()).for_each(update);
        }
    }
    Ok(())
}

/// `value -= lr * grad`
pub fn gradient_step(value: &mut [f64], grad: &[f64], lr: f64) {
    for (v, g) in value.iter_mut().zip(grad) {
        *v -= lr * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParamGroup;
    use crate::Error;

    fn single(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add(ParamGroup::new("theta", Tensor::from_vector(values)))
            .unwrap();
        s
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = single(vec![1.0, -2.0, 0.5]);
        s.groups_mut()[0]
            .grad
            .as_mut_slice()
            .copy_from_slice(&[0.3, -4.0, 0.0]);
        let mut st = AdamState::new(0.001);
        adam_step(&mut s, &mut st).unwrap();
        // m̂ = g, v̂ = g², update = lr·g/(|g|+ε)
        let v = s.groups()[0].value.as_slice();
        let expect = |x0: f64, g: f64| x0 - 0.001 * g / (g.abs() + 1e-8);
        assert!((v[0] - expect(1.0, 0.3)).abs() < 1e-15);
        assert!((v[1] - expect(-2.0, -4.0)).abs() < 1e-15);
        assert_eq!(v[2], 0.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_grad_means_no_change() {
        let mut s = single(vec![1.0, 2.0]);
        let before = s.checksum();
        let mut st = AdamState::new(0.1);
        s.zero_grads();
        adam_step(&mut s, &mut st).unwrap();
        assert_eq!(before, s.checksum());
    }

    #[test]
    fn non_finite_gradient_names_group() {
        let mut s = single(vec![1.0]);
        s.groups_mut()[0].grad.as_mut_slice()[0] = f64::NAN;
        let err = adam_step(&mut s, &mut AdamState::new(0.1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref group } if group == "theta"));
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(θ) = Σ aᵢ (θᵢ − cᵢ)², minimum at c
        let a = [1.0, 3.0, 0.5];
        let c = [0.4, -0.3, 0.1];
        let mut s = single(vec![0.5, -0.2, 0.0]);
        let mut st = AdamState::new(0.01);
        for _ in 0..100 {
            let theta = s.groups()[0].value.as_slice().to_vec();
            let g: Vec<f64> = (0..3).map(|i| 2.0 * a[i] * (theta[i] - c[i])).collect();
            s.groups_mut()[0].grad.as_mut_slice().copy_from_slice(&g);
            adam_step(&mut s, &mut st).unwrap();
        }
        let theta = s.groups()[0].value.as_slice();
        for i in 0..3 {
            assert!((theta[i] - c[i]).abs() < 1e-3, "{theta:?}");
        }
    }

    #[test]
    fn sparse_rows_untouched() {
        let mut s = ParamStore::new();
        let mut g = ParamGroup::new("emb", Tensor::from_matrix(2, 2, vec![1.0; 4]).unwrap());
        g.row_sparse = true;
        s.add(g).unwrap();
        s.groups_mut()[0].grad.as_mut_slice()[0] = 1.0;
        adam_step(&mut s, &mut AdamState::new(0.1)).unwrap();
        let v = s.groups()[0].value.as_slice();
        assert!(v[0] < 1.0);
        assert_eq!(&v[2..], &[1.0, 1.0]);
    }
}
