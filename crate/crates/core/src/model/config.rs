use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How task-local parameters are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EtaInit {
    /// Projections start at the identity.
    Zero,
    /// Independent `N(0, std²)` entries.
    Gaussian { std: f64 },
}

/// Which outer gradient is computed through the inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaGradient {
    /// Inner-loop updates are treated as constants.
    FirstOrder,
    /// Exact gradient, differentiating through every inner step.
    SecondOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_experts: usize,
    pub top_n: usize,
    pub expert_hidden: usize,
    pub gate_hidden: usize,
    pub neighbor_cap: usize,
    pub margin: f64,
    pub inner_lr: f64,
    pub inner_steps: usize,
    /// Inner steps at evaluation time; `None` reuses `inner_steps`.
    pub test_inner_steps: Option<usize>,
    pub negatives_per_positive: usize,
    pub eta_init: EtaInit,
    pub meta_gradient: MetaGradient,
    pub freeze_embeddings: bool,
    pub use_neighbor_agg: bool,
    pub use_moe: bool,
    pub use_local_adapt: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 100,
            num_experts: 32,
            top_n: 5,
            expert_hidden: 64,
            gate_hidden: 64,
            neighbor_cap: 50,
            margin: 1.0,
            inner_lr: 0.001,
            inner_steps: 1,
            test_inner_steps: None,
            negatives_per_positive: 1,
            eta_init: EtaInit::Zero,
            meta_gradient: MetaGradient::FirstOrder,
            freeze_embeddings: false,
            use_neighbor_agg: true,
            use_moe: true,
            use_local_adapt: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.embed_dim == 0 {
            return fail("embed_dim must be at least 1");
        }
        if self.top_n == 0 || self.top_n > self.num_experts {
            return fail("top_n must satisfy 1 <= top_n <= num_experts");
        }
        if self.expert_hidden == 0 || self.gate_hidden == 0 {
            return fail("hidden widths must be positive");
        }
        if self.neighbor_cap == 0 {
            return fail("neighbor_cap must be at least 1");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail("margin must be positive");
        }
        if self.inner_steps == 0 || self.test_inner_steps == Some(0) {
            return fail("inner_steps must be at least 1");
        }
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return fail("inner_lr must be finite and non-negative");
        }
        if self.negatives_per_positive == 0 {
            return fail("negatives_per_positive must be at least 1");
        }
        if let EtaInit::Gaussian { std } = self.eta_init {
            if !(std >= 0.0 && std.is_finite()) {
                return fail("eta_init std must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn eval_inner_steps(&self) -> usize {
        self.test_inner_steps.unwrap_or(self.inner_steps)
    }
}
