//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tolerance: f64,
    /// Upper bound on coordinates checked per group; `None` checks all.
    pub max_coords_per_group: Option<usize>,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is zero are compared absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tolerance: 1e-4,
            max_coords_per_group: None,
            abs_floor: 1e-5,
            seed: 0,
        }
    }
}

/// One closure evaluation. `signature` fingerprints every discrete choice the
/// loss made (ReLU masks, hinge activity, expert selection); a perturbation
/// that changes it crossed a kink and is excluded from the comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub signature: u64,
}

impl From<f64> for Evaluation {
    fn from(loss: f64) -> Self {
        Evaluation { loss, signature: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients currently stored in `store` against central
/// differences of `closure`. Values are perturbed in place and restored.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut closure: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<Evaluation>,
{
    let base = closure(store)?;
    let again = closure(store)?;
    if base.loss.to_bits() != again.loss.to_bits() || base.signature != again.signature {
        return Err(Error::NonDeterministic {
            first: base.loss,
            second: again.loss,
        });
    }
    if !base.loss.is_finite() {
        return Err(Error::NonFinite("baseline loss".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut groups = Vec::new();
    for id in store.ids().collect::<Vec<_>>() {
        if !store.group(id).trainable {
            continue;
        }
        let n = store.group(id).value.len();
        let coords: Vec<usize> = match opts.max_coords_per_group {
            Some(cap) if cap < n => {
                let mut c = sample(&mut rng, n, cap).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut report = GroupReport {
            name: store.group(id).name.clone(),
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
            worst_index: None,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for j in coords {
            let original = store.group(id).value.as_slice()[j];
            store.group_mut(id).value.as_mut_slice()[j] = original + opts.h;
            let plus = closure(store);
            store.group_mut(id).value.as_mut_slice()[j] = original - opts.h;
            let minus = closure(store);
            store.group_mut(id).value.as_mut_slice()[j] = original;
            let (plus, minus) = (plus?, minus?);
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * opts.h);
            let analytic = store.group(id).grad.as_slice()[j];
            let err = relative_error(analytic, numeric, opts.abs_floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_index.is_none() {
                report.max_rel_error = err;
                report.worst_index = Some(j);
                report.analytic_at_worst = analytic;
                report.numeric_at_worst = numeric;
            }
        }
        groups.push(report);
    }
    let passed = groups.iter().all(|g| g.max_rel_error <= opts.tolerance);
    Ok(GradCheckReport {
        groups,
        tolerance: opts.tolerance,
        passed,
    })
}
