//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::ParameterStore;

/// Gradients smaller than this are compared on an absolute scale: the
/// relative error denominator is `max(|analytic|, |numeric|, REL_ERROR_FLOOR)`.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    /// Entries above tolerance, in check order.
    pub failures: Vec<GradCheckEntry>,
    /// Up to ten largest relative errors, descending.
    pub worst: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every entry of every parameter.
///
/// `params` must already hold the analytic gradients in its accumulators;
/// `loss_fn` is evaluated at `θ ± step` for each entry.
pub fn finite_diff_check<F>(loss_fn: F, params: &ParameterStore<f64>, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore<f64>) -> Result<f64>,
{
    let all: Vec<(usize, usize)> = (0..params.len())
        .flat_map(|p| (0..params.value(p).len()).map(move |i| (p, i)))
        .collect();
    run(loss_fn, params, step, tolerance, &all)
}

/// Like [`finite_diff_check`] but on a deterministic subsample of at most
/// `max_entries` entries (every parameter contributes at least one).
pub fn finite_diff_check_sampled<F>(
    loss_fn: F,
    params: &ParameterStore<f64>,
    step: f64,
    tolerance: f64,
    max_entries: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore<f64>) -> Result<f64>,
{
    let total = params.num_scalars();
    if total <= max_entries {
        return finite_diff_check(loss_fn, params, step, tolerance);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = (0..params.len())
        .map(|p| (p, rng.gen_range(0..params.value(p).len())))
        .collect();
    let mut starts = Vec::with_capacity(params.len());
    let mut acc = 0;
    for p in 0..params.len() {
        starts.push(acc);
        acc += params.value(p).len();
    }
    let extra = max_entries.saturating_sub(picks.len());
    for flat in sample(&mut rng, total, extra.min(total)).into_iter() {
        let p = starts.partition_point(|&s| s <= flat) - 1;
        picks.push((p, flat - starts[p]));
    }
    picks.sort_unstable();
    picks.dedup();
    run(loss_fn, params, step, tolerance, &picks)
}

fn run<F>(
    mut loss_fn: F,
    params: &ParameterStore<f64>,
    step: f64,
    tolerance: f64,
    entries: &[(usize, usize)],
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore<f64>) -> Result<f64>,
{
    let mut work = params.clone();
    let mut checked = Vec::with_capacity(entries.len());
    for &(p, i) in entries {
        let orig = work.value(p).data()[i];
        work.value_mut(p).data_mut()[i] = orig + step;
        let plus = loss_fn(&work)?;
        work.value_mut(p).data_mut()[i] = orig - step;
        let minus = loss_fn(&work)?;
        work.value_mut(p).data_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        let analytic = params.grad(p).data()[i];
        let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        checked.push(GradCheckEntry {
            param: params.name(p).to_string(),
            index: i,
            analytic,
            numeric,
            rel_error: (analytic - numeric).abs() / denom,
        });
    }
    let failures: Vec<_> = checked
        .iter()
        .filter(|e| !(e.rel_error <= tolerance))
        .cloned()
        .collect();
    let mut worst = checked.clone();
    worst.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    worst.truncate(10);
    Ok(GradCheckReport {
        checked: checked.len(),
        tolerance,
        max_rel_error: worst.first().map_or(0.0, |e| e.rel_error),
        failures,
        worst,
    })
}
