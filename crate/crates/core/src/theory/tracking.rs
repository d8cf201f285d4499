use serde::Serialize;

use crate::trainer::ExperimentRecord;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingReport {
    pub delta: f64,
    /// `(iteration, hypothesis held)` for every step with ε diagnostics and
    /// a nonzero true gradient.
    pub per_iteration: Vec<(usize, bool)>,
    /// Share of checked steps that satisfied the hypothesis; `None` when
    /// nothing was checked.
    pub fraction: Option<f64>,
}

/// Checks `ε K ≤ ‖∂L/∂θ_<h‖ (1−δ)/(1+δ)` per step, with the measured
/// back-propagated SG error standing in for `ε K`. A diagnostic only.
pub fn eps_tracking_check(records: &[ExperimentRecord], delta: f64) -> TrackingReport {
    let bound = (1.0 - delta) / (1.0 + delta);
    let per_iteration: Vec<(usize, bool)> = records
        .iter()
        .filter_map(|r| {
            let ratio = r.eps.as_ref()?.eps_ratio?;
            Some((r.iteration, ratio <= bound))
        })
        .collect();
    let held = per_iteration.iter().filter(|(_, ok)| *ok).count();
    TrackingReport {
        delta,
        fraction: (!per_iteration.is_empty()).then(|| held as f64 / per_iteration.len() as f64),
        per_iteration,
    }
}
