//! Repeated runs of one scenario under different seeds.

use rayon::prelude::*;
use serde::Serialize;

use crate::run::{run_estimation, RunOptions, RunSummary};
use crate::scenario::Scenario;
use crate::SimError;

/// Per-trial outcome kept in the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub status: String,
    pub completed_instants: usize,
    pub contained_instants: usize,
    pub final_attitude_error_rad: Option<f64>,
    pub final_omega_error_rad_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub scenario: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub trials: usize,
    pub failed_trials: usize,
    pub total_instants: usize,
    pub contained_instants: usize,
    /// Fraction of all completed measurement instants whose truth was contained.
    pub containment_rate: f64,
    pub min_trial_containment_rate: f64,
    pub max_final_attitude_error_rad: Option<f64>,
    pub outcomes: Vec<TrialOutcome>,
}

fn outcome(summary: &RunSummary) -> TrialOutcome {
    TrialOutcome {
        seed: summary.seed,
        status: summary.status.clone(),
        completed_instants: summary.completed_instants,
        contained_instants: (summary.containment_rate * summary.completed_instants as f64).round() as usize,
        final_attitude_error_rad: summary.final_attitude_error_rad,
        final_omega_error_rad_s: summary.final_omega_error_rad_s,
    }
}

/// Runs `trials` copies of `s` with seeds `s.seed + i` in parallel. The
/// aggregate is built in seed order, so it does not depend on scheduling.
pub fn run_trials(s: &Scenario, trials: usize) -> Result<MonteCarloSummary, SimError> {
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut trial = s.clone();
            trial.seed = s.seed.wrapping_add(i);
            run_estimation(&trial, &RunOptions::default()).map(|out| outcome(&out.summary))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let total_instants: usize = outcomes.iter().map(|o| o.completed_instants).sum();
    let contained_instants: usize = outcomes.iter().map(|o| o.contained_instants).sum();
    let rate = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(MonteCarloSummary {
        scenario: s.name.clone(),
        config_hash: s.config_hash.clone(),
        base_seed: s.seed,
        trials,
        failed_trials: outcomes.iter().filter(|o| o.status != "ok").count(),
        total_instants,
        contained_instants,
        containment_rate: rate(contained_instants, total_instants),
        min_trial_containment_rate: outcomes
            .iter()
            .map(|o| rate(o.contained_instants, o.completed_instants))
            .fold(1.0, f64::min),
        max_final_attitude_error_rad: outcomes.iter().filter_map(|o| o.final_attitude_error_rad).reduce(f64::max),
        outcomes,
    })
}
