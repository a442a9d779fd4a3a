//! Running the filter over a scenario's measurement schedule.

use std::time::Instant;

use ellipsoid_attitude_core::dynamics::{AttitudeState, Potential};
use ellipsoid_attitude_core::ellipsoid::StateEllipsoid;
use ellipsoid_attitude_core::filter::{
    convergence_check, flow_update, fuse, measurement_update, ConvergenceReport, FilterError, Stage,
};
use ellipsoid_attitude_core::{Error, Mat6};
use serde::Serialize;

use crate::scenario::Scenario;
use crate::simulate::{corrupt_measurements, simulate_truth};
use crate::SimError;

/// Factor by which posterior semi-axes are scaled when testing whether the
/// truth is contained; absorbs the first-order linearization error.
pub const INFLATION_FACTOR: f64 = 1.05;

/// One measurement instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// 1-based measurement instant.
    pub instant: usize,
    /// Integrator step index of the instant (`instant × l`).
    pub step: usize,
    pub time_s: f64,
    pub truth: AttitudeState,
    pub estimate: AttitudeState,
    pub p: Mat6,
    pub trace_p: f64,
    /// Trace of the flow-predicted uncertainty matrix.
    pub trace_p_flow: f64,
    /// Trace of the measurement uncertainty matrix.
    pub trace_p_measured: f64,
    pub attitude_error_rad: f64,
    pub omega_error_rad_s: f64,
    /// `(x − x̂)ᵀP⁻¹(x − x̂)` of the truth.
    pub quadratic_form: f64,
    pub contained: bool,
    pub report: ConvergenceReport,
    pub q_star: f64,
    /// Wall time of the fusion stage, only when timing is requested.
    pub fusion_wall_time_s: Option<f64>,
}

/// Whole-run statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub status: String,
    pub error: Option<String>,
    pub measurement_count: usize,
    pub completed_instants: usize,
    pub total_steps: usize,
    pub final_attitude_error_rad: Option<f64>,
    pub final_omega_error_rad_s: Option<f64>,
    pub initial_trace: f64,
    pub max_trace: Option<f64>,
    pub min_trace: Option<f64>,
    pub inflation_factor: f64,
    pub containment_rate: f64,
    pub contraction_satisfied_count: usize,
    pub finite_difference_gradient: bool,
}

/// Records, summary, and the error that stopped the run, if any.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
    pub failure: Option<FilterError>,
}

impl RunOutput {
    /// Converts a stopped run into an error for exit-code purposes.
    pub fn into_result(self) -> Result<Self, SimError> {
        match &self.failure {
            None => Ok(self),
            Some(e) => Err(SimError::Filter { instant: self.records.len() + 1, message: e.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Measure the fusion stage's wall time; this makes outputs non-reproducible.
    pub timing: bool,
}

/// Simulates the truth and runs one filter step (flow, measurement, fusion,
/// convergence check) per measurement instant.
///
/// A filter error ends the run; the records up to that point are kept.
pub fn run_estimation(s: &Scenario, options: &RunOptions) -> Result<RunOutput, SimError> {
    let truth = simulate_truth(s)?;
    let l = s.steps_between_measurements;
    let mut prior: StateEllipsoid = s.prior;
    let mut records = Vec::with_capacity(s.measurement_count);
    let mut failure = None;

    for instant in 1..=s.measurement_count {
        let step = instant * l;
        let true_state = truth[step];
        let bundle = corrupt_measurements(&true_state, s, instant)?;
        let step_result = (|| {
            let flow = flow_update(&prior, l, &s.inertia, &s.potential)?;
            let measured = measurement_update(&bundle).map_err(|e| FilterError::new(Stage::Measurement, e))?;
            let started = options.timing.then(Instant::now);
            let fused = fuse(&flow.predicted, &measured).map_err(|e| FilterError::new(Stage::Fusion, e))?;
            let elapsed = started.map(|t| t.elapsed().as_secs_f64());
            let (posterior, q_star) = fused;
            let q = s.convergence.q.unwrap_or(q_star);
            let report = convergence_check(&measured.p, &flow.predicted.p, &flow.a_f, q, s.convergence.c);
            Ok::<_, FilterError>((posterior, q_star, report, elapsed, flow.predicted.size(), measured.size()))
        })();
        let (posterior, q_star, report, elapsed, trace_p_flow, trace_p_measured) = match step_result {
            Ok(out) => out,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let quadratic_form = posterior.quadratic_form(&true_state);
        records.push(RunRecord {
            instant,
            step,
            time_s: step as f64 * s.inertia.h(),
            truth: true_state,
            estimate: posterior.center,
            p: *posterior.p.matrix(),
            trace_p: posterior.size(),
            trace_p_flow,
            trace_p_measured,
            attitude_error_rad: posterior.center.c.angle_to(&true_state.c),
            omega_error_rad_s: (posterior.center.omega - true_state.omega).norm(),
            quadratic_form,
            contained: quadratic_form <= INFLATION_FACTOR * INFLATION_FACTOR,
            report,
            q_star,
            fusion_wall_time_s: elapsed,
        });
        prior = posterior;
    }

    let summary = summarize(s, &records, failure.as_ref());
    Ok(RunOutput { records, summary, failure })
}

fn summarize(s: &Scenario, records: &[RunRecord], failure: Option<&FilterError>) -> RunSummary {
    let traces = records.iter().map(|r| r.trace_p);
    let contained = records.iter().filter(|r| r.contained).count();
    let status = match failure {
        None => "ok",
        Some(e) if e.source == Error::EmptyIntersection => "empty_intersection",
        Some(_) => "filter_error",
    };
    RunSummary {
        scenario: s.name.clone(),
        seed: s.seed,
        config_hash: s.config_hash.clone(),
        status: status.to_string(),
        error: failure.map(|e| e.to_string()),
        measurement_count: s.measurement_count,
        completed_instants: records.len(),
        total_steps: s.total_steps(),
        final_attitude_error_rad: records.last().map(|r| r.attitude_error_rad),
        final_omega_error_rad_s: records.last().map(|r| r.omega_error_rad_s),
        initial_trace: s.prior.size(),
        max_trace: traces.clone().reduce(f64::max),
        min_trace: traces.reduce(f64::min),
        inflation_factor: INFLATION_FACTOR,
        containment_rate: if records.is_empty() { 0.0 } else { contained as f64 / records.len() as f64 },
        contraction_satisfied_count: records.iter().filter(|r| r.report.satisfied).count(),
        finite_difference_gradient: s.potential.is_finite_difference(),
    }
}
