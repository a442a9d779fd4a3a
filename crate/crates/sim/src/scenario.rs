//! Scenario files: a JSON document with unit-suffixed keys, validated on load.
//!
//! ```json
//! {
//!   "h_seconds": 0.01,
//!   "J_kg_m2": [[1, 0, 0], [0, 2.8, 0], [0, 0, 2]],
//!   "potential": { "type": "pendulum", "mass_kg": 1, "gravity_m_s2": 9.81, "rho_m": [0, 0, 0.3] },
//!   "reference_directions": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
//!   "weights": [1, 1, 1],
//!   "true_initial": { "attitude_rotvec_rad": [0.3, -0.2, 0.5], "omega_rad_s": [0.4, -0.3, 0.6] },
//!   "estimate_initial": { "attitude_rotvec_rad": [...], "omega_rad_s": [...], "P0": [[...6 rows...]] },
//!   "direction_bounds_rad2": [[[...3 rows...]], ...],
//!   "omega_bound_rad2_s2": [[...3 rows...]],
//!   "steps_between_measurements": 10,
//!   "measurement_count": 100,
//!   "seed": 42
//! }
//! ```
//!
//! Optional keys: `name`, `weights` (default all 1), `noise_mode`
//! (`"interior"` or `"boundary"`, default interior), `convergence_c` (default
//! 0.99), `convergence_q` (default: the fusion weight q*), and
//! `bound_decay_per_instant` (default 1; the measurement bounds at instant k
//! are the stated bounds times decayᵏ⁻¹).

use std::path::Path;

use ellipsoid_attitude_core::dynamics::{
    AttitudeState, InertiaParams, PendulumPotential, Potential, ZeroPotential,
};
use ellipsoid_attitude_core::ellipsoid::StateEllipsoid;
use ellipsoid_attitude_core::filter::{ConvergenceSettings, DEFAULT_CONTRACTION};
use ellipsoid_attitude_core::linalg::Spd3;
use ellipsoid_attitude_core::so3::exp_so3;
use ellipsoid_attitude_core::wahba::DirectionSet;
use ellipsoid_attitude_core::{Mat3, Mat6, SpdMatrix, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::SimError;

/// How measurement errors are drawn from their bound ellipsoids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Uniform in the ellipsoid.
    #[default]
    Interior,
    /// Uniform on the boundary (worst-case magnitude).
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialFile {
    Zero,
    Pendulum { mass_kg: f64, gravity_m_s2: f64, rho_m: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueInitialFile {
    pub attitude_rotvec_rad: [f64; 3],
    pub omega_rad_s: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateInitialFile {
    pub attitude_rotvec_rad: [f64; 3],
    pub omega_rad_s: [f64; 3],
    #[serde(rename = "P0")]
    pub p0: [[f64; 6]; 6],
}

fn default_contraction() -> f64 {
    DEFAULT_CONTRACTION
}

fn default_decay() -> f64 {
    1.0
}

/// The scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub h_seconds: f64,
    #[serde(rename = "J_kg_m2")]
    pub j_kg_m2: [[f64; 3]; 3],
    pub potential: PotentialFile,
    pub reference_directions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub true_initial: TrueInitialFile,
    pub estimate_initial: EstimateInitialFile,
    pub direction_bounds_rad2: Vec<[[f64; 3]; 3]>,
    pub omega_bound_rad2_s2: [[f64; 3]; 3],
    pub steps_between_measurements: usize,
    pub measurement_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default = "default_contraction")]
    pub convergence_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_q: Option<f64>,
    #[serde(default = "default_decay")]
    pub bound_decay_per_instant: f64,
}

/// The potentials a scenario can name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialModel {
    Zero(ZeroPotential),
    Pendulum(PendulumPotential),
}

impl Potential for PotentialModel {
    fn potential(&self, c: &Mat3) -> f64 {
        match self {
            PotentialModel::Zero(p) => p.potential(c),
            PotentialModel::Pendulum(p) => p.potential(c),
        }
    }

    fn gradient(&self, c: &Mat3) -> Mat3 {
        match self {
            PotentialModel::Zero(p) => p.gradient(c),
            PotentialModel::Pendulum(p) => p.gradient(c),
        }
    }

    fn is_finite_difference(&self) -> bool {
        match self {
            PotentialModel::Zero(p) => p.is_finite_difference(),
            PotentialModel::Pendulum(p) => p.is_finite_difference(),
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub inertia: InertiaParams,
    pub potential: PotentialModel,
    pub dirs: DirectionSet,
    pub truth0: AttitudeState,
    pub prior: StateEllipsoid,
    pub direction_bounds: Vec<Spd3>,
    pub omega_bound: Spd3,
    pub steps_between_measurements: usize,
    pub measurement_count: usize,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub convergence: ConvergenceSettings,
    pub bound_decay_per_instant: f64,
    /// SHA-256 of the canonical JSON of the effective scenario document.
    pub config_hash: String,
    file: ScenarioFile,
}

fn invalid(field: &str, message: impl Into<String>) -> SimError {
    SimError::Invalid { field: field.to_string(), message: message.into() }
}

fn mat3(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn spd3(field: &str, rows: &[[f64; 3]; 3]) -> Result<Spd3, SimError> {
    SpdMatrix::new(mat3(rows)).map_err(|e| invalid(field, e.to_string()))
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Validation(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents always serialize")
    }

    /// Checks every invariant and builds the runtime scenario.
    pub fn validate(&self) -> Result<Scenario, SimError> {
        let inertia = InertiaParams::new(mat3(&self.j_kg_m2), self.h_seconds).map_err(|e| {
            let field = if self.h_seconds > 0.0 { "J_kg_m2" } else { "h_seconds" };
            invalid(field, e.to_string())
        })?;
        let potential = match &self.potential {
            PotentialFile::Zero => PotentialModel::Zero(ZeroPotential),
            PotentialFile::Pendulum { mass_kg, gravity_m_s2, rho_m } => PotentialModel::Pendulum(
                PendulumPotential::new(*mass_kg, *gravity_m_s2, Vec3::from(*rho_m))
                    .map_err(|e| invalid("potential", e.to_string()))?,
            ),
        };

        let directions: Vec<Vec3> = self.reference_directions.iter().map(|d| Vec3::from(*d)).collect();
        let weights = self.weights.clone().unwrap_or_else(|| vec![1.0; directions.len()]);
        let dirs = DirectionSet::new(directions, weights).map_err(|e| invalid("reference_directions", e.to_string()))?;

        if self.direction_bounds_rad2.len() != dirs.len() {
            return Err(invalid(
                "direction_bounds_rad2",
                format!("expected {} bounds (one per direction), found {}", dirs.len(), self.direction_bounds_rad2.len()),
            ));
        }
        let direction_bounds = self
            .direction_bounds_rad2
            .iter()
            .map(|s| spd3("direction_bounds_rad2", s))
            .collect::<Result<Vec<_>, _>>()?;
        let omega_bound = spd3("omega_bound_rad2_s2", &self.omega_bound_rad2_s2)?;

        let p0 = SpdMatrix::new(Mat6::from_fn(|i, j| self.estimate_initial.p0[i][j]))
            .map_err(|e| invalid("P0", e.to_string()))?;
        let finite = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        if !finite(&self.true_initial.attitude_rotvec_rad) || !finite(&self.true_initial.omega_rad_s) {
            return Err(invalid("true_initial", "non-finite entries"));
        }
        if !finite(&self.estimate_initial.attitude_rotvec_rad) || !finite(&self.estimate_initial.omega_rad_s) {
            return Err(invalid("estimate_initial", "non-finite entries"));
        }
        let truth0 = AttitudeState::new(
            exp_so3(&Vec3::from(self.true_initial.attitude_rotvec_rad)),
            Vec3::from(self.true_initial.omega_rad_s),
        );
        let prior = StateEllipsoid::new(
            AttitudeState::new(
                exp_so3(&Vec3::from(self.estimate_initial.attitude_rotvec_rad)),
                Vec3::from(self.estimate_initial.omega_rad_s),
            ),
            p0,
        );
        let form = prior.quadratic_form(&truth0);
        if form.is_nan() || form > 1.0 {
            return Err(invalid(
                "true_initial",
                format!(
                    "the true initial state must lie in the initial uncertainty ellipsoid E(estimate, P0); \
                     its quadratic form is {form:e} > 1"
                ),
            ));
        }

        if self.steps_between_measurements == 0 {
            return Err(invalid("steps_between_measurements", "must be at least 1"));
        }
        if self.measurement_count == 0 {
            return Err(invalid("measurement_count", "must be at least 1"));
        }
        if !(self.convergence_c > 0.0 && self.convergence_c < 1.0) {
            return Err(invalid("convergence_c", "must lie in (0, 1)"));
        }
        if let Some(q) = self.convergence_q {
            if !(q > 0.0 && q.is_finite()) {
                return Err(invalid("convergence_q", "must be positive and finite"));
            }
        }
        if !(self.bound_decay_per_instant > 0.0 && self.bound_decay_per_instant <= 1.0) {
            return Err(invalid("bound_decay_per_instant", "must lie in (0, 1]"));
        }

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_string()),
            inertia,
            potential,
            dirs,
            truth0,
            prior,
            direction_bounds,
            omega_bound,
            steps_between_measurements: self.steps_between_measurements,
            measurement_count: self.measurement_count,
            seed: self.seed,
            noise_mode: self.noise_mode,
            convergence: ConvergenceSettings { c: self.convergence_c, q: self.convergence_q },
            bound_decay_per_instant: self.bound_decay_per_instant,
            config_hash: config_hash(self),
            file: self.clone(),
        })
    }
}

fn config_hash(file: &ScenarioFile) -> String {
    let canonical = serde_json::to_vec(file).expect("scenario documents always serialize");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub noise_mode: Option<NoiseMode>,
    pub q: Option<f64>,
    pub c: Option<f64>,
}

impl Scenario {
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, SimError> {
        ScenarioFile::load(path)?.with_overrides(overrides).validate()
    }

    /// The effective scenario document (after overrides).
    pub fn file(&self) -> &ScenarioFile {
        &self.file
    }

    /// Measurement bounds at 1-based measurement instant `k`.
    pub fn bounds_at(&self, k: usize) -> (Vec<Spd3>, Spd3) {
        let factor = self.bound_decay_per_instant.powi(k as i32 - 1);
        if factor == 1.0 {
            return (self.direction_bounds.clone(), self.omega_bound);
        }
        let scale = |s: &Spd3| SpdMatrix::from_symmetrized(s.matrix() * factor).expect("positive scaling keeps SPD");
        (self.direction_bounds.iter().map(scale).collect(), scale(&self.omega_bound))
    }

    pub fn total_steps(&self) -> usize {
        self.steps_between_measurements * self.measurement_count
    }
}

impl ScenarioFile {
    pub fn with_overrides(mut self, overrides: &Overrides) -> Self {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(mode) = overrides.noise_mode {
            self.noise_mode = mode;
        }
        if let Some(q) = overrides.q {
            self.convergence_q = Some(q);
        }
        if let Some(c) = overrides.c {
            self.convergence_c = c;
        }
        self
    }
}
