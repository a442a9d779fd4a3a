//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ellipsoid_attitude_core::ellipsoid::fuse_intersection;
use ellipsoid_attitude_core::filter::{convergence_check, DEFAULT_CONTRACTION};
use ellipsoid_attitude_core::Vec6;
use serde_json::json;

use crate::monte_carlo::run_trials;
use crate::report::{read_matrix6, read_spd6, write_run, write_trajectory};
use crate::run::{run_estimation, RunOptions};
use crate::scenario::{NoiseMode, Overrides, Scenario};
use crate::simulate::simulate_truth;
use crate::SimError;

#[derive(Debug, Parser)]
#[command(name = "ellipsoid-attitude", version, about = "Set-membership attitude estimation on SO(3)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Interior,
    Boundary,
}

impl From<NoiseArg> for NoiseMode {
    fn from(a: NoiseArg) -> Self {
        match a {
            NoiseArg::Interior => NoiseMode::Interior,
            NoiseArg::Boundary => NoiseMode::Boundary,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub noise_mode: Option<NoiseArg>,
    /// Fixed q for the convergence check (default: the fusion weight q*).
    #[arg(long)]
    pub q: Option<f64>,
    /// Contraction factor c ∈ (0, 1) for the convergence check.
    #[arg(long)]
    pub c: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, SimError> {
        let overrides = Overrides {
            seed: self.seed,
            noise_mode: self.noise_mode.map(Into::into),
            q: self.q,
            c: self.c,
        };
        Scenario::from_file(&self.scenario, &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the true trajectory and write trajectory.csv.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter and write records.csv and summary.json.
    Estimate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Record fusion wall time (outputs are then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate the contraction condition for given Pm, Pf, A_f (6×6 JSON arrays).
    CheckConvergence {
        #[arg(long)]
        pm: PathBuf,
        #[arg(long)]
        pf: PathBuf,
        #[arg(long)]
        af: PathBuf,
        /// Default: the fusion weight of two ellipsoids centered at the origin.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_CONTRACTION)]
        c: f64,
    },
    /// Run several seeds (base seed + i) and aggregate containment statistics.
    MonteCarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        trials: usize,
        /// Also write the aggregate as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let s = scenario.load()?;
            let trajectory = simulate_truth(&s)?;
            std::fs::create_dir_all(&out)?;
            write_trajectory(&out.join("trajectory.csv"), &trajectory, s.inertia.h())?;
            writeln!(stdout, "wrote {} states to {}", trajectory.len(), out.join("trajectory.csv").display())?;
        }
        Command::Estimate { scenario, out, timing } => {
            let s = scenario.load()?;
            let run = run_estimation(&s, &RunOptions { timing })?;
            // Partial results are written before a filter failure is reported.
            write_run(&out, &run.records, &run.summary)?;
            let run = run.into_result()?;
            writeln!(
                stdout,
                "{} instants, containment rate {}, final attitude error {:e} rad",
                run.summary.completed_instants,
                run.summary.containment_rate,
                run.summary.final_attitude_error_rad.unwrap_or(f64::NAN)
            )?;
        }
        Command::CheckConvergence { pm, pf, af, q, c } => {
            if !(c > 0.0 && c < 1.0) {
                return Err(SimError::Validation("--c must lie in (0, 1)".into()));
            }
            let pm = read_spd6(&pm, "pm")?;
            let pf = read_spd6(&pf, "pf")?;
            let af = read_matrix6(&af)?;
            let q = match q {
                Some(q) if q >= 0.0 => q,
                Some(_) => return Err(SimError::Validation("--q must be non-negative".into())),
                None => fuse_intersection(&pm, &Vec6::zeros(), &pf).map_err(|e| SimError::Runtime(e.to_string()))?.q,
            };
            let r = convergence_check(&pm, &pf, &af, q, c);
            let report = json!({
                "lhs": r.lhs, "rhs": r.rhs, "lambda_min": r.lambda_min, "kappa": r.kappa,
                "chi": r.chi, "c": r.c, "q": r.q, "satisfied": r.satisfied,
            });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report).expect("report serializes"))?;
        }
        Command::MonteCarlo { scenario, trials, out } => {
            if trials == 0 {
                return Err(SimError::Validation("--trials must be at least 1".into()));
            }
            let s = scenario.load()?;
            let summary = run_trials(&s, trials)?;
            if let Some(out) = out {
                if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(&out, serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
            }
            writeln!(
                stdout,
                "trials {}, failed {}, containment rate {} ({} of {} instants)",
                summary.trials,
                summary.failed_trials,
                summary.containment_rate,
                summary.contained_instants,
                summary.total_instants
            )?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
