//! The `ccbf` command-line driver.
//!
//! Exit status is 0 on success, 1 when the run itself fails or a check finds a
//! violation, and 2 for malformed command lines.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix3, UnitQuaternion, Vector4};
use serde::{Deserialize, Serialize};

use crate::bench::{report, run_bench, BenchConfig, GradientMode};
use crate::check::{run_checks, CheckConfig, Suite};
use crate::filter::{filter_step, FilterParams};
use crate::obstacles::load_obstacles;
use crate::simulator::{run, write_trace, SafetyParams, Scenario};
use crate::vehicle::{RateThrustInput, RotationMatrix, Vec3, VehicleParams, VehicleState};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ccbf",
    version,
    about = "Composite barrier safety filter: simulation, timing and checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a closed-loop scenario and write its trace as CSV.
    Simulate(SimulateArgs),
    /// Time the composite barrier against obstacle count.
    Bench(BenchArgs),
    /// Run randomized invariant suites; exits 1 on the first violation.
    Check(CheckArgs),
    /// Filter one input at one state and print the diagnostics as JSON.
    FilterStep(FilterStepArgs),
}

/// Overrides for the barrier constants; unset flags keep the defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct SafetyOverrides {
    /// First chain pole (negative)
    #[arg(long, allow_negative_numbers = true)]
    pub p0: Option<f64>,
    /// Second chain pole (negative)
    #[arg(long, allow_negative_numbers = true)]
    pub p1: Option<f64>,
    /// Class-K gain on the composite barrier
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// tanh saturation scale of the soft-min
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Soft-min sharpness
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Clearance radius in m
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Class-K gain on the thrust barrier
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Minimum thrust in N
    #[arg(long = "epsilon_T", alias = "epsilon-t")]
    pub epsilon_t: Option<f64>,
}

impl SafetyOverrides {
    pub fn apply(&self, base: SafetyParams) -> SafetyParams {
        SafetyParams {
            p0: self.p0.unwrap_or(base.p0),
            p1: self.p1.unwrap_or(base.p1),
            alpha1: self.alpha1.unwrap_or(base.alpha1),
            gamma: self.gamma.unwrap_or(base.gamma),
            kappa: self.kappa.unwrap_or(base.kappa),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            alpha2: self.alpha2.unwrap_or(base.alpha2),
            epsilon_t: self.epsilon_t.unwrap_or(base.epsilon_t),
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    #[arg(long, required_unless_present = "builtin")]
    pub scenario: Option<PathBuf>,
    /// Use a built-in scenario instead of a file.
    #[arg(long, value_enum, conflicts_with = "scenario")]
    pub builtin: Option<Builtin>,
    /// Trace CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Fly the nominal controller without the safety filter.
    #[arg(long)]
    pub no_filter: bool,
    /// Override the scenario duration in s.
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    pub safety: SafetyOverrides,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Corridor,
    Forest,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated obstacle counts.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100, 1000, 10000])]
    pub counts: Vec<usize>,
    /// Timed repetitions per cell (at least 10).
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, value_enum, default_value_t = GradientMode::Both)]
    pub mode: GradientMode,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Report CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Override the number of random cases of every suite.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Scale the analytic input gradient by (1 + this) before comparing.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub inject_gradient_error: f64,
}

#[derive(Args, Debug)]
pub struct FilterStepArgs {
    /// JSON with `x`, `v`, `T`, either `R` (row-major 3×3) or `q` ([w, x, y, z]),
    /// and optionally `u_ref` ([p, q, r, tau]).
    #[arg(long)]
    pub state: PathBuf,
    /// Obstacle CSV, one `x,y,z` per line.
    #[arg(long)]
    pub obstacles: PathBuf,
    #[command(flatten)]
    pub safety: SafetyOverrides,
}

/// State file accepted by `filter-step`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub x: [f64; 3],
    pub v: [f64; 3],
    #[serde(rename = "R", default)]
    pub r: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    pub q: Option<[f64; 4]>,
    #[serde(rename = "T")]
    pub thrust: f64,
    #[serde(default)]
    pub u_ref: Option<[f64; 4]>,
}

impl StateFile {
    pub fn state(&self) -> Result<VehicleState> {
        let r = match (&self.r, &self.q) {
            (Some(_), Some(_)) => {
                return Err(Error::Scenario("give either R or q, not both".into()))
            }
            (Some(rows), None) => {
                let m = Matrix3::from_fn(|i, j| rows[i][j]);
                let err = (m.transpose() * m - Matrix3::identity()).norm();
                if !(err < 1e-6) || !(m.determinant() > 0.0) {
                    return Err(Error::Scenario(format!(
                        "R is not a rotation (orthogonality error {err:e})"
                    )));
                }
                crate::vehicle::orthonormalize(&RotationMatrix::from_matrix_unchecked(m))
            }
            (None, Some(q)) => {
                let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
                if !(quat.norm() > 0.0) {
                    return Err(Error::Scenario("q must be nonzero".into()));
                }
                UnitQuaternion::from_quaternion(quat).to_rotation_matrix()
            }
            (None, None) => RotationMatrix::identity(),
        };
        let s = VehicleState {
            x: Vec3::from(self.x),
            v: Vec3::from(self.v),
            r,
            thrust: self.thrust,
        };
        if !s.is_finite() {
            return Err(Error::NonFinite("state file"));
        }
        Ok(s)
    }
}

/// What `filter-step` prints.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub u_ref: Vector4<f64>,
    pub u_safe: Vector4<f64>,
    pub obstacles: usize,
    pub h1: Option<f64>,
    pub lf_h1: Option<f64>,
    pub lg_h1: Option<Vector4<f64>>,
    pub h2: f64,
    pub b2: f64,
    pub min_nu0: f64,
    pub min_nu1: f64,
    pub min_nu2: f64,
    pub virtual_obstacle: Option<Vec3>,
    pub normalized_colinearity: Option<f64>,
    pub active_collision: bool,
    pub active_thrust: bool,
    pub qp_cost: f64,
    pub slack: f64,
    pub fallback: bool,
    pub singular: bool,
    pub multipliers: [f64; 2],
}

pub fn filter_step_report(args: &FilterStepArgs) -> Result<StepReport> {
    let text = std::fs::read_to_string(&args.state).map_err(|e| Error::io(&args.state, e))?;
    let file: StateFile = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("{}: {e}", args.state.display())))?;
    let s = file.state()?;
    let params: FilterParams = args
        .safety
        .apply(SafetyParams::default())
        .filter_params(VehicleParams::default(), [1.0; 4]);
    params.validate()?;
    let map = load_obstacles(&args.obstacles, params.chain.epsilon)?;
    let u_ref = RateThrustInput::from_vector(&Vector4::from(file.u_ref.unwrap_or([0.0; 4])));
    let out = filter_step(&s, &map, &u_ref, &params)?;
    let nu = out.barriers.min_nu();
    let comp = out.barriers.composite.as_ref();
    Ok(StepReport {
        u_ref: u_ref.to_vector(),
        u_safe: out.u_safe.to_vector(),
        obstacles: map.len(),
        h1: comp.map(|c| c.h1),
        lf_h1: comp.map(|c| c.lf_h1),
        lg_h1: comp.map(|c| c.lg_h1),
        h2: out.barriers.thrust.h2,
        b2: out.barriers.thrust.b2,
        min_nu0: nu[0],
        min_nu1: nu[1],
        min_nu2: nu[2],
        virtual_obstacle: comp.map(|c| c.x_hat / c.weight_sum),
        normalized_colinearity: out.barriers.geometry.map(|g| g.normalized_colinearity),
        active_collision: out.result.active_set.collision,
        active_thrust: out.result.active_set.thrust,
        qp_cost: out.result.cost,
        slack: out.result.slack,
        fallback: out.result.fallback,
        singular: out.result.singular,
        multipliers: [out.result.multipliers[0], out.result.multipliers[1]],
    })
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut sc = match (&args.scenario, args.builtin) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(Builtin::Corridor)) => Scenario::corridor(),
        (None, Some(Builtin::Forest)) => Scenario::forest(),
        (None, None) => return Err(Error::Scenario("no scenario given".into())),
    };
    sc.safety = args.safety.apply(sc.safety);
    if args.no_filter {
        sc.filter_enabled = false;
    }
    if let Some(d) = args.duration {
        sc.duration = d;
    }
    let out = run(&sc)?;
    write_trace(&out.trace, &args.out)?;
    let min =
        |f: fn(&crate::TraceRecord) -> f64| out.trace.iter().map(f).fold(f64::INFINITY, f64::min);
    let singular = out.trace.iter().filter(|r| r.singular).count();
    println!(
        "{} cycles written to {}; min nu0 = {}, min nu1 = {}, min nu2 = {}, singular cycles = {singular}",
        out.trace.len(),
        args.out.display(),
        min(|r| r.min_nu0),
        min(|r| r.min_nu1),
        min(|r| r.min_nu2),
    );
    match out.abort {
        None => Ok(()),
        Some(a) => Err(Error::Aborted {
            t: a.t,
            reason: a.reason,
        }),
    }
}

fn bench(args: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        obstacle_counts: args.counts.clone(),
        repetitions: args.reps,
        warmup: args.warmup,
        mode: args.mode,
        threads: args.threads,
    };
    let result = run_bench(&cfg)?;
    report(&result, &args.out)?;
    for c in &result.cells {
        println!(
            "{:>6} {:<8} median {:.4} ms  [p10 {:.4}, p90 {:.4}]",
            c.count,
            c.mode.name(),
            c.median_ms,
            c.p10_ms,
            c.p90_ms
        );
    }
    Ok(())
}

/// Returns whether every suite passed.
fn check(args: &CheckArgs) -> Result<bool> {
    let mut cfg = CheckConfig {
        seed: args.seed,
        inject_gradient_error: args.inject_gradient_error,
        ..CheckConfig::default()
    };
    if let Some(n) = args.samples {
        cfg.gradient_states = n;
        cfg.weight_batches = n;
        cfg.qp_instances = n;
    }
    let mut ok = true;
    for r in run_checks(args.suite, &cfg)? {
        match &r.failure {
            None => println!(
                "PASS {}: {} cases, worst {:e} (tol {:e})",
                r.suite, r.cases, r.worst, r.tolerance
            ),
            Some(f) => {
                ok = false;
                println!("FAIL {}: after {} cases: {f}", r.suite, r.cases);
            }
        }
    }
    Ok(ok)
}

/// Parse `args` and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Bench(a) => bench(a).map(|_| true),
        Command::Check(a) => check(a),
        Command::FilterStep(a) => filter_step_report(a).and_then(|r| {
            let json =
                serde_json::to_string_pretty(&r).map_err(|e| Error::Scenario(e.to_string()))?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{json}").map_err(|e| Error::io("<stdout>", e))?;
            Ok(true)
        }),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
