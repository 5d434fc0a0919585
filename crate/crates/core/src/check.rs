//! Randomized invariant suites: analytic against finite-difference gradients,
//! soft-min weight and bound properties, and KKT certificates of the QP.
//!
//! Each suite stops at the first violation and reports the offending case.

use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::{chain_eval, ChainParams, ChainValues};
use crate::composite::{compose, compose_numeric, CompositeParams};
use crate::filter::{solve, FilterProblem, FilterResult};
use crate::obstacles::ObstacleMap;
use crate::vehicle::{rotation_exp, Vec3, VehicleParams, VehicleState};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gradients,
    Weights,
    Qp,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Weights => "weights",
            Suite::Qp => "qp",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConfig {
    pub seed: u64,
    /// Random states for the gradient suite, per obstacle count.
    pub gradient_states: usize,
    pub weight_batches: usize,
    pub qp_instances: usize,
    /// Relative error added to the analytic `L_g h₁`, to exercise the failure path.
    pub inject_gradient_error: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            gradient_states: 1000,
            weight_batches: 10_000,
            qp_instances: 1000,
            inject_gradient_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub cases: usize,
    /// Largest error metric seen over the checked cases.
    pub worst: f64,
    pub tolerance: f64,
    /// First violation, if any.
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

pub const GRADIENT_TOL: f64 = 1e-5;
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
pub const KKT_TOL: f64 = 1e-7;
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|, 1)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// A random flight state: position near the origin, speed up to 3 m/s,
/// arbitrary attitude and thrust between 0.3 and 1.6 times hover.
pub fn random_state(rng: &mut impl Rng, vp: &VehicleParams) -> VehicleState {
    let mut v3 = |lo: f64, hi: f64| {
        Vec3::new(
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        )
    };
    let x = v3(-1.0, 1.0);
    let v = v3(-1.7, 1.7);
    let w = v3(-std::f64::consts::PI, std::f64::consts::PI);
    VehicleState {
        x,
        v,
        r: rotation_exp(&w),
        thrust: rng.random_range(0.3..1.6) * vp.hover_thrust(),
    }
}

/// `n` obstacles scattered within 4 m of `center`.
pub fn random_obstacles(rng: &mut impl Rng, center: &Vec3, n: usize, epsilon: f64) -> ObstacleMap {
    let points = (0..n)
        .map(|_| {
            center
                + Vec3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                )
        })
        .collect();
    ObstacleMap::new(points, epsilon)
}

fn describe(s: &VehicleState, n: usize) -> String {
    let q = s.quaternion();
    format!(
        "N = {n}, x = [{}, {}, {}], v = [{}, {}, {}], q = [{}, {}, {}, {}], T = {}",
        s.x.x, s.x.y, s.x.z, s.v.x, s.v.y, s.v.z, q.w, q.i, q.j, q.k, s.thrust
    )
}

fn chains_for(
    s: &VehicleState,
    map: &ObstacleMap,
    cp: &ChainParams,
    vp: &VehicleParams,
) -> Vec<ChainValues> {
    map.points
        .iter()
        .map(|p| chain_eval(s, p, cp, vp))
        .collect()
}

pub fn check_gradients(cfg: &CheckConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (cp, comp, vp) = (
        ChainParams::default(),
        CompositeParams::default(),
        VehicleParams::default(),
    );
    let mut report = SuiteReport {
        suite: "gradients",
        cases: 0,
        worst: 0.0,
        tolerance: GRADIENT_TOL,
        failure: None,
    };
    for n in [1, 10, 400] {
        for _ in 0..cfg.gradient_states {
            let s = random_state(&mut rng, &vp);
            let map = random_obstacles(&mut rng, &s.x, n, cp.epsilon);
            let eval = compose(&chains_for(&s, &map, &cp, &vp), &map, &s, &comp)?;
            let lg = eval.lg_h1 * (1.0 + cfg.inject_gradient_error);
            let (lf_num, lg_num) = compose_numeric(&map, &s, &comp, &cp, &vp)?;
            let err = (0..4)
                .map(|k| relative_error(lg[k], lg_num[k]))
                .fold(relative_error(eval.lf_h1, lf_num), f64::max);
            report.cases += 1;
            report.worst = report.worst.max(err);
            if !(err < GRADIENT_TOL) {
                report.failure = Some(format!(
                    "relative error {err:e} at {}: analytic lf = {}, lg = {:?}; numeric lf = {}, lg = {:?}",
                    describe(&s, n),
                    eval.lf_h1,
                    lg.as_slice(),
                    lf_num,
                    lg_num.as_slice()
                ));
                return Ok(report);
            }
        }
    }
    Ok(report)
}

pub fn check_weights(cfg: &CheckConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let (cp, comp, vp) = (
        ChainParams::default(),
        CompositeParams::default(),
        VehicleParams::default(),
    );
    let mut report = SuiteReport {
        suite: "weights",
        cases: 0,
        worst: 0.0,
        tolerance: WEIGHT_SUM_TOL,
        failure: None,
    };
    for _ in 0..cfg.weight_batches {
        let s = random_state(&mut rng, &vp);
        let n = rng.random_range(1..=400);
        let map = random_obstacles(&mut rng, &s.x, n, cp.epsilon);
        let chains = chains_for(&s, &map, &cp, &vp);
        let eval = compose(&chains, &map, &s, &comp)?;
        report.cases += 1;

        let sum_err = (eval.lambda.iter().sum::<f64>() - 1.0).abs();
        report.worst = report.worst.max(sum_err);
        let soft_min = chains
            .iter()
            .map(|c| comp.gamma * (c.nu2 / comp.gamma).tanh())
            .fold(f64::INFINITY, f64::min);
        let gap = (comp.gamma / comp.kappa) * (n as f64).ln();
        let slack = 1e-12 * (1.0 + soft_min.abs());
        let problem = if !(sum_err < WEIGHT_SUM_TOL) {
            Some(format!("weights sum to 1 + {sum_err:e}"))
        } else if eval.h1 > soft_min + slack {
            Some(format!(
                "h1 = {} above the saturated minimum {soft_min}",
                eval.h1
            ))
        } else if eval.h1 < soft_min - gap - slack {
            Some(format!(
                "h1 = {} below the bound {}",
                eval.h1,
                soft_min - gap
            ))
        } else {
            None
        };
        if let Some(p) = problem {
            report.failure = Some(format!("{p} at {}", describe(&s, n)));
            return Ok(report);
        }
    }
    Ok(report)
}

/// Random well-posed instance: SPD weight with eigenvalues in [0.5, 2], two
/// Gaussian rows, and right-hand sides within ±1 of the reference value so
/// that every active set occurs.
pub fn random_qp<R: Rng>(rng: &mut R) -> FilterProblem {
    let gauss = |rng: &mut R| {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let m = Matrix4::from_fn(|_, _| gauss(rng));
    let q = m.qr().q();
    let eig = Vector4::from_fn(|_, _| 0.5 + 1.5 * rng.random::<f64>());
    let p = q * Matrix4::from_diagonal(&eig) * q.transpose();
    let p = 0.5 * (p + p.transpose());
    let a = Matrix2x4::from_fn(|_, _| gauss(rng));
    let u_ref = Vector4::from_fn(|_, _| gauss(rng));
    let b = a * u_ref + Vector2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    FilterProblem {
        u_ref,
        p,
        a,
        b,
        collision_row: true,
    }
}

/// Largest violation of the KKT conditions, counting the thrust-row slack.
pub fn kkt_residual(p: &FilterProblem, r: &FilterResult) -> f64 {
    let rows = if p.collision_row { 0..2 } else { 1..2 };
    let mut b = p.b;
    b[1] -= r.slack;
    let mut stat = 2.0 * p.p * (r.u_safe - p.u_ref);
    let mut worst: f64 = 0.0;
    for i in rows {
        let ai = p.a.row(i).transpose();
        let mu = r.multipliers[i];
        stat -= ai * mu;
        let gap = ai.dot(&r.u_safe) - b[i];
        worst = worst.max((-gap).max(0.0) / (FEASIBILITY_TOL / KKT_TOL));
        worst = worst.max((mu * gap).abs());
        worst = worst.max((-mu).max(0.0));
    }
    worst.max(stat.norm())
}

pub fn check_qp(cfg: &CheckConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut report = SuiteReport {
        suite: "qp",
        cases: 0,
        worst: 0.0,
        tolerance: KKT_TOL,
        failure: None,
    };
    for i in 0..cfg.qp_instances {
        let mut p = random_qp(&mut rng);
        if i % 10 == 9 {
            // anti-parallel rows demanding a gap: only the slack can resolve it
            let row = p.a.row(0).into_owned();
            p.a.set_row(1, &(-row));
            p.b[1] = -p.b[0] + rng.random_range(0.1..2.0);
        }
        let r = solve(&p)?;
        report.cases += 1;
        let res = kkt_residual(&p, &r);
        report.worst = report.worst.max(res);
        let mut problem = if !(res < KKT_TOL) {
            Some(format!("KKT residual {res:e}"))
        } else if r.fallback && p.a.row(0).dot(&p.a.row(1)) >= 0.0 {
            Some("infeasible rows that are not opposed".to_string())
        } else {
            None
        };
        if problem.is_none() && !r.fallback {
            for _ in 0..20 {
                let v = r.u_safe + Vector4::from_fn(|_, _| rng.random_range(-0.5..0.5));
                if (p.a * v - p.b).iter().all(|g| *g >= 0.0)
                    && p.cost(&r.u_safe) > p.cost(&v) + 1e-8
                {
                    problem = Some(format!("feasible point {:?} is cheaper", v.as_slice()));
                    break;
                }
            }
        }
        if let Some(msg) = problem {
            report.failure = Some(format!(
                "{msg} for u_ref = {:?}, A = {:?}, b = {:?}",
                p.u_ref.as_slice(),
                p.a.transpose().as_slice(),
                p.b.as_slice()
            ));
            return Ok(report);
        }
    }
    Ok(report)
}

pub fn run_checks(suite: Suite, cfg: &CheckConfig) -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Gradients | Suite::All) {
        out.push(check_gradients(cfg)?);
    }
    if matches!(suite, Suite::Weights | Suite::All) {
        out.push(check_weights(cfg)?);
    }
    if matches!(suite, Suite::Qp | Suite::All) {
        out.push(check_qp(cfg)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CheckConfig {
        CheckConfig {
            gradient_states: 30,
            weight_batches: 200,
            qp_instances: 200,
            ..CheckConfig::default()
        }
    }

    #[test]
    fn suites_pass() {
        for r in run_checks(Suite::All, &small()).unwrap() {
            assert!(r.passed(), "{}: {:?}", r.suite, r.failure);
            assert!(r.cases > 0);
        }
    }

    #[test]
    fn injected_gradient_error_is_caught() {
        let cfg = CheckConfig {
            inject_gradient_error: 1e-3,
            ..small()
        };
        let r = check_gradients(&cfg).unwrap();
        let msg = r.failure.expect("mismatch must be reported");
        assert!(msg.contains("x = ["), "{msg}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert_eq!(relative_error(200.0, 100.0), 0.5);
    }
}
