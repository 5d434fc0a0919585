//! Closed-loop harness: mission → controller → safety filter → plant.
//!
//! The loop runs at the control rate with a zero-order hold on the filtered
//! input. The obstacle subset seen by the filter is refreshed at the (slower)
//! map rate from the K nearest points of the full scene.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{ChainParams, ThrustBarrierParams};
use crate::composite::CompositeParams;
use crate::controller::{mission_setpoint, ControllerGains, GeometricController, Mission};
use crate::filter::{evaluate_barriers, filter_step, FilterParams};
use crate::obstacles::{generate_scene, Bounds, Keepout, ObstacleMap, SceneKind, SceneSpec};
use crate::vehicle::{
    orthonormalize, step, RateThrustInput, RotationMatrix, Vec3, VehicleParams, VehicleState,
};
use crate::{Error, Result};

/// Rotation drift is removed every this many plant steps.
const RENORMALIZE_EVERY: usize = 1000;

/// The eight tunable constants of the barrier stack under their usual symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafetyParams {
    pub p0: f64,
    pub p1: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub alpha2: f64,
    #[serde(rename = "epsilon_T")]
    pub epsilon_t: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        let chain = ChainParams::default();
        let comp = CompositeParams::default();
        let thrust = ThrustBarrierParams::default();
        Self {
            p0: chain.p0,
            p1: chain.p1,
            alpha1: comp.alpha1,
            gamma: comp.gamma,
            kappa: comp.kappa,
            epsilon: chain.epsilon,
            alpha2: thrust.alpha2,
            epsilon_t: thrust.epsilon_t,
        }
    }
}

impl SafetyParams {
    pub fn filter_params(&self, vehicle: VehicleParams, weight: [f64; 4]) -> FilterParams {
        FilterParams {
            chain: ChainParams {
                p0: self.p0,
                p1: self.p1,
                epsilon: self.epsilon,
            },
            composite: CompositeParams {
                kappa: self.kappa,
                gamma: self.gamma,
                alpha1: self.alpha1,
            },
            thrust: ThrustBarrierParams {
                epsilon_t: self.epsilon_t,
                alpha2: self.alpha2,
            },
            vehicle,
            weight,
            ..FilterParams::default()
        }
    }
}

/// Initial condition: at rest unless a velocity is given, level with the
/// requested yaw, thrust at hover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl InitialState {
    pub fn state(&self, vp: &VehicleParams) -> VehicleState {
        VehicleState {
            x: Vec3::from(self.position),
            v: Vec3::from(self.velocity),
            r: RotationMatrix::from_axis_angle(&Vec3::z_axis(), self.yaw),
            thrust: vp.hover_thrust(),
        }
    }
}

fn default_duration() -> f64 {
    60.0
}
fn default_control_rate() -> f64 {
    100.0
}
fn default_map_rate() -> f64 {
    10.0
}
fn default_k() -> usize {
    400
}
fn default_true() -> bool {
    true
}
fn default_weight() -> [f64; 4] {
    [1.0; 4]
}
fn default_substeps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scene: SceneSpec,
    pub mission: Mission,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
    #[serde(default = "default_map_rate")]
    pub map_rate: f64,
    #[serde(default = "default_k")]
    pub k_nearest: usize,
    #[serde(default)]
    pub safety: SafetyParams,
    /// Mass-scaled defaults when absent.
    #[serde(default)]
    pub gains: Option<ControllerGains>,
    #[serde(default)]
    pub vehicle: VehicleParams,
    pub initial: InitialState,
    /// Seeds the velocity-reference noise; the scene has its own seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub filter_enabled: bool,
    /// Diagonal of the QP weight, `[p, q, r, τ]`.
    #[serde(default = "default_weight")]
    pub weight: [f64; 4],
    /// RK4 steps per control period.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Standard deviation of additive noise on the velocity reference, m/s.
    #[serde(default)]
    pub velocity_noise: f64,
}

impl Scenario {
    /// Hallway 3 m wide and 20 m long with a dead-end wall at 18 m and pillars
    /// along the sides. Flown with the naive constant-velocity mission.
    pub fn corridor() -> Self {
        Scenario {
            scene: SceneSpec {
                generator: SceneKind::Corridor,
                seed: 7,
                count: 1500,
                bounds: Bounds::new([0.0, -1.5, -3.0], [20.0, 1.5, 0.0]),
                dead_end: true,
                keepout: None,
            },
            mission: Mission::naive(),
            duration: 60.0,
            control_rate: default_control_rate(),
            map_rate: default_map_rate(),
            k_nearest: default_k(),
            safety: SafetyParams::default(),
            gains: None,
            vehicle: VehicleParams::default(),
            initial: InitialState {
                position: [1.0, 0.0, -1.3],
                velocity: [0.0; 3],
                yaw: 0.0,
            },
            seed: 0,
            filter_enabled: true,
            weight: default_weight(),
            substeps: 1,
            velocity_noise: 0.0,
        }
    }

    /// Field of vertical trunks flown with the adversarial mission.
    pub fn forest() -> Self {
        Scenario {
            scene: SceneSpec {
                generator: SceneKind::Forest,
                seed: 11,
                count: 4000,
                bounds: Bounds::new([-12.0, -12.0, -4.0], [12.0, 12.0, 0.0]),
                dead_end: false,
                keepout: Some(Keepout {
                    center: [0.0, 0.0, 0.0],
                    radius: 2.0,
                }),
            },
            mission: Mission::adversarial(),
            initial: InitialState {
                position: [0.0, 0.0, -1.5],
                velocity: [0.0; 3],
                yaw: 0.0,
            },
            ..Scenario::corridor()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Scenario(m.to_string()));
        if !(self.control_rate > 0.0) {
            return bad("control_rate must be positive");
        }
        if !(self.map_rate > 0.0 && self.map_rate <= self.control_rate) {
            return bad("map_rate must be positive and at most control_rate");
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be finite and nonnegative");
        }
        if self.k_nearest == 0 {
            return bad("k_nearest must be at least 1");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        if !(self.velocity_noise >= 0.0) {
            return bad("velocity_noise must be nonnegative");
        }
        self.scene.validate()?;
        self.vehicle.validate()?;
        self.controller_gains().validate()?;
        self.filter_params().validate()
    }

    pub fn controller_gains(&self) -> ControllerGains {
        self.gains
            .unwrap_or_else(|| ControllerGains::for_mass(self.vehicle.m))
    }

    pub fn filter_params(&self) -> FilterParams {
        self.safety.filter_params(self.vehicle, self.weight)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Load a scenario; a relative obstacle-file path resolves against the
    /// scenario's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc = Self::from_json(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let SceneKind::File(file) = &mut sc.scene.generator {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(sc)
    }
}

/// One control cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
    /// `[w, x, y, z]`.
    pub q: [f64; 4],
    pub thrust: f64,
    pub u_ref: [f64; 4],
    pub u_safe: [f64; 4],
    pub h1: f64,
    pub h2: f64,
    pub min_nu0: f64,
    pub min_nu1: f64,
    pub min_nu2: f64,
    pub qp_cost: f64,
    pub slack: f64,
    pub singular: bool,
}

pub const TRACE_HEADER: &str = "t,x,y,z,vx,vy,vz,qw,qx,qy,qz,T,p_ref,q_ref,r_ref,tau_ref,\
p_safe,q_safe,r_safe,tau_safe,h1,h2,min_nu0,min_nu1,min_nu2,qp_cost,slack,singular";

const TRACE_COLUMNS: usize = 28;

impl TraceRecord {
    fn values(&self) -> [f64; TRACE_COLUMNS - 1] {
        let mut out = [0.0; TRACE_COLUMNS - 1];
        let fields = std::iter::once(self.t)
            .chain(self.x.iter().copied())
            .chain(self.v.iter().copied())
            .chain(self.q)
            .chain(std::iter::once(self.thrust))
            .chain(self.u_ref)
            .chain(self.u_safe)
            .chain([
                self.h1,
                self.h2,
                self.min_nu0,
                self.min_nu1,
                self.min_nu2,
                self.qp_cost,
                self.slack,
            ]);
        for (slot, v) in out.iter_mut().zip(fields) {
            *slot = v;
        }
        out
    }

    fn from_values(v: &[f64], singular: bool) -> Self {
        let arr4 = |i: usize| [v[i], v[i + 1], v[i + 2], v[i + 3]];
        TraceRecord {
            t: v[0],
            x: Vec3::new(v[1], v[2], v[3]),
            v: Vec3::new(v[4], v[5], v[6]),
            q: arr4(7),
            thrust: v[11],
            u_ref: arr4(12),
            u_safe: arr4(16),
            h1: v[20],
            h2: v[21],
            min_nu0: v[22],
            min_nu1: v[23],
            min_nu2: v[24],
            qp_cost: v[25],
            slack: v[26],
            singular,
        }
    }
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abort {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    /// Set when the controller failed or the state went non-finite; the last
    /// trace record is the state at that moment.
    pub abort: Option<Abort>,
}

impl RunOutput {
    pub fn into_result(self) -> Result<Vec<TraceRecord>> {
        match self.abort {
            None => Ok(self.trace),
            Some(a) => Err(Error::Aborted {
                t: a.t,
                reason: a.reason,
            }),
        }
    }
}

fn as_array(u: &RateThrustInput) -> [f64; 4] {
    let v: Vector4<f64> = u.to_vector();
    [v[0], v[1], v[2], v[3]]
}

fn diagnostic_record(t: f64, s: &VehicleState, u_ref: [f64; 4]) -> TraceRecord {
    let q = s.quaternion();
    TraceRecord {
        t,
        x: s.x,
        v: s.v,
        q: [q.w, q.i, q.j, q.k],
        thrust: s.thrust,
        u_ref,
        u_safe: [f64::NAN; 4],
        h1: f64::NAN,
        h2: f64::NAN,
        min_nu0: f64::NAN,
        min_nu1: f64::NAN,
        min_nu2: f64::NAN,
        qp_cost: f64::NAN,
        slack: f64::NAN,
        singular: false,
    }
}

/// Run a scenario to completion. Deterministic: the same scenario gives a
/// bitwise-identical trace.
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    let fp = sc.filter_params();
    let scene = generate_scene(&sc.scene, fp.chain.epsilon)?;
    run_with_map(sc, &scene)
}

/// As [`run`] but on an already built obstacle map.
pub fn run_with_map(sc: &Scenario, scene: &ObstacleMap) -> Result<RunOutput> {
    sc.validate()?;
    let fp = sc.filter_params();
    let vp = sc.vehicle;
    let dt = 1.0 / sc.control_rate;
    let h = dt / sc.substeps as f64;
    let cycles = (sc.duration * sc.control_rate).round() as usize;
    let map_every = ((sc.control_rate / sc.map_rate).round() as usize).max(1);

    let mut controller = GeometricController::new(sc.controller_gains(), vp);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut s = sc.initial.state(&vp);
    let home = s.x;
    let mut local = ObstacleMap::empty(fp.chain.epsilon);
    let mut nearest = None;
    let mut plant_steps = 0usize;
    let mut trace = Vec::with_capacity(cycles);

    for i in 0..cycles {
        let t = i as f64 * dt;
        if i % map_every == 0 {
            local = scene.k_nearest(&s.x, sc.k_nearest);
            nearest = local.nearest(&s.x);
        }
        let mut sp = mission_setpoint(&sc.mission, &s, &home, nearest);
        if sc.velocity_noise > 0.0 {
            for k in 0..3 {
                sp.v_d[k] += sc.velocity_noise * standard_normal(&mut rng);
            }
        }
        let u_ref = match controller.compute(&s, &sp, dt) {
            Ok(out) => out.input,
            Err(e) => {
                warn!("controller failed at t = {t:.3}: {e}");
                trace.push(diagnostic_record(t, &s, [f64::NAN; 4]));
                return Ok(RunOutput {
                    trace,
                    abort: Some(Abort {
                        t,
                        reason: e.to_string(),
                    }),
                });
            }
        };

        let (u, record) = if sc.filter_enabled {
            let out = filter_step(&s, &local, &u_ref, &fp)?;
            let nu = out.barriers.min_nu();
            if out.result.fallback {
                debug!(
                    "slack fallback at t = {t:.3}, slack = {:e}",
                    out.result.slack
                );
            }
            let rec = TraceRecord {
                u_safe: as_array(&out.u_safe),
                h1: out.barriers.h1(),
                h2: out.barriers.thrust.h2,
                min_nu0: nu[0],
                min_nu1: nu[1],
                min_nu2: nu[2],
                qp_cost: out.result.cost,
                slack: out.result.slack,
                singular: out.result.singular,
                ..diagnostic_record(t, &s, as_array(&u_ref))
            };
            (out.u_safe, rec)
        } else {
            let ev = evaluate_barriers(&s, &local, &fp)?;
            let nu = ev.min_nu();
            let rec = TraceRecord {
                u_safe: as_array(&u_ref),
                h1: ev.h1(),
                h2: ev.thrust.h2,
                min_nu0: nu[0],
                min_nu1: nu[1],
                min_nu2: nu[2],
                qp_cost: 0.0,
                slack: 0.0,
                singular: false,
                ..diagnostic_record(t, &s, as_array(&u_ref))
            };
            (u_ref, rec)
        };
        trace.push(record);

        for _ in 0..sc.substeps {
            s = step(&s, &u, &vp, h);
            plant_steps += 1;
            if plant_steps % RENORMALIZE_EVERY == 0 {
                s.r = orthonormalize(&s.r);
            }
        }
        if !s.is_finite() {
            let t_fail = (i + 1) as f64 * dt;
            trace.push(diagnostic_record(t_fail, &s, as_array(&u_ref)));
            return Ok(RunOutput {
                trace,
                abort: Some(Abort {
                    t: t_fail,
                    reason: "state became non-finite".into(),
                }),
            });
        }
    }
    Ok(RunOutput { trace, abort: None })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; the open interval keeps the log finite
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Did a constant-velocity mission end hovering in front of a dead end?
///
/// True iff the mean speed over the final 2 s is below 0.05 m/s. Only
/// defined for the naive mission with a 1 m/s reference, which stays at
/// 1 m/s for the whole run by construction.
pub fn dead_end_check(trace: &[TraceRecord], mission: &Mission) -> Result<bool> {
    match mission {
        Mission::Naive { velocity, .. } if (Vec3::from(*velocity).norm() - 1.0).abs() < 1e-12 => {}
        _ => {
            return Err(Error::InvalidParameter(
                "dead-end check needs a naive mission with a 1 m/s velocity reference".into(),
            ))
        }
    }
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(Error::TraceTooShort("empty trace".into()));
    };
    if last.t - first.t < 2.0 {
        return Err(Error::TraceTooShort(format!(
            "{:.3} s covered, 2 s needed",
            last.t - first.t
        )));
    }
    let window: Vec<&TraceRecord> = trace.iter().filter(|r| r.t >= last.t - 2.0).collect();
    let mean = window.iter().map(|r| r.v.norm()).sum::<f64>() / window.len() as f64;
    Ok(mean < 0.05)
}

/// Write the trace as CSV with a header row. Values use the shortest
/// representation that parses back to the same float.
pub fn write_trace(trace: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trace_csv(trace)).map_err(|e| Error::io(path, e))
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(64 + trace.len() * 400);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        for v in r.values() {
            let _ = write!(out, "{v},");
        }
        out.push_str(if r.singular { "1\n" } else { "0\n" });
    }
    out
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, path)
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<TraceRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRACE_COLUMNS {
            return Err(err(
                i + 1,
                format!("expected {TRACE_COLUMNS} fields, found {}", fields.len()),
            ));
        }
        let mut values = [0.0; TRACE_COLUMNS - 1];
        for (slot, f) in values.iter_mut().zip(&fields) {
            *slot = f
                .trim()
                .parse()
                .map_err(|_| err(i + 1, format!("not a number: {f:?}")))?;
        }
        let singular = match fields[TRACE_COLUMNS - 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(err(
                    i + 1,
                    format!("singular flag must be 0 or 1, found {other:?}"),
                ))
            }
        };
        out.push(TraceRecord::from_values(&values, singular));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover_scenario(duration: f64) -> Scenario {
        Scenario {
            scene: SceneSpec {
                generator: SceneKind::RandomBox,
                seed: 0,
                count: 0,
                bounds: Bounds::new([-1.0; 3], [1.0; 3]),
                dead_end: false,
                keepout: None,
            },
            mission: Mission::Hover,
            duration,
            ..Scenario::corridor()
        }
    }

    fn record(t: f64, speed: f64) -> TraceRecord {
        TraceRecord {
            v: Vec3::new(speed, 0.0, 0.0),
            ..diagnostic_record(
                t,
                &VehicleState::hover(Vec3::zeros(), &VehicleParams::default()),
                [0.0; 4],
            )
        }
    }

    #[test]
    fn hover_holds_position_with_idle_filter() {
        let sc = hover_scenario(10.0);
        let out = run(&sc).unwrap();
        assert!(out.abort.is_none());
        assert_eq!(out.trace.len(), 1000);
        let last = out.trace.last().unwrap();
        assert!((last.x - Vec3::from(sc.initial.position)).norm() < 0.01);
        assert_eq!(out.trace.iter().map(|r| r.qp_cost).sum::<f64>(), 0.0);
        assert!(out.trace.iter().all(|r| r.h1 == f64::INFINITY));
    }

    #[test]
    fn time_is_monotone() {
        let out = run(&hover_scenario(1.0)).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn trace_round_trip() {
        let mut trace = run(&hover_scenario(0.5)).unwrap().trace;
        trace[3].singular = true;
        trace[4].h1 = 0.1 + 0.2;
        let text = trace_csv(&trace);
        assert_eq!(text.lines().count(), trace.len() + 1);
        let back = parse_trace(&text, Path::new("t.csv")).unwrap();
        assert_eq!(back.len(), trace.len());
        for (a, b) in trace.iter().zip(&back) {
            assert_eq!(a.values().map(f64::to_bits), b.values().map(f64::to_bits));
            assert_eq!(a.singular, b.singular);
        }
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(trace_csv(&[]), format!("{TRACE_HEADER}\n"));
        assert!(parse_trace(&trace_csv(&[]), Path::new("t.csv"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_trace_reports_line() {
        let text = format!("{TRACE_HEADER}\n1,2,3\n");
        match parse_trace(&text, Path::new("t.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dead_end_check_cases() {
        let naive = Mission::naive();
        let still: Vec<_> = (0..300).map(|i| record(i as f64 * 0.01, 0.01)).collect();
        assert!(dead_end_check(&still, &naive).unwrap());
        let moving: Vec<_> = (0..300).map(|i| record(i as f64 * 0.01, 1.0)).collect();
        assert!(!dead_end_check(&moving, &naive).unwrap());
        let short: Vec<_> = (0..100).map(|i| record(i as f64 * 0.01, 0.0)).collect();
        assert!(matches!(
            dead_end_check(&short, &naive),
            Err(Error::TraceTooShort(_))
        ));
        assert!(dead_end_check(&still, &Mission::Hover).is_err());
    }

    #[test]
    fn scenario_json_rejects_unknown_keys() {
        let json = serde_json::to_string(&Scenario::corridor()).unwrap();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(back, Scenario::corridor());
        let bad = json.replacen('{', "{\"bogus\":1,", 1);
        assert!(matches!(Scenario::from_json(&bad), Err(Error::Scenario(_))));
    }

    #[test]
    fn scenario_defaults() {
        let json = r#"{
            "scene": {"generator": {"kind": "random-box"}, "count": 0, "bounds": {"min": [0,0,0], "max": [1,1,1]}},
            "mission": {"kind": "hover"},
            "initial": {"position": [0, 0, -1]}
        }"#;
        let sc = Scenario::from_json(json).unwrap();
        assert_eq!(sc.control_rate, 100.0);
        assert_eq!(sc.map_rate, 10.0);
        assert_eq!(sc.k_nearest, 400);
        assert_eq!(sc.safety, SafetyParams::default());
        assert_eq!(sc.safety.epsilon_t, 7.5);
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut sc = hover_scenario(1.0);
        sc.map_rate = 200.0;
        assert!(run(&sc).is_err());
        sc.map_rate = 10.0;
        sc.control_rate = 0.0;
        assert!(run(&sc).is_err());
    }

    #[test]
    fn noisy_runs_are_seed_deterministic() {
        let mut sc = hover_scenario(2.0);
        sc.velocity_noise = 0.1;
        let a = run(&sc).unwrap().trace;
        let b = run(&sc).unwrap().trace;
        assert_eq!(trace_csv(&a), trace_csv(&b));
        sc.seed = 1;
        assert_ne!(trace_csv(&a), trace_csv(&run(&sc).unwrap().trace));
    }
}
