//! The safety filter: the smallest change to the reference input that keeps
//! both the composite collision barrier and the thrust barrier invariant.
//!
//! ```text
//! min (u − u_ref)ᵀ P (u − u_ref)
//! s.t. L_g h₁ · u ≥ −L_f h₁ − α₁ h₁
//!      L_g h₂ · u ≥ b₂
//! ```
//!
//! The two rows can only contradict each other when the virtual obstacle sits
//! on the upward thrust axis. There the thrust row is relaxed with a heavily
//! penalized slack; the collision row is never relaxed.

mod qp;

use nalgebra::{Matrix2x4, Matrix4, SMatrix, SVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::barrier::{
    chain_eval, thrust_barrier, ChainParams, ChainValues, ThrustBarrier, ThrustBarrierParams,
};
use crate::composite::{
    compose, virtual_obstacle_geometry, CompositeEvaluation, CompositeParams,
    VirtualObstacleGeometry,
};
use crate::obstacles::ObstacleMap;
use crate::vehicle::{RateThrustInput, VehicleParams, VehicleState};
use crate::{Error, Result};

/// Penalty on the squared thrust-row slack.
pub const SLACK_WEIGHT: f64 = 1e6;

/// Default threshold on `‖(x − x̂) × R e3‖ / ‖x − x̂‖`.
pub const SINGULAR_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterProblem {
    pub u_ref: Vector4<f64>,
    /// Symmetric positive-definite weight.
    pub p: Matrix4<f64>,
    /// Rows `[L_g h₁; L_g h₂]`.
    pub a: Matrix2x4<f64>,
    /// `[−L_f h₁ − α₁ h₁, b₂]`.
    pub b: Vector2<f64>,
    /// `false` drops the collision row (no obstacles in view).
    pub collision_row: bool,
}

impl FilterProblem {
    fn check(&self) -> Result<()> {
        if !self.u_ref.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("reference input"));
        }
        if !self.p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("weight matrix"));
        }
        let first = if self.collision_row { 0 } else { 1 };
        for i in first..2 {
            if !self.a.row(i).iter().all(|v| v.is_finite()) || !self.b[i].is_finite() {
                return Err(Error::NonFinite("constraint rows"));
            }
        }
        Ok(())
    }

    fn p_inverse(&self) -> Result<Matrix4<f64>> {
        let sym = 0.5 * (self.p + self.p.transpose());
        sym.cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::InvalidParameter("weight matrix is not positive definite".into()))
    }

    fn row(&self, i: usize) -> Vector4<f64> {
        self.a.row(i).transpose()
    }

    /// `(u − u_ref)ᵀ P (u − u_ref)`.
    pub fn cost(&self, u: &Vector4<f64>) -> f64 {
        let e = u - self.u_ref;
        e.dot(&(self.p * e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ActiveSet {
    pub collision: bool,
    pub thrust: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterResult {
    pub u_safe: Vector4<f64>,
    pub active_set: ActiveSet,
    /// Thrust-row relaxation, zero unless the fallback ran.
    pub slack: f64,
    /// Intervention size `(u_safe − u_ref)ᵀ P (u_safe − u_ref)`.
    pub cost: f64,
    /// The stacked rows were infeasible and the slack fallback produced `u_safe`.
    pub fallback: bool,
    /// Singularity monitor verdict for this cycle (set by [`filter_step`]).
    pub singular: bool,
    /// `[μ_collision, μ_thrust]`.
    pub multipliers: Vector2<f64>,
}

/// Solve the safety QP exactly; falls back to [`slack_fallback`] when the rows
/// admit no common solution.
pub fn solve(p: &FilterProblem) -> Result<FilterResult> {
    p.check()?;
    let p_inv = p.p_inverse()?;
    match solve_exact(p, &p_inv) {
        Some(r) => Ok(r),
        None => slack_fallback(p),
    }
}

fn solve_exact(p: &FilterProblem, p_inv: &Matrix4<f64>) -> Option<FilterResult> {
    let (rows, b, offset): (Vec<Vector4<f64>>, Vec<f64>, usize) = if p.collision_row {
        (vec![p.row(0), p.row(1)], vec![p.b[0], p.b[1]], 0)
    } else {
        (vec![p.row(1)], vec![p.b[1]], 1)
    };
    qp::solve_enumerated(p_inv, &p.u_ref, &rows, &b).map(|sol| {
        let mut multipliers = Vector2::zeros();
        let mut active = [false; 2];
        for k in 0..rows.len() {
            multipliers[k + offset] = sol.multipliers[k];
            active[k + offset] = sol.active[k];
        }
        FilterResult {
            u_safe: sol.u,
            active_set: ActiveSet {
                collision: active[0],
                thrust: active[1],
            },
            slack: 0.0,
            cost: p.cost(&sol.u),
            fallback: false,
            singular: false,
            multipliers,
        }
    })
}

/// Re-solve with the thrust row relaxed to `a₂·u ≥ b₂ − s`, `s ≥ 0`, adding
/// `w_s s²` to the objective. The collision row stays hard. Feasible problems
/// are solved exactly, without slack.
pub fn slack_fallback(p: &FilterProblem) -> Result<FilterResult> {
    p.check()?;
    let p_inv = p.p_inverse()?;
    if let Some(exact) = solve_exact(p, &p_inv) {
        return Ok(exact);
    }
    let mut p_inv5 = SMatrix::<f64, 5, 5>::zeros();
    p_inv5.fixed_view_mut::<4, 4>(0, 0).copy_from(&p_inv);
    p_inv5[(4, 4)] = 1.0 / SLACK_WEIGHT;
    let u_ref5 = SVector::<f64, 5>::new(p.u_ref[0], p.u_ref[1], p.u_ref[2], p.u_ref[3], 0.0);

    let lift = |a: Vector4<f64>, s: f64| SVector::<f64, 5>::new(a[0], a[1], a[2], a[3], s);
    let thrust_row = lift(p.row(1), 1.0);
    let slack_row = lift(Vector4::zeros(), 1.0);
    let (rows, b): (Vec<SVector<f64, 5>>, Vec<f64>) = if p.collision_row {
        (
            vec![lift(p.row(0), 0.0), thrust_row, slack_row],
            vec![p.b[0], p.b[1], 0.0],
        )
    } else {
        (vec![thrust_row, slack_row], vec![p.b[1], 0.0])
    };
    // The relaxed problem is always feasible: any u meeting the collision row
    // meets the thrust row for a large enough slack.
    let sol = qp::solve_enumerated(&p_inv5, &u_ref5, &rows, &b).ok_or_else(|| {
        Error::InvalidParameter("collision row is degenerate and unsatisfiable".into())
    })?;
    let u = sol.u.fixed_rows::<4>(0).into_owned();
    let (mu, active) = if p.collision_row {
        (
            Vector2::new(sol.multipliers[0], sol.multipliers[1]),
            ActiveSet {
                collision: sol.active[0],
                thrust: sol.active[1],
            },
        )
    } else {
        (
            Vector2::new(0.0, sol.multipliers[0]),
            ActiveSet {
                collision: false,
                thrust: sol.active[0],
            },
        )
    };
    Ok(FilterResult {
        u_safe: u,
        active_set: active,
        slack: sol.u[4].max(0.0),
        cost: p.cost(&u),
        fallback: true,
        singular: false,
        multipliers: mu,
    })
}

/// True when the virtual obstacle lies above the vehicle on its thrust axis,
/// the only configuration in which the two rows can conflict.
pub fn singularity_monitor(eval: &CompositeEvaluation, s: &VehicleState, tol: f64) -> bool {
    let g = virtual_obstacle_geometry(eval, s);
    g.above && g.normalized_colinearity < tol
}

/// Everything the filter needs besides the state, obstacles and `u_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub chain: ChainParams,
    pub composite: CompositeParams,
    pub thrust: ThrustBarrierParams,
    pub vehicle: VehicleParams,
    /// Diagonal of the input weight `P`, ordered `[p, q, r, τ]`.
    pub weight: [f64; 4],
    pub singular_tol: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            chain: ChainParams::default(),
            composite: CompositeParams::default(),
            thrust: ThrustBarrierParams::default(),
            vehicle: VehicleParams::default(),
            weight: [1.0; 4],
            singular_tol: SINGULAR_TOL,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.composite.validate()?;
        self.thrust.validate()?;
        self.vehicle.validate()?;
        if !self.weight.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(
                "input weights must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn weight_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.weight))
    }
}

/// All barrier quantities at one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierEvaluation {
    /// `None` when no obstacle is in view.
    pub composite: Option<CompositeEvaluation>,
    pub chains: Vec<ChainValues>,
    pub thrust: ThrustBarrier,
    pub geometry: Option<VirtualObstacleGeometry>,
}

impl BarrierEvaluation {
    pub fn min_nu(&self) -> [f64; 3] {
        self.chains.iter().fold([f64::INFINITY; 3], |acc, c| {
            [acc[0].min(c.nu0), acc[1].min(c.nu1), acc[2].min(c.nu2)]
        })
    }

    pub fn h1(&self) -> f64 {
        self.composite.as_ref().map_or(f64::INFINITY, |c| c.h1)
    }
}

pub fn evaluate_barriers(
    s: &VehicleState,
    map: &ObstacleMap,
    params: &FilterParams,
) -> Result<BarrierEvaluation> {
    let chains: Vec<ChainValues> = map
        .points
        .iter()
        .map(|p| chain_eval(s, p, &params.chain, &params.vehicle))
        .collect();
    let composite = if chains.is_empty() {
        None
    } else {
        Some(compose(&chains, map, s, &params.composite)?)
    };
    let geometry = composite.as_ref().map(|c| virtual_obstacle_geometry(c, s));
    Ok(BarrierEvaluation {
        composite,
        chains,
        thrust: thrust_barrier(s, &params.thrust),
        geometry,
    })
}

/// Stack the two barrier conditions into a [`FilterProblem`].
pub fn build_problem(
    eval: &BarrierEvaluation,
    u_ref: &RateThrustInput,
    params: &FilterParams,
) -> FilterProblem {
    let (row0, b0, collision_row) = match &eval.composite {
        Some(c) => (c.lg_h1, -c.lf_h1 - params.composite.alpha1 * c.h1, true),
        None => (Vector4::zeros(), 0.0, false),
    };
    FilterProblem {
        u_ref: u_ref.to_vector(),
        p: params.weight_matrix(),
        a: Matrix2x4::from_rows(&[row0.transpose(), eval.thrust.lg_h2.transpose()]),
        b: Vector2::new(b0, eval.thrust.b2),
        collision_row,
    }
}

/// Filter output plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterStep {
    pub u_safe: RateThrustInput,
    pub barriers: BarrierEvaluation,
    pub result: FilterResult,
}

/// Chains → composition → QP for one control cycle. `map` is the obstacle
/// subset in view.
pub fn filter_step(
    s: &VehicleState,
    map: &ObstacleMap,
    u_ref: &RateThrustInput,
    params: &FilterParams,
) -> Result<FilterStep> {
    if !s.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    let barriers = evaluate_barriers(s, map, params)?;
    let problem = build_problem(&barriers, u_ref, params);
    let mut result = solve(&problem)?;
    result.singular = barriers
        .composite
        .as_ref()
        .is_some_and(|c| singularity_monitor(c, s, params.singular_tol));
    Ok(FilterStep {
        u_safe: RateThrustInput::from_vector(&result.u_safe),
        barriers,
        result,
    })
}
