//! Per-obstacle barrier chains and the minimum-thrust barrier.
//!
//! Each obstacle `x_i` gets the clearance metric `ν₀ = ‖x − x_i‖² − ε²`, which
//! has relative degree three in `u = [Ω, τ]`. Two exponential-barrier steps
//! with negative poles lift it to a relative-degree-one barrier:
//!
//! ```text
//! ν₁ = L_f ν₀ − p0 ν₀
//! ν₂ = L_f ν₁ − p1 ν₁
//! ```
//!
//! With `d = x − x_i` and `a = g e3 − (T/m) R e3` the drift is constant in `a`,
//! which gives the closed forms used below.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::vehicle::{Vec3, VehicleParams, VehicleState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub p0: f64,
    pub p1: f64,
    /// Clearance radius in m.
    pub epsilon: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            p0: -3.0,
            p1: -2.0,
            epsilon: 0.5,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 < 0.0 && self.p1 < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "chain poles must be negative, got p0 = {}, p1 = {}",
                self.p0, self.p1
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainValues {
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Drift derivative of `ν₂`.
    pub lf_nu2: f64,
    /// Input sensitivity of `ν₂`, ordered `[p, q, r, τ]`. The yaw entry is
    /// always zero.
    pub lg_nu2: Vector4<f64>,
}

/// Evaluate the barrier chain of obstacle `xi` at state `s`.
pub fn chain_eval(
    s: &VehicleState,
    xi: &Vec3,
    cp: &ChainParams,
    vp: &VehicleParams,
) -> ChainValues {
    let d = s.x - xi;
    let a = s.acceleration(vp);
    let dd = d.norm_squared();
    let dv = d.dot(&s.v);
    let da = d.dot(&a);
    let vv = s.v.norm_squared();
    let va = s.v.dot(&a);

    let nu0 = dd - cp.epsilon * cp.epsilon;
    let nu1 = 2.0 * dv - cp.p0 * nu0;
    let lf_nu1 = 2.0 * vv + 2.0 * da - 2.0 * cp.p0 * dv;
    let nu2 = lf_nu1 - cp.p1 * nu1;

    // ȧ vanishes along the drift, so L_f(2‖v‖² + 2 d·a) = 6 v·a.
    let lf_nu2 = 6.0 * va - 2.0 * cp.p0 * (vv + da) - cp.p1 * lf_nu1;

    // ν₂ sees the input only through 2 d·a, and
    // ȧ = (T/m) R [e3]× Ω − (τ/m) R e3.
    let b = s.r.inverse_transform_vector(&d);
    let k = 2.0 * s.thrust / vp.m;
    let lg_nu2 = Vector4::new(k * b.y, -k * b.x, 0.0, -2.0 / vp.m * b.z);

    ChainValues {
        nu0,
        nu1,
        nu2,
        lf_nu2,
        lg_nu2,
    }
}

/// `ν₂` alone, for callers that differentiate it numerically.
pub fn nu2_value(s: &VehicleState, xi: &Vec3, cp: &ChainParams, a: &Vec3) -> f64 {
    let d = s.x - xi;
    let dv = d.dot(&s.v);
    let nu0 = d.norm_squared() - cp.epsilon * cp.epsilon;
    let nu1 = 2.0 * dv - cp.p0 * nu0;
    let lf_nu1 = 2.0 * s.v.norm_squared() + 2.0 * d.dot(a) - 2.0 * cp.p0 * dv;
    lf_nu1 - cp.p1 * nu1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustBarrierParams {
    /// Minimum thrust margin in N.
    #[serde(rename = "epsilon_T")]
    pub epsilon_t: f64,
    /// Class-K gain in 1/s.
    pub alpha2: f64,
}

impl Default for ThrustBarrierParams {
    fn default() -> Self {
        Self {
            epsilon_t: 7.5,
            alpha2: 5.0,
        }
    }
}

impl ThrustBarrierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_t >= 0.0) || !(self.alpha2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "thrust barrier needs epsilon_T >= 0 and alpha2 > 0, got {} and {}",
                self.epsilon_t, self.alpha2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThrustBarrier {
    pub h2: f64,
    pub lf_h2: f64,
    pub lg_h2: Vector4<f64>,
    /// Right-hand side of `lg_h2 · u ≥ b2`.
    pub b2: f64,
}

pub fn thrust_barrier(s: &VehicleState, tp: &ThrustBarrierParams) -> ThrustBarrier {
    let h2 = s.thrust - tp.epsilon_t;
    let lf_h2 = 0.0;
    ThrustBarrier {
        h2,
        lf_h2,
        lg_h2: Vector4::new(0.0, 0.0, 0.0, 1.0),
        b2: -tp.alpha2 * h2 - lf_h2,
    }
}
