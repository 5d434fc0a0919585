//! Third-order multirotor model.
//!
//! World frame is NED, body frame is FRD, so gravity is `+g e3` and the thrust
//! acts along `-R e3`. The state is `(x, v, R, T)` and the input is the body
//! rate `Ω` together with the thrust rate `τ`:
//!
//! ```text
//! ẋ = v
//! v̇ = g e3 - (T/m) R e3
//! Ṙ = R [Ω]×
//! Ṫ = τ
//! ```

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Body (FRD) to world (NED) rotation.
pub type RotationMatrix = Rotation3<f64>;

/// Unit vector along the world down axis.
pub fn e3() -> Vec3 {
    Vec3::z()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Mass in kg.
    pub m: f64,
    /// Gravity in m/s².
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { m: 2.58, g: 9.81 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {}",
                self.m
            )));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gravity must be positive, got {}",
                self.g
            )));
        }
        Ok(())
    }

    /// Thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.m * self.g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: Vec3,
    pub v: Vec3,
    pub r: RotationMatrix,
    /// Collective thrust in N.
    pub thrust: f64,
}

impl VehicleState {
    /// Level hover at `x`, at rest, with thrust balancing gravity.
    pub fn hover(x: Vec3, p: &VehicleParams) -> Self {
        Self {
            x,
            v: Vec3::zeros(),
            r: RotationMatrix::identity(),
            thrust: p.hover_thrust(),
        }
    }

    /// World-frame body down axis `R e3`.
    pub fn thrust_axis(&self) -> Vec3 {
        self.r * e3()
    }

    /// Acceleration under the current thrust and attitude.
    pub fn acceleration(&self, p: &VehicleParams) -> Vec3 {
        p.g * e3() - (self.thrust / p.m) * self.thrust_axis()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|c| c.is_finite())
            && self.v.iter().all(|c| c.is_finite())
            && self.r.matrix().iter().all(|c| c.is_finite())
            && self.thrust.is_finite()
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.r)
    }
}

/// Body rates and thrust rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateThrustInput {
    /// Body rates `[p, q, r]` in rad/s.
    pub omega: Vec3,
    /// Thrust rate in N/s.
    pub tau: f64,
}

impl RateThrustInput {
    pub fn new(omega: Vec3, tau: f64) -> Self {
        Self { omega, tau }
    }

    /// Ordered `[p, q, r, τ]`.
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.omega.x, self.omega.y, self.omega.z, self.tau)
    }

    pub fn from_vector(u: &Vector4<f64>) -> Self {
        Self {
            omega: Vec3::new(u[0], u[1], u[2]),
            tau: u[3],
        }
    }
}

/// Time derivative of a [`VehicleState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x_dot: Vec3,
    pub v_dot: Vec3,
    pub r_dot: Matrix3<f64>,
    pub thrust_dot: f64,
}

/// Skew-symmetric matrix with `hat(a) * b == a.cross(&b)`.
pub fn hat(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Inverse of [`hat`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues exponential of a rotation vector.
pub fn rotation_exp(w: &Vec3) -> RotationMatrix {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let k2 = k * k;
    let (a, b) = if theta2.sqrt() < 1e-8 {
        // second-order Taylor expansion of sin(θ)/θ and (1 - cos θ)/θ²
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    RotationMatrix::from_matrix_unchecked(Matrix3::identity() + k * a + k2 * b)
}

/// Gram–Schmidt re-orthonormalization of the columns of `r`.
pub fn orthonormalize(r: &RotationMatrix) -> RotationMatrix {
    let m = r.matrix();
    let c0 = m.column(0).normalize();
    let c1 = (m.column(1) - c0 * c0.dot(&m.column(1))).normalize();
    let c2 = c0.cross(&c1);
    RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[c0, c1, c2]))
}

/// Frobenius norm of `RᵀR - I`.
pub fn orthogonality_error(r: &RotationMatrix) -> f64 {
    (r.matrix().transpose() * r.matrix() - Matrix3::identity()).norm()
}

/// Uncontrolled vector field (the model with `u = 0`).
pub fn drift(s: &VehicleState, p: &VehicleParams) -> StateDerivative {
    StateDerivative {
        x_dot: s.v,
        v_dot: s.acceleration(p),
        r_dot: Matrix3::zeros(),
        thrust_dot: 0.0,
    }
}

/// Advance the state by `dt` holding `u` constant.
///
/// Position, velocity and thrust use classical RK4. The attitude is advanced
/// with the exact exponential, and every RK4 stage sees the attitude at its own
/// stage time, so the step stays on SO(3).
pub fn step(s: &VehicleState, u: &RateThrustInput, p: &VehicleParams, dt: f64) -> VehicleState {
    let half = rotation_exp(&(u.omega * (0.5 * dt)));
    let r_half = s.r * half;
    let r_end = r_half * half;

    let accel = |r: &RotationMatrix, thrust: f64| p.g * e3() - (thrust / p.m) * (r * e3());

    let t_half = s.thrust + 0.5 * dt * u.tau;
    let t_end = s.thrust + dt * u.tau;

    let k1_x = s.v;
    let k1_v = accel(&s.r, s.thrust);
    let k2_x = s.v + 0.5 * dt * k1_v;
    let k2_v = accel(&r_half, t_half);
    let k3_x = s.v + 0.5 * dt * k2_v;
    let k3_v = k2_v;
    let k4_x = s.v + dt * k3_v;
    let k4_v = accel(&r_end, t_end);

    VehicleState {
        x: s.x + (dt / 6.0) * (k1_x + 2.0 * k2_x + 2.0 * k3_x + k4_x),
        v: s.v + (dt / 6.0) * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v),
        r: r_end,
        thrust: t_end,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z(theta: f64) -> RotationMatrix {
        RotationMatrix::from_axis_angle(&Vec3::z_axis(), theta)
    }

    #[test]
    fn hat_matches_cross_product() {
        let h = hat(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(h * Vec3::x(), Vec3::y());
        assert_eq!(hat(&Vec3::zeros()), Matrix3::zeros());
        let a = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(&a).transpose(), -hat(&a));
        assert_eq!(vee(&hat(&a)), a);
    }

    #[test]
    fn drift_at_hover_and_free_fall() {
        let p = VehicleParams::default();
        let hover = VehicleState::hover(Vec3::zeros(), &p);
        assert_relative_eq!(drift(&hover, &p).v_dot, Vec3::zeros(), epsilon = 1e-14);

        let fall = VehicleState {
            thrust: 0.0,
            ..hover
        };
        assert_eq!(drift(&fall, &p).v_dot, Vec3::new(0.0, 0.0, p.g));
    }

    #[test]
    fn drift_tilted_vertical_component() {
        let p = VehicleParams::default();
        let theta = 0.4;
        let s = VehicleState {
            r: RotationMatrix::from_axis_angle(&Vec3::y_axis(), theta),
            ..VehicleState::hover(Vec3::zeros(), &p)
        };
        let d = drift(&s, &p);
        assert_relative_eq!(d.v_dot.z, p.g * (1.0 - theta.cos()), epsilon = 1e-12);
        assert_relative_eq!(d.v_dot.x, -p.g * theta.sin(), epsilon = 1e-12);
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = VehicleParams::default();
        let s0 = VehicleState::hover(Vec3::new(1.0, -2.0, -1.3), &p);
        let s1 = step(&s0, &RateThrustInput::default(), &p, 0.37);
        assert!((s1.x - s0.x).norm() < 1e-12);
        assert!(s1.v.norm() < 1e-12);
        assert!((s1.thrust - s0.thrust).abs() < 1e-12);
    }

    #[test]
    fn yaw_rate_rotates_about_e3() {
        let p = VehicleParams::default();
        let s0 = VehicleState::hover(Vec3::zeros(), &p);
        let u = RateThrustInput::new(Vec3::new(0.0, 0.0, 0.8), 0.0);
        let s1 = step(&s0, &u, &p, 0.05);
        assert_relative_eq!(s1.r.matrix(), rot_z(0.04).matrix(), epsilon = 1e-14);
    }

    #[test]
    fn thrust_rate_is_linear() {
        let p = VehicleParams::default();
        let s0 = VehicleState {
            thrust: 5.0,
            ..VehicleState::hover(Vec3::zeros(), &p)
        };
        let s1 = step(&s0, &RateThrustInput::new(Vec3::zeros(), 1.0), &p, 0.01);
        assert_relative_eq!(s1.thrust, 5.01, epsilon = 1e-14);
    }

    #[test]
    fn exponential_special_cases() {
        assert_relative_eq!(
            rotation_exp(&Vec3::new(0.0, 0.0, FRAC_PI_2)).matrix(),
            rot_z(FRAC_PI_2).matrix(),
            epsilon = 1e-15
        );
        assert_eq!(rotation_exp(&Vec3::zeros()).matrix(), &Matrix3::identity());
        // small-angle branch stays consistent with the closed form
        let w = Vec3::new(3e-9, -1e-9, 2e-9);
        let r = rotation_exp(&w);
        assert_relative_eq!(
            r.matrix(),
            &(Matrix3::identity() + hat(&w)),
            epsilon = 1e-16
        );
    }

    #[test]
    fn free_fall_velocity_is_exact() {
        let p = VehicleParams::default();
        let mut s = VehicleState {
            thrust: 0.0,
            ..VehicleState::hover(Vec3::zeros(), &p)
        };
        for _ in 0..100 {
            s = step(&s, &RateThrustInput::default(), &p, 0.01);
        }
        assert!((s.v.z - p.g).abs() < 1e-8);
        assert!((s.x.z - 0.5 * p.g).abs() < 1e-8);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let m = rot_z(0.3).matrix() + Matrix3::from_element(1e-4);
        let r = orthonormalize(&RotationMatrix::from_matrix_unchecked(m));
        assert!(orthogonality_error(&r) < 1e-12);
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }
}
