#![allow(dead_code)]

use composite_cbf::FilterProblem;
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random SPD weight with eigenvalues in [0.5, 2].
pub fn random_spd(rng: &mut ChaCha8Rng) -> Matrix4<f64> {
    let q = Matrix4::from_fn(|_, _| gauss(rng)).qr().q();
    let d = Vector4::from_fn(|_, _| 0.5 + 1.5 * rng.random::<f64>());
    let p = q * Matrix4::from_diagonal(&d) * q.transpose();
    0.5 * (p + p.transpose())
}

/// Random feasible instance whose constraint Gram matrix `A P⁻¹ Aᵀ` has its
/// smallest eigenvalue at least 0.5, so the gradient oracle below converges
/// to well under 1e-9 inside its iteration budget.
pub fn random_feasible_qp(rng: &mut ChaCha8Rng) -> FilterProblem {
    loop {
        let p = random_spd(rng);
        let a = Matrix2x4::from_fn(|_, _| gauss(rng));
        let p_inv = p.try_inverse().unwrap();
        let g: Matrix2<f64> = a * p_inv * a.transpose();
        if g.symmetric_eigenvalues().min() < 0.5 {
            continue;
        }
        let u_ref = Vector4::from_fn(|_, _| gauss(rng));
        let b = a * u_ref + Vector2::from_fn(|_, _| rng.random_range(-1.0..1.0));
        return FilterProblem {
            u_ref,
            p,
            a,
            b,
            collision_row: true,
        };
    }
}

/// Projected gradient ascent on the dual:
/// `μ ← max(0, μ + η (b − A u(μ)))`, `u(μ) = u_ref + ½ P⁻¹ Aᵀ μ`.
pub fn projected_gradient(
    p: &FilterProblem,
    iterations: usize,
    step: f64,
) -> (Vector4<f64>, Vector2<f64>) {
    let p_inv = p.p.try_inverse().unwrap();
    let half = 0.5 * p_inv * p.a.transpose();
    let mut mu = Vector2::zeros();
    for _ in 0..iterations {
        let u = p.u_ref + half * mu;
        mu = (mu + step * (p.b - p.a * u)).map(|m| m.max(0.0));
    }
    (p.u_ref + half * mu, mu)
}

pub fn cost(p: &FilterProblem, u: &Vector4<f64>) -> f64 {
    let e = u - p.u_ref;
    e.dot(&(p.p * e))
}

#[derive(Debug, Clone, Copy)]
pub struct Kkt {
    pub stationarity: f64,
    /// Largest constraint violation, counting the thrust-row slack.
    pub primal: f64,
    pub complementarity: f64,
    /// Most negative multiplier, as a positive number.
    pub dual: f64,
}

impl Kkt {
    pub fn holds(&self) -> bool {
        self.stationarity < 1e-7
            && self.primal < 1e-8
            && self.complementarity < 1e-7
            && self.dual == 0.0
    }
}

pub fn kkt(p: &FilterProblem, u: &Vector4<f64>, mu: &Vector2<f64>, slack: f64) -> Kkt {
    let b = p.b - Vector2::new(0.0, slack);
    let gap = p.a * u - b;
    Kkt {
        stationarity: (2.0 * p.p * (u - p.u_ref) - p.a.transpose() * mu).norm(),
        primal: gap.map(|g| (-g).max(0.0)).max(),
        complementarity: mu.component_mul(&gap).abs().max(),
        dual: mu.map(|m| (-m).max(0.0)).max(),
    }
}
