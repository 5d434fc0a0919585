//! Soft-min composition of many barrier chains into a single barrier.
//!
//! ```text
//! h₁ = −(γ/κ) log Σᵢ exp(−κ tanh(ν₂ᵢ/γ))
//! ```
//!
//! The chain rule gives `∂h₁/∂ν₂ᵢ = λᵢ sech²(ν₂ᵢ/γ)` with
//! `λᵢ = exp(−κ (tanh(ν₂ᵢ/γ) − h₁/γ))`, so the weights sum to one and the Lie
//! derivatives of `h₁` are weighted sums of the per-obstacle ones.
//!
//! All sums run in index order with compensated accumulation. The parallel
//! path splits the obstacles into fixed chunks and merges the partial sums
//! pairwise in a fixed order, so results only depend on the chunk size.

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{nu2_value, ChainParams, ChainValues};
use crate::obstacles::ObstacleMap;
use crate::vehicle::{rotation_exp, Vec3, VehicleParams, VehicleState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    /// Soft-min sharpness.
    pub kappa: f64,
    /// tanh saturation scale.
    pub gamma: f64,
    /// Class-K gain of the composite condition, in 1/s.
    pub alpha1: f64,
}

impl Default for CompositeParams {
    fn default() -> Self {
        Self {
            kappa: 20.0,
            gamma: 40.0,
            alpha1: 1.0,
        }
    }
}

impl CompositeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.gamma > 0.0 && self.alpha1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa, gamma and alpha1 must be positive, got {}, {}, {}",
                self.kappa, self.gamma, self.alpha1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeEvaluation {
    pub h1: f64,
    pub lf_h1: f64,
    /// Ordered `[p, q, r, τ]`.
    pub lg_h1: Vector4<f64>,
    /// Soft-min weights, one per obstacle.
    pub lambda: Vec<f64>,
    /// Virtual obstacle `Σ λᵢ sech²(ν₂ᵢ/γ) xᵢ`.
    pub x_hat: Vec3,
    /// `Σ λᵢ sech²(ν₂ᵢ/γ)`, at most one.
    pub weight_sum: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(mut self, other: Compensated) -> Compensated {
        self.add(other.sum);
        self.carry += other.carry;
        self
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Unnormalized sums over a block of obstacles, relative to a shift `m`:
/// `Σ e^{aᵢ−m}` and `Σ e^{aᵢ−m} sech²ᵢ (lf, lg, xᵢ, 1)`.
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    mass: Compensated,
    lf: Compensated,
    lg: [Compensated; 4],
    x_hat: [Compensated; 3],
    weight: Compensated,
}

impl Partial {
    fn merge(mut self, o: Partial) -> Partial {
        self.mass = self.mass.merge(o.mass);
        self.lf = self.lf.merge(o.lf);
        for (a, b) in self.lg.iter_mut().zip(o.lg) {
            *a = a.merge(b);
        }
        for (a, b) in self.x_hat.iter_mut().zip(o.x_hat) {
            *a = a.merge(b);
        }
        self.weight = self.weight.merge(o.weight);
        self
    }
}

fn exponent(nu2: f64, cp: &CompositeParams) -> f64 {
    -cp.kappa * (nu2 / cp.gamma).tanh()
}

fn accumulate(
    chains: &[ChainValues],
    points: &[Vec3],
    shift: f64,
    cp: &CompositeParams,
) -> Partial {
    let mut acc = Partial::default();
    for (c, p) in chains.iter().zip(points) {
        let t = (c.nu2 / cp.gamma).tanh();
        let e = (-cp.kappa * t - shift).exp();
        let w = e * (1.0 - t * t);
        acc.mass.add(e);
        acc.lf.add(w * c.lf_nu2);
        for k in 0..4 {
            acc.lg[k].add(w * c.lg_nu2[k]);
        }
        for k in 0..3 {
            acc.x_hat[k].add(w * p[k]);
        }
        acc.weight.add(w);
    }
    acc
}

/// Merge partials pairwise in a fixed tree order.
fn pairwise(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.merge(*b),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect();
    }
    parts.pop().unwrap_or_default()
}

fn check_inputs(chains: &[ChainValues], obstacles: &ObstacleMap) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::EmptyComposite);
    }
    if chains.len() != obstacles.len() {
        return Err(Error::InvalidParameter(format!(
            "{} chains for {} obstacles",
            chains.len(),
            obstacles.len()
        )));
    }
    Ok(())
}

fn finish(
    chains: &[ChainValues],
    shift: f64,
    total: Partial,
    cp: &CompositeParams,
) -> CompositeEvaluation {
    let mass = total.mass.value();
    let lse = shift + mass.ln();
    let h1 = -(cp.gamma / cp.kappa) * lse;
    let lambda = chains
        .iter()
        .map(|c| (exponent(c.nu2, cp) - lse).exp())
        .collect();
    let lg = Vector4::from_fn(|k, _| total.lg[k].value() / mass);
    CompositeEvaluation {
        h1,
        lf_h1: total.lf.value() / mass,
        lg_h1: lg,
        lambda,
        x_hat: Vec3::from_fn(|k, _| total.x_hat[k].value() / mass),
        weight_sum: total.weight.value() / mass,
    }
}

/// Compose the chains of every obstacle into `h₁` and its Lie derivatives.
///
/// `chains[i]` must belong to `obstacles.points[i]`. The state is accepted for
/// symmetry with [`compose_numeric`]; everything state dependent is already in
/// the chains.
pub fn compose(
    chains: &[ChainValues],
    obstacles: &ObstacleMap,
    _s: &VehicleState,
    cp: &CompositeParams,
) -> Result<CompositeEvaluation> {
    check_inputs(chains, obstacles)?;
    let shift = chains
        .iter()
        .map(|c| exponent(c.nu2, cp))
        .fold(f64::NEG_INFINITY, f64::max);
    let total = accumulate(chains, &obstacles.points, shift, cp);
    Ok(finish(chains, shift, total, cp))
}

/// [`compose`] split over fixed chunks of `chunk` obstacles on the rayon pool.
///
/// Bitwise reproducible for a given chunk size, independent of thread count.
pub fn compose_parallel(
    chains: &[ChainValues],
    obstacles: &ObstacleMap,
    cp: &CompositeParams,
    chunk: usize,
) -> Result<CompositeEvaluation> {
    check_inputs(chains, obstacles)?;
    let chunk = chunk.max(1);
    let shift = chains
        .par_iter()
        .map(|c| exponent(c.nu2, cp))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let parts: Vec<Partial> = chains
        .par_chunks(chunk)
        .zip(obstacles.points.par_chunks(chunk))
        .map(|(c, p)| accumulate(c, p, shift, cp))
        .collect();
    Ok(finish(chains, shift, pairwise(parts), cp))
}

/// `h₁` evaluated straight from the obstacle positions.
pub fn composite_value(
    obstacles: &ObstacleMap,
    s: &VehicleState,
    cp: &CompositeParams,
    chain: &ChainParams,
    vp: &VehicleParams,
) -> f64 {
    let a = s.acceleration(vp);
    let exps: Vec<f64> = obstacles
        .points
        .iter()
        .map(|p| exponent(nu2_value(s, p, chain, &a), cp))
        .collect();
    let shift = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = Compensated::default();
    for e in &exps {
        mass.add((e - shift).exp());
    }
    -(cp.gamma / cp.kappa) * (shift + mass.value().ln())
}

/// Lie derivatives of `h₁` by central differences.
///
/// The drift derivative differences `h₁` along `(ẋ, v̇) = (v, a)`, the input
/// sensitivities perturb the attitude by `R exp(±δ eₖ)` and the thrust by `±δ`.
pub fn compose_numeric(
    obstacles: &ObstacleMap,
    s: &VehicleState,
    cp: &CompositeParams,
    chain: &ChainParams,
    vp: &VehicleParams,
) -> Result<(f64, Vector4<f64>)> {
    if obstacles.is_empty() {
        return Err(Error::EmptyComposite);
    }
    let h = |st: &VehicleState| composite_value(obstacles, st, cp, chain, vp);
    let a = s.acceleration(vp);

    let dt = 1e-6 * s.x.norm().max(1.0);
    let forward = VehicleState {
        x: s.x + dt * s.v,
        v: s.v + dt * a,
        ..*s
    };
    let backward = VehicleState {
        x: s.x - dt * s.v,
        v: s.v - dt * a,
        ..*s
    };
    let lf = (h(&forward) - h(&backward)) / (2.0 * dt);

    let mut lg = Vector4::zeros();
    let dr = 1e-6;
    for k in 0..3 {
        let mut w = Vec3::zeros();
        w[k] = dr;
        let plus = VehicleState {
            r: s.r * rotation_exp(&w),
            ..*s
        };
        let minus = VehicleState {
            r: s.r * rotation_exp(&-w),
            ..*s
        };
        lg[k] = (h(&plus) - h(&minus)) / (2.0 * dr);
    }
    let dthrust = 1e-6 * s.thrust.abs().max(1.0);
    let plus = VehicleState {
        thrust: s.thrust + dthrust,
        ..*s
    };
    let minus = VehicleState {
        thrust: s.thrust - dthrust,
        ..*s
    };
    lg[3] = (h(&plus) - h(&minus)) / (2.0 * dthrust);
    Ok((lf, lg))
}

/// Where the virtual obstacle sits relative to the thrust axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VirtualObstacleGeometry {
    /// Virtual obstacle lies on the upward side of the body, with positive thrust.
    pub above: bool,
    /// `‖(x − x̂) × R e3‖` in m.
    pub colinearity: f64,
    /// Colinearity divided by `‖x − x̂‖`: the sine of the angle to the thrust axis.
    pub normalized_colinearity: f64,
}

/// Geometry of `x − x̂` against the body axis `R e3`.
///
/// `x̂` is divided by the weight sum first, which makes it a convex combination
/// of the obstacles and the relative vector parallel to the composite regressor.
pub fn virtual_obstacle_geometry(
    eval: &CompositeEvaluation,
    s: &VehicleState,
) -> VirtualObstacleGeometry {
    let anchor = if eval.weight_sum > 0.0 {
        eval.x_hat / eval.weight_sum
    } else {
        eval.x_hat
    };
    let rel = s.x - anchor;
    let axis = s.thrust_axis();
    let colinearity = rel.cross(&axis).norm();
    let dist = rel.norm();
    VirtualObstacleGeometry {
        above: s.thrust > 0.0 && rel.dot(&axis) > 0.0,
        colinearity,
        normalized_colinearity: if dist > 0.0 { colinearity / dist } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::chain_eval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_with_nu2(nu2: f64) -> ChainValues {
        ChainValues {
            nu0: 1.0,
            nu1: 1.0,
            nu2,
            lf_nu2: 0.3,
            lg_nu2: Vector4::new(1.0, -1.0, 0.0, 0.5),
        }
    }

    fn dummy_map(n: usize) -> ObstacleMap {
        ObstacleMap::new((0..n).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect(), 0.5)
    }

    fn hover() -> VehicleState {
        VehicleState::hover(Vec3::zeros(), &VehicleParams::default())
    }

    #[test]
    fn single_term_collapses() {
        let cp = CompositeParams::default();
        let e = compose(&[chain_with_nu2(4.5)], &dummy_map(1), &hover(), &cp).unwrap();
        assert!((e.h1 - 40.0 * (4.5f64 / 40.0).tanh()).abs() < 1e-12);
        assert!((e.lambda[0] - 1.0).abs() < 1e-15);
        let sech2 = 1.0 - (4.5f64 / 40.0).tanh().powi(2);
        assert!((e.lf_h1 - sech2 * 0.3).abs() < 1e-14);
    }

    #[test]
    fn symmetric_pair() {
        let cp = CompositeParams::default();
        let c = 7.0;
        let e = compose(
            &[chain_with_nu2(c), chain_with_nu2(c)],
            &dummy_map(2),
            &hover(),
            &cp,
        )
        .unwrap();
        let expect = 40.0 * (c / 40.0).tanh() - (40.0 / 20.0) * 2f64.ln();
        assert!((e.h1 - expect).abs() < 1e-12);
        assert!((e.lambda[0] - 0.5).abs() < 1e-15 && (e.lambda[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let cp = CompositeParams::default();
        assert!(matches!(
            compose(&[], &dummy_map(0), &hover(), &cp),
            Err(Error::EmptyComposite)
        ));
        assert!(compose(&[chain_with_nu2(1.0)], &dummy_map(2), &hover(), &cp).is_err());
        let vp = VehicleParams::default();
        assert!(
            compose_numeric(&dummy_map(0), &hover(), &cp, &ChainParams::default(), &vp).is_err()
        );
    }

    #[test]
    fn numeric_yaw_entry_vanishes_at_hover() {
        let vp = VehicleParams::default();
        let map = ObstacleMap::new(vec![Vec3::new(1.5, 0.0, 0.0)], 0.5);
        let (_, lg) = compose_numeric(
            &map,
            &hover(),
            &CompositeParams::default(),
            &ChainParams::default(),
            &vp,
        )
        .unwrap();
        assert!(lg[2].abs() < 1e-7);
    }

    #[test]
    fn sharp_single_term_limit() {
        let vp = VehicleParams::default();
        let chain = ChainParams::default();
        let cp = CompositeParams {
            kappa: 1e4,
            ..Default::default()
        };
        let map = ObstacleMap::new(vec![Vec3::new(1.2, 0.4, -0.3)], 0.5);
        let s = VehicleState {
            v: Vec3::new(0.4, -0.1, 0.2),
            ..hover()
        };
        let c = chain_eval(&s, &map.points[0], &chain, &vp);
        let (lf, _) = compose_numeric(&map, &s, &cp, &chain, &vp).unwrap();
        let sech2 = 1.0 - (c.nu2 / cp.gamma).tanh().powi(2);
        assert!((lf - sech2 * c.lf_nu2).abs() < 1e-6);
    }

    #[test]
    fn parallel_matches_serial_and_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vp = VehicleParams::default();
        let chain = ChainParams::default();
        let cp = CompositeParams::default();
        let map = ObstacleMap::new(
            (0..1000)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    )
                })
                .collect(),
            0.5,
        );
        let s = hover();
        let chains: Vec<_> = map
            .points
            .iter()
            .map(|p| chain_eval(&s, p, &chain, &vp))
            .collect();
        let serial = compose(&chains, &map, &s, &cp).unwrap();
        let par = compose_parallel(&chains, &map, &cp, 64).unwrap();
        assert!((serial.h1 - par.h1).abs() < 1e-12);
        assert!((serial.lg_h1 - par.lg_h1).norm() < 1e-12);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let again = pool.install(|| compose_parallel(&chains, &map, &cp, 64).unwrap());
        assert_eq!(par, again);
    }

    #[test]
    fn geometry_cases() {
        let base = |x_hat: Vec3| CompositeEvaluation {
            h1: 0.0,
            lf_h1: 0.0,
            lg_h1: Vector4::zeros(),
            lambda: vec![1.0],
            x_hat,
            weight_sum: 1.0,
        };
        let s = hover();
        // NED: "above" means smaller z
        let g = virtual_obstacle_geometry(&base(Vec3::new(0.0, 0.0, -1.0)), &s);
        assert!(g.above);
        assert_eq!(g.colinearity, 0.0);
        let g = virtual_obstacle_geometry(&base(Vec3::new(-1.0, 0.0, 0.0)), &s);
        assert!(!g.above);
        assert!((g.colinearity - 1.0).abs() < 1e-15);
        let g = virtual_obstacle_geometry(&base(Vec3::new(0.0, 0.0, 1.0)), &s);
        assert!(!g.above);
        let zero_thrust = VehicleState { thrust: 0.0, ..s };
        assert!(!virtual_obstacle_geometry(&base(Vec3::new(0.0, 0.0, -1.0)), &zero_thrust).above);
    }
}
