//! Nominal geometric tracking controller for the rate/thrust-rate model, plus
//! the mission references that drive it.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::vehicle::{e3, vee, RateThrustInput, RotationMatrix, Vec3, VehicleParams, VehicleState};
use crate::{Error, Result};

/// Diagonal gains of the position loop plus the attitude and thrust gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    #[serde(rename = "Kx")]
    pub kx: [f64; 3],
    #[serde(rename = "Kv")]
    pub kv: [f64; 3],
    #[serde(rename = "kR")]
    pub k_r: f64,
    #[serde(rename = "kT")]
    pub k_t: f64,
}

impl ControllerGains {
    /// Defaults scaled by the vehicle mass.
    pub fn for_mass(m: f64) -> Self {
        Self {
            kx: [6.0 * m; 3],
            kv: [4.0 * m; 3],
            k_r: 8.0,
            k_t: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            self.kx.iter().chain(&self.kv).all(|k| *k > 0.0) && self.k_r > 0.0 && self.k_t > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(
                "controller gains must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Translational reference before the attitude is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Setpoint {
    pub x_d: Vec3,
    pub v_d: Vec3,
    pub a_d: Vec3,
    pub yaw_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSetpoint {
    pub x_d: Vec3,
    pub v_d: Vec3,
    pub a_d: Vec3,
    pub yaw_d: f64,
    pub r_d: RotationMatrix,
    pub omega_d: Vec3,
}

/// `m g e3 − m a_d + Kx e_x + Kv e_v`, the force the thrust axis must deliver.
pub fn commanded_force(
    s: &VehicleState,
    sp: &Setpoint,
    gains: &ControllerGains,
    vp: &VehicleParams,
) -> Vec3 {
    let e_x = s.x - sp.x_d;
    let e_v = s.v - sp.v_d;
    let kx = Matrix3::from_diagonal(&Vec3::from(gains.kx));
    let kv = Matrix3::from_diagonal(&Vec3::from(gains.kv));
    vp.m * vp.g * e3() - vp.m * sp.a_d + kx * e_x + kv * e_v
}

/// Resolve the attitude reference: body down axis along the commanded force,
/// heading from `yaw_d`.
///
/// When the heading is parallel to the force the previous `b1` is reused if
/// one is given.
pub fn desired_attitude(
    s: &VehicleState,
    sp: &Setpoint,
    gains: &ControllerGains,
    vp: &VehicleParams,
    previous_b1: Option<Vec3>,
) -> Result<ReferenceSetpoint> {
    let f = commanded_force(s, sp, gains, vp);
    let norm = f.norm();
    if !(norm >= 1e-6) {
        return Err(Error::FreeFallCommand(norm));
    }
    let b3 = f / norm;
    let heading = Vec3::new(sp.yaw_d.cos(), sp.yaw_d.sin(), 0.0);
    let b1 = match resolve_b1(&b3, &heading) {
        Some(b1) => b1,
        None => previous_b1
            .and_then(|prev| resolve_b1(&b3, &prev))
            .ok_or(Error::DegenerateHeading)?,
    };
    let b2 = b3.cross(&b1);
    Ok(ReferenceSetpoint {
        x_d: sp.x_d,
        v_d: sp.v_d,
        a_d: sp.a_d,
        yaw_d: sp.yaw_d,
        r_d: RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3])),
        omega_d: Vec3::zeros(),
    })
}

fn resolve_b1(b3: &Vec3, heading: &Vec3) -> Option<Vec3> {
    let b2 = b3.cross(heading);
    let n = b2.norm();
    (n > 1e-6).then(|| (b2 / n).cross(b3))
}

/// Thrust demand: commanded force projected on the current body axis.
pub fn desired_thrust(
    s: &VehicleState,
    sp: &ReferenceSetpoint,
    gains: &ControllerGains,
    vp: &VehicleParams,
) -> f64 {
    let plain = Setpoint {
        x_d: sp.x_d,
        v_d: sp.v_d,
        a_d: sp.a_d,
        yaw_d: sp.yaw_d,
    };
    commanded_force(s, &plain, gains, vp).dot(&s.thrust_axis())
}

/// Attitude rate command `−(kR/2) vee(R_dᵀR − RᵀR_d) + RᵀR_d Ω_d`.
pub fn attitude_rates(s: &VehicleState, sp: &ReferenceSetpoint, k_r: f64) -> Vec3 {
    let r = s.r.matrix();
    let rd = sp.r_d.matrix();
    let err = rd.transpose() * r - r.transpose() * rd;
    -0.5 * k_r * vee(&err) + r.transpose() * rd * sp.omega_d
}

/// Reference input given an already filtered thrust-demand derivative.
pub fn reference_input(
    s: &VehicleState,
    sp: &ReferenceSetpoint,
    gains: &ControllerGains,
    vp: &VehicleParams,
    thrust_demand_rate: f64,
) -> RateThrustInput {
    let t_d = desired_thrust(s, sp, gains, vp);
    RateThrustInput {
        omega: attitude_rates(s, sp, gains.k_r),
        tau: gains.k_t * (t_d - s.thrust) + thrust_demand_rate,
    }
}

/// Backward difference of the thrust demand through a first-order low-pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustRateFilter {
    cutoff_hz: f64,
    previous: Option<f64>,
    rate: f64,
}

impl ThrustRateFilter {
    pub fn new(cutoff_hz: f64) -> Self {
        Self {
            cutoff_hz,
            previous: None,
            rate: 0.0,
        }
    }

    pub fn update(&mut self, demand: f64, dt: f64) -> f64 {
        if let Some(prev) = self.previous {
            let raw = (demand - prev) / dt;
            let tc = 1.0 / (2.0 * std::f64::consts::PI * self.cutoff_hz);
            let alpha = dt / (dt + tc);
            self.rate += alpha * (raw - self.rate);
        }
        self.previous = Some(demand);
        self.rate
    }
}

/// Stateful controller: holds the thrust-rate filter and the last heading.
#[derive(Debug, Clone)]
pub struct GeometricController {
    pub gains: ControllerGains,
    pub params: VehicleParams,
    filter: ThrustRateFilter,
    previous_b1: Option<Vec3>,
}

/// One controller evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput {
    pub input: RateThrustInput,
    pub reference: ReferenceSetpoint,
    pub thrust_demand: f64,
}

impl GeometricController {
    pub fn new(gains: ControllerGains, params: VehicleParams) -> Self {
        Self {
            gains,
            params,
            filter: ThrustRateFilter::new(20.0),
            previous_b1: None,
        }
    }

    pub fn compute(&mut self, s: &VehicleState, sp: &Setpoint, dt: f64) -> Result<ControlOutput> {
        let reference = desired_attitude(s, sp, &self.gains, &self.params, self.previous_b1)?;
        self.previous_b1 = Some(reference.r_d * Vec3::x());
        let thrust_demand = desired_thrust(s, &reference, &self.gains, &self.params);
        let rate = self.filter.update(thrust_demand, dt);
        let input = reference_input(s, &reference, &self.gains, &self.params, rate);
        Ok(ControlOutput {
            input,
            reference,
            thrust_demand,
        })
    }
}

/// What the vehicle is asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Mission {
    /// Constant velocity at a fixed altitude, ignoring obstacles.
    Naive {
        #[serde(default = "default_velocity")]
        velocity: [f64; 3],
        /// Height above ground in m (positive up).
        #[serde(default = "default_altitude")]
        altitude: f64,
    },
    /// Fly toward the closest obstacle.
    Adversarial {
        #[serde(default = "default_adversarial_speed")]
        speed: f64,
    },
    /// Hold the initial position.
    Hover,
    /// Regulate to a fixed position.
    Waypoint { position: [f64; 3] },
}

fn default_velocity() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_altitude() -> f64 {
    1.3
}

fn default_adversarial_speed() -> f64 {
    1.5
}

impl Mission {
    pub fn naive() -> Self {
        Mission::Naive {
            velocity: default_velocity(),
            altitude: default_altitude(),
        }
    }

    pub fn adversarial() -> Self {
        Mission::Adversarial {
            speed: default_adversarial_speed(),
        }
    }
}

/// Setpoint for the current state.
///
/// Velocity missions pin the horizontal position reference to the current
/// position, which zeroes the lateral position feedback. `home` is the hover
/// point and `nearest` the closest obstacle known to the caller.
pub fn mission_setpoint(
    mission: &Mission,
    s: &VehicleState,
    home: &Vec3,
    nearest: Option<Vec3>,
) -> Setpoint {
    match *mission {
        Mission::Naive { velocity, altitude } => Setpoint {
            x_d: Vec3::new(s.x.x, s.x.y, -altitude),
            v_d: Vec3::from(velocity),
            ..Default::default()
        },
        Mission::Adversarial { speed } => {
            let v_d = nearest
                .map(|p| p - s.x)
                .and_then(|d| d.try_normalize(1e-9))
                .map(|u| speed * u)
                .unwrap_or_else(Vec3::zeros);
            Setpoint {
                x_d: s.x,
                v_d,
                ..Default::default()
            }
        }
        Mission::Hover => Setpoint {
            x_d: *home,
            ..Default::default()
        },
        Mission::Waypoint { position } => Setpoint {
            x_d: Vec3::from(position),
            ..Default::default()
        },
    }
}

/// `½ tr(I − R_dᵀ R)`.
pub fn attitude_error(r: &RotationMatrix, r_d: &RotationMatrix) -> f64 {
    0.5 * (Matrix3::identity() - r_d.matrix().transpose() * r.matrix()).trace()
}
