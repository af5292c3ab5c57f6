//! Single-robot rocket hops.
//!
//! Translation integrates gravity, a body-fixed `+z` main thruster and an
//! optional external (tether) force. Attitude integrates reaction-wheel torque
//! from a PD law on Z-Y-X Euler angle error and body rates. The robot is a
//! solid sphere, so its inertia is isotropic and there is no gyroscopic
//! coupling. Mass is held constant over a hop; a hop burns grams out of a
//! multi-kilogram robot.
//!
//! Hops are planned in closed form (constant thrust direction, burn then
//! coast) and then flown through the integrator, so external forces and
//! control error show up in the landing point.

use std::io::{self, Write};

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::STANDARD_GRAVITY;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("target unreachable: requested {requested:.4} m, max reach along that direction {max_reach:.4} m")]
    Unreachable { requested: f64, max_reach: f64 },
    #[error("hop needs {needed:.6} kg of propellant, {available:.6} kg available")]
    InsufficientPropellant { needed: f64, available: f64 },
    #[error("calibration infeasible: {0}")]
    Calibration(String),
}

/// A gravitating surface; gravity acts along `-z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    /// Surface gravity, m/s².
    pub gravity: f64,
}

impl Body {
    pub fn new(name: impl Into<String>, gravity: f64) -> Result<Self, DynamicsError> {
        let body = Self {
            name: name.into(),
            gravity,
        };
        body.validate()?;
        Ok(body)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.gravity > 0.0) || !self.gravity.is_finite() {
            return Err(DynamicsError::InvalidParams(format!(
                "gravity of {} must be positive",
                self.name
            )));
        }
        Ok(())
    }

    pub fn mars() -> Self {
        Self { name: "mars".into(), gravity: 3.71 }
    }

    pub fn moon() -> Self {
        Self { name: "moon".into(), gravity: 1.62 }
    }

    pub fn ceres() -> Self {
        Self { name: "ceres".into(), gravity: 0.27 }
    }

    pub fn phobos() -> Self {
        Self { name: "phobos".into(), gravity: 0.0057 }
    }

    /// Looks up one of the built-in bodies, case-insensitively.
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mars" => Some(Self::mars()),
            "moon" => Some(Self::moon()),
            "ceres" => Some(Self::ceres()),
            "phobos" => Some(Self::phobos()),
            _ => None,
        }
    }

    /// Weight of a mass on this body as a world-frame force.
    pub fn weight(&self, mass: f64) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -mass * self.gravity)
    }
}

/// Per-axis PD gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: Vector3<f64>,
    pub kd: Vector3<f64>,
}

impl Gains {
    /// Equal gains on all axes with `kd = 2 √(kp I)`.
    pub fn critically_damped(kp: f64, inertia: f64) -> Self {
        let kd = 2.0 * (kp * inertia).sqrt();
        Self {
            kp: Vector3::repeat(kp),
            kd: Vector3::repeat(kd),
        }
    }
}

/// Propellant-time product for a burn: `T t / (Isp g0)`.
pub fn propellant_for(thrust: f64, specific_impulse: f64, burn_time: f64) -> f64 {
    thrust * burn_time / (specific_impulse * STANDARD_GRAVITY)
}

/// Reference hop used to pin the thruster: rise `displacement` in `duration`
/// on the given body while spending `propellant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopDatum {
    /// Vertical rise, m.
    pub displacement: f64,
    /// Hop duration, s.
    pub duration: f64,
    /// Propellant spent, kg.
    pub propellant: f64,
}

impl HopDatum {
    /// 1.27 m up a vertical wall in 1.5 s on 5 g.
    pub fn mars_wall() -> Self {
        Self {
            displacement: 1.27,
            duration: 1.5,
            propellant: 0.005,
        }
    }
}

/// Closed-form thrust and burn time meeting `datum` with a vertical
/// burn-then-coast.
///
/// With impulse `I = m_p Isp g0`, the rise at `t_f` is
/// `(I/m)(t_f - t_b/2) - g t_f²/2`, which fixes `t_b` and then `T = I / t_b`.
pub fn datum_thrust(mass: f64, specific_impulse: f64, gravity: f64, datum: &HopDatum) -> Result<(f64, f64), DynamicsError> {
    let impulse = datum.propellant * specific_impulse * STANDARD_GRAVITY;
    let lift = datum.displacement + 0.5 * gravity * datum.duration * datum.duration;
    let burn = 2.0 * (datum.duration - lift * mass / impulse);
    if !(burn > 0.0) || burn > datum.duration {
        return Err(DynamicsError::Calibration(format!(
            "burn time {burn:.4} s outside (0, {}] s; impulse {impulse:.3} N·s cannot meet the datum",
            datum.duration
        )));
    }
    let thrust = impulse / burn;
    if thrust <= mass * gravity {
        return Err(DynamicsError::Calibration(format!(
            "thrust {thrust:.3} N does not exceed weight {:.3} N",
            mass * gravity
        )));
    }
    Ok((thrust, burn))
}

/// Physical and control parameters of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// kg
    pub mass: f64,
    /// m
    pub diameter: f64,
    /// Main thruster force, N.
    pub thrust: f64,
    /// s
    pub specific_impulse: f64,
    pub gains: Gains,
    /// Reaction wheel torque saturation per axis, N·m.
    pub torque_limit: f64,
    /// Propellant loaded at start, kg.
    pub propellant_budget: f64,
    /// Flight time of a planned hop, s.
    pub hop_duration: f64,
    /// Integrator step, s.
    pub dt: f64,
}

impl Default for RobotParams {
    /// 3 kg, 0.3 m sphere with 1 kg of propellant at Isp 300 s, thrust
    /// calibrated to the Mars wall datum.
    fn default() -> Self {
        let mass = 3.0;
        let diameter = 0.3;
        let isp = 300.0;
        let inertia = 0.4 * mass * (diameter / 2.0) * (diameter / 2.0);
        let (thrust, _) =
            datum_thrust(mass, isp, Body::mars().gravity, &HopDatum::mars_wall()).expect("default datum is feasible");
        Self {
            mass,
            diameter,
            thrust,
            specific_impulse: isp,
            gains: Gains::critically_damped(0.05, inertia),
            torque_limit: 0.1,
            propellant_budget: 1.0,
            hop_duration: 1.5,
            dt: 1e-3,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [
            ("mass", self.mass),
            ("diameter", self.diameter),
            ("thrust", self.thrust),
            ("specific_impulse", self.specific_impulse),
            ("torque_limit", self.torque_limit),
            ("propellant_budget", self.propellant_budget),
            ("hop_duration", self.hop_duration),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DynamicsError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gains.kp.iter().chain(self.gains.kd.iter()).any(|g| !(*g >= 0.0)) {
            return Err(DynamicsError::InvalidParams("gains must be non-negative".into()));
        }
        Ok(())
    }

    /// Solid-sphere moment of inertia, kg·m².
    pub fn inertia(&self) -> f64 {
        0.4 * self.mass * (self.diameter / 2.0).powi(2)
    }

    /// Propellant mass flow while the thruster fires, kg/s.
    pub fn mass_flow(&self) -> f64 {
        self.thrust / (self.specific_impulse * STANDARD_GRAVITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Anchored,
    Hopping,
    Gripping,
    Slipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion<f64>,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// kg
    pub propellant: f64,
    pub mode: Mode,
}

impl RobotState {
    pub fn at_rest(position: Vector3<f64>, propellant: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
            propellant,
            mode: Mode::Anchored,
        }
    }

    /// `(roll, pitch, yaw)` in the Z-Y-X convention.
    pub fn euler(&self) -> Vector3<f64> {
        let (r, p, y) = self.attitude.euler_angles();
        Vector3::new(r, p, y)
    }

    /// Specific mechanical energy `v²/2 + g z`.
    pub fn specific_energy(&self, body: &Body) -> f64 {
        0.5 * self.velocity.norm_squared() + body.gravity * self.position.z
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Which terms of the PD law are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// Both terms.
    Pd,
    /// Hold Euler angles, derivative term off.
    Proportional,
    /// Track a body rate, proportional term off.
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeCommand {
    pub euler: Vector3<f64>,
    pub rate: Vector3<f64>,
    pub law: ControlLaw,
}

impl AttitudeCommand {
    pub fn hold(euler: Vector3<f64>) -> Self {
        Self {
            euler,
            rate: Vector3::zeros(),
            law: ControlLaw::Pd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub thrust_on: bool,
    pub attitude: AttitudeCommand,
}

impl Control {
    pub fn coast(attitude: AttitudeCommand) -> Self {
        Self {
            thrust_on: false,
            attitude,
        }
    }
}

/// Reaction wheel torque `Kp (e_des - e_act) + Kd (ω_des - ω_act)` per axis,
/// angle error wrapped to `(-π, π]`, each axis saturated at `±limit`.
pub fn pd_torque(
    gains: &Gains,
    e_des: &Vector3<f64>,
    e_act: &Vector3<f64>,
    w_des: &Vector3<f64>,
    w_act: &Vector3<f64>,
    limit: f64,
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let tau = gains.kp[i] * wrap_angle(e_des[i] - e_act[i]) + gains.kd[i] * (w_des[i] - w_act[i]);
        tau.clamp(-limit, limit)
    })
}

fn law_gains(gains: &Gains, law: ControlLaw) -> Gains {
    match law {
        ControlLaw::Pd => *gains,
        ControlLaw::Proportional => Gains {
            kp: gains.kp,
            kd: Vector3::zeros(),
        },
        ControlLaw::Rate => Gains {
            kp: Vector3::zeros(),
            kd: gains.kd,
        },
    }
}

#[derive(Debug, Clone, Copy)]
struct Kinematics {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

impl Kinematics {
    fn axpy(&self, h: f64, d: &Kinematics) -> Kinematics {
        Kinematics {
            p: self.p + d.p * h,
            v: self.v + d.v * h,
            q: self.q + d.q * h,
            w: self.w + d.w * h,
        }
    }
}

struct Forcing<'a> {
    linear: Vector3<f64>,
    thrust_accel: f64,
    gains: Gains,
    command: &'a AttitudeCommand,
    limit: f64,
    inertia: f64,
}

impl Forcing<'_> {
    fn derivative(&self, k: &Kinematics) -> Kinematics {
        let att = UnitQuaternion::new_normalize(k.q);
        let thrust = att * Vector3::new(0.0, 0.0, self.thrust_accel);
        let (r, p, y) = att.euler_angles();
        let torque = pd_torque(
            &self.gains,
            &self.command.euler,
            &Vector3::new(r, p, y),
            &self.command.rate,
            &k.w,
            self.limit,
        );
        let omega = Quaternion::new(0.0, k.w.x, k.w.y, k.w.z);
        Kinematics {
            p: k.v,
            v: self.linear + thrust,
            q: k.q * omega * 0.5,
            w: torque / self.inertia,
        }
    }

    fn rk4(&self, k0: &Kinematics, h: f64) -> Kinematics {
        let d1 = self.derivative(k0);
        let d2 = self.derivative(&k0.axpy(0.5 * h, &d1));
        let d3 = self.derivative(&k0.axpy(0.5 * h, &d2));
        let d4 = self.derivative(&k0.axpy(h, &d3));
        Kinematics {
            p: k0.p + (d1.p + d2.p * 2.0 + d3.p * 2.0 + d4.p) * (h / 6.0),
            v: k0.v + (d1.v + d2.v * 2.0 + d3.v * 2.0 + d4.v) * (h / 6.0),
            q: k0.q + (d1.q + d2.q * 2.0 + d3.q * 2.0 + d4.q) * (h / 6.0),
            w: k0.w + (d1.w + d2.w * 2.0 + d3.w * 2.0 + d4.w) * (h / 6.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    /// The burn ran out of propellant inside this step.
    pub burn_truncated: bool,
}

/// Advances one robot by `dt` with RK4.
///
/// `external_force` (world frame, N) is held constant over the step. If the
/// thruster is on and the tank empties mid-step, the step is split at the
/// cutoff and the rest is flown unpowered.
pub fn step(
    state: &RobotState,
    params: &RobotParams,
    body: &Body,
    control: &Control,
    external_force: &Vector3<f64>,
    dt: f64,
) -> Result<StepOutcome, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let linear = body.weight(params.mass) / params.mass + external_force / params.mass;
    let mut forcing = Forcing {
        linear,
        thrust_accel: 0.0,
        gains: law_gains(&params.gains, control.attitude.law),
        command: &control.attitude,
        limit: params.torque_limit,
        inertia: params.inertia(),
    };
    let mut k = Kinematics {
        p: state.position,
        v: state.velocity,
        q: *state.attitude.quaternion(),
        w: state.angular_velocity,
    };
    let mut propellant = state.propellant;
    let mut truncated = false;

    let mut coast = dt;
    if control.thrust_on {
        let flow = params.mass_flow();
        let burn = if propellant <= 0.0 { 0.0 } else { (propellant / flow).min(dt) };
        if burn < dt {
            truncated = true;
        }
        if burn > 0.0 {
            forcing.thrust_accel = params.thrust / params.mass;
            k = forcing.rk4(&k, burn);
            k.q = *UnitQuaternion::new_normalize(k.q).quaternion();
            propellant = if truncated { 0.0 } else { (propellant - flow * burn).max(0.0) };
        }
        coast = dt - burn;
        forcing.thrust_accel = 0.0;
    }
    if coast > 0.0 {
        k = forcing.rk4(&k, coast);
    }

    Ok(StepOutcome {
        state: RobotState {
            position: k.p,
            velocity: k.v,
            attitude: UnitQuaternion::new_normalize(k.q),
            angular_velocity: k.w,
            propellant,
            mode: state.mode,
        },
        burn_truncated: truncated,
    })
}

/// Orientation of the launch surface, which selects the attitude law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// Proportional hold of the launch attitude.
    Horizontal,
    /// Rate command (zero body rate), proportional path off.
    Vertical,
}

/// A burn-then-coast hop with fixed thrust direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopPlan {
    pub displacement: Vector3<f64>,
    pub thrust_direction: Unit<Vector3<f64>>,
    pub burn_time: f64,
    pub duration: f64,
    pub propellant: f64,
    /// Launch attitude, set before ignition.
    pub attitude: UnitQuaternion<f64>,
    pub command: AttitudeCommand,
}

impl HopPlan {
    pub fn is_null(&self) -> bool {
        self.duration == 0.0
    }

    /// Control to apply over a step starting at `t` into the hop.
    pub fn control_at(&self, t: f64) -> Control {
        Control {
            thrust_on: t < self.burn_time - 1e-12,
            attitude: self.command,
        }
    }

    /// Next burn cutoff or hop end strictly after `t`.
    pub fn next_event(&self, t: f64) -> f64 {
        if t < self.burn_time - 1e-12 {
            self.burn_time
        } else {
            self.duration
        }
    }
}

fn launch_attitude(direction: &Unit<Vector3<f64>>) -> UnitQuaternion<f64> {
    let z = Vector3::z();
    UnitQuaternion::rotation_between(&z, direction)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
}

/// Plans a hop of `displacement` over `params.hop_duration`.
///
/// Solves `a_T t_b (t_f - t_b/2) ê = Δ + g t_f²/2 ẑ` for the thrust direction
/// `ê` and burn time `t_b`. A zero displacement gives a null plan.
pub fn plan_hop(
    params: &RobotParams,
    body: &Body,
    displacement: &Vector3<f64>,
    surface: Surface,
    available_propellant: f64,
) -> Result<HopPlan, DynamicsError> {
    params.validate()?;
    body.validate()?;
    let law = match surface {
        Surface::Horizontal => ControlLaw::Proportional,
        Surface::Vertical => ControlLaw::Rate,
    };
    if displacement.norm() < 1e-12 {
        return Ok(HopPlan {
            displacement: Vector3::zeros(),
            thrust_direction: Vector3::z_axis(),
            burn_time: 0.0,
            duration: 0.0,
            propellant: 0.0,
            attitude: UnitQuaternion::identity(),
            command: AttitudeCommand {
                euler: Vector3::zeros(),
                rate: Vector3::zeros(),
                law,
            },
        });
    }
    let tf = params.hop_duration;
    let accel = params.thrust / params.mass;
    let sag = 0.5 * body.gravity * tf * tf;
    let lift = displacement + Vector3::new(0.0, 0.0, sag);
    let need = lift.norm();

    let burn_cap = (available_propellant.max(0.0) / params.mass_flow()).min(tf);
    let reach = accel * burn_cap * (tf - 0.5 * burn_cap);
    let disc = tf * tf - 2.0 * need / accel;
    if need > reach || disc < 0.0 {
        let dir = displacement.normalize();
        let c = sag;
        let dz = dir.z;
        let max_reach = (-dz * c + ((dz * c).powi(2) - c * c + reach * reach).max(0.0).sqrt()).max(0.0);
        let requested = displacement.norm();
        let full_tank = accel * tf * tf / 2.0;
        if need <= full_tank && disc >= 0.0 {
            let burn = tf - disc.sqrt();
            return Err(DynamicsError::InsufficientPropellant {
                needed: params.mass_flow() * burn,
                available: available_propellant,
            });
        }
        return Err(DynamicsError::Unreachable { requested, max_reach });
    }
    let burn_time = tf - disc.sqrt();
    let direction = Unit::new_normalize(lift);
    let attitude = launch_attitude(&direction);
    let (r, p, y) = attitude.euler_angles();
    Ok(HopPlan {
        displacement: *displacement,
        thrust_direction: direction,
        burn_time,
        duration: tf,
        propellant: params.mass_flow() * burn_time,
        attitude,
        command: AttitudeCommand {
            euler: Vector3::new(r, p, y),
            rate: Vector3::zeros(),
            law,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// roll, pitch, yaw
    pub euler: Vector3<f64>,
    pub propellant: f64,
}

impl TrajectorySample {
    pub fn of(t: f64, s: &RobotState) -> Self {
        Self {
            t,
            position: s.position,
            velocity: s.velocity,
            euler: s.euler(),
            propellant: s.propellant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub plan: HopPlan,
    pub trajectory: Vec<TrajectorySample>,
    pub landing: RobotState,
    pub propellant_used: f64,
    pub burn_truncated: bool,
}

/// Flies `plan` from `state`, calling `external` for the world-frame force at
/// the start of every step.
pub fn fly_hop<F>(
    state: &RobotState,
    params: &RobotParams,
    body: &Body,
    plan: &HopPlan,
    mut external: F,
) -> Result<Hop, DynamicsError>
where
    F: FnMut(f64, &RobotState) -> Vector3<f64>,
{
    let mut s = *state;
    if !plan.is_null() {
        s.attitude = plan.attitude;
        s.angular_velocity = Vector3::zeros();
        s.mode = Mode::Hopping;
    }
    let start_propellant = s.propellant;
    let mut trajectory = vec![TrajectorySample::of(0.0, &s)];
    let mut t = 0.0;
    let mut truncated = false;
    while t < plan.duration - 1e-12 {
        let h = params.dt.min(plan.next_event(t) - t);
        let force = external(t, &s);
        let out = step(&s, params, body, &plan.control_at(t), &force, h)?;
        truncated |= out.burn_truncated;
        s = out.state;
        t += h;
        trajectory.push(TrajectorySample::of(t, &s));
    }
    if !plan.is_null() {
        s.mode = Mode::Gripping;
    }
    Ok(Hop {
        plan: *plan,
        trajectory,
        propellant_used: start_propellant - s.propellant,
        landing: s,
        burn_truncated: truncated,
    })
}

/// Plans and flies an untethered hop of `target_displacement`.
pub fn execute_hop(
    state: &RobotState,
    params: &RobotParams,
    body: &Body,
    target_displacement: &Vector3<f64>,
    surface: Surface,
) -> Result<Hop, DynamicsError> {
    let plan = plan_hop(params, body, target_displacement, surface, state.propellant)?;
    fly_hop(state, params, body, &plan, |_, _| Vector3::zeros())
}

/// Thruster calibration against a reference hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub thrust: f64,
    pub burn_time: f64,
    pub datum: HopDatum,
    /// Rise reached by the integrated hop at the datum duration.
    pub achieved_displacement: f64,
    pub achieved_duration: f64,
    pub propellant_used: f64,
}

/// Solves for the thrust meeting `datum` and verifies it by flying the hop.
pub fn calibrate_thrust(params: &RobotParams, body: &Body, datum: &HopDatum) -> Result<Calibration, DynamicsError> {
    body.validate()?;
    let (thrust, burn_time) = datum_thrust(params.mass, params.specific_impulse, body.gravity, datum)?;
    let tuned = RobotParams {
        thrust,
        hop_duration: datum.duration,
        ..*params
    };
    tuned.validate()?;
    let start = RobotState::at_rest(Vector3::zeros(), datum.propellant.max(tuned.propellant_budget));
    let hop = execute_hop(
        &start,
        &tuned,
        body,
        &Vector3::new(0.0, 0.0, datum.displacement),
        Surface::Vertical,
    )?;
    let last = hop.trajectory.last().expect("hop has samples");
    Ok(Calibration {
        thrust,
        burn_time,
        datum: *datum,
        achieved_displacement: last.position.z,
        achieved_duration: last.t,
        propellant_used: hop.propellant_used,
    })
}

/// Rise after `params.hop_duration` when `propellant` is burnt straight up
/// from rest, then coasted.
pub fn vertical_reach(params: &RobotParams, body: &Body, propellant: f64) -> Result<f64, DynamicsError> {
    params.validate()?;
    body.validate()?;
    if params.thrust <= params.mass * body.gravity {
        return Err(DynamicsError::InvalidParams(format!(
            "thrust {:.3} N cannot lift {:.3} N on {}",
            params.thrust,
            params.mass * body.gravity,
            body.name
        )));
    }
    let burn_time = (propellant / params.mass_flow()).min(params.hop_duration);
    let plan = HopPlan {
        displacement: Vector3::zeros(),
        thrust_direction: Vector3::z_axis(),
        burn_time,
        duration: params.hop_duration,
        propellant,
        attitude: UnitQuaternion::identity(),
        command: AttitudeCommand {
            euler: Vector3::zeros(),
            rate: Vector3::zeros(),
            law: ControlLaw::Rate,
        },
    };
    let start = RobotState::at_rest(Vector3::zeros(), propellant);
    let hop = fly_hop(&start, params, body, &plan, |_, _| Vector3::zeros())?;
    Ok(hop.landing.position.z)
}

/// Writes `t,x,y,z,vx,vy,vz,roll,pitch,yaw,propellant` rows.
pub fn write_trajectory_csv<W: Write>(samples: &[TrajectorySample], mut w: W) -> io::Result<()> {
    writeln!(w, "t,x,y,z,vx,vy,vz,roll,pitch,yaw,propellant")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.euler.x,
            s.euler.y,
            s.euler.z,
            s.propellant
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coast() -> Control {
        Control::coast(AttitudeCommand::hold(Vector3::zeros()))
    }

    #[test]
    fn zero_error_gives_zero_torque() {
        let g = Gains::critically_damped(1.0, 1.0);
        let e = Vector3::new(0.3, -0.2, 1.0);
        let w = Vector3::new(0.1, 0.0, -0.4);
        assert_eq!(pd_torque(&g, &e, &e, &w, &w, 10.0), Vector3::zeros());
    }

    #[test]
    fn proportional_torque_is_linear() {
        let g = Gains {
            kp: Vector3::repeat(2.0),
            kd: Vector3::zeros(),
        };
        let tau = pd_torque(
            &g,
            &Vector3::new(0.1, 0.0, 0.0),
            &Vector3::zeros(),
            &Vector3::zeros(),
            &Vector3::zeros(),
            10.0,
        );
        assert!((tau - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn torque_saturates() {
        let g = Gains {
            kp: Vector3::repeat(100.0),
            kd: Vector3::zeros(),
        };
        let tau = pd_torque(
            &g,
            &Vector3::new(1.0, -1.0, 0.0),
            &Vector3::zeros(),
            &Vector3::zeros(),
            &Vector3::zeros(),
            0.1,
        );
        assert_eq!(tau, Vector3::new(0.1, -0.1, 0.0));
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25)) == 0.25);
    }

    #[test]
    fn free_fall_on_mars() {
        let params = RobotParams::default();
        let mut s = RobotState::at_rest(Vector3::zeros(), 0.0);
        for _ in 0..1000 {
            s = step(&s, &params, &Body::mars(), &coast(), &Vector3::zeros(), 1e-3).unwrap().state;
        }
        assert!((s.position.z + 1.855).abs() < 1e-9, "{}", s.position.z);
    }

    #[test]
    fn thrust_equal_to_weight_hovers() {
        let body = Body::mars();
        let params = RobotParams {
            thrust: 3.0 * body.gravity,
            ..RobotParams::default()
        };
        let mut s = RobotState::at_rest(Vector3::new(0.0, 0.0, 1.0), 1.0);
        let on = Control {
            thrust_on: true,
            attitude: AttitudeCommand::hold(Vector3::zeros()),
        };
        for _ in 0..2000 {
            s = step(&s, &params, &body, &on, &Vector3::zeros(), 1e-3).unwrap().state;
        }
        assert!(s.velocity.norm() < 1e-9);
    }

    #[test]
    fn burn_truncates_at_empty_tank() {
        let params = RobotParams::default();
        let flow = params.mass_flow();
        let s = RobotState::at_rest(Vector3::zeros(), flow * 4e-4);
        let on = Control {
            thrust_on: true,
            attitude: AttitudeCommand::hold(Vector3::zeros()),
        };
        let out = step(&s, &params, &Body::mars(), &on, &Vector3::zeros(), 1e-3).unwrap();
        assert!(out.burn_truncated);
        assert_eq!(out.state.propellant, 0.0);
        // 0.4 ms of thrust then 0.6 ms of coast
        let a = params.thrust / params.mass;
        let expected_v = a * 4e-4 - 3.71 * 1e-3;
        assert!((out.state.velocity.z - expected_v).abs() < 1e-12);
        let again = step(&out.state, &params, &Body::mars(), &on, &Vector3::zeros(), 1e-3).unwrap();
        assert!(again.burn_truncated);
        assert_eq!(again.state.propellant, 0.0);
    }

    #[test]
    fn invalid_step_rejected() {
        let s = RobotState::at_rest(Vector3::zeros(), 0.0);
        let err = step(&s, &RobotParams::default(), &Body::mars(), &coast(), &Vector3::zeros(), 0.0);
        assert_eq!(err, Err(DynamicsError::InvalidStep(0.0)));
    }

    #[test]
    fn null_hop() {
        let s = RobotState::at_rest(Vector3::new(1.0, 0.0, 2.0), 0.5);
        let hop = execute_hop(&s, &RobotParams::default(), &Body::mars(), &Vector3::zeros(), Surface::Vertical).unwrap();
        assert_eq!(hop.propellant_used, 0.0);
        assert_eq!(hop.landing.position, s.position);
        assert_eq!(hop.trajectory.len(), 1);
    }

    #[test]
    fn unreachable_target_reports_reach() {
        let s = RobotState::at_rest(Vector3::zeros(), 1.0);
        let err = execute_hop(
            &s,
            &RobotParams::default(),
            &Body::mars(),
            &Vector3::new(0.0, 0.0, 50.0),
            Surface::Vertical,
        )
        .unwrap_err();
        match err {
            DynamicsError::Unreachable { requested, max_reach } => {
                assert_eq!(requested, 50.0);
                // full-duration burn: a tf²/2 - g tf²/2
                let p = RobotParams::default();
                let expect = (p.thrust / p.mass - 3.71) * 1.5 * 1.5 / 2.0;
                assert!((max_reach - expect).abs() < 1e-9, "{max_reach} vs {expect}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_tank_is_reported() {
        let s = RobotState::at_rest(Vector3::zeros(), 0.001);
        let err = execute_hop(
            &s,
            &RobotParams::default(),
            &Body::mars(),
            &Vector3::new(0.0, 0.0, 1.27),
            Surface::Vertical,
        )
        .unwrap_err();
        assert!(matches!(err, DynamicsError::InsufficientPropellant { .. }), "{err:?}");
    }

    #[test]
    fn horizontal_hop_lands_on_target() {
        let s = RobotState::at_rest(Vector3::zeros(), 1.0);
        let target = Vector3::new(1.0, 0.5, 0.0);
        let hop = execute_hop(&s, &RobotParams::default(), &Body::mars(), &target, Surface::Horizontal).unwrap();
        assert!((hop.landing.position - target).norm() < 1e-6, "{}", hop.landing.position);
        assert!((hop.propellant_used - hop.plan.propellant).abs() < 1e-12);
    }

    #[test]
    fn default_thrust_matches_datum() {
        let p = RobotParams::default();
        let (t, burn) = datum_thrust(3.0, 300.0, 3.71, &HopDatum::mars_wall()).unwrap();
        assert_eq!(p.thrust, t);
        assert!((propellant_for(t, 300.0, burn) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn weak_datum_fails_calibration() {
        let datum = HopDatum {
            displacement: 10.0,
            duration: 1.5,
            propellant: 0.005,
        };
        assert!(matches!(
            datum_thrust(3.0, 300.0, 3.71, &datum),
            Err(DynamicsError::Calibration(_))
        ));
    }

    proptest! {
        #[test]
        fn propellant_never_increases_or_goes_negative(
            prop in 0.0f64..0.01,
            steps in 1usize..200,
            thrust_on in any::<bool>(),
        ) {
            let params = RobotParams::default();
            let mut s = RobotState::at_rest(Vector3::zeros(), prop);
            let c = Control { thrust_on, attitude: AttitudeCommand::hold(Vector3::new(0.1, 0.0, 0.0)) };
            for _ in 0..steps {
                let next = step(&s, &params, &Body::moon(), &c, &Vector3::zeros(), 1e-2).unwrap().state;
                prop_assert!(next.propellant <= s.propellant);
                prop_assert!(next.propellant >= 0.0);
                prop_assert!((next.attitude.norm() - 1.0).abs() < 1e-9);
                s = next;
            }
        }
    }
}
