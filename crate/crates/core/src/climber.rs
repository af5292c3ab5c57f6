//! Tethered climbing gait.
//!
//! Robots hop up the wall in batches while the rest stay gripped. Each hop
//! is planned in closed form and then corrected by shooting against the
//! tether forces the batch will feel in flight. A landing whose grip cannot
//! carry the robot's static load slips: the robot falls under gravity and
//! tether tension, with viscous wall drag, until the network settles. It
//! then re-hops to its original target.

use std::io::{self, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, AttitudeCommand, Body, Control, DynamicsError, HopPlan, Mode, RobotParams, RobotState, Surface};
use crate::grip::{sample_grip, CapacityModel, GripError, GripState, SpineArray, SpineSpec};
use crate::rng::{self, StreamRng};
use crate::terrain::Asperity;
use crate::tether::{self, Equilibrium, TetherError, TetherSystem};

#[derive(Debug, Error)]
pub enum ClimbError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Grip(#[from] GripError),
    #[error(transparent)]
    Tether(#[from] TetherError),
}

/// A grip failure forced on the first landing of `robot` in `cycle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedFailure {
    pub robot: usize,
    pub cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbScenario {
    pub robot_count: usize,
    /// Robots hopping at once.
    pub hop_batch: usize,
    /// Up-slope distance of each hop, m.
    pub hop_distance: f64,
    pub initial_positions: Vec<Vector3<f64>>,
    /// Recorded only; the grip model does not use it.
    pub approach_angle_deg: f64,
    pub spines_per_robot: usize,
    pub seed: u64,
    /// Order robots hop in. Defaults to ascending index.
    pub gait_order: Option<Vec<usize>>,
    /// Re-hops allowed per robot per cycle.
    pub retry_limit: usize,
    /// Viscous drag on a slipped robot, N·s/m.
    pub slip_damping: f64,
    /// Longest a slip may take to settle, s.
    pub max_settle_time: f64,
    pub forced_failures: Vec<ForcedFailure>,
}

impl ClimbScenario {
    /// Four robots on a 1.5 m square, hopping one at a time by 1.27 m.
    pub fn four_robot() -> Self {
        Self {
            robot_count: 4,
            hop_batch: 1,
            hop_distance: 1.27,
            initial_positions: vec![
                Vector3::new(1.5, 0.0, 1.5),
                Vector3::new(1.5, 0.0, 0.0),
                Vector3::new(0.0, 0.0, 1.5),
                Vector3::new(0.0, 0.0, 0.0),
            ],
            approach_angle_deg: 55.0,
            spines_per_robot: 40,
            seed: 0,
            gait_order: None,
            retry_limit: 5,
            slip_damping: 10.0,
            max_settle_time: 120.0,
            forced_failures: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ClimbError> {
        let bad = |m: String| Err(ClimbError::InvalidScenario(m));
        if self.hop_batch < 1 || self.hop_batch >= self.robot_count {
            return bad(format!(
                "hop batch {} must satisfy 1 <= n < N = {}",
                self.hop_batch, self.robot_count
            ));
        }
        if self.initial_positions.len() != self.robot_count {
            return bad(format!(
                "{} initial positions for {} robots",
                self.initial_positions.len(),
                self.robot_count
            ));
        }
        for (i, a) in self.initial_positions.iter().enumerate() {
            if self.initial_positions[..i].iter().any(|b| (a - b).norm() < 1e-9) {
                return bad(format!("robot {i} shares its initial position"));
            }
        }
        if !(self.hop_distance >= 0.0) || !self.hop_distance.is_finite() {
            return bad(format!("hop distance must be non-negative, got {}", self.hop_distance));
        }
        if self.spines_per_robot == 0 {
            return bad("spines per robot must be positive".into());
        }
        if !(self.slip_damping >= 0.0) || !(self.max_settle_time > 0.0) {
            return bad("slip damping must be non-negative and settle time positive".into());
        }
        if let Some(order) = &self.gait_order {
            let mut seen = vec![false; self.robot_count];
            if order.len() != self.robot_count {
                return bad("gait order must list every robot once".into());
            }
            for &i in order {
                if i >= self.robot_count || std::mem::replace(&mut seen[i], true) {
                    return bad("gait order must be a permutation of robot indices".into());
                }
            }
        }
        for f in &self.forced_failures {
            if f.robot >= self.robot_count {
                return bad(format!("forced failure on robot {} out of range", f.robot));
            }
        }
        Ok(())
    }

    fn order(&self) -> Vec<usize> {
        self.gait_order.clone().unwrap_or_else(|| (0..self.robot_count).collect())
    }
}

/// What a landing robot grips with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripModel {
    pub spine: SpineSpec,
    /// Tip radii spread evenly over this range, m.
    pub tip_radius_range: (f64, f64),
    pub area_density: f64,
    pub capacity: CapacityModel,
    pub asperities: Vec<Asperity>,
}

impl GripModel {
    pub fn array(&self, spines: usize) -> Result<SpineArray, GripError> {
        SpineArray::uniform(
            self.spine,
            spines,
            self.tip_radius_range.0,
            self.tip_radius_range.1,
            self.area_density,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    HopStart,
    GripOk,
    GripFail,
    Slip,
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbEvent {
    pub t: f64,
    pub robot: usize,
    pub cycle: usize,
    pub kind: EventKind,
    /// Grip capacity for grip events, N.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    /// Load the grip had to carry, N.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbSample {
    pub t: f64,
    pub positions: Vec<Vector3<f64>>,
    pub hub: Option<Vector3<f64>>,
    pub center: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropellantEntry {
    pub t: f64,
    pub robot: usize,
    pub cycle: usize,
    /// kg
    pub used: f64,
    /// kg left in this robot's tank
    pub remaining: f64,
}

/// Heights around one slip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipRecord {
    pub robot: usize,
    pub cycle: usize,
    /// Height the failed hop launched from.
    pub pre_hop_z: f64,
    /// Height the slip started from.
    pub slip_z: f64,
    pub min_z: f64,
    pub settled_z: f64,
    /// Total taut extension of the network with the slipped robots hanging
    /// at static equilibrium, m.
    pub stretch: f64,
    /// Lowest height the robot may reach: `pre_hop_z - (d + stretch)`.
    pub bound: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClimbStatus {
    Completed,
    Recovered,
    Partial,
    Failed,
}

/// State at the moment the anchored set stopped holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSnapshot {
    pub t: f64,
    pub robot: usize,
    pub load: f64,
    pub capacity: f64,
    pub positions: Vec<Vector3<f64>>,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbLog {
    pub status: ClimbStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub cycles_completed: usize,
    pub hops: usize,
    /// kg
    pub total_propellant: f64,
    pub events: Vec<ClimbEvent>,
    pub propellant: Vec<PropellantEntry>,
    pub slips: Vec<SlipRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureSnapshot>,
    #[serde(skip)]
    pub samples: Vec<ClimbSample>,
}

impl ClimbLog {
    pub fn final_positions(&self) -> Vec<Vector3<f64>> {
        self.samples.last().map(|s| s.positions.clone()).unwrap_or_default()
    }

    /// Simulated time elapsed.
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &ClimbEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Writes `t, r0_x, r0_y, r0_z, ..., center_x, center_y, center_z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.samples.first().map_or(0, |s| s.positions.len());
        let mut header = vec!["t".to_string()];
        for i in 0..n {
            header.extend(["x", "y", "z"].iter().map(|c| format!("r{i}_{c}")));
        }
        header.extend(["center_x", "center_y", "center_z"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            write!(w, "{}", s.t)?;
            for p in s.positions.iter().chain(std::iter::once(&s.center)) {
                write!(w, ",{},{},{}", p.x, p.y, p.z)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Everything fixed over one climb.
pub struct Climb<'a> {
    pub scenario: ClimbScenario,
    pub grip: &'a GripModel,
    pub tethers: &'a TetherSystem,
    pub params: RobotParams,
    pub body: Body,
}

const SHOOTING_ITERATIONS: usize = 6;
const SHOOTING_TOLERANCE: f64 = 1e-3;
const SETTLE_SPEED: f64 = 1e-3;
const SETTLE_ACCEL: f64 = 1e-2;

enum Stop {
    Partial(String),
    Failed(FailureSnapshot),
}

struct Run<'c, 'a> {
    climb: &'c Climb<'a>,
    array: SpineArray,
    rng: StreamRng,
    states: Vec<RobotState>,
    grips: Vec<GripState>,
    t: f64,
    log: ClimbLog,
}

struct Flight {
    states: Vec<RobotState>,
    samples: Vec<ClimbSample>,
}

impl<'a> Climb<'a> {
    pub fn new(
        scenario: ClimbScenario,
        grip: &'a GripModel,
        tethers: &'a TetherSystem,
        params: RobotParams,
        body: Body,
    ) -> Self {
        Self {
            scenario,
            grip,
            tethers,
            params,
            body,
        }
    }

    /// Forces a grip failure on the first landing of `robot` in `cycle`.
    pub fn inject_failure(mut self, robot: usize, cycle: usize) -> Self {
        self.scenario.forced_failures.push(ForcedFailure { robot, cycle });
        self
    }

    pub fn validate(&self) -> Result<(), ClimbError> {
        self.scenario.validate()?;
        self.params.validate()?;
        self.body.validate()?;
        self.tethers.validate()?;
        if self.tethers.robot_count != self.scenario.robot_count {
            return Err(ClimbError::InvalidScenario(format!(
                "tether system has {} robots, scenario {}",
                self.tethers.robot_count, self.scenario.robot_count
            )));
        }
        self.grip.capacity.validate()?;
        self.grip.array(self.scenario.spines_per_robot)?;
        Ok(())
    }

    /// Runs `cycles` full gait cycles.
    pub fn run(&self, cycles: usize) -> Result<ClimbLog, ClimbError> {
        self.validate()?;
        if cycles == 0 {
            return Err(ClimbError::InvalidScenario("at least one cycle is required".into()));
        }
        let states = self
            .scenario
            .initial_positions
            .iter()
            .map(|p| RobotState::at_rest(*p, self.params.propellant_budget))
            .collect();
        let mut run = Run {
            climb: self,
            array: self.grip.array(self.scenario.spines_per_robot)?,
            rng: rng::stream(self.scenario.seed, rng::CLIMB_GRIP),
            states,
            grips: Vec::new(),
            t: 0.0,
            log: ClimbLog {
                status: ClimbStatus::Completed,
                reason: None,
                cycles_completed: 0,
                hops: 0,
                total_propellant: 0.0,
                events: Vec::new(),
                propellant: Vec::new(),
                slips: Vec::new(),
                failure: None,
                samples: Vec::new(),
            },
        };
        let sample = run.sample()?;
        run.log.samples.push(sample);
        let outcome = run.execute(cycles);
        let mut log = run.log;
        match outcome? {
            None => {
                if log.events.iter().any(|e| e.kind == EventKind::Recovered) {
                    log.status = ClimbStatus::Recovered;
                }
            }
            Some(Stop::Partial(reason)) => {
                log.status = ClimbStatus::Partial;
                log.reason = Some(reason);
            }
            Some(Stop::Failed(snapshot)) => {
                log.status = ClimbStatus::Failed;
                log.reason = Some(format!(
                    "robot {} load {:.3} N exceeds grip capacity {:.3} N",
                    snapshot.robot, snapshot.load, snapshot.capacity
                ));
                log.failure = Some(snapshot);
            }
        }
        Ok(log)
    }
}

impl Run<'_, '_> {
    fn positions(&self) -> Vec<Vector3<f64>> {
        self.states.iter().map(|s| s.position).collect()
    }

    fn sample_at(&self, t: f64, states: &[RobotState]) -> Result<ClimbSample, ClimbError> {
        let positions: Vec<_> = states.iter().map(|s| s.position).collect();
        let hub = if self.climb.tethers.has_hub() {
            Some(tether::solve_hub(self.climb.tethers, &positions)?)
        } else {
            None
        };
        let center = positions.iter().sum::<Vector3<f64>>() / positions.len() as f64;
        Ok(ClimbSample { t, positions, hub, center })
    }

    fn sample(&self) -> Result<ClimbSample, ClimbError> {
        self.sample_at(self.t, &self.states)
    }

    fn event(&mut self, robot: usize, cycle: usize, kind: EventKind, grip: Option<(f64, f64)>) {
        self.log.events.push(ClimbEvent {
            t: self.t,
            robot,
            cycle,
            kind,
            capacity: grip.map(|g| g.0),
            load: grip.map(|g| g.1),
        });
    }

    /// Static load on robot `i` held in place: `|F_g + F_s|`.
    fn static_load(&self, i: usize, states: &[RobotState]) -> Result<f64, ClimbError> {
        let still: Vec<_> = states
            .iter()
            .map(|s| RobotState {
                velocity: Vector3::zeros(),
                ..*s
            })
            .collect();
        let (fg, fs) = tether::net_robot_force(self.climb.tethers, i, &still, self.climb.params.mass, &self.climb.body)?;
        Ok((fg + fs).norm())
    }

    fn execute(&mut self, cycles: usize) -> Result<Option<Stop>, ClimbError> {
        let n = self.climb.scenario.robot_count;
        for _ in 0..n {
            let g = sample_grip(&self.array, &self.climb.grip.asperities, &self.climb.grip.capacity, &mut self.rng)?;
            self.grips.push(g);
        }
        if let Some(stop) = self.check_anchored()? {
            return Ok(Some(stop));
        }
        let order = self.climb.scenario.order();
        let d = self.climb.scenario.hop_distance;
        for cycle in 0..cycles {
            for batch in order.chunks(self.climb.scenario.hop_batch) {
                let targets: Vec<_> = batch
                    .iter()
                    .map(|&i| self.states[i].position + Vector3::new(0.0, 0.0, d))
                    .collect();
                let pre_hop: Vec<_> = batch.iter().map(|&i| self.states[i].position.z).collect();
                let mut pending: Vec<usize> = (0..batch.len()).collect();
                let mut attempt = 0;
                while !pending.is_empty() {
                    if attempt > self.climb.scenario.retry_limit {
                        let who: Vec<_> = pending.iter().map(|&k| batch[k]).collect();
                        return Ok(Some(Stop::Partial(format!(
                            "robots {who:?} failed to grip after {} retries in cycle {cycle}",
                            self.climb.scenario.retry_limit
                        ))));
                    }
                    let robots: Vec<usize> = pending.iter().map(|&k| batch[k]).collect();
                    let goal: Vec<_> = pending.iter().map(|&k| targets[k]).collect();
                    if let Some(stop) = self.hop(&robots, &goal, cycle)? {
                        return Ok(Some(stop));
                    }
                    let mut failed = Vec::new();
                    for (slot, &i) in pending.iter().zip(&robots) {
                        let forced = attempt == 0
                            && self
                                .climb
                                .scenario
                                .forced_failures
                                .iter()
                                .any(|f| f.robot == i && f.cycle == cycle);
                        let mut grip =
                            sample_grip(&self.array, &self.climb.grip.asperities, &self.climb.grip.capacity, &mut self.rng)?;
                        if forced {
                            grip = GripState::none();
                        }
                        let load = self.static_load(i, &self.states)?;
                        if grip.total_capacity >= load {
                            self.event(i, cycle, EventKind::GripOk, Some((grip.total_capacity, load)));
                            if attempt > 0 {
                                self.event(i, cycle, EventKind::Recovered, None);
                            }
                            self.states[i].mode = Mode::Anchored;
                            self.grips[i] = grip;
                        } else {
                            self.event(i, cycle, EventKind::GripFail, Some((grip.total_capacity, load)));
                            self.grips[i] = GripState::none();
                            failed.push(*slot);
                        }
                    }
                    if !failed.is_empty() {
                        let robots: Vec<usize> = failed.iter().map(|&k| batch[k]).collect();
                        let pre: Vec<f64> = failed.iter().map(|&k| pre_hop[k]).collect();
                        self.slip(&robots, &pre, cycle)?;
                    }
                    if let Some(stop) = self.check_anchored()? {
                        return Ok(Some(stop));
                    }
                    pending = failed;
                    attempt += 1;
                }
            }
            self.log.cycles_completed = cycle + 1;
        }
        Ok(None)
    }

    /// Grip-versus-load check over every anchored robot.
    fn check_anchored(&self) -> Result<Option<Stop>, ClimbError> {
        for (i, s) in self.states.iter().enumerate() {
            if s.mode != Mode::Anchored {
                continue;
            }
            let (fg, fs) = tether::net_robot_force(self.climb.tethers, i, &self.states, self.climb.params.mass, &self.climb.body)?;
            if tether::check_equilibrium(&self.grips[i], &fg, &fs) == Equilibrium::Slips {
                return Ok(Some(Stop::Failed(FailureSnapshot {
                    t: self.t,
                    robot: i,
                    load: (fg + fs).norm(),
                    capacity: self.grips[i].total_capacity,
                    positions: self.positions(),
                    modes: self.states.iter().map(|s| s.mode).collect(),
                })));
            }
        }
        Ok(None)
    }

    /// Flies `robots` with fixed `plans` from the current state, every robot
    /// not listed held still. Tether forces are re-solved each step.
    fn fly(&self, robots: &[usize], plans: &[HopPlan], record: bool) -> Result<Flight, ClimbError> {
        let climb = self.climb;
        let mut states = self.states.clone();
        for (&i, plan) in robots.iter().zip(plans) {
            if !plan.is_null() {
                states[i].attitude = plan.attitude;
                states[i].angular_velocity = Vector3::zeros();
                states[i].mode = Mode::Hopping;
            }
        }
        let duration = plans.iter().map(|p| p.duration).fold(0.0, f64::max);
        let mut samples = Vec::new();
        let mut t = 0.0;
        while t < duration - 1e-12 {
            let next = plans
                .iter()
                .filter(|p| t < p.duration - 1e-12)
                .map(|p| p.next_event(t))
                .fold(duration, f64::min);
            let h = climb.params.dt.min(next - t);
            let positions: Vec<_> = states.iter().map(|s| s.position).collect();
            let velocities: Vec<_> = states.iter().map(|s| s.velocity).collect();
            let (_, forces) = tether::robot_tether_forces(climb.tethers, &positions, &velocities)?;
            for (&i, plan) in robots.iter().zip(plans) {
                if t >= plan.duration - 1e-12 {
                    continue;
                }
                let out = dynamics::step(&states[i], &climb.params, &climb.body, &plan.control_at(t), &forces[i], h)?;
                states[i] = out.state;
            }
            t += h;
            if record {
                samples.push(self.sample_at(self.t + t, &states)?);
            }
        }
        for (&i, plan) in robots.iter().zip(plans) {
            if !plan.is_null() {
                states[i].mode = Mode::Gripping;
            }
        }
        Ok(Flight { states, samples })
    }

    fn hop(&mut self, robots: &[usize], targets: &[Vector3<f64>], cycle: usize) -> Result<Option<Stop>, ClimbError> {
        let climb = self.climb;
        let mut commands: Vec<_> = robots
            .iter()
            .zip(targets)
            .map(|(&i, target)| target - self.states[i].position)
            .collect();
        let plan_all = |commands: &[Vector3<f64>], states: &[RobotState]| -> Result<Vec<HopPlan>, DynamicsError> {
            robots
                .iter()
                .zip(commands)
                .map(|(&i, c)| dynamics::plan_hop(&climb.params, &climb.body, c, Surface::Vertical, states[i].propellant))
                .collect()
        };
        let mut plans = match plan_all(&commands, &self.states) {
            Ok(p) => p,
            Err(e) => return Ok(Some(Stop::Partial(e.to_string()))),
        };
        for _ in 0..SHOOTING_ITERATIONS {
            let dry = self.fly(robots, &plans, false)?;
            let misses: Vec<_> = robots
                .iter()
                .zip(targets)
                .map(|(&i, target)| dry.states[i].position - target)
                .collect();
            if misses.iter().all(|m| m.norm() < SHOOTING_TOLERANCE) {
                break;
            }
            for (c, m) in commands.iter_mut().zip(&misses) {
                *c -= m;
            }
            plans = match plan_all(&commands, &self.states) {
                Ok(p) => p,
                Err(e) => return Ok(Some(Stop::Partial(e.to_string()))),
            };
        }
        for &i in robots {
            self.event(i, cycle, EventKind::HopStart, None);
        }
        let flight = self.fly(robots, &plans, true)?;
        let duration = plans.iter().map(|p| p.duration).fold(0.0, f64::max);
        for &i in robots {
            let used = self.states[i].propellant - flight.states[i].propellant;
            self.log.propellant.push(PropellantEntry {
                t: self.t,
                robot: i,
                cycle,
                used,
                remaining: flight.states[i].propellant,
            });
            self.log.total_propellant += used;
            self.log.hops += 1;
        }
        self.log.samples.extend(flight.samples);
        self.states = flight.states;
        self.t += duration;
        for &i in robots {
            // the spines stop the robot where it touches down
            self.states[i].velocity = Vector3::zeros();
            self.states[i].angular_velocity = Vector3::zeros();
        }
        Ok(None)
    }

    /// Lets `robots` fall on their tethers until the network is still.
    fn slip(&mut self, robots: &[usize], pre_hop_z: &[f64], cycle: usize) -> Result<(), ClimbError> {
        let climb = self.climb;
        for &i in robots {
            self.states[i].mode = Mode::Slipped;
            self.event(i, cycle, EventKind::Slip, None);
        }
        let slip_z: Vec<_> = robots.iter().map(|&i| self.states[i].position.z).collect();
        let mut min_z = slip_z.clone();
        let hold = Control::coast(AttitudeCommand {
            euler: Vector3::zeros(),
            rate: Vector3::zeros(),
            law: dynamics::ControlLaw::Rate,
        });
        let c = climb.scenario.slip_damping;
        let m = climb.params.mass;
        let h = climb.params.dt;
        let start = self.t;
        let mut settled = false;
        while self.t - start < climb.scenario.max_settle_time {
            let positions = self.positions();
            let velocities: Vec<_> = self.states.iter().map(|s| s.velocity).collect();
            let (_, forces) = tether::robot_tether_forces(climb.tethers, &positions, &velocities)?;
            let still = robots.iter().all(|&i| {
                let f = forces[i] + climb.body.weight(m) - self.states[i].velocity * c;
                self.states[i].velocity.norm() < SETTLE_SPEED && f.norm() / m < SETTLE_ACCEL
            });
            if still {
                settled = true;
                break;
            }
            for &i in robots {
                let drag = -self.states[i].velocity * c;
                self.states[i] = dynamics::step(&self.states[i], &climb.params, &climb.body, &hold, &(forces[i] + drag), h)?.state;
            }
            self.t += h;
            for (k, &i) in robots.iter().enumerate() {
                min_z[k] = min_z[k].min(self.states[i].position.z);
            }
            let sample = self.sample()?;
            self.log.samples.push(sample);
        }
        let eq = tether::static_equilibrium(climb.tethers, &self.positions(), robots, m, &climb.body)?;
        for (k, &i) in robots.iter().enumerate() {
            self.log.slips.push(SlipRecord {
                robot: i,
                cycle,
                pre_hop_z: pre_hop_z[k],
                slip_z: slip_z[k],
                min_z: min_z[k],
                settled_z: self.states[i].position.z,
                stretch: eq.total_stretch,
                bound: pre_hop_z[k] - (climb.scenario.hop_distance + eq.total_stretch),
                settled,
            });
            self.states[i].velocity = Vector3::zeros();
        }
        Ok(())
    }
}

/// Runs `climb` with one forced grip failure.
pub fn inject_failure(climb: Climb<'_>, robot: usize, cycle: usize, cycles: usize) -> Result<ClimbLog, ClimbError> {
    climb.inject_failure(robot, cycle).run(cycles)
}
