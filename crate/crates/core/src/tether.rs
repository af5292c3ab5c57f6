//! Tension-only spring tethers joined at a massless hub.
//!
//! The hub carries no mass, so its position is whatever minimizes the stored
//! spring energy for the current robot positions. The same minimizer also
//! finds static hanging positions of robots that have lost their grip, by
//! adding their gravitational potential to the energy. Both problems are
//! convex, so a damped Newton iteration finds the global minimum.

use nalgebra::{DMatrix, DVector, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Body, RobotState};
use crate::grip::GripState;

#[derive(Debug, Error, PartialEq)]
pub enum TetherError {
    #[error("invalid tether spec: {0}")]
    InvalidSpec(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("tether endpoints coincide at {0:?}")]
    CoincidentEndpoints([f64; 3]),
    #[error("hub solve did not converge: residual {residual:.3e} N after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("robot index {index} out of range for {count} robots")]
    BadIndex { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TetherSpec {
    /// N/m
    pub stiffness: f64,
    /// m
    pub rest_length: f64,
    /// N·s/m
    #[serde(default)]
    pub damping: f64,
}

impl Default for TetherSpec {
    /// 200 N/m and 1.65 m, long enough that a robot hopping 1.27 m inside
    /// the 1.5 m square layout never pulls the network taut.
    fn default() -> Self {
        Self {
            stiffness: 200.0,
            rest_length: 1.65,
            damping: 0.0,
        }
    }
}

impl TetherSpec {
    pub fn validate(&self) -> Result<(), TetherError> {
        if !(self.stiffness > 0.0) || !self.stiffness.is_finite() {
            return Err(TetherError::InvalidSpec(format!("stiffness must be positive, got {}", self.stiffness)));
        }
        if !(self.rest_length > 0.0) || !self.rest_length.is_finite() {
            return Err(TetherError::InvalidSpec(format!("rest length must be positive, got {}", self.rest_length)));
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(TetherError::InvalidSpec(format!("damping must be non-negative, got {}", self.damping)));
        }
        Ok(())
    }
}

/// Force on end A of a tether from A to B.
///
/// `rel_vel` is `v_B - v_A`. Slack tethers push nothing; a taut tether pulls
/// A toward B with `k (s - L) + c ṡ`, floored at zero so damping never turns
/// it into a strut.
pub fn tether_force(
    spec: &TetherSpec,
    end_a: &Vector3<f64>,
    end_b: &Vector3<f64>,
    rel_vel: &Vector3<f64>,
) -> Result<Vector3<f64>, TetherError> {
    let d = end_b - end_a;
    let s = d.norm();
    if s == 0.0 {
        return Err(TetherError::CoincidentEndpoints([end_a.x, end_a.y, end_a.z]));
    }
    if s <= spec.rest_length {
        return Ok(Vector3::zeros());
    }
    let u = d / s;
    let tension = (spec.stiffness * (s - spec.rest_length) + spec.damping * u.dot(rel_vel)).max(0.0);
    Ok(u * tension)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Robot(usize),
    Hub,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TetherEdge {
    pub a: Node,
    pub b: Node,
    pub spec: TetherSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetherSystem {
    pub robot_count: usize,
    pub edges: Vec<TetherEdge>,
}

impl TetherSystem {
    /// Every robot tied to one hub. Four robots give the X configuration.
    pub fn star(robot_count: usize, spec: TetherSpec) -> Self {
        Self {
            robot_count,
            edges: (0..robot_count)
                .map(|i| TetherEdge {
                    a: Node::Robot(i),
                    b: Node::Hub,
                    spec,
                })
                .collect(),
        }
    }

    pub fn x_configuration(spec: TetherSpec) -> Self {
        Self::star(4, spec)
    }

    pub fn has_hub(&self) -> bool {
        self.edges.iter().any(|e| e.a == Node::Hub || e.b == Node::Hub)
    }

    pub fn validate(&self) -> Result<(), TetherError> {
        if self.robot_count == 0 {
            return Err(TetherError::InvalidTopology("no robots".into()));
        }
        let hub = self.robot_count;
        let mut parent: Vec<usize> = (0..=hub).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut hub_degree = 0;
        for e in &self.edges {
            e.spec.validate()?;
            let mut ids = [0; 2];
            for (slot, node) in ids.iter_mut().zip([e.a, e.b]) {
                *slot = match node {
                    Node::Robot(i) if i < self.robot_count => i,
                    Node::Robot(i) => {
                        return Err(TetherError::InvalidTopology(format!(
                            "edge references robot {i}, only {} robots",
                            self.robot_count
                        )))
                    }
                    Node::Hub => {
                        hub_degree += 1;
                        hub
                    }
                };
            }
            if ids[0] == ids[1] {
                return Err(TetherError::InvalidTopology("self loop".into()));
            }
            let (ra, rb) = (find(&mut parent, ids[0]), find(&mut parent, ids[1]));
            parent[ra] = rb;
        }
        if hub_degree == 1 {
            return Err(TetherError::InvalidTopology("hub needs at least two tethers".into()));
        }
        let nodes = if hub_degree > 0 { hub + 1 } else { hub };
        if self.robot_count > 1 {
            let root = find(&mut parent, 0);
            for i in 1..nodes {
                if find(&mut parent, i) != root {
                    return Err(TetherError::InvalidTopology("tether graph is not connected".into()));
                }
            }
        }
        Ok(())
    }
}

const HUB_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100;

/// Index of a node in the unknown vector, or its fixed position.
#[derive(Clone, Copy)]
enum Slot {
    Free(usize),
    Fixed(Vector3<f64>),
}

struct EnergyProblem<'a> {
    system: &'a TetherSystem,
    slots: Vec<Slot>,
    /// Constant force on each unknown (gravity), per free slot.
    loads: Vec<Vector3<f64>>,
}

impl EnergyProblem<'_> {
    fn slot(&self, n: Node) -> Slot {
        match n {
            Node::Robot(i) => self.slots[i],
            Node::Hub => self.slots[self.system.robot_count],
        }
    }

    fn pos(&self, slot: Slot, x: &DVector<f64>) -> Vector3<f64> {
        match slot {
            Slot::Free(k) => Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]),
            Slot::Fixed(p) => p,
        }
    }

    fn energy(&self, x: &DVector<f64>) -> f64 {
        let mut e = 0.0;
        for edge in &self.system.edges {
            let s = (self.pos(self.slot(edge.b), x) - self.pos(self.slot(edge.a), x)).norm();
            let ext = (s - edge.spec.rest_length).max(0.0);
            e += 0.5 * edge.spec.stiffness * ext * ext;
        }
        for (k, f) in self.loads.iter().enumerate() {
            e -= f.dot(&Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]));
        }
        e
    }

    fn gradient_hessian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for (k, f) in self.loads.iter().enumerate() {
            for c in 0..3 {
                g[3 * k + c] -= f[c];
            }
        }
        for edge in &self.system.edges {
            let (sa, sb) = (self.slot(edge.a), self.slot(edge.b));
            let d = self.pos(sb, x) - self.pos(sa, x);
            let s = d.norm();
            let l = edge.spec.rest_length;
            if s <= l {
                continue;
            }
            let k = edge.spec.stiffness;
            let u = d / s;
            // dE/db = k (s - L) û, dE/da = -dE/db
            let gb = u * (k * (s - l));
            let uu = u * u.transpose();
            let block = (uu + (nalgebra::Matrix3::identity() - uu) * (1.0 - l / s)) * k;
            let free: Vec<(usize, f64)> = [(sa, -1.0), (sb, 1.0)]
                .into_iter()
                .filter_map(|(slot, sign)| match slot {
                    Slot::Free(i) => Some((i, sign)),
                    Slot::Fixed(_) => None,
                })
                .collect();
            for &(i, si) in &free {
                for c in 0..3 {
                    g[3 * i + c] += si * gb[c];
                }
                for &(j, sj) in &free {
                    let mut view = h.fixed_view_mut::<3, 3>(3 * i, 3 * j);
                    view += block * (si * sj);
                }
            }
        }
        (g, h)
    }

    /// Damped Newton with an energy/gradient acceptance test. Returns the
    /// minimizer and the final gradient norm.
    fn minimize(&self, mut x: DVector<f64>) -> Result<(DVector<f64>, f64), TetherError> {
        let n = x.len();
        let mut lambda = 1e-6;
        let (mut g, mut h) = self.gradient_hessian(&x);
        let mut e = self.energy(&x);
        let mut iterations = 0;
        while g.norm() > 1e-10 && iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut accepted = false;
            for _ in 0..60 {
                let scale = h.diagonal().amax().max(1.0);
                let a = &h + DMatrix::identity(n, n) * (lambda * scale);
                let Some(chol) = a.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let trial = &x - chol.solve(&g);
                let e_t = self.energy(&trial);
                let (g_t, h_t) = self.gradient_hessian(&trial);
                let tiny = 1e-12 * e.abs().max(1.0);
                if e_t < e - tiny || (e_t <= e + tiny && g_t.norm() < g.norm()) {
                    x = trial;
                    e = e_t;
                    g = g_t;
                    h = h_t;
                    lambda = (lambda * 0.1).max(1e-15);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        let residual = g.norm();
        if residual > HUB_TOLERANCE {
            return Err(TetherError::NoConvergence { residual, iterations });
        }
        Ok((x, residual))
    }
}

fn check_positions(system: &TetherSystem, positions: &[Vector3<f64>]) -> Result<(), TetherError> {
    if positions.len() != system.robot_count {
        return Err(TetherError::InvalidTopology(format!(
            "{} positions for {} robots",
            positions.len(),
            system.robot_count
        )));
    }
    Ok(())
}

fn hub_neighbours(system: &TetherSystem) -> Vec<usize> {
    let mut out = Vec::new();
    for e in &system.edges {
        match (e.a, e.b) {
            (Node::Robot(i), Node::Hub) | (Node::Hub, Node::Robot(i)) => out.push(i),
            _ => {}
        }
    }
    out
}

fn centroid<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut n = 0.0;
    for p in points {
        sum += p;
        n += 1.0;
    }
    sum / n
}

/// Hub position minimizing the stored energy (zero net hub force).
///
/// The search starts at the centroid of the hub's neighbours, so a fully
/// slack network returns that centroid.
pub fn solve_hub(system: &TetherSystem, positions: &[Vector3<f64>]) -> Result<Vector3<f64>, TetherError> {
    check_positions(system, positions)?;
    let neighbours = hub_neighbours(system);
    if neighbours.len() < 2 {
        return Err(TetherError::InvalidTopology("hub needs at least two tethers".into()));
    }
    let start = centroid(neighbours.iter().map(|&i| &positions[i]));
    let mut slots: Vec<Slot> = positions.iter().map(|p| Slot::Fixed(*p)).collect();
    slots.push(Slot::Free(0));
    let problem = EnergyProblem {
        system,
        slots,
        loads: vec![Vector3::zeros()],
    };
    let (x, _) = problem.minimize(DVector::from_column_slice(start.as_slice()))?;
    Ok(Vector3::new(x[0], x[1], x[2]))
}

/// Static configuration with some robots hanging free under gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub positions: Vec<Vector3<f64>>,
    pub hub: Option<Vector3<f64>>,
    /// Sum of `s - L` over taut tethers.
    pub total_stretch: f64,
}

/// Finds where the robots in `free` come to rest when only the tethers hold
/// them, all other robots staying put.
pub fn static_equilibrium(
    system: &TetherSystem,
    positions: &[Vector3<f64>],
    free: &[usize],
    mass: f64,
    body: &Body,
) -> Result<StaticSolution, TetherError> {
    check_positions(system, positions)?;
    for &i in free {
        if i >= system.robot_count {
            return Err(TetherError::BadIndex {
                index: i,
                count: system.robot_count,
            });
        }
    }
    let has_hub = system.has_hub();
    let mut slots: Vec<Slot> = positions.iter().map(|p| Slot::Fixed(*p)).collect();
    let mut start = Vec::new();
    let mut loads = Vec::new();
    for (k, &i) in free.iter().enumerate() {
        slots[i] = Slot::Free(k);
        start.extend_from_slice(positions[i].as_slice());
        loads.push(body.weight(mass));
    }
    if has_hub {
        let neighbours = hub_neighbours(system);
        let c = centroid(neighbours.iter().map(|&i| &positions[i]));
        slots.push(Slot::Free(free.len()));
        start.extend_from_slice(c.as_slice());
        loads.push(Vector3::zeros());
    } else {
        slots.push(Slot::Fixed(Vector3::zeros()));
    }
    let problem = EnergyProblem { system, slots, loads };
    let (x, _) = problem.minimize(DVector::from_vec(start))?;
    let mut out = positions.to_vec();
    for (k, &i) in free.iter().enumerate() {
        out[i] = Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
    }
    let hub = has_hub.then(|| {
        let k = free.len();
        Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2])
    });
    let node = |n: Node| match n {
        Node::Robot(i) => out[i],
        Node::Hub => hub.unwrap_or_else(Vector3::zeros),
    };
    let total_stretch = system
        .edges
        .iter()
        .map(|e| ((node(e.b) - node(e.a)).norm() - e.spec.rest_length).max(0.0))
        .sum();
    Ok(StaticSolution {
        positions: out,
        hub,
        total_stretch,
    })
}

/// Tether forces on every robot, with the hub solved for the given
/// positions. The hub moves with the mean velocity of its neighbours.
pub fn robot_tether_forces(
    system: &TetherSystem,
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
) -> Result<(Option<Vector3<f64>>, Vec<Vector3<f64>>), TetherError> {
    check_positions(system, positions)?;
    check_positions(system, velocities)?;
    let (hub, hub_vel) = if system.has_hub() {
        let neighbours = hub_neighbours(system);
        let v = centroid(neighbours.iter().map(|&i| &velocities[i]));
        (Some(solve_hub(system, positions)?), v)
    } else {
        (None, Vector3::zeros())
    };
    let mut forces = vec![Vector3::zeros(); system.robot_count];
    let pv = |n: Node| match n {
        Node::Robot(i) => (positions[i], velocities[i]),
        Node::Hub => (hub.expect("hub solved"), hub_vel),
    };
    for e in &system.edges {
        let (pa, va) = pv(e.a);
        let (pb, vb) = pv(e.b);
        let f = tether_force(&e.spec, &pa, &pb, &(vb - va))?;
        if let Node::Robot(i) = e.a {
            forces[i] += f;
        }
        if let Node::Robot(j) = e.b {
            forces[j] -= f;
        }
    }
    Ok((hub, forces))
}

/// Gravity `F_g` and summed tether force `F_s` on one robot.
pub fn net_robot_force(
    system: &TetherSystem,
    index: usize,
    states: &[RobotState],
    mass: f64,
    body: &Body,
) -> Result<(Vector3<f64>, Vector3<f64>), TetherError> {
    if index >= system.robot_count {
        return Err(TetherError::BadIndex {
            index,
            count: system.robot_count,
        });
    }
    let p: Vec<_> = states.iter().map(|s| s.position).collect();
    let v: Vec<_> = states.iter().map(|s| s.velocity).collect();
    let (_, forces) = robot_tether_forces(system, &p, &v)?;
    Ok((body.weight(mass), forces[index]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Equilibrium {
    Holds,
    Slips,
}

/// `HOLDS` iff `|F_g + F_s|` does not exceed the grip capacity.
pub fn check_equilibrium(grip: &GripState, f_g: &Vector3<f64>, f_s: &Vector3<f64>) -> Equilibrium {
    if (f_g + f_s).norm() <= grip.total_capacity {
        Equilibrium::Holds
    } else {
        Equilibrium::Slips
    }
}

/// Stricter check splitting the load against the wall.
///
/// The tangential part must fit within the grip capacity and the pull-off
/// part (away from the wall along `wall_normal`) within
/// `normal_fraction` of it.
pub fn check_equilibrium_strict(
    grip: &GripState,
    f_g: &Vector3<f64>,
    f_s: &Vector3<f64>,
    wall_normal: &Unit<Vector3<f64>>,
    normal_fraction: f64,
) -> Equilibrium {
    let load = f_g + f_s;
    let pull_off = load.dot(wall_normal).max(0.0);
    let tangential = (load - wall_normal.into_inner() * load.dot(wall_normal)).norm();
    if tangential <= grip.total_capacity && pull_off <= normal_fraction * grip.total_capacity {
        Equilibrium::Holds
    } else {
        Equilibrium::Slips
    }
}
