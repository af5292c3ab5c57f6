//! TOML scenario file.
//!
//! Every section is optional and falls back to the four-robot Mars defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use cliffclimb_core::climber::{ClimbScenario, ForcedFailure, GripModel};
use cliffclimb_core::dynamics::{datum_thrust, Body, DynamicsError, Gains, HopDatum, RobotParams, Surface};
use cliffclimb_core::grip::{CapacityModel, SpineSpec};
use cliffclimb_core::perception::{CameraModel, StereoPair};
use cliffclimb_core::study::{ContactDraw, LoadModel, TradeStudyConfig};
use cliffclimb_core::terrain::{extract_asperities, generate_patch, Asperity, TerrainParams, TerrainPatch};
use cliffclimb_core::tether::{Node, TetherEdge, TetherSpec, TetherSystem};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub output: OutputSection,
    pub terrain: TerrainSection,
    pub body: BodySection,
    pub robot: RobotSection,
    pub calibration: CalibrationSection,
    pub hop: HopSection,
    pub tether: TetherSection,
    pub grip: GripSection,
    pub climb: ClimbSection,
    pub study: StudySection,
    pub perception: Option<PerceptionSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths resolve against the config file's directory.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSection {
    pub fractal_dim: f64,
    pub roughness_amp: f64,
    pub sample_length: f64,
    pub gamma_freq: f64,
    pub ridge_count: u32,
    /// Defaults to the Nyquist limit of `spacing`.
    pub max_freq_index: Option<u32>,
    pub extent: f64,
    pub spacing: f64,
}

impl Default for TerrainSection {
    fn default() -> Self {
        Self {
            fractal_dim: 2.5,
            roughness_amp: 1e-10,
            sample_length: 1e-4,
            gamma_freq: 1.5,
            ridge_count: 10,
            max_freq_index: None,
            extent: 1e-4,
            spacing: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodySection {
    pub name: String,
    /// Overrides the named body's gravity; required for unknown names.
    pub gravity: Option<f64>,
}

impl Default for BodySection {
    fn default() -> Self {
        Self {
            name: "mars".into(),
            gravity: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub mass: f64,
    pub diameter: f64,
    /// Calibrated against `[calibration]` when absent.
    pub thrust: Option<f64>,
    pub specific_impulse: f64,
    pub kp: f64,
    /// Critically damped when absent.
    pub kd: Option<f64>,
    pub torque_limit: f64,
    pub propellant_budget: f64,
    pub hop_duration: f64,
    pub dt: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let p = RobotParams::default();
        Self {
            mass: p.mass,
            diameter: p.diameter,
            thrust: None,
            specific_impulse: p.specific_impulse,
            kp: p.gains.kp.x,
            kd: None,
            torque_limit: p.torque_limit,
            propellant_budget: p.propellant_budget,
            hop_duration: p.hop_duration,
            dt: p.dt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub displacement: f64,
    pub duration: f64,
    /// kg
    pub propellant: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = HopDatum::mars_wall();
        Self {
            displacement: d.displacement,
            duration: d.duration,
            propellant: d.propellant,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopSection {
    pub displacement: [f64; 3],
    pub surface: Surface,
    /// Bodies compared in `bodies.csv`.
    pub sweep_bodies: Vec<String>,
    /// Propellant burnt in the sweep; defaults to the calibration datum's.
    pub sweep_propellant: Option<f64>,
}

impl Default for HopSection {
    fn default() -> Self {
        Self {
            displacement: [0.0, 0.0, 1.27],
            surface: Surface::Vertical,
            sweep_bodies: ["mars", "moon", "ceres", "phobos"].map(String::from).to_vec(),
            sweep_propellant: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    /// `r<i>` or `hub`.
    pub a: String,
    pub b: String,
    pub stiffness: Option<f64>,
    pub rest_length: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TetherSection {
    pub stiffness: f64,
    pub rest_length: f64,
    pub damping: f64,
    /// Star through a hub when absent.
    pub edges: Option<Vec<EdgeSection>>,
}

impl Default for TetherSection {
    fn default() -> Self {
        let s = TetherSpec::default();
        Self {
            stiffness: s.stiffness,
            rest_length: s.rest_length,
            damping: s.damping,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripSection {
    pub spine: SpineSpec,
    pub tip_radius_min: f64,
    pub tip_radius_max: f64,
    pub area_density: f64,
    pub capacity: CapacityModel,
}

impl Default for GripSection {
    fn default() -> Self {
        Self {
            spine: SpineSpec::default(),
            tip_radius_min: 12e-6,
            tip_radius_max: 25e-6,
            area_density: 1e6,
            capacity: CapacityModel::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimbSection {
    pub robot_count: usize,
    pub hop_batch: usize,
    pub hop_distance: f64,
    /// Required unless `robot_count` is 4.
    pub initial_positions: Option<Vec<[f64; 3]>>,
    pub approach_angle_deg: f64,
    pub spines_per_robot: usize,
    pub gait_order: Option<Vec<usize>>,
    pub retry_limit: usize,
    pub slip_damping: f64,
    pub max_settle_time: f64,
    pub cycles: usize,
    pub forced_failures: Vec<ForcedFailure>,
}

impl Default for ClimbSection {
    fn default() -> Self {
        let s = ClimbScenario::four_robot();
        Self {
            robot_count: s.robot_count,
            hop_batch: s.hop_batch,
            hop_distance: s.hop_distance,
            initial_positions: None,
            approach_angle_deg: s.approach_angle_deg,
            spines_per_robot: s.spines_per_robot,
            gait_order: None,
            retry_limit: s.retry_limit,
            slip_damping: s.slip_damping,
            max_settle_time: s.max_settle_time,
            cycles: 1,
            forced_failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactSource {
    /// Uniform over the capacity band.
    Band,
    /// Spines meet asperities of the `[terrain]` patch.
    Terrain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Defaults to `robot.mass`.
    pub robot_mass: Option<f64>,
    /// Defaults to the body's gravity.
    pub gravity: Option<f64>,
    pub per_contact_load: f64,
    pub hop_distance: f64,
    pub hop_time: f64,
    pub propellant_budget: f64,
    pub propellant_per_hop: f64,
    pub instrument_range: f64,
    pub robot_separation: f64,
    pub overlap_count: Option<usize>,
    pub system_sizes: Vec<usize>,
    pub hop_batches: Vec<usize>,
    pub failed_counts: Vec<usize>,
    pub curve_sizes: Vec<usize>,
    pub spines_min: usize,
    pub spines_max: usize,
    pub trials: usize,
    pub contact: ContactSource,
    pub capacity_min: f64,
    pub capacity_max: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        let t = TradeStudyConfig::default();
        Self {
            robot_mass: None,
            gravity: None,
            per_contact_load: t.per_contact_load,
            hop_distance: t.hop_distance,
            hop_time: t.hop_time,
            propellant_budget: t.propellant_budget,
            propellant_per_hop: t.propellant_per_hop,
            instrument_range: t.instrument_range,
            robot_separation: t.robot_separation,
            overlap_count: t.overlap_count,
            system_sizes: t.system_sizes,
            hop_batches: vec![1, 2],
            failed_counts: vec![1, 2],
            curve_sizes: (2..=8).collect(),
            spines_min: 1,
            spines_max: 60,
            trials: 100_000,
            contact: ContactSource::Band,
            capacity_min: 1.0,
            capacity_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionSection {
    pub fx: f64,
    pub fy: f64,
    pub skew: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
    /// `x,y,z` grip candidates; when set, `hop` flies to the selected one.
    pub candidates: Option<PathBuf>,
    pub max_range: f64,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        Self {
            fx: 800.0,
            fy: 800.0,
            skew: 0.0,
            cx: 320.0,
            cy: 240.0,
            baseline: 0.2,
            candidates: None,
            max_range: 2.0,
        }
    }
}

/// Config hash, seed and tool version stamped on every output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn csv_header(&self) -> String {
        format!(
            "# config_sha256={}\n# seed={}\n# version={}\n",
            self.config_sha256, self.seed, self.version
        )
    }
}

/// A parsed config together with where it came from.
pub struct Loaded {
    pub config: ScenarioConfig,
    pub dir: PathBuf,
    pub provenance: Provenance,
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Loaded, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Runtime(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw).map_err(invalid)?;
    let mut config: ScenarioConfig = toml::from_str(text).map_err(invalid)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let provenance = Provenance {
        config_sha256: hex::encode(Sha256::digest(&raw)),
        seed: config.seed,
        version: concat!("cliffclimb ", env!("CARGO_PKG_VERSION")).into(),
    };
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, dir, provenance })
}

impl ScenarioConfig {
    pub fn terrain_params(&self) -> Result<TerrainParams, CliError> {
        let t = &self.terrain;
        let mut params = TerrainParams {
            fractal_dim: t.fractal_dim,
            roughness_amp: t.roughness_amp,
            sample_length: t.sample_length,
            gamma_freq: t.gamma_freq,
            ridge_count: t.ridge_count,
            max_freq_index: 0,
            phase_seed: self.seed,
        };
        params.validate().map_err(invalid)?;
        if !(t.spacing > 0.0) || !(t.extent > t.spacing) {
            return Err(invalid(format!(
                "terrain extent {} must exceed spacing {} > 0",
                t.extent, t.spacing
            )));
        }
        params.max_freq_index = t.max_freq_index.unwrap_or_else(|| params.nyquist_freq_index(t.spacing));
        Ok(params)
    }

    pub fn terrain_patch(&self) -> Result<TerrainPatch, CliError> {
        let params = self.terrain_params()?;
        generate_patch(&params, self.terrain.extent, self.terrain.spacing).map_err(invalid)
    }

    pub fn asperities(&self) -> Result<Vec<Asperity>, CliError> {
        extract_asperities(&self.terrain_patch()?).map_err(invalid)
    }

    pub fn body(&self) -> Result<Body, CliError> {
        body_named(&self.body.name, self.body.gravity)
    }

    pub fn datum(&self) -> HopDatum {
        HopDatum {
            displacement: self.calibration.displacement,
            duration: self.calibration.duration,
            propellant: self.calibration.propellant,
        }
    }

    /// Robot parameters with `thrust` substituted by `thrust` when given.
    pub fn robot_params_with(&self, thrust: f64) -> Result<RobotParams, CliError> {
        let r = &self.robot;
        let inertia = 0.4 * r.mass * (r.diameter / 2.0).powi(2);
        let mut gains = Gains::critically_damped(r.kp, inertia.max(0.0));
        if let Some(kd) = r.kd {
            gains.kd = Vector3::repeat(kd);
        }
        let params = RobotParams {
            mass: r.mass,
            diameter: r.diameter,
            thrust,
            specific_impulse: r.specific_impulse,
            gains,
            torque_limit: r.torque_limit,
            propellant_budget: r.propellant_budget,
            hop_duration: r.hop_duration,
            dt: r.dt,
        };
        params.validate().map_err(invalid)?;
        Ok(params)
    }

    /// Robot parameters, calibrating the thruster on the configured body if
    /// no thrust is set.
    pub fn robot_params(&self) -> Result<RobotParams, CliError> {
        let thrust = match self.robot.thrust {
            Some(t) => t,
            None => {
                let body = self.body()?;
                let (thrust, _) = datum_thrust(self.robot.mass, self.robot.specific_impulse, body.gravity, &self.datum())
                    .map_err(dynamics_error)?;
                thrust
            }
        };
        self.robot_params_with(thrust)
    }

    pub fn tethers(&self) -> Result<TetherSystem, CliError> {
        let t = &self.tether;
        let base = TetherSpec {
            stiffness: t.stiffness,
            rest_length: t.rest_length,
            damping: t.damping,
        };
        let n = self.climb.robot_count;
        let system = match &t.edges {
            None => TetherSystem::star(n, base),
            Some(edges) => TetherSystem {
                robot_count: n,
                edges: edges
                    .iter()
                    .map(|e| {
                        Ok(TetherEdge {
                            a: parse_node(&e.a)?,
                            b: parse_node(&e.b)?,
                            spec: TetherSpec {
                                stiffness: e.stiffness.unwrap_or(base.stiffness),
                                rest_length: e.rest_length.unwrap_or(base.rest_length),
                                damping: base.damping,
                            },
                        })
                    })
                    .collect::<Result<_, CliError>>()?,
            },
        };
        system.validate().map_err(invalid)?;
        Ok(system)
    }

    pub fn grip_model(&self) -> Result<GripModel, CliError> {
        let g = &self.grip;
        let model = GripModel {
            spine: g.spine,
            tip_radius_range: (g.tip_radius_min, g.tip_radius_max),
            area_density: g.area_density,
            capacity: g.capacity,
            asperities: self.asperities()?,
        };
        model.array(1).map_err(invalid)?;
        model.capacity.validate().map_err(invalid)?;
        Ok(model)
    }

    pub fn climb_scenario(&self) -> Result<ClimbScenario, CliError> {
        let c = &self.climb;
        let initial_positions = match &c.initial_positions {
            Some(p) => p.iter().map(|v| Vector3::from(*v)).collect(),
            None if c.robot_count == 4 => ClimbScenario::four_robot().initial_positions,
            None => return Err(invalid("climb.initial_positions is required unless robot_count = 4")),
        };
        let scenario = ClimbScenario {
            robot_count: c.robot_count,
            hop_batch: c.hop_batch,
            hop_distance: c.hop_distance,
            initial_positions,
            approach_angle_deg: c.approach_angle_deg,
            spines_per_robot: c.spines_per_robot,
            seed: self.seed,
            gait_order: c.gait_order.clone(),
            retry_limit: c.retry_limit,
            slip_damping: c.slip_damping,
            max_settle_time: c.max_settle_time,
            forced_failures: c.forced_failures.clone(),
        };
        scenario.validate().map_err(invalid)?;
        Ok(scenario)
    }

    pub fn trade_config(&self, hop_batch: usize) -> Result<TradeStudyConfig, CliError> {
        let s = &self.study;
        let config = TradeStudyConfig {
            robot_mass: s.robot_mass.unwrap_or(self.robot.mass),
            gravity: match s.gravity {
                Some(g) => g,
                None => self.body()?.gravity,
            },
            per_contact_load: s.per_contact_load,
            hop_distance: s.hop_distance,
            hop_time: s.hop_time,
            propellant_budget: s.propellant_budget,
            propellant_per_hop: s.propellant_per_hop,
            instrument_range: s.instrument_range,
            robot_separation: s.robot_separation,
            overlap_count: s.overlap_count,
            system_sizes: s.system_sizes.clone(),
            hop_batch,
        };
        config.validate().map_err(invalid)?;
        Ok(config)
    }

    pub fn load_model(&self) -> Result<LoadModel, CliError> {
        let s = &self.study;
        let (min, max) = (s.capacity_min, s.capacity_max);
        let contact = match s.contact {
            ContactSource::Band => ContactDraw::Band { min, max },
            ContactSource::Terrain => ContactDraw::Terrain {
                spine: self.grip.spine,
                asperities: self.asperities()?,
                min,
                max,
            },
        };
        Ok(LoadModel {
            robot_mass: s.robot_mass.unwrap_or(self.robot.mass),
            gravity: match s.gravity {
                Some(g) => g,
                None => self.body()?.gravity,
            },
            contact,
        })
    }

    pub fn study_checks(&self) -> Result<(), CliError> {
        let s = &self.study;
        if s.trials == 0 {
            return Err(invalid("study.trials must be at least 1"));
        }
        if s.spines_min > s.spines_max {
            return Err(invalid("study.spines_min exceeds spines_max"));
        }
        if s.hop_batches.is_empty() {
            return Err(invalid("study.hop_batches is empty"));
        }
        Ok(())
    }
}

impl PerceptionSection {
    pub fn stereo(&self) -> Result<StereoPair, CliError> {
        let a: Matrix3<f64> = CameraModel::intrinsic_matrix(self.fx, self.fy, self.skew, self.cx, self.cy);
        StereoPair::rectified(a, self.baseline).map_err(invalid)
    }
}

pub fn body_named(name: &str, gravity: Option<f64>) -> Result<Body, CliError> {
    match (Body::by_name(name), gravity) {
        (_, Some(g)) => Body::new(name, g).map_err(invalid),
        (Some(b), None) => Ok(b),
        (None, None) => Err(invalid(format!("unknown body {name:?}; set body.gravity"))),
    }
}

fn parse_node(name: &str) -> Result<Node, CliError> {
    if name == "hub" {
        return Ok(Node::Hub);
    }
    name.strip_prefix('r')
        .and_then(|i| i.parse().ok())
        .map(Node::Robot)
        .ok_or_else(|| invalid(format!("tether node {name:?} is neither hub nor r<index>")))
}

/// Calibration and parameter errors are configuration problems.
pub fn dynamics_error(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::InvalidParams(_) | DynamicsError::Calibration(_) => invalid(e),
        other => CliError::Runtime(other.into()),
    }
}
