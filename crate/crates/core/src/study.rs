//! Reliability and system-size trade studies.
//!
//! The reliability model treats every anchored contact as an independent
//! draw from the per-contact capacity band. A system of `N` robots with
//! `n_failed` of them hanging must carry `N m g` on the `k (N - n_failed)`
//! contacts of the rest.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grip::{can_engage, max_spine_load, SpineSpec};
use crate::rng;
use crate::terrain::Asperity;

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error("need more robots than {what} ({n}), got {robots}")]
    TooFewRobots { robots: usize, n: usize, what: &'static str },
    #[error("invalid study parameter: {0}")]
    Invalid(String),
}

/// How an anchored contact's capacity is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContactDraw {
    /// Uniform over `[min, max]` N.
    Band { min: f64, max: f64 },
    /// Each spine meets a random asperity from the wall; engaged contacts
    /// carry `κ R²` clamped to `[min, max]`, missed ones carry nothing.
    Terrain {
        spine: SpineSpec,
        asperities: Vec<Asperity>,
        min: f64,
        max: f64,
    },
}

impl Default for ContactDraw {
    fn default() -> Self {
        ContactDraw::Band { min: 1.0, max: 2.0 }
    }
}

impl ContactDraw {
    fn validate(&self) -> Result<(), StudyError> {
        let (min, max) = match self {
            ContactDraw::Band { min, max } => (*min, *max),
            ContactDraw::Terrain { asperities, min, max, .. } => {
                if asperities.is_empty() {
                    return Err(StudyError::Invalid("terrain draw needs asperities".into()));
                }
                (*min, *max)
            }
        };
        if !(min > 0.0) || !(max >= min) || !max.is_finite() {
            return Err(StudyError::Invalid(format!("capacity band [{min}, {max}]")));
        }
        Ok(())
    }

    /// Smallest and largest capacity a single contact can have.
    fn bounds(&self) -> (f64, f64) {
        match self {
            ContactDraw::Band { min, max } => (*min, *max),
            ContactDraw::Terrain { max, .. } => (0.0, *max),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ContactDraw::Band { min, max } => {
                if max > min {
                    rng.random_range(*min..*max)
                } else {
                    *min
                }
            }
            ContactDraw::Terrain {
                spine,
                asperities,
                min,
                max,
            } => {
                let a = &asperities[rng.random_range(0..asperities.len())];
                if can_engage(spine, a) {
                    max_spine_load(spine, a).map_or(*min, |f| f.clamp(*min, *max))
                } else {
                    0.0
                }
            }
        }
    }
}

/// Robot weight and contact model shared by the reliability routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    /// kg
    pub robot_mass: f64,
    /// m/s²
    pub gravity: f64,
    pub contact: ContactDraw,
}

impl Default for LoadModel {
    fn default() -> Self {
        Self {
            robot_mass: 3.0,
            gravity: 3.71,
            contact: ContactDraw::default(),
        }
    }
}

impl LoadModel {
    fn validate(&self) -> Result<(), StudyError> {
        if !(self.robot_mass > 0.0) || !(self.gravity > 0.0) {
            return Err(StudyError::Invalid("mass and gravity must be positive".into()));
        }
        self.contact.validate()
    }
}

/// `N m g / (load (N - n))`, the spines each anchored robot needs when `n`
/// robots are off the wall and every contact carries `load`.
pub fn critical_spines_real(robots: usize, n: usize, mass: f64, gravity: f64, per_contact_load: f64) -> Result<f64, StudyError> {
    if robots <= n {
        return Err(StudyError::TooFewRobots {
            robots,
            n,
            what: "hopping robots",
        });
    }
    if n == 0 {
        return Err(StudyError::Invalid("at least one robot hops".into()));
    }
    if !(per_contact_load > 0.0) || !(mass > 0.0) || !(gravity > 0.0) {
        return Err(StudyError::Invalid("mass, gravity and contact load must be positive".into()));
    }
    Ok(robots as f64 * mass * gravity / (per_contact_load * (robots - n) as f64))
}

/// Integer critical spine count, rounded down.
pub fn critical_spines(robots: usize, n: usize, mass: f64, gravity: f64, per_contact_load: f64) -> Result<u32, StudyError> {
    Ok(critical_spines_real(robots, n, mass, gravity, per_contact_load)?.floor() as u32)
}

/// One point of a failure curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub spines: usize,
    pub probability: f64,
}

fn check_failure_args(robots: usize, n_failed: usize, trials: usize, load: &LoadModel) -> Result<(), StudyError> {
    if robots <= n_failed {
        return Err(StudyError::TooFewRobots {
            robots,
            n: n_failed,
            what: "failed robots",
        });
    }
    if trials == 0 {
        return Err(StudyError::Invalid("trials must be at least 1".into()));
    }
    load.validate()
}

/// Failure probability for every `k` in `spines`.
///
/// Trial `i` draws its contacts from its own stream, and `k` spines per
/// robot use the first `k (N - n_failed)` of them, so curves are monotone
/// in `k` and identical for any thread count.
pub fn failure_curve(
    robots: usize,
    n_failed: usize,
    spines: &[usize],
    trials: usize,
    seed: u64,
    load: &LoadModel,
) -> Result<Vec<CurvePoint>, StudyError> {
    check_failure_args(robots, n_failed, trials, load)?;
    let anchored = robots - n_failed;
    let demand = robots as f64 * load.robot_mass * load.gravity;
    let (lo, hi) = load.contact.bounds();

    let mut out = vec![None; spines.len()];
    let mut random = Vec::new();
    for (slot, &k) in spines.iter().enumerate() {
        let contacts = (k * anchored) as f64;
        if contacts * hi < demand {
            out[slot] = Some(1.0);
        } else if contacts * lo >= demand {
            out[slot] = Some(0.0);
        } else {
            random.push(slot);
        }
    }
    if !random.is_empty() {
        let thresholds: Vec<usize> = random.iter().map(|&s| spines[s] * anchored).collect();
        let mut order: Vec<usize> = (0..thresholds.len()).collect();
        order.sort_by_key(|&j| thresholds[j]);
        let failures = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut r = rng::stream(seed, rng::MONTE_CARLO + trial);
                let mut fails = vec![0u64; thresholds.len()];
                let mut sum = 0.0;
                let mut drawn = 0;
                for &j in &order {
                    while drawn < thresholds[j] {
                        sum += load.contact.draw(&mut r);
                        drawn += 1;
                    }
                    if sum < demand {
                        fails[j] += 1;
                    }
                }
                fails
            })
            .reduce(
                || vec![0u64; thresholds.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        for (j, &slot) in random.iter().enumerate() {
            out[slot] = Some(failures[j] as f64 / trials as f64);
        }
    }
    Ok(spines
        .iter()
        .zip(out)
        .map(|(&k, p)| CurvePoint {
            spines: k,
            probability: p.expect("every slot filled"),
        })
        .collect())
}

/// Fraction of trials in which `k` spines per anchored robot cannot carry
/// the whole system.
pub fn failure_probability(
    robots: usize,
    n_failed: usize,
    spines: usize,
    trials: usize,
    seed: u64,
    load: &LoadModel,
) -> Result<f64, StudyError> {
    Ok(failure_curve(robots, n_failed, &[spines], trials, seed, load)?[0].probability)
}

/// Writes `spines,N=<a>,N=<b>,...` with one column per curve.
pub fn write_curves_csv<W: Write>(curves: &[(usize, Vec<CurvePoint>)], mut w: W) -> io::Result<()> {
    write!(w, "spines")?;
    for (robots, _) in curves {
        write!(w, ",N={robots}")?;
    }
    writeln!(w)?;
    let rows = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for row in 0..rows {
        let k = curves.iter().find_map(|(_, c)| c.get(row)).map_or(0, |p| p.spines);
        write!(w, "{k}")?;
        for (_, c) in curves {
            match c.get(row) {
                Some(p) => write!(w, ",{}", p.probability)?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeStudyConfig {
    /// kg
    pub robot_mass: f64,
    /// m/s²
    pub gravity: f64,
    /// N
    pub per_contact_load: f64,
    /// m
    pub hop_distance: f64,
    /// s
    pub hop_time: f64,
    /// g
    pub propellant_budget: f64,
    /// g
    pub propellant_per_hop: f64,
    /// Instrument footprint radius, m.
    pub instrument_range: f64,
    /// Centre distance between neighbouring footprints, m.
    pub robot_separation: f64,
    /// Overlapping footprint pairs. `None` uses one per tether, which for a
    /// hub topology is `N`.
    #[serde(default)]
    pub overlap_count: Option<usize>,
    pub system_sizes: Vec<usize>,
    pub hop_batch: usize,
}

impl Default for TradeStudyConfig {
    fn default() -> Self {
        Self {
            robot_mass: 3.0,
            gravity: 3.71,
            per_contact_load: 1.5,
            hop_distance: 1.27,
            hop_time: 1.5,
            propellant_budget: 1000.0,
            propellant_per_hop: 5.0,
            instrument_range: 0.75,
            robot_separation: 1.06,
            overlap_count: None,
            system_sizes: (2..=8).collect(),
            hop_batch: 1,
        }
    }
}

impl TradeStudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        let positive = [
            ("robot_mass", self.robot_mass),
            ("gravity", self.gravity),
            ("per_contact_load", self.per_contact_load),
            ("hop_distance", self.hop_distance),
            ("hop_time", self.hop_time),
            ("propellant_budget", self.propellant_budget),
            ("propellant_per_hop", self.propellant_per_hop),
            ("instrument_range", self.instrument_range),
            ("robot_separation", self.robot_separation),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(StudyError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.hop_batch == 0 {
            return Err(StudyError::Invalid("hop_batch must be at least 1".into()));
        }
        if self.system_sizes.len() < 2 {
            return Err(StudyError::Invalid("need at least two system sizes".into()));
        }
        if self.system_sizes.iter().any(|&n| n == 0) {
            return Err(StudyError::Invalid("system sizes must be positive".into()));
        }
        Ok(())
    }

    fn hops(&self) -> f64 {
        self.propellant_budget / self.propellant_per_hop
    }
}

/// Raw trade metrics for one system size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeMetrics {
    pub robots: usize,
    /// Critical spines per robot before rounding.
    pub spines_real: f64,
    pub spines: u32,
    /// Distance one robot can climb on its propellant, m.
    pub distance: f64,
    /// Time for the whole system to climb that distance, s.
    pub time: f64,
    /// Union area of instrument footprints, m².
    pub coverage: f64,
    /// Communication links between robot pairs.
    pub links: u64,
}

/// Area shared by two discs of radius `r` with centres `sep` apart.
pub fn lens_area(r: f64, sep: f64) -> f64 {
    if sep >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (sep / (2.0 * r)).acos() - 0.5 * sep * (4.0 * r * r - sep * sep).sqrt()
}

pub fn trade_metrics(config: &TradeStudyConfig, robots: usize) -> Result<TradeMetrics, StudyError> {
    config.validate()?;
    let spines_real = critical_spines_real(
        robots,
        config.hop_batch,
        config.robot_mass,
        config.gravity,
        config.per_contact_load,
    )?;
    let hops = config.hops();
    let overlaps = config.overlap_count.unwrap_or(robots) as f64;
    let r = config.instrument_range;
    let n = robots as u64;
    Ok(TradeMetrics {
        robots,
        spines_real,
        spines: spines_real.floor() as u32,
        distance: hops * config.hop_distance,
        time: hops * config.hop_time * robots.div_ceil(config.hop_batch) as f64,
        coverage: robots as f64 * std::f64::consts::PI * r * r - overlaps * lens_area(r, config.robot_separation),
        links: n * (n - 1) / 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMetrics {
    pub spines: f64,
    pub time: f64,
    pub coverage: f64,
    pub links: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRow {
    pub robots: usize,
    /// Whether at least one robot stays anchored while a batch hops.
    pub feasible: bool,
    pub raw: Option<TradeMetrics>,
    pub normalized: Option<NormalizedMetrics>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub hop_batch: usize,
    pub rows: Vec<FitnessRow>,
    pub argmax: usize,
    /// Every size tied at the lowest fitness.
    pub argmin: Vec<usize>,
    pub assumptions: Vec<String>,
}

impl FitnessReport {
    pub fn row(&self, robots: usize) -> Option<&FitnessRow> {
        self.rows.iter().find(|r| r.robots == robots)
    }
}

/// Min-max scores in `[0, 1]` with 1 for the best value. A metric with no
/// spread scores 1 everywhere.
pub fn normalize(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(span > 0.0) {
                1.0
            } else if higher_is_better {
                (v - lo) / span
            } else {
                (hi - v) / span
            }
        })
        .collect()
}

/// Scores each system size by the product of its normalized spine count,
/// climb time, coverage and link count.
///
/// Distance is the same for every size and is left out. Sizes with no more
/// robots than the hop batch cannot keep anyone anchored and score 0.
pub fn fitness_study(config: &TradeStudyConfig) -> Result<FitnessReport, StudyError> {
    config.validate()?;
    let mut sizes = config.system_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let metrics: Vec<Option<TradeMetrics>> = sizes
        .iter()
        .map(|&n| (n > config.hop_batch).then(|| trade_metrics(config, n)).transpose())
        .collect::<Result<_, _>>()?;
    let feasible: Vec<&TradeMetrics> = metrics.iter().flatten().collect();
    if feasible.len() < 2 {
        return Err(StudyError::Invalid(format!(
            "need at least two system sizes larger than the hop batch {}",
            config.hop_batch
        )));
    }
    let column = |f: fn(&TradeMetrics) -> f64, higher| normalize(&feasible.iter().map(|m| f(m)).collect::<Vec<_>>(), higher);
    let spines = column(|m| m.spines as f64, false);
    let time = column(|m| m.time, false);
    let coverage = column(|m| m.coverage, true);
    let links = column(|m| m.links as f64, false);

    let mut rows = Vec::with_capacity(sizes.len());
    let mut k = 0;
    for (&robots, raw) in sizes.iter().zip(&metrics) {
        match raw {
            Some(raw) => {
                let norm = NormalizedMetrics {
                    spines: spines[k],
                    time: time[k],
                    coverage: coverage[k],
                    links: links[k],
                };
                k += 1;
                rows.push(FitnessRow {
                    robots,
                    feasible: true,
                    raw: Some(*raw),
                    normalized: Some(norm),
                    fitness: norm.spines * norm.time * norm.coverage * norm.links,
                });
            }
            None => rows.push(FitnessRow {
                robots,
                feasible: false,
                raw: None,
                normalized: None,
                fitness: 0.0,
            }),
        }
    }
    let best = rows.iter().map(|r| r.fitness).fold(f64::NEG_INFINITY, f64::max);
    let worst = rows.iter().map(|r| r.fitness).fold(f64::INFINITY, f64::min);
    let argmax = rows.iter().find(|r| r.fitness == best).map(|r| r.robots).expect("rows non-empty");
    let argmin = rows.iter().filter(|r| r.fitness == worst).map(|r| r.robots).collect();
    let overlaps = match config.overlap_count {
        Some(m) => format!("{m} overlapping footprint pairs"),
        None => "one overlapping footprint pair per tether (M = N)".to_string(),
    };
    let assumptions = vec![
        format!(
            "instrument range r = {} m and footprint separation {} m are free choices",
            config.instrument_range, config.robot_separation
        ),
        overlaps,
        "spine count enters the score after rounding down".to_string(),
        "distance is identical for all sizes and is excluded from the product".to_string(),
        format!("sizes with N <= {} keep no robot anchored and score 0", config.hop_batch),
    ];
    Ok(FitnessReport {
        hop_batch: config.hop_batch,
        rows,
        argmax,
        argmin,
        assumptions,
    })
}
