use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use cliffclimb_core::climber::{Climb, ClimbStatus};
use cliffclimb_core::dynamics::{self, calibrate_thrust, execute_hop, vertical_reach, RobotState};
use cliffclimb_core::perception::{obstacle_distance, read_candidates_csv, select_hop_target};
use cliffclimb_core::study::{failure_curve, fitness_study, write_curves_csv, FitnessReport};
use cliffclimb_core::terrain::write_asperities_csv;
use nalgebra::Vector3;
use serde_json::{json, Value};

use crate::config::{body_named, dynamics_error, Loaded, Provenance};
use crate::CliError;

struct Output<'a> {
    dir: PathBuf,
    provenance: &'a Provenance,
}

impl Output<'_> {
    fn create(&self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn csv<F>(&self, name: &str, body: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let mut w = self.create(name)?;
        w.write_all(self.provenance.csv_header().as_bytes())?;
        body(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush()?;
        Ok(())
    }

    fn json(&self, name: &str, mut value: Value) -> anyhow::Result<()> {
        value["provenance"] = serde_json::to_value(self.provenance)?;
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn output<'a>(loaded: &'a Loaded, out: Option<&Path>) -> Result<Output<'a>, CliError> {
    let dir = match (out, &loaded.config.output.dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => loaded.dir.join(d),
        (None, None) => loaded.dir.join("out"),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(Output {
        dir,
        provenance: &loaded.provenance,
    })
}

pub fn terrain(loaded: &Loaded, out: Option<&Path>) -> Result<(), CliError> {
    let patch = loaded.config.terrain_patch()?;
    let asperities = cliffclimb_core::terrain::extract_asperities(&patch).map_err(|e| CliError::Runtime(e.into()))?;
    let out = output(loaded, out)?;
    out.csv("terrain.csv", |w| patch.write_csv(w))?;
    out.csv("asperities.csv", |w| write_asperities_csv(&asperities, w))?;
    let mut header = patch.header_json();
    header["rms"] = json!(patch.rms());
    header["amplitude"] = json!(patch.params.amplitude());
    header["asperity_count"] = json!(asperities.len());
    out.json("terrain.json", header)?;
    println!(
        "terrain: {}x{} lattice, rms {:.3e} m, {} asperities",
        patch.nx,
        patch.ny,
        patch.rms(),
        asperities.len()
    );
    Ok(())
}

pub fn hop(loaded: &Loaded, out: Option<&Path>) -> Result<(), CliError> {
    let config = &loaded.config;
    let body = config.body()?;
    let params = config.robot_params()?;
    let start = RobotState::at_rest(Vector3::zeros(), params.propellant_budget);

    let mut target = Value::Null;
    let mut displacement = Vector3::from(config.hop.displacement);
    if let Some(p) = &config.perception {
        let pair = p.stereo()?;
        if let Some(path) = &p.candidates {
            let path = loaded.dir.join(path);
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let candidates = read_candidates_csv(BufReader::new(file)).map_err(|e| CliError::Validation(e.to_string()))?;
            let Some(i) = select_hop_target(&candidates, &start.position, &Vector3::z(), p.max_range) else {
                return Err(CliError::Runtime(anyhow::anyhow!(
                    "no candidate above the robot within {} m",
                    p.max_range
                )));
            };
            displacement = candidates[i] - start.position;
            let range = match (pair.left.project(&candidates[i]), pair.right.project(&candidates[i])) {
                (Ok(l), Ok(r)) => {
                    let est = obstacle_distance(&pair, &l, &r);
                    json!({ "range": est.range, "low_confidence": est.low_confidence })
                }
                _ => Value::Null,
            };
            target = json!({ "index": i, "point": candidates[i].as_slice(), "stereo": range });
        }
    }

    let hop = execute_hop(&start, &params, &body, &displacement, config.hop.surface).map_err(dynamics_error)?;
    let last = hop.trajectory.last().expect("hop has samples");

    let propellant = config.hop.sweep_propellant.unwrap_or(config.calibration.propellant);
    let mut sweep = Vec::new();
    for name in &config.hop.sweep_bodies {
        let b = body_named(name, None)?;
        let reach = vertical_reach(&params, &b, propellant).map_err(dynamics_error)?;
        sweep.push((b, reach));
    }

    let out = output(loaded, out)?;
    out.csv("trajectory.csv", |w| dynamics::write_trajectory_csv(&hop.trajectory, w))?;
    out.csv("bodies.csv", |w| {
        writeln!(w, "body,gravity,distance")?;
        for (b, reach) in &sweep {
            writeln!(w, "{},{},{}", b.name, b.gravity, reach)?;
        }
        Ok(())
    })?;
    let distance = (last.position - start.position).norm();
    out.json(
        "hop.json",
        json!({
            "body": body.name,
            "gravity": body.gravity,
            "thrust": params.thrust,
            "burn_time": hop.plan.burn_time,
            "target": displacement.as_slice(),
            "landing": last.position.as_slice(),
            "distance": distance,
            "rise": last.position.z - start.position.z,
            "time": last.t,
            "propellant": hop.propellant_used,
            "burn_truncated": hop.burn_truncated,
            "perception": target,
        }),
    )?;
    println!(
        "hop on {}: {:.4} m in {:.3} s using {:.4} g (thrust {:.3} N)",
        body.name,
        distance,
        last.t,
        hop.propellant_used * 1e3,
        params.thrust
    );
    Ok(())
}

pub fn calibrate(loaded: &Loaded, out: Option<&Path>) -> Result<(), CliError> {
    let config = &loaded.config;
    let body = config.body()?;
    // calibrate_thrust replaces the thrust, so any positive placeholder works
    let params = config.robot_params_with(config.robot.thrust.unwrap_or(1.0))?;
    let cal = calibrate_thrust(&params, &body, &config.datum()).map_err(dynamics_error)?;
    let out = output(loaded, out)?;
    let mut value = serde_json::to_value(cal).map_err(|e| CliError::Runtime(e.into()))?;
    value["body"] = json!(body.name);
    out.json("calibration.json", value)?;
    println!(
        "calibrated on {}: thrust {:.4} N, burn {:.4} s, rise {:.4} m",
        body.name, cal.thrust, cal.burn_time, cal.achieved_displacement
    );
    Ok(())
}

pub fn climb(loaded: &Loaded, out: Option<&Path>) -> Result<(), CliError> {
    let config = &loaded.config;
    let scenario = config.climb_scenario()?;
    let tethers = config.tethers()?;
    let grip = config.grip_model()?;
    let params = config.robot_params()?;
    let body = config.body()?;
    let climb = Climb::new(scenario, &grip, &tethers, params, body);
    climb.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let log = climb.run(config.climb.cycles).map_err(|e| CliError::Runtime(e.into()))?;

    let out = output(loaded, out)?;
    out.csv("climb.csv", |w| log.write_csv(w))?;
    out.json("climb.json", serde_json::to_value(&log).map_err(|e| CliError::Runtime(e.into()))?)?;
    println!(
        "climb {:?}: {} cycles, {} hops, {:.2} s, {:.4} g propellant",
        log.status,
        log.cycles_completed,
        log.hops,
        log.duration(),
        log.total_propellant * 1e3
    );
    if log.status == ClimbStatus::Failed {
        let reason = log.reason.clone().unwrap_or_default();
        let snapshot = serde_json::to_string(&log.failure).unwrap_or_default();
        return Err(CliError::SystemFailure(format!("{reason}\nsnapshot: {snapshot}")));
    }
    Ok(())
}

fn fitness_csv(report: &FitnessReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "robots,feasible,spines,distance,time,coverage,links,fitness")?;
    for row in &report.rows {
        match &row.raw {
            Some(m) => writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.robots, row.feasible, m.spines, m.distance, m.time, m.coverage, m.links, row.fitness
            )?,
            None => writeln!(w, "{},{},,,,,,{}", row.robots, row.feasible, row.fitness)?,
        }
    }
    Ok(())
}

pub fn study(loaded: &Loaded, out: Option<&Path>, trials: Option<usize>) -> Result<(), CliError> {
    let mut config = loaded.config.clone();
    if let Some(t) = trials {
        config.study.trials = t;
    }
    config.study_checks()?;
    let s = &config.study;
    let load = config.load_model()?;
    let reports = s
        .hop_batches
        .iter()
        .map(|&n| fitness_study(&config.trade_config(n)?).map_err(|e| CliError::Validation(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let spines: Vec<usize> = (s.spines_min..=s.spines_max).collect();
    let mut curves = Vec::new();
    for &failed in &s.failed_counts {
        let mut per_size = Vec::new();
        for &robots in s.curve_sizes.iter().filter(|&&n| n > failed) {
            let curve = failure_curve(robots, failed, &spines, s.trials, config.seed, &load)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            per_size.push((robots, curve));
        }
        curves.push((failed, per_size));
    }

    let out = output(loaded, out)?;
    for (failed, per_size) in &curves {
        out.csv(&format!("failure_n{failed}.csv"), |w| write_curves_csv(per_size, w))?;
    }
    for report in &reports {
        out.csv(&format!("fitness_n{}.csv", report.hop_batch), |w| fitness_csv(report, w))?;
    }
    out.json(
        "study.json",
        json!({
            "trials": s.trials,
            "fitness": reports,
            "failure_curves": curves.iter().map(|(failed, per_size)| json!({
                "failed": failed,
                "curves": per_size.iter().map(|(n, c)| json!({ "robots": n, "points": c })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        }),
    )?;
    for report in &reports {
        println!(
            "fitness n={}: argmax N={}, argmin N={:?}",
            report.hop_batch, report.argmax, report.argmin
        );
    }
    Ok(())
}
