use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cliffclimb_core::terrain::{read_asperities_csv, TerrainPatch};
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("scenario.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_cliffclimb"))
            .arg(cmd)
            .arg("--config")
            .arg(self.path("scenario.toml"))
            .arg("--out")
            .arg(self.path(out))
            .args(extra)
            .output()
            .unwrap()
    }

    fn ok(&self, cmd: &str, out: &str, extra: &[&str]) {
        let o = self.exec(cmd, out, extra);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }

    fn json(&self, file: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(file)).unwrap()).unwrap()
    }

    fn csv(&self, file: &str) -> (Vec<String>, Vec<Vec<f64>>) {
        let text = fs::read_to_string(self.path(file)).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
            .collect();
        (header, rows)
    }
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

const SMALL_TERRAIN: &str = "seed = 3\n[terrain]\nextent = 2e-5\nspacing = 1e-6\n";

#[test]
fn terrain_outputs_reparse() {
    let run = Run::new(SMALL_TERRAIN);
    run.ok("terrain", "o", &[]);
    let header = run.json("o/terrain.json");
    assert_eq!(header["provenance"]["seed"], 3);
    assert_eq!(header["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    let csv = fs::File::open(run.path("o/terrain.csv")).unwrap();
    let patch = TerrainPatch::from_parts(&header, BufReader::new(csv)).unwrap();
    assert_eq!((patch.nx, patch.ny), (21, 21));
    assert!((patch.rms() - header["rms"].as_f64().unwrap()).abs() < 1e-20);
    let asp = read_asperities_csv(BufReader::new(fs::File::open(run.path("o/asperities.csv")).unwrap())).unwrap();
    assert_eq!(asp.len() as u64, header["asperity_count"].as_u64().unwrap());
}

#[test]
fn zero_amplitude_terrain_is_flat() {
    let run = Run::new("[terrain]\nroughness_amp = 0.0\nextent = 1e-5\n");
    run.ok("terrain", "o", &[]);
    let (header, rows) = run.csv("o/terrain.csv");
    assert_eq!(header, ["x", "y", "z"]);
    assert_eq!(rows.len(), 121);
    assert!(rows.iter().all(|r| r[2] == 0.0));
}

#[test]
fn terrain_is_reproducible_and_seeded() {
    let run = Run::new(SMALL_TERRAIN);
    run.ok("terrain", "a", &[]);
    run.ok("terrain", "b", &[]);
    same_files(&run.path("a"), &run.path("b"));
    run.ok("terrain", "c", &["--seed", "4"]);
    assert_eq!(run.json("c/terrain.json")["provenance"]["seed"], 4);
    assert_ne!(
        fs::read(run.path("a/terrain.csv")).unwrap(),
        fs::read(run.path("c/terrain.csv")).unwrap()
    );
}

#[test]
fn mars_hop_meets_the_datum() {
    let run = Run::new("[body]\nname = \"mars\"\n");
    run.ok("hop", "o", &[]);
    let s = run.json("o/hop.json");
    let d = s["distance"].as_f64().unwrap();
    assert!((d - 1.27).abs() <= 0.02 * 1.27, "{d}");
    assert!((s["time"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    assert!((s["propellant"].as_f64().unwrap() - 0.005).abs() < 0.02 * 0.005);

    let (header, rows) = run.csv("o/trajectory.csv");
    assert_eq!(header[0], "t");
    assert_eq!(header.len(), 11);
    assert!((rows.last().unwrap()[3] - d).abs() < 1e-9);
}

#[test]
fn body_sweep_orders_by_gravity() {
    let run = Run::new("");
    run.ok("hop", "o", &[]);
    let text = fs::read_to_string(run.path("o/bodies.csv")).unwrap();
    let reach: Vec<(String, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect();
    let names: Vec<&str> = reach.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["mars", "moon", "ceres", "phobos"]);
    assert!(reach.windows(2).all(|w| w[1].1 > w[0].1), "{reach:?}");
}

#[test]
fn zero_thrust_is_rejected() {
    let run = Run::new("[robot]\nthrust = 0.0\n");
    assert_eq!(run.exec("hop", "o", &[]).status.code(), Some(2));
    assert!(!run.path("o").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let run = Run::new("[robot]\nmas = 3.0\n");
    let o = run.exec("hop", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mas"));
    let run = Run::new("sede = 1\n");
    assert_eq!(run.exec("terrain", "o", &[]).status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_cliffclimb"))
        .args(["hop", "--config", "/nonexistent/scenario.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn calibrate_reports_thrust() {
    let run = Run::new("");
    run.ok("calibrate", "o", &[]);
    let c = run.json("o/calibration.json");
    assert!((c["thrust"].as_f64().unwrap() - 18.869).abs() < 1e-3);
    assert!((c["achieved_displacement"].as_f64().unwrap() - 1.27).abs() < 0.02 * 1.27);

    let run = Run::new("[body]\nname = \"moon\"\n");
    assert_eq!(run.exec("calibrate", "o", &[]).status.code(), Some(2));
}

#[test]
fn nominal_climb_rises_each_cycle() {
    let run = Run::new("seed = 5\n[climb]\ncycles = 3\n");
    run.ok("climb", "o", &[]);
    let log = run.json("o/climb.json");
    assert_eq!(log["status"], "COMPLETED");
    assert_eq!(log["provenance"]["seed"], 5);
    let (header, rows) = run.csv("o/climb.csv");
    let cz = header.iter().position(|h| h == "center_z").unwrap();
    let at = |t: f64| {
        rows.iter()
            .min_by(|a, b| (a[0] - t).abs().total_cmp(&(b[0] - t).abs()))
            .unwrap()[cz]
    };
    let z: Vec<f64> = (0..=3).map(|c| at(6.0 * c as f64)).collect();
    assert!(z.windows(2).all(|w| w[1] > w[0]), "{z:?}");
}

#[test]
fn injected_failure_dips_then_recovers() {
    let run = Run::new("[climb]\ncycles = 2\nforced_failures = [{ robot = 3, cycle = 0 }]\n");
    run.ok("climb", "o", &[]);
    assert_eq!(run.json("o/climb.json")["status"], "RECOVERED");
    let (header, rows) = run.csv("o/climb.csv");
    let col = header.iter().position(|h| h == "r3_z").unwrap();
    let z: Vec<f64> = rows.iter().map(|r| r[col]).collect();
    let peak = z.iter().take(z.len() / 2).cloned().fold(f64::MIN, f64::max);
    let peak_at = z.iter().position(|&v| v == peak).unwrap();
    let dip = z[peak_at..].iter().cloned().fold(f64::MAX, f64::min);
    assert!(dip < peak - 0.5, "no dip: peak {peak}, min after {dip}");
    assert!(*z.last().unwrap() > 2.0, "no re-ascent: {}", z.last().unwrap());
}

#[test]
fn batch_not_below_robot_count_is_rejected() {
    let run = Run::new("[climb]\nhop_batch = 4\n");
    assert_eq!(run.exec("climb", "o", &[]).status.code(), Some(2));
}

#[test]
fn failed_climb_exits_three_with_snapshot() {
    let run = Run::new(
        "[grip]\ncapacity = { kind = \"fixed\", value = 1.5 }\n\
         [climb]\nhop_batch = 2\nspines_per_robot = 12\nforced_failures = [{ robot = 0, cycle = 0 }, { robot = 1, cycle = 0 }]\n",
    );
    let o = run.exec("climb", "o", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("snapshot"));
    let log = run.json("o/climb.json");
    assert_eq!(log["status"], "FAILED");
    assert!(log["failure"]["load"].as_f64().unwrap() > log["failure"]["capacity"].as_f64().unwrap());
}

#[test]
fn study_reports_fitness_optimum() {
    let run = Run::new("[study]\nspines_max = 30\ncurve_sizes = [4, 6]\n");
    run.ok("study", "o", &["--trials", "2000"]);
    let s = run.json("o/study.json");
    let report = |n: u64| {
        s["fitness"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["hop_batch"] == n)
            .unwrap()
            .clone()
    };
    assert_eq!(report(1)["argmax"], 4);
    assert_eq!(report(2)["argmax"], 6);
    assert!(report(1)["argmin"].as_array().unwrap().contains(&8.into()));
    assert!(report(2)["argmin"].as_array().unwrap().contains(&2.into()));

    let (header, rows) = run.csv("o/failure_n1.csv");
    assert_eq!(header, ["spines", "N=4", "N=6"]);
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[0][1], 1.0);
    assert_eq!(rows[29][1], 0.0);
    let (header, _) = run.csv("o/fitness_n2.csv");
    assert_eq!(header.last().unwrap(), "fitness");
}

#[test]
fn zero_trials_is_rejected() {
    let run = Run::new("");
    assert_eq!(run.exec("study", "o", &["--trials", "0"]).status.code(), Some(2));
}

#[test]
fn study_tables_do_not_depend_on_threads() {
    let run = Run::new("seed = 9\n[study]\nspines_max = 25\ncurve_sizes = [3, 5]\n");
    run.ok("study", "a", &["--trials", "3000", "--threads", "1"]);
    run.ok("study", "b", &["--trials", "3000", "--threads", "4"]);
    same_files(&run.path("a"), &run.path("b"));
}

#[test]
fn hop_follows_perception_target() {
    let run = Run::new(
        "[perception]\ncandidates = \"grips.csv\"\nmax_range = 1.5\n\
         [hop]\nsweep_bodies = []\n",
    );
    fs::write(run.path("grips.csv"), "x,y,z\n0.3,0,-0.2\n0.2,0.1,1.1\n0,0,1.4\n0.5,0,3.0\n").unwrap();
    run.ok("hop", "o", &[]);
    let s = run.json("o/hop.json");
    assert_eq!(s["perception"]["index"], 1);
    let landing: Vec<f64> = serde_json::from_value(s["landing"].clone()).unwrap();
    assert!((landing[0] - 0.2).abs() < 1e-3 && (landing[1] - 0.1).abs() < 1e-3 && (landing[2] - 1.1).abs() < 1e-3);
}
