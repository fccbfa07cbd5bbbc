use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
scenario.users = 8
array.drones = 4
quadrature.n_theta = 64
quadrature.n_phi = 128
optimizer.max_outer_iters = 20
";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("run.conf");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_drone-array"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn simulate_writes_one_row_per_user_plus_summary() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), SMALL, &["simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["array.csv", "baseline.csv"] {
        let rows = lines(&dir.path().join(name));
        assert_eq!(rows.len(), 8 + 2, "{name}");
        assert!(rows.last().unwrap().starts_with("total,"));
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("service_s"));
}

#[test]
fn odd_drone_count_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &format!("{SMALL}array.drones = 5\n"), &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("M must be even"), "{}", stderr(&o));
}

#[test]
fn infeasible_spacing_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{SMALL}array.d_min_m = 0.3\narray.initial_spacing_m = 0.1, 0.2\n");
    let o = run(dir.path(), &cfg, &["optimize-array"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible spacing"), "{}", stderr(&o));
}

#[test]
fn strong_wind_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "scenario.wind_n = 50, 0, 0\n", &["plan-control"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wind exceeds authority"), "{}", stderr(&o));
}

#[test]
fn bad_config_and_usage_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "scenario.bogus = 1\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scenario.bogus"));
    let o = run(dir.path(), "link.bandwidth_hz = fast\n", &["simulate"]);
    assert_eq!(o.status.code(), Some(1));

    let bin = env!("CARGO_BIN_EXE_drone-array");
    let o = Command::new(bin).arg("simulate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
    let o = Command::new(bin).arg("launch").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn optimize_array_trace_never_increases() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &format!("{SMALL}user.position_m = 200, 100, 0\n"), &["optimize-array"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = lines(&dir.path().join("trace.csv"));
    let header: Vec<&str> = rows[0].split(',').collect();
    let col = header.iter().position(|h| *h == "objective_integral").unwrap();
    let obj: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert!(obj.len() >= 2);
    assert!(obj.windows(2).all(|w| w[1] <= w[0]), "{obj:?}");
    // One row per symmetric pair.
    assert_eq!(lines(&dir.path().join("spacing.csv")).len(), 1 + 2);
    assert!(dir.path().join("poses.csv").exists());
}

#[test]
fn plan_control_reports_closure() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), "", &["plan-control"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    let line = out.lines().find(|l| l.starts_with("closure error")).unwrap();
    let rel: f64 = line.split('(').nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(rel < 0.01, "{line}");
    assert_eq!(lines(&dir.path().join("plan.csv")).len(), 1 + 15);
    assert!(lines(&dir.path().join("trajectory.csv"))[0].starts_with("t,x,y,z"));
}

#[test]
fn runs_are_byte_identical() {
    let cfg = format!("{SMALL}sweep.param = bandwidth\nsweep.values = 1e6, 5e6\nsweep.repetitions = 2\n");
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(run(a.path(), &cfg, &["--threads", "1", "sweep"]).status.success());
    assert!(run(b.path(), &cfg, &["--threads", "3", "sweep"]).status.success());
    for name in ["sweep_array.csv", "sweep_baseline.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert!(run(a.path(), &cfg, &["simulate"]).status.success());
    assert!(run(b.path(), &cfg, &["simulate"]).status.success());
    assert_eq!(fs::read(a.path().join("array.csv")).unwrap(), fs::read(b.path().join("array.csv")).unwrap());
}

#[test]
fn seed_flag_changes_the_users() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(run(a.path(), SMALL, &["--seed", "7", "simulate"]).status.success());
    assert!(run(b.path(), SMALL, &["--seed", "8", "simulate"]).status.success());
    assert_ne!(fs::read(a.path().join("array.csv")).unwrap(), fs::read(b.path().join("array.csv")).unwrap());
}

#[test]
fn hover_preset_has_an_interior_diagonal_minimum() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_drone-array"))
        .args(["--preset", "fig8", "--out"])
        .arg(dir.path())
        .arg("sweep")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = lines(&dir.path().join("hover.csv"));
    assert_eq!(rows[0], "direction_x,direction_y,direction_z,wind_n,hover_speed_rad_s");
    let curve = |diagonal: bool| -> Vec<(f64, f64)> {
        rows[1..]
            .iter()
            .map(|r| r.split(',').collect::<Vec<_>>())
            .filter(|f| (f[1] != "0") == diagonal)
            .map(|f| (f[3].parse().unwrap(), f[4].parse().unwrap()))
            .collect()
    };
    let horizontal = curve(false);
    assert_eq!(horizontal.len(), 14);
    assert!(horizontal.windows(2).all(|w| w[1].1 > w[0].1));
    let diagonal = curve(true);
    let min = diagonal.iter().cloned().fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    assert_eq!(min.0, 2.83);
}
