//! End-to-end runs of the `turfsim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use turfsim::eventlog::read_log_file;
use turfsim_core::replay_check;

const TEN: &str = "revenues = [173.0, 125.0, 100.0, 76.0, 63.0, 51.0, 42.0, 35.0, 29.0, 26.0]\n\
                   n_ocgs = 10\ndeparture_rate = 10.0\ncollision_cost = 5.0\nhorizon = 80000.0\n";
const THREE: &str = "revenues = [30.0, 20.0, 10.0]\nn_ocgs = 3\ndeparture_rate = 15.0\ncollision_cost = 1.0\n";

fn turfsim(args: &[&str]) -> Output {
    turfsim_env(args, None)
}

fn turfsim_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_turfsim"));
    cmd.args(args).env_remove("TURFSIM_SEED");
    if let Some(seed) = seed_env {
        cmd.env("TURFSIM_SEED", seed);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "ten.toml", TEN);
    let out = dir.path().join("out");
    let o = turfsim(&["simulate", "-c", s(&config), "-o", s(&out), "--horizon", "300", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let log = read_log_file(&out.join("events.csv")).unwrap();
    assert!(!log.is_empty());
    let mut cfg = turfsim::config::parse_config(TEN).unwrap();
    cfg.horizon = 300.0;
    replay_check(&log, &cfg).unwrap();

    let (header, rows) = csv_rows(&out.join("metrics.csv"));
    assert_eq!(header, ["area_id", "revenue", "O", "V", "R", "streaks"]);
    assert_eq!(rows.len(), 10);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k.to_string());
        let o: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&o));
        assert!(row[3].parse::<f64>().unwrap() >= 0.0);
        assert!(row[4].parse::<f64>().unwrap() >= 0.0);
        row[5].parse::<u64>().unwrap();
    }

    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["areas"].as_array().unwrap().len(), 10);
    for key in ["total_collisions", "payoffs", "window", "streak_mode"] {
        assert!(metrics.get(key).is_some(), "metrics.json lacks {key}");
    }
    for key in ["area_id", "revenue", "occupancy_fraction", "violence_rate", "mean_streak", "streak_count"] {
        assert!(metrics["areas"][0].get(key).is_some(), "area entry lacks {key}");
    }
    let profile = json(&out.join("profile.json"));
    let p = profile["p"].as_array().unwrap();
    assert_eq!(p.len(), 10);
    assert!(p.iter().all(|x| (0.0..1.0).contains(&x.as_f64().unwrap())));
    assert!(profile["iterations_used"].is_u64() && profile["converged"].is_boolean());
}

#[test]
fn zero_departure_rate_gives_an_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", THREE);
    let out = dir.path().join("out");
    let o = turfsim(&["simulate", "-c", s(&config), "-o", s(&out), "--eta", "0", "--horizon", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("events.csv")).unwrap(), "time,kind,ocg_id,area_id,incumbent_id\n");
    let (_, rows) = csv_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2..].iter().all(|v| v == "0")));
}

#[test]
fn a_saved_profile_can_be_reused() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", THREE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(turfsim(&["simulate", "-c", s(&config), "-o", s(&a), "--horizon", "200"]).status.success());
    let profile = a.join("profile.json");
    let o = turfsim(&["simulate", "-c", s(&config), "-o", s(&b), "--horizon", "200", "--profile", s(&profile)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("events.csv")).unwrap(), fs::read(b.join("events.csv")).unwrap());

    let short = write(dir.path(), "short.json", r#"{"p":[0.5],"iterations_used":0,"converged":true,"residual":0.0}"#);
    let o = turfsim(&["simulate", "-c", s(&config), "-o", s(&b), "--profile", s(&short)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_configs_exit_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("revenues = [10.0, 20.0, 30.0]\nn_ocgs = 3\ndeparture_rate = 1\ncollision_cost = 1\n", "revenues"),
        ("revenues = [3.0, 2.0]\nn_ocgs = 3\ndeparture_rate = 1\ncollision_cost = 2.5\n", "collision_cost"),
        ("revenues = [3.0, 2.0]\nn_ocgs = 3\ncollision_cost = 1\n", "departure_rate"),
        ("revenues = [3.0, 2.0]\nn_ocgs = 3\ndeparture_rate = 1\ncollision_cost = 1\nhorizon = -5\n", "horizon"),
        ("revenues = [3.0, 2.0]\nn_ocgs = 3\ndeparture_rate = 1\ncollision_cost = 1\nspeed = 2\n", "speed"),
    ];
    for (k, (text, field)) in cases.iter().enumerate() {
        let config = write(dir.path(), &format!("bad{k}.toml"), text);
        for cmd in ["simulate", "sweep"] {
            let o = turfsim(&[cmd, "-c", s(&config), "-o", s(&out)]);
            assert_eq!(o.status.code(), Some(2), "{cmd} case {k}: {}", stderr(&o));
            assert!(stderr(&o).contains(field), "{cmd} case {k}: {}", stderr(&o));
        }
    }
    let o = turfsim(&["simulate", "-c", s(&dir.path().join("missing.toml")), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let o = turfsim(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", THREE);
    let blocker = write(dir.path(), "file", "");
    let o = turfsim(&["simulate", "-c", s(&config), "-o", s(&blocker.join("sub")), "--horizon", "50"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn seed_precedence_flag_file_env() {
    let dir = tempfile::tempdir().unwrap();
    let bare = write(dir.path(), "bare.toml", THREE);
    let seeded = write(dir.path(), "seeded.toml", &format!("{THREE}seed = 5\n"));
    let run = |config: &Path, name: &str, extra: &[&str], env: Option<&str>| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "-c", s(config), "-o", s(&out), "--horizon", "100"];
        args.extend_from_slice(extra);
        let o = turfsim_env(&args, env);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("events.csv")).unwrap()
    };
    let file5 = run(&seeded, "f5", &[], Some("9"));
    assert_eq!(run(&bare, "e5", &[], Some("5")), file5);
    assert_eq!(run(&bare, "s5", &["--seed", "5"], Some("9")), file5);
    assert_ne!(run(&bare, "e6", &[], Some("6")), file5);
    assert_ne!(run(&seeded, "s7", &["--seed", "7"], None), file5);

    let o = turfsim_env(&["simulate", "-c", s(&bare), "-o", s(&dir.path().join("x"))], Some("abc"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("TURFSIM_SEED"));
}

#[test]
fn analyze_day_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = write(dir.path(), "days.csv", "day,area_id,ocg_id\n1,0,0\n3,0,0\n5,0,1\n");
    let out = dir.path().join("summary.csv");
    let o = turfsim(&["analyze", s(&log), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["area_id", "ocg_count", "events", "streaks", "mean_streak", "max_streak"]);
    assert_eq!(rows, [["0", "2", "3", "1", "4", "4"]]);

    let o = turfsim(&["analyze", s(&log), "--include-censored"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("\n0,2,3,2,2.5,4\n"));

    let empty = write(dir.path(), "empty.csv", "day,area_id,ocg_id\n");
    let o = turfsim(&["analyze", s(&empty)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), "area_id,ocg_count,events,streaks,mean_streak,max_streak\n");

    let dup = write(dir.path(), "dup.csv", "day,area_id,ocg_id,day\n1,0,0,1\n");
    assert_eq!(turfsim(&["analyze", s(&dup)]).status.code(), Some(2));

    let bad = write(dir.path(), "bad.csv", "day,area_id,ocg_id\n1,0,0\nx,0,1\n");
    let o = turfsim(&["analyze", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    assert_eq!(turfsim(&["analyze", s(&dir.path().join("none.csv"))]).status.code(), Some(3));
}

#[test]
fn thresholds_command() {
    let dir = tempfile::tempdir().unwrap();
    let ten = write(dir.path(), "ten.toml", TEN);
    let o = turfsim(&["thresholds", "-c", s(&ten)]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["eta_upper"], 29.4);
    assert_eq!(v["eta_lower"], 9.6);
    assert_eq!(v["gap_ratios"][8], 0.6);
    assert_eq!(v["regime"], "intermediate");

    let three = write(dir.path(), "three.toml", THREE);
    let v: Value = serde_json::from_slice(&turfsim(&["thresholds", "-c", s(&three)]).stdout).unwrap();
    assert_eq!((v["eta_lower"].as_f64(), v["eta_upper"].as_f64()), (Some(10.0), Some(20.0)));

    let o = turfsim(&["thresholds", "-c", s(&three), "--eta", "20"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["on_boundary"], true);

    let bad = write(dir.path(), "bad.toml", "revenues = [1.0]\nn_ocgs = 1\ndeparture_rate = 1\ncollision_cost = 1\n");
    assert_eq!(turfsim(&["thresholds", "-c", s(&bad)]).status.code(), Some(2));
}

#[test]
fn one_point_sweep_reproduces_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", &format!("{THREE}seed = 11\nhorizon = 500.0\n"));
    let sim = dir.path().join("sim");
    let sweep = dir.path().join("sweep");
    assert!(turfsim(&["simulate", "-c", s(&config), "-o", s(&sim), "--eta", "12"]).status.success());
    let o = turfsim(&["sweep", "-c", s(&config), "-o", s(&sweep), "--grid", "12", "--seeds", "1", "--resamples", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (_, metrics) = csv_rows(&sim.join("metrics.csv"));
    let (header, table) = csv_rows(&sweep.join("sweep.csv"));
    assert_eq!(
        header,
        ["eta", "regime", "area_id", "revenue", "O_mean", "O_ci_lo", "O_ci_hi", "V_mean", "V_ci_lo", "V_ci_hi", "R_mean", "R_ci_lo", "R_ci_hi", "seeds"]
    );
    assert_eq!(table.len(), 3);
    for (m, t) in metrics.iter().zip(&table) {
        assert_eq!(t[2], m[0]);
        assert_eq!(t[4], m[2], "O");
        assert_eq!(t[7], m[3], "V");
        assert_eq!(t[10], m[4], "R");
        assert_eq!(t[13], "1");
    }
}

#[test]
fn sweep_regimes_checks_and_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", &format!("{THREE}seed = 2\nhorizon = 300.0\n"));
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = turfsim(&[
            "sweep", "-c", s(&config), "-o", s(&out), "--grid", "9.5:10.5:1", "--seeds", "3", "--jobs", jobs,
            "--check", "--resamples", "200",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let one = run("one", "1");
    let four = run("four", "4");
    assert_eq!(fs::read(one.join("sweep.csv")).unwrap(), fs::read(four.join("sweep.csv")).unwrap());
    assert_eq!(fs::read(one.join("verdicts.json")).unwrap(), fs::read(four.join("verdicts.json")).unwrap());

    let (_, table) = csv_rows(&one.join("sweep.csv"));
    assert_eq!(table.len(), 2 * 3);
    assert_eq!(table[0][1], "no_property_rights");
    assert_eq!(table[3][1], "intermediate");
    for row in &table {
        for (k, v) in row.iter().enumerate().skip(4).take(9) {
            assert!(v.parse::<f64>().is_ok(), "column {k}: {v:?}");
        }
    }

    let v = json(&one.join("verdicts.json"));
    assert_eq!(v["propositions"].as_array().unwrap().len(), 2);
    let clauses = v["propositions"][0]["result"]["clauses"].as_array().unwrap();
    assert_eq!(clauses.len(), 7);
    for key in ["clause", "regime", "statistic", "ci", "verdict"] {
        assert!(clauses[0].get(key).is_some(), "clause lacks {key}");
    }
    let corollaries = v["corollaries"]["clauses"].as_array().unwrap();
    assert_eq!(corollaries.len(), 4);
    assert!(corollaries.iter().all(|c| c["clause"].as_str().unwrap().starts_with("lower:")));
    assert!(one.join("profiles.json").exists());
}

#[test]
fn bad_grids_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "three.toml", THREE);
    let out = dir.path().join("out");
    for grid in ["5:1:1", "1:2:0", "3,2", "0,1", "x"] {
        let o = turfsim(&["sweep", "-c", s(&config), "-o", s(&out), "--grid", grid]);
        assert_eq!(o.status.code(), Some(2), "{grid}");
        assert!(stderr(&o).contains("grid"), "{grid}: {}", stderr(&o));
    }
    let o = turfsim(&["sweep", "-c", s(&config), "-o", s(&out), "--grid", "1", "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
