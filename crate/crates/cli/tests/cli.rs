use std::fs;
use std::process::{Command, Output};

use d2d_cli::output::CSV_HEADER;
use d2d_cli::sweep::SweepRow;
use serde_json::Value;

fn d2d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2d")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn q_curve_csv_header_and_rows() {
    let o = d2d(&["q-curve", "--engine", "analytic"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "beta_dbm,q_analytic,q_mc,q_mc_ci95,cov_cell_analytic,cov_cell_mc,cov_cell_ci95,cov_d2d_analytic,cov_d2d_mc,cov_d2d_ci95,ase_cell,ase_d2d,ase_total,skips,wall_ms"
    );
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 10);
    let q: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(q.windows(2).all(|w| w[1] < w[0]), "{q:?}");
    for l in &lines[1..] {
        let digits = l.split(',').nth(1).unwrap().trim_start_matches("0.").trim_start_matches('0');
        assert!(digits.len() <= 6, "{l}");
    }
}

#[test]
fn resolved_config_is_echoed() {
    let o = d2d(&["q-curve", "--set", "beta_dbm=-50", "--beta-min", "-60", "--beta-max", "-60"]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("# resolved configuration"));
    assert!(err.lines().any(|l| l == "beta_dbm = -50"));
    assert!(err.lines().any(|l| l == "beta_min_dbm = -60"));
    assert!(err.lines().any(|l| l == "p_b_dbm = 46"));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let o = d2d(&["q-curve", "--set", "epsilon=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "p_b = 40\n").unwrap();
    let o = d2d(&["q-curve", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p_b_dbm"), "{}", stderr(&o));

    fs::write(&path, "lambda_x_per_km2 = 4\n").unwrap();
    let o = d2d(&["q-curve", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda_x_per_km2"));

    let o = d2d(&["q-curve", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn file_then_flags_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "lambda_b_per_km2 = 10\nbeta_min_dbm = -40\nbeta_max_dbm = -40\nseed = 5\n").unwrap();
    let o = d2d(&["q-curve", "--config", path.to_str().unwrap(), "--seed", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.lines().any(|l| l == "lambda_b_per_km2 = 10"));
    assert!(err.lines().any(|l| l == "seed = 6"));
    let base = d2d(&["q-curve", "--beta-min", "-40", "--beta-max", "-40"]);
    let q = |o: &Output| -> f64 { stdout(o).lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap() };
    assert!(q(&o) > q(&base));
}

#[test]
fn json_embeds_config_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    let o = d2d(&["q-curve", "--format", "json", "--out", path.to_str().unwrap(), "--beta-step", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["config"]["lambda_b_per_km2"], 5.0);
    assert_eq!(v["config"]["beta_step_db"], 10.0);
    let rows: Vec<SweepRow> = serde_json::from_value(v["rows"].clone()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0].beta_dbm, -70.0);
    assert!(rows.iter().all(|r| r.q_analytic.is_some() && r.q_mc.is_none()));
}

#[test]
fn mc_output_is_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, name: &str| -> Vec<u8> {
        let p = dir.path().join(name);
        let o = d2d(&[
            "q-curve", "--engine", "both", "--reps", "500", "--seed", "77", "--workers", workers, "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(p).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    let c = run("1", "c.csv");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = d2d(&["q-curve", "--engine", "mc", "--reps", "500", "--seed", "78"]);
    assert_ne!(stdout(&other).into_bytes(), a);
}

#[test]
fn coverage_curve_uses_its_own_header() {
    let o = d2d(&["coverage-curve", "--gamma-grid", "-5,0,10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], d2d_cli::output::CURVE_HEADER);
    assert_eq!(lines.len(), 4);
    let cell: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(cell.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn timing_column_only_on_request() {
    let args = ["q-curve", "--beta-min", "-50", "--beta-max", "-50"];
    let o = d2d(&args);
    assert!(stdout(&o).lines().nth(1).unwrap().ends_with(','));
    let o = d2d(&[&args[..], &["--timing"]].concat());
    let wall: f64 = stdout(&o).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(wall >= 0.0);
}

#[test]
fn infeasible_optimisation_exits_4() {
    let o = d2d(&["optimize-beta", "--beta-min", "-50", "--beta-max", "-50", "--constraint", "0.99"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("constrained: infeasible"));
    assert!(out.contains("closest_to_feasible: beta_dbm = -50"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = d2d(&["plot"]);
    assert_eq!(o.status.code(), Some(2));
}
