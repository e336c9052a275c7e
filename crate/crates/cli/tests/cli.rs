use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn psq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psq"))
        .args(args)
        .env_remove("PSQ_THREADS")
        .output()
        .expect("binary runs")
}

fn run_with(args: &[&str], scenario: &Path) -> Output {
    let mut all = args.to_vec();
    all.push("--scenario");
    all.push(scenario.to_str().unwrap());
    psq(&all)
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

/// `name = value` line of a report.
fn field(report: &str, name: &str) -> f64 {
    let prefix = format!("{name} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {name} in report:\n{report}"))
        .parse()
        .unwrap()
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_scenario(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn analyze_instance_a() {
    let out = run_with(
        &["analyze", "--dump-roots", "--dump-coefficients"],
        &scenario("instance_a.json"),
    );
    assert!(out.status.success());
    let report = text(&out.stdout);
    assert!(report.contains("c0 = 4\n"), "{report}");
    assert!((field(&report, "T_mean") - 4.375).abs() < 1e-12);
    assert!(report.contains("pole1"));
    assert!(report.contains("k,x,c,c_over_b"));
}

#[test]
fn plain_ps_curve_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("curve.csv");
    let out = run_with(
        &[
            "analyze",
            "--curve",
            "--x-points",
            "41",
            "--out",
            csv_path.to_str().unwrap(),
        ],
        &scenario("plain_ps.json"),
    );
    assert!(out.status.success());
    let report = text(&out.stdout);
    let c0 = field(&report, "c0");
    let rho = field(&report, "rho");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("x,alpha,alpha_prime,alpha_second,residual\n"));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 41);
    for row in rows {
        let x: f64 = row[0].parse().unwrap();
        let alpha: f64 = row[1].parse().unwrap();
        assert_eq!(alpha, x * c0);
        assert!((alpha - x / (1.0 - rho)).abs() <= 1e-15 * alpha.max(1.0));
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn tlps_curve_goes_to_stdout() {
    let out = run_with(
        &["analyze", "--curve", "--x-points", "5"],
        &scenario("tlps_two_phase.json"),
    );
    assert!(out.status.success());
    let csv = text(&out.stdout);
    assert!(csv.starts_with("x,t_tlps\n"));
    assert_eq!(csv_rows(&csv).len(), 5);
    let report = text(&out.stderr);
    assert!((field(&report, "T_mean") - 1.187_249_506_214_805_5).abs() < 1e-12);
}

#[test]
fn unstable_scenario_exits_3() {
    let out = run_with(&["analyze"], &scenario("unstable.json"));
    assert_eq!(out.status.code(), Some(3));
    let err = text(&out.stderr);
    assert!(err.starts_with("error: unstable: rho = "), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for json in [
        "{",
        r#"{"kind":"bps","lambda":0.5,"phases":[{"p":0.5,"mu":1.0}]}"#,
        r#"{"kind":"bps","lambda":-1,"phases":[{"p":1.0,"mu":1.0}]}"#,
        r#"{"kind":"tlps","lambda":0.5,"phases":[{"p":1.0,"mu":1.0}],"typo":1}"#,
    ] {
        let path = write_scenario(dir.path(), json);
        let out = run_with(&["analyze"], &path);
        assert_eq!(out.status.code(), Some(2), "{json}");
        let err = text(&out.stderr);
        assert!(
            err.starts_with("error: ") && err.lines().count() == 1,
            "{err}"
        );
    }
    let out = run_with(&["analyze"], Path::new("/no/such/scenario.json"));
    assert_eq!(out.status.code(), Some(2));
    // tlps analyze without any theta
    let out = run_with(&["analyze"], &scenario("dhr_heavy.json"));
    assert_eq!(out.status.code(), Some(2));
    let out = run_with(&["sweep"], &scenario("instance_a.json"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_single_zero_row() {
    let out = run_with(
        &[
            "sweep",
            "--theta-min",
            "0",
            "--theta-max",
            "0",
            "--points",
            "1",
        ],
        &scenario("tlps_two_phase.json"),
    );
    assert!(out.status.success());
    let rows = csv_rows(&text(&out.stdout));
    assert_eq!(rows.len(), 1);
    let t: f64 = rows[0][5].parse().unwrap();
    let baseline: f64 = rows[0][6].parse().unwrap();
    assert_eq!(t, baseline);
    assert_eq!(rows[0][7].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn dhr_sweep_improves_on_ps() {
    let out = run_with(
        &["sweep", "--theta-max", "10", "--points", "40", "--log"],
        &scenario("dhr_heavy.json"),
    );
    assert!(out.status.success());
    let csv = text(&out.stdout);
    assert!(
        csv.starts_with("theta,rho_theta,w_bar,n_bar,b_extra,t_mean,baseline,improvement_pct\n")
    );
    let best = csv_rows(&csv)
        .iter()
        .map(|r| r[7].parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best > 0.0);
    assert!(field(&text(&out.stderr), "best_improvement_pct") > 0.0);
}

#[test]
fn optimize_appends_summary_lines() {
    let out = run_with(
        &["optimize", "--theta-max", "5", "--points", "16", "--log"],
        &scenario("dhr_heavy.json"),
    );
    assert!(out.status.success());
    let csv = text(&out.stdout);
    let tail: Vec<&str> = csv.lines().rev().take(3).collect();
    assert!(tail[2].starts_with("theta_star,"));
    assert!(tail[1].starts_with("t_star,"));
    assert!(tail[0].starts_with("improvement_pct,"));
    let pct: f64 = tail[0].split(',').nth(1).unwrap().parse().unwrap();
    assert!(pct > 6.0, "{pct}");

    let out = run_with(
        &[
            "optimize",
            "--theta-min",
            "0",
            "--theta-max",
            "0",
            "--points",
            "1",
        ],
        &scenario("dhr_heavy.json"),
    );
    assert!(out.status.success());
    let csv = text(&out.stdout);
    assert!(csv.contains("\ntheta_star,0.0000000000000000e0\n"));
    assert!(csv.ends_with("improvement_pct,0.0000000000000000e0\n"));
}

#[test]
fn compare_instance_a_passes() {
    let out = run_with(
        &[
            "compare",
            "--horizon",
            "1000000",
            "--replications",
            "4",
            "--seed",
            "42",
        ],
        &scenario("instance_a.json"),
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    assert!(csv.lines().nth(1).unwrap().starts_with("mean,"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",PASS")));
}

#[test]
fn compare_tlps_passes() {
    let out = run_with(
        &["compare", "--horizon", "200000", "--replications", "5"],
        &scenario("tlps_two_phase.json"),
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
}

#[test]
fn short_compare_failure_propagates() {
    let out = run_with(
        &[
            "compare",
            "--horizon",
            "100",
            "--replications",
            "3",
            "--seed",
            "2",
        ],
        &scenario("tlps_two_phase.json"),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains(",FAIL"));
    assert!(text(&out.stderr)
        .lines()
        .last()
        .unwrap()
        .starts_with("error: "));
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &str| {
        vec![
            "simulate".to_string(),
            "--horizon".into(),
            "20000".into(),
            "--replications".into(),
            "4".into(),
            "--out".into(),
            dir.path().join(name).to_str().unwrap().to_string(),
            "--scenario".into(),
            scenario("instance_a.json").to_str().unwrap().to_string(),
        ]
    };
    let a = psq(&args("a.csv").iter().map(String::as_str).collect::<Vec<_>>());
    let b = Command::new(env!("CARGO_BIN_EXE_psq"))
        .args(args("b.csv"))
        .env("PSQ_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let csv_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert!(text(&csv_a).starts_with("bin_lo,bin_hi,count,mean,stderr\n"));
    let counts: f64 = csv_rows(&text(&csv_a))
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .sum();
    assert_eq!(counts, 4.0 * 18_000.0);
}

#[test]
fn simulate_json_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("result.json");
    let out = run_with(
        &[
            "simulate",
            "--horizon",
            "5000",
            "--theta",
            "0.5",
            "--out",
            path.to_str().unwrap(),
        ],
        &scenario("dhr_heavy.json"),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert!(v["mean_sojourn"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_psq"))
        .args([
            "analyze",
            "--scenario",
            scenario("instance_a.json").to_str().unwrap(),
        ])
        .env("PSQ_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
