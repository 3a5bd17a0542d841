//! Exit-code contracts, golden CSV schemas and the analyze round-trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn out_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ppe-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ppe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn validate_exit_codes() {
    let ok = ppe(&["validate", "--config", fixture("pd.ini").to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    let constraint = ppe(&[
        "validate",
        "--config",
        fixture("pd_constraint.ini").to_str().unwrap(),
    ]);
    assert_eq!(code(&constraint), 1);
    let err = String::from_utf8_lossy(&constraint.stderr);
    assert!(err.contains("q > r"), "stderr: {err}");

    let malformed = ppe(&[
        "validate",
        "--config",
        fixture("malformed.ini").to_str().unwrap(),
    ]);
    assert_eq!(code(&malformed), 2);
    let err = String::from_utf8_lossy(&malformed.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn finer_announcements_require_explicit_coarsening() {
    let out = ppe(&[
        "analyze",
        "--config",
        fixture("contest_rule2_nocoarsen.ini").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("coarsen"), "stderr: {err}");
}

#[test]
fn strict_support_flag_tightens_validation() {
    // the contest signal degenerates at zero effort, so the strict check
    // fails while the on-path check passes
    let dir = out_dir("strict");
    let cfg = dir.join("contest.ini");
    std::fs::write(
        &cfg,
        "[game]\nbuilder = contest\nn = 2\nR = 1\neta = 0.9\nkappa = 0.65\nc = 0.2\n\n[analysis]\ngrid = 201\n",
    )
    .unwrap();
    let relaxed = ppe(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        code(&relaxed),
        0,
        "{}",
        String::from_utf8_lossy(&relaxed.stderr)
    );
    let strict = ppe(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--strict-support",
    ]);
    assert_eq!(code(&strict), 1);
}

#[test]
fn analysis_csv_matches_golden() {
    let dir = out_dir("golden-analysis");
    let out = ppe(&[
        "analyze",
        "--config",
        fixture("pd.ini").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.join("analysis.csv")).unwrap();
    let want = std::fs::read_to_string(fixture("golden_analysis.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn trajectory_csv_matches_golden() {
    let dir = out_dir("golden-trajectory");
    let out = ppe(&[
        "run",
        "--config",
        fixture("pd.ini").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--horizon",
        "12",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let want = std::fs::read_to_string(fixture("golden_trajectory.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn analyze_round_trips_through_its_own_output() {
    let dir = out_dir("roundtrip");
    // first pass: defaults (floors from condition 3, no delta)
    let base_cfg = dir.join("base.ini");
    std::fs::write(
        &base_cfg,
        "[game]\nbuilder = modified_pd\nB = 4\nb = 1\nc = 1.5\np = 0.9\nq = 0.8\nr = 0.2\n",
    )
    .unwrap();
    let first = ppe(&[
        "analyze",
        "--config",
        base_cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&first), 0);
    let csv = std::fs::read_to_string(dir.join("analysis.csv")).unwrap();
    let summary: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("summary"))
        .unwrap()
        .split(',')
        .collect();
    // schema: record,i,j,alpha,beta,aw,bw,mu_min,mu,delta_min,delta,c1,c2,c3,c4,regular
    let mu_min = summary[7].replace(' ', ",");
    let delta_min = summary[9];
    let margins_first = [summary[11], summary[12], summary[13]];

    // second pass: feed those numbers back as explicit settings
    let fed_cfg = dir.join("fed.ini");
    std::fs::write(
        &fed_cfg,
        format!(
            "[game]\nbuilder = modified_pd\nB = 4\nb = 1\nc = 1.5\np = 0.9\nq = 0.8\nr = 0.2\n\n[analysis]\nmu = {mu_min}\ndelta = {delta_min}\n"
        ),
    )
    .unwrap();
    let second = ppe(&[
        "analyze",
        "--config",
        fed_cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&second),
        0,
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    let csv2 = std::fs::read_to_string(dir.join("analysis.csv")).unwrap();
    let summary2: Vec<&str> = csv2
        .lines()
        .find(|l| l.starts_with("summary"))
        .unwrap()
        .split(',')
        .collect();
    for (k, m) in margins_first.iter().enumerate() {
        assert_eq!(summary2[11 + k], *m, "condition {} margin drifted", k + 1);
    }
    // the fed-back threshold binds exactly
    assert_eq!(summary2[14], "0");
    assert_eq!(summary2[9], delta_min);
}

#[test]
fn simulate_reports_a_deviation_verdict() {
    let dir = out_dir("simdev");
    let cfg = dir.join("pd.ini");
    std::fs::write(
        &cfg,
        "[game]\nbuilder = modified_pd\nB = 4\nb = 1\nc = 1.5\np = 0.9\nq = 0.8\nr = 0.2\n\n[analysis]\ndelta = 0.8\n\n[simulation]\nepisodes = 300\nhorizon = 120\nseed = 9\ndeviator = 2\ndeviation = stationary:D\n",
    )
    .unwrap();
    let out = ppe(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("simulation_summary.txt")).unwrap();
    assert!(summary.contains("\"deviation\""), "{summary}");
    assert!(summary.contains("\"profitable\": false"), "{summary}");
    let csv = std::fs::read_to_string(dir.join("simulation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert_eq!(csv.lines().next(), Some("episode,v_1,v_2"));
}

#[test]
fn unknown_sweep_parameter_is_an_input_error() {
    let dir = out_dir("badsweep");
    let cfg = dir.join("bad.ini");
    std::fs::write(
        &cfg,
        "[game]\nbuilder = modified_pd\nB = 4\nb = 1\nc = 1.5\np = 0.9\nq = 0.8\nr = 0.2\n\n[sweep]\nparameter = banana\nfrom = 0\nto = 1\nsteps = 3\n",
    )
    .unwrap();
    let out = ppe(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn kappa_sweep_traces_the_designer_frontier() {
    use ppe_cli::commands::designer_point;
    use ppe_core::builders::make_contest;
    use ppe_core::game::SupportPolicy;
    use ppe_core::grid::GridPolicy;

    let policy = GridPolicy::default();
    let point = |kappa: f64| {
        make_contest(2, 1.0, 0.9, kappa, 0.2, 501)
            .ok()
            .and_then(|g| designer_point(&g, &policy, SupportPolicy::Reachable))
    };
    // flipped-label pocket just above eta - 1/2: the deviation rate grows
    // with kappa, so the achievable fraction shrinks
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let kappa = 0.401 + 0.001 * k as f64;
        let (fraction, delta_min) = point(kappa).unwrap_or_else(|| panic!("kappa {kappa}"));
        assert!(fraction > 0.0 && delta_min < 1.0);
        assert!(fraction <= last + 1e-12, "fraction rose at kappa {kappa}");
        last = fraction;
    }
    // dead zone between the pocket and the plain-label region
    assert!(point(0.45).is_none());
    // plain-label feasible region further up
    assert!(point(0.6).is_some());
    // no profitable deviations at all once effort cannot pay
    assert!(point(0.75).is_none());
}

#[test]
fn table3_analyze_reports_infeasible_floors() {
    let out = ppe(&[
        "analyze",
        "--config",
        fixture("table3.ini").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Condition 3 infeasible"), "stderr: {err}");
}

#[test]
fn delta_sweep_flips_at_the_threshold() {
    let dir = out_dir("deltasweep");
    let cfg = dir.join("pd.ini");
    std::fs::write(
        &cfg,
        "[game]\nbuilder = modified_pd\nB = 4\nb = 1\nc = 1.5\np = 0.9\nq = 0.8\nr = 0.2\n\n[sweep]\nparameter = delta\nfrom = 0.70\nto = 0.86\nsteps = 9\n",
    )
    .unwrap();
    let out = ppe(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("parameter,value,fraction,delta_min")
    );
    // grid: 0.70, 0.72, ..., 0.86; threshold 7/9 = 0.7778
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let delta: f64 = cells[1].parse().unwrap();
        let feasible = !cells[2].is_empty();
        assert_eq!(feasible, delta >= 7.0 / 9.0, "at delta {delta}: {line}");
    }
}
