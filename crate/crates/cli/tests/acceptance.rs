//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line (run with `--nocapture` to see them). Tolerances are pinned
//! in the assertions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ppe_cli::commands::designer_point;
use ppe_core::builders;
use ppe_core::engine::{run, ContinuationState, EquilibriumConfig, SeededSampler, Signal};
use ppe_core::game::{Action, EfficientFrontier, ReducedGame, SupportPolicy};
use ppe_core::grid::GridPolicy;
use ppe_core::linalg::dot;
use ppe_core::metrics::{min_discount, mu_min, DeviationStats};
use ppe_core::oracle::{decomposable, is_self_generating, OracleOptions};
use ppe_core::rng;
use ppe_core::sim::{deviation_value, simulate, DeviationMode, DeviationPolicy};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn analyze(game: &ReducedGame, policy: &GridPolicy) -> (EfficientFrontier, DeviationStats) {
    let frontier = EfficientFrontier::compute(game, policy).unwrap();
    let stats = DeviationStats::compute(game, &frontier, policy).unwrap();
    (frontier, stats)
}

fn pd_fixture() -> ReducedGame {
    builders::make_modified_pd(4.0, 1.0, 1.5, 0.9, 0.8, 0.2).unwrap()
}

/// Criterion 1: closed-form floor and threshold over 100 random parameter
/// tuples, both to 1e-12, in under a second.
#[test]
fn criterion_1_closed_form_match() {
    let start = Instant::now();
    let policy = GridPolicy::default();
    for case in 0..100u64 {
        let seed = 0xacce_0001;
        let b = rng::range(seed, case, 0, 0.2, 2.0);
        let r = rng::range(seed, case, 1, 0.05, 0.7);
        let q = rng::range(seed, case, 2, r + 0.1, 0.95);
        let p = rng::range(seed, case, 3, q, 0.97);
        let floor_ref = q / (q - r) * b;
        let lo = (2.0 * b + 1.0).max(2.2 * floor_ref);
        let big_b = rng::range(seed, case, 4, lo, lo + 12.0);
        let c = rng::range(seed, case, 5, b + 0.05, big_b / 2.0 - 0.05);

        let game = builders::make_modified_pd(big_b, b, c, p, q, r).unwrap();
        let (frontier, stats) = analyze(&game, &policy);
        let floors = mu_min(&frontier, &stats);
        assert!((floors[0] - floor_ref).abs() < 1e-12, "case {case}");
        assert!((floors[1] - floor_ref).abs() < 1e-12, "case {case}");
        let delta = min_discount(&frontier, &stats, &floors).unwrap();
        let z = (big_b - 2.0 * floor_ref) / (big_b + 2.0 * (1.0 - q) / (q - r) * b);
        assert!(
            (delta - 1.0 / (1.0 + z)).abs() < 1e-12,
            "case {case}: {delta} vs {}",
            1.0 / (1.0 + z)
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 1 PASS: 100 closed-form tuples matched to 1e-12 in {elapsed:?}");
}

/// Criterion 2: fixture numbers, verified independently by brute-force
/// enumeration of the two-action deviation sets.
#[test]
fn criterion_2_fixture_numbers() {
    let (big_b, b, _c, _p, q, r) = (4.0f64, 1.0f64, 1.5f64, 0.9f64, 0.8f64, 0.2f64);
    // brute force straight from the table: player 2's deviations at (D,C)
    // are {C (stay), D}; only D gains, and it moves the bad-signal
    // probability from 1-q to 1-r
    let gains = [(0.0f64, 0.0f64), (b - 0.0, (1.0 - r) - (1.0 - q))];
    let alpha_bf = gains
        .iter()
        .filter(|(g, _)| *g > 0.0)
        .map(|(g, d)| g / d)
        .fold(f64::NEG_INFINITY, f64::max);
    let mu_bf = 0.0 + alpha_bf * (1.0 - (1.0 - q));
    let z_bf = (1.0 - 2.0 * mu_bf / big_b) / (2.0 * (1.0 + alpha_bf * (1.0 - q) / big_b) - 1.0);
    let delta_bf = 1.0 / (1.0 + z_bf);

    let policy = GridPolicy::default();
    let game = pd_fixture();
    let (frontier, stats) = analyze(&game, &policy);
    assert!((stats.alpha[0][1] - 5.0 / 3.0).abs() < 1e-12);
    assert!((stats.alpha[1][0] - 5.0 / 3.0).abs() < 1e-12);
    assert!((stats.alpha[0][1] - alpha_bf).abs() < 1e-12);
    let floors = mu_min(&frontier, &stats);
    assert!((floors[0] - 4.0 / 3.0).abs() < 1e-12);
    assert!((floors[1] - 4.0 / 3.0).abs() < 1e-12);
    assert!((floors[0] - mu_bf).abs() < 1e-12);
    let delta = min_discount(&frontier, &stats, &floors).unwrap();
    assert!((delta - 7.0 / 9.0).abs() < 1e-12);
    assert!((delta - delta_bf).abs() < 1e-12);
    println!("criterion 2 PASS: alpha 5/3, floors 4/3, threshold 7/9 (brute force agrees)");
}

fn engine_fixtures() -> Vec<(&'static str, EquilibriumConfig)> {
    let policy = GridPolicy::default();
    let mut out = Vec::new();
    {
        let game = pd_fixture();
        let (frontier, stats) = analyze(&game, &policy);
        out.push((
            "dilemma",
            EquilibriumConfig::new(game, frontier, stats, None, 0.8, None, &policy).unwrap(),
        ));
    }
    {
        let game = builders::make_contest(2, 1.0, 0.9, 0.65, 0.2, 501).unwrap();
        let (frontier, stats) = analyze(&game, &policy);
        out.push((
            "contest",
            EquilibriumConfig::new(game, frontier, stats, None, 0.75, None, &policy).unwrap(),
        ));
    }
    {
        let game = builders::make_contest(3, 1.0, 0.9, 0.65, 0.2, 301).unwrap();
        let (frontier, stats) = analyze(&game, &policy);
        out.push((
            "contest3",
            EquilibriumConfig::new(game, frontier, stats, None, 0.85, None, &policy).unwrap(),
        ));
    }
    {
        // flipped labels: winner announcement is the bad signal
        let game = builders::make_contest(2, 1.0, 0.9, 0.4, 0.2, 501).unwrap();
        let (frontier, stats) = analyze(&game, &policy);
        out.push((
            "contest-flipped",
            EquilibriumConfig::new(game, frontier, stats, None, 0.99, None, &policy).unwrap(),
        ));
    }
    out
}

/// Criterion 3: along 1000-step trajectories of every engine-admissible
/// example config, the promise identity and the hyperplane identity hold to
/// 1e-9 each step, and the profitable-deviation constraint is binding at
/// the recorded witness. (The shared-server game is excluded: its interior
/// optima fail condition 2, so no engine config exists for it.)
#[test]
fn criterion_3_exact_identities() {
    for (name, config) in engine_fixtures() {
        let n = config.game.player_count();
        let records = run(
            &config,
            &mut SeededSampler {
                seed: 314,
                episode: 0,
            },
            1000,
        )
        .unwrap();
        for rec in &records {
            let w = dot(&config.frontier.lambda, &rec.v);
            assert!((w - 1.0).abs() <= 1e-9, "{name} t={} hyperplane {w}", rec.t);

            let state = ContinuationState {
                t: rec.t,
                v: rec.v.clone(),
                last_active: None,
            };
            let (good, active, profile) =
                ppe_core::engine::step(&config, &state, Signal::Good).unwrap();
            let (bad, _, _) = ppe_core::engine::step(&config, &state, Signal::Bad).unwrap();
            let u = config.game.utility(&profile);
            let rho_b = config.stats.rho_bad_pref[active];
            for k in 0..n {
                let promised = (1.0 - config.delta) * u[k]
                    + config.delta * ((1.0 - rho_b) * good.v[k] + rho_b * bad.v[k]);
                assert!(
                    (promised - rec.v[k]).abs() <= 1e-9,
                    "{name} t={} player {k}: promise {} vs {}",
                    rec.t,
                    promised,
                    rec.v[k]
                );
            }
            // binding profitable deviation for each inactive player
            for j in 0..n {
                if j == active || !config.stats.alpha[active][j].is_finite() {
                    continue;
                }
                let wit = config.stats.alpha_witness[active][j].unwrap();
                let mut dev = profile.clone();
                dev[j] = wit;
                let u_d = config.game.utility(&dev)[j];
                let rb_d = config.game.rho_bad(active, &dev);
                let value = (1.0 - config.delta) * u_d
                    + config.delta * ((1.0 - rb_d) * good.v[j] + rb_d * bad.v[j]);
                assert!(
                    (value - rec.v[j]).abs() <= 1e-9,
                    "{name} t={} deviator {j}: binding check {value} vs {}",
                    rec.t,
                    rec.v[j]
                );
            }
            // every grid deviation (active or not) is weakly deterred
            if rec.t % 50 == 0 {
                for j in 0..n {
                    let mut dev = profile.clone();
                    for a in config.game.space(j).grid_capped(201) {
                        dev[j] = a;
                        let u_d = config.game.utility(&dev)[j];
                        let rb_d = config.game.rho_bad(active, &dev);
                        let value = (1.0 - config.delta) * u_d
                            + config.delta * ((1.0 - rb_d) * good.v[j] + rb_d * bad.v[j]);
                        assert!(
                            value <= rec.v[j] + 1e-9,
                            "{name} t={} player {j} action {:?} gains {}",
                            rec.t,
                            a,
                            value - rec.v[j]
                        );
                    }
                    dev[j] = profile[j];
                }
            }
        }
    }
    println!("criterion 3 PASS: identities at 1e-9 over 1000 steps on 4 configs");
}

/// Criterion 4: bisecting the oracle's verdict brackets the threshold
/// within 1e-3, and every engine-visited state decomposes; under 30 s.
#[test]
fn criterion_4_oracle_agreement() {
    let start = Instant::now();
    let policy = GridPolicy::default();
    let game = pd_fixture();
    let (frontier, stats) = analyze(&game, &policy);
    let floors = mu_min(&frontier, &stats);
    let opts = OracleOptions::default();

    let feasible = |d: f64| {
        is_self_generating(&game, &frontier, &stats, &floors, d, 201, &policy, &opts)
            .unwrap()
            .self_generating
    };
    let (mut lo, mut hi) = (0.55f64, 0.95f64);
    assert!(!feasible(lo) && feasible(hi));
    while hi - lo > 2e-4 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let threshold = 7.0 / 9.0;
    assert!(
        lo <= threshold + 1e-3 && hi >= threshold - 1e-3,
        "bisection [{lo}, {hi}] does not bracket {threshold}"
    );

    let config = EquilibriumConfig::new(
        game.clone(),
        frontier.clone(),
        stats.clone(),
        Some(floors.clone()),
        0.8,
        None,
        &policy,
    )
    .unwrap();
    let records = run(
        &config,
        &mut SeededSampler {
            seed: 8,
            episode: 0,
        },
        400,
    )
    .unwrap();
    for rec in &records {
        let res = decomposable(
            &game, &frontier, &stats, &floors, 0.8, &rec.v, &policy, &opts,
        )
        .unwrap();
        assert!(res.feasible, "t={} not decomposable: {:?}", rec.t, rec.v);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 4 PASS: flip bracketed in [{lo:.6}, {hi:.6}] around 7/9; 400 engine states decomposable ({elapsed:?})"
    );
}

/// Criterion 5: the supportable set plateaus — identical feasible masks and
/// worst points at the threshold, midway, and 0.99.
#[test]
fn criterion_5_threshold_plateau() {
    let policy = GridPolicy::default();
    let game = pd_fixture();
    let (frontier, stats) = analyze(&game, &policy);
    let floors = mu_min(&frontier, &stats);
    let opts = OracleOptions::default();

    let grid = 201usize;
    let masks: Vec<Vec<bool>> = [7.0 / 9.0, 8.0 / 9.0, 0.99]
        .iter()
        .map(|&delta| {
            (0..grid)
                .map(|k| {
                    let x = 4.0 * k as f64 / (grid - 1) as f64;
                    let v = vec![x, 4.0 - x];
                    decomposable(&game, &frontier, &stats, &floors, delta, &v, &policy, &opts)
                        .unwrap()
                        .feasible
                })
                .collect()
        })
        .collect();
    assert_eq!(masks[0], masks[1], "mask changed between 7/9 and 8/9");
    assert_eq!(masks[0], masks[2], "mask changed between 7/9 and 0.99");

    let endpoints = |mask: &[bool]| {
        let lo = mask.iter().position(|&f| f).unwrap();
        let hi = mask.iter().rposition(|&f| f).unwrap();
        (
            4.0 * lo as f64 / (grid - 1) as f64,
            4.0 * hi as f64 / (grid - 1) as f64,
        )
    };
    let (lo0, hi0) = endpoints(&masks[0]);
    for m in &masks[1..] {
        let (lo, hi) = endpoints(m);
        assert!((lo - lo0).abs() < 1e-6 && (hi - hi0).abs() < 1e-6);
    }
    // the feasible slice is exactly the floored set
    assert!(lo0 >= floors[0] - 0.03 && hi0 <= 4.0 - floors[1] + 0.03);
    println!(
        "criterion 5 PASS: supportable slice [{lo0:.3}, {hi0:.3}] identical at deltas 7/9, 8/9, 0.99"
    );
}

/// Criterion 6: the 3x3x3 game forces floors of 0.7 each, which weigh 1.4
/// on the hyperplane; the analyzer reports infeasibility with exit 1.
#[test]
fn criterion_6_infeasible_counterexample() {
    let policy = GridPolicy::default();
    let game = builders::make_table3().unwrap();
    let (frontier, stats) = analyze(&game, &policy);
    let floors = mu_min(&frontier, &stats);
    for f in &floors {
        assert!((f - 0.7).abs() < 1e-12, "floor {f}");
    }
    let weighted = dot(&frontier.lambda, &floors);
    assert!((weighted - 1.4).abs() < 1e-12);

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ppe"))
        .args([
            "analyze",
            "--config",
            fixture("table3.ini").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Condition 3 infeasible"), "stderr: {err}");
    println!("criterion 6 PASS: floors (0.7,0.7,0.7) weigh 1.4 > 1; analyzer exits 1");
}

/// Criterion 7: Monte Carlo estimates hit the target within 3 standard
/// errors and no stationary deviation gains more than 3 pooled standard
/// errors; under 60 s.
#[test]
fn criterion_7_simulation_statistics() {
    let start = Instant::now();
    let policy = GridPolicy::default();
    let game = pd_fixture();
    let (frontier, stats) = analyze(&game, &policy);
    let config = EquilibriumConfig::new(game, frontier, stats, None, 0.8, None, &policy).unwrap();
    let out = simulate(&config, 10_000, 120, 42, &policy, None).unwrap();
    for k in 0..2 {
        assert!(
            (out.mean[k] - 2.0).abs() <= 3.0 * out.stderr[k],
            "coordinate {k}: {} +- {}",
            out.mean[k],
            out.stderr[k]
        );
    }
    let mut worst: (f64, f64, String) = (f64::NEG_INFINITY, 0.0, String::new());
    for player in 0..2usize {
        for action in 0..2usize {
            let dev = deviation_value(
                &config,
                DeviationPolicy {
                    player,
                    mode: DeviationMode::Stationary(Action::Index(action)),
                },
                10_000,
                120,
                43,
                &policy,
                None,
            )
            .unwrap();
            let gain = dev.mean - config.v0[player];
            let pooled = (dev.stderr.powi(2) + out.stderr[player].powi(2)).sqrt();
            if gain > worst.0 {
                worst = (
                    gain,
                    pooled,
                    format!("player {} action {}", player + 1, action),
                );
            }
            assert!(
                gain <= 3.0 * pooled,
                "player {player} stationary {action}: gain {gain} vs pooled stderr {pooled}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 7 PASS: estimates within 3 se; best stationary deviation ({}) gains {:.5} <= 3*{:.5} ({elapsed:?})",
        worst.2, worst.0, worst.1
    );
}

fn perturbed_pd(rel: f64, seed: u64) -> (ReducedGame, ReducedGame) {
    let sign = |k: u64| 1.0 + rel * (2.0 * rng::unit(seed, 77, k) - 1.0);
    let base = pd_fixture();
    let shaken = builders::make_modified_pd(
        4.0 * sign(0),
        1.0 * sign(1),
        1.5 * sign(2),
        0.9 * sign(3),
        0.8 * sign(4),
        0.2 * sign(5),
    )
    .unwrap();
    (base, shaken)
}

fn perturbed_contest(rel: f64, seed: u64) -> (ReducedGame, ReducedGame) {
    let sign = |k: u64| 1.0 + rel * (2.0 * rng::unit(seed, 78, k) - 1.0);
    let base = builders::make_contest(2, 1.0, 0.9, 0.65, 0.2, 501).unwrap();
    let shaken = builders::make_contest(
        2,
        1.0 * sign(0),
        0.9 * sign(1),
        0.65 * sign(2),
        0.2 * sign(3),
        501,
    )
    .unwrap();
    (base, shaken)
}

/// Criterion 8: a relative 1e-7 shake of every model parameter replays the
/// same action sequence over 50 periods on 20 tie-free seeded trajectories.
///
/// Seed selection: a shake of size r at period t moves the indicators by
/// roughly r * (1/delta)^t, so a trajectory counts as tie-free only when
/// every per-period indicator gap clears that amplified scale with room to
/// spare (trajectories inside the measure-zero collision set are exactly
/// the ones the robustness statement excludes).
#[test]
fn criterion_8_local_constancy() {
    let policy = GridPolicy::default();
    let mut ran = 0usize;
    for family in 0..2usize {
        let delta = if family == 0 { 0.8 } else { 0.9 };
        let mut accepted = 0usize;
        let mut candidate = 9000u64 + 500 * family as u64;
        while accepted < 10 {
            let seed = candidate;
            candidate += 1;
            assert!(
                candidate < 9000 + 500 * family as u64 + 400,
                "seed scan exhausted"
            );
            let (base, shaken) = if family == 0 {
                perturbed_pd(1e-7, seed)
            } else {
                perturbed_contest(1e-7, seed)
            };
            let (f0, s0) = analyze(&base, &policy);
            let (f1, s1) = analyze(&shaken, &policy);
            // same target expressed in each frontier's coordinates
            let theta = rng::range(seed, 1, 0, 0.40, 0.60);
            let mk_target = |f: &EfficientFrontier| -> Vec<f64> {
                (0..2)
                    .map(|k| theta * f.v_tilde[0][k] + (1.0 - theta) * f.v_tilde[1][k])
                    .collect()
            };
            let mu0 = mu_min(&f0, &s0);
            let mu1 = mu_min(&f1, &s1);
            let t0 = mk_target(&f0);
            let t1 = mk_target(&f1);
            let c0 =
                EquilibriumConfig::new(base, f0, s0, Some(mu0), delta, Some(t0), &policy).unwrap();
            let c1 = EquilibriumConfig::new(shaken, f1, s1, Some(mu1), delta, Some(t1), &policy)
                .unwrap();
            let r0 = run(&c0, &mut SeededSampler { seed, episode: 0 }, 50).unwrap();
            let tie_free = r0.iter().all(|rec| {
                let gap = (rec.indicators[0] - rec.indicators[1]).abs();
                gap >= 1e-6 && gap >= 20.0 * 1e-7 * (1.0 / delta).powi(rec.t as i32) + 1e-4
            });
            if !tie_free {
                continue;
            }
            let r1 = run(&c1, &mut SeededSampler { seed, episode: 0 }, 50).unwrap();
            accepted += 1;
            ran += 1;
            for (a, b) in r0.iter().zip(&r1) {
                assert_eq!(
                    a.active, b.active,
                    "family {family} seed {seed} t {}: action sequence diverged",
                    a.t
                );
            }
        }
    }
    assert_eq!(ran, 20);
    println!("criterion 8 PASS: 20 tie-free trajectories replay identically after a 1e-7 shake");
}

/// Criterion 9: sweep reproductions. (a) the threshold sweep vanishes at
/// both detection-degenerate extremes and is positive in between for the
/// unit exponent; (b) the threshold is monotone along the floor-fraction
/// axis; (c) the finer contest announcement is analyzed only through an
/// explicit coarsening.
#[test]
fn criterion_9_sweep_reproductions() {
    let policy = GridPolicy::default();

    // (a) d0 sweep: 98 points over [1.5, 50]
    let mut rows = Vec::new();
    for k in 0..98 {
        let d0 = 1.5 + (50.0 - 1.5) * k as f64 / 97.0;
        let point = builders::make_mm1(3, 1.0, 0.3, 1.0, d0, 501)
            .ok()
            .and_then(|game| designer_point(&game, &policy, SupportPolicy::Reachable));
        if let Some((fraction, delta_min)) = point {
            assert!(fraction.is_finite() && delta_min.is_finite());
            assert!(delta_min > 0.0 && delta_min < 1.0);
        }
        rows.push((d0, point));
    }
    assert!(
        rows.first().unwrap().1.is_none(),
        "low extreme must degenerate"
    );
    assert!(
        rows.last().unwrap().1.is_none(),
        "high extreme must degenerate"
    );
    let positives: Vec<&(f64, Option<(f64, f64)>)> = rows
        .iter()
        .filter(|(_, p)| matches!(p, Some((f, _)) if *f > 0.0))
        .collect();
    assert!(
        !positives.is_empty(),
        "no feasible threshold in the sweep window"
    );
    let (d0_best, Some((frac_best, _))) = positives[0] else {
        unreachable!()
    };
    assert!(
        (frac_best - 0.75).abs() < 1e-3,
        "fraction at d0 {d0_best}: {frac_best}"
    );

    // (b) larger floor fraction (less slack) never lowers the threshold
    let game = builders::make_mm1(3, 1.0, 0.3, 1.0, 2.2, 501).unwrap();
    let (frontier, stats) = analyze(&game, &policy);
    let floors = mu_min(&frontier, &stats);
    let eta_min = (0..3)
        .map(|i| floors[i] / frontier.v_tilde[i][i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut last = 0.0f64;
    for k in 0..20 {
        let eta = eta_min + (1.0 / 3.0 - 1e-3 - eta_min) * k as f64 / 19.0;
        let mu: Vec<f64> = (0..3).map(|i| eta * frontier.v_tilde[i][i]).collect();
        let delta = min_discount(&frontier, &stats, &mu).unwrap();
        assert!(
            delta >= last - 1e-12,
            "threshold fell from {last} to {delta} as slack shrank (eta {eta})"
        );
        last = delta;
    }

    // (c) the finer announcement's quantitative frontier is out of scope:
    // rule 2 without an explicit coarsening is refused as input
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ppe"))
        .args([
            "analyze",
            "--config",
            fixture("contest_rule2_nocoarsen.ini").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    println!(
        "criterion 9 PASS: sweep degenerates at both extremes, fraction {frac_best:.4} at d0 {d0_best:.2}; threshold monotone along the floor axis; finer announcement needs explicit coarsening"
    );
}
