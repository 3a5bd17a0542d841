//! Subcommand implementations. Each returns the process exit code:
//! 0 = pass, 1 = analytic infeasibility or violation, 2 = input error.

use std::fmt::Write as _;

use ppe_core::engine::{run, EquilibriumConfig, SeededSampler, Signal};
use ppe_core::game::{validate_assumptions, Check, EfficientFrontier, ReducedGame, SupportPolicy};
use ppe_core::grid::GridPolicy;
use ppe_core::metrics::{
    check_conditions, cond1_check, min_discount, mu_min, ConditionReport, DeviationStats,
    MetricsError,
};
use ppe_core::oracle::{
    decomposable, is_self_generating, two_player, OracleOptions, TwoPlayerCase,
};
use ppe_core::sim::{deviation_value, simulate, DeviationMode, DeviationPolicy};

use crate::build::{build_game, parse_action, BuildOutcome};
use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Everything resolved from flags + config that commands share.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: std::path::PathBuf,
    pub policy: GridPolicy,
    pub support: SupportPolicy,
}

impl Context {
    fn write_out(&self, name: &str, contents: &str) -> Result<(), String> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| format!("cannot create {}: {e}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
    }
}

fn fmt_f(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_f(x)).collect::<Vec<_>>().join(" ")
}

enum Prepared {
    Ready(ReducedGame),
    Failed(i32),
}

fn prepare_game(ctx: &Context) -> Prepared {
    match build_game(&ctx.config.game, ctx.config.analysis.grid) {
        Ok(BuildOutcome::Ok(game)) => Prepared::Ready(game),
        Ok(BuildOutcome::Constraint(msg)) => {
            eprintln!("parameter constraint violated: {msg}");
            Prepared::Failed(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("{}", e.0);
            Prepared::Failed(EXIT_INPUT)
        }
    }
}

fn analysis_pipeline(
    ctx: &Context,
    game: &ReducedGame,
) -> Result<(EfficientFrontier, DeviationStats), String> {
    let frontier =
        EfficientFrontier::compute(game, &ctx.policy).map_err(|e| format!("frontier: {e}"))?;
    let stats = DeviationStats::compute(game, &frontier, &ctx.policy)
        .map_err(|e| format!("deviation rates: {e}"))?;
    Ok((frontier, stats))
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn print_check(name: &str, c: &Check) {
    println!(
        "{name}: {} (margin {}, {})",
        if c.pass { "pass" } else { "FAIL" },
        fmt_f(c.margin),
        c.detail
    );
}

pub fn cmd_validate(ctx: &Context) -> i32 {
    let game = match prepare_game(ctx) {
        Prepared::Ready(g) => g,
        Prepared::Failed(code) => return code,
    };
    let report = validate_assumptions(&game, &ctx.policy, ctx.support);
    print_check("independent preferred payoffs", &report.independence);
    print_check("profiles below the hyperplane", &report.below_hyperplane);
    print_check("full support", &report.full_support);
    print_check("profitable deviations detected", &report.detectability);
    for v in &report.a4_violations {
        println!(
            "  witness: active {} deviator {} action {} gain {} drho {}",
            v.active + 1,
            v.deviator + 1,
            game.space(v.deviator).label(v.action),
            fmt_f(v.gain),
            fmt_f(v.drho)
        );
    }
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn analysis_csv(game: &ReducedGame, stats: &DeviationStats, report: &ConditionReport) -> String {
    let n = game.player_count();
    let mut s = String::from(
        "record,i,j,alpha,beta,alpha_witness,beta_witness,mu_min,mu,delta_min,delta,cond1_margin,cond2_margin,cond3_margin,cond4_margin,regular\n",
    );
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wit = |w: Option<ppe_core::game::Action>| {
                w.map(|a| game.space(j).label(a)).unwrap_or_default()
            };
            let _ = writeln!(
                s,
                "pair,{},{},{},{},{},{},,,,,,,,,",
                i + 1,
                j + 1,
                fmt_f(stats.alpha[i][j]),
                fmt_f(stats.beta[i][j]),
                wit(stats.alpha_witness[i][j]),
                wit(stats.beta_witness[i][j]),
            );
        }
    }
    let _ = writeln!(
        s,
        "summary,,,,,,,{},{},{},{},{},{},{},{},{}",
        fmt_vec(&report.mu_min),
        fmt_vec(&report.mu),
        report.delta_min.map(fmt_f).unwrap_or_default(),
        report.delta.map(fmt_f).unwrap_or_default(),
        fmt_f(report.cond1.margin),
        fmt_f(report.cond2.margin),
        fmt_f(report.cond3.margin),
        fmt_f(report.cond4.margin),
        report.regular,
    );
    s
}

pub fn cmd_analyze(ctx: &Context) -> i32 {
    let game = match prepare_game(ctx) {
        Prepared::Ready(g) => g,
        Prepared::Failed(code) => return code,
    };
    let validation = validate_assumptions(&game, &ctx.policy, ctx.support);
    if !validation.all_pass() {
        eprintln!("assumption validation failed; run `validate` for details");
        return EXIT_VIOLATION;
    }
    let (frontier, stats) = match analysis_pipeline(ctx, &game) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VIOLATION;
        }
    };
    let mu = ctx
        .config
        .analysis
        .mu
        .clone()
        .unwrap_or_else(|| mu_min(&frontier, &stats));
    let report = match check_conditions(
        &game,
        &frontier,
        &stats,
        &mu,
        ctx.config.analysis.delta,
        &ctx.policy,
    ) {
        Ok(r) => r,
        Err(MetricsError::InfeasibleMu { weighted_sum }) => {
            eprintln!(
                "Condition 3 infeasible: required floors weigh {weighted_sum} > 1; no floored slice exists"
            );
            return EXIT_VIOLATION;
        }
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VIOLATION;
        }
    };

    println!("lambda: {}", fmt_vec(&frontier.lambda));
    for (i, (a, v)) in frontier.a_tilde.iter().zip(&frontier.v_tilde).enumerate() {
        println!(
            "preferred[{}]: ({}) -> {}",
            i + 1,
            game.profile_label(a),
            fmt_vec(v)
        );
    }
    println!("mu_min: {}", fmt_vec(&report.mu_min));
    println!("mu: {}", fmt_vec(&report.mu));
    println!(
        "delta_min: {}",
        report.delta_min.map(fmt_f).unwrap_or_else(|| "n/a".into())
    );
    for (k, c) in [
        ("cond1", &report.cond1),
        ("cond2", &report.cond2),
        ("cond3", &report.cond3),
        ("cond4", &report.cond4),
    ] {
        println!(
            "{k}: {} (margin {}, {})",
            if c.pass { "pass" } else { "FAIL" },
            fmt_f(c.margin),
            c.witness
        );
    }
    println!("regular: {}", report.regular);

    if game.player_count() == 2 {
        match two_player(&game, &frontier, &stats, &ctx.policy) {
            Ok(ch) => {
                match ch.case {
                    TwoPlayerCase::Interval { mu_bar, delta_star } => println!(
                        "two-player: supportable slice floors ({}) from delta {}",
                        fmt_vec(&mu_bar),
                        fmt_f(delta_star)
                    ),
                    TwoPlayerCase::NoEfficientPpe { reason } => {
                        println!("two-player: no efficient equilibrium payoffs ({reason})")
                    }
                }
                println!(
                    "extreme points stationary-achievable: {:?}",
                    ch.extreme_point_achievable
                );
            }
            Err(e) => eprintln!("two-player characterization unavailable: {e}"),
        }
    }

    if let Err(e) = ctx.write_out("analysis.csv", &analysis_csv(&game, &stats, &report)) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }
    if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn engine_config(ctx: &Context, game: &ReducedGame) -> Result<EquilibriumConfig, (i32, String)> {
    let Some(delta) = ctx.config.analysis.delta else {
        return Err((EXIT_INPUT, "this command needs [analysis] delta".into()));
    };
    let (frontier, stats) = analysis_pipeline(ctx, game).map_err(|e| (EXIT_VIOLATION, e))?;
    EquilibriumConfig::new(
        game.clone(),
        frontier,
        stats,
        ctx.config.analysis.mu.clone(),
        delta,
        ctx.config.analysis.v0.clone(),
        &ctx.policy,
    )
    .map_err(|e| (EXIT_VIOLATION, e.to_string()))
}

pub fn cmd_run(ctx: &Context) -> i32 {
    let game = match prepare_game(ctx) {
        Prepared::Ready(g) => g,
        Prepared::Failed(code) => return code,
    };
    let config = match engine_config(ctx, &game) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let horizon = ctx.config.simulation.horizon;
    let mut source = SeededSampler {
        seed: ctx.config.simulation.seed,
        episode: 0,
    };
    let records = match run(&config, &mut source, horizon) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VIOLATION;
        }
    };
    let n = game.player_count();
    let mut csv = String::from("t,active,signal");
    for k in 1..=n {
        let _ = write!(csv, ",v_{k}");
    }
    for k in 1..=n {
        let _ = write!(csv, ",d_{k}");
    }
    csv.push('\n');
    for rec in &records {
        let _ = write!(
            csv,
            "{},{},{}",
            rec.t,
            rec.active + 1,
            if rec.signal == Signal::Bad {
                "bad"
            } else {
                "good"
            }
        );
        for x in &rec.v {
            let _ = write!(csv, ",{}", fmt_f(*x));
        }
        for d in &rec.indicators {
            let _ = write!(csv, ",{}", fmt_f(*d));
        }
        csv.push('\n');
    }
    if let Err(e) = ctx.write_out("trajectory.csv", &csv) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }
    println!(
        "ran {} periods from ({}); final continuation ({})",
        records.len(),
        fmt_vec(&config.v0),
        fmt_vec(&records.last().map(|r| r.v.clone()).unwrap_or_default())
    );
    EXIT_OK
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_policy(ctx: &Context, game: &ReducedGame) -> Result<Option<DeviationPolicy>, String> {
    let sim = &ctx.config.simulation;
    let Some(player) = sim.deviator else {
        return Ok(None);
    };
    if player >= game.player_count() {
        return Err(format!("deviator {} out of range", player + 1));
    }
    let spec = sim
        .deviation
        .clone()
        .unwrap_or_else(|| "greedy".to_string());
    let mode = if spec == "greedy" {
        DeviationMode::MyopicGreedy
    } else if spec == "comply" {
        DeviationMode::Comply
    } else {
        let (kind, act) = spec.split_once(':').ok_or_else(|| {
            format!("deviation {spec:?}: expected stationary:<a>, oneshot:<a>, greedy or comply")
        })?;
        let action = parse_action(game.space(player), act).map_err(|e| e.0)?;
        match kind {
            "stationary" => DeviationMode::Stationary(action),
            "oneshot" => DeviationMode::OneShot(action),
            other => return Err(format!("unknown deviation mode {other:?}")),
        }
    };
    Ok(Some(DeviationPolicy { player, mode }))
}

pub fn cmd_simulate(ctx: &Context) -> i32 {
    let game = match prepare_game(ctx) {
        Prepared::Ready(g) => g,
        Prepared::Failed(code) => return code,
    };
    let config = match engine_config(ctx, &game) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let sim = &ctx.config.simulation;
    let out = match simulate(
        &config,
        sim.episodes,
        sim.horizon,
        sim.seed,
        &ctx.policy,
        None,
    ) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    };
    let n = game.player_count();
    let mut csv = String::from("episode");
    for k in 1..=n {
        let _ = write!(csv, ",v_{k}");
    }
    csv.push('\n');
    for ep in &out.episodes {
        let _ = write!(csv, "{}", ep.episode);
        for x in &ep.payoff {
            let _ = write!(csv, ",{}", fmt_f(*x));
        }
        csv.push('\n');
    }
    if let Err(e) = ctx.write_out("simulation.csv", &csv) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }

    let mut summary = String::from("{\n");
    let _ = writeln!(summary, "  \"episodes\": {},", sim.episodes);
    let _ = writeln!(summary, "  \"horizon\": {},", sim.horizon);
    let _ = writeln!(summary, "  \"seed\": {},", sim.seed);
    let _ = writeln!(
        summary,
        "  \"target\": [{}],",
        fmt_vec(&config.v0).replace(' ', ", ")
    );
    let _ = writeln!(
        summary,
        "  \"mean\": [{}],",
        fmt_vec(&out.mean).replace(' ', ", ")
    );
    let _ = writeln!(
        summary,
        "  \"stderr\": [{}],",
        fmt_vec(&out.stderr).replace(' ', ", ")
    );
    let within = (0..n).all(|k| (out.mean[k] - config.v0[k]).abs() <= 3.0 * out.stderr[k]);
    let _ = writeln!(summary, "  \"within_3_stderr\": {within},");
    let _ = writeln!(
        summary,
        "  \"bad_signals\": {{ \"observed\": {}, \"expected\": {} }}",
        out.observed_bad,
        fmt_f(out.expected_bad)
    );

    let mut verdict_ok = true;
    if let Some(policy) = match parse_policy(ctx, &game) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INPUT;
        }
    } {
        let dev = match deviation_value(
            &config,
            policy,
            sim.episodes,
            sim.horizon,
            sim.seed ^ 0x5eed_dead_beef,
            &ctx.policy,
            None,
        ) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_INPUT;
            }
        };
        let target = config.v0[policy.player];
        let pooled = (dev.stderr.powi(2) + out.stderr[policy.player].powi(2)).sqrt();
        let gain = dev.mean - target;
        let profitable = gain > 3.0 * pooled;
        verdict_ok = !profitable;
        let _ = writeln!(summary, "  ,\"deviation\": {{");
        let _ = writeln!(summary, "    \"player\": {},", policy.player + 1);
        let _ = writeln!(summary, "    \"mean\": {},", fmt_f(dev.mean));
        let _ = writeln!(summary, "    \"stderr\": {},", fmt_f(dev.stderr));
        let _ = writeln!(summary, "    \"gain\": {},", fmt_f(gain));
        let _ = writeln!(summary, "    \"profitable\": {profitable}");
        let _ = writeln!(summary, "  }}");
    }
    summary.push_str("}\n");
    print!("{summary}");
    if let Err(e) = ctx.write_out("simulation_summary.txt", &summary) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }
    if within && verdict_ok {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

pub fn cmd_oracle(ctx: &Context) -> i32 {
    let game = match prepare_game(ctx) {
        Prepared::Ready(g) => g,
        Prepared::Failed(code) => return code,
    };
    let Some(delta) = ctx.config.analysis.delta else {
        eprintln!("oracle needs [analysis] delta");
        return EXIT_INPUT;
    };
    let (frontier, stats) = match analysis_pipeline(ctx, &game) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VIOLATION;
        }
    };
    let mu = ctx
        .config
        .analysis
        .mu
        .clone()
        .unwrap_or_else(|| mu_min(&frontier, &stats));
    let opts = OracleOptions::default();
    let cover = ctx.config.analysis.cover;
    let verdict = match is_self_generating(
        &game,
        &frontier,
        &stats,
        &mu,
        delta,
        cover,
        &ctx.policy,
        &opts,
    ) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_VIOLATION;
        }
    };

    // per-point certificate rows over the covering grid
    let n = game.player_count();
    let mut csv = String::new();
    for k in 1..=n {
        let _ = write!(csv, "v_{k},");
    }
    csv.push_str("feasible,margin,active,binding\n");
    for v in ppe_core::oracle::covering_grid(&frontier, &mu, cover) {
        match decomposable(&game, &frontier, &stats, &mu, delta, &v, &ctx.policy, &opts) {
            Ok(res) => {
                for x in &res.target {
                    let _ = write!(csv, "{},", fmt_f(*x));
                }
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    res.feasible,
                    fmt_f(res.margin),
                    res.active + 1,
                    res.binding.join("|")
                );
            }
            Err(e) => {
                eprintln!("{e}");
                return EXIT_VIOLATION;
            }
        }
    }
    if let Err(e) = ctx.write_out("oracle.csv", &csv) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }
    println!(
        "self-generating: {} ({} points, {} failures, worst margin {} at ({}))",
        verdict.self_generating,
        verdict.points_checked,
        verdict.failures,
        fmt_f(verdict.worst_margin),
        fmt_vec(&verdict.worst_point)
    );
    if verdict.self_generating {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One designer-frontier point: the condition-3 boundary in symmetric form
/// plus the condition-4 threshold. `None` when the game is structurally
/// infeasible at these parameters.
pub fn designer_point(
    game: &ReducedGame,
    policy: &GridPolicy,
    support: SupportPolicy,
) -> Option<(f64, f64)> {
    let report = validate_assumptions(game, policy, support);
    if !report.all_pass() {
        return None;
    }
    let frontier = report.frontier?;
    let stats = DeviationStats::compute(game, &frontier, policy).ok()?;
    if !cond1_check(&stats).pass {
        return None;
    }
    let floors = mu_min(&frontier, &stats);
    let n = game.player_count();
    let eta = (0..n)
        .map(|i| floors[i] / frontier.v_tilde[i][i])
        .fold(f64::NEG_INFINITY, f64::max);
    if !eta.is_finite() {
        return None;
    }
    let mu: Vec<f64> = (0..n).map(|i| eta * frontier.v_tilde[i][i]).collect();
    let delta = min_discount(&frontier, &stats, &mu).ok()?;
    Some((1.0 - eta, delta))
}

pub fn cmd_sweep(ctx: &Context) -> i32 {
    let Some(sweep) = ctx.config.sweep.clone() else {
        eprintln!("sweep needs a [sweep] section");
        return EXIT_INPUT;
    };
    let mut csv = String::from("parameter,value,fraction,delta_min\n");
    let grid = ctx.config.analysis.grid;
    for k in 0..sweep.steps {
        let value = sweep.from + (sweep.to - sweep.from) * k as f64 / (sweep.steps - 1) as f64;
        let row = match sweep.parameter.as_str() {
            "d0" | "kappa" => {
                if (sweep.parameter == "d0") != (ctx.config.game.builder == "mm1_sharing") {
                    eprintln!(
                        "sweep parameter {} does not belong to builder {}",
                        sweep.parameter, ctx.config.game.builder
                    );
                    return EXIT_INPUT;
                }
                let mut section = ctx.config.game.clone();
                let key = sweep.parameter.clone();
                section.params.insert(
                    key,
                    crate::config::Entry {
                        value: format!("{value}"),
                        line: 0,
                    },
                );
                match build_game(&section, grid) {
                    Ok(BuildOutcome::Ok(game)) => designer_point(&game, &ctx.policy, ctx.support),
                    Ok(BuildOutcome::Constraint(_)) => None,
                    Err(e) => {
                        eprintln!("{}", e.0);
                        return EXIT_INPUT;
                    }
                }
            }
            "delta" => {
                let game = match prepare_game(ctx) {
                    Prepared::Ready(g) => g,
                    Prepared::Failed(code) => return code,
                };
                let Ok((frontier, stats)) = analysis_pipeline(ctx, &game) else {
                    return EXIT_VIOLATION;
                };
                let mu = ctx
                    .config
                    .analysis
                    .mu
                    .clone()
                    .unwrap_or_else(|| mu_min(&frontier, &stats));
                match check_conditions(&game, &frontier, &stats, &mu, Some(value), &ctx.policy) {
                    Ok(report) if report.all_pass() => {
                        let n = game.player_count();
                        let eta = (0..n)
                            .map(|i| mu[i] / frontier.v_tilde[i][i])
                            .fold(f64::NEG_INFINITY, f64::max);
                        Some((1.0 - eta, report.delta_min.unwrap_or(f64::NAN)))
                    }
                    Ok(_) => None,
                    Err(_) => None,
                }
            }
            other => {
                eprintln!("unknown sweep parameter {other:?} (supported: d0, kappa, delta)");
                return EXIT_INPUT;
            }
        };
        match row {
            Some((fraction, delta_min)) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    sweep.parameter,
                    fmt_f(value),
                    fmt_f(fraction),
                    fmt_f(delta_min)
                );
            }
            None => {
                let _ = writeln!(csv, "{},{},,", sweep.parameter, fmt_f(value));
            }
        }
    }
    if let Err(e) = ctx.write_out("sweep.csv", &csv) {
        eprintln!("{e}");
        return EXIT_INPUT;
    }
    println!(
        "swept {} over [{}, {}] in {} steps",
        sweep.parameter, sweep.from, sweep.to, sweep.steps
    );
    EXIT_OK
}
