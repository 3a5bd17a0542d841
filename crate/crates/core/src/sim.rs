//! Seeded Monte Carlo play and single-player deviation testing.
//!
//! Episodes draw signals from a counter-based generator keyed by
//! `(seed, episode, period)`, so estimates are bit-identical regardless of
//! execution order. Payoffs are truncated discounted averages
//! `(1-delta) sum_t delta^t u_t`; the horizon must make the truncation tail
//! negligible against the configured threshold.

use thiserror::Error;

use crate::engine::{select_active, step, EngineError, EquilibriumConfig, Signal};
use crate::game::{for_each_profile, Action};
use crate::grid::GridPolicy;
use crate::rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "horizon too short: discounted tail {tail:.3e} exceeds the truncation threshold {eps:.3e}"
    )]
    TruncationTooCoarse { tail: f64, eps: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub episode: u64,
    pub seed: u64,
    pub payoff: Vec<f64>,
    /// Order-sensitive hash of the (active, signal) trace.
    pub digest: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub episodes: Vec<EpisodeResult>,
    pub observed_bad: u64,
    pub expected_bad: f64,
    pub periods: u64,
    pub eps_trunc: f64,
    pub payoff_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviationMode {
    /// Follow the recommendation (null policy; baseline check).
    Comply,
    /// Play this action every period.
    Stationary(Action),
    /// Play this action in period 0, then comply.
    OneShot(Action),
    /// Best-respond to the current recommendation period by period.
    MyopicGreedy,
}

#[derive(Debug, Clone, Copy)]
pub struct DeviationPolicy {
    pub player: usize,
    pub mode: DeviationMode,
}

#[derive(Debug, Clone)]
pub struct DeviationOutcome {
    pub player: usize,
    pub mean: f64,
    pub stderr: f64,
    pub episodes: u64,
}

/// Spread of stage payoffs over the evaluation grid; scales the truncation
/// threshold.
pub fn payoff_range(config: &EquilibriumConfig, policy: &GridPolicy) -> f64 {
    let grids = policy.joint_grids(config.game.spaces());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for_each_profile(&grids, |_, profile| {
        for u in config.game.utility(profile) {
            lo = lo.min(u);
            hi = hi.max(u);
        }
    });
    (hi - lo).max(f64::MIN_POSITIVE)
}

fn check_truncation(
    config: &EquilibriumConfig,
    horizon: usize,
    range: f64,
    eps_trunc: Option<f64>,
) -> Result<f64, SimError> {
    let eps = eps_trunc.unwrap_or(1e-9 * range);
    let tail = config.delta.powi(horizon as i32) * range;
    if tail > eps {
        return Err(SimError::TruncationTooCoarse { tail, eps });
    }
    Ok(eps)
}

/// Estimate the payoff vector of compliant play over `episodes` seeded
/// episodes of `horizon` periods.
pub fn simulate(
    config: &EquilibriumConfig,
    episodes: u64,
    horizon: usize,
    seed: u64,
    grid: &GridPolicy,
    eps_trunc: Option<f64>,
) -> Result<SimOutcome, SimError> {
    let range = payoff_range(config, grid);
    let eps = check_truncation(config, horizon, range, eps_trunc)?;
    let n = config.game.player_count();

    let mut results = Vec::with_capacity(episodes as usize);
    let mut observed_bad = 0u64;
    let mut expected_bad = 0.0f64;
    for e in 0..episodes {
        let mut state = config.initial_state();
        let mut payoff = vec![0.0; n];
        let mut digest = 0xcafe_f00d_u64;
        let mut weight = 1.0 - config.delta;
        for t in 0..horizon {
            let i = select_active(&config.frontier, &config.stats, &config.mu, &state.v)?;
            let rho_b = config.stats.rho_bad_pref[i];
            let signal = if rng::unit(seed, e, t as u64) < rho_b {
                Signal::Bad
            } else {
                Signal::Good
            };
            expected_bad += rho_b;
            if signal == Signal::Bad {
                observed_bad += 1;
            }
            for (k, u) in config.frontier.v_tilde[i].iter().enumerate() {
                payoff[k] += weight * u;
            }
            weight *= config.delta;
            digest = rng::digest_step(digest, (i as u64) << 1 | (signal == Signal::Bad) as u64);
            let (next, _, _) = step(config, &state, signal)?;
            state = next;
        }
        results.push(EpisodeResult {
            episode: e,
            seed,
            payoff,
            digest,
        });
    }

    let (mean, stderr) = mean_and_stderr(&results, n);
    Ok(SimOutcome {
        mean,
        stderr,
        episodes: results,
        observed_bad,
        expected_bad,
        periods: episodes * horizon as u64,
        eps_trunc: eps,
        payoff_range: range,
    })
}

fn mean_and_stderr(results: &[EpisodeResult], n: usize) -> (Vec<f64>, Vec<f64>) {
    let e = results.len().max(1) as f64;
    let mut mean = vec![0.0; n];
    for r in results {
        for k in 0..n {
            mean[k] += r.payoff[k];
        }
    }
    for m in &mut mean {
        *m /= e;
    }
    let mut var = vec![0.0; n];
    for r in results {
        for k in 0..n {
            let d = r.payoff[k] - mean[k];
            var[k] += d * d;
        }
    }
    let stderr = var
        .iter()
        .map(|s| (s / (e * (e - 1.0).max(1.0))).sqrt())
        .collect();
    (mean, stderr)
}

/// Deviator's estimated payoff when everyone else follows the engine and
/// the engine updates on the public signal of whatever was actually played.
pub fn deviation_value(
    config: &EquilibriumConfig,
    policy: DeviationPolicy,
    episodes: u64,
    horizon: usize,
    seed: u64,
    grid: &GridPolicy,
    eps_trunc: Option<f64>,
) -> Result<DeviationOutcome, SimError> {
    let range = payoff_range(config, grid);
    check_truncation(config, horizon, range, eps_trunc)?;
    let j = policy.player;
    // coarse response grid keeps the greedy adversary tractable
    let greedy_grid = config.game.space(j).grid_capped(21);

    let mut results = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let mut state = config.initial_state();
        let mut value = 0.0;
        let mut weight = 1.0 - config.delta;
        for t in 0..horizon {
            let i = select_active(&config.frontier, &config.stats, &config.mu, &state.v)?;
            let mut played = config.frontier.a_tilde[i].clone();
            played[j] = match policy.mode {
                DeviationMode::Comply => played[j],
                DeviationMode::Stationary(a) => a,
                DeviationMode::OneShot(a) if t == 0 => a,
                DeviationMode::OneShot(_) => played[j],
                DeviationMode::MyopicGreedy => {
                    let mut probe = played.clone();
                    let mut best = (played[j], f64::NEG_INFINITY);
                    for &a in &greedy_grid {
                        probe[j] = a;
                        let u = config.game.utility(&probe)[j];
                        if u > best.1 {
                            best = (a, u);
                        }
                    }
                    best.0
                }
            };
            let rho_b = config.game.rho_bad(i, &played);
            let signal = if rng::unit(seed, e, t as u64) < rho_b {
                Signal::Bad
            } else {
                Signal::Good
            };
            value += weight * config.game.utility(&played)[j];
            weight *= config.delta;
            let (next, _, _) = step(config, &state, signal)?;
            state = next;
        }
        results.push(EpisodeResult {
            episode: e,
            seed,
            payoff: vec![value],
            digest: 0,
        });
    }
    let (mean, stderr) = mean_and_stderr(&results, 1);
    Ok(DeviationOutcome {
        player: j,
        mean: mean[0],
        stderr: stderr[0],
        episodes,
    })
}
