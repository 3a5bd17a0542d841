//! Online equilibrium engine.
//!
//! Each period the engine scores every player by the indicator
//! `d_j = lambda_j (v_j - mu_j) / (lambda_j (vtilde_j^j - v_j) + sum_{k!=j} lambda_k alpha(j,k) rho_bad_j)`,
//! hands the round to the highest scorer (ties to the larger index),
//! recommends that player's preferred profile, and maps the realized public
//! signal to next-period continuation payoffs:
//!
//! - good signal: the active player's payoff is marked down, inactive
//!   players are rewarded at rate `alpha(i,j) * rho_bad_i`;
//! - bad signal: mirrored with `rho_good_i` and flipped signs.
//!
//! Both branches keep the continuation vector on the weighted hyperplane
//! and, when the four conditions hold, above the floors.

use thiserror::Error;

use crate::game::{Action, EfficientFrontier, ReducedGame};
use crate::grid::GridPolicy;
use crate::linalg::dot;
use crate::metrics::{check_conditions, DeviationStats, MetricsError};
use crate::rng;
use crate::{TOL_FLOOR, TOL_HYPERPLANE};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("conditions fail at the supplied floors/discount: {0}")]
    ConditionsFail(String),
    #[error("target payoff violates {0}")]
    BadTarget(String),
    #[error("indicator denominator for player {player} is {denom:.3e}, not positive")]
    NonpositiveDenominator { player: usize, denom: f64 },
    #[error(
        "continuation payoff for player {player} fell {breach:.3e} below its floor at period {t}"
    )]
    FloorBreach {
        player: usize,
        breach: f64,
        t: usize,
    },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Good,
    Bad,
}

/// Where the public signals come from during a run: a recorded sequence, or
/// a seeded sampler drawing from the signal distribution of the profile
/// actually played.
pub trait SignalSource {
    fn draw(&mut self, t: usize, rho_bad: f64) -> Signal;
}

pub struct Recorded<'a>(pub &'a [Signal]);

impl SignalSource for Recorded<'_> {
    fn draw(&mut self, t: usize, _rho_bad: f64) -> Signal {
        self.0[t % self.0.len()]
    }
}

/// Counter-based sampler: the draw at `(seed, episode, t)` never depends on
/// evaluation order.
pub struct SeededSampler {
    pub seed: u64,
    pub episode: u64,
}

impl SignalSource for SeededSampler {
    fn draw(&mut self, t: usize, rho_bad: f64) -> Signal {
        if rng::unit(self.seed, self.episode, t as u64) < rho_bad {
            Signal::Bad
        } else {
            Signal::Good
        }
    }
}

// ---------------------------------------------------------------------------
// Config and state
// ---------------------------------------------------------------------------

/// Validated bundle of everything a run needs. Construction re-checks the
/// four conditions at `(mu, delta)` and the target invariants.
#[derive(Debug, Clone)]
pub struct EquilibriumConfig {
    pub game: ReducedGame,
    pub frontier: EfficientFrontier,
    pub stats: DeviationStats,
    pub mu: Vec<f64>,
    pub delta: f64,
    pub v0: Vec<f64>,
}

impl EquilibriumConfig {
    /// `mu` defaults to the condition-3 boundary, `v0` to the mean of the
    /// floored-set corners.
    pub fn new(
        game: ReducedGame,
        frontier: EfficientFrontier,
        stats: DeviationStats,
        mu: Option<Vec<f64>>,
        delta: f64,
        v0: Option<Vec<f64>>,
        policy: &GridPolicy,
    ) -> Result<Self, EngineError> {
        let n = game.player_count();
        let mu = mu.unwrap_or_else(|| crate::metrics::mu_min(&frontier, &stats));
        let report = check_conditions(&game, &frontier, &stats, &mu, Some(delta), policy)?;
        if !report.all_pass() {
            let which = [
                (&report.cond1, "1"),
                (&report.cond2, "2"),
                (&report.cond3, "3"),
                (&report.cond4, "4"),
            ]
            .iter()
            .filter(|(c, _)| !c.pass)
            .map(|(c, k)| format!("condition {k} ({})", c.witness))
            .collect::<Vec<_>>()
            .join(", ");
            return Err(EngineError::ConditionsFail(which));
        }
        let v0 = v0.unwrap_or_else(|| {
            let mut v = vec![0.0; n];
            for corner in &report.vhat {
                for (k, x) in corner.iter().enumerate() {
                    v[k] += x / n as f64;
                }
            }
            v
        });
        if v0.len() != n {
            return Err(EngineError::BadTarget(format!(
                "dimension: expected {n}, got {}",
                v0.len()
            )));
        }
        let w = dot(&frontier.lambda, &v0);
        if (w - 1.0).abs() > TOL_HYPERPLANE {
            return Err(EngineError::BadTarget(format!(
                "the hyperplane identity: weighted sum {w}"
            )));
        }
        if let Some(k) = (0..n).find(|&k| v0[k] < mu[k] - TOL_FLOOR) {
            return Err(EngineError::BadTarget(format!(
                "the floor for player {}: {} < {}",
                k + 1,
                v0[k],
                mu[k]
            )));
        }
        Ok(EquilibriumConfig {
            game,
            frontier,
            stats,
            mu,
            delta,
            v0,
        })
    }

    pub fn initial_state(&self) -> ContinuationState {
        ContinuationState {
            t: 0,
            v: self.v0.clone(),
            last_active: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationState {
    pub t: usize,
    pub v: Vec<f64>,
    pub last_active: Option<usize>,
}

// ---------------------------------------------------------------------------
// Indicator, selection, update
// ---------------------------------------------------------------------------

/// Priority score of player `j` at continuation vector `v`.
pub fn indicator(
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    v: &[f64],
    j: usize,
) -> Result<f64, EngineError> {
    let n = frontier.player_count();
    let lam = &frontier.lambda;
    let mut denom = lam[j] * (frontier.v_tilde[j][j] - v[j]);
    for k in 0..n {
        if k != j {
            denom += lam[k] * stats.alpha_or_zero(j, k) * stats.rho_bad_pref[j];
        }
    }
    if denom <= 0.0 {
        return Err(EngineError::NonpositiveDenominator { player: j, denom });
    }
    Ok(lam[j] * (v[j] - mu[j]) / denom)
}

pub fn indicators(
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    v: &[f64],
) -> Result<Vec<f64>, EngineError> {
    (0..frontier.player_count())
        .map(|j| indicator(frontier, stats, mu, v, j))
        .collect()
}

/// Highest indicator wins; exact ties go to the larger index.
pub fn select_active(
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    v: &[f64],
) -> Result<usize, EngineError> {
    let d = indicators(frontier, stats, mu, v)?;
    let mut best = 0usize;
    for j in 1..d.len() {
        if d[j] >= d[best] {
            best = j;
        }
    }
    Ok(best)
}

/// Advance one period: given the active player chosen at `state` and the
/// realized signal, produce the next continuation vector. The active
/// player's coordinate is re-solved from the hyperplane identity so the
/// invariant cannot drift over long runs.
pub fn step(
    config: &EquilibriumConfig,
    state: &ContinuationState,
    signal: Signal,
) -> Result<(ContinuationState, usize, Vec<Action>), EngineError> {
    let fr = &config.frontier;
    let stats = &config.stats;
    let n = fr.player_count();
    let i = select_active(fr, stats, &config.mu, &state.v)?;
    let recommended = fr.a_tilde[i].clone();

    let delta = config.delta;
    let growth = 1.0 / delta;
    let kick = growth - 1.0;
    let rho_b = stats.rho_bad_pref[i];
    let rho_g = 1.0 - rho_b;

    let mut next = vec![0.0; n];
    let cross: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| fr.lambda[j] * stats.alpha_or_zero(i, j))
        .sum();
    for j in 0..n {
        let base = fr.v_tilde[i][j];
        let pulled = base + (state.v[j] - base) * growth;
        next[j] = match (j == i, signal) {
            (true, Signal::Good) => pulled - kick * cross * rho_b / fr.lambda[i],
            (true, Signal::Bad) => pulled + kick * cross * rho_g / fr.lambda[i],
            (false, Signal::Good) => pulled + kick * stats.alpha_or_zero(i, j) * rho_b,
            (false, Signal::Bad) => pulled - kick * stats.alpha_or_zero(i, j) * rho_g,
        };
    }
    // active coordinate from the hyperplane identity
    let held: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| fr.lambda[j] * next[j])
        .sum();
    next[i] = (1.0 - held) / fr.lambda[i];

    for (k, (&x, &floor)) in next.iter().zip(&config.mu).enumerate() {
        if x < floor - TOL_FLOOR {
            return Err(EngineError::FloorBreach {
                player: k,
                breach: floor - x,
                t: state.t,
            });
        }
    }
    Ok((
        ContinuationState {
            t: state.t + 1,
            v: next,
            last_active: Some(i),
        },
        i,
        recommended,
    ))
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub active: usize,
    pub signal: Signal,
    /// Continuation vector promised at the start of the period.
    pub v: Vec<f64>,
    pub indicators: Vec<f64>,
}

/// Run `t_max` periods from the configured target. Deterministic given the
/// signal sequence; the full state sequence is recorded for audit.
pub fn run(
    config: &EquilibriumConfig,
    source: &mut dyn SignalSource,
    t_max: usize,
) -> Result<Vec<StepRecord>, EngineError> {
    if t_max == 0 {
        return Err(EngineError::EmptyHorizon);
    }
    let mut state = config.initial_state();
    let mut records = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let d = indicators(&config.frontier, &config.stats, &config.mu, &state.v)?;
        let i_preview = select_active(&config.frontier, &config.stats, &config.mu, &state.v)?;
        let rho_b = config.stats.rho_bad_pref[i_preview];
        let signal = source.draw(t, rho_b);
        let (next, active, _) = step(config, &state, signal)?;
        records.push(StepRecord {
            t,
            active,
            signal,
            v: state.v.clone(),
            indicators: d,
        });
        state = next;
    }
    Ok(records)
}
