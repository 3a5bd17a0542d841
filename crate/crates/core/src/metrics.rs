//! Deviation gain rates and the four self-generation conditions.
//!
//! For active label `i` and deviator `j`, `alpha(i,j)` is the supremum over
//! currently profitable deviations of (current gain) / (increase in
//! bad-signal probability); `beta(i,j)` is the infimum of the same ratio
//! over deviations that lose current payoff while improving the signal.
//! Empty sets follow the usual conventions: `sup = -inf`, `inf = +inf`.
//!
//! The four conditions checked by [`check_conditions`]:
//! 1. `alpha(i,j) <= beta(i,j)` for all pairs;
//! 2. the active player's current loss dominates the signal-weighted
//!    deviation rate for every own action;
//! 3. the floor vector dominates `v_tilde[j][i] + alpha(j,i) * rho_good`;
//! 4. the discount factor reaches the threshold `delta_mu`.

use thiserror::Error;

use crate::game::{Action, EfficientFrontier, ReducedGame};
use crate::grid::{golden_max, GridPolicy};
use crate::linalg::dot;
use crate::{TOL_BINDING, TOL_PROFIT};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("profitable deviation with non-increasing bad-signal probability: active {active}, deviator {deviator}, action {action} (gain {gain:.3e}, drho {drho:.3e})")]
    LabelingViolation {
        active: usize,
        deviator: usize,
        action: String,
        gain: f64,
        drho: f64,
    },
    #[error("floored set is empty: weighted floor sum {weighted_sum:.6} exceeds 1")]
    InfeasibleMu { weighted_sum: f64 },
    #[error("floored set is a single point (weighted floor sum {weighted_sum:.6}); the threshold analysis needs an interior")]
    SingletonSet { weighted_sum: f64 },
    #[error("discount threshold denominator is {denom:.3e}, not positive")]
    DegenerateDenominator { denom: f64 },
}

// ---------------------------------------------------------------------------
// alpha / beta
// ---------------------------------------------------------------------------

/// Pairwise deviation rates plus the bad-signal probabilities at the
/// preferred profiles (used by the threshold formula and the engine).
#[derive(Debug, Clone)]
pub struct DeviationStats {
    /// `alpha[i][j]`, diagonal unused (`-inf`).
    pub alpha: Vec<Vec<f64>>,
    /// `beta[i][j]`, diagonal unused (`+inf`).
    pub beta: Vec<Vec<f64>>,
    pub alpha_witness: Vec<Vec<Option<Action>>>,
    pub beta_witness: Vec<Vec<Option<Action>>>,
    /// `rho_bad(i, a_tilde[i])` per player.
    pub rho_bad_pref: Vec<f64>,
}

impl DeviationStats {
    pub fn compute(
        game: &ReducedGame,
        frontier: &EfficientFrontier,
        policy: &GridPolicy,
    ) -> Result<Self, MetricsError> {
        let n = game.player_count();
        let mut a = vec![vec![f64::NEG_INFINITY; n]; n];
        let mut b = vec![vec![f64::INFINITY; n]; n];
        let mut aw = vec![vec![None; n]; n];
        let mut bw = vec![vec![None; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (av, awit) = alpha(game, frontier, i, j, policy)?;
                let (bv, bwit) = beta(game, frontier, i, j, policy);
                a[i][j] = av;
                b[i][j] = bv;
                aw[i][j] = awit;
                bw[i][j] = bwit;
            }
        }
        let rho_bad_pref = (0..n)
            .map(|i| game.rho_bad(i, &frontier.a_tilde[i]))
            .collect();
        Ok(DeviationStats {
            alpha: a,
            beta: b,
            alpha_witness: aw,
            beta_witness: bw,
            rho_bad_pref,
        })
    }

    /// `alpha` clamped to 0 where no profitable deviation exists; the
    /// vacuous incentive terms drop out of the threshold and the engine.
    pub fn alpha_or_zero(&self, i: usize, j: usize) -> f64 {
        let a = self.alpha[i][j];
        if a.is_finite() {
            a
        } else {
            0.0
        }
    }
}

/// Largest gain-to-detection ratio over player j's currently profitable
/// deviations against `a_tilde[i]`; `-inf` when none exist.
pub fn alpha(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    i: usize,
    j: usize,
    policy: &GridPolicy,
) -> Result<(f64, Option<Action>), MetricsError> {
    let base_u = frontier.v_tilde[i][j];
    let base_rho = game.rho_bad(i, &frontier.a_tilde[i]);
    let mut profile = frontier.a_tilde[i].clone();
    let grid = policy.deviation_grid(game.space(j));

    let mut best = f64::NEG_INFINITY;
    let mut best_k = None;
    for (k, &a) in grid.iter().enumerate() {
        profile[j] = a;
        let gain = game.utility(&profile)[j] - base_u;
        if gain <= TOL_PROFIT {
            continue;
        }
        let drho = game.rho_bad(i, &profile) - base_rho;
        if drho <= TOL_PROFIT {
            return Err(MetricsError::LabelingViolation {
                active: i,
                deviator: j,
                action: game.space(j).label(a),
                gain,
                drho,
            });
        }
        let ratio = gain / drho;
        if ratio > best {
            best = ratio;
            best_k = Some(k);
        }
    }
    let Some(k) = best_k else {
        return Ok((f64::NEG_INFINITY, None));
    };
    let mut witness = grid[k];

    if game.space(j).is_interval() {
        let lo = grid[k.saturating_sub(1)].level();
        let hi = grid[(k + 1).min(grid.len() - 1)].level();
        let mut violation: Option<(f64, f64, f64)> = None;
        let mut f = |x: f64| {
            profile[j] = Action::Level(x);
            let gain = game.utility(&profile)[j] - base_u;
            if gain <= TOL_PROFIT {
                return f64::NEG_INFINITY;
            }
            let drho = game.rho_bad(i, &profile) - base_rho;
            if drho <= TOL_PROFIT {
                violation = Some((x, gain, drho));
                return f64::NEG_INFINITY;
            }
            gain / drho
        };
        let (x, fx) = golden_max(&mut f, lo, hi, policy.refine_iters);
        if let Some((x, gain, drho)) = violation {
            return Err(MetricsError::LabelingViolation {
                active: i,
                deviator: j,
                action: format!("{x}"),
                gain,
                drho,
            });
        }
        if fx > best {
            best = fx;
            witness = Action::Level(x);
        }
    }
    Ok((best, Some(witness)))
}

/// Smallest gain-to-detection ratio over deviations that lose current
/// payoff while strictly lowering the bad-signal probability; `+inf` when
/// none exist.
pub fn beta(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    i: usize,
    j: usize,
    policy: &GridPolicy,
) -> (f64, Option<Action>) {
    let base_u = frontier.v_tilde[i][j];
    let base_rho = game.rho_bad(i, &frontier.a_tilde[i]);
    let mut profile = frontier.a_tilde[i].clone();
    let grid = policy.deviation_grid(game.space(j));

    let ratio_at = |profile: &[Action]| -> Option<f64> {
        let gain = game.utility(profile)[j] - base_u;
        if gain >= -TOL_PROFIT {
            return None;
        }
        let drho = game.rho_bad(i, profile) - base_rho;
        if drho >= -TOL_PROFIT {
            return None;
        }
        Some(gain / drho)
    };

    let mut best = f64::INFINITY;
    let mut best_k = None;
    for (k, &a) in grid.iter().enumerate() {
        profile[j] = a;
        if let Some(r) = ratio_at(&profile) {
            if r < best {
                best = r;
                best_k = Some(k);
            }
        }
    }
    let Some(k) = best_k else {
        return (f64::INFINITY, None);
    };
    let mut witness = grid[k];

    if game.space(j).is_interval() {
        let lo = grid[k.saturating_sub(1)].level();
        let hi = grid[(k + 1).min(grid.len() - 1)].level();
        let mut f = |x: f64| {
            profile[j] = Action::Level(x);
            match ratio_at(&profile) {
                Some(r) => -r,
                None => f64::NEG_INFINITY,
            }
        };
        let (x, fx) = golden_max(&mut f, lo, hi, policy.refine_iters);
        if -fx < best {
            best = -fx;
            witness = Action::Level(x);
        }
    }
    (best, Some(witness))
}

/// True iff no player can gain by a unilateral deviation from
/// `a_tilde[i]`; the preferred payoff is then sustainable by stationary
/// play.
pub fn check_prop1(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    i: usize,
    policy: &GridPolicy,
) -> bool {
    let n = game.player_count();
    let mut profile = frontier.a_tilde[i].clone();
    for j in 0..n {
        if j == i {
            continue;
        }
        let base_u = frontier.v_tilde[i][j];
        for a in policy.deviation_grid(game.space(j)) {
            profile[j] = a;
            if game.utility(&profile)[j] - base_u > TOL_PROFIT {
                return false;
            }
        }
        profile[j] = frontier.a_tilde[i][j];
    }
    true
}

// ---------------------------------------------------------------------------
// Floors, regularity, discount threshold
// ---------------------------------------------------------------------------

/// Condition-3 right-hand side: the smallest admissible floor per player.
/// Pairs without profitable deviations contribute no constraint.
pub fn mu_min(frontier: &EfficientFrontier, stats: &DeviationStats) -> Vec<f64> {
    let n = frontier.player_count();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let a = stats.alpha[j][i];
                    if a.is_finite() {
                        frontier.v_tilde[j][i] + a * (1.0 - stats.rho_bad_pref[j])
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Corners of the floored slice of the efficient set, and whether each lies
/// inside the hull (regularity).
pub fn regularity(
    frontier: &EfficientFrontier,
    mu: &[f64],
) -> Result<(bool, Vec<Vec<f64>>), MetricsError> {
    let weighted: f64 = dot(&frontier.lambda, mu);
    if weighted > 1.0 + 1e-12 {
        return Err(MetricsError::InfeasibleMu {
            weighted_sum: weighted,
        });
    }
    let n = frontier.player_count();
    let vhat: Vec<Vec<f64>> = (0..n).map(|i| frontier.corner(i, mu)).collect();
    let regular = vhat.iter().all(|v| frontier.in_hull(v, 1e-9));
    Ok((regular, vhat))
}

/// Discount threshold
/// `delta_mu = (1 + z)^-1`,
/// `z = (1 - sum_i lambda_i mu_i) / (sum_i [lambda_i vtilde_i^i + sum_{j!=i} lambda_j alpha(i,j) rho_bad_i] - 1)`.
pub fn min_discount(
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
) -> Result<f64, MetricsError> {
    let n = frontier.player_count();
    let weighted: f64 = dot(&frontier.lambda, mu);
    if weighted > 1.0 + 1e-12 {
        return Err(MetricsError::InfeasibleMu {
            weighted_sum: weighted,
        });
    }
    if weighted >= 1.0 - 1e-12 {
        return Err(MetricsError::SingletonSet {
            weighted_sum: weighted,
        });
    }
    let mut denom = -1.0;
    for i in 0..n {
        denom += frontier.lambda[i] * frontier.v_tilde[i][i];
        for j in 0..n {
            if j != i {
                denom += frontier.lambda[j] * stats.alpha_or_zero(i, j) * stats.rho_bad_pref[i];
            }
        }
    }
    if denom <= 0.0 {
        return Err(MetricsError::DegenerateDenominator { denom });
    }
    let z = (1.0 - weighted) / denom;
    Ok(1.0 / (1.0 + z))
}

// ---------------------------------------------------------------------------
// Condition report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub pass: bool,
    pub margin: f64,
    pub witness: String,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub cond1: ConditionCheck,
    pub cond2: ConditionCheck,
    pub cond3: ConditionCheck,
    pub cond4: ConditionCheck,
    /// Floors actually evaluated.
    pub mu: Vec<f64>,
    /// Condition-3 right-hand side.
    pub mu_min: Vec<f64>,
    pub delta: Option<f64>,
    pub delta_min: Option<f64>,
    pub regular: bool,
    pub vhat: Vec<Vec<f64>>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.cond1.pass && self.cond2.pass && self.cond3.pass && self.cond4.pass
    }
}

/// Condition 1: `alpha <= beta` for every ordered pair.
pub fn cond1_check(stats: &DeviationStats) -> ConditionCheck {
    let n = stats.alpha.len();
    let mut c1_margin = f64::INFINITY;
    let mut c1_witness = String::from("all pairs slack");
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let gap = match (stats.alpha[i][j], stats.beta[i][j]) {
                (a, b) if a == f64::NEG_INFINITY || b == f64::INFINITY => f64::INFINITY,
                (a, b) => b - a,
            };
            if gap < c1_margin {
                c1_margin = gap;
                c1_witness = format!("active {} deviator {}", i + 1, j + 1);
            }
        }
    }
    ConditionCheck {
        pass: c1_margin >= -1e-12,
        margin: c1_margin,
        witness: c1_witness,
    }
}

/// Condition 2: for every own action of the active player, the current
/// loss covers the alpha-weighted signal shift.
pub fn cond2_check(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    policy: &GridPolicy,
) -> ConditionCheck {
    let n = game.player_count();
    let mut c2_margin = f64::INFINITY;
    let mut c2_witness = String::from("no active deviation binds");
    for i in 0..n {
        let rate: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| frontier.lambda[j] * stats.alpha_or_zero(i, j))
            .sum::<f64>()
            / frontier.lambda[i];
        let base_rho = stats.rho_bad_pref[i];
        let vii = frontier.v_tilde[i][i];
        let mut profile = frontier.a_tilde[i].clone();
        let pref = frontier.a_tilde[i][i];
        let margin_at = |profile: &[Action], game: &ReducedGame| -> f64 {
            let lhs = vii - game.utility(profile)[i];
            let rhs = rate * (game.rho_bad(i, profile) - base_rho);
            lhs - rhs
        };
        let grid = policy.deviation_grid(game.space(i));
        let mut best = f64::INFINITY;
        let mut best_k = None;
        for (k, &a) in grid.iter().enumerate() {
            if a == pref {
                continue;
            }
            profile[i] = a;
            let m = margin_at(&profile, game);
            if m < best {
                best = m;
                best_k = Some(k);
            }
        }
        if let Some(k) = best_k {
            let mut wit = grid[k];
            if game.space(i).is_interval() {
                let lo = grid[k.saturating_sub(1)].level();
                let hi = grid[(k + 1).min(grid.len() - 1)].level();
                let mut f = |x: f64| {
                    if x == pref.level() {
                        return f64::NEG_INFINITY;
                    }
                    profile[i] = Action::Level(x);
                    -margin_at(&profile, game)
                };
                let (x, fx) = golden_max(&mut f, lo, hi, policy.refine_iters);
                if -fx < best {
                    best = -fx;
                    wit = Action::Level(x);
                }
            }
            if best < c2_margin {
                c2_margin = best;
                c2_witness = format!("active {} action {}", i + 1, game.space(i).label(wit));
            }
        }
    }
    ConditionCheck {
        pass: c2_margin >= -TOL_BINDING,
        margin: c2_margin,
        witness: c2_witness,
    }
}

/// Evaluate the four conditions at the floor vector `mu` (and discount
/// factor, when given). Fails with `InfeasibleMu` when the floored set is
/// empty.
pub fn check_conditions(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    delta: Option<f64>,
    policy: &GridPolicy,
) -> Result<ConditionReport, MetricsError> {
    let n = game.player_count();
    let weighted: f64 = dot(&frontier.lambda, mu);
    if weighted > 1.0 + 1e-12 {
        return Err(MetricsError::InfeasibleMu {
            weighted_sum: weighted,
        });
    }
    let cond1 = cond1_check(stats);
    let cond2 = cond2_check(game, frontier, stats, policy);

    // Condition 3: floors dominate the forced bounds.
    let floors = mu_min(frontier, stats);
    let mut c3_margin = f64::INFINITY;
    let mut c3_witness = String::new();
    for i in 0..n {
        let m = if floors[i] == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            mu[i] - floors[i]
        };
        if m < c3_margin {
            c3_margin = m;
            c3_witness = format!("player {} floor {} vs bound {}", i + 1, mu[i], floors[i]);
        }
    }
    let cond3 = ConditionCheck {
        pass: c3_margin >= -TOL_BINDING,
        margin: c3_margin,
        witness: c3_witness,
    };

    let (regular, vhat) = regularity(frontier, mu)?;

    // Condition 4: discount threshold.
    let delta_min = match min_discount(frontier, stats, mu) {
        Ok(d) => Some(d),
        Err(MetricsError::SingletonSet { .. }) => None,
        Err(e) => return Err(e),
    };
    let cond4 = match (delta, delta_min) {
        (Some(d), Some(dm)) => ConditionCheck {
            pass: d >= dm - 1e-12 && d < 1.0,
            margin: d - dm,
            witness: format!("delta {d} vs threshold {dm}"),
        },
        (None, Some(dm)) => ConditionCheck {
            pass: true,
            margin: f64::INFINITY,
            witness: format!("no delta supplied; threshold {dm}"),
        },
        (_, None) => ConditionCheck {
            pass: false,
            margin: f64::NEG_INFINITY,
            witness: "floored set is a single point".to_string(),
        },
    };

    Ok(ConditionReport {
        cond1,
        cond2,
        cond3,
        cond4,
        mu: mu.to_vec(),
        mu_min: floors,
        delta,
        delta_min,
        regular,
        vhat,
    })
}
