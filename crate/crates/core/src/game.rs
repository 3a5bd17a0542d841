//! Reduced-form stage game, preferred profiles, hyperplane weights and the
//! four structural assumption checks.
//!
//! A game is `n >= 2` players, one action space per player, a joint utility
//! map `U`, and for each active-player label `i` the probability
//! `rho_bad(i, a)` that the signal labelled "bad for i" is announced after
//! the joint action `a`. Probabilities are stored per label because which
//! physical signal counts as bad may differ by active player.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{golden_max, GridPolicy};
use crate::linalg;
use crate::{TOL_PROFIT, TOL_STRICT, TOL_UNIQUENESS};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("action space has no actions")]
    EmptyActionSpace,
    #[error("interval bounds degenerate: [{lower}, {upper}]")]
    BadInterval { lower: f64, upper: f64 },
    #[error("grid resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("a reduced game needs at least two players, got {0}")]
    TooFewPlayers(usize),
    #[error("player {player}: two joint actions tie for the optimum within {gap:.3e}")]
    NonUniqueArgmax { player: usize, gap: f64 },
    #[error("preferred payoff vectors are linearly dependent (det = {det:.3e})")]
    SingularFrontier { det: f64 },
    #[error("hyperplane weight for player {player} is not positive ({weight:.6})")]
    NonPositiveWeight { player: usize, weight: f64 },
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

/// One player's action: an index into a finite label set, or a level in an
/// interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Index(usize),
    Level(f64),
}

impl Action {
    pub fn level(self) -> f64 {
        match self {
            Action::Level(x) => x,
            Action::Index(k) => k as f64,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Action::Index(k) => k,
            Action::Level(_) => usize::MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ActionSpace {
    Finite {
        labels: Vec<String>,
    },
    Interval {
        lower: f64,
        upper: f64,
        resolution: usize,
    },
}

impl ActionSpace {
    pub fn finite(labels: Vec<String>) -> Result<Self, GameError> {
        if labels.is_empty() {
            return Err(GameError::EmptyActionSpace);
        }
        Ok(ActionSpace::Finite { labels })
    }

    pub fn interval(lower: f64, upper: f64, resolution: usize) -> Result<Self, GameError> {
        // NaN bounds fail this comparison too
        if lower.partial_cmp(&upper) != Some(std::cmp::Ordering::Less) {
            return Err(GameError::BadInterval { lower, upper });
        }
        if resolution < 2 {
            return Err(GameError::BadResolution(resolution));
        }
        Ok(ActionSpace::Interval {
            lower,
            upper,
            resolution,
        })
    }

    pub fn grid_len(&self) -> usize {
        match self {
            ActionSpace::Finite { labels } => labels.len(),
            ActionSpace::Interval { resolution, .. } => *resolution,
        }
    }

    /// Uniform evaluation grid at the space's own resolution, endpoints
    /// included for intervals.
    pub fn grid(&self) -> Vec<Action> {
        self.grid_capped(usize::MAX)
    }

    /// Grid with interval resolution capped at `cap` (finite spaces always
    /// list every action).
    pub fn grid_capped(&self, cap: usize) -> Vec<Action> {
        match self {
            ActionSpace::Finite { labels } => (0..labels.len()).map(Action::Index).collect(),
            ActionSpace::Interval {
                lower,
                upper,
                resolution,
            } => {
                let m = (*resolution).min(cap).max(2);
                (0..m)
                    .map(|k| {
                        let t = k as f64 / (m - 1) as f64;
                        Action::Level(lower + t * (upper - lower))
                    })
                    .collect()
            }
        }
    }

    pub fn label(&self, a: Action) -> String {
        match (self, a) {
            (ActionSpace::Finite { labels }, Action::Index(k)) => {
                labels.get(k).cloned().unwrap_or_else(|| format!("#{k}"))
            }
            (_, Action::Level(x)) => format!("{x}"),
            (_, Action::Index(k)) => format!("#{k}"),
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, ActionSpace::Interval { .. })
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            ActionSpace::Interval { lower, upper, .. } => Some((*lower, *upper)),
            ActionSpace::Finite { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced game
// ---------------------------------------------------------------------------

pub type UtilityFn = dyn Fn(&[Action]) -> Vec<f64> + Send + Sync;
pub type RhoBadFn = dyn Fn(usize, &[Action]) -> f64 + Send + Sync;

/// Stage game in reduced form. Immutable after construction; cheap to clone.
#[derive(Clone)]
pub struct ReducedGame {
    spaces: Vec<ActionSpace>,
    utility: Arc<UtilityFn>,
    rho_bad: Arc<RhoBadFn>,
}

impl fmt::Debug for ReducedGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedGame")
            .field("players", &self.spaces.len())
            .finish()
    }
}

impl ReducedGame {
    pub fn new(
        spaces: Vec<ActionSpace>,
        utility: Arc<UtilityFn>,
        rho_bad: Arc<RhoBadFn>,
    ) -> Result<Self, GameError> {
        if spaces.len() < 2 {
            return Err(GameError::TooFewPlayers(spaces.len()));
        }
        Ok(ReducedGame {
            spaces,
            utility,
            rho_bad,
        })
    }

    pub fn player_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn space(&self, i: usize) -> &ActionSpace {
        &self.spaces[i]
    }

    pub fn utility(&self, profile: &[Action]) -> Vec<f64> {
        (self.utility)(profile)
    }

    pub fn utility_of(&self, player: usize, profile: &[Action]) -> f64 {
        (self.utility)(profile)[player]
    }

    /// Probability of the bad signal for active-player label `active`.
    pub fn rho_bad(&self, active: usize, profile: &[Action]) -> f64 {
        (self.rho_bad)(active, profile)
    }

    pub fn rho_good(&self, active: usize, profile: &[Action]) -> f64 {
        1.0 - self.rho_bad(active, profile)
    }

    pub fn profile_label(&self, profile: &[Action]) -> String {
        profile
            .iter()
            .enumerate()
            .map(|(k, &a)| self.spaces[k].label(a))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Iterate a cartesian product of per-player grids in row-major order.
pub fn for_each_profile(grids: &[Vec<Action>], mut f: impl FnMut(&[usize], &[Action])) {
    let n = grids.len();
    let mut idx = vec![0usize; n];
    let mut profile: Vec<Action> = grids.iter().map(|g| g[0]).collect();
    loop {
        f(&idx, &profile);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                profile[k] = grids[k][idx[k]];
                break;
            }
            idx[k] = 0;
            profile[k] = grids[k][0];
        }
    }
}

// ---------------------------------------------------------------------------
// Preferred profiles and hyperplane weights
// ---------------------------------------------------------------------------

/// Preferred profiles, their payoff vectors, and the hyperplane weights.
#[derive(Debug, Clone)]
pub struct EfficientFrontier {
    /// `a_tilde[i]` maximizes player i's utility over the joint space.
    pub a_tilde: Vec<Vec<Action>>,
    /// `v_tilde[i] = U(a_tilde[i])`.
    pub v_tilde: Vec<Vec<f64>>,
    /// Positive weights with `lambda . v_tilde[i] = 1` for every i.
    pub lambda: Vec<f64>,
}

impl EfficientFrontier {
    pub fn compute(game: &ReducedGame, policy: &GridPolicy) -> Result<Self, GameError> {
        let (a_tilde, v_tilde) = preferred_profiles(game, policy)?;
        let lambda = hyperplane_weights(&v_tilde)?;
        Ok(EfficientFrontier {
            a_tilde,
            v_tilde,
            lambda,
        })
    }

    pub fn player_count(&self) -> usize {
        self.lambda.len()
    }

    /// Corner of the floored set for player `i`: every other coordinate at
    /// its floor, player i's own coordinate from the hyperplane identity.
    pub fn corner(&self, i: usize, mu: &[f64]) -> Vec<f64> {
        let n = self.player_count();
        let mut v = mu.to_vec();
        let held: f64 = (0..n)
            .filter(|&k| k != i)
            .map(|k| self.lambda[k] * mu[k])
            .sum();
        v[i] = (1.0 - held) / self.lambda[i];
        v
    }

    /// Coordinates of `v` in the basis of preferred payoff vectors.
    pub fn barycentric(&self, v: &[f64]) -> Option<Vec<f64>> {
        let n = self.player_count();
        let m: Vec<Vec<f64>> = (0..n)
            .map(|r| (0..n).map(|c| self.v_tilde[c][r]).collect())
            .collect();
        linalg::solve(&m, v)
    }

    /// Membership of `v` in the convex hull of the preferred payoffs.
    pub fn in_hull(&self, v: &[f64], tol: f64) -> bool {
        match self.barycentric(v) {
            Some(theta) => theta.iter().all(|&t| t >= -tol),
            None => false,
        }
    }
}

/// Joint profiles and their payoff vectors, one per player.
pub type ProfilesAndPayoffs = (Vec<Vec<Action>>, Vec<Vec<f64>>);

/// Argmax of each player's utility over the joint action space.
///
/// Interval coordinates are scanned on the budgeted joint grid and the
/// incumbent then gets one cyclic golden-section pass. The uniqueness check
/// compares against the best grid profile that is not a grid-neighbour of
/// the incumbent, so basin-interior quantization does not count as a tie.
pub fn preferred_profiles(
    game: &ReducedGame,
    policy: &GridPolicy,
) -> Result<ProfilesAndPayoffs, GameError> {
    let n = game.player_count();
    let grids = policy.joint_grids(game.spaces());
    if grids.iter().any(|g| g.is_empty()) {
        return Err(GameError::EmptyActionSpace);
    }

    let mut best_val = vec![f64::NEG_INFINITY; n];
    let mut best_idx: Vec<Vec<usize>> = vec![vec![0; n]; n];
    for_each_profile(&grids, |idx, profile| {
        let u = game.utility(profile);
        for i in 0..n {
            if u[i] > best_val[i] {
                best_val[i] = u[i];
                best_idx[i].copy_from_slice(idx);
            }
        }
    });

    // second-best outside the incumbent's neighbourhood; only interval
    // coordinates blur into a basin, finite actions always compete
    let interval: Vec<bool> = game.spaces().iter().map(ActionSpace::is_interval).collect();
    let mut runner_up = vec![f64::NEG_INFINITY; n];
    for_each_profile(&grids, |idx, profile| {
        let u = game.utility(profile);
        for i in 0..n {
            let adjacent = idx
                .iter()
                .zip(&best_idx[i])
                .zip(&interval)
                .all(|((&a, &b), &iv)| if iv { a.abs_diff(b) <= 1 } else { a == b });
            if !adjacent && u[i] > runner_up[i] {
                runner_up[i] = u[i];
            }
        }
    });

    let mut a_tilde = Vec::with_capacity(n);
    let mut v_tilde = Vec::with_capacity(n);
    for i in 0..n {
        let mut incumbent: Vec<Action> = best_idx[i]
            .iter()
            .enumerate()
            .map(|(k, &j)| grids[k][j])
            .collect();
        let mut value = best_val[i];
        // one refinement pass over the interval coordinates
        for k in 0..n {
            if !game.space(k).is_interval() {
                continue;
            }
            let g = &grids[k];
            let j = best_idx[i][k];
            let lo = g[j.saturating_sub(1)].level();
            let hi = g[(j + 1).min(g.len() - 1)].level();
            let mut probe = incumbent.clone();
            let mut f = |x: f64| {
                probe[k] = Action::Level(x);
                game.utility(&probe)[i]
            };
            let (x, fx) = golden_max(&mut f, lo, hi, policy.refine_iters);
            if fx > value {
                value = fx;
                incumbent[k] = Action::Level(x);
            }
        }
        let gap = value - runner_up[i];
        if runner_up[i].is_finite() && gap <= TOL_UNIQUENESS {
            return Err(GameError::NonUniqueArgmax { player: i, gap });
        }
        v_tilde.push(game.utility(&incumbent));
        a_tilde.push(incumbent);
    }
    Ok((a_tilde, v_tilde))
}

/// Solve `v_tilde[i] . lambda = 1` for all i; all weights must be positive.
pub fn hyperplane_weights(v_tilde: &[Vec<f64>]) -> Result<Vec<f64>, GameError> {
    let n = v_tilde.len();
    let det = linalg::determinant(v_tilde);
    let scale: f64 = v_tilde
        .iter()
        .flat_map(|r| r.iter())
        .fold(1.0f64, |acc, &x| acc.max(x.abs()));
    if det.abs() <= 1e-12 * scale.powi(n as i32) {
        return Err(GameError::SingularFrontier { det });
    }
    let lambda =
        linalg::solve(v_tilde, &vec![1.0; n]).ok_or(GameError::SingularFrontier { det })?;
    for (player, &weight) in lambda.iter().enumerate() {
        if weight <= TOL_STRICT {
            return Err(GameError::NonPositiveWeight { player, weight });
        }
    }
    Ok(lambda)
}

// ---------------------------------------------------------------------------
// Assumption validation
// ---------------------------------------------------------------------------

/// How the full-support requirement is checked.
///
/// `Reachable` checks the open interval only at the preferred profiles (the
/// on-path profiles of any efficient strategy) and mere probability validity
/// on deviation profiles; `Strict` requires `rho_bad` in the open interval
/// on the whole evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportPolicy {
    #[default]
    Reachable,
    Strict,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub margin: f64,
    pub detail: String,
}

impl Check {
    fn pass(margin: f64, detail: impl Into<String>) -> Self {
        Check {
            pass: true,
            margin,
            detail: detail.into(),
        }
    }
    fn fail(margin: f64, detail: impl Into<String>) -> Self {
        Check {
            pass: false,
            margin,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct A4Violation {
    pub active: usize,
    pub deviator: usize,
    pub action: Action,
    pub gain: f64,
    pub drho: f64,
}

/// Pass/fail per assumption with witnesses; never errors, failures ride in
/// the report.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub frontier: Option<EfficientFrontier>,
    pub independence: Check,
    pub below_hyperplane: Check,
    pub full_support: Check,
    pub detectability: Check,
    pub a4_violations: Vec<A4Violation>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.independence.pass
            && self.below_hyperplane.pass
            && self.full_support.pass
            && self.detectability.pass
    }
}

pub fn validate_assumptions(
    game: &ReducedGame,
    policy: &GridPolicy,
    support: SupportPolicy,
) -> ValidationReport {
    let n = game.player_count();

    let (a_tilde, v_tilde) = match preferred_profiles(game, policy) {
        Ok(pair) => pair,
        Err(e) => {
            let msg = format!("preferred profiles unavailable: {e}");
            return ValidationReport {
                frontier: None,
                independence: Check::fail(f64::NEG_INFINITY, msg.clone()),
                below_hyperplane: Check::fail(f64::NEG_INFINITY, msg.clone()),
                full_support: Check::fail(f64::NEG_INFINITY, msg.clone()),
                detectability: Check::fail(f64::NEG_INFINITY, msg),
                a4_violations: vec![],
            };
        }
    };

    // Assumption 1: linear independence of the preferred payoff vectors.
    let det = linalg::determinant(&v_tilde);
    let scale: f64 = v_tilde
        .iter()
        .flat_map(|r| r.iter())
        .fold(1.0f64, |acc, &x| acc.max(x.abs()));
    let independent = det.abs() > 1e-12 * scale.powi(n as i32);
    let independence = if independent {
        Check::pass(det.abs(), format!("det = {det:.6e}"))
    } else {
        Check::fail(det.abs(), format!("det = {det:.6e} (dependent rows)"))
    };

    let frontier = if independent {
        match hyperplane_weights(&v_tilde) {
            Ok(lambda) => Some(EfficientFrontier {
                a_tilde: a_tilde.clone(),
                v_tilde: v_tilde.clone(),
                lambda,
            }),
            Err(_) => None,
        }
    } else {
        None
    };

    // Assumption 2: every non-preferred profile strictly below the
    // hyperplane. Grid check; preferred profiles themselves are skipped.
    let below_hyperplane = match &frontier {
        Some(fr) => {
            let grids = policy.joint_grids(game.spaces());
            let mut worst = f64::NEG_INFINITY;
            let mut worst_profile = String::new();
            for_each_profile(&grids, |_, profile| {
                if fr.a_tilde.iter().any(|p| p.as_slice() == profile) {
                    return;
                }
                let w = linalg::dot(&fr.lambda, &game.utility(profile));
                if w > worst {
                    worst = w;
                    worst_profile = game.profile_label(profile);
                }
            });
            if worst < 1.0 - TOL_STRICT {
                Check::pass(
                    1.0 - worst,
                    format!("max weighted payoff {worst:.9} at ({worst_profile})"),
                )
            } else {
                Check::fail(
                    1.0 - worst,
                    format!("profile ({worst_profile}) reaches {worst:.12}"),
                )
            }
        }
        None => Check::fail(
            f64::NEG_INFINITY,
            "hyperplane weights unavailable".to_string(),
        ),
    };

    // Assumption 3: full support of the two-signal distribution.
    let full_support = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut ok = true;
        let mut detail = String::new();
        match support {
            SupportPolicy::Reachable => {
                for (i, pref) in a_tilde.iter().enumerate() {
                    let r = game.rho_bad(i, pref);
                    lo = lo.min(r);
                    hi = hi.max(r);
                    if !(r > TOL_STRICT && r < 1.0 - TOL_STRICT) {
                        ok = false;
                        detail = format!("rho_bad({},preferred) = {r}", i + 1);
                    }
                }
                // deviation profiles only need to be valid probabilities
                'outer: for i in 0..n {
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let mut profile = a_tilde[i].clone();
                        for a in policy.deviation_grid(game.space(j)) {
                            profile[j] = a;
                            let r = game.rho_bad(i, &profile);
                            if !(-1e-9..=1.0 + 1e-9).contains(&r) {
                                ok = false;
                                detail = format!(
                                    "rho_bad({},dev j={} a={}) = {r} outside [0,1]",
                                    i + 1,
                                    j + 1,
                                    game.space(j).label(a)
                                );
                                break 'outer;
                            }
                        }
                    }
                }
            }
            SupportPolicy::Strict => {
                let grids = policy.joint_grids(game.spaces());
                let mut bad_at = String::new();
                for_each_profile(&grids, |_, profile| {
                    for i in 0..n {
                        let r = game.rho_bad(i, profile);
                        lo = lo.min(r);
                        hi = hi.max(r);
                        if ok && !(r > TOL_STRICT && r < 1.0 - TOL_STRICT) {
                            ok = false;
                            bad_at = format!(
                                "rho_bad({},({})) = {r}",
                                i + 1,
                                game.profile_label(profile)
                            );
                        }
                    }
                });
                detail = bad_at;
            }
        }
        let margin = lo.min(1.0 - hi);
        if ok {
            Check::pass(margin, format!("rho_bad range [{lo:.9}, {hi:.9}]"))
        } else {
            Check::fail(margin, detail)
        }
    };

    // Assumption 4: for every active label i and deviator j, a profitable
    // deviation exists and every profitable deviation strictly raises the
    // bad-signal probability.
    let mut a4_violations = Vec::new();
    let mut a4_ok = true;
    let mut a4_detail = String::new();
    for i in 0..n {
        let base_rho = game.rho_bad(i, &a_tilde[i]);
        for j in 0..n {
            if j == i {
                continue;
            }
            let base_u = v_tilde[i][j];
            let mut profile = a_tilde[i].clone();
            let mut any_profitable = false;
            for a in policy.deviation_grid(game.space(j)) {
                profile[j] = a;
                let gain = game.utility(&profile)[j] - base_u;
                if gain > TOL_PROFIT {
                    any_profitable = true;
                    let drho = game.rho_bad(i, &profile) - base_rho;
                    if drho <= TOL_PROFIT {
                        a4_ok = false;
                        if a4_violations.len() < 16 {
                            a4_violations.push(A4Violation {
                                active: i,
                                deviator: j,
                                action: a,
                                gain,
                                drho,
                            });
                        }
                        if a4_detail.is_empty() {
                            a4_detail = format!(
                                "active {} deviator {} action {}: gain {gain:.6} but drho_bad {drho:.3e}",
                                i + 1,
                                j + 1,
                                game.space(j).label(a)
                            );
                        }
                    }
                }
            }
            if !any_profitable {
                a4_ok = false;
                if a4_detail.is_empty() {
                    a4_detail = format!(
                        "active {} deviator {}: no profitable deviation on the grid",
                        i + 1,
                        j + 1
                    );
                }
            }
        }
    }
    let detectability = if a4_ok {
        Check::pass(0.0, "all profitable deviations detected")
    } else {
        Check::fail(0.0, a4_detail)
    };

    ValidationReport {
        frontier,
        independence,
        below_hyperplane,
        full_support,
        detectability,
        a4_violations,
    }
}
