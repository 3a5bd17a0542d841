//! Independent decomposability verification.
//!
//! Where the engine applies closed-form continuation updates, the oracle
//! solves the underlying feasibility system from scratch: two unknown
//! continuation vectors on the weighted hyperplane, payoff floors, hull
//! membership, the decomposition equality and one incentive constraint per
//! grid deviation. One scalar unknown per inactive player remains after the
//! equality eliminates the bad-signal vector, so two-player instances
//! reduce to exact interval intersection, three-player instances to convex
//! polygon clipping, and higher dimensions to a documented-incomplete grid
//! search.

use thiserror::Error;

use crate::engine::indicators;
use crate::game::{EfficientFrontier, ReducedGame};
use crate::grid::GridPolicy;
use crate::linalg::{dot, solve};
use crate::metrics::{
    check_prop1, cond1_check, cond2_check, min_discount, mu_min, DeviationStats, MetricsError,
};
use crate::TOL_BINDING;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact feasibility is implemented for 2 and 3 players; {n} players need an explicit search grid")]
    UnsupportedDimension { n: usize },
    #[error("target payoff is off the efficient hyperplane (weighted sum {weighted:.9})")]
    TargetOffHyperplane { weighted: f64 },
    #[error("the two-player characterization needs exactly 2 players, got {n}")]
    NeedTwoPlayers { n: usize },
    #[error("every candidate active player has a degenerate on-path signal")]
    DegenerateSignals,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleOptions {
    /// Candidate-grid density per unknown for 4+ players; `None` refuses.
    pub highdim_grid: Option<usize>,
}

// ---------------------------------------------------------------------------
// Result types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DecomposabilityResult {
    pub target: Vec<f64>,
    pub feasible: bool,
    /// Active player of the decomposition (the best candidate when
    /// infeasible).
    pub active: usize,
    pub gamma_good: Vec<f64>,
    pub gamma_bad: Vec<f64>,
    /// Constraints with (normalized) slack below tolerance at the solution.
    pub binding: Vec<String>,
    /// Pooled profitable-deviation coefficient per inactive player
    /// (`NaN` on the active slot).
    pub kappa_plus: Vec<f64>,
    /// Pooled unprofitable-deviation coefficient per inactive player.
    pub kappa_minus: Vec<f64>,
    /// Half-width of the feasible region (negative when empty): the radius
    /// of slack around the best candidate set, not the slack at the
    /// returned binding solution.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct SelfGeneration {
    pub self_generating: bool,
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub points_checked: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub enum TwoPlayerCase {
    /// No efficient equilibrium payoff exists at any discount factor
    /// (beyond, possibly, stationary extreme points).
    NoEfficientPpe { reason: String },
    /// Everything above the floor pair is supportable once the discount
    /// factor reaches the threshold, and nothing more ever is.
    Interval { mu_bar: [f64; 2], delta_star: f64 },
}

#[derive(Debug, Clone)]
pub struct TwoPlayerCharacterization {
    pub case: TwoPlayerCase,
    /// Stationary sustainability of each preferred payoff.
    pub extreme_point_achievable: Vec<bool>,
}

// ---------------------------------------------------------------------------
// Affine forms and linear constraints over the unknown good-signal payoffs
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Aff {
    c: f64,
    g: Vec<f64>,
}

impl Aff {
    fn konst(dim: usize, c: f64) -> Self {
        Aff {
            c,
            g: vec![0.0; dim],
        }
    }
    fn slot(dim: usize, s: usize) -> Self {
        let mut g = vec![0.0; dim];
        g[s] = 1.0;
        Aff { c: 0.0, g }
    }
    fn scale(&self, k: f64) -> Self {
        Aff {
            c: self.c * k,
            g: self.g.iter().map(|x| x * k).collect(),
        }
    }
    fn plus(&self, other: &Aff) -> Self {
        Aff {
            c: self.c + other.c,
            g: self.g.iter().zip(&other.g).map(|(a, b)| a + b).collect(),
        }
    }
    fn shift(&self, c: f64) -> Self {
        Aff {
            c: self.c + c,
            g: self.g.clone(),
        }
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.c + dot(&self.g, x)
    }
}

struct LinCon {
    /// `coeffs . x <= rhs`
    coeffs: Vec<f64>,
    rhs: f64,
    label: String,
}

impl LinCon {
    /// `aff <= bound`
    fn upper(aff: &Aff, bound: f64, label: String) -> Self {
        LinCon {
            coeffs: aff.g.clone(),
            rhs: bound - aff.c,
            label,
        }
    }
    /// `aff >= bound`
    fn lower(aff: &Aff, bound: f64, label: String) -> Self {
        LinCon {
            coeffs: aff.g.iter().map(|x| -x).collect(),
            rhs: aff.c - bound,
            label,
        }
    }
    fn norm(&self) -> f64 {
        dot(&self.coeffs, &self.coeffs).sqrt().max(1e-12)
    }
    fn slack(&self, x: &[f64]) -> f64 {
        (self.rhs - dot(&self.coeffs, x)) / self.norm()
    }
}

struct CandidateSystem {
    active: usize,
    slots: Vec<usize>,
    gamma_good: Vec<Aff>,
    gamma_bad: Vec<Aff>,
    cons: Vec<LinCon>,
    engine_point: Vec<f64>,
}

fn build_system(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    delta: f64,
    v: &[f64],
    i: usize,
    policy: &GridPolicy,
) -> CandidateSystem {
    let n = game.player_count();
    let slots: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let dim = slots.len();
    let lam = &frontier.lambda;
    let rho_b = stats.rho_bad_pref[i];
    let rho_g = 1.0 - rho_b;

    // required expectation per player from the decomposition equality
    let expect: Vec<f64> = (0..n)
        .map(|j| (v[j] - (1.0 - delta) * frontier.v_tilde[i][j]) / delta)
        .collect();

    // gamma as affine forms of the inactive good-signal payoffs
    let mut gamma_good: Vec<Aff> = vec![Aff::konst(dim, 0.0); n];
    let mut gamma_bad: Vec<Aff> = vec![Aff::konst(dim, 0.0); n];
    for (s, &j) in slots.iter().enumerate() {
        gamma_good[j] = Aff::slot(dim, s);
        gamma_bad[j] = Aff::slot(dim, s)
            .scale(-rho_g / rho_b)
            .shift(expect[j] / rho_b);
    }
    for (which, gamma) in [&mut gamma_good, &mut gamma_bad].into_iter().enumerate() {
        let mut acc = Aff::konst(dim, 1.0);
        for &j in &slots {
            acc = acc.plus(&gamma[j].scale(-lam[j]));
        }
        gamma[i] = acc.scale(1.0 / lam[i]);
        let _ = which;
    }

    let mut cons: Vec<LinCon> = Vec::new();
    // floors
    for j in 0..n {
        cons.push(LinCon::lower(
            &gamma_good[j],
            mu[j],
            format!("floor(g,{})", j + 1),
        ));
        cons.push(LinCon::lower(
            &gamma_bad[j],
            mu[j],
            format!("floor(b,{})", j + 1),
        ));
    }
    // hull membership: barycentric coordinates of gamma(y) stay nonnegative
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|r| (0..n).map(|c| frontier.v_tilde[c][r]).collect())
        .collect();
    for k in 0..n {
        let mut unit = vec![0.0; n];
        unit[k] = 1.0;
        // row k of the basis inverse via transpose solves
        if let Some(row) = solve_transposed(&basis, &unit) {
            for (tag, gamma) in [("g", &gamma_good), ("b", &gamma_bad)] {
                let mut theta = Aff::konst(dim, 0.0);
                for (m, gm) in gamma.iter().enumerate() {
                    theta = theta.plus(&gm.scale(row[m]));
                }
                cons.push(LinCon::lower(
                    &theta,
                    -1e-9,
                    format!("hull({tag},{})", k + 1),
                ));
            }
        }
    }
    // incentive constraints at grid deviations plus recorded witnesses
    for k in 0..n {
        let mut deviations = policy.deviation_grid(game.space(k));
        for w in [stats.alpha_witness[i][k], stats.beta_witness[i][k]]
            .into_iter()
            .flatten()
        {
            if !deviations.contains(&w) {
                deviations.push(w);
            }
        }
        let mut profile = frontier.a_tilde[i].clone();
        for a in deviations {
            if a == frontier.a_tilde[i][k] {
                continue;
            }
            profile[k] = a;
            let u_d = game.utility(&profile)[k];
            let rb_d = game.rho_bad(i, &profile);
            let value = gamma_good[k]
                .scale(delta * (1.0 - rb_d))
                .plus(&gamma_bad[k].scale(delta * rb_d))
                .shift((1.0 - delta) * u_d);
            cons.push(LinCon::upper(
                &value,
                v[k],
                format!("ic({},{})", k + 1, game.space(k).label(a)),
            ));
        }
    }

    // closed-form binding-IC point used by the engine
    let engine_point: Vec<f64> = slots
        .iter()
        .map(|&j| {
            frontier.v_tilde[i][j]
                + (v[j] - frontier.v_tilde[i][j]) / delta
                + (1.0 / delta - 1.0) * stats.alpha_or_zero(i, j) * rho_b
        })
        .collect();

    CandidateSystem {
        active: i,
        slots,
        gamma_good,
        gamma_bad,
        cons,
        engine_point,
    }
}

fn solve_transposed(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = m.len();
    let t: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| m[c][r]).collect()).collect();
    solve(&t, b)
}

impl CandidateSystem {
    fn min_slack(&self, x: &[f64]) -> f64 {
        self.cons
            .iter()
            .map(|c| c.slack(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius of the feasible region and the point realizing it.
    fn region(&self, frontier: &EfficientFrontier) -> (f64, Vec<f64>) {
        match self.slots.len() {
            1 => {
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for c in &self.cons {
                    let k = c.coeffs[0];
                    if k.abs() <= 1e-14 {
                        if c.rhs < 0.0 {
                            // unsatisfiable constant constraint
                            return (f64::NEG_INFINITY, vec![0.0]);
                        }
                        continue;
                    }
                    let bound = c.rhs / k;
                    if k > 0.0 {
                        hi = hi.min(bound);
                    } else {
                        lo = lo.max(bound);
                    }
                }
                ((hi - lo) / 2.0, vec![(hi + lo) / 2.0])
            }
            2 => {
                // clip a generous bounding box by every constraint
                let coords: Vec<f64> = frontier
                    .v_tilde
                    .iter()
                    .flat_map(|r| r.iter().copied())
                    .collect();
                let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
                let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
                let mut poly = vec![[lo, lo], [hi, lo], [hi, hi], [lo, hi]];
                for c in &self.cons {
                    poly = clip(&poly, &c.coeffs, c.rhs);
                    if poly.is_empty() {
                        let x = &self.engine_point;
                        return (self.min_slack(x).min(-1e-15), x.clone());
                    }
                }
                let mut best = (f64::NEG_INFINITY, vec![0.0, 0.0]);
                let mut centroid = [0.0, 0.0];
                for p in &poly {
                    centroid[0] += p[0] / poly.len() as f64;
                    centroid[1] += p[1] / poly.len() as f64;
                }
                for cand in poly
                    .iter()
                    .map(|p| vec![p[0], p[1]])
                    .chain([centroid.to_vec()])
                {
                    let s = self.min_slack(&cand);
                    if s > best.0 {
                        best = (s, cand);
                    }
                }
                best
            }
            _ => unreachable!("dimension gated before region()"),
        }
    }
}

fn clip(poly: &[[f64; 2]], coeffs: &[f64], rhs: f64) -> Vec<[f64; 2]> {
    let inside = |p: &[f64; 2]| coeffs[0] * p[0] + coeffs[1] * p[1] <= rhs + 1e-12;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (ia, ib) = (inside(&a), inside(&b));
        if ia {
            out.push(a);
        }
        if ia != ib {
            let fa = coeffs[0] * a[0] + coeffs[1] * a[1] - rhs;
            let fb = coeffs[0] * b[0] + coeffs[1] * b[1] - rhs;
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Can `v` be decomposed with respect to the floored efficient slice at
/// discount `delta`? Candidates are tried in the engine's selection order
/// so a feasible verdict reuses the engine's active player whenever
/// possible.
pub fn decomposable(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    delta: f64,
    v: &[f64],
    policy: &GridPolicy,
    opts: &OracleOptions,
) -> Result<DecomposabilityResult, OracleError> {
    let n = game.player_count();
    let weighted = dot(&frontier.lambda, v);
    if (weighted - 1.0).abs() > 1e-6 {
        return Err(OracleError::TargetOffHyperplane { weighted });
    }
    if n > 3 && opts.highdim_grid.is_none() {
        return Err(OracleError::UnsupportedDimension { n });
    }

    // candidate order: engine rule (indicator descending, ties to the
    // larger index); fall back to descending index if indicators degenerate
    let mut order: Vec<usize> = (0..n).collect();
    if let Ok(d) = indicators(frontier, stats, mu, v) {
        order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap().then(b.cmp(&a)));
    } else {
        order.reverse();
    }

    let mut best: Option<(f64, CandidateSystem, Vec<f64>)> = None;
    for &i in &order {
        // without signal variation on path the equality cannot be inverted
        let rho_b = stats.rho_bad_pref[i];
        if !(rho_b > 0.0 && rho_b < 1.0) {
            continue;
        }
        let sys = build_system(game, frontier, stats, mu, delta, v, i, policy);
        let (radius, radius_point) = if n <= 3 {
            sys.region(frontier)
        } else {
            grid_region(&sys, frontier, mu, opts.highdim_grid.unwrap())
        };
        let engine_slack = sys.min_slack(&sys.engine_point);
        let solution = if engine_slack >= -TOL_BINDING {
            sys.engine_point.clone()
        } else {
            radius_point
        };
        let better = match &best {
            None => true,
            Some((r, _, _)) => radius > *r,
        };
        if better {
            best = Some((radius, sys, solution));
        }
        if radius >= -TOL_BINDING {
            break; // feasible with the preferred candidate
        }
    }
    let Some((radius, sys, solution)) = best else {
        return Err(OracleError::DegenerateSignals);
    };
    let feasible = radius >= -TOL_BINDING && sys.min_slack(&solution) >= -TOL_BINDING;

    let gamma_good: Vec<f64> = sys.gamma_good.iter().map(|a| a.eval(&solution)).collect();
    let gamma_bad: Vec<f64> = sys.gamma_bad.iter().map(|a| a.eval(&solution)).collect();
    let binding: Vec<String> = sys
        .cons
        .iter()
        .filter(|c| c.slack(&solution).abs() <= TOL_BINDING)
        .map(|c| c.label.clone())
        .collect();
    let i = sys.active;
    let rho_g = 1.0 - stats.rho_bad_pref[i];
    let kappa = |rate: f64, j: usize| -> f64 {
        if rate.is_finite() && rate != 0.0 {
            rho_g - (v[j] - frontier.v_tilde[i][j]) / rate
        } else if rate == f64::INFINITY {
            rho_g
        } else {
            f64::NEG_INFINITY
        }
    };
    let kappa_plus: Vec<f64> = (0..n)
        .map(|j| {
            if j == i {
                f64::NAN
            } else {
                kappa(stats.alpha[i][j], j)
            }
        })
        .collect();
    let kappa_minus: Vec<f64> = (0..n)
        .map(|j| {
            if j == i {
                f64::NAN
            } else {
                kappa(stats.beta[i][j], j)
            }
        })
        .collect();

    Ok(DecomposabilityResult {
        target: v.to_vec(),
        feasible,
        active: i,
        gamma_good,
        gamma_bad,
        binding,
        kappa_plus,
        kappa_minus,
        margin: radius,
    })
}

fn grid_region(
    sys: &CandidateSystem,
    frontier: &EfficientFrontier,
    mu: &[f64],
    density: usize,
) -> (f64, Vec<f64>) {
    // scan a box: floors below, per-coordinate hull range above
    let dim = sys.slots.len();
    let ranges: Vec<(f64, f64)> = sys
        .slots
        .iter()
        .map(|&j| {
            let hi = frontier
                .v_tilde
                .iter()
                .map(|r| r[j])
                .fold(f64::NEG_INFINITY, f64::max);
            (mu[j], hi)
        })
        .collect();
    let mut idx = vec![0usize; dim];
    let mut best = (f64::NEG_INFINITY, sys.engine_point.clone());
    let engine = sys.min_slack(&sys.engine_point);
    if engine > best.0 {
        best = (engine, sys.engine_point.clone());
    }
    loop {
        let x: Vec<f64> = idx
            .iter()
            .zip(&ranges)
            .map(|(&k, &(lo, hi))| lo + (hi - lo) * k as f64 / (density - 1) as f64)
            .collect();
        let s = sys.min_slack(&x);
        if s > best.0 {
            best = (s, x);
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < density {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Covering grid of the floored slice: barycentric combinations of its
/// corners at `points_per_dim` levels, filtered to the hull.
pub fn covering_grid(
    frontier: &EfficientFrontier,
    mu: &[f64],
    points_per_dim: usize,
) -> Vec<Vec<f64>> {
    let n = frontier.player_count();
    let k = points_per_dim.max(2);
    let corners: Vec<Vec<f64>> = (0..n).map(|i| frontier.corner(i, mu)).collect();
    let mut out = Vec::new();
    let mut weights = vec![0usize; n];
    let _ = enumerate_compositions(&mut weights, 0, k - 1, &mut |w| -> Result<(), ()> {
        let v: Vec<f64> = (0..n)
            .map(|c| {
                (0..n)
                    .map(|i| corners[i][c] * w[i] as f64 / (k - 1) as f64)
                    .sum()
            })
            .collect();
        if frontier.in_hull(&v, 1e-9) {
            out.push(v);
        }
        Ok(())
    });
    out
}

/// Check decomposability of every point of a covering grid of the floored
/// slice. Reports the minimum-margin point (ties resolved toward the
/// lexicographically smaller point, so the reduction is order-free).
pub fn is_self_generating(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    mu: &[f64],
    delta: f64,
    points_per_dim: usize,
    policy: &GridPolicy,
    opts: &OracleOptions,
) -> Result<SelfGeneration, OracleError> {
    let mut worst: Option<(f64, Vec<f64>)> = None;
    let mut checked = 0usize;
    let mut failures = 0usize;
    for v in covering_grid(frontier, mu, points_per_dim) {
        checked += 1;
        let res = decomposable(game, frontier, stats, mu, delta, &v, policy, opts)?;
        if !res.feasible {
            failures += 1;
        }
        let key = (res.margin, v);
        let replace = match &worst {
            None => true,
            Some((m, p)) => key.0 < *m || (key.0 == *m && lex_less(&key.1, p)),
        };
        if replace {
            worst = Some(key);
        }
    }

    let (worst_margin, worst_point) = worst.unwrap_or((f64::INFINITY, vec![]));
    Ok(SelfGeneration {
        self_generating: failures == 0 && checked > 0,
        worst_margin,
        worst_point,
        points_checked: checked,
        failures,
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn enumerate_compositions<E>(
    weights: &mut Vec<usize>,
    pos: usize,
    remaining: usize,
    f: &mut impl FnMut(&[usize]) -> Result<(), E>,
) -> Result<(), E> {
    if pos + 1 == weights.len() {
        weights[pos] = remaining;
        return f(weights);
    }
    for w in 0..=remaining {
        weights[pos] = w;
        enumerate_compositions(weights, pos + 1, remaining - w, f)?;
    }
    Ok(())
}

/// Complete two-player classification: either no efficient equilibrium
/// payoff is supportable at any discount factor, or the supportable set is
/// the slice above a fixed floor pair for every discount factor past a
/// threshold strictly below one.
pub fn two_player(
    game: &ReducedGame,
    frontier: &EfficientFrontier,
    stats: &DeviationStats,
    policy: &GridPolicy,
) -> Result<TwoPlayerCharacterization, OracleError> {
    let n = game.player_count();
    if n != 2 {
        return Err(OracleError::NeedTwoPlayers { n });
    }
    let extreme_point_achievable: Vec<bool> = (0..2)
        .map(|i| check_prop1(game, frontier, i, policy))
        .collect();

    let c1 = cond1_check(stats);
    let c2 = cond2_check(game, frontier, stats, policy);
    if !c1.pass || !c2.pass {
        let reason = if !c1.pass {
            format!("current gains outrun future losses ({})", c1.witness)
        } else {
            format!(
                "the active player can buy bad signals too cheaply ({})",
                c2.witness
            )
        };
        return Ok(TwoPlayerCharacterization {
            case: TwoPlayerCase::NoEfficientPpe { reason },
            extreme_point_achievable,
        });
    }

    // floors from the binding bound; pairs without profitable deviations
    // still need the opposite corner payoff covered
    let floors = mu_min(frontier, stats);
    let mu_bar: Vec<f64> = (0..2)
        .map(|i| {
            let j = 1 - i;
            if floors[i] == f64::NEG_INFINITY {
                frontier.v_tilde[j][i]
            } else {
                floors[i]
            }
        })
        .collect();
    let weighted = dot(&frontier.lambda, &mu_bar);
    if weighted >= 1.0 - 1e-12 {
        return Ok(TwoPlayerCharacterization {
            case: TwoPlayerCase::NoEfficientPpe {
                reason: format!(
                    "forced floors exhaust the efficient set (weighted sum {weighted:.6})"
                ),
            },
            extreme_point_achievable,
        });
    }
    let delta_star = min_discount(frontier, stats, &mu_bar)?;
    Ok(TwoPlayerCharacterization {
        case: TwoPlayerCase::Interval {
            mu_bar: [mu_bar[0], mu_bar[1]],
            delta_star,
        },
        extreme_point_achievable,
    })
}
