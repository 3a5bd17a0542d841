//! Stock example games.
//!
//! Every builder checks its parameter constraints up front and returns the
//! game in reduced form; `make_contest_rule2` returns the finer-grained
//! multi-signal form, which equilibrium analysis only accepts after an
//! explicit two-cell coarsening.

use std::sync::Arc;

use thiserror::Error;

use crate::elaborated::{ElabError, MultiSignalGame};
use crate::game::{Action, ActionSpace, GameError, ReducedGame};

#[derive(Debug, Error)]
pub enum BuilderError {
    #[error("parameter constraint violated: {0}")]
    ParameterConstraintViolated(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Elaborated(#[from] ElabError),
}

fn require(cond: bool, msg: &str) -> Result<(), BuilderError> {
    if cond {
        Ok(())
    } else {
        Err(BuilderError::ParameterConstraintViolated(msg.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Modified dilemma (2x2)
// ---------------------------------------------------------------------------

/// 2x2 game with payoff table
/// `(C,C) -> (c,c)`, `(C,D) -> (0,B)`, `(D,C) -> (B,0)`, `(D,D) -> (b,b)`
/// and good-signal probabilities `p` at (C,C), `q` at mixed profiles, `r`
/// at (D,D). The good signal is shared by both players. Requires
/// `B > 2c > 2b > 0` and `1 > p >= q > r > 0`.
pub fn make_modified_pd(
    big_b: f64,
    b: f64,
    c: f64,
    p: f64,
    q: f64,
    r: f64,
) -> Result<ReducedGame, BuilderError> {
    require(b > 0.0, "b > 0")?;
    require(c > b, "c > b")?;
    require(big_b > 2.0 * c, "B > 2c")?;
    require(r > 0.0, "r > 0")?;
    require(q > r, "q > r")?;
    require(p >= q, "p >= q")?;
    require(p < 1.0, "p < 1")?;
    let spaces = vec![
        ActionSpace::finite(vec!["C".into(), "D".into()])?,
        ActionSpace::finite(vec!["C".into(), "D".into()])?,
    ];
    let utility = Arc::new(move |a: &[Action]| match (a[0], a[1]) {
        (Action::Index(0), Action::Index(0)) => vec![c, c],
        (Action::Index(0), Action::Index(1)) => vec![0.0, big_b],
        (Action::Index(1), Action::Index(0)) => vec![big_b, 0.0],
        _ => vec![b, b],
    });
    let bad = [1.0 - p, 1.0 - q, 1.0 - r];
    let rho_bad = Arc::new(move |_: usize, a: &[Action]| {
        let defectors = a.iter().filter(|x| matches!(x, Action::Index(1))).count();
        match defectors {
            0 => bad[0],
            1 => bad[1],
            _ => bad[2],
        }
    });
    Ok(ReducedGame::new(spaces, utility, rho_bad)?)
}

// ---------------------------------------------------------------------------
// Repeated contest
// ---------------------------------------------------------------------------

fn contest_win_probs(a: &[Action], eta: f64, kappa: f64) -> Vec<f64> {
    let n = a.len();
    let total: f64 = a.iter().map(|x| x.level()).sum();
    (0..n)
        .map(|i| {
            let ai = a[i].level();
            ai * (eta - kappa * (total - ai)).max(0.0)
        })
        .collect()
}

fn contest_checks(
    n: usize,
    r_prize: f64,
    eta: f64,
    kappa: f64,
    cost: f64,
    resolution: usize,
) -> Result<(), BuilderError> {
    require(n >= 2, "n >= 2")?;
    require(eta > 0.0 && eta < 1.0, "eta in (0,1)")?;
    require(kappa > 0.0 && kappa < 1.0, "kappa in (0,1)")?;
    require(cost > 0.0, "c > 0")?;
    require(r_prize * eta > cost, "R*eta > c")?;
    require(
        kappa > 0.5 * (eta - cost / r_prize),
        "kappa > (eta - c/R)/2",
    )?;
    require(resolution >= 2, "grid resolution >= 2")?;
    // win probabilities must stay a sub-distribution on the whole cube;
    // with a single active player the total equals eta < 1, interior
    // profiles are checked numerically on a coarse lattice
    let probe = 33usize;
    let mut idx = vec![0usize; n];
    loop {
        let a: Vec<Action> = idx
            .iter()
            .map(|&k| Action::Level(k as f64 / (probe - 1) as f64))
            .collect();
        let total: f64 = contest_win_probs(&a, eta, kappa).iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(BuilderError::ParameterConstraintViolated(format!(
                "win probabilities sum to {total:.6} > 1 at a grid profile"
            )));
        }
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < probe {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Effort contest with the privacy-preserving announcement (two signals:
/// whether anyone won). Requires `R*eta > c` and `kappa > (eta - c/R)/2`.
///
/// The bad-signal label follows the detection direction: when
/// `eta - 2*kappa < 0` a profitable deviation lowers the win probability, so
/// "no winner" is the bad signal; otherwise the labels flip.
pub fn make_contest(
    n: usize,
    r_prize: f64,
    eta: f64,
    kappa: f64,
    cost: f64,
    resolution: usize,
) -> Result<ReducedGame, BuilderError> {
    contest_checks(n, r_prize, eta, kappa, cost, resolution)?;
    let spaces: Result<Vec<_>, _> = (0..n)
        .map(|_| ActionSpace::interval(0.0, 1.0, resolution))
        .collect();
    let utility = Arc::new(move |a: &[Action]| {
        let wins = contest_win_probs(a, eta, kappa);
        a.iter()
            .zip(wins)
            .map(|(x, w)| w * r_prize - cost * x.level())
            .collect()
    });
    let no_winner_is_bad = eta - 2.0 * kappa < 0.0;
    let rho_bad = Arc::new(move |_: usize, a: &[Action]| {
        let win: f64 = contest_win_probs(a, eta, kappa).iter().sum();
        if no_winner_is_bad {
            1.0 - win
        } else {
            win
        }
    });
    Ok(ReducedGame::new(spaces?, utility, rho_bad)?)
}

/// Effort contest with the identity-revealing announcement: `n + 1` signals
/// (no winner, or the winner's identity).
pub fn make_contest_rule2(
    n: usize,
    r_prize: f64,
    eta: f64,
    kappa: f64,
    cost: f64,
    resolution: usize,
) -> Result<MultiSignalGame, BuilderError> {
    contest_checks(n, r_prize, eta, kappa, cost, resolution)?;
    let spaces: Result<Vec<_>, _> = (0..n)
        .map(|_| ActionSpace::interval(0.0, 1.0, resolution))
        .collect();
    let utility = Arc::new(move |a: &[Action]| {
        let wins = contest_win_probs(a, eta, kappa);
        a.iter()
            .zip(wins)
            .map(|(x, w)| w * r_prize - cost * x.level())
            .collect()
    });
    let rho = Arc::new(move |a: &[Action]| {
        let wins = contest_win_probs(a, eta, kappa);
        let total: f64 = wins.iter().sum();
        let mut d = Vec::with_capacity(wins.len() + 1);
        d.push(1.0 - total);
        d.extend(wins);
        d
    });
    Ok(MultiSignalGame::new(spaces?, n + 1, utility, rho)?)
}

/// Canonical two-cell coarsening of the identity-revealing contest: cell 0
/// is "no winner", cell 1 pools every winner identity. Equals the
/// privacy-preserving announcement exactly.
pub fn contest_coarsening(n: usize, eta: f64, kappa: f64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let cells0 = vec![0usize];
    let cells1: Vec<usize> = (1..=n).collect();
    let no_winner_is_bad = eta - 2.0 * kappa < 0.0;
    let bad_cell = vec![if no_winner_is_bad { 0 } else { 1 }; n];
    (cells0, cells1, bad_cell)
}

// ---------------------------------------------------------------------------
// Shared-server rate game
// ---------------------------------------------------------------------------

/// `n` users push packet rates through a shared server of nominal capacity
/// `chi` hit by uniform shocks on `[0, eps_bar]`; per-user payoff is
/// `a_i^p / delay` in expectation, and the designer announces whether the
/// measured delay was below the threshold `d0` (the good signal for all).
/// Requires `eps_bar <= 2*chi/(2+p)` and `d0 > 0` (`+inf` allowed).
pub fn make_mm1(
    n: usize,
    chi: f64,
    eps_bar: f64,
    p: f64,
    d0: f64,
    resolution: usize,
) -> Result<ReducedGame, BuilderError> {
    require(n >= 2, "n >= 2")?;
    require(chi > 0.0, "chi > 0")?;
    require(eps_bar > 0.0, "eps_bar > 0")?;
    require(p > 0.0, "p > 0")?;
    require(eps_bar <= 2.0 * chi / (2.0 + p), "eps_bar <= 2*chi/(2+p)")?;
    require(d0 > 0.0, "d0 > 0")?;
    require(resolution >= 2, "grid resolution >= 2")?;
    let spaces: Result<Vec<_>, _> = (0..n)
        .map(|_| ActionSpace::interval(0.0, chi, resolution))
        .collect();
    let pow = move |x: f64| if p == 1.0 { x } else { x.powf(p) };
    let utility = Arc::new(move |a: &[Action]| {
        let total: f64 = a.iter().map(|x| x.level()).sum();
        let slack = chi - total;
        a.iter()
            .map(|x| {
                let own = pow(x.level());
                if slack >= eps_bar {
                    own * (slack - eps_bar / 2.0)
                } else if slack > 0.0 {
                    own * slack * slack / (2.0 * eps_bar)
                } else {
                    0.0
                }
            })
            .collect()
    });
    let inv_d0 = if d0.is_finite() { 1.0 / d0 } else { 0.0 };
    let rho_bad = Arc::new(move |_: usize, a: &[Action]| {
        let total: f64 = a.iter().map(|x| x.level()).sum();
        let low_delay = (chi - total - inv_d0).clamp(0.0, eps_bar) / eps_bar;
        1.0 - low_delay
    });
    Ok(ReducedGame::new(spaces?, utility, rho_bad)?)
}

// ---------------------------------------------------------------------------
// 3x3x3 counterexample
// ---------------------------------------------------------------------------

/// Three players, actions `l/m/h` each. Unlisted payoffs are zero. The
/// floored analysis necessarily fails here: the per-player floors forced by
/// the deviation rates sum past the hyperplane.
pub fn make_table3() -> Result<ReducedGame, BuilderError> {
    let labels = || vec!["l".to_string(), "m".to_string(), "h".to_string()];
    let spaces = vec![
        ActionSpace::finite(labels())?,
        ActionSpace::finite(labels())?,
        ActionSpace::finite(labels())?,
    ];
    let utility = Arc::new(|a: &[Action]| {
        let key = (a[0].index(), a[1].index(), a[2].index());
        match key {
            (2, 0, 0) => vec![1.0, 0.5, 0.0],
            (0, 2, 0) => vec![0.0, 1.0, 0.5],
            (0, 0, 2) => vec![0.5, 0.0, 1.0],
            (1, 2, 0) => vec![0.1, 0.0, 0.0],
            (2, 1, 0) => vec![0.0, 0.55, 0.0],
            (2, 2, 0) => vec![0.2, 0.6, 0.0],
            (0, 2, 1) => vec![0.0, 0.0, 0.55],
            (2, 0, 1) => vec![0.0, 0.0, 0.1],
            (0, 1, 2) => vec![0.0, 0.1, 0.0],
            (0, 2, 2) => vec![0.0, 0.2, 0.6],
            (1, 0, 2) => vec![0.55, 0.0, 0.0],
            (2, 0, 2) => vec![0.6, 0.0, 0.2],
            _ => vec![0.0, 0.0, 0.0],
        }
    });
    let rho_bad = Arc::new(|_: usize, a: &[Action]| {
        let mut k: Vec<usize> = a.iter().map(|x| x.index()).collect();
        k.sort_unstable();
        let good = if k == [0, 0, 2] {
            2.0 / 3.0
        } else if k == [0, 1, 2] {
            0.5
        } else {
            1.0 / 3.0
        };
        1.0 - good
    });
    Ok(ReducedGame::new(spaces, utility, rho_bad)?)
}

// ---------------------------------------------------------------------------
// Custom finite tables
// ---------------------------------------------------------------------------

/// Finite game supplied as explicit tables: one payoff row and one
/// bad-signal-probability row (per active player) for every joint profile in
/// row-major order.
#[derive(Debug, Clone)]
pub struct CustomTables {
    pub labels: Vec<Vec<String>>,
    pub payoffs: Vec<Vec<f64>>,
    pub rho_bad: Vec<Vec<f64>>,
}

pub fn make_custom(tables: CustomTables) -> Result<ReducedGame, BuilderError> {
    let n = tables.labels.len();
    require(n >= 2, "at least two players")?;
    let sizes: Vec<usize> = tables.labels.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    require(
        tables.payoffs.len() == total,
        "one payoff row per joint profile",
    )?;
    require(
        tables.rho_bad.len() == total,
        "one bad-probability row per joint profile",
    )?;
    for row in &tables.payoffs {
        require(row.len() == n, "payoff rows need one entry per player")?;
    }
    for row in &tables.rho_bad {
        require(row.len() == n, "probability rows need one entry per player")?;
        for &v in row {
            require((0.0..=1.0).contains(&v), "bad probabilities in [0,1]")?;
        }
    }
    let spaces: Result<Vec<_>, _> = tables
        .labels
        .iter()
        .map(|l| ActionSpace::finite(l.clone()))
        .collect();
    let strides: Vec<usize> = (0..n)
        .map(|k| sizes[k + 1..].iter().product::<usize>())
        .collect();
    let flat =
        move |a: &[Action]| -> usize { a.iter().zip(&strides).map(|(x, s)| x.index() * s).sum() };
    let payoffs = tables.payoffs;
    let rho = tables.rho_bad;
    let flat2 = flat.clone();
    let utility = Arc::new(move |a: &[Action]| payoffs[flat(a)].clone());
    let rho_bad = Arc::new(move |i: usize, a: &[Action]| rho[flat2(a)][i]);
    Ok(ReducedGame::new(spaces?, utility, rho_bad)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Action::{Index, Level};

    #[test]
    fn pd_matches_table_and_signal_display() {
        let g = make_modified_pd(4.0, 1.0, 1.5, 0.9, 0.8, 0.2).unwrap();
        assert_eq!(g.utility(&[Index(1), Index(1)]), vec![1.0, 1.0]);
        assert_eq!(g.utility(&[Index(0), Index(1)]), vec![0.0, 4.0]);
        // good-signal probability at (D,D) is r
        let rb = g.rho_bad(0, &[Index(1), Index(1)]);
        assert!((rb - 0.8).abs() < 1e-15);
    }

    #[test]
    fn pd_rejects_boundary_parameters() {
        assert!(matches!(
            make_modified_pd(4.0, 1.0, 1.5, 0.9, 0.5, 0.5),
            Err(BuilderError::ParameterConstraintViolated(_))
        ));
        assert!(matches!(
            make_modified_pd(3.0, 1.0, 1.5, 0.9, 0.8, 0.2),
            Err(BuilderError::ParameterConstraintViolated(_))
        ));
    }

    #[test]
    fn contest_preferred_payoffs() {
        let g = make_contest(2, 1.0, 0.9, 0.65, 0.2, 1001).unwrap();
        let u = g.utility(&[Level(1.0), Level(0.0)]);
        assert!((u[0] - 0.7).abs() < 1e-15);
        assert_eq!(u[1], 0.0);
        // winner announced is the good signal here (eta - 2 kappa < 0)
        let rb = g.rho_bad(0, &[Level(1.0), Level(0.0)]);
        assert!((rb - (1.0 - 0.9)).abs() < 1e-15);
    }

    #[test]
    fn contest_symmetric_effort_win_probability() {
        // at a = (1,1) the chance someone wins is 2(eta - kappa)^+
        let g = make_contest(2, 1.0, 0.9, 0.65, 0.2, 101).unwrap();
        let rb = g.rho_bad(0, &[Level(1.0), Level(1.0)]);
        assert!((rb - (1.0 - 2.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn contest_label_flips_with_detection_direction() {
        // kappa < eta/2: deviations raise the win probability, so "winner"
        // becomes the bad cell
        let g = make_contest(2, 1.0, 0.9, 0.4, 0.2, 101).unwrap();
        let rb = g.rho_bad(0, &[Level(1.0), Level(0.0)]);
        assert!((rb - 0.9).abs() < 1e-15);
    }

    #[test]
    fn contest_rejects_out_of_range_parameters() {
        assert!(make_contest(2, 1.0, 0.9, 0.3, 0.95, 101).is_err()); // R eta < c
        assert!(make_contest(2, 1.0, 0.9, 0.2, 0.2, 101).is_err()); // kappa too small
    }

    #[test]
    fn mm1_three_branch_payoff() {
        let g = make_mm1(3, 1.0, 0.3, 1.0, 10.0, 1001).unwrap();
        // saturating total rate gives zero payoff to everyone
        let u = g.utility(&[Level(0.5), Level(0.3), Level(0.2)]);
        assert_eq!(u, vec![0.0, 0.0, 0.0]);
        // first branch at the single-active optimum
        let u = g.utility(&[Level(0.425), Level(0.0), Level(0.0)]);
        assert!((u[0] - 0.425 * (0.85 - 0.425)).abs() < 1e-15);
        // middle branch
        let u = g.utility(&[Level(0.8), Level(0.0), Level(0.0)]);
        assert!((u[0] - 0.8 * 0.04 / 0.6).abs() < 1e-15);
    }

    #[test]
    fn mm1_signal_clamps_at_low_thresholds() {
        let g = make_mm1(3, 1.0, 0.3, 1.0, 10.0, 1001).unwrap();
        // chi - total - 1/d0 = 0.475 > eps_bar: good signal certain
        let rb = g.rho_bad(0, &[Level(0.425), Level(0.0), Level(0.0)]);
        assert_eq!(rb, 0.0);
    }

    #[test]
    fn mm1_threshold_limit_drops_the_offset() {
        let g = make_mm1(3, 1.0, 0.3, 1.0, f64::INFINITY, 101).unwrap();
        let rb = g.rho_bad(0, &[Level(0.8), Level(0.0), Level(0.0)]);
        // clamp(0.2, 0, 0.3)/0.3 low-delay probability
        assert!((rb - (1.0 - 0.2 / 0.3)).abs() < 1e-12);
    }

    #[test]
    fn mm1_rejects_oversized_shock() {
        assert!(make_mm1(3, 1.0, 0.7, 1.0, 3.0, 101).is_err());
    }

    #[test]
    fn table3_payoffs_and_signals() {
        let g = make_table3().unwrap();
        assert_eq!(
            g.utility(&[Index(2), Index(0), Index(0)]),
            vec![1.0, 0.5, 0.0]
        );
        assert_eq!(
            g.utility(&[Index(2), Index(1), Index(0)]),
            vec![0.0, 0.55, 0.0]
        );
        let rb = g.rho_bad(0, &[Index(0), Index(0), Index(2)]);
        assert!((rb - 1.0 / 3.0).abs() < 1e-15);
        let rb = g.rho_bad(0, &[Index(1), Index(0), Index(2)]);
        assert!((rb - 0.5).abs() < 1e-15);
    }

    #[test]
    fn custom_tables_round_trip() {
        let g = make_custom(CustomTables {
            labels: vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
            payoffs: vec![
                vec![1.5, 1.5],
                vec![0.0, 4.0],
                vec![4.0, 0.0],
                vec![1.0, 1.0],
            ],
            rho_bad: vec![
                vec![0.1, 0.1],
                vec![0.2, 0.2],
                vec![0.2, 0.2],
                vec![0.8, 0.8],
            ],
        })
        .unwrap();
        assert_eq!(g.utility(&[Index(1), Index(0)]), vec![4.0, 0.0]);
        assert_eq!(g.rho_bad(1, &[Index(1), Index(1)]), 0.8);
    }
}
