//! Designer-side elaborated form: outcome model, measurement device and
//! announcement rule, their composition into a (possibly multi-signal)
//! reduced game, and two-cell coarsening down to the binary-signal form the
//! analysis operates on.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::game::{Action, ActionSpace, GameError, ReducedGame, UtilityFn};

#[derive(Debug, Error)]
pub enum ElabError {
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {row} sums to {sum}, not 1")]
    RowNotStochastic { row: usize, sum: f64 },
    #[error("outcome distribution sums to {sum}, not 1")]
    OutcomeDistInvalid { sum: f64 },
    #[error("coarsening cell is empty or not a partition of the signal set")]
    DegenerateCell,
    #[error(transparent)]
    Game(#[from] GameError),
}

const ROW_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Elaborated-form pieces
// ---------------------------------------------------------------------------

pub type OutcomeDistFn = dyn Fn(&[Action]) -> Vec<f64> + Send + Sync;
pub type RawUtilityFn = dyn Fn(usize, Action, usize) -> f64 + Send + Sync;

/// Finite outcome set `Z`, outcome distribution `pi(.|a)` and per-player
/// realized utility of (own action, outcome).
#[derive(Clone)]
pub struct OutcomeModel {
    pub spaces: Vec<ActionSpace>,
    pub outcomes: usize,
    pi: Arc<OutcomeDistFn>,
    u_raw: Arc<RawUtilityFn>,
}

impl fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OutcomeModel")
            .field("players", &self.spaces.len())
            .field("outcomes", &self.outcomes)
            .finish()
    }
}

impl OutcomeModel {
    pub fn new(
        spaces: Vec<ActionSpace>,
        outcomes: usize,
        pi: Arc<OutcomeDistFn>,
        u_raw: Arc<RawUtilityFn>,
    ) -> Result<Self, ElabError> {
        if outcomes == 0 {
            return Err(ElabError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(OutcomeModel {
            spaces,
            outcomes,
            pi,
            u_raw,
        })
    }

    /// Distribution over outcomes at a profile, validated to sum to 1.
    pub fn outcome_dist(&self, profile: &[Action]) -> Result<Vec<f64>, ElabError> {
        let d = (self.pi)(profile);
        if d.len() != self.outcomes {
            return Err(ElabError::DimensionMismatch {
                expected: self.outcomes,
                got: d.len(),
            });
        }
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(ElabError::OutcomeDistInvalid { sum });
        }
        Ok(d)
    }

    pub fn realized_utility(&self, player: usize, own: Action, outcome: usize) -> f64 {
        (self.u_raw)(player, own, outcome)
    }
}

/// Row-stochastic map from outcomes to measurements.
#[derive(Debug, Clone)]
pub struct MeasurementDevice {
    pub phi: Vec<Vec<f64>>,
}

impl MeasurementDevice {
    pub fn new(phi: Vec<Vec<f64>>) -> Result<Self, ElabError> {
        validate_stochastic(&phi)?;
        Ok(MeasurementDevice { phi })
    }

    pub fn identity(k: usize) -> Self {
        MeasurementDevice {
            phi: identity_rows(k),
        }
    }

    pub fn measurements(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }
}

/// Row-stochastic map from measurements to announced signals.
#[derive(Debug, Clone)]
pub struct AnnouncementRule {
    pub psi: Vec<Vec<f64>>,
}

impl AnnouncementRule {
    pub fn new(psi: Vec<Vec<f64>>) -> Result<Self, ElabError> {
        validate_stochastic(&psi)?;
        Ok(AnnouncementRule { psi })
    }

    pub fn identity(k: usize) -> Self {
        AnnouncementRule {
            psi: identity_rows(k),
        }
    }

    pub fn signals(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }
}

fn identity_rows(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|r| (0..k).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn validate_stochastic(rows: &[Vec<f64>]) -> Result<(), ElabError> {
    let width = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(ElabError::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(ElabError::RowNotStochastic { row: i, sum });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Multi-signal reduced game
// ---------------------------------------------------------------------------

pub type SignalDistFn = dyn Fn(&[Action]) -> Vec<f64> + Send + Sync;

/// Reduced game whose public signal ranges over an arbitrary finite set.
/// Produced by [`reduce`]; equilibrium analysis requires an explicit
/// [`coarsen`] to two cells first.
#[derive(Clone)]
pub struct MultiSignalGame {
    spaces: Vec<ActionSpace>,
    signals: usize,
    utility: Arc<UtilityFn>,
    rho: Arc<SignalDistFn>,
}

impl fmt::Debug for MultiSignalGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiSignalGame")
            .field("players", &self.spaces.len())
            .field("signals", &self.signals)
            .finish()
    }
}

impl MultiSignalGame {
    pub fn new(
        spaces: Vec<ActionSpace>,
        signals: usize,
        utility: Arc<UtilityFn>,
        rho: Arc<SignalDistFn>,
    ) -> Result<Self, ElabError> {
        if spaces.len() < 2 {
            return Err(ElabError::Game(GameError::TooFewPlayers(spaces.len())));
        }
        if signals < 2 {
            return Err(ElabError::DimensionMismatch {
                expected: 2,
                got: signals,
            });
        }
        Ok(MultiSignalGame {
            spaces,
            signals,
            utility,
            rho,
        })
    }

    pub fn player_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn signal_count(&self) -> usize {
        self.signals
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn utility(&self, profile: &[Action]) -> Vec<f64> {
        (self.utility)(profile)
    }

    pub fn signal_dist(&self, profile: &[Action]) -> Vec<f64> {
        (self.rho)(profile)
    }

    /// Sample a signal index by inverse CDF on the given uniform draw.
    pub fn sample_signal(&self, profile: &[Action], uniform: f64) -> usize {
        let d = self.signal_dist(profile);
        let mut acc = 0.0;
        for (k, &p) in d.iter().enumerate() {
            acc += p;
            if uniform < acc {
                return k;
            }
        }
        d.len() - 1
    }
}

// ---------------------------------------------------------------------------
// Composition and coarsening
// ---------------------------------------------------------------------------

/// Compose outcome model, measurement device and announcement rule into the
/// multi-signal reduced form:
/// `U_i(a) = sum_z u_i(a_i, z) pi(z|a)` and
/// `rho(y|a) = sum_x sum_z psi(y|x) phi(x|z) pi(z|a)`.
pub fn reduce(
    model: &OutcomeModel,
    device: &MeasurementDevice,
    rule: &AnnouncementRule,
) -> Result<MultiSignalGame, ElabError> {
    if device.phi.len() != model.outcomes {
        return Err(ElabError::DimensionMismatch {
            expected: model.outcomes,
            got: device.phi.len(),
        });
    }
    if rule.psi.len() != device.measurements() {
        return Err(ElabError::DimensionMismatch {
            expected: device.measurements(),
            got: rule.psi.len(),
        });
    }
    let signals = rule.signals();
    // pre-multiply: outcome -> signal kernel
    let kernel: Vec<Vec<f64>> = device
        .phi
        .iter()
        .map(|phi_row| {
            (0..signals)
                .map(|y| {
                    phi_row
                        .iter()
                        .zip(&rule.psi)
                        .map(|(&p_x, psi_row)| p_x * psi_row[y])
                        .sum()
                })
                .collect()
        })
        .collect();

    let model_u = model.clone();
    let utility: Arc<UtilityFn> = Arc::new(move |a: &[Action]| {
        let dist = (model_u.pi)(a);
        (0..model_u.spaces.len())
            .map(|i| {
                dist.iter()
                    .enumerate()
                    .map(|(z, &pz)| pz * model_u.realized_utility(i, a[i], z))
                    .sum()
            })
            .collect()
    });
    let model_r = model.clone();
    let rho: Arc<SignalDistFn> = Arc::new(move |a: &[Action]| {
        let dist = (model_r.pi)(a);
        (0..signals)
            .map(|y| {
                dist.iter()
                    .enumerate()
                    .map(|(z, &pz)| pz * kernel[z][y])
                    .sum()
            })
            .collect()
    });
    MultiSignalGame::new(model.spaces.clone(), signals, utility, rho)
}

/// Pool the signal set into two cells and fix, per active player, which
/// cell is the bad one. The cells must partition the signal set and both be
/// nonempty.
pub fn coarsen(
    game: &MultiSignalGame,
    cell0: &[usize],
    cell1: &[usize],
    bad_cell: &[usize],
) -> Result<ReducedGame, ElabError> {
    let k = game.signal_count();
    if cell0.is_empty() || cell1.is_empty() {
        return Err(ElabError::DegenerateCell);
    }
    let mut seen = vec![false; k];
    for &y in cell0.iter().chain(cell1) {
        if y >= k || seen[y] {
            return Err(ElabError::DegenerateCell);
        }
        seen[y] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(ElabError::DegenerateCell);
    }
    if bad_cell.len() != game.player_count() {
        return Err(ElabError::DimensionMismatch {
            expected: game.player_count(),
            got: bad_cell.len(),
        });
    }
    if bad_cell.iter().any(|&c| c > 1) {
        return Err(ElabError::DegenerateCell);
    }
    let cells = [cell0.to_vec(), cell1.to_vec()];
    let rho = Arc::clone(&game.rho);
    let bad: Vec<usize> = bad_cell.to_vec();
    let rho_bad = Arc::new(move |i: usize, a: &[Action]| {
        let d = rho(a);
        cells[bad[i]].iter().map(|&y| d[y]).sum()
    });
    Ok(ReducedGame::new(
        game.spaces.clone(),
        Arc::clone(&game.utility),
        rho_bad,
    )?)
}
