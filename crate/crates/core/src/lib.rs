//! Analysis toolkit for repeated games with two-signal imperfect public
//! monitoring.
//!
//! The library covers the full pipeline for a reduced-form stage game:
//!
//! - [`game`] — stage game representation, preferred profiles, hyperplane
//!   weights and the four structural assumption checks;
//! - [`elaborated`] — designer-side outcome/measurement/announcement
//!   composition and two-cell signal coarsening;
//! - [`builders`] — the stock example games (modified dilemma, contest,
//!   shared-server rate game, the 3x3x3 counterexample, custom tables);
//! - [`metrics`] — deviation gain rates alpha/beta and the four
//!   self-generation conditions, floor vector and discount threshold;
//! - [`engine`] — the online continuation-payoff algorithm;
//! - [`oracle`] — independent brute-force decomposability verification and
//!   the two-player characterization;
//! - [`sim`] — seeded Monte Carlo play and deviation best-response testing.

pub mod builders;
pub mod elaborated;
pub mod engine;
pub mod game;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod sim;

/// Tolerance for hyperplane identities (`lambda . v = 1`) and the engine's
/// per-step exact identities.
pub const TOL_HYPERPLANE: f64 = 1e-9;

/// Absolute payoff gap below which two argmax candidates count as a tie.
pub const TOL_UNIQUENESS: f64 = 1e-9;

/// Strictness margin for the below-hyperplane requirement on non-preferred
/// profiles.
pub const TOL_STRICT: f64 = 1e-12;

/// A deviation is "profitable" when its gain exceeds this; probability
/// comparisons use the same cut.
pub const TOL_PROFIT: f64 = 1e-12;

/// Allowed slack below the payoff floor before the engine flags a breach.
pub const TOL_FLOOR: f64 = 1e-9;

/// Slack used when classifying oracle constraints as binding.
pub const TOL_BINDING: f64 = 1e-9;
