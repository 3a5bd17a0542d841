//! Numeric sup/inf policy for continuous action sets.
//!
//! Interval spaces carry their own grid resolution (config default 1001).
//! One-player deviation scans always use the full grid; joint scans cap the
//! total number of evaluated profiles, reducing per-player resolution evenly
//! when the product would exceed the budget. The incumbent optimizer of any
//! scan gets one golden-section refinement pass over its bracketing
//! neighbours.

use crate::game::{Action, ActionSpace};

/// Inverse golden ratio, the interior split used by the refinement pass.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy)]
pub struct GridPolicy {
    /// Cap on the number of joint profiles evaluated in full scans.
    pub joint_budget: usize,
    /// Iterations of the golden-section refinement pass.
    pub refine_iters: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            joint_budget: 1 << 18,
            refine_iters: 90,
        }
    }
}

impl GridPolicy {
    /// Full one-player deviation grid at the space's own resolution.
    pub fn deviation_grid(&self, space: &ActionSpace) -> Vec<Action> {
        space.grid()
    }

    /// Per-player grids for a joint scan, budget-reduced for intervals.
    pub fn joint_grids(&self, spaces: &[ActionSpace]) -> Vec<Vec<Action>> {
        let n = spaces.len();
        let cap_root = (self.joint_budget as f64).powf(1.0 / n as f64).floor() as usize;
        let mut cap = usize::MAX;
        let total: f64 = spaces.iter().map(|s| s.grid_len() as f64).product();
        if total > self.joint_budget as f64 {
            cap = cap_root.max(3);
        }
        spaces.iter().map(|s| s.grid_capped(cap)).collect()
    }
}

/// Maximize `f` on `[lo, hi]` by golden-section search. `f` may return
/// `f64::NEG_INFINITY` where it is undefined; the search then drifts toward
/// the defined side. Returns the best probed `(x, f(x))`.
pub fn golden_max(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..iters {
        if b - a <= f64::EPSILON * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        let cand = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}
