//! Safeguarded Newton for the radial stationarity equation
//!
//! g(t) = t + κ t^{q−1} − N = 0,  t > 0, 0 < q < 1.
//!
//! g is convex on (0, ∞) with its minimum at t* = (κ(1−q))^{1/(2−q)}; the
//! larger root (the local minimizer of the prox objective) lies in [t*, N].

use crate::error::{Error, Result};

pub const NEWTON_MAX_ITER: usize = 200;
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Largest positive root of `t + kappa * t^(q-1) = target`, or `None` when
/// the equation has no positive root.
pub fn largest_root(kappa: f64, q: f64, target: f64) -> Result<Option<f64>> {
    debug_assert!(kappa > 0.0 && q > 0.0 && q < 1.0);
    if !(target > 0.0) {
        return Ok(None);
    }
    let g = |t: f64| t + kappa * t.powf(q - 1.0) - target;
    let dg = |t: f64| 1.0 - kappa * (1.0 - q) * t.powf(q - 2.0);

    let t_min = (kappa * (1.0 - q)).powf(1.0 / (2.0 - q));
    if t_min >= target {
        return Ok(None);
    }
    let g_min = g(t_min);
    if g_min > 0.0 {
        return Ok(None);
    }
    if g_min == 0.0 {
        return Ok(Some(t_min));
    }

    // g(t_min) < 0 < g(target): keep that bracket and start from the right.
    let (mut lo, mut hi) = (t_min, target);
    let mut t = target;
    for _ in 0..NEWTON_MAX_ITER {
        let gt = g(t);
        if gt.abs() <= RESIDUAL_TOL {
            return Ok(Some(t));
        }
        if gt > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(Some(if g(hi).abs() < g(lo).abs() { hi } else { lo }));
        }
        let slope = dg(t);
        let step = t - gt / slope;
        t = if slope > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NotConverged {
        what: "safeguarded Newton",
        iterations: NEWTON_MAX_ITER,
    })
}
