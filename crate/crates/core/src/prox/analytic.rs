//! Closed-form group proximal maps.
//!
//! All kernels minimise the scaled objective c‖x‖_p^q + ½‖x − z‖₂² with
//! c = vλ, which has the same minimisers as λ‖x‖_p^q + (1/2v)‖x − z‖₂².
//! Each writes its result into `out` and returns whether it chose zero.

use std::f64::consts::PI;

use crate::linalg::norm2;

/// Arguments this close to a domain edge of arccos/arccosh are clamped.
pub(crate) const DOMAIN_CLAMP: f64 = 1e-15;

pub(crate) fn zero(out: &mut [f64]) -> bool {
    out.iter_mut().for_each(|o| *o = 0.0);
    true
}

fn scaled(z: &[f64], factor: f64, out: &mut [f64]) -> bool {
    for (o, zi) in out.iter_mut().zip(z) {
        *o = factor * zi;
    }
    false
}

/// arccos with the argument clamped into [−1, 1] when it is within
/// [`DOMAIN_CLAMP`] of the boundary; `None` beyond that.
pub(crate) fn clamped_acos(arg: f64) -> Option<f64> {
    if arg.abs() <= 1.0 {
        Some(arg.acos())
    } else if arg.abs() <= 1.0 + DOMAIN_CLAMP {
        Some(arg.signum().acos())
    } else {
        None
    }
}

pub(crate) fn clamped_acosh(arg: f64) -> Option<f64> {
    if arg >= 1.0 {
        Some(arg.acosh())
    } else if arg >= 1.0 - DOMAIN_CLAMP {
        Some(0.0)
    } else {
        None
    }
}

/// p = 2, q = 1: (1 − c/‖z‖)z above c, else 0.
pub(crate) fn soft(z: &[f64], c: f64, out: &mut [f64]) -> bool {
    let n = norm2(z);
    if n > c {
        scaled(z, 1.0 - c / n, out)
    } else {
        zero(out)
    }
}

/// p = 2, q = 0: keep z above √(2c), zero otherwise (including the boundary).
pub(crate) fn hard(z: &[f64], c: f64, out: &mut [f64]) -> bool {
    if norm2(z) > (2.0 * c).sqrt() {
        scaled(z, 1.0, out)
    } else {
        zero(out)
    }
}

/// p = 2, q = 1/2.
pub(crate) fn half(z: &[f64], c: f64, out: &mut [f64]) -> bool {
    let n = norm2(z);
    if n <= 1.5 * c.powf(2.0 / 3.0) {
        return zero(out);
    }
    let Some(psi) = clamped_acos(c / 4.0 * (3.0 / n).powf(1.5)) else {
        return zero(out);
    };
    let k = 16.0 * n.powf(1.5) * (PI / 3.0 - psi / 3.0).cos().powi(3);
    scaled(z, k / (3.0 * 3f64.sqrt() * c + k), out)
}

/// p = 2, q = 2/3.
pub(crate) fn two_thirds(z: &[f64], c: f64, out: &mut [f64]) -> bool {
    let n = norm2(z);
    if n <= 2.0 * (2.0 / 3.0 * c).powf(0.75) {
        return zero(out);
    }
    let Some(a) = two_thirds_a(n, c) else {
        return zero(out);
    };
    let s = a.powf(1.5) + (2.0 * n - a.powi(3)).max(0.0).sqrt();
    let s4 = s.powi(4);
    scaled(z, 3.0 * s4 / (32.0 * c * a * a + 3.0 * s4), out)
}

/// The auxiliary root a = (2/√3)(2c)^{1/4} cosh(φ/3)^{1/2} of the quartic
/// factorisation, with φ = arccosh(27n² / (16(2c)^{3/2})).
fn two_thirds_a(n: f64, c: f64) -> Option<f64> {
    let phi = clamped_acosh(27.0 * n * n / (16.0 * (2.0 * c).powf(1.5)))?;
    Some(2.0 / 3f64.sqrt() * (2.0 * c).powf(0.25) * (phi / 3.0).cosh().sqrt())
}

/// Uniform ℓ₁ shrinkage for q = 1/2 on a support of size `l` whose absolute
/// values sum to `s1`.
pub(crate) fn l1_half_shrinkage(s1: f64, c: f64, l: usize) -> Option<f64> {
    let xi = clamped_acos(c * l as f64 / 4.0 * (3.0 / s1).powf(1.5))?;
    let cos = (PI / 3.0 - xi / 3.0).cos();
    if cos <= 0.0 {
        return None;
    }
    Some(3f64.sqrt() * c / (4.0 * s1.sqrt() * cos))
}

/// Uniform ℓ₁ shrinkage for q = 2/3.
pub(crate) fn l1_two_thirds_shrinkage(s1: f64, c: f64, l: usize) -> Option<f64> {
    let a = two_thirds_a(s1, c * l as f64)?;
    let disc = 2.0 * s1 - a.powi(3);
    if disc < 0.0 {
        return None;
    }
    Some(4.0 * c * a.sqrt() / (3.0 * (a.powf(1.5) + disc.sqrt())))
}

/// Scaled prox objective c‖x‖₁^q + ½‖x − z‖².
fn l1_objective(x: &[f64], z: &[f64], c: f64, q: f64) -> f64 {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let dist: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    let pen = if l1 == 0.0 { 0.0 } else { c * l1.powf(q) };
    pen + 0.5 * dist
}

/// p = 1 with 0 < q < 1: active-set search over prefix supports.
///
/// Any nonzero minimiser shrinks its support uniformly by some δ and zeroes
/// every |z_j| ≤ δ, so its support is a prefix of the coordinates sorted by
/// |z_j|. `shrinkage(s1, l)` returns δ for a prefix of size `l` with
/// absolute sum `s1`, or `None` if the stationarity equation has no root.
pub(crate) fn l1_active_set<F>(z: &[f64], c: f64, q: f64, out: &mut [f64], mut shrinkage: F) -> crate::error::Result<bool>
where
    F: FnMut(f64, usize) -> crate::error::Result<Option<f64>>,
{
    let mut order: Vec<usize> = (0..z.len()).filter(|&j| z[j] != 0.0).collect();
    order.sort_by(|&i, &j| z[j].abs().total_cmp(&z[i].abs()).then(i.cmp(&j)));

    let q0 = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut cand = vec![0.0; z.len()];
    let mut s1 = 0.0;
    for (idx, &j) in order.iter().enumerate() {
        let l = idx + 1;
        s1 += z[j].abs();
        let Some(delta) = shrinkage(s1, l)? else {
            continue;
        };
        if !(delta >= 0.0) || delta > z[j].abs() {
            continue;
        }
        cand.iter_mut().for_each(|v| *v = 0.0);
        for &k in &order[..l] {
            cand[k] = z[k].signum() * (z[k].abs() - delta);
        }
        let val = l1_objective(&cand, z, c, q);
        if best.is_none_or(|(b, _, _)| val < b) {
            best = Some((val, l, delta));
        }
    }
    match best {
        Some((val, l, delta)) if !super::ties_zero(val, q0) => {
            out.iter_mut().for_each(|v| *v = 0.0);
            for &k in &order[..l] {
                out[k] = z[k].signum() * (z[k].abs() - delta);
            }
            Ok(false)
        }
        _ => Ok(zero(out)),
    }
}
