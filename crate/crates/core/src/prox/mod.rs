//! Group proximal operators
//!
//! P_{p,q}(z) ∈ argmin_x  λ‖x‖_p^q + (1/2v)‖x − z‖₂²
//!
//! for one group, plus [`prox_group_apply`], which applies the matching
//! operator to every group of a partitioned vector. The six pairs
//! (2,1), (2,0), (2,½), (1,½), (2,⅔), (1,⅔) have closed forms; any other
//! p ∈ {1, 2}, 0 < q < 1 goes through [`prox_generic`].
//!
//! Whenever the nonzero candidate and zero attain the same objective value
//! (within [`TIE_TOL`]), the operator returns zero.

mod analytic;
pub mod newton;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, DenseVector};
use crate::model::{lp_norm, GroupPartition, Penalty, ProxKind, Regularizer};

/// Relative tolerance for treating Q(x̃) and Q(0) as equal.
pub const TIE_TOL: f64 = 1e-12;

pub(crate) fn ties_zero(candidate: f64, at_zero: f64) -> bool {
    candidate >= at_zero - TIE_TOL * at_zero.abs().max(1.0)
}

/// One group subproblem: minimise λ‖x‖_p^q + (1/2v)‖x − z‖₂².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxQuery {
    pub z: DenseVector,
    pub v: f64,
    pub lambda: f64,
    pub p: f64,
    pub q: f64,
}

impl ProxQuery {
    pub fn new(z: DenseVector, v: f64, lambda: f64, p: f64, q: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Precondition("prox query needs a nonempty group".into()));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!("stepsize must be positive, got {v}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Precondition(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { z, v, lambda, p, q })
    }

    fn c(&self) -> f64 {
        self.v * self.lambda
    }

    fn expect(&self, p: f64, q: f64, name: &str) -> Result<()> {
        if self.p != p || (self.q - q).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "{name} needs (p, q) = ({p}, {q}), got ({}, {})",
                self.p, self.q
            )));
        }
        Ok(())
    }

    /// Q(x) = λ‖x‖_p^q + (1/2v)‖x − z‖₂²; for q = 0 the penalty is λ·[x ≠ 0].
    pub fn objective(&self, x: &[f64]) -> f64 {
        let dist: f64 = x.iter().zip(self.z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let nrm = lp_norm(x, self.p);
        let pen = if nrm == 0.0 {
            0.0
        } else if self.q == 0.0 {
            1.0
        } else {
            nrm.powf(self.q)
        };
        self.lambda * pen + dist / (2.0 * self.v)
    }

    fn finish(&self, x: Vec<f64>, zeroed: bool) -> ProxResult {
        let objective_value = self.objective(&x);
        ProxResult {
            x: DenseVector::from_trusted(x),
            objective_value,
            was_thresholded_to_zero: zeroed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    pub x: DenseVector,
    pub objective_value: f64,
    pub was_thresholded_to_zero: bool,
}

fn run(
    query: &ProxQuery,
    kernel: impl FnOnce(&[f64], f64, &mut [f64]) -> Result<bool>,
) -> Result<ProxResult> {
    let mut out = vec![0.0; query.z.len()];
    let zeroed = kernel(&query.z, query.c(), &mut out)?;
    Ok(query.finish(out, zeroed))
}

/// Group soft thresholding, (p, q) = (2, 1).
pub fn prox_2_1(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(2.0, 1.0, "prox_2_1")?;
    run(query, |z, c, out| Ok(analytic::soft(z, c, out)))
}

/// Group hard thresholding, (p, q) = (2, 0).
pub fn prox_2_0(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(2.0, 0.0, "prox_2_0")?;
    run(query, |z, c, out| Ok(analytic::hard(z, c, out)))
}

/// (p, q) = (2, ½): trigonometric solution of the cubic in ‖x‖^{1/2}.
pub fn prox_2_half(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(2.0, 0.5, "prox_2_half")?;
    run(query, |z, c, out| Ok(analytic::half(z, c, out)))
}

/// (p, q) = (1, ½).
pub fn prox_1_half(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(1.0, 0.5, "prox_1_half")?;
    run(query, |z, c, out| {
        analytic::l1_active_set(z, c, 0.5, out, |s1, l| Ok(analytic::l1_half_shrinkage(s1, c, l)))
    })
}

/// (p, q) = (2, ⅔): hyperbolic solution of the resolvent cubic.
pub fn prox_2_twothirds(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(2.0, 2.0 / 3.0, "prox_2_twothirds")?;
    run(query, |z, c, out| Ok(analytic::two_thirds(z, c, out)))
}

/// (p, q) = (1, ⅔).
pub fn prox_1_twothirds(query: &ProxQuery) -> Result<ProxResult> {
    query.expect(1.0, 2.0 / 3.0, "prox_1_twothirds")?;
    run(query, |z, c, out| {
        analytic::l1_active_set(z, c, 2.0 / 3.0, out, |s1, l| {
            Ok(analytic::l1_two_thirds_shrinkage(s1, c, l))
        })
    })
}

/// Any p ∈ {1, 2} and 0 < q < 1, solving the first-order condition with a
/// safeguarded Newton iteration.
pub fn prox_generic(query: &ProxQuery) -> Result<ProxResult> {
    if !(query.q > 0.0 && query.q < 1.0) || !(query.p == 1.0 || query.p == 2.0) {
        return Err(Error::Precondition(format!(
            "prox_generic needs p in {{1, 2}} and 0 < q < 1, got ({}, {})",
            query.p, query.q
        )));
    }
    let (p, q) = (query.p, query.q);
    run(query, |z, c, out| generic_kernel(z, c, p, q, out))
}

fn generic_kernel(z: &[f64], c: f64, p: f64, q: f64, out: &mut [f64]) -> Result<bool> {
    if p == 2.0 {
        let n = norm2(z);
        let Some(t) = newton::largest_root(c * q, q, n)? else {
            return Ok(analytic::zero(out));
        };
        let cand_val = c * t.powf(q) + 0.5 * (n - t) * (n - t);
        if ties_zero(cand_val, 0.5 * n * n) {
            return Ok(analytic::zero(out));
        }
        let factor = t / n;
        for (o, zi) in out.iter_mut().zip(z) {
            *o = factor * zi;
        }
        Ok(false)
    } else {
        analytic::l1_active_set(z, c, q, out, |s1, l| {
            Ok(newton::largest_root(c * q * l as f64, q, s1)?.map(|t| (s1 - t) / l as f64))
        })
    }
}

/// Applies the operator for `penalty` with c = vλ to one group.
pub(crate) fn prox_kernel(z: &[f64], c: f64, penalty: &Penalty, out: &mut [f64]) -> Result<bool> {
    match penalty.kind() {
        ProxKind::TwoOne => Ok(analytic::soft(z, c, out)),
        ProxKind::TwoZero => Ok(analytic::hard(z, c, out)),
        ProxKind::TwoHalf => Ok(analytic::half(z, c, out)),
        ProxKind::TwoTwoThirds => Ok(analytic::two_thirds(z, c, out)),
        ProxKind::OneHalf => {
            analytic::l1_active_set(z, c, 0.5, out, |s1, l| Ok(analytic::l1_half_shrinkage(s1, c, l)))
        }
        ProxKind::OneTwoThirds => analytic::l1_active_set(z, c, 2.0 / 3.0, out, |s1, l| {
            Ok(analytic::l1_two_thirds_shrinkage(s1, c, l))
        }),
        ProxKind::Generic => generic_kernel(z, c, penalty.p(), penalty.q(), out),
    }
}

/// Dispatches a query to the closed form when one exists, otherwise Newton.
pub fn prox_dispatch(query: &ProxQuery) -> Result<ProxResult> {
    let penalty = Penalty::new(query.p, query.q)?;
    run(query, |z, c, out| prox_kernel(z, c, &penalty, out))
}

/// Writes the groupwise prox of `z` into `out` (sequential).
pub(crate) fn apply_into(
    z: &[f64],
    partition: &GroupPartition,
    c: f64,
    penalty: &Penalty,
    out: &mut [f64],
) -> Result<()> {
    for g in partition.groups() {
        prox_kernel(&z[g.clone()], c, penalty, &mut out[g])?;
    }
    Ok(())
}

fn check_apply_args(z: &[f64], partition: &GroupPartition, v: f64) -> Result<()> {
    partition.check_conforms(z.len(), "prox input vs partition")?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Precondition(format!("stepsize must be positive, got {v}")));
    }
    Ok(())
}

/// Groupwise proximal map of λ‖·‖_{p,q}^q with stepsize `v`.
pub fn prox_group_apply(
    z: &[f64],
    partition: &GroupPartition,
    v: f64,
    reg: &Regularizer,
) -> Result<DenseVector> {
    check_apply_args(z, partition, v)?;
    let mut out = vec![0.0; z.len()];
    apply_into(z, partition, v * reg.lambda(), &reg.penalty, &mut out)?;
    Ok(DenseVector::from_trusted(out))
}

/// Same as [`prox_group_apply`], evaluating groups on the rayon pool. Each
/// group writes to its own slice, so the result is bit-identical.
pub fn prox_group_apply_par(
    z: &[f64],
    partition: &GroupPartition,
    v: f64,
    reg: &Regularizer,
) -> Result<DenseVector> {
    check_apply_args(z, partition, v)?;
    let mut out = vec![0.0; z.len()];
    let mut slices: Vec<(&[f64], &mut [f64])> = Vec::with_capacity(partition.group_count());
    let mut rest: &mut [f64] = &mut out;
    for g in partition.groups() {
        let (head, tail) = rest.split_at_mut(g.len());
        slices.push((&z[g], head));
        rest = tail;
    }
    let c = v * reg.lambda();
    slices
        .into_par_iter()
        .try_for_each(|(zg, og)| prox_kernel(zg, c, &reg.penalty, og).map(|_| ()))?;
    Ok(DenseVector::from_trusted(out))
}

/// Group norm at or below which the p = 2 operator with exponent `q`
/// returns zero, for c = vλ:
/// ‖z‖ ≤ (2−q)/(2(1−q)) · (2c(1−q))^{1/(2−q)}  (c for q = 1).
pub fn p2_zero_threshold(q: f64, c: f64) -> f64 {
    if q >= 1.0 {
        c
    } else {
        (2.0 - q) / (2.0 * (1.0 - q)) * (2.0 * c * (1.0 - q)).powf(1.0 / (2.0 - q))
    }
}

/// Inverse of [`p2_zero_threshold`] in λ: the λ whose p = 2 zero threshold
/// equals `tau` at stepsize `v`.
pub fn p2_lambda_for_threshold(q: f64, tau: f64, v: f64) -> f64 {
    if q >= 1.0 {
        tau / v
    } else {
        (tau * 2.0 * (1.0 - q) / (2.0 - q)).powf(2.0 - q) / (2.0 * v * (1.0 - q))
    }
}
