//! Group structure, ℓ_{p,q} norms and the regularized least-squares objective
//!
//! F(x) = ‖Ax − b‖₂² + λ‖x‖_{p,q}^q.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};

/// A group counts as nonzero when its largest entry magnitude exceeds this.
pub const ZERO_GROUP_TOL: f64 = 1e-10;

/// Disjoint, ordered, contiguous groups covering `0..n`.
///
/// Arbitrary groupings given as per-column labels are brought into this form
/// by a column permutation, which is kept so results can be mapped back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    bounds: Vec<(usize, usize)>,
    n_max: usize,
    /// `permutation[k]` is the original column index stored at position `k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    permutation: Option<Vec<usize>>,
}

impl GroupPartition {
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidPartition("at least one group is required".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidPartition(format!("group {i} is empty")));
        }
        let mut bounds = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            bounds.push((start, start + s));
            start += s;
        }
        Ok(Self {
            bounds,
            n_max: sizes.iter().copied().max().unwrap_or(0),
            permutation: None,
        })
    }

    /// `r` groups of equal size `n / r`.
    pub fn equal(n: usize, r: usize) -> Result<Self> {
        if r == 0 || !n.is_multiple_of(r) {
            return Err(Error::InvalidPartition(format!("{r} groups do not divide {n} columns")));
        }
        Self::from_sizes(&vec![n / r; r])
    }

    /// Every coordinate in its own group.
    pub fn singletons(n: usize) -> Result<Self> {
        Self::from_sizes(&vec![1; n])
    }

    /// Builds a partition from per-column group labels `0..r`. Columns are
    /// reordered (stably) so each group becomes a contiguous block.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let r = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; r];
        for &l in labels {
            sizes[l] += 1;
        }
        let mut part = Self::from_sizes(&sizes)?;
        let mut permutation: Vec<usize> = (0..labels.len()).collect();
        permutation.sort_by_key(|&j| labels[j]);
        if permutation.iter().enumerate().any(|(k, &j)| k != j) {
            part.permutation = Some(permutation);
        }
        Ok(part)
    }

    /// Parses the JSON list-of-sizes format, e.g. `[8, 8, 8]`.
    pub fn from_json(text: &str) -> Result<Self> {
        let sizes: Vec<usize> = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("group file must be a JSON list of sizes: {e}")))?;
        Self::from_sizes(&sizes)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bounds.iter().map(|(s, e)| e - s).collect()
    }

    pub fn group_count(&self) -> usize {
        self.bounds.len()
    }

    pub fn dim(&self) -> usize {
        self.bounds.last().map_or(0, |b| b.1)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn group(&self, i: usize) -> Range<usize> {
        let (s, e) = self.bounds[i];
        s..e
    }

    pub fn groups(&self) -> impl ExactSizeIterator<Item = Range<usize>> + '_ {
        self.bounds.iter().map(|&(s, e)| s..e)
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref()
    }

    /// Reorders the columns of `a` into the partition's contiguous layout.
    pub fn permute_columns(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.permutation {
            Some(p) => a.select_columns(p),
            None => Ok(a.clone()),
        }
    }

    /// Maps a vector in contiguous layout back to the original column order.
    pub fn unpermute(&self, x: &[f64]) -> Vec<f64> {
        match &self.permutation {
            Some(p) => {
                let mut out = vec![0.0; x.len()];
                for (k, &j) in p.iter().enumerate() {
                    out[j] = x[k];
                }
                out
            }
            None => x.to_vec(),
        }
    }

    pub fn check_conforms(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Which proximal operator a (p, q) pair uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProxKind {
    /// p = 2, q = 1: group soft thresholding.
    TwoOne,
    /// p = 2, q = 0: group hard thresholding.
    TwoZero,
    /// p = 2, q = 1/2.
    TwoHalf,
    /// p = 1, q = 1/2.
    OneHalf,
    /// p = 2, q = 2/3.
    TwoTwoThirds,
    /// p = 1, q = 2/3.
    OneTwoThirds,
    /// p ∈ {1, 2}, 0 < q < 1 without a closed form: safeguarded Newton.
    Generic,
}

const ANALYTIC_MATCH_TOL: f64 = 1e-12;

/// A validated (p, q) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltyRepr", into = "PenaltyRepr")]
pub struct Penalty {
    p: f64,
    q: f64,
    kind: ProxKind,
}

#[derive(Serialize, Deserialize)]
struct PenaltyRepr {
    p: f64,
    q: f64,
}

impl TryFrom<PenaltyRepr> for Penalty {
    type Error = Error;

    fn try_from(r: PenaltyRepr) -> Result<Self> {
        Penalty::new(r.p, r.q)
    }
}

impl From<Penalty> for PenaltyRepr {
    fn from(p: Penalty) -> Self {
        PenaltyRepr { p: p.p, q: p.q }
    }
}

impl Penalty {
    pub const ANALYTIC: [(f64, f64); 6] = [
        (2.0, 1.0),
        (2.0, 0.0),
        (2.0, 0.5),
        (1.0, 0.5),
        (2.0, 2.0 / 3.0),
        (1.0, 2.0 / 3.0),
    ];

    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidRegularizer(format!("non-finite (p, q) = ({p}, {q})")));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= ANALYTIC_MATCH_TOL;
        let p_is = |v: f64| close(p, v);
        let kind = if p_is(2.0) && close(q, 1.0) {
            ProxKind::TwoOne
        } else if p_is(2.0) && q == 0.0 {
            ProxKind::TwoZero
        } else if p_is(2.0) && close(q, 0.5) {
            ProxKind::TwoHalf
        } else if p_is(1.0) && close(q, 0.5) {
            ProxKind::OneHalf
        } else if p_is(2.0) && close(q, 2.0 / 3.0) {
            ProxKind::TwoTwoThirds
        } else if p_is(1.0) && close(q, 2.0 / 3.0) {
            ProxKind::OneTwoThirds
        } else if (p_is(1.0) || p_is(2.0)) && q > 0.0 && q < 1.0 {
            ProxKind::Generic
        } else {
            return Err(Error::InvalidRegularizer(format!(
                "unsupported (p, q) = ({p}, {q}); need one of the six analytic pairs or p in {{1, 2}} with 0 < q < 1"
            )));
        };
        let (p, q) = match kind {
            ProxKind::TwoOne => (2.0, 1.0),
            ProxKind::TwoZero => (2.0, 0.0),
            ProxKind::TwoHalf => (2.0, 0.5),
            ProxKind::OneHalf => (1.0, 0.5),
            ProxKind::TwoTwoThirds => (2.0, 2.0 / 3.0),
            ProxKind::OneTwoThirds => (1.0, 2.0 / 3.0),
            ProxKind::Generic => (p.round(), q),
        };
        Ok(Self { p, q, kind })
    }

    /// All six pairs with closed-form proximal operators.
    pub fn analytic() -> Vec<Penalty> {
        Self::ANALYTIC
            .iter()
            .map(|&(p, q)| Penalty::new(p, q).expect("analytic pairs are valid"))
            .collect()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn kind(&self) -> ProxKind {
        self.kind
    }

    pub fn is_analytic(&self) -> bool {
        self.kind != ProxKind::Generic
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = match self.kind {
            ProxKind::TwoHalf | ProxKind::OneHalf => "1/2".to_string(),
            ProxKind::TwoTwoThirds | ProxKind::OneTwoThirds => "2/3".to_string(),
            _ => format!("{}", self.q),
        };
        write!(f, "l{},{}", self.p, q)
    }
}

/// A penalty together with its weight λ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub penalty: Penalty,
    lambda: f64,
}

impl Regularizer {
    pub fn new(p: f64, q: f64, lambda: f64) -> Result<Self> {
        Self::from_penalty(Penalty::new(p, q)?, lambda)
    }

    pub fn from_penalty(penalty: Penalty, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidRegularizer(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { penalty, lambda })
    }

    pub fn p(&self) -> f64 {
        self.penalty.p
    }

    pub fn q(&self) -> f64 {
        self.penalty.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> ProxKind {
        self.penalty.kind
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::from_penalty(self.penalty, lambda)
    }
}

/// Set of nonzero group indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupSupport(BTreeSet<usize>);

impl GroupSupport {
    pub fn new(indices: impl IntoIterator<Item = usize>, group_count: usize) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&i| i >= group_count) {
            return Err(Error::InvalidPartition(format!(
                "group index {bad} out of range for {group_count} groups"
            )));
        }
        Ok(Self(set))
    }

    /// Groups of `x` whose largest magnitude exceeds [`ZERO_GROUP_TOL`].
    pub fn of(x: &[f64], partition: &GroupPartition) -> Self {
        Self(
            partition
                .groups()
                .enumerate()
                .filter(|(_, g)| x[g.clone()].iter().any(|v| v.abs() > ZERO_GROUP_TOL))
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Indices of the groups not in the support.
    pub fn complement(&self, group_count: usize) -> Self {
        Self((0..group_count).filter(|i| !self.0.contains(i)).collect())
    }
}

/// The regularized least-squares problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub a: DenseMatrix,
    pub b: DenseVector,
    pub partition: GroupPartition,
    pub reg: Regularizer,
}

impl Problem {
    pub fn new(
        a: DenseMatrix,
        b: DenseVector,
        partition: GroupPartition,
        reg: Regularizer,
    ) -> Result<Self> {
        partition.check_conforms(a.cols(), "matrix columns vs partition")?;
        if a.rows() != b.len() {
            return Err(Error::DimensionMismatch {
                context: "matrix rows vs observation length",
                expected: a.rows(),
                actual: b.len(),
            });
        }
        Ok(Self { a, b, partition, reg })
    }

    pub fn with_regularizer(&self, reg: Regularizer) -> Self {
        Self { reg, ..self.clone() }
    }

    pub fn residual_sq(&self, x: &[f64]) -> Result<f64> {
        let ax = linalg::matvec(&self.a, x)?;
        Ok(ax.iter().zip(self.b.iter()).map(|(u, v)| (u - v) * (u - v)).sum())
    }
}

/// ℓ_p norm for p > 0 (a quasi-norm below 1).
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        linalg::norm2(x)
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn group_is_nonzero(g: &[f64]) -> bool {
    g.iter().any(|v| v.abs() > ZERO_GROUP_TOL)
}

/// Σᵢ ‖x_{Gᵢ}‖_p^q for q > 0, or the number of nonzero groups for q = 0.
pub fn lpq_penalty(x: &[f64], partition: &GroupPartition, p: f64, q: f64) -> Result<f64> {
    partition.check_conforms(x.len(), "vector vs partition")?;
    validate_pq(p, q)?;
    Ok(penalty_unchecked(x, partition, p, q))
}

pub(crate) fn penalty_unchecked(x: &[f64], partition: &GroupPartition, p: f64, q: f64) -> f64 {
    if q == 0.0 {
        partition.groups().filter(|g| group_is_nonzero(&x[g.clone()])).count() as f64
    } else if q == 1.0 {
        partition.groups().map(|g| lp_norm(&x[g], p)).sum()
    } else {
        partition.groups().map(|g| lp_norm(&x[g], p).powf(q)).sum()
    }
}

fn validate_pq(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0) || !(q >= 0.0) {
        return Err(Error::Precondition(format!("need p > 0 and q >= 0, got ({p}, {q})")));
    }
    Ok(())
}

/// ‖x‖_{p,q} = (Σᵢ ‖x_{Gᵢ}‖_p^q)^{1/q}; for q = 0, the count of nonzero groups.
pub fn lpq_norm(x: &[f64], partition: &GroupPartition, p: f64, q: f64) -> Result<f64> {
    let s = lpq_penalty(x, partition, p, q)?;
    Ok(if q == 0.0 || q == 1.0 { s } else { s.powf(1.0 / q) })
}

pub fn group_norms(x: &[f64], partition: &GroupPartition, p: f64) -> Result<DenseVector> {
    partition.check_conforms(x.len(), "vector vs partition")?;
    validate_pq(p, 1.0)?;
    Ok(DenseVector::from_trusted(
        partition.groups().map(|g| lp_norm(&x[g], p)).collect(),
    ))
}

/// F(x) = ‖Ax − b‖₂² + λ‖x‖_{p,q}^q.
pub fn objective(prob: &Problem, x: &[f64]) -> Result<f64> {
    let residual = prob.residual_sq(x)?;
    Ok(residual + prob.reg.lambda() * penalty_unchecked(x, &prob.partition, prob.reg.p(), prob.reg.q()))
}

/// Smallest integer K ≥ 1 with 2^{K−1} q ≥ 1.
pub fn smallest_k(q: f64) -> Result<u32> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Precondition(format!("smallest_k needs q > 0, got {q}")));
    }
    let mut k = 1u32;
    while 2f64.powi(k as i32 - 1) * q < 1.0 {
        k += 1;
    }
    Ok(k)
}
