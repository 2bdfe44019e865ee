//! Checks of the recovery theory: sampled upper bounds on the group
//! restricted eigenvalue constant, cone membership, the oracle inequality,
//! global and local recovery bounds, and a brute-force global minimiser for
//! tiny problems.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemv, gram_inverse_norm, norm2, DenseMatrix, DenseVector};
use crate::model::{
    group_norms, lp_norm, objective, penalty_unchecked, smallest_k, GroupPartition, GroupSupport, Problem,
};
use crate::simlab::stream;
use crate::solver::{pgm_solve, SolverConfig};

/// Largest group count for which all index sets |J| ≤ S are enumerated.
pub const GREC_MAX_GROUPS: usize = 16;
/// Largest grid accepted by [`global_min_small`].
pub const GLOBAL_MIN_MAX_NODES: f64 = 1e8;
/// Grid points kept for local polishing in [`global_min_small`].
const GLOBAL_MIN_STARTS: usize = 16;
const REDRAW_LIMIT: usize = 64;

/// Indices of groups sorted by decreasing norm, ties broken by lower index.
fn ranked(norms: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    idx
}

fn sum_pow(norms: &[f64], idx: &[usize], q: f64) -> f64 {
    idx.iter().map(|&i| norms[i].powf(q)).sum()
}

/// Whether ‖x_{G_{J^c}}‖_{p,q} ≤ ‖x_{G_J}‖_{p,q} for some |J| ≤ s. The set of
/// the s largest groups is the best candidate, so only it is tested.
pub fn cone_membership(x: &[f64], partition: &GroupPartition, p: f64, q: f64, s: usize) -> Result<bool> {
    let r = partition.group_count();
    if s == 0 || s >= r {
        return Err(Error::Precondition(format!("cone size must lie in 1..{r}, got {s}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Precondition(format!("cone exponent must lie in (0, 1], got {q}")));
    }
    let norms = group_norms(x, partition, p)?.into_vec();
    let order = ranked(&norms);
    Ok(sum_pow(&norms, &order[s..], q) <= sum_pow(&norms, &order[..s], q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrecQuery {
    pub a: DenseMatrix,
    pub partition: GroupPartition,
    pub p: f64,
    pub q: f64,
    pub s: usize,
    pub n: usize,
    pub samples: usize,
    pub refine_steps: usize,
    pub seed: u64,
    /// Directions evaluated before any sampling (known witnesses).
    #[serde(default)]
    pub candidates: Vec<DenseVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrecEstimate {
    pub phi_upper: f64,
    pub witness: DenseVector,
    /// The index set J (the s largest groups of the witness).
    pub witness_index_set: GroupSupport,
}

/// ‖Ax‖₂ / ‖x_{G_N}‖_{p,2} with N the s + n largest groups, or ∞ when x
/// is outside the cone or zero on N.
pub fn grec_ratio(a: &DenseMatrix, partition: &GroupPartition, p: f64, q: f64, s: usize, n: usize, x: &[f64]) -> f64 {
    let norms: Vec<f64> = partition.groups().map(|g| lp_norm(&x[g], p)).collect();
    let order = ranked(&norms);
    if sum_pow(&norms, &order[s..], q) > sum_pow(&norms, &order[..s], q) {
        return f64::INFINITY;
    }
    let keep = (s + n).min(norms.len());
    let denom = order[..keep].iter().map(|&i| norms[i] * norms[i]).sum::<f64>().sqrt();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    let mut ax = vec![0.0; a.rows()];
    gemv(a, x, &mut ax);
    norm2(&ax) / denom
}

fn index_sets(r: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, r: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if left == 0 {
            return;
        }
        for i in start..r {
            cur.push(i);
            rec(i + 1, r, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, r, s, &mut Vec::new(), &mut out);
    out
}

/// Sampled upper bound on φ_{p,q}(S, N). For each index set J with
/// 1 ≤ |J| ≤ S: Gaussian directions are pushed into the cone by rescaling
/// their J-block, truncated to J as a second candidate, and the best few
/// are polished by a shrinking coordinate search on the ratio.
pub fn grec_estimate(query: &GrecQuery) -> Result<GrecEstimate> {
    let part = &query.partition;
    let r = part.group_count();
    part.check_conforms(query.a.cols(), "matrix columns vs partition")?;
    if r > GREC_MAX_GROUPS {
        return Err(Error::InvalidConfig(format!(
            "GREC estimation enumerates index sets and supports at most {GREC_MAX_GROUPS} groups, got {r}"
        )));
    }
    if query.s == 0 || query.s > query.n || query.s >= r {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= S <= N and S < r, got S = {}, N = {}, r = {r}",
            query.s, query.n
        )));
    }
    if query.samples == 0 {
        return Err(Error::InvalidConfig("samples must be at least 1".into()));
    }
    if !(query.q > 0.0 && query.q <= 1.0) || !(query.p >= 1.0 && query.p <= 2.0) {
        return Err(Error::InvalidConfig(format!(
            "GREC needs 0 < q <= 1 <= p <= 2, got ({}, {})",
            query.p, query.q
        )));
    }
    for c in &query.candidates {
        part.check_conforms(c.len(), "candidate direction vs partition")?;
    }
    let ratio = |x: &[f64]| grec_ratio(&query.a, part, query.p, query.q, query.s, query.n, x);

    let sets = index_sets(r, query.s);
    let per_set: Vec<(f64, Vec<f64>)> = sets
        .par_iter()
        .enumerate()
        .map(|(k, set)| {
            let mut rng = stream(query.seed, k, 0);
            let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
            for _ in 0..query.samples {
                let Some(x) = draw_in_cone(&mut rng, part, set, query.p, query.q) else {
                    continue;
                };
                let mut trunc = vec![0.0; x.len()];
                for &i in set {
                    let g = part.group(i);
                    trunc[g.clone()].copy_from_slice(&x[g]);
                }
                for cand in [x, trunc] {
                    let val = ratio(&cand);
                    if val.is_finite() {
                        pool.push((val, cand));
                    }
                }
            }
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            pool.truncate(4);
            pool.into_iter()
                .map(|(val, x)| refine(&ratio, x, val, query.refine_steps))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap_or((f64::INFINITY, Vec::new()))
        })
        .collect();

    let mut best: (f64, Vec<f64>) = (f64::INFINITY, Vec::new());
    for c in &query.candidates {
        let val = ratio(c);
        if val < best.0 {
            best = refine(&ratio, c.to_vec(), val, query.refine_steps);
        }
    }
    for cand in per_set {
        if cand.0 < best.0 {
            best = cand;
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numerical("no feasible GREC direction was found".into()));
    }
    let norms = group_norms(&best.1, part, query.p)?.into_vec();
    let order = ranked(&norms);
    Ok(GrecEstimate {
        phi_upper: best.0,
        witness_index_set: GroupSupport::new(order[..query.s].iter().copied(), r)?,
        witness: DenseVector::from_trusted(best.1),
    })
}

fn draw_in_cone(rng: &mut impl Rng, part: &GroupPartition, set: &[usize], p: f64, q: f64) -> Option<Vec<f64>> {
    for _ in 0..REDRAW_LIMIT {
        let mut x: Vec<f64> = (0..part.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let norms: Vec<f64> = part.groups().map(|g| lp_norm(&x[g], p)).collect();
        let inside: f64 = set.iter().map(|&i| norms[i].powf(q)).sum();
        if inside == 0.0 {
            continue;
        }
        let outside = norms.iter().map(|v| v.powf(q)).sum::<f64>() - inside;
        if outside > inside {
            // Scale the J-block so both sides are equal, with a hair of room.
            let t = (outside / inside).powf(1.0 / q) * (1.0 + 1e-12);
            for &i in set {
                x[part.group(i)].iter_mut().for_each(|v| *v *= t);
            }
        }
        return Some(x);
    }
    None
}

fn refine(ratio: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut val: f64, steps: usize) -> (f64, Vec<f64>) {
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 || !val.is_finite() {
        return (val, x);
    }
    let mut h = 0.1 * scale;
    for _ in 0..steps {
        let mut improved = false;
        for j in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[j];
                x[j] = old + dir * h;
                let cand = ratio(&x);
                if cand < val {
                    val = cand;
                    improved = true;
                } else {
                    x[j] = old;
                }
            }
        }
        if !improved {
            h *= 0.5;
            if h < 1e-15 * scale {
                break;
            }
        }
    }
    (val, x)
}

/// RHS − LHS of the oracle inequality
///
/// ‖Ax − Ax̄‖² + λ‖x_{G_{S^c}}‖_{p,q}^q ≤ λ^{2/(2−q)} S^{(1−2^{−K})·2/(2−q)} / φ^{2q/(2−q)}
///
/// for x in the level set F(x) ≤ λ‖x̄‖_{p,q}^q.
pub fn oracle_inequality_gap(prob: &Problem, xbar: &[f64], x: &[f64], phi: f64) -> Result<f64> {
    let part = &prob.partition;
    part.check_conforms(xbar.len(), "true solution vs partition")?;
    part.check_conforms(x.len(), "point vs partition")?;
    let (p, q, lam) = (prob.reg.p(), prob.reg.q(), prob.reg.lambda());
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Precondition(format!("oracle inequality needs 0 < q <= 1, got {q}")));
    }
    if !(phi > 0.0) {
        return Err(Error::Precondition(format!("phi must be positive, got {phi}")));
    }
    let level = lam * penalty_unchecked(xbar, part, p, q);
    let f = objective(prob, x)?;
    if f > level * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "point is outside the level set: F(x) = {f} > {level}"
        )));
    }
    let support = GroupSupport::of(xbar, part);
    let s = support.len() as f64;
    let mut off = vec![0.0; x.len()];
    for i in support.complement(part.group_count()).iter() {
        let g = part.group(i);
        off[g.clone()].copy_from_slice(&x[g]);
    }
    let mut diff: Vec<f64> = x.iter().zip(xbar).map(|(a, b)| a - b).collect();
    let mut adiff = vec![0.0; prob.a.rows()];
    gemv(&prob.a, &diff, &mut adiff);
    diff.clear();
    let lhs = adiff.iter().map(|v| v * v).sum::<f64>() + lam * penalty_unchecked(&off, part, p, q);
    let k = smallest_k(q)? as i32;
    let e = 2.0 / (2.0 - q);
    let rhs = lam.powf(e) * s.powf((1.0 - 2f64.powi(-k)) * e) / phi.powf(q * e);
    Ok(rhs - lhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub lambda: f64,
    pub s: usize,
    pub p: f64,
    pub q: f64,
    /// Smallest K with 2^{K−1} q ≥ 1.
    pub k: u32,
    pub phi: f64,
    /// Columns of A on the true support (local bound only).
    pub b: Option<DenseMatrix>,
    /// Nonzero groups of the true solution (local bound only).
    pub xbar_groups: Vec<DenseVector>,
}

impl BoundInputs {
    pub fn global(lambda: f64, s: usize, q: f64, phi: f64) -> Result<Self> {
        Ok(Self { lambda, s, p: 2.0, q, k: smallest_k(q)?, phi, b: None, xbar_groups: Vec::new() })
    }
}

/// 2λ^{2/(2−q)} S^{(q−2)/q + (1−2^{−K})·4/(q(2−q))} / φ^{4/(2−q)}.
pub fn global_recovery_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs { lambda, s, q, k, phi, .. } = *inputs;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Precondition(format!("global bound needs 0 < q <= 1, got {q}")));
    }
    if !(phi > 0.0) {
        return Err(Error::Precondition(format!("phi must be positive, got {phi}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be nonnegative, got {lambda}")));
    }
    if k != smallest_k(q)? {
        return Err(Error::Precondition(format!("K = {k} does not match q = {q}")));
    }
    let s_exp = (q - 2.0) / q + (1.0 - 2f64.powi(-(k as i32))) * 4.0 / (q * (2.0 - q));
    Ok(2.0 * lambda.powf(2.0 / (2.0 - q)) * (s as f64).powf(s_exp) / phi.powf(4.0 / (2.0 - q)))
}

/// λ² q² S ‖(BᵀB)⁻¹‖² max_i ‖x̄_{G_i}‖_p^{2(q−p)} Σ_j |x̄_j|^{2p−2}.
pub fn local_recovery_bound(inputs: &BoundInputs) -> Result<f64> {
    let (lam, p, q) = (inputs.lambda, inputs.p, inputs.q);
    if !(lam >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be nonnegative, got {lam}")));
    }
    let b = inputs
        .b
        .as_ref()
        .ok_or_else(|| Error::Precondition("local bound needs the support columns B".into()))?;
    if inputs.xbar_groups.is_empty() {
        return Err(Error::Precondition("local bound needs the nonzero groups of the true solution".into()));
    }
    let mut worst: f64 = 0.0;
    for g in &inputs.xbar_groups {
        if g.is_empty() || g.contains(&0.0) {
            return Err(Error::Precondition("every listed group must be fully active".into()));
        }
        let factor = lp_norm(g, p).powf(2.0 * (q - p)) * g.iter().map(|v| v.abs().powf(2.0 * p - 2.0)).sum::<f64>();
        worst = worst.max(factor);
    }
    let ginv = gram_inverse_norm(b)?;
    Ok(lam * lam * q * q * inputs.s as f64 * ginv * ginv * worst)
}

/// 2(‖x̄‖_∞ + ‖b‖₂), the box half-width used by [`global_min_small`].
pub fn default_radius(xbar: &[f64], b: &[f64]) -> f64 {
    2.0 * (xbar.iter().map(|v| v.abs()).fold(0.0, f64::max) + norm2(b))
}

/// Brute-force global minimiser of F for n ≤ 4: evaluates F on the grid
/// {−R, −R + h, …}ⁿ, then polishes the best grid points with `refine`
/// proximal gradient steps and returns the best point seen.
pub fn global_min_small(prob: &Problem, radius: f64, grid_step: f64, refine: usize) -> Result<DenseVector> {
    let n = prob.a.cols();
    if n == 0 || n > 4 {
        return Err(Error::InvalidConfig(format!("global_min_small supports 1 to 4 unknowns, got {n}")));
    }
    if !(radius > 0.0) || !(grid_step > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidConfig("radius and grid step must be positive".into()));
    }
    let per_dim = (2.0 * radius / grid_step).floor() + 1.0;
    if per_dim.powi(n as i32) > GLOBAL_MIN_MAX_NODES {
        return Err(Error::InvalidConfig(format!(
            "grid of {:.3e} nodes exceeds the limit of {GLOBAL_MIN_MAX_NODES:e}",
            per_dim.powi(n as i32)
        )));
    }
    let per_dim = per_dim as usize;

    let mut best: Vec<(f64, Vec<f64>)> = Vec::with_capacity(2 * GLOBAL_MIN_STARTS);
    let mut idx = vec![0usize; n];
    let mut x = vec![-radius; n];
    let mut ax = vec![0.0; prob.a.rows()];
    let (p, q, lam) = (prob.reg.p(), prob.reg.q(), prob.reg.lambda());
    loop {
        gemv(&prob.a, &x, &mut ax);
        let res: f64 = ax.iter().zip(prob.b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
        let f = res + lam * penalty_unchecked(&x, &prob.partition, p, q);
        if best.len() < GLOBAL_MIN_STARTS || f < best[best.len() - 1].0 {
            best.push((f, x.clone()));
            best.sort_by(|a, b| a.0.total_cmp(&b.0));
            best.truncate(GLOBAL_MIN_STARTS);
        }
        let mut j = 0;
        loop {
            if j == n {
                return polish(prob, best, refine);
            }
            idx[j] += 1;
            if idx[j] < per_dim {
                x[j] = -radius + idx[j] as f64 * grid_step;
                break;
            }
            idx[j] = 0;
            x[j] = -radius;
            j += 1;
        }
    }
}

fn polish(prob: &Problem, starts: Vec<(f64, Vec<f64>)>, refine: usize) -> Result<DenseVector> {
    let (mut best_f, mut best_x) = starts[0].clone();
    if refine > 0 {
        for (_, x0) in starts {
            let cfg = SolverConfig { max_iter: refine, x0: Some(x0), x_tol: 0.0, f_tol: 0.0, ..Default::default() };
            let rep = pgm_solve(prob, &cfg)?;
            if rep.final_objective < best_f {
                best_f = rep.final_objective;
                best_x = rep.x_final.into_vec();
            }
        }
    }
    Ok(DenseVector::from_trusted(best_x))
}
