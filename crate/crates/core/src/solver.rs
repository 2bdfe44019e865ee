//! Proximal gradient method for group sparse least squares
//!
//! ```text
//! z^k     = x^k − 2v Aᵀ(Ax^k − b)
//! x^{k+1} = P_{p,q}(z^k)   (groupwise prox with stepsize v)
//! ```
//!
//! with either a fixed λ or a λ re-chosen every iteration so that exactly S
//! groups survive the prox step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemv, gemv_t, norm2, spectral_norm, DenseVector};
use crate::model::{group_norms, objective, GroupPartition, GroupSupport, Problem, Regularizer};
use crate::prox::{self, p2_lambda_for_threshold, p2_zero_threshold};

/// Fraction of the largest admissible stepsize 1/(2‖A‖²) used by default.
pub const DEFAULT_STEP_FACTOR: f64 = 0.99;
/// Relative tolerance of the spectral norm used to pick the stepsize.
const SPECTRAL_TOL: f64 = 1e-12;
/// Relative nudge that keeps the (S+1)-th group strictly below the threshold.
const THRESHOLD_NUDGE: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed,
    TargetSparsity(usize),
}

/// Where the per-iteration threshold sits between the S-th and (S+1)-th
/// largest group norms of z^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// On the (S+1)-th norm itself, which the prox maps to zero. The shrinkage
    /// applied to the survivors vanishes as the iterates converge.
    #[default]
    NextLargest,
    /// Halfway between the S-th and (S+1)-th norms.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Defaults to 0.99/(2‖A‖²).
    pub stepsize: Option<f64>,
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub lambda_mode: LambdaMode,
    pub threshold_rule: ThresholdRule,
    /// Keep objective, support and iterate traces.
    pub record_history: bool,
    /// Evaluate the groupwise prox on the rayon pool.
    pub parallel_prox: bool,
    /// Starting point; zero when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            stepsize: None,
            max_iter: 10_000,
            x_tol: 1e-8,
            f_tol: 1e-12,
            lambda_mode: LambdaMode::Fixed,
            threshold_rule: ThresholdRule::NextLargest,
            record_history: false,
            parallel_prox: false,
            x0: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.x_tol >= 0.0) || !(self.f_tol >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be nonnegative".into()));
        }
        if let Some(v) = self.stepsize {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("stepsize must be positive, got {v}")));
            }
        }
        if self.lambda_mode == LambdaMode::TargetSparsity(0) {
            return Err(Error::InvalidConfig("target sparsity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_final: DenseVector,
    /// F(x^0), F(x^1), …; in target-sparsity mode F(x^k) uses the λ that
    /// produced x^k.
    pub objective_trace: Vec<f64>,
    pub support_trace: Vec<GroupSupport>,
    pub x_trace: Vec<DenseVector>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub lambda_used: f64,
    pub stepsize: f64,
    pub final_objective: f64,
}

/// 0.99/(2‖A‖²) or the configured stepsize, checked against v < 1/(2‖A‖²).
pub fn resolve_stepsize(prob: &Problem, cfg: &SolverConfig) -> Result<f64> {
    let norm = spectral_norm(&prob.a, SPECTRAL_TOL)?;
    let limit = 1.0 / (2.0 * norm * norm);
    match cfg.stepsize {
        None => Ok(DEFAULT_STEP_FACTOR * limit),
        Some(v) if v < limit => Ok(v),
        Some(v) => Err(Error::InvalidConfig(format!(
            "stepsize {v} violates v < 1/(2‖A‖²) = {limit}"
        ))),
    }
}

pub fn pgm_solve(prob: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let v = resolve_stepsize(prob, cfg)?;
    let (m, n) = (prob.a.rows(), prob.a.cols());
    let partition = &prob.partition;
    if let LambdaMode::TargetSparsity(s) = cfg.lambda_mode {
        if s >= partition.group_count() {
            return Err(Error::InvalidConfig(format!(
                "target sparsity {s} must be below the group count {}",
                partition.group_count()
            )));
        }
    }

    let mut x = match &cfg.x0 {
        Some(x0) => {
            partition.check_conforms(x0.len(), "initial point vs partition")?;
            DenseVector::new(x0.clone())?.into_vec()
        }
        None => vec![0.0; n],
    };
    let mut reg = prob.reg;
    let mut f = objective_with(prob, &reg, &x)?;

    let mut report = SolveReport {
        x_final: DenseVector::zeros(0),
        objective_trace: Vec::new(),
        support_trace: Vec::new(),
        x_trace: Vec::new(),
        iterations: 0,
        status: SolveStatus::MaxIter,
        lambda_used: reg.lambda(),
        stepsize: v,
        final_objective: f,
    };
    let record = |report: &mut SolveReport, x: &[f64], f: f64| {
        report.objective_trace.push(f);
        report.support_trace.push(GroupSupport::of(x, partition));
        report.x_trace.push(DenseVector::from_trusted(x.to_vec()));
    };
    if cfg.record_history {
        record(&mut report, &x, f);
    }

    let mut residual = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut x_next = vec![0.0; n];
    for k in 1..=cfg.max_iter {
        gemv(&prob.a, &x, &mut residual);
        residual.iter_mut().zip(prob.b.iter()).for_each(|(r, b)| *r -= b);
        gemv_t(&prob.a, &residual, &mut grad);
        for ((zi, xi), gi) in z.iter_mut().zip(&x).zip(&grad) {
            *zi = xi - 2.0 * v * gi;
        }
        if let LambdaMode::TargetSparsity(s) = cfg.lambda_mode {
            let lam = lambda_with_rule(&z, partition, v, &reg, s, cfg.threshold_rule)?;
            reg = reg.with_lambda(lam)?;
        }
        if cfg.parallel_prox {
            x_next.copy_from_slice(&prox::prox_group_apply_par(&z, partition, v, &reg)?);
        } else {
            prox::apply_into(&z, partition, v * reg.lambda(), &reg.penalty, &mut x_next)?;
        }
        if let Some(i) = x_next.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let f_next = objective_with(prob, &reg, &x_next)?;
        if !f_next.is_finite() {
            return Err(Error::Numerical(format!("objective became {f_next} at iteration {k}")));
        }

        let step: f64 = x_next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let x_ok = step <= cfg.x_tol * norm2(&x).max(1.0);
        let f_ok = (f_next - f).abs() <= cfg.f_tol * f.abs().max(1.0);
        std::mem::swap(&mut x, &mut x_next);
        f = f_next;
        report.iterations = k;
        if cfg.record_history {
            record(&mut report, &x, f);
        }
        if x_ok && f_ok {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.lambda_used = reg.lambda();
    report.final_objective = f;
    report.x_final = DenseVector::from_trusted(x);
    Ok(report)
}

fn objective_with(prob: &Problem, reg: &Regularizer, x: &[f64]) -> Result<f64> {
    if reg == &prob.reg {
        objective(prob, x)
    } else {
        objective(&prob.with_regularizer(*reg), x)
    }
}

/// λ for which the prox of `z` keeps exactly `s` groups, using the default
/// [`ThresholdRule`].
pub fn lambda_from_target_sparsity(
    z: &[f64],
    partition: &GroupPartition,
    v: f64,
    reg: &Regularizer,
    s: usize,
) -> Result<f64> {
    lambda_with_rule(z, partition, v, reg, s, ThresholdRule::default())
}

pub fn lambda_with_rule(
    z: &[f64],
    partition: &GroupPartition,
    v: f64,
    reg: &Regularizer,
    s: usize,
    rule: ThresholdRule,
) -> Result<f64> {
    partition.check_conforms(z.len(), "prox input vs partition")?;
    let r = partition.group_count();
    if s == 0 || s >= r {
        return Err(Error::Precondition(format!("target sparsity must lie in 1..{r}, got {s}")));
    }
    if !(v > 0.0) {
        return Err(Error::Precondition(format!("stepsize must be positive, got {v}")));
    }
    let q = reg.q();
    if reg.p() == 2.0 {
        let mut norms = group_norms(z, partition, 2.0)?.into_vec();
        norms.sort_by(|a, b| b.total_cmp(a));
        let (upper, lower) = (norms[s - 1], norms[s]);
        let tau = match rule {
            ThresholdRule::NextLargest => lower,
            ThresholdRule::Midpoint => 0.5 * (upper + lower),
        };
        let floor = THRESHOLD_NUDGE * upper.max(f64::MIN_POSITIVE);
        let tau = (tau * (1.0 + THRESHOLD_NUDGE)).max(floor);
        return Ok(p2_lambda_for_threshold(q, tau, v));
    }

    // p = 1: each group has its own critical λ at which the prox zeroes it,
    // so rank those instead of the norms.
    let mut crit = partition
        .groups()
        .map(|g| l1_critical_lambda(&z[g], v, reg))
        .collect::<Result<Vec<_>>>()?;
    crit.sort_by(|a, b| b.total_cmp(a));
    let (upper, lower) = (crit[s - 1], crit[s]);
    let lam = match rule {
        ThresholdRule::NextLargest => lower * (1.0 + THRESHOLD_NUDGE),
        ThresholdRule::Midpoint => 0.5 * (upper + lower),
    };
    Ok(lam.max(THRESHOLD_NUDGE * upper).max(f64::MIN_POSITIVE))
}

/// Smallest λ at which the p = 1 prox maps `zg` to zero, by bisection. It
/// lies in [λ₂ / l^{q/2}, λ₂], where λ₂ is the p = 2 value for ‖zg‖₂.
fn l1_critical_lambda(zg: &[f64], v: f64, reg: &Regularizer) -> Result<f64> {
    let n2 = norm2(zg);
    if n2 == 0.0 {
        return Ok(0.0);
    }
    let q = reg.q();
    let hi_lam = p2_lambda_for_threshold(q, n2, v);
    let mut hi = hi_lam * (1.0 + 1e-9);
    let mut lo = hi_lam / (zg.len() as f64).powf(q / 2.0) * (1.0 - 1e-9);
    let mut out = vec![0.0; zg.len()];
    let zeroes = |lam: f64, out: &mut [f64]| prox::prox_kernel(zg, v * lam, &reg.penalty, out);
    if !zeroes(hi, &mut out)? {
        return Err(Error::Numerical("p = 1 critical lambda above its bracket".into()));
    }
    if zeroes(lo, &mut out)? {
        return Ok(lo);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if zeroes(mid, &mut out)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Group ℓ₂ norm at or below which the p = 2 prox with stepsize `v` zeroes a group.
pub fn zero_threshold(reg: &Regularizer, v: f64) -> f64 {
    p2_zero_threshold(reg.q(), v * reg.lambda())
}

/// First index of the support trace after which the support never changes;
/// `report.iterations` when no trace was recorded.
pub fn support_stabilization_iter(report: &SolveReport) -> usize {
    let trace = &report.support_trace;
    let Some(last) = trace.last() else {
        return report.iterations;
    };
    trace.iter().rposition(|s| s != last).map_or(0, |i| i + 1)
}

/// Noise floor added to the decrements before taking logs.
pub const RATE_FIT_FLOOR: f64 = 1e-15;

/// Fits F_k − F_{k+1} ≈ C η^k by least squares on log(F_k − F_{k+1} + ε)
/// over the trailing `tail_fraction` of the trace. Returns (η, R²); R² is 0
/// for a degenerate (constant) fit.
pub fn linear_rate_fit(objective_trace: &[f64], tail_fraction: f64) -> Result<(f64, f64)> {
    if objective_trace.len() < 20 {
        return Err(Error::Precondition(format!(
            "rate fit needs at least 20 trace values, got {}",
            objective_trace.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Precondition(format!("tail fraction must lie in (0, 1], got {tail_fraction}")));
    }
    if let Some(i) = objective_trace.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let dec: Vec<f64> = objective_trace.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let take = ((dec.len() as f64 * tail_fraction).ceil() as usize).clamp(2, dec.len());
    let start = dec.len() - take;
    let pts: Vec<(f64, f64)> = (start..dec.len())
        .map(|k| (k as f64, (dec[k] + RATE_FIT_FLOOR).ln()))
        .collect();
    let nf = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy <= 1e-300 { 0.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok((slope.exp(), r2))
}

/// True iff every nonzero group of every recorded iterate has ℓ₁ norm at
/// least (vλq(1−q))^{1/(2−q)} − 1e-10. Only meaningful for p = 1, 0 < q < 1
/// with a fixed λ.
pub fn nonzero_group_lower_bound_check(report: &SolveReport, prob: &Problem, v: f64) -> Result<bool> {
    let (p, q) = (prob.reg.p(), prob.reg.q());
    if p != 1.0 || !(q > 0.0 && q < 1.0) {
        return Err(Error::Precondition(format!(
            "lower-bound check needs p = 1 and 0 < q < 1, got ({p}, {q})"
        )));
    }
    let bound = (v * prob.reg.lambda() * q * (1.0 - q)).powf(1.0 / (2.0 - q)) - 1e-10;
    for x in &report.x_trace {
        let norms = group_norms(x, &prob.partition, 1.0)?;
        if norms.iter().any(|&nrm| nrm > 0.0 && nrm < bound) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn example_22(lambda: f64) -> Problem {
        let a = DenseMatrix::from_rows(&[vec![2.0, 3.0, 1.0], vec![2.0, 1.0, 3.0]]).unwrap();
        Problem::new(
            a,
            DenseVector::new(vec![2.0, 2.0]).unwrap(),
            GroupPartition::singletons(3).unwrap(),
            Regularizer::new(2.0, 1.0, lambda).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn example_22_l1_optimum() {
        let cfg = SolverConfig { stepsize: Some(0.01), record_history: true, ..Default::default() };
        let rep = pgm_solve(&example_22(0.5), &cfg).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!((rep.final_objective - (0.5 - 0.25 / 32.0)).abs() < 1e-6, "{}", rep.final_objective);
        assert!(support_stabilization_iter(&rep) < rep.iterations);
    }

    #[test]
    fn zero_rhs_stops_after_one_iteration() {
        let mut prob = example_22(0.3);
        prob.b = DenseVector::zeros(2);
        let rep = pgm_solve(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.x_final.as_slice(), &[0.0; 3]);
    }

    #[test]
    fn oversized_stepsize_is_rejected() {
        // ‖A‖² = 24, so v must be below 1/48.
        let cfg = SolverConfig { stepsize: Some(1.0 / 48.0), ..Default::default() };
        assert!(matches!(pgm_solve(&example_22(0.5), &cfg), Err(Error::InvalidConfig(_))));
        let cfg = SolverConfig { max_iter: 0, ..Default::default() };
        assert!(pgm_solve(&example_22(0.5), &cfg).is_err());
    }

    #[test]
    fn threshold_rules_on_ranked_norms() {
        let part = GroupPartition::singletons(3).unwrap();
        let z = [5.0, -3.0, 1.0];
        let reg = Regularizer::new(2.0, 1.0, 1.0).unwrap();
        let lam = lambda_with_rule(&z, &part, 1.0, &reg, 2, ThresholdRule::Midpoint).unwrap();
        assert!((lam - 2.0).abs() < 1e-9);
        let reg0 = Regularizer::new(2.0, 0.0, 1.0).unwrap();
        let lam = lambda_with_rule(&z, &part, 0.5, &reg0, 1, ThresholdRule::Midpoint).unwrap();
        assert!((lam - 16.0).abs() < 1e-9);
        let lam = lambda_with_rule(&z, &part, 0.5, &reg0, 1, ThresholdRule::NextLargest).unwrap();
        assert!((lam - 9.0).abs() < 1e-9);
        for (q, s) in [(1.0, 1), (0.0, 2), (0.5, 1), (2.0 / 3.0, 2)] {
            for rule in [ThresholdRule::NextLargest, ThresholdRule::Midpoint] {
                let reg = Regularizer::new(2.0, q, 1.0).unwrap();
                let lam = lambda_with_rule(&z, &part, 0.5, &reg, s, rule).unwrap();
                let x = prox::prox_group_apply(&z, &part, 0.5, &reg.with_lambda(lam).unwrap()).unwrap();
                assert_eq!(GroupSupport::of(&x, &part).len(), s, "q={q} s={s} {rule:?}");
            }
        }
    }

    #[test]
    fn l1_target_sparsity_keeps_exactly_s() {
        let part = GroupPartition::equal(12, 4).unwrap();
        let z = [3.0, 0.1, -0.2, 0.5, 0.5, 0.5, 2.0, -2.0, 0.0, 0.01, 0.02, -0.03];
        for q in [0.5, 2.0 / 3.0, 0.3] {
            let reg = Regularizer::new(1.0, q, 1.0).unwrap();
            for s in 1..4 {
                for rule in [ThresholdRule::NextLargest, ThresholdRule::Midpoint] {
                    let lam = lambda_with_rule(&z, &part, 0.5, &reg, s, rule).unwrap();
                    let x = prox::prox_group_apply(&z, &part, 0.5, &reg.with_lambda(lam).unwrap()).unwrap();
                    assert_eq!(GroupSupport::of(&x, &part).len(), s, "q={q} s={s} {rule:?}");
                }
            }
        }
    }

    #[test]
    fn target_sparsity_with_zero_group() {
        let part = GroupPartition::singletons(3).unwrap();
        let reg = Regularizer::new(2.0, 0.5, 1.0).unwrap();
        let z = [2.0, 1.0, 0.0];
        let lam = lambda_from_target_sparsity(&z, &part, 1.0, &reg, 2).unwrap();
        assert!(lam > 0.0);
        let x = prox::prox_group_apply(&z, &part, 1.0, &reg.with_lambda(lam).unwrap()).unwrap();
        assert_eq!(GroupSupport::of(&x, &part).len(), 2);
        assert!(lambda_from_target_sparsity(&z, &part, 1.0, &reg, 3).is_err());
        assert!(lambda_from_target_sparsity(&z, &part, 1.0, &reg, 0).is_err());
    }

    #[test]
    fn stabilization_index() {
        let mk = |sets: &[&[usize]]| SolveReport {
            x_final: DenseVector::zeros(0),
            objective_trace: vec![],
            support_trace: sets.iter().map(|s| GroupSupport::new(s.iter().copied(), 3).unwrap()).collect(),
            x_trace: vec![],
            iterations: sets.len() - 1,
            status: SolveStatus::Converged,
            lambda_used: 1.0,
            stepsize: 1.0,
            final_objective: 0.0,
        };
        assert_eq!(support_stabilization_iter(&mk(&[&[1, 2], &[1], &[1], &[1]])), 1);
        assert_eq!(support_stabilization_iter(&mk(&[&[1], &[1], &[1]])), 0);
        assert_eq!(support_stabilization_iter(&mk(&[&[1], &[2]])), 1);
    }

    #[test]
    fn rate_fit_examples() {
        let geo: Vec<f64> = (0..60).map(|k| 2.0 * 0.5f64.powi(k) + 3.0).collect();
        let (eta, r2) = linear_rate_fit(&geo[..30], 0.5).unwrap();
        // The 1e-15 floor biases the smallest decrements slightly.
        assert!((eta - 0.5).abs() < 1e-7 && (r2 - 1.0).abs() < 1e-9, "{eta} {r2}");
        let (eta, r2) = linear_rate_fit(&[1.0; 30], 0.5).unwrap();
        assert_eq!((eta, r2), (1.0, 0.0));
        assert!(linear_rate_fit(&[1.0; 10], 0.5).is_err());
        assert!(linear_rate_fit(&[1.0; 30], 0.0).is_err());
    }

    #[test]
    fn lower_bound_check_controls() {
        let a = DenseMatrix::identity(2);
        let prob = Problem::new(
            a,
            DenseVector::new(vec![1.0, 1.0]).unwrap(),
            GroupPartition::singletons(2).unwrap(),
            Regularizer::new(1.0, 0.5, 0.1).unwrap(),
        )
        .unwrap();
        let mut rep = pgm_solve(&prob, &SolverConfig { record_history: true, ..Default::default() }).unwrap();
        assert!(nonzero_group_lower_bound_check(&rep, &prob, rep.stepsize).unwrap());
        rep.x_trace = vec![DenseVector::zeros(2)];
        assert!(nonzero_group_lower_bound_check(&rep, &prob, rep.stepsize).unwrap());
        rep.x_trace = vec![DenseVector::new(vec![1e-6, 0.0]).unwrap()];
        assert!(!nonzero_group_lower_bound_check(&rep, &prob, rep.stepsize).unwrap());
        let bad = prob.with_regularizer(Regularizer::new(2.0, 0.5, 0.1).unwrap());
        assert!(nonzero_group_lower_bound_check(&rep, &bad, 0.1).is_err());
    }
}
