//! Simulated recovery experiments: random instances with orthonormal-row
//! Gaussian designs and group sparse ground truth, success-rate tables,
//! group-size and q sweeps, solution-path scores and ROC AUC.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! (master seed, trial, purpose), so results do not depend on scheduling.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matvec, norm2, orthonormalize_rows, DenseMatrix, DenseVector};
use crate::model::{GroupPartition, GroupSupport, Penalty, Problem, Regularizer};
use crate::solver::{pgm_solve, LambdaMode, SolverConfig};

/// Relative error below which a trial counts as a successful recovery.
pub const SUCCESS_THRESHOLD: f64 = 0.005;
const ORTHONORMALIZE_RETRIES: u64 = 3;

// Stream purposes.
const MATRIX: u64 = 0;
const SUPPORT: u64 = 1;
const VALUES: u64 = 2;
const NOISE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub m: usize,
    /// Number of groups, all of size n / r.
    pub r: usize,
    pub active_groups: usize,
    pub noise_sigma: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl SimSpec {
    /// Desk-scale defaults: n = 256, m = 64, 32 groups of 8, 50 trials.
    pub fn desk(active_groups: usize, master_seed: u64) -> Self {
        Self { n: 256, m: 64, r: 32, active_groups, noise_sigma: 0.001, trials: 50, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.r == 0 {
            return Err(Error::InvalidConfig("n, m and the group count must be positive".into()));
        }
        if !self.n.is_multiple_of(self.r) {
            return Err(Error::InvalidConfig(format!("{} groups do not divide n = {}", self.r, self.n)));
        }
        if self.active_groups > self.r {
            return Err(Error::InvalidConfig(format!(
                "{} active groups exceed the {} available",
                self.active_groups, self.r
            )));
        }
        if self.m > self.n {
            return Err(Error::InvalidConfig(format!("m = {} exceeds n = {}", self.m, self.n)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("noise sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.n / self.r
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::equal(self.n, self.r)
    }
}

/// A generated instance; attach a regularizer with [`Instance::problem`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: DenseMatrix,
    pub b: DenseVector,
    pub partition: GroupPartition,
    pub xbar: DenseVector,
}

impl Instance {
    pub fn problem(&self, reg: Regularizer) -> Result<Problem> {
        Problem::new(self.a.clone(), self.b.clone(), self.partition.clone(), reg)
    }
}

pub fn stream(master_seed: u64, trial: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((trial as u64) << 8) | purpose);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate_instance(spec: &SimSpec, trial: usize) -> Result<Instance> {
    spec.validate()?;
    let partition = spec.partition()?;
    let mut a = None;
    for attempt in 0..=ORTHONORMALIZE_RETRIES {
        let mut rng = stream(spec.master_seed, trial, MATRIX + 16 * attempt);
        let g = DenseMatrix::new(spec.m, spec.n, gaussian_vec(&mut rng, spec.m * spec.n))?;
        match orthonormalize_rows(&g) {
            Ok(q) => {
                a = Some(q);
                break;
            }
            Err(Error::DependentRows { .. }) if attempt < ORTHONORMALIZE_RETRIES => continue,
            Err(e) => return Err(e),
        }
    }
    let a = a.expect("loop returns or assigns");

    let mut rng = stream(spec.master_seed, trial, SUPPORT);
    let mut active = rand::seq::index::sample(&mut rng, spec.r, spec.active_groups).into_vec();
    active.sort_unstable();
    let mut rng = stream(spec.master_seed, trial, VALUES);
    let mut xbar = vec![0.0; spec.n];
    for &i in &active {
        for x in &mut xbar[partition.group(i)] {
            *x = rng.sample(StandardNormal);
        }
    }

    let mut b = matvec(&a, &xbar)?.into_vec();
    let mut rng = stream(spec.master_seed, trial, NOISE);
    let noise = gaussian_vec(&mut rng, spec.m);
    if spec.noise_sigma > 0.0 {
        b.iter_mut().zip(&noise).for_each(|(bi, e)| *bi += spec.noise_sigma * e);
    }
    Ok(Instance {
        a,
        b: DenseVector::from_trusted(b),
        partition,
        xbar: DenseVector::from_trusted(xbar),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub relative_error: f64,
    pub success: bool,
    pub iterations: usize,
    pub runtime_secs: f64,
    /// Solver failure, if any; such trials count as unsuccessful.
    pub error: Option<String>,
}

pub fn relative_error(x: &[f64], xbar: &[f64]) -> f64 {
    let diff: f64 = x.iter().zip(xbar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let nb = norm2(xbar);
    if nb == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / nb
    }
}

/// Solves `inst` in target-sparsity mode with `s_target` groups.
pub fn run_trial(inst: &Instance, trial: usize, penalty: Penalty, s_target: usize, base: &SolverConfig) -> TrialResult {
    let start = Instant::now();
    let cfg = SolverConfig { lambda_mode: LambdaMode::TargetSparsity(s_target), ..base.clone() };
    let outcome = Regularizer::from_penalty(penalty, 1.0)
        .and_then(|reg| inst.problem(reg))
        .and_then(|prob| pgm_solve(&prob, &cfg));
    let runtime_secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(rep) => {
            let relative_error = relative_error(&rep.x_final, &inst.xbar);
            TrialResult {
                trial,
                relative_error,
                success: relative_error < SUCCESS_THRESHOLD,
                iterations: rep.iterations,
                runtime_secs,
                error: None,
            }
        }
        Err(e) => TrialResult {
            trial,
            relative_error: f64::INFINITY,
            success: false,
            iterations: 0,
            runtime_secs,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub penalty: Penalty,
    pub success_rate: f64,
    /// Mean over trials whose solve did not fail.
    pub mean_relative_error: f64,
    pub failures: usize,
    pub trials: Vec<TrialResult>,
}

impl KindSummary {
    fn from_trials(penalty: Penalty, trials: Vec<TrialResult>) -> Self {
        let ok: Vec<f64> = trials.iter().filter(|t| t.error.is_none()).map(|t| t.relative_error).collect();
        Self {
            penalty,
            success_rate: trials.iter().filter(|t| t.success).count() as f64 / trials.len() as f64,
            mean_relative_error: if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 },
            failures: trials.len() - ok.len(),
            trials,
        }
    }

    /// Two-sigma binomial half-width of the success rate.
    pub fn band(&self) -> f64 {
        binomial_band(self.success_rate, self.trials.len())
    }
}

pub fn binomial_band(rate: f64, trials: usize) -> f64 {
    2.0 * (rate * (1.0 - rate) / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub spec: SimSpec,
    pub s_target: usize,
    pub rows: Vec<KindSummary>,
}

impl RecoveryTable {
    pub fn row(&self, penalty: &Penalty) -> Option<&KindSummary> {
        self.rows.iter().find(|r| &r.penalty == penalty)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_tables_csv(std::slice::from_ref(self), writer)
    }
}

/// Several tables under a single header, e.g. the output of a sweep.
pub fn write_tables_csv<W: Write>(tables: &[RecoveryTable], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["p", "q", "active_groups", "group_size", "trials", "success_rate", "mean_relative_error", "failures"])?;
    for table in tables {
        for row in &table.rows {
            w.write_record([
                row.penalty.p().to_string(),
                row.penalty.q().to_string(),
                table.spec.active_groups.to_string(),
                table.spec.group_size().to_string(),
                row.trials.len().to_string(),
                row.success_rate.to_string(),
                row.mean_relative_error.to_string(),
                row.failures.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Success rates per penalty, solving each trial in target-sparsity mode
/// with `s_target` groups (the true count when `None`). Trials run on the
/// rayon pool; each uses only its own streams.
pub fn recovery_rate_experiment(
    spec: &SimSpec,
    kinds: &[Penalty],
    s_target: Option<usize>,
    solver: &SolverConfig,
) -> Result<RecoveryTable> {
    spec.validate()?;
    let s = s_target.unwrap_or(spec.active_groups);
    if s == 0 || s >= spec.r {
        return Err(Error::InvalidConfig(format!(
            "target sparsity must lie in 1..{}, got {s}",
            spec.r
        )));
    }
    let per_trial: Vec<Vec<TrialResult>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let inst = generate_instance(spec, t)?;
            Ok(kinds.iter().map(|&k| run_trial(&inst, t, k, s, solver)).collect())
        })
        .collect::<Result<_>>()?;
    let rows = kinds
        .iter()
        .enumerate()
        .map(|(j, &k)| KindSummary::from_trials(k, per_trial.iter().map(|row| row[j].clone()).collect()))
        .collect();
    Ok(RecoveryTable { spec: spec.clone(), s_target: s, rows })
}

/// Re-runs the experiment for each group size at the template's total
/// number of nonzero entries: active groups = round(entries / size), at
/// least 1.
pub fn group_size_sweep(
    template: &SimSpec,
    sizes: &[usize],
    kinds: &[Penalty],
    solver: &SolverConfig,
) -> Result<Vec<RecoveryTable>> {
    template.validate()?;
    let entries = template.active_groups * template.group_size();
    sizes
        .iter()
        .map(|&g| {
            if g == 0 || !template.n.is_multiple_of(g) {
                return Err(Error::InvalidConfig(format!("group size {g} does not divide n = {}", template.n)));
            }
            let r = template.n / g;
            let active = ((entries as f64 / g as f64).round() as usize).max(1);
            let spec = SimSpec { r, active_groups: active, ..template.clone() };
            recovery_rate_experiment(&spec, kinds, None, solver)
        })
        .collect()
}

/// One row per q. Exponents without a closed form use the Newton prox.
pub fn q_sweep(
    spec: &SimSpec,
    p: f64,
    q_grid: &[f64],
    s_target: Option<usize>,
    solver: &SolverConfig,
) -> Result<RecoveryTable> {
    let kinds = q_grid.iter().map(|&q| Penalty::new(p, q)).collect::<Result<Vec<_>>>()?;
    recovery_rate_experiment(spec, &kinds, s_target, solver)
}

/// (target, k, message) of a failed solve.
pub type PathFailure = (usize, usize, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    /// `scores[group][target]` ∈ {0} ∪ {1/k}.
    pub scores: Vec<Vec<f64>>,
    /// Failed solves; those count as all-zero.
    pub failures: Vec<PathFailure>,
}

impl PathScore {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let targets = self.scores.first().map_or(0, Vec::len);
        let mut header = vec!["group".to_string()];
        header.extend((0..targets).map(|j| format!("target_{j}")));
        w.write_record(&header)?;
        for (i, row) in self.scores.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each right-hand side, solves with target sparsity k = 1..=k_max and
/// scores each group by max{1/k : the group is nonzero at sparsity k}.
pub fn solution_path_scores(
    a: &DenseMatrix,
    rhs: &[DenseVector],
    partition: &GroupPartition,
    penalty: Penalty,
    k_max: usize,
    solver: &SolverConfig,
) -> Result<PathScore> {
    let r = partition.group_count();
    if k_max == 0 || k_max >= r {
        return Err(Error::InvalidConfig(format!("k_max must lie in 1..{r}, got {k_max}")));
    }
    let reg = Regularizer::from_penalty(penalty, 1.0)?;
    let columns: Vec<(Vec<f64>, Vec<PathFailure>)> = rhs
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            let prob = Problem::new(a.clone(), b.clone(), partition.clone(), reg)?;
            let mut col = vec![0.0; r];
            let mut failures = Vec::new();
            for k in 1..=k_max {
                let cfg = SolverConfig { lambda_mode: LambdaMode::TargetSparsity(k), ..solver.clone() };
                match pgm_solve(&prob, &cfg) {
                    Ok(rep) => {
                        for i in GroupSupport::of(&rep.x_final, partition).iter() {
                            if col[i] == 0.0 {
                                col[i] = 1.0 / k as f64;
                            }
                        }
                    }
                    Err(e) => failures.push((j, k, e.to_string())),
                }
            }
            Ok((col, failures))
        })
        .collect::<Result<_>>()?;
    let mut scores = vec![vec![0.0; rhs.len()]; r];
    let mut failures = Vec::new();
    for (j, (col, fails)) in columns.into_iter().enumerate() {
        for i in 0..r {
            scores[i][j] = col[i];
        }
        failures.extend(fails);
    }
    Ok(PathScore { scores, failures })
}

/// Area under the ROC curve via the rank statistic, with tied scores
/// sharing their average rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "scores vs labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { index: i });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Precondition("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Twice the rank sum keeps tied averages integral.
    let mut rank_sum2 = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u64;
        rank_sum2 += avg2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let (p, n) = (pos as u64, neg as u64);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        // Positives {0.9, 0.35} against negatives {0.4, 0.8}: 0.9 wins both
        // pairs, 0.35 loses both.
        let auc = roc_auc(&[0.9, 0.4, 0.35, 0.8], &[true, false, true, false]).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.85, 0.8], &[true, false, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6, 0.8], &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.2, 0.2, 0.2], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn instance_contracts() {
        let spec = SimSpec { n: 32, m: 12, r: 8, active_groups: 2, noise_sigma: 0.0, trials: 1, master_seed: 7 };
        let inst = generate_instance(&spec, 3).unwrap();
        let res = matvec(&inst.a, &inst.xbar).unwrap();
        let gap: f64 = res.iter().zip(inst.b.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert_eq!(gap, 0.0);
        assert_eq!(GroupSupport::of(&inst.xbar, &inst.partition).len(), 2);
        assert_eq!(generate_instance(&spec, 3).unwrap(), inst);
        assert_ne!(generate_instance(&spec, 4).unwrap().xbar, inst.xbar);
        let aat = inst.a.matmul(&inst.a.transpose()).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((aat[(i, j)] - want).abs() < 1e-12);
            }
        }

        let empty = SimSpec { active_groups: 0, noise_sigma: 0.5, ..spec.clone() };
        let inst = generate_instance(&empty, 0).unwrap();
        assert!(inst.xbar.iter().all(|&x| x == 0.0));
        assert!(inst.b.norm2() > 0.0);
    }

    #[test]
    fn spec_validation() {
        let ok = SimSpec::desk(2, 1);
        assert!(ok.validate().is_ok());
        assert!(SimSpec { r: 30, ..ok.clone() }.validate().is_err());
        assert!(SimSpec { active_groups: 40, ..ok.clone() }.validate().is_err());
        assert!(SimSpec { trials: 0, ..ok.clone() }.validate().is_err());
    }

    #[test]
    fn path_scores_follow_first_activation() {
        // Identity design: the support at sparsity k is the k largest groups.
        let a = DenseMatrix::identity(4);
        let part = GroupPartition::singletons(4).unwrap();
        let b = DenseVector::new(vec![4.0, 0.0, 2.0, 3.0]).unwrap();
        let pen = Penalty::new(2.0, 0.5).unwrap();
        let s = solution_path_scores(&a, &[b], &part, pen, 3, &SolverConfig::default()).unwrap();
        let col: Vec<f64> = s.scores.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![1.0, 0.0, 1.0 / 3.0, 0.5]);
        assert!(s.failures.is_empty());
    }
}
