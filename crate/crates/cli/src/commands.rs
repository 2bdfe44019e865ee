use std::fs;

use clap::Args;
use lpq_core::analysis::{self, BoundInputs, GrecQuery};
use lpq_core::linalg::{read_matrix, read_vector_csv, write_vector_csv, DenseMatrix, DenseVector};
use lpq_core::model::{GroupPartition, GroupSupport, Penalty, Problem, Regularizer};
use lpq_core::prox::{prox_dispatch, ProxQuery};
use lpq_core::simlab::{self, write_tables_csv, SimSpec};
use lpq_core::solver::{pgm_solve, LambdaMode, SolverConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{exponent, kinds, numbers, require};
use crate::error::{CliError, CliResult, WithPath};
use crate::output::Provenance;

fn provenance<T: Serialize>(subcommand: &'static str, params: &T, seed: Option<u64>) -> Provenance {
    Provenance { subcommand, config: serde_json::to_value(params).expect("params serialize"), seed }
}

fn matrix(path: &str) -> CliResult<DenseMatrix> {
    read_matrix(path.as_ref()).with_path(path)
}

fn vector(path: &str) -> CliResult<DenseVector> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("{path}: {e}")))?;
    read_vector_csv(bytes.as_slice()).with_path(path)
}

/// The JSON list-of-sizes file, or singleton groups when absent.
fn partition(path: Option<&str>, cols: usize) -> CliResult<GroupPartition> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("{p}: {e}")))?;
            let part = GroupPartition::from_json(&text).with_path(p)?;
            part.check_conforms(cols, "matrix columns vs partition")?;
            Ok(part)
        }
        None => Ok(GroupPartition::singletons(cols)?),
    }
}

fn json_line(value: &serde_json::Value) -> Vec<u8> {
    (serde_json::to_string_pretty(value).expect("json serializes") + "\n").into_bytes()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> lpq_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    f(&mut out)?;
    Ok(out)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProxEvalArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Stepsize
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Group entries, comma separated
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

pub fn prox_eval(a: ProxEvalArgs) -> CliResult<()> {
    let z = numbers(&require(&a.z, "z")?, "z")?;
    let query = ProxQuery::new(
        DenseVector::new(z)?,
        require(&a.v, "v")?,
        require(&a.lambda, "lambda")?,
        require(&a.p, "p")?,
        exponent(require(&a.q, "q")?),
    )?;
    let r = prox_dispatch(&query)?;
    let mut header: Vec<String> = (0..r.x.len()).map(|i| format!("x{i}")).collect();
    header.push("objective".into());
    let mut row: Vec<String> = r.x.iter().map(f64::to_string).collect();
    row.push(r.objective_value.to_string());
    let text = format!("{}\n{}\n", header.join(","), row.join(","));
    provenance("prox-eval", &a, None).emit(a.out.as_deref(), text.as_bytes())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SolveArgs {
    /// CSV or MatrixMarket matrix
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    rhs: Option<String>,
    /// JSON list of group sizes; singleton groups when absent
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Target number of nonzero groups (replaces --lambda)
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative step tolerance
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    f_tol: Option<f64>,
    #[arg(long)]
    stepsize: Option<f64>,
    /// x_final as CSV
    #[arg(long)]
    out: Option<String>,
    /// Run summary as JSON; printed to stdout regardless
    #[arg(long)]
    summary: Option<String>,
    /// Objective and support per iteration
    #[arg(long)]
    trace: Option<String>,
}

pub fn solve(a: SolveArgs) -> CliResult<()> {
    let p = require(&a.p, "p")?;
    let q = exponent(require(&a.q, "q")?);
    let (mode, lambda) = match (a.lambda, a.sparsity) {
        (Some(_), Some(_)) => return Err(CliError::config("--lambda and --sparsity conflict")),
        (Some(l), None) => (LambdaMode::Fixed, l),
        (None, Some(s)) => (LambdaMode::TargetSparsity(s), 1.0),
        (None, None) => return Err(CliError::config("one of --lambda or --sparsity is required")),
    };
    let reg = Regularizer::new(p, q, lambda)?;
    let mat = matrix(&require(&a.matrix, "matrix")?)?;
    let b = vector(&require(&a.rhs, "rhs")?)?;
    let part = partition(a.groups.as_deref(), mat.cols())?;
    let prob = Problem::new(mat, b, part.clone(), reg)?;

    let defaults = SolverConfig::default();
    let cfg = SolverConfig {
        stepsize: a.stepsize,
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        x_tol: a.tol.unwrap_or(defaults.x_tol),
        f_tol: a.f_tol.unwrap_or(defaults.f_tol),
        lambda_mode: mode,
        record_history: a.trace.is_some(),
        ..defaults
    };
    let rep = pgm_solve(&prob, &cfg)?;
    let prov = provenance("solve", &a, None);

    let summary = json!({
        "iterations": rep.iterations,
        "status": rep.status,
        "final_objective": rep.final_objective,
        "lambda_used": rep.lambda_used,
        "stepsize": rep.stepsize,
        "support": GroupSupport::of(&rep.x_final, &part),
        "x_final": rep.x_final,
    });
    let bytes = json_line(&summary);
    if let Some(path) = &a.out {
        prov.write(path, &csv_bytes(|w| write_vector_csv(w, &rep.x_final))?)?;
    }
    if let Some(path) = &a.trace {
        let mut text = String::from("iteration,objective,support\n");
        for (k, (f, s)) in rep.objective_trace.iter().zip(&rep.support_trace).enumerate() {
            let groups: Vec<String> = s.iter().map(|i| i.to_string()).collect();
            text.push_str(&format!("{k},{f},{}\n", groups.join(" ")));
        }
        prov.write(path, text.as_bytes())?;
    }
    if let Some(path) = &a.summary {
        prov.write(path, &bytes)?;
    }
    prov.emit(None, &bytes)
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimArgs {
    /// Signal length [default: 256]
    #[arg(long)]
    n: Option<usize>,
    /// Measurements [default: 64]
    #[arg(long)]
    m: Option<usize>,
    /// Number of equal groups [default: 32]
    #[arg(long)]
    groups_count: Option<usize>,
    /// Active groups in the true signal
    #[arg(long)]
    active: Option<usize>,
    /// Noise standard deviation [default: 0.001]
    #[arg(long)]
    sigma: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    trials: Option<usize>,
    /// Groups kept by the solver; the true count when absent
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; stdout when absent
    #[arg(long)]
    out: Option<String>,
}

impl SimArgs {
    fn spec(&self) -> CliResult<SimSpec> {
        let seed = self.seed.ok_or_else(|| CliError::config("experiments need an explicit --seed"))?;
        let spec = SimSpec {
            n: self.n.unwrap_or(256),
            m: self.m.unwrap_or(64),
            r: self.groups_count.unwrap_or(32),
            active_groups: require(&self.active, "active")?,
            noise_sigma: self.sigma.unwrap_or(0.001),
            trials: self.trials.unwrap_or(50),
            master_seed: seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn solver(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig { max_iter: self.max_iter.unwrap_or(d.max_iter), ..d }
    }
}

fn penalties(text: Option<&str>) -> CliResult<Vec<Penalty>> {
    match text {
        None => Ok(Penalty::analytic()),
        Some(t) => kinds(t)?.into_iter().map(|(p, q)| Penalty::new(p, q).map_err(CliError::from)).collect(),
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sim: SimArgs,
    /// Penalties as p,q pairs separated by ';' [default: all six analytic]
    #[arg(long)]
    kinds: Option<String>,
}

pub fn bench_recovery(a: BenchArgs) -> CliResult<()> {
    let spec = a.sim.spec()?;
    let table = simlab::recovery_rate_experiment(&spec, &penalties(a.kinds.as_deref())?, a.sim.sparsity, &a.sim.solver())?;
    let bytes = csv_bytes(|w| table.write_csv(w))?;
    provenance("bench-recovery", &a, a.sim.seed).emit(a.sim.out.as_deref(), &bytes)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepGroupsizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sim: SimArgs,
    #[arg(long)]
    kinds: Option<String>,
    /// Group sizes, comma separated
    #[arg(long)]
    sizes: Option<String>,
}

pub fn sweep_groupsize(a: SweepGroupsizeArgs) -> CliResult<()> {
    if a.sim.sparsity.is_some() {
        return Err(CliError::config("sweep-groupsize keeps the true group count; drop --sparsity"));
    }
    let spec = a.sim.spec()?;
    let sizes = numbers(&require(&a.sizes, "sizes")?, "sizes")?
        .into_iter()
        .map(|s| if s >= 1.0 && s.fract() == 0.0 { Ok(s as usize) } else { Err(CliError::config(format!("bad group size {s}"))) })
        .collect::<CliResult<Vec<_>>>()?;
    let tables = simlab::group_size_sweep(&spec, &sizes, &penalties(a.kinds.as_deref())?, &a.sim.solver())?;
    let bytes = csv_bytes(|w| write_tables_csv(&tables, w))?;
    provenance("sweep-groupsize", &a, a.sim.seed).emit(a.sim.out.as_deref(), &bytes)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepQArgs {
    #[command(flatten)]
    #[serde(flatten)]
    sim: SimArgs,
    /// [default: 2]
    #[arg(long)]
    p: Option<f64>,
    /// Exponents, comma separated
    #[arg(long)]
    q_grid: Option<String>,
}

pub fn sweep_q(a: SweepQArgs) -> CliResult<()> {
    let spec = a.sim.spec()?;
    let grid: Vec<f64> = numbers(&require(&a.q_grid, "q-grid")?, "q-grid")?.into_iter().map(exponent).collect();
    let table = simlab::q_sweep(&spec, a.p.unwrap_or(2.0), &grid, a.sim.sparsity, &a.sim.solver())?;
    let bytes = csv_bytes(|w| table.write_csv(w))?;
    provenance("sweep-q", &a, a.sim.seed).emit(a.sim.out.as_deref(), &bytes)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GrecArgs {
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long = "S")]
    #[serde(rename = "S")]
    s: Option<usize>,
    /// [default: S]
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<usize>,
    /// Random directions per index set [default: 200]
    #[arg(long)]
    samples: Option<usize>,
    /// Compass-search steps per kept direction [default: 50]
    #[arg(long)]
    refine_steps: Option<usize>,
    /// Extra directions to evaluate, entries comma separated, vectors ';' separated
    #[arg(long, allow_hyphen_values = true)]
    candidates: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

pub fn grec_estimate(a: GrecArgs) -> CliResult<()> {
    let seed = a.seed.ok_or_else(|| CliError::config("grec-estimate needs an explicit --seed"))?;
    let mat = matrix(&require(&a.matrix, "matrix")?)?;
    let part = partition(a.groups.as_deref(), mat.cols())?;
    let s = require(&a.s, "S")?;
    let candidates = match &a.candidates {
        None => Vec::new(),
        Some(t) => t
            .split(';')
            .filter(|c| !c.trim().is_empty())
            .map(|c| Ok(DenseVector::new(numbers(c, "candidates")?)?))
            .collect::<CliResult<_>>()?,
    };
    let est = analysis::grec_estimate(&GrecQuery {
        a: mat,
        partition: part,
        p: require(&a.p, "p")?,
        q: exponent(require(&a.q, "q")?),
        s,
        n: a.n.unwrap_or(s),
        samples: a.samples.unwrap_or(200),
        refine_steps: a.refine_steps.unwrap_or(50),
        seed,
        candidates,
    })?;
    let bytes = json_line(&serde_json::to_value(&est).expect("estimate serializes"));
    provenance("grec-estimate", &a, Some(seed)).emit(a.out.as_deref(), &bytes)
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoundsArgs {
    /// global or local
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of nonzero groups; counted from --xbar in local mode when absent
    #[arg(long = "S")]
    #[serde(rename = "S")]
    s: Option<usize>,
    /// [default: 2]
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Restricted eigenvalue constant (global mode)
    #[arg(long)]
    phi: Option<f64>,
    /// Matrix (local mode)
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    /// True solution (local mode)
    #[arg(long)]
    xbar: Option<String>,
}

pub fn bounds(a: BoundsArgs) -> CliResult<()> {
    let lambda = require(&a.lambda, "lambda")?;
    let q = exponent(require(&a.q, "q")?);
    let value = match require(&a.mode, "mode")?.as_str() {
        "global" => {
            let inputs = BoundInputs::global(lambda, require(&a.s, "S")?, q, require(&a.phi, "phi")?)?;
            analysis::global_recovery_bound(&inputs)?
        }
        "local" => {
            let mat = matrix(&require(&a.matrix, "matrix")?)?;
            let part = partition(a.groups.as_deref(), mat.cols())?;
            let xbar = vector(&require(&a.xbar, "xbar")?)?;
            part.check_conforms(xbar.len(), "true solution vs partition")?;
            let support = GroupSupport::of(&xbar, &part);
            let columns: Vec<usize> = support.iter().flat_map(|i| part.group(i)).collect();
            let inputs = BoundInputs {
                lambda,
                s: a.s.unwrap_or(support.len()),
                p: a.p.unwrap_or(2.0),
                q,
                k: lpq_core::model::smallest_k(q)?,
                phi: a.phi.unwrap_or(f64::NAN),
                b: Some(mat.select_columns(&columns)?),
                xbar_groups: support.iter().map(|i| DenseVector::new(xbar[part.group(i)].to_vec())).collect::<Result<_, _>>()?,
            };
            analysis::local_recovery_bound(&inputs)?
        }
        other => return Err(CliError::config(format!("--mode must be global or local, got {other:?}"))),
    };
    println!("{value}");
    Ok(())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Figure1Args {
    /// lo:hi:steps, log-spaced and inclusive [default: 1e-4:0.5:5]
    #[arg(long)]
    lambda_grid: Option<String>,
    /// [default: 0.05]
    #[arg(long)]
    grid_step: Option<f64>,
    /// Polishing iterations per grid candidate [default: 2000]
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

fn log_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::config(format!("lambda grid must be lo:hi:steps with 0 < lo <= hi, got {text:?}"));
    let [lo, hi, steps] = parts.as_slice() else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo) || steps == 0 {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (steps - 1) as f64;
    Ok((0..steps).map(|i| if i + 1 == steps { hi } else { lo * (ratio * i as f64).exp() }).collect())
}

pub fn figure1(a: Figure1Args) -> CliResult<()> {
    let grid = log_grid(a.lambda_grid.as_deref().unwrap_or("1e-4:0.5:5"))?;
    let mat = DenseMatrix::from_rows(&[vec![2.0, 3.0, 1.0], vec![2.0, 1.0, 3.0]])?;
    let b = DenseVector::new(vec![2.0, 2.0])?;
    let xbar = [1.0, 0.0, 0.0];
    let mut text = String::from("lambda,error_sq,bound\n");
    for lam in grid {
        let prob = Problem::new(mat.clone(), b.clone(), GroupPartition::singletons(3)?, Regularizer::new(2.0, 0.5, lam)?)?;
        let radius = analysis::default_radius(&xbar, &prob.b);
        let x = analysis::global_min_small(&prob, radius, a.grid_step.unwrap_or(0.05), a.refine.unwrap_or(2000))?;
        let err2: f64 = x.iter().zip(&xbar).map(|(u, v)| (u - v) * (u - v)).sum();
        text.push_str(&format!("{lam},{err2},{}\n", 2.0 * lam.powf(4.0 / 3.0)));
    }
    provenance("figure1", &a, None).emit(a.out.as_deref(), text.as_bytes())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PathScoresArgs {
    #[arg(long)]
    matrix: Option<String>,
    /// Matrix whose columns are the right-hand sides
    #[arg(long)]
    rhs: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Largest target sparsity on the path
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// 0/1 matrix, one row per group and one column per right-hand side
    #[arg(long)]
    labels: Option<String>,
    /// Per-target ROC AUC against --labels
    #[arg(long)]
    auc_out: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

pub fn path_scores(a: PathScoresArgs) -> CliResult<()> {
    let mat = matrix(&require(&a.matrix, "matrix")?)?;
    let rhs_path = require(&a.rhs, "rhs")?;
    let rhs = matrix(&rhs_path)?;
    if rhs.rows() != mat.rows() {
        return Err(CliError::config(format!("{rhs_path}: {} rows, the matrix has {}", rhs.rows(), mat.rows())));
    }
    let part = partition(a.groups.as_deref(), mat.cols())?;
    let labels = match (&a.labels, &a.auc_out) {
        (Some(l), Some(_)) => {
            let m = matrix(l)?;
            if m.rows() != part.group_count() || m.cols() != rhs.cols() {
                return Err(CliError::config(format!("{l}: expected {}x{} labels", part.group_count(), rhs.cols())));
            }
            Some(m)
        }
        (None, None) => None,
        _ => return Err(CliError::config("--labels and --auc-out go together")),
    };
    let penalty = Penalty::new(require(&a.p, "p")?, exponent(require(&a.q, "q")?))?;
    let t = rhs.transpose();
    let columns: Vec<DenseVector> = (0..t.rows()).map(|j| DenseVector::new(t.row(j).to_vec())).collect::<Result<_, _>>()?;
    let d = SolverConfig::default();
    let solver = SolverConfig { max_iter: a.max_iter.unwrap_or(d.max_iter), ..d };
    let scores = simlab::solution_path_scores(&mat, &columns, &part, penalty, require(&a.k_max, "k-max")?, &solver)?;
    for (j, k, msg) in &scores.failures {
        eprintln!("lpq: target {j}, sparsity {k}: {msg}");
    }
    let prov = provenance("path-scores", &a, None);
    if let (Some(lab), Some(path)) = (&labels, &a.auc_out) {
        let mut text = String::from("target,auc\n");
        for j in 0..lab.cols() {
            let s: Vec<f64> = scores.scores.iter().map(|row| row[j]).collect();
            let l: Vec<bool> = (0..lab.rows()).map(|i| lab.row(i)[j] != 0.0).collect();
            text.push_str(&format!("{j},{}\n", simlab::roc_auc(&s, &l)?));
        }
        prov.write(path, text.as_bytes())?;
    }
    let bytes = csv_bytes(|w| scores.write_csv(w))?;
    prov.emit(a.out.as_deref(), &bytes)
}
