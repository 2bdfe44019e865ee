use lpq_core::linalg::{matvec, transpose_matvec, DenseMatrix, DenseVector};
use lpq_core::model::*;
use lpq_core::prox::prox_group_apply;
use lpq_core::simlab::{generate_instance, relative_error, Instance, SimSpec};
use lpq_core::solver::*;
use proptest::prelude::*;

const PAIRS: [(f64, f64); 6] = [(2.0, 1.0), (2.0, 0.0), (2.0, 0.5), (1.0, 0.5), (2.0, 2.0 / 3.0), (1.0, 2.0 / 3.0)];

fn instance(seed: u64, sigma: f64) -> Instance {
    let spec = SimSpec { n: 32, m: 16, r: 8, active_groups: 2, noise_sigma: sigma, trials: 1, master_seed: seed };
    generate_instance(&spec, 0).unwrap()
}

/// One proximal gradient step from x.
fn step(prob: &Problem, x: &[f64], v: f64) -> DenseVector {
    let ax = matvec(&prob.a, x).unwrap();
    let r: Vec<f64> = ax.iter().zip(prob.b.iter()).map(|(a, b)| a - b).collect();
    let g = transpose_matvec(&prob.a, &r).unwrap();
    let z: Vec<f64> = x.iter().zip(g.iter()).map(|(xi, gi)| xi - 2.0 * v * gi).collect();
    prox_group_apply(&z, &prob.partition, v, &prob.reg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_never_rises(seed in 0u64..10_000, pair in 0usize..6, lam in 0.001f64..0.2) {
        let (p, q) = PAIRS[pair];
        let prob = instance(seed, 0.01).problem(Regularizer::new(p, q, lam).unwrap()).unwrap();
        let rep = pgm_solve(&prob, &SolverConfig { record_history: true, max_iter: 400, ..Default::default() }).unwrap();
        for w in rep.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn converged_point_is_fixed(seed in 0u64..10_000, pair in 0usize..6) {
        let (p, q) = PAIRS[pair];
        let prob = instance(seed, 0.0).problem(Regularizer::new(p, q, 0.05).unwrap()).unwrap();
        let cfg = SolverConfig::default();
        let rep = pgm_solve(&prob, &cfg).unwrap();
        prop_assume!(rep.status == SolveStatus::Converged);
        let next = step(&prob, &rep.x_final, rep.stepsize);
        let moved = next.iter().zip(rep.x_final.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(moved <= 10.0 * cfg.x_tol * rep.x_final.norm2().max(1.0), "moved {moved}");
    }
}

#[test]
fn stationary_on_nonzero_groups() {
    for seed in 0..6 {
        let inst = instance(seed, 0.0);
        for &(p, q) in &[(2.0, 0.5), (2.0, 2.0 / 3.0)] {
            let prob = inst.problem(Regularizer::new(p, q, 0.05).unwrap()).unwrap();
            let rep = pgm_solve(&prob, &SolverConfig { x_tol: 1e-12, f_tol: 0.0, ..Default::default() }).unwrap();
            let x = rep.x_final.as_slice();
            let ax = matvec(&prob.a, x).unwrap();
            let r: Vec<f64> = ax.iter().zip(prob.b.iter()).map(|(a, b)| a - b).collect();
            let g = transpose_matvec(&prob.a, &r).unwrap();
            for grp in prob.partition.groups() {
                let n = lp_norm(&x[grp.clone()], 2.0);
                if n <= ZERO_GROUP_TOL {
                    continue;
                }
                for j in grp {
                    let res = 2.0 * g[j] + 0.05 * q * n.powf(q - 2.0) * x[j];
                    assert!(res.abs() <= 1e-6, "seed {seed} q {q}: residual {res:e}");
                }
            }
        }
    }
}

#[test]
fn l1_optimum_on_small_example() {
    let a = DenseMatrix::from_rows(&[vec![2.0, 3.0, 1.0], vec![2.0, 1.0, 3.0]]).unwrap();
    for lam in [0.1, 0.5, 1.0] {
        let prob = Problem::new(
            a.clone(),
            DenseVector::new(vec![2.0, 2.0]).unwrap(),
            GroupPartition::singletons(3).unwrap(),
            Regularizer::new(2.0, 1.0, lam).unwrap(),
        )
        .unwrap();
        let rep = pgm_solve(&prob, &SolverConfig { stepsize: Some(0.01), record_history: true, ..Default::default() }).unwrap();
        assert!((rep.final_objective - (lam - lam * lam / 32.0)).abs() <= 1e-6);
        assert!(support_stabilization_iter(&rep) < rep.iterations);
    }
}

#[test]
fn target_sparsity_recovers_single_group() {
    let spec = SimSpec { n: 16, m: 8, r: 4, active_groups: 1, noise_sigma: 0.0, trials: 1, master_seed: 8 };
    let inst = generate_instance(&spec, 0).unwrap();
    let prob = inst.problem(Regularizer::new(2.0, 0.5, 1.0).unwrap()).unwrap();
    let rep = pgm_solve(&prob, &SolverConfig { lambda_mode: LambdaMode::TargetSparsity(1), ..Default::default() }).unwrap();
    assert!(relative_error(&rep.x_final, &inst.xbar) < 0.005);
    assert_eq!(GroupSupport::of(&rep.x_final, &prob.partition).len(), 1);
}

#[test]
fn target_sparsity_keeps_s_groups() {
    let spec = SimSpec { n: 64, m: 32, r: 16, active_groups: 3, noise_sigma: 0.01, trials: 1, master_seed: 5 };
    let inst = generate_instance(&spec, 0).unwrap();
    for pen in Penalty::analytic() {
        for s in [1, 3, 5] {
            let prob = inst.problem(Regularizer::from_penalty(pen, 1.0).unwrap()).unwrap();
            let rep = pgm_solve(&prob, &SolverConfig { lambda_mode: LambdaMode::TargetSparsity(s), max_iter: 2000, ..Default::default() }).unwrap();
            assert_eq!(GroupSupport::of(&rep.x_final, &prob.partition).len(), s, "{pen} with S = {s}");
            assert!(rep.lambda_used > 0.0);
        }
    }
}

#[test]
fn parallel_prox_is_bit_identical() {
    let inst = instance(77, 0.01);
    for pen in Penalty::analytic() {
        let prob = inst.problem(Regularizer::from_penalty(pen, 0.02).unwrap()).unwrap();
        let serial = pgm_solve(&prob, &SolverConfig { record_history: true, ..Default::default() }).unwrap();
        let par = pgm_solve(&prob, &SolverConfig { record_history: true, parallel_prox: true, ..Default::default() }).unwrap();
        assert_eq!(serial, par, "{pen}");
    }
}

#[test]
fn oversized_step_is_rejected() {
    let prob = instance(1, 0.0).problem(Regularizer::new(2.0, 1.0, 0.1).unwrap()).unwrap();
    // Rows are orthonormal, so the limit is 1/2.
    assert!(pgm_solve(&prob, &SolverConfig { stepsize: Some(0.5), ..Default::default() }).is_err());
    assert!(pgm_solve(&prob, &SolverConfig { stepsize: Some(0.49), ..Default::default() }).is_ok());
}

#[test]
fn lower_bound_holds_on_l1_runs() {
    for seed in 0..5 {
        let inst = instance(200 + seed, 0.0);
        for q in [0.5, 2.0 / 3.0] {
            let prob = inst.problem(Regularizer::new(1.0, q, 0.05).unwrap()).unwrap();
            let rep = pgm_solve(&prob, &SolverConfig { record_history: true, ..Default::default() }).unwrap();
            assert!(nonzero_group_lower_bound_check(&rep, &prob, rep.stepsize).unwrap());
            assert!(support_stabilization_iter(&rep) < rep.iterations);
        }
    }
}
