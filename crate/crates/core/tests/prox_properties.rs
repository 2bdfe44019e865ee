mod common;

use common::{oracle_p1, oracle_p2, query};
use lpq_core::model::{GroupPartition, Penalty, Regularizer};
use lpq_core::prox::*;
use proptest::prelude::*;

const PAIRS: [(f64, f64); 6] = [(2.0, 1.0), (2.0, 0.0), (2.0, 0.5), (1.0, 0.5), (2.0, 2.0 / 3.0), (1.0, 2.0 / 3.0)];

fn analytic(q: &ProxQuery) -> ProxResult {
    match (q.p, q.q) {
        (2.0, 1.0) => prox_2_1(q),
        (2.0, 0.0) => prox_2_0(q),
        (2.0, 0.5) => prox_2_half(q),
        (1.0, 0.5) => prox_1_half(q),
        (2.0, _) => prox_2_twothirds(q),
        _ => prox_1_twothirds(q),
    }
    .unwrap()
}

/// Group of length `len` with Euclidean norm `norm`.
fn group(len: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, len), 0.0f64..10.0).prop_map(|(dir, norm)| {
        let n = dir.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n < 1e-9 {
            vec![0.0; dir.len()]
        } else {
            dir.iter().map(|t| t * norm / n).collect()
        }
    })
}

fn foc_residual(x: &[f64], z: &[f64], c: f64, p: f64, q: f64) -> f64 {
    if p == 2.0 {
        let n = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        x.iter()
            .zip(z)
            .map(|(xi, zi)| (c * q * n.powf(q - 2.0) * xi + xi - zi).abs())
            .fold(0.0, f64::max)
    } else {
        let n: f64 = x.iter().map(|t| t.abs()).sum();
        x.iter()
            .zip(z)
            .filter(|(xi, _)| **xi != 0.0)
            .map(|(xi, zi)| (c * q * n.powf(q - 1.0) * xi.signum() + xi - zi).abs())
            .fold(0.0, f64::max)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn p2_dominates_oracle(pair in 0usize..6, z in (1usize..=8).prop_flat_map(group), c in 0.01f64..10.0, v in 0.1f64..2.0) {
        let (p, q) = PAIRS[pair];
        prop_assume!(p == 2.0);
        let qr = query(z, v, c / v, p, q);
        let r = analytic(&qr);
        let (_, best) = oracle_p2(&qr, 20_000);
        prop_assert!(r.objective_value <= best + 1e-6 * (1.0 + best.abs()), "{} > {}", r.objective_value, best);
    }

    #[test]
    fn p1_dominates_oracle(half in any::<bool>(), z in (1usize..=3).prop_flat_map(group), c in 0.01f64..10.0, v in 0.1f64..2.0) {
        let q = if half { 0.5 } else { 2.0 / 3.0 };
        let qr = query(z, v, c / v, 1.0, q);
        let r = analytic(&qr);
        let (_, best) = oracle_p1(&qr, 40);
        prop_assert!(r.objective_value <= best + 1e-6 * (1.0 + best.abs()), "{} > {}", r.objective_value, best);
    }

    #[test]
    fn objective_value_is_recomputed(pair in 0usize..6, z in (1usize..=8).prop_flat_map(group), c in 0.01f64..10.0) {
        let (p, q) = PAIRS[pair];
        let qr = query(z, 1.0, c, p, q);
        let r = analytic(&qr);
        prop_assert!((r.objective_value - qr.objective(&r.x)).abs() <= 1e-12);
        prop_assert_eq!(r.was_thresholded_to_zero, r.x.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn first_order_condition(pair in 0usize..6, z in (1usize..=8).prop_flat_map(group), c in 0.01f64..10.0) {
        let (p, q) = PAIRS[pair];
        prop_assume!(q > 0.0);
        let qr = query(z.clone(), 1.0, c, p, q);
        let r = analytic(&qr);
        if !r.was_thresholded_to_zero {
            let res = foc_residual(&r.x, &z, c, p, q);
            prop_assert!(res <= 1e-8 * (1.0 + c), "residual {res}");
        }
    }

    #[test]
    fn larger_lambda_never_revives(pair in 0usize..6, z in (1usize..=8).prop_flat_map(group)) {
        let (p, q) = PAIRS[pair];
        let mut was_zero = false;
        for k in 0..60 {
            let lam = 0.01 * 1.15f64.powi(k);
            let r = analytic(&query(z.clone(), 1.0, lam, p, q));
            prop_assert!(!(was_zero && !r.was_thresholded_to_zero), "revived at lambda {lam}");
            was_zero = r.was_thresholded_to_zero;
        }
    }

    #[test]
    fn p2_output_is_shrunk_copy(pair in 0usize..6, z in (1usize..=8).prop_flat_map(group), c in 0.01f64..10.0) {
        let (p, q) = PAIRS[pair];
        prop_assume!(p == 2.0);
        let r = analytic(&query(z.clone(), 1.0, c, p, q));
        let n2: f64 = z.iter().map(|t| t * t).sum();
        prop_assume!(n2 > 0.0);
        let s = r.x.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / n2;
        prop_assert!((-1e-15..=1.0 + 1e-15).contains(&s));
        for (a, b) in r.x.iter().zip(&z) {
            prop_assert!((a - s * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn generic_matches_analytic(pair in prop::sample::select(vec![2usize, 3, 4, 5]), z in (1usize..=6).prop_flat_map(group), c in 0.01f64..10.0) {
        let (p, q) = PAIRS[pair];
        let qr = query(z, 1.0, c, p, q);
        let a = analytic(&qr);
        let g = prox_generic(&qr).unwrap();
        for (x, y) in a.x.iter().zip(g.x.iter()) {
            prop_assert!((x - y).abs() <= 1e-8, "{:?} vs {:?}", a.x, g.x);
        }
    }

    #[test]
    fn group_apply_is_separable_and_parallel_safe(
        pair in 0usize..6,
        sizes in prop::collection::vec(1usize..5, 1..8),
        seed in prop::collection::vec(-5.0f64..5.0, 40),
        lam in 0.05f64..5.0,
    ) {
        let (p, q) = PAIRS[pair];
        let part = GroupPartition::from_sizes(&sizes).unwrap();
        let z = &seed[..part.dim()];
        let reg = Regularizer::new(p, q, lam).unwrap();
        let seq = prox_group_apply(z, &part, 0.7, &reg).unwrap();
        let par = prox_group_apply_par(z, &part, 0.7, &reg).unwrap();
        prop_assert_eq!(seq.as_slice(), par.as_slice());
        for g in part.groups() {
            let single = prox_dispatch(&query(z[g.clone()].to_vec(), 0.7, lam, p, q)).unwrap();
            prop_assert_eq!(&seq[g], single.x.as_slice());
        }
    }

    #[test]
    fn singletons_reduce_to_scalar_thresholding(zs in -10.0f64..10.0, lam in 0.01f64..5.0) {
        let soft = prox_2_1(&query(vec![zs], 1.0, lam, 2.0, 1.0)).unwrap().x[0];
        prop_assert!((soft - zs.signum() * (zs.abs() - lam).max(0.0)).abs() <= 1e-12);
        let hard = prox_2_0(&query(vec![zs], 1.0, lam, 2.0, 0.0)).unwrap().x[0];
        prop_assert_eq!(hard, if zs.abs() > (2.0 * lam).sqrt() { zs } else { 0.0 });
        // Half thresholding in its usual scalar form, for ‖x − z‖² + μ|x|^{1/2}
        // with μ = 2λ.
        let half = prox_2_half(&query(vec![zs], 1.0, lam, 2.0, 0.5)).unwrap().x[0];
        let mu = 2.0 * lam;
        let expect = if zs.abs() > 54f64.cbrt() / 4.0 * mu.powf(2.0 / 3.0) {
            let phi = (mu / 8.0 * (zs.abs() / 3.0).powf(-1.5)).acos();
            2.0 / 3.0 * zs * (1.0 + (2.0 * std::f64::consts::PI / 3.0 - 2.0 * phi / 3.0).cos())
        } else {
            0.0
        };
        prop_assert!((half - expect).abs() <= 1e-10 * (1.0 + zs.abs()), "{half} vs {expect}");
    }
}

#[test]
fn spec_style_values_against_oracle() {
    let r = prox_2_half(&query(vec![2.0, 0.0], 1.0, 1.0, 2.0, 0.5)).unwrap();
    let (x, _) = oracle_p2(&query(vec![2.0, 0.0], 1.0, 1.0, 2.0, 0.5), 200_000);
    assert!((r.x[0] - x[0]).abs() < 1e-6 && (r.x[0] - 1.605).abs() < 1e-3);

    // The stationary radius solves (2/3)t^{-1/3} = 2 − t, t ≈ 1.4047.
    let r = prox_2_twothirds(&query(vec![2.0, 0.0], 1.0, 1.0, 2.0, 2.0 / 3.0)).unwrap();
    let (x, _) = oracle_p2(&query(vec![2.0, 0.0], 1.0, 1.0, 2.0, 2.0 / 3.0), 200_000);
    assert!((r.x[0] - x[0]).abs() < 1e-6 && (r.x[0] - 1.4047).abs() < 1e-4, "{:?}", r.x);

    let r = prox_1_half(&query(vec![2.0, 2.0], 1.0, 1.0, 1.0, 0.5)).unwrap();
    let (x, _) = oracle_p1(&query(vec![2.0, 2.0], 1.0, 1.0, 1.0, 0.5), 400);
    assert!((r.x[0] - 1.731).abs() < 1e-3 && (r.x[1] - 1.731).abs() < 1e-3, "{:?}", r.x);
    assert!((r.x[0] - x[0]).abs() < 1e-5, "{:?} vs {x:?}", r.x);

    let qr = query(vec![2.0, 2.0], 1.0, 1.0, 1.0, 2.0 / 3.0);
    let r = prox_1_twothirds(&qr).unwrap();
    let (x, best) = oracle_p1(&qr, 400);
    assert!(r.objective_value <= best + 1e-9);
    assert!((r.x[0] - x[0]).abs() < 1e-5 && (r.x[1] - x[1]).abs() < 1e-5, "{:?} vs {x:?}", r.x);
}

#[test]
fn p1_refinement_drops_small_coordinates() {
    // Uniform shrinkage over the full support would exceed 0.05 and flip
    // its sign; the refined answer zeroes it instead.
    for q in [0.5, 2.0 / 3.0] {
        let qr = query(vec![5.0, 0.05, -4.0], 1.0, 0.8, 1.0, q);
        let r = prox_dispatch(&qr).unwrap();
        assert_eq!(r.x[1], 0.0);
        assert!(r.x[0] > 0.0 && r.x[2] < 0.0);
        let (_, best) = oracle_p1(&qr, 200);
        assert!(r.objective_value <= best + 1e-9);
    }
}

#[test]
fn generic_covers_other_exponents() {
    for &q in &[0.1, 0.3, 0.75, 0.9] {
        for &p in &[1.0, 2.0] {
            Penalty::new(p, q).unwrap();
            let z = vec![1.5, -0.7, 0.3];
            let qr = query(z.clone(), 0.5, 0.6, p, q);
            let r = prox_generic(&qr).unwrap();
            let (_, best) = if p == 2.0 { oracle_p2(&qr, 100_000) } else { oracle_p1(&qr, 200) };
            assert!(r.objective_value <= best + 1e-9, "p={p} q={q}: {} > {best}", r.objective_value);
        }
    }
}
