//! Brute-force reference minimisers shared by the integration tests.
#![allow(dead_code)]

use lpq_core::linalg::DenseVector;
use lpq_core::prox::ProxQuery;

pub fn q_value(x: &[f64], z: &[f64], v: f64, lambda: f64, p: f64, q: f64) -> f64 {
    let nrm = if p == 1.0 {
        x.iter().map(|t| t.abs()).sum::<f64>()
    } else {
        x.iter().map(|t| t * t).sum::<f64>().sqrt()
    };
    let pen = if nrm == 0.0 {
        0.0
    } else if q == 0.0 {
        1.0
    } else {
        nrm.powf(q)
    };
    let dist: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    lambda * pen + dist / (2.0 * v)
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// p = 2: the minimiser is t·z/‖z‖ with t ∈ [0, ‖z‖]. Dense grid on t,
/// then golden-section refinement around the best node.
pub fn oracle_p2(query: &ProxQuery, nodes: usize) -> (Vec<f64>, f64) {
    let z = query.z.as_slice();
    let n = z.iter().map(|t| t * t).sum::<f64>().sqrt();
    let zero = vec![0.0; z.len()];
    let q0 = q_value(&zero, z, query.v, query.lambda, query.p, query.q);
    if n == 0.0 {
        return (zero, q0);
    }
    let point = |t: f64| z.iter().map(|zi| zi * t / n).collect::<Vec<_>>();
    let f = |t: f64| q_value(&point(t), z, query.v, query.lambda, query.p, query.q);
    let h = n / nodes as f64;
    let (mut best_t, mut best) = (0.0, q0);
    for i in 1..=nodes {
        let t = if i == nodes { n } else { i as f64 * h };
        let val = f(t);
        if val < best {
            best = val;
            best_t = t;
        }
    }
    if best_t > 0.0 {
        let (t, val) = golden(f, (best_t - h).max(h * 1e-3), (best_t + h).min(n));
        if val < best {
            best = val;
            best_t = t;
        }
    }
    (point(best_t), best)
}

/// p = 1, l ≤ 3: the minimiser lies in the box sign(z)·[0, |z|]. Full grid
/// over the box, then compass search from the best few nodes.
pub fn oracle_p1(query: &ProxQuery, per_dim: usize) -> (Vec<f64>, f64) {
    let z = query.z.as_slice();
    let l = z.len();
    assert!(l <= 3);
    let f = |x: &[f64]| q_value(x, z, query.v, query.lambda, query.p, query.q);
    let mut idx = vec![0usize; l];
    let mut ranked: Vec<(f64, Vec<f64>)> = Vec::new();
    loop {
        let x: Vec<f64> = (0..l).map(|j| z[j] * idx[j] as f64 / per_dim as f64).collect();
        let val = f(&x);
        ranked.push((val, x));
        if ranked.len() > 64 {
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            ranked.truncate(8);
        }
        let mut j = 0;
        loop {
            if j == l {
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
                ranked.truncate(8);
                return polish(ranked, z, &f);
            }
            idx[j] += 1;
            if idx[j] <= per_dim {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn polish(starts: Vec<(f64, Vec<f64>)>, z: &[f64], f: &impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut best = starts[0].clone();
    let scale = z.iter().map(|t| t.abs()).fold(0.0, f64::max).max(1e-300);
    for (mut val, mut x) in starts {
        let mut step = scale / 10.0;
        while step > 1e-14 * scale {
            let mut improved = false;
            for j in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    // Stay inside sign(z)·[0, |z|].
                    let mag = (y[j].abs() + dir * step).clamp(0.0, z[j].abs());
                    y[j] = z[j].signum() * mag;
                    let fy = f(&y);
                    if fy < val {
                        val = fy;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if val < best.0 {
            best = (val, x);
        }
    }
    (best.1, best.0)
}

pub fn query(z: Vec<f64>, v: f64, lambda: f64, p: f64, q: f64) -> ProxQuery {
    ProxQuery::new(DenseVector::new(z).unwrap(), v, lambda, p, q).unwrap()
}
