//! Small random programs with a known interior point and a bounding box,
//! and their optimum by brute-force vertex enumeration.

use densnav::navprog::LinearProgram;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Dense {
    pub c: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

pub fn random_program(rng: &mut ChaCha8Rng) -> (Dense, LinearProgram) {
    let n = rng.gen_range(2..=6);
    let meq = rng.gen_range(0..n.min(3));
    let mle = rng.gen_range(1..=6);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut d = Dense {
        c: row(rng),
        eq: Vec::new(),
        le: Vec::new(),
    };
    for _ in 0..meq {
        let a = row(rng);
        let b = dot(&a, &x0);
        d.eq.push((a, b));
    }
    for _ in 0..mle {
        let a = row(rng);
        let b = dot(&a, &x0) + rng.gen_range(0.1..1.0);
        d.le.push((a, b));
    }
    let mut lp = LinearProgram::new(n);
    lp.c = d.c.clone();
    for (a, b) in &d.eq {
        lp.add_eq(a.iter().copied().enumerate(), *b);
    }
    for (a, b) in &d.le {
        lp.add_le(a.iter().copied().enumerate(), *b);
    }
    let nonneg = rng.gen_bool(0.5);
    for j in 0..n {
        lp.lower[j] = if nonneg && x0[j] > 0.0 { 0.0 } else { -5.0 };
        lp.upper[j] = 5.0;
    }
    // Bounds join the enumeration as ordinary rows.
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        d.le.push((e.clone(), lp.upper[j]));
        e[j] = -1.0;
        d.le.push((e, -lp.lower[j]));
    }
    (d, lp)
}

fn combinations(k: usize, n: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, k: usize, n: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, k, n, cur, f);
            cur.pop();
        }
    }
    go(0, k, n, &mut Vec::new(), f);
}

pub fn vertex_optimum(d: &Dense) -> f64 {
    let n = d.c.len();
    let k = n - d.eq.len();
    let mut best = f64::INFINITY;
    combinations(k, d.le.len(), &mut |active| {
        let rows: Vec<&(Vec<f64>, f64)> = d.eq.iter().chain(active.iter().map(|&i| &d.le[i])).collect();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[i].1);
        let Some(x) = a.clone().lu().solve(&b) else { return };
        if (&a * &x - &b).amax() > 1e-9 || a.svd(false, false).singular_values.min() < 1e-9 {
            return;
        }
        let feasible = d.le.iter().all(|(r, h)| r.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= h + 1e-9);
        if feasible {
            best = best.min(d.c.iter().zip(x.iter()).map(|(p, q)| p * q).sum());
        }
    });
    best
}
