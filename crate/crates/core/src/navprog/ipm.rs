//! Homogeneous self-dual interior-point method with Mehrotra
//! predictor-corrector steps.
//!
//! Internal form: `min c^T x` s.t. `A x = b`, `G x + s = h`, `s >= 0`.
//! Variable bounds become rows of `G`. The reduced KKT system
//!
//! ```text
//! [ 0  A^T  G^T ] [dx]   [r1]
//! [ A   0    0  ] [dy] = [r2]
//! [ G   0   -W  ] [dz]   [r3]      W = diag(s / z)
//! ```
//!
//! is solved by eliminating the rows of `G` with few nonzeros into
//! `H = G_s^T W_s^-1 G_s`, which is block diagonal over the connected
//! components of those rows. Equality rows and dense inequality rows are
//! handled through a dense Schur complement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::SparseMatrix;
use super::LinearProgram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Relative duality gap tolerance.
    pub gap_tol: f64,
    /// Certificate tolerance for infeasibility detection.
    pub infeas_tol: f64,
    /// Fraction of the maximal step taken.
    pub step_fraction: f64,
    pub refine_steps: usize,
    /// Inequality rows with more nonzeros go to the Schur complement.
    pub dense_row_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 120,
            feas_tol: 1e-10,
            gap_tol: 1e-10,
            infeas_tol: 1e-8,
            step_fraction: 0.99,
            refine_steps: 3,
            dense_row_threshold: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Primal infeasible; a Farkas certificate is attached.
    Infeasible,
    /// Dual infeasible (the objective is unbounded below).
    Unbounded,
    MaxIter,
}

/// Residuals of the returned point in the original problem's units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max |A x - b|`.
    pub primal_eq: f64,
    /// `max (G x - h)_+` over inequality rows and bounds.
    pub primal_ineq: f64,
    /// `max |c + A^T y + G^T z|` over the variables left after presolve,
    /// with bound multipliers included.
    pub dual: f64,
    /// `s^T z`.
    pub complementarity: f64,
}

/// Evidence of primal infeasibility. From the iterations this is a Farkas
/// pair `y`, `z >= 0` with `A^T y + G^T z ~ 0` and `b^T y + h^T z = -1` over
/// the original rows (bound multipliers are not listed). Presolve detections
/// leave the vectors empty and explain themselves in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub y_eq: Vec<f64>,
    pub z_ineq: Vec<f64>,
    /// `max |A^T y + G^T z|` of the normalized pair.
    pub residual: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub y_eq: Vec<f64>,
    /// Multipliers (`>= 0`) of the `<=` rows.
    pub z_ineq: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub certificate: Option<Certificate>,
}

/// Where each internal inequality row came from.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Ineq(usize),
    Bound,
}

/// The LP after fixed-variable removal and row scaling.
struct Internal {
    n: usize,
    a: SparseMatrix,
    b: Vec<f64>,
    g: SparseMatrix,
    h: Vec<f64>,
    c: Vec<f64>,
    /// Internal variable -> original column.
    cols: Vec<usize>,
    /// Values of variables removed by presolve, by original column.
    fixed: Vec<Option<f64>>,
    /// Internal equality row -> original row and scale.
    eq_rows: Vec<(usize, f64)>,
    g_rows: Vec<(RowOrigin, f64)>,
    c_scale: f64,
}

enum Presolved {
    Ok(Internal),
    Infeasible(String),
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tolerance for presolve feasibility decisions, relative to row scale.
const PRESOLVE_TOL: f64 = 1e-12;

/// Reduces the LP before the iterations:
///
/// * rows with a single free variable become bounds;
/// * equality rows forced to their minimal or maximal activity fix every
///   variable in them at the corresponding bound;
/// * variables with equal bounds are substituted out.
///
/// The loop runs until nothing changes.
fn presolve(lp: &LinearProgram) -> Presolved {
    let n0 = lp.c.len();
    let mut lo = lp.lower.clone();
    let mut up = lp.upper.clone();
    let mut eq_alive = vec![true; lp.a_eq.nrows()];
    let mut in_alive = vec![true; lp.a_ineq.nrows()];
    let is_fixed = |lo: &[f64], up: &[f64], j: usize| lo[j] == up[j];

    // Remaining entries and reduced right-hand side of a row.
    let reduce = |row: &[(usize, f64)], rhs: f64, lo: &[f64], up: &[f64]| {
        let mut rest = Vec::new();
        let mut r = rhs;
        for &(c, v) in row {
            if lo[c] == up[c] {
                r -= v * lo[c];
            } else {
                rest.push((c, v));
            }
        }
        (rest, r)
    };
    // Minimal activity of `sum a_j x_j` and whether it is finite.
    let min_activity = |rest: &[(usize, f64)], lo: &[f64], up: &[f64]| {
        rest.iter()
            .map(|&(c, v)| if v > 0.0 { v * lo[c] } else { v * up[c] })
            .sum::<f64>()
    };
    let at_min = |rest: &[(usize, f64)], lo: &mut [f64], up: &mut [f64]| {
        for &(c, v) in rest {
            let val = if v > 0.0 { lo[c] } else { up[c] };
            lo[c] = val;
            up[c] = val;
        }
    };
    let tighten = |c: usize, v: f64, rhs: f64, lo: &mut [f64], up: &mut [f64]| {
        // v x <= rhs
        let bound = rhs / v;
        if v > 0.0 {
            if bound < up[c] {
                up[c] = bound;
            }
        } else if bound > lo[c] {
            lo[c] = bound;
        }
    };

    loop {
        let mut changed = false;
        for (i, row) in lp.a_eq.rows.iter().enumerate() {
            if !eq_alive[i] {
                continue;
            }
            let (rest, rhs) = reduce(row, lp.b_eq[i], &lo, &up);
            let scale = row.iter().fold(1.0f64, |m, e| m.max(e.1.abs())) * (1.0 + lp.b_eq[i].abs());
            match rest.len() {
                0 => {
                    if rhs.abs() > 1e-9 * scale {
                        return Presolved::Infeasible(format!("equality row {i} reduces to 0 = {rhs}"));
                    }
                    eq_alive[i] = false;
                    changed = true;
                }
                1 => {
                    let (c, v) = rest[0];
                    let val = rhs / v;
                    if val < lo[c] - 1e-9 * scale || val > up[c] + 1e-9 * scale {
                        return Presolved::Infeasible(format!(
                            "equality row {i} fixes variable {c} to {val} outside its bounds"
                        ));
                    }
                    lo[c] = val;
                    up[c] = val;
                    eq_alive[i] = false;
                    changed = true;
                }
                _ => {
                    let neg: Vec<(usize, f64)> = rest.iter().map(|&(c, v)| (c, -v)).collect();
                    let lo_act = min_activity(&rest, &lo, &up);
                    let hi_act = -min_activity(&neg, &lo, &up);
                    if lo_act.is_finite() && (lo_act - rhs).abs() <= PRESOLVE_TOL * scale {
                        at_min(&rest, &mut lo, &mut up);
                        eq_alive[i] = false;
                        changed = true;
                    } else if hi_act.is_finite() && (hi_act - rhs).abs() <= PRESOLVE_TOL * scale {
                        at_min(&neg, &mut lo, &mut up);
                        eq_alive[i] = false;
                        changed = true;
                    } else if lo_act > rhs + 1e-9 * scale || hi_act < rhs - 1e-9 * scale {
                        return Presolved::Infeasible(format!(
                            "equality row {i} cannot reach {rhs} within the bounds"
                        ));
                    }
                }
            }
        }
        for (i, row) in lp.a_ineq.rows.iter().enumerate() {
            if !in_alive[i] {
                continue;
            }
            let (rest, rhs) = reduce(row, lp.b_ineq[i], &lo, &up);
            let scale = row.iter().fold(1.0f64, |m, e| m.max(e.1.abs())) * (1.0 + lp.b_ineq[i].abs());
            match rest.len() {
                0 => {
                    if rhs < -1e-9 * scale {
                        return Presolved::Infeasible(format!("inequality row {i} reduces to 0 <= {rhs}"));
                    }
                    in_alive[i] = false;
                    changed = true;
                }
                1 => {
                    let (c, v) = rest[0];
                    tighten(c, v, rhs, &mut lo, &mut up);
                    in_alive[i] = false;
                    changed = true;
                }
                _ => {
                    let lo_act = min_activity(&rest, &lo, &up);
                    if lo_act > rhs + 1e-9 * scale {
                        return Presolved::Infeasible(format!(
                            "inequality row {i} has minimal activity {lo_act} above {rhs}"
                        ));
                    }
                    if lo_act.is_finite() && (lo_act - rhs).abs() <= PRESOLVE_TOL * scale {
                        at_min(&rest, &mut lo, &mut up);
                        in_alive[i] = false;
                        changed = true;
                    }
                }
            }
        }
        for j in 0..n0 {
            if lo[j] > up[j] {
                let gap = lo[j] - up[j];
                if gap > 1e-9 * (1.0 + lo[j].abs().max(up[j].abs())) {
                    return Presolved::Infeasible(format!(
                        "variable {j} has lower bound {} above upper bound {}",
                        lo[j], up[j]
                    ));
                }
                let mid = 0.5 * (lo[j] + up[j]);
                lo[j] = mid;
                up[j] = mid;
            }
        }
        if !changed {
            break;
        }
    }

    let mut col_map = vec![usize::MAX; n0];
    let mut cols = Vec::new();
    let mut fixed = vec![None; n0];
    for j in 0..n0 {
        if is_fixed(&lo, &up, j) {
            fixed[j] = Some(lo[j]);
        } else {
            col_map[j] = cols.len();
            cols.push(j);
        }
    }
    let n = cols.len();
    let mut a = SparseMatrix::new(n);
    let mut b = Vec::new();
    let mut eq_rows = Vec::new();
    for (i, row) in lp.a_eq.rows.iter().enumerate() {
        if !eq_alive[i] {
            continue;
        }
        let (rest, rhs) = reduce(row, lp.b_eq[i], &lo, &up);
        let scale = rest.iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
        a.push_row(rest.into_iter().map(|(c, v)| (col_map[c], v / scale)));
        b.push(rhs / scale);
        eq_rows.push((i, scale));
    }
    let mut g = SparseMatrix::new(n);
    let mut h = Vec::new();
    let mut g_rows = Vec::new();
    for (i, row) in lp.a_ineq.rows.iter().enumerate() {
        if !in_alive[i] {
            continue;
        }
        let (rest, rhs) = reduce(row, lp.b_ineq[i], &lo, &up);
        let scale = rest.iter().fold(0.0f64, |m, e| m.max(e.1.abs()));
        g.push_row(rest.into_iter().map(|(c, v)| (col_map[c], v / scale)));
        h.push(rhs / scale);
        g_rows.push((RowOrigin::Ineq(i), scale));
    }
    for (k, &j) in cols.iter().enumerate() {
        if lo[j].is_finite() {
            g.push_row([(k, -1.0)]);
            h.push(-lo[j]);
            g_rows.push((RowOrigin::Bound, 1.0));
        }
        if up[j].is_finite() {
            g.push_row([(k, 1.0)]);
            h.push(up[j]);
            g_rows.push((RowOrigin::Bound, 1.0));
        }
    }
    let c: Vec<f64> = cols.iter().map(|&j| lp.c[j]).collect();
    let cmax = inf_norm(&c);
    let c_scale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    Presolved::Ok(Internal {
        n,
        a,
        b,
        g,
        h,
        c: c.iter().map(|v| v * c_scale).collect(),
        cols,
        fixed,
        eq_rows,
        g_rows,
        c_scale,
    })
}

/// Union-find with path halving.
struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Factorization structure that does not change between iterations.
struct KktStructure {
    sparse_rows: Vec<usize>,
    dense_rows: Vec<usize>,
    /// Variables of each component, ascending.
    comps: Vec<Vec<usize>>,
    /// Variable -> (component, position).
    pos: Vec<(usize, usize)>,
    /// Sparse rows of each component.
    comp_rows: Vec<Vec<usize>>,
    /// `[A; G_dense]`, dense.
    e: DMatrix<f64>,
}

impl KktStructure {
    fn new(p: &Internal, threshold: usize) -> Self {
        let n = p.n;
        let (dense_rows, sparse_rows): (Vec<usize>, Vec<usize>) =
            (0..p.g.nrows()).partition(|&i| p.g.rows[i].len() > threshold);
        let mut dsu = Dsu((0..n).collect());
        for &i in &sparse_rows {
            let r = &p.g.rows[i];
            for w in r.windows(2) {
                dsu.union(w[0].0, w[1].0);
            }
        }
        let mut root_id = vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        let mut pos = vec![(0, 0); n];
        for j in 0..n {
            let r = dsu.find(j);
            if root_id[r] == usize::MAX {
                root_id[r] = comps.len();
                comps.push(Vec::new());
            }
            let c = root_id[r];
            pos[j] = (c, comps[c].len());
            comps[c].push(j);
        }
        let mut comp_rows = vec![Vec::new(); comps.len()];
        for &i in &sparse_rows {
            if let Some(&(j, _)) = p.g.rows[i].first() {
                comp_rows[pos[j].0].push(i);
            }
        }
        let q = p.a.nrows() + dense_rows.len();
        let mut e = DMatrix::zeros(q, n);
        for (i, row) in p.a.rows.iter().enumerate() {
            for &(c, v) in row {
                e[(i, c)] = v;
            }
        }
        for (k, &i) in dense_rows.iter().enumerate() {
            for &(c, v) in &p.g.rows[i] {
                e[(p.a.nrows() + k, c)] = v;
            }
        }
        Self {
            sparse_rows,
            dense_rows,
            comps,
            pos,
            comp_rows,
            e,
        }
    }
}

/// One factorization of the reduced KKT system for a fixed `W`.
struct KktFactor<'a> {
    p: &'a Internal,
    st: &'a KktStructure,
    w: Vec<f64>,
    blocks: Vec<Cholesky<f64, Dyn>>,
    schur: Option<Cholesky<f64, Dyn>>,
}

fn chol_with_shift(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let diag_max = m.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    let mut shift = 0.0;
    for _ in 0..12 {
        if let Some(c) = m.clone().cholesky() {
            return Some(c);
        }
        let next = if shift == 0.0 { 1e-14 * diag_max } else { shift * 100.0 };
        for k in 0..m.nrows() {
            m[(k, k)] += next - shift;
        }
        shift = next;
    }
    None
}

impl<'a> KktFactor<'a> {
    fn new(p: &'a Internal, st: &'a KktStructure, w: Vec<f64>) -> Option<Self> {
        let blocks: Vec<Cholesky<f64, Dyn>> = st
            .comps
            .par_iter()
            .zip(&st.comp_rows)
            .map(|(vars, rows)| {
                let k = vars.len();
                let mut hb = DMatrix::<f64>::zeros(k, k);
                for &i in rows {
                    let r = &p.g.rows[i];
                    let wi = 1.0 / w[i];
                    for &(ca, va) in r {
                        let a = st.pos[ca].1;
                        for &(cb, vb) in r {
                            hb[(a, st.pos[cb].1)] += va * vb * wi;
                        }
                    }
                }
                let dmax = hb.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
                let delta = 1e-11 * dmax.max(1.0);
                for d in 0..k {
                    hb[(d, d)] += delta;
                }
                chol_with_shift(hb)
            })
            .collect::<Option<Vec<_>>>()?;

        let q = st.e.nrows();
        let schur = if q == 0 {
            None
        } else {
            // F = L^-1 E^T, S = F^T F + D.
            let n = p.n;
            let mut f = DMatrix::<f64>::zeros(n, q);
            let et = st.e.transpose();
            let cols: Vec<DMatrix<f64>> = st
                .comps
                .par_iter()
                .zip(&blocks)
                .map(|(vars, ch)| {
                    let mut sub = DMatrix::<f64>::zeros(vars.len(), q);
                    for (a, &j) in vars.iter().enumerate() {
                        sub.row_mut(a).copy_from(&et.row(j));
                    }
                    ch.l().solve_lower_triangular_mut(&mut sub);
                    sub
                })
                .collect();
            for ((vars, _), sub) in st.comps.iter().zip(&blocks).zip(&cols) {
                for (a, &j) in vars.iter().enumerate() {
                    f.row_mut(j).copy_from(&sub.row(a));
                }
            }
            let mut s = par_gram(&f);
            let m_eq = p.a.nrows();
            let smax = s.diagonal().iter().fold(0.0f64, |m, v| m.max(*v)).max(1.0);
            for k in 0..m_eq {
                s[(k, k)] += 1e-12 * smax;
            }
            for (k, &i) in st.dense_rows.iter().enumerate() {
                s[(m_eq + k, m_eq + k)] += w[i];
            }
            Some(chol_with_shift(s)?)
        };
        Some(Self {
            p,
            st,
            w,
            blocks,
            schur,
        })
    }

    fn h_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; rhs.len()];
        for (vars, ch) in self.st.comps.iter().zip(&self.blocks) {
            let b = DVector::from_iterator(vars.len(), vars.iter().map(|&j| rhs[j]));
            let x = ch.solve(&b);
            for (a, &j) in vars.iter().enumerate() {
                out[j] = x[a];
            }
        }
        out
    }

    /// Approximate solve with the regularized factors.
    fn solve_once(&self, r1: &[f64], r2: &[f64], r3: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let st = self.st;
        let m_eq = p.a.nrows();
        let mut rho1 = r1.to_vec();
        for &i in &st.sparse_rows {
            let coef = r3[i] / self.w[i];
            if coef != 0.0 {
                for &(c, v) in &p.g.rows[i] {
                    rho1[c] += v * coef;
                }
            }
        }
        let mut dz = vec![0.0; p.g.nrows()];
        let mut dy = vec![0.0; m_eq];
        let dx = match &self.schur {
            None => self.h_solve(&rho1),
            Some(s) => {
                let hr = self.h_solve(&rho1);
                let ehr = &st.e * DVector::from_column_slice(&hr);
                let mut rhs = ehr;
                for k in 0..m_eq {
                    rhs[k] -= r2[k];
                }
                for (k, &i) in st.dense_rows.iter().enumerate() {
                    rhs[m_eq + k] -= r3[i];
                }
                let xi = s.solve(&rhs);
                let etxi = st.e.tr_mul(&xi);
                let t: Vec<f64> = rho1.iter().zip(etxi.iter()).map(|(a, b)| a - b).collect();
                dy.copy_from_slice(&xi.as_slice()[..m_eq]);
                for (k, &i) in st.dense_rows.iter().enumerate() {
                    dz[i] = xi[m_eq + k];
                }
                self.h_solve(&t)
            }
        };
        for &i in &st.sparse_rows {
            dz[i] = (p.g.row_dot(i, &dx) - r3[i]) / self.w[i];
        }
        (dx, dy, dz)
    }

    /// Exact reduced KKT product.
    fn apply(&self, dx: &[f64], dy: &[f64], dz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let mut o1 = vec![0.0; p.n];
        p.a.add_tr_mul_vec(dy, &mut o1);
        p.g.add_tr_mul_vec(dz, &mut o1);
        let o2 = p.a.mul_vec(dx);
        let mut o3 = p.g.mul_vec(dx);
        for (o, (z, w)) in o3.iter_mut().zip(dz.iter().zip(&self.w)) {
            *o -= w * z;
        }
        (o1, o2, o3)
    }

    fn solve(&self, r1: &[f64], r2: &[f64], r3: &[f64], refine: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy, mut dz) = self.solve_once(r1, r2, r3);
        for _ in 0..refine {
            let (a1, a2, a3) = self.apply(&dx, &dy, &dz);
            let e1: Vec<f64> = r1.iter().zip(&a1).map(|(r, a)| r - a).collect();
            let e2: Vec<f64> = r2.iter().zip(&a2).map(|(r, a)| r - a).collect();
            let e3: Vec<f64> = r3.iter().zip(&a3).map(|(r, a)| r - a).collect();
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            let scale = 1.0 + inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3));
            if err <= 1e-15 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_once(&e1, &e2, &e3);
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
            dz.iter_mut().zip(&cz).for_each(|(a, b)| *a += b);
        }
        (dx, dy, dz)
    }
}

/// `F^T F`, computed in parallel over column blocks of the result.
fn par_gram(f: &DMatrix<f64>) -> DMatrix<f64> {
    let q = f.ncols();
    const BLOCK: usize = 64;
    let blocks: Vec<DMatrix<f64>> = (0..q.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let c0 = b * BLOCK;
            let c1 = (c0 + BLOCK).min(q);
            f.tr_mul(&f.columns(c0, c1 - c0))
        })
        .collect();
    let mut s = DMatrix::zeros(q, q);
    for (b, blk) in blocks.iter().enumerate() {
        s.columns_mut(b * BLOCK, blk.ncols()).copy_from(blk);
    }
    s
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

/// Residuals of the embedding: `rx = A^T y + G^T z + c tau`,
/// `ry = -A x + b tau`, `rz = -G x + h tau - s`,
/// `rt = -c^T x - b^T y - h^T z - kappa`.
fn residuals(p: &Internal, it: &Iterate) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let mut rx: Vec<f64> = p.c.iter().map(|c| c * it.tau).collect();
    p.a.add_tr_mul_vec(&it.y, &mut rx);
    p.g.add_tr_mul_vec(&it.z, &mut rx);
    let ax = p.a.mul_vec(&it.x);
    let ry: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b * it.tau - a).collect();
    let gx = p.g.mul_vec(&it.x);
    let rz: Vec<f64> = (0..gx.len())
        .map(|i| p.h[i] * it.tau - gx[i] - it.s[i])
        .collect();
    let rt = -dot(&p.c, &it.x) - dot(&p.b, &it.y) - dot(&p.h, &it.z) - it.kappa;
    (rx, ry, rz, rt)
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

fn initial_point(p: &Internal, st: &KktStructure, refine: usize) -> Option<Iterate> {
    let m = p.g.nrows();
    let f = KktFactor::new(p, st, vec![1.0; m])?;
    let (x, _, z0) = f.solve(&vec![0.0; p.n], &p.b, &p.h, refine);
    let mut s: Vec<f64> = z0.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = p.c.iter().map(|v| -v).collect();
    let (_, y, mut z) = f.solve(&neg_c, &vec![0.0; p.a.nrows()], &vec![0.0; m], refine);
    let shift = |v: &mut Vec<f64>| {
        let alpha = v.iter().fold(f64::NEG_INFINITY, |a, b| a.max(-b));
        if alpha >= -1e-8 {
            let add = 1.0 + alpha.max(0.0);
            v.iter_mut().for_each(|e| *e += add);
        }
    };
    shift(&mut s);
    shift(&mut z);
    Some(Iterate {
        x,
        y,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    })
}

fn run(p: &Internal, opts: &SolverOptions) -> (Iterate, Outcome, usize) {
    let st = KktStructure::new(p, opts.dense_row_threshold);
    let m = p.g.nrows();
    let mut it = match initial_point(p, &st, opts.refine_steps) {
        Some(it) => it,
        None => {
            return (
                Iterate {
                    x: vec![0.0; p.n],
                    y: vec![0.0; p.a.nrows()],
                    z: vec![1.0; m],
                    s: vec![1.0; m],
                    tau: 1.0,
                    kappa: 1.0,
                },
                Outcome::MaxIter,
                0,
            )
        }
    };
    let bnorm = 1.0 + inf_norm(&p.b);
    let hnorm = 1.0 + inf_norm(&p.h);
    let cnorm = 1.0 + inf_norm(&p.c);

    for iter in 0..opts.max_iter {
        let (rx, ry, rz, rt) = residuals(p, &it);
        let tau = it.tau;
        let pres = (inf_norm(&ry) / tau / bnorm).max(inf_norm(&rz) / tau / hnorm);
        let dres = inf_norm(&rx) / tau / cnorm;
        let pobj = dot(&p.c, &it.x) / tau;
        let dobj = -(dot(&p.b, &it.y) + dot(&p.h, &it.z)) / tau;
        let gap = dot(&it.s, &it.z) / (tau * tau);
        let rel_gap = gap.min((pobj - dobj).abs()) / (1.0 + pobj.abs().min(dobj.abs()));
        if pres <= opts.feas_tol && dres <= opts.feas_tol && rel_gap <= opts.gap_tol {
            return (it, Outcome::Optimal, iter);
        }
        if it.tau < it.kappa {
            let byhz = dot(&p.b, &it.y) + dot(&p.h, &it.z);
            if byhz < 0.0 {
                let mut aty = vec![0.0; p.n];
                p.a.add_tr_mul_vec(&it.y, &mut aty);
                p.g.add_tr_mul_vec(&it.z, &mut aty);
                if inf_norm(&aty) / -byhz <= opts.infeas_tol {
                    return (it, Outcome::Infeasible, iter);
                }
            }
            let cx = dot(&p.c, &it.x);
            if cx < 0.0 {
                let ax = inf_norm(&p.a.mul_vec(&it.x));
                let gxs: Vec<f64> = p.g.mul_vec(&it.x).iter().zip(&it.s).map(|(a, b)| a + b).collect();
                if ax.max(inf_norm(&gxs)) / -cx <= opts.infeas_tol {
                    return (it, Outcome::Unbounded, iter);
                }
            }
        }

        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (m as f64 + 1.0);
        let w: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s / z).collect();
        let Some(f) = KktFactor::new(p, &st, w) else {
            return (it, Outcome::MaxIter, iter);
        };
        // (x1, y1, z1) solves K d = (-c, b, h).
        let neg_c: Vec<f64> = p.c.iter().map(|v| -v).collect();
        let (x1, y1, z1) = f.solve(&neg_c, &p.b, &p.h, opts.refine_steps);
        let denom1 = dot(&p.c, &x1) + dot(&p.b, &y1) + dot(&p.h, &z1);

        let direction = |eta: f64, ds: &[f64], dk: f64| {
            // Right-hand side for the reduced system, see the module docs.
            let r1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| eta * v).collect();
            let r3: Vec<f64> = (0..m).map(|i| eta * rz[i] - ds[i] / it.z[i]).collect();
            let r4 = -eta * rt + dk / it.tau;
            let (x2, y2, z2) = f.solve(&r1, &r2, &r3, opts.refine_steps);
            let dtau = (r4 + dot(&p.c, &x2) + dot(&p.b, &y2) + dot(&p.h, &z2))
                / (it.kappa / it.tau - denom1);
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let dy: Vec<f64> = y2.iter().zip(&y1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
            let dsv: Vec<f64> = (0..m).map(|i| (ds[i] - it.s[i] * dz[i]) / it.z[i]).collect();
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            (dx, dy, dz, dsv, dtau, dkappa)
        };
        let step = |dz: &[f64], ds: &[f64], dtau: f64, dkappa: f64| {
            let mut a = max_step(&it.z, dz).min(max_step(&it.s, ds));
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        let ds_aff: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| -s * z).collect();
        let dk_aff = -it.tau * it.kappa;
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(1.0, &ds_aff, dk_aff);
        let alpha_aff = step(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        let ds_c: Vec<f64> = (0..m)
            .map(|i| -it.s[i] * it.z[i] + sigma * mu - ds_a[i] * dz_a[i])
            .collect();
        let dk_c = -it.tau * it.kappa + sigma * mu - dtau_a * dkappa_a;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(1.0 - sigma, &ds_c, dk_c);
        let alpha = (opts.step_fraction * step(&dz, &ds, dtau, dkappa)).min(1.0);
        if !(alpha.is_finite() && alpha > 1e-12) || dx.iter().any(|v| !v.is_finite()) {
            return (it, Outcome::MaxIter, iter);
        }
        it.x.iter_mut().zip(&dx).for_each(|(a, b)| *a += alpha * b);
        it.y.iter_mut().zip(&dy).for_each(|(a, b)| *a += alpha * b);
        it.z.iter_mut().zip(&dz).for_each(|(a, b)| *a += alpha * b);
        it.s.iter_mut().zip(&ds).for_each(|(a, b)| *a += alpha * b);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }
    (it, Outcome::MaxIter, opts.max_iter)
}

/// Primal residuals of `x` against the original LP: `(max |A x - b|,
/// max (G x - h)_+)`, bounds included in the second.
pub fn primal_residuals(lp: &LinearProgram, x: &[f64]) -> (f64, f64) {
    let eq = lp
        .a_eq
        .mul_vec(x)
        .iter()
        .zip(&lp.b_eq)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let mut ineq = lp
        .a_ineq
        .mul_vec(x)
        .iter()
        .zip(&lp.b_ineq)
        .fold(0.0f64, |m, (a, b)| m.max(a - b));
    for (j, xj) in x.iter().enumerate() {
        ineq = ineq.max(lp.lower[j] - xj).max(xj - lp.upper[j]);
    }
    (eq, ineq.max(0.0))
}

/// Solves `lp` after presolve (see [`presolve`]).
pub fn solve_lp(lp: &LinearProgram, opts: &SolverOptions) -> LpSolution {
    let n0 = lp.c.len();
    let p = match presolve(lp) {
        Presolved::Ok(p) => p,
        Presolved::Infeasible(note) => {
            return LpSolution {
                status: SolveStatus::Infeasible,
                x: vec![0.0; n0],
                y_eq: vec![0.0; lp.a_eq.nrows()],
                z_ineq: vec![0.0; lp.a_ineq.nrows()],
                objective: f64::INFINITY,
                iterations: 0,
                residuals: KktResiduals::default(),
                certificate: Some(Certificate {
                    y_eq: Vec::new(),
                    z_ineq: Vec::new(),
                    residual: f64::NAN,
                    note,
                }),
            }
        }
    };

    let (it, outcome, iterations) = run(&p, opts);

    let (tau_div, status) = match outcome {
        Outcome::Optimal => (it.tau, SolveStatus::Optimal),
        Outcome::MaxIter => (it.tau, SolveStatus::MaxIter),
        Outcome::Infeasible => (1.0, SolveStatus::Infeasible),
        Outcome::Unbounded => (1.0, SolveStatus::Unbounded),
    };
    let mut x: Vec<f64> = p.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (k, &j) in p.cols.iter().enumerate() {
        x[j] = it.x[k] / tau_div;
    }
    let dual_scale = 1.0 / (p.c_scale * tau_div);
    let mut y_eq = vec![0.0; lp.a_eq.nrows()];
    for (k, &(i, scale)) in p.eq_rows.iter().enumerate() {
        y_eq[i] = it.y[k] * dual_scale / scale;
    }
    let mut z_ineq = vec![0.0; lp.a_ineq.nrows()];
    for (k, &(origin, scale)) in p.g_rows.iter().enumerate() {
        if let RowOrigin::Ineq(i) = origin {
            z_ineq[i] = it.z[k] * dual_scale / scale;
        }
    }
    let certificate = (status == SolveStatus::Infeasible).then(|| {
        let norm = -(dot(&p.b, &it.y) + dot(&p.h, &it.z));
        let mut aty = vec![0.0; p.n];
        p.a.add_tr_mul_vec(&it.y, &mut aty);
        p.g.add_tr_mul_vec(&it.z, &mut aty);
        Certificate {
            y_eq: y_eq.iter().map(|v| v / (dual_scale * norm)).collect(),
            z_ineq: z_ineq.iter().map(|v| v / (dual_scale * norm)).collect(),
            residual: inf_norm(&aty) / norm,
            note: "Farkas certificate from the homogeneous embedding".into(),
        }
    });
    let objective = match status {
        SolveStatus::Infeasible => f64::INFINITY,
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        _ => dot(&lp.c, &x),
    };
    let (rx, _, _, _) = residuals(&p, &it);
    let (primal_eq, primal_ineq) = primal_residuals(lp, &x);
    let residuals = KktResiduals {
        primal_eq,
        primal_ineq,
        dual: inf_norm(&rx) * dual_scale,
        complementarity: dot(&it.s, &it.z) * dual_scale / tau_div,
    };
    LpSolution {
        status,
        x,
        y_eq,
        z_ineq,
        objective,
        iterations,
        residuals,
        certificate,
    }
}
