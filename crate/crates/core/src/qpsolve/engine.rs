//! Dense QP solver for `min 1/2 z'Hz + g'z  s.t.  Az <= b,  lo <= z <= hi`.
//!
//! Strictly convex problems go to a dual active-set method, which is exact
//! up to rounding. Merely semidefinite problems, and the rare strictly
//! convex one the active-set pass leaves outside tolerance, are solved by
//! ADMM on the stacked constraints `l <= [A; I] z <= u` with equilibration,
//! adaptive step size and active-set polishing. A solution is reported as
//! optimal only when its unscaled KKT residuals meet the tolerance.

use log::trace;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::dual_active_set::{self, Constraints, Outcome};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl QpProblem {
    /// Problem with only box constraints.
    pub fn boxed(h: DMatrix<f64>, g: DVector<f64>, lo: DVector<f64>, hi: DVector<f64>) -> Self {
        let n = g.len();
        Self { h, g, a: DMatrix::zeros(0, n), b: DVector::zeros(0), lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.g.len();
        let bad = |m: &str| Err(Error::InvalidArgument(format!("qp: {m}")));
        if self.h.nrows() != n || self.h.ncols() != n {
            return bad("H must be n x n");
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return bad("A and b dimensions disagree");
        }
        if self.lo.len() != n || self.hi.len() != n {
            return bad("box bounds must have length n");
        }
        if self.lo.iter().zip(self.hi.iter()).any(|(l, h)| l > h || l.is_nan() || h.is_nan()) {
            return bad("box bounds need lo <= hi");
        }
        if !self.h.iter().chain(self.g.iter()).chain(self.a.iter()).chain(self.b.iter()).all(|x| x.is_finite()) {
            return bad("non-finite problem data");
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-9 * self.h.amax().max(1.0) {
            return bad("H must be symmetric");
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Solution with multipliers such that `Hz + g + A'y_ineq + y_box = 0`.
/// `y_box[i]` is positive when the upper bound is active and negative at
/// the lower bound.
#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub y_ineq: DVector<f64>,
    pub y_box: DVector<f64>,
    /// Largest constraint violation.
    pub primal_residual: f64,
    /// Largest stationarity residual.
    pub dual_residual: f64,
    /// Largest complementarity product or wrong-signed multiplier.
    pub kkt_gap: f64,
    pub iterations: usize,
    pub polished: bool,
    pub status: QpStatus,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    /// Active-set for positive definite `H`, ADMM otherwise.
    #[default]
    Auto,
    Admm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpSettings {
    pub method: QpMethod,
    /// KKT tolerance for reporting a solution as optimal.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Iterations between residual checks, polish attempts and step updates.
    pub check_every: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_infeasible: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::Auto,
            tol: 1e-6,
            max_iter: 4000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 25,
            scaling_iters: 10,
            polish: true,
            eps_infeasible: 1e-6,
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;

/// Equilibrated copy of the problem in OSQP form.
struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    c: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    /// Column scaling: z = D x.
    d: DVector<f64>,
    /// Row scaling of C.
    e: DVector<f64>,
    /// Cost scaling.
    cost: f64,
}

fn stack(p: &QpProblem) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = p.dim();
    let m = p.a.nrows();
    let mut c = DMatrix::zeros(m + n, n);
    c.rows_mut(0, m).copy_from(&p.a);
    c.rows_mut(m, n).fill_diagonal(1.0);
    let mut l = DVector::from_element(m + n, f64::NEG_INFINITY);
    let mut u = DVector::zeros(m + n);
    u.rows_mut(0, m).copy_from(&p.b);
    l.rows_mut(m, n).copy_from(&p.lo);
    u.rows_mut(m, n).copy_from(&p.hi);
    (c, l, u)
}

fn scale(p: &QpProblem, iters: usize) -> Scaled {
    let n = p.dim();
    let (mut c, mut l, mut u) = stack(p);
    let mut pm = p.h.clone();
    let mut q = p.g.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(c.nrows(), 1.0);
    let inv_sqrt = |x: f64| if !(x >= 1e-4) { 1.0 } else { 1.0 / x.min(1e4).sqrt() };
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| inv_sqrt(pm.column(j).amax().max(c.column(j).amax())));
        let ee = DVector::from_fn(c.nrows(), |i, _| inv_sqrt(c.row(i).amax()));
        for j in 0..n {
            for i in 0..n {
                pm[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..c.nrows() {
                c[(i, j)] *= ee[i] * dd[j];
            }
        }
        q.component_mul_assign(&dd);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    l.component_mul_assign(&e);
    u.component_mul_assign(&e);
    let mean_col = if n > 0 { (0..n).map(|j| pm.column(j).amax()).sum::<f64>() / n as f64 } else { 1.0 };
    let cost = inv_sqrt(mean_col.max(q.amax())).powi(2).clamp(1e-4, 1e4);
    pm *= cost;
    q *= cost;
    Scaled { p: pm, q, c, l, u, d, e, cost }
}

struct Residuals {
    primal: f64,
    dual: f64,
    comp: f64,
}

/// Unscaled KKT residuals of a candidate `(z, y)` with `y` stacked `[y_ineq; y_box]`.
fn kkt_residuals(p: &QpProblem, z: &DVector<f64>, y: &DVector<f64>) -> Residuals {
    let m = p.a.nrows();
    let n = p.dim();
    let y_ineq = y.rows(0, m);
    let y_box = y.rows(m, n);
    let mut r = &p.h * z + &p.g + y_box;
    if m > 0 {
        r.gemv_tr(1.0, &p.a, &y_ineq, 1.0);
    }
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    if m > 0 {
        let az = &p.a * z;
        for i in 0..m {
            let s = az[i] - p.b[i];
            primal = primal.max(s);
            comp = comp.max(-y_ineq[i]).max((y_ineq[i] * s).abs());
        }
    }
    for i in 0..n {
        primal = primal.max(p.lo[i] - z[i]).max(z[i] - p.hi[i]);
        let yb = y_box[i];
        let gap = if yb > 0.0 { p.hi[i] - z[i] } else { z[i] - p.lo[i] };
        if yb != 0.0 {
            comp = comp.max(if gap.is_finite() { (yb * gap).abs() } else { yb.abs() });
        }
    }
    Residuals { primal, dual: r.amax(), comp }
}

struct Admm<'a> {
    s: &'a Scaled,
    set: &'a QpSettings,
    rho: DVector<f64>,
    rho_base: f64,
    chol: Cholesky<f64, Dyn>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(s: &'a Scaled, set: &'a QpSettings, rho: f64) -> Result<Self> {
        let m = s.c.nrows();
        let n = s.p.nrows();
        let mut admm = Self {
            s,
            set,
            rho: DVector::zeros(m),
            rho_base: rho,
            chol: Cholesky::new(DMatrix::identity(n.max(1), n.max(1))).expect("identity is positive definite"),
            x: DVector::zeros(n),
            z: DVector::zeros(m),
            y: DVector::zeros(m),
        };
        admm.set_rho(rho)?;
        Ok(admm)
    }

    fn set_rho(&mut self, rho: f64) -> Result<()> {
        let s = self.s;
        self.rho_base = rho.clamp(RHO_MIN, RHO_MAX);
        for i in 0..s.c.nrows() {
            self.rho[i] = if s.l[i] == f64::NEG_INFINITY && s.u[i] == f64::INFINITY {
                RHO_MIN
            } else if (s.u[i] - s.l[i]).abs() < 1e-12 {
                (RHO_EQ_SCALE * self.rho_base).min(RHO_MAX)
            } else {
                self.rho_base
            };
        }
        let n = s.p.nrows();
        let mut k = s.p.clone();
        for i in 0..n {
            k[(i, i)] += self.set.sigma;
        }
        let mut rc = s.c.clone();
        for i in 0..rc.nrows() {
            rc.row_mut(i).scale_mut(self.rho[i]);
        }
        k.gemm_tr(1.0, &s.c, &rc, 1.0);
        self.chol = Cholesky::new(k).ok_or_else(|| Error::InvalidArgument("qp: H is not positive semidefinite".into()))?;
        Ok(())
    }

    fn step(&mut self) {
        let s = self.s;
        let alpha = self.set.alpha;
        let w = self.rho.component_mul(&self.z) - &self.y;
        let mut rhs = &self.x * self.set.sigma - &s.q;
        rhs.gemv_tr(1.0, &s.c, &w, 1.0);
        let xt = self.chol.solve(&rhs);
        let zt = &s.c * &xt;
        self.x = &xt * alpha + &self.x * (1.0 - alpha);
        let zr = &zt * alpha + &self.z * (1.0 - alpha);
        for i in 0..zr.len() {
            let z_new = (zr[i] + self.y[i] / self.rho[i]).clamp(s.l[i], s.u[i]);
            self.y[i] += self.rho[i] * (zr[i] - z_new);
            self.z[i] = z_new;
        }
    }

    /// Unscaled primal and dual residuals plus the normalizers used for
    /// the step-size update.
    fn residual_ratio(&self) -> (f64, f64, f64) {
        let s = self.s;
        let cx = &s.c * &self.x;
        let e_inv = s.e.map(|v| 1.0 / v);
        let prim = (&cx - &self.z).component_mul(&e_inv).amax();
        let px = &s.p * &self.x;
        let cty = s.c.tr_mul(&self.y);
        let d_inv = s.d.map(|v| 1.0 / v);
        let dual = (&px + &s.q + &cty).component_mul(&d_inv).amax() / s.cost;
        let prim_norm = cx.component_mul(&e_inv).amax().max(self.z.component_mul(&e_inv).amax()).max(1e-12);
        let dual_norm = px.component_mul(&d_inv).amax().max(cty.component_mul(&d_inv).amax()).max(s.q.component_mul(&d_inv).amax()) / s.cost;
        let ratio = ((prim / prim_norm) / (dual / dual_norm.max(1e-12)).max(1e-12)).sqrt();
        (prim, dual, ratio)
    }

    fn unscaled(&self) -> (DVector<f64>, DVector<f64>) {
        let s = self.s;
        (self.x.component_mul(&s.d), self.y.component_mul(&s.e) / s.cost)
    }

    /// Primal infeasibility certificate from a dual increment.
    fn infeasible(&self, dy: &DVector<f64>) -> bool {
        let s = self.s;
        let dyu = dy.component_mul(&s.e);
        let norm = dyu.amax();
        if norm < 1e-12 {
            return false;
        }
        let eps = self.set.eps_infeasible * norm;
        let ct = s.c.tr_mul(dy).component_mul(&s.d.map(|v| 1.0 / v));
        if ct.amax() > eps {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let bound = if dy[i] > 0.0 { s.u[i] } else if dy[i] < 0.0 { s.l[i] } else { 0.0 };
            if !bound.is_finite() {
                if dy[i].abs() * s.e[i] > eps {
                    return false;
                }
                continue;
            }
            support += bound / s.e[i] * dyu[i];
        }
        support < -eps
    }
}

/// Polishing: starting from the active set suggested by the ADMM iterate
/// `(z, y)`, solves the equality-constrained system, then drops constraints
/// whose multiplier has the wrong sign and adds violated ones until the set
/// settles. Works in the scaled space and returns unscaled `(z, y)`.
fn polish(s: &Scaled, z: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = s.c.nrows();
    // +1 upper bound active, -1 lower bound active, 0 inactive
    let mut side = vec![0i8; m];
    for i in 0..m {
        if s.l[i].is_finite() && z[i] - s.l[i] < -y[i] {
            side[i] = -1;
        } else if s.u[i].is_finite() && s.u[i] - z[i] < y[i] {
            side[i] = 1;
        }
    }
    let mut out = None;
    for round in 0..POLISH_ROUNDS {
        let (x, ys) = solve_active(s, &side)?;
        let cx = &s.c * &x;
        // (index, new side, score) of every suggested change
        let mut changes: Vec<(usize, i8, f64)> = Vec::new();
        for i in 0..m {
            let tol = 1e-10 * (1.0 + s.u[i].abs().min(s.l[i].abs()).min(1e6));
            match side[i] {
                1 if ys[i] < -1e-10 => changes.push((i, 0, -ys[i])),
                -1 if ys[i] > 1e-10 => changes.push((i, 0, ys[i])),
                0 if cx[i] > s.u[i] + tol => changes.push((i, 1, cx[i] - s.u[i])),
                0 if cx[i] < s.l[i] - tol => changes.push((i, -1, s.l[i] - cx[i])),
                _ => {}
            }
        }
        out = Some((x.component_mul(&s.d), ys.component_mul(&s.e) / s.cost));
        if changes.is_empty() {
            break;
        }
        let release = changes.iter().filter(|c| c.1 == 0).max_by(|a, b| a.2.total_cmp(&b.2)).copied();
        match release {
            // early rounds take every suggestion; later ones release only the
            // worst multiplier, which stops the set from cycling
            Some((i, _, _)) if round >= BATCH_ROUNDS => side[i] = 0,
            _ => {
                for (i, to, _) in changes {
                    side[i] = to;
                }
            }
        }
    }
    out
}

const BATCH_ROUNDS: usize = 4;
const POLISH_ROUNDS: usize = 40;

/// Solves the KKT system with the constraints marked in `side` held at
/// their bounds. Rows that are linearly dependent on earlier active rows
/// would make that system singular; they are left out and get a zero
/// multiplier.
fn solve_active(s: &Scaled, side: &[i8]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = s.p.nrows();
    let m = s.c.nrows();
    let mut active: Vec<(usize, f64)> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..m {
        let bound = match side[i] {
            1 => s.u[i],
            -1 => s.l[i],
            _ => continue,
        };
        let row = s.c.row(i).transpose();
        let norm = row.norm();
        if norm == 0.0 || basis.len() >= n {
            continue;
        }
        let mut r = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn > 1e-9 * norm {
            basis.push(r / rn);
            active.push((i, bound));
        }
    }
    let na = active.len();
    let dim = n + na;
    let delta = 1e-9;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(&s.p);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&s.q));
    for (r, &(i, bound)) in active.iter().enumerate() {
        for j in 0..n {
            k[(n + r, j)] = s.c[(i, j)];
            k[(j, n + r)] = s.c[(i, j)];
        }
        rhs[n + r] = bound;
    }
    let mut kd = k.clone();
    for i in 0..dim {
        kd[(i, i)] += if i < n { delta } else { -delta };
    }
    let lu = kd.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..8 {
        let r = &rhs - &k * &sol;
        if r.amax() < 1e-14 {
            break;
        }
        sol += lu.solve(&r)?;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut ys = DVector::zeros(m);
    for (r, &(i, _)) in active.iter().enumerate() {
        ys[i] = sol[n + r];
    }
    Some((sol.rows(0, n).into_owned(), ys))
}

/// Splits stacked multipliers into the inequality and box parts.
fn split(p: &QpProblem, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let m = p.a.nrows();
    (y.rows(0, m).into_owned(), y.rows(m, p.dim()).into_owned())
}

fn finish(p: &QpProblem, z: DVector<f64>, y: DVector<f64>, iterations: usize, polished: bool, tol: f64) -> QpSolution {
    let r = kkt_residuals(p, &z, &y);
    let status = if r.primal <= tol && r.dual <= tol && r.comp <= tol { QpStatus::Optimal } else { QpStatus::MaxIter };
    let (y_ineq, y_box) = split(p, &y);
    QpSolution { z, y_ineq, y_box, primal_residual: r.primal, dual_residual: r.dual, kkt_gap: r.comp, iterations, polished, status }
}

/// Solves a convex QP. Deterministic for identical inputs.
///
/// `warm_start` may be a previous solution of a problem with the same
/// dimensions; mismatched warm starts are ignored.
pub fn solve_qp(p: &QpProblem, warm_start: Option<&QpSolution>, set: &QpSettings) -> Result<QpSolution> {
    p.validate()?;
    let n = p.dim();
    let m = p.a.nrows();
    if n == 0 {
        return Ok(finish(p, DVector::zeros(0), DVector::zeros(m), 0, false, set.tol));
    }
    let mut warm_start = warm_start.filter(|w| w.z.len() == n && w.y_ineq.len() == m);
    let exact;
    let first = if set.method == QpMethod::Auto { active_set(p, set) } else { None };
    match first {
        Some(sol) if sol.status != QpStatus::MaxIter => return Ok(sol),
        Some(sol) => {
            trace!("active-set pass left residual {:.3e}; continuing with admm", worst(&sol));
            exact = sol;
            warm_start = Some(&exact);
        }
        None => {}
    }
    admm_solve(p, warm_start, set)
}

/// Runs the dual active-set method; `None` when `H` is not positive definite.
fn active_set(p: &QpProblem, set: &QpSettings) -> Option<QpSolution> {
    let n = p.dim();
    let m = p.a.nrows();
    // column k holds the normal of constraint `normal . z + offset >= 0`
    let mut rows: Vec<(usize, f64)> = Vec::new();
    let count = m + p.lo.iter().filter(|v| v.is_finite()).count() + p.hi.iter().filter(|v| v.is_finite()).count();
    let mut normals = DMatrix::zeros(n, count);
    let mut offsets = DVector::zeros(count);
    let mut k = 0;
    for i in 0..m {
        normals.column_mut(k).copy_from(&(-p.a.row(i).transpose()));
        offsets[k] = p.b[i];
        rows.push((i, 1.0));
        k += 1;
    }
    for i in 0..n {
        if p.lo[i].is_finite() {
            normals[(i, k)] = 1.0;
            offsets[k] = -p.lo[i];
            rows.push((m + i, -1.0));
            k += 1;
        }
        if p.hi[i].is_finite() {
            normals[(i, k)] = -1.0;
            offsets[k] = p.hi[i];
            rows.push((m + i, 1.0));
            k += 1;
        }
    }
    let cons = Constraints { normals: &normals, offsets: &offsets };
    let budget = 10 * (n + count) + 100;
    let (x, u, iterations, infeasible) = match dual_active_set::solve(&p.h, &p.g, &cons, budget) {
        Outcome::NotConvex => return None,
        Outcome::Solved { x, u, iterations } => (x, u, iterations, false),
        Outcome::IterationLimit { x, u, iterations } => (x, u, iterations, false),
        Outcome::Infeasible { x, u, iterations } => (x, u, iterations, true),
    };
    let mut y = DVector::zeros(m + n);
    for (c, &(row, sign)) in rows.iter().enumerate() {
        y[row] += sign * u[c];
    }
    let mut sol = finish(p, x, y, iterations, false, set.tol);
    if infeasible {
        sol.status = QpStatus::Infeasible;
    }
    Some(sol)
}

fn admm_solve(p: &QpProblem, warm_start: Option<&QpSolution>, set: &QpSettings) -> Result<QpSolution> {
    let n = p.dim();
    let m = p.a.nrows();
    let s = scale(p, set.scaling_iters);
    let mut admm = Admm::new(&s, set, set.rho)?;
    if let Some(w) = warm_start {
        let d_inv = s.d.map(|v| 1.0 / v);
        admm.x = w.z.component_mul(&d_inv);
        admm.z = (&s.c * &admm.x).zip_zip_map(&s.l, &s.u, |v, l, u| v.clamp(l, u));
        let mut y = DVector::zeros(m + n);
        y.rows_mut(0, m).copy_from(&w.y_ineq);
        y.rows_mut(m, n).copy_from(&w.y_box);
        admm.y = y.component_mul(&s.e.map(|v| 1.0 / v)) * s.cost;
    }

    let mut best: Option<QpSolution> = None;
    let mut y_prev = admm.y.clone();
    for it in 1..=set.max_iter {
        if it % set.check_every == 0 {
            y_prev.copy_from(&admm.y);
        }
        admm.step();
        if it % set.check_every != 0 && it != set.max_iter {
            continue;
        }
        let (prim, dual, ratio) = admm.residual_ratio();
        trace!("qp it {it}: prim {prim:.3e} dual {dual:.3e} rho {:.3e}", admm.rho_base);
        if !prim.is_finite() || !dual.is_finite() {
            break;
        }
        let (z, y) = admm.unscaled();
        let cand = finish(p, z, y, it, false, set.tol);
        if cand.is_optimal() {
            return Ok(cand);
        }
        if set.polish && prim < 1e-2 * (1.0 + p.b.amax().max(1.0)) && dual < 1e-2 * (1.0 + p.g.amax()) {
            if let Some((zp, yp)) = polish(&s, &admm.z, &admm.y) {
                let pol = finish(p, zp, yp, it, true, set.tol);
                if pol.is_optimal() {
                    return Ok(pol);
                }
                if best.as_ref().map_or(true, |b| worst(&pol) < worst(b)) {
                    best = Some(pol);
                }
            }
        }
        if best.as_ref().map_or(true, |b| worst(&cand) < worst(b)) {
            best = Some(cand);
        }
        let dy = &admm.y - &y_prev;
        if admm.infeasible(&dy) {
            let (z, y) = admm.unscaled();
            let mut sol = finish(p, z, y, it, false, set.tol);
            sol.status = QpStatus::Infeasible;
            return Ok(sol);
        }
        if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
            admm.set_rho(admm.rho_base * ratio)?;
        }
    }
    Ok(best.unwrap_or_else(|| {
        let (z, y) = admm.unscaled();
        finish(p, z, y, set.max_iter, false, set.tol)
    }))
}

fn worst(s: &QpSolution) -> f64 {
    s.primal_residual.max(s.dual_residual).max(s.kkt_gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unconstrained_minimum_inside_box() {
        // (z - 1)^2 = z^2 - 2z + 1
        let p = QpProblem::boxed(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -2.0),
            DVector::from_element(1, -10.0),
            DVector::from_element(1, 10.0),
        );
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.y_box[0], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn lower_bound_through_inequality() {
        // z^2 with -z <= -2
        let p = QpProblem {
            h: DMatrix::from_element(1, 1, 2.0),
            g: DVector::zeros(1),
            a: DMatrix::from_element(1, 1, -1.0),
            b: DVector::from_element(1, -2.0),
            lo: DVector::from_element(1, f64::NEG_INFINITY),
            hi: DVector::from_element(1, f64::INFINITY),
        };
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert_abs_diff_eq!(s.z[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s.y_ineq[0], 4.0, epsilon = 1e-7);
    }

    #[test]
    fn conflicting_constraints_are_infeasible() {
        // z >= 1 and z <= -1
        let p = QpProblem {
            h: DMatrix::from_element(1, 1, 1.0),
            g: DVector::zeros(1),
            a: DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
            b: DVector::from_column_slice(&[-1.0, -1.0]),
            lo: DVector::from_element(1, -5.0),
            hi: DVector::from_element(1, 5.0),
        };
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        let mut p = QpProblem::boxed(DMatrix::identity(2, 2), DVector::zeros(2), DVector::zeros(2), DVector::zeros(2));
        p.lo = DVector::zeros(3);
        assert!(solve_qp(&p, None, &QpSettings::default()).is_err());
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let p = QpProblem {
            h,
            g: DVector::from_column_slice(&[1.0, -2.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_element(1, 0.2),
            lo: DVector::from_element(2, -1.0),
            hi: DVector::from_element(2, 1.0),
        };
        let cold = solve_qp(&p, None, &QpSettings::default()).unwrap();
        let warm = solve_qp(&p, Some(&cold), &QpSettings::default()).unwrap();
        assert!(cold.is_optimal() && warm.is_optimal());
        assert!(warm.iterations <= cold.iterations);
        assert_abs_diff_eq!((warm.z - cold.z).amax(), 0.0, epsilon = 1e-7);
    }
}
