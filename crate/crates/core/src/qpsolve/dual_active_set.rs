//! Goldfarb-Idnani dual active-set method for strictly convex QPs.
//!
//! Starts from the unconstrained minimizer and repeatedly adds the most
//! violated constraint, dropping active constraints whose multiplier would
//! turn negative. The factorization `J = L^-T Q` and the upper-triangular
//! `R` are updated with Givens rotations, so each change costs `O(n^2)`.

use nalgebra::{DMatrix, DVector};

/// Constraints `n_i . x + c_i >= 0`, one per column of `normals`.
pub(crate) struct Constraints<'a> {
    pub normals: &'a DMatrix<f64>,
    pub offsets: &'a DVector<f64>,
}

pub(crate) enum Outcome {
    Solved { x: DVector<f64>, u: DVector<f64>, iterations: usize },
    Infeasible { x: DVector<f64>, u: DVector<f64>, iterations: usize },
    /// `G` is not positive definite.
    NotConvex,
    IterationLimit { x: DVector<f64>, u: DVector<f64>, iterations: usize },
}

struct State {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    /// Active constraint indices in factorization order.
    active: Vec<usize>,
    /// Multipliers of `active`.
    u: Vec<f64>,
    r_norm: f64,
}

fn hypot(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

impl State {
    fn iq(&self) -> usize {
        self.active.len()
    }

    /// Appends a constraint with `d = J' n`. Returns false when `n` is
    /// linearly dependent on the active normals.
    fn add(&mut self, d: &mut DVector<f64>) -> bool {
        let n = self.n;
        let iq = self.iq();
        for jj in (iq + 1..n).rev() {
            let (mut cc, mut ss) = (d[jj - 1], d[jj]);
            let h = hypot(cc, ss);
            if h == 0.0 {
                continue;
            }
            d[jj] = 0.0;
            ss /= h;
            cc /= h;
            if cc < 0.0 {
                cc = -cc;
                ss = -ss;
                d[jj - 1] = -h;
            } else {
                d[jj - 1] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in 0..n {
                let t1 = self.j[(k, jj - 1)];
                let t2 = self.j[(k, jj)];
                self.j[(k, jj - 1)] = t1 * cc + t2 * ss;
                self.j[(k, jj)] = xny * (t1 + self.j[(k, jj - 1)]) - t2;
            }
        }
        for i in 0..=iq {
            self.r[(i, iq)] = d[i];
        }
        if d[iq].abs() <= f64::EPSILON * self.r_norm {
            return false;
        }
        self.r_norm = self.r_norm.max(d[iq].abs());
        true
    }

    /// Removes the active constraint at position `l`.
    fn remove(&mut self, l: usize) {
        let n = self.n;
        let iq = self.iq();
        for jj in l..iq - 1 {
            for i in 0..n {
                self.r[(i, jj)] = self.r[(i, jj + 1)];
            }
        }
        self.active.remove(l);
        self.u.remove(l);
        let iq = iq - 1;
        for i in 0..n {
            self.r[(i, iq)] = 0.0;
        }
        if iq == 0 {
            return;
        }
        for jj in l..iq {
            let (mut cc, mut ss) = (self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            let h = hypot(cc, ss);
            if h == 0.0 {
                continue;
            }
            cc /= h;
            ss /= h;
            self.r[(jj + 1, jj)] = 0.0;
            if cc < 0.0 {
                self.r[(jj, jj)] = -h;
                cc = -cc;
                ss = -ss;
            } else {
                self.r[(jj, jj)] = h;
            }
            let xny = ss / (1.0 + cc);
            for k in jj + 1..iq {
                let t1 = self.r[(jj, k)];
                let t2 = self.r[(jj + 1, k)];
                self.r[(jj, k)] = t1 * cc + t2 * ss;
                self.r[(jj + 1, k)] = xny * (t1 + self.r[(jj, k)]) - t2;
            }
            for k in 0..n {
                let t1 = self.j[(k, jj)];
                let t2 = self.j[(k, jj + 1)];
                self.j[(k, jj)] = t1 * cc + t2 * ss;
                self.j[(k, jj + 1)] = xny * (self.j[(k, jj)] + t1) - t2;
            }
        }
    }

    /// Primal direction `z = J2 d2` and dual direction `r = R^-1 d1`.
    fn directions(&self, d: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
        let n = self.n;
        let iq = self.iq();
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for k in iq..n {
                s += self.j[(i, k)] * d[k];
            }
            z[i] = s;
        }
        let mut r = vec![0.0; iq];
        for i in (0..iq).rev() {
            let mut s = d[i];
            for k in i + 1..iq {
                s -= self.r[(i, k)] * r[k];
            }
            r[i] = s / self.r[(i, i)];
        }
        (z, r)
    }
}

/// Minimizes `1/2 x'Gx + g'x` subject to `cons`.
pub(crate) fn solve(g_mat: &DMatrix<f64>, g: &DVector<f64>, cons: &Constraints, max_iter: usize) -> Outcome {
    let n = g.len();
    let m = cons.offsets.len();
    let Some(chol) = g_mat.clone().cholesky() else {
        return Outcome::NotConvex;
    };
    // J = L^-T
    let l_inv = chol.l().try_inverse().expect("Cholesky factor is invertible");
    let mut st = State {
        n,
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        active: Vec::new(),
        u: Vec::new(),
        r_norm: 1.0,
    };
    let mut x = -chol.solve(g);
    let col_norm: Vec<f64> = (0..m).map(|i| cons.normals.column(i).norm().max(1e-300)).collect();
    let mut is_active = vec![false; m];
    let slack = |x: &DVector<f64>, i: usize| cons.normals.column(i).dot(x) + cons.offsets[i];
    let packed = |st: &State| {
        let mut u = DVector::zeros(m);
        for (k, &i) in st.active.iter().enumerate() {
            u[i] = st.u[k];
        }
        u
    };

    let mut iterations = 0;
    loop {
        // most violated constraint, measured in distance
        let mut p = None;
        let mut worst = 0.0;
        for i in 0..m {
            if is_active[i] {
                continue;
            }
            let s = slack(&x, i) / col_norm[i];
            let tol = 1e-13 * (1.0 + cons.offsets[i].abs() / col_norm[i]);
            if s < -tol && s < worst {
                worst = s;
                p = Some(i);
            }
        }
        let Some(p) = p else {
            return Outcome::Solved { u: packed(&st), x, iterations };
        };
        let np = cons.normals.column(p).into_owned();
        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Outcome::IterationLimit { u: packed(&st), x, iterations };
            }
            let mut d = st.j.tr_mul(&np);
            let (z, r) = st.directions(&d);
            // dual step length limited by active multipliers
            let mut t1 = f64::INFINITY;
            let mut l = None;
            for (k, rk) in r.iter().enumerate() {
                if *rk > 0.0 {
                    let t = st.u[k] / rk;
                    if t < t1 {
                        t1 = t;
                        l = Some(k);
                    }
                }
            }
            let s_p = slack(&x, p);
            let zn = z.dot(&np);
            let t2 = if z.amax() > f64::EPSILON * x.amax().max(1.0) && zn.abs() > 0.0 { -s_p / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                let mut u = packed(&st);
                u[p] = u_p;
                return Outcome::Infeasible { x, u, iterations };
            }
            if t2.is_infinite() {
                for (k, rk) in r.iter().enumerate() {
                    st.u[k] -= t * rk;
                }
                u_p += t;
                let l = l.expect("finite dual step has a blocking constraint");
                is_active[st.active[l]] = false;
                st.remove(l);
                continue;
            }
            x += &z * t;
            for (k, rk) in r.iter().enumerate() {
                st.u[k] -= t * rk;
            }
            u_p += t;
            if t == t2 {
                if !st.add(&mut d) {
                    // dependent on the active set although a primal step was
                    // possible; only happens through rounding
                    let mut u = packed(&st);
                    u[p] = u_p;
                    return Outcome::Infeasible { x, u, iterations };
                }
                st.active.push(p);
                st.u.push(u_p);
                is_active[p] = true;
                break;
            }
            let l = l.expect("partial step has a blocking constraint");
            is_active[st.active[l]] = false;
            st.remove(l);
        }
    }
}
