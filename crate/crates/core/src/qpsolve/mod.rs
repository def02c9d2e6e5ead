//! Corridor-constrained position planning and gimbal orientation planning,
//! both condensed onto the inputs and solved with [`solve_qp`].

mod dual_active_set;
mod engine;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corridor::{HalfSpace, SafeCorridor};
use crate::dynamics::{
    normalize_angle, rollout_at, step_ori_unwrapped, unwrap_near, HorizonConfig, OriInput, OriPlan, OriState, PosInput,
    PosState, Trajectory, Vec2, Vec3,
};
use crate::error::{Error, Result};

pub use engine::{solve_qp, QpMethod, QpProblem, QpSettings, QpSolution, QpStatus};

/// Callback handed every QP this module solves, with its solution.
pub type QpObserverMut<'a> = &'a mut dyn FnMut(&QpProblem, &QpSolution);

/// Weights of the tracking objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingWeights {
    /// Weight on positional inputs.
    pub beta: f64,
    /// Weight on orientation inputs.
    pub gamma: f64,
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self { beta: 0.05, gamma: 0.5 }
    }
}

impl TrackingWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.gamma > 0.0 && self.beta.is_finite() && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument("tracking weights must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorQpOptions {
    /// Extra distance kept inside every face; covers the deviation of the
    /// flown parabola from the chord between knots.
    pub margin: f64,
    pub slack_weight: f64,
    /// Largest slack accepted before the plan is declared infeasible.
    pub slack_cap: f64,
    pub settings: QpSettings,
}

impl Default for CorridorQpOptions {
    fn default() -> Self {
        Self { margin: 0.02, slack_weight: 1e4, slack_cap: 0.5, settings: QpSettings::default() }
    }
}

#[derive(Clone, Debug)]
pub struct CorridorPlan {
    pub trajectory: Trajectory,
    pub solution: QpSolution,
    /// Largest slack used; zero unless the slack retry was needed.
    pub max_slack: f64,
    pub used_slack: bool,
}

/// Coefficient of input `j` in position `k` of a double integrator.
fn pos_coeff(k: usize, j: usize, dt: f64) -> f64 {
    if j < k {
        dt * dt * ((k - j) as f64 - 0.5)
    } else {
        0.0
    }
}

/// Condensed corridor QP over stacked inputs `[u_0; u_1; ...]` (3 per step),
/// followed by one slack variable per knot when `slack` is set.
///
/// Knot `k` must lie in `polys[k - 1]` and, for `k < N`, in `polys[k]` as
/// well, so the chord between consecutive knots stays inside one polyhedron.
pub fn corridor_problem(
    x0: &PosState,
    p_d: &[Vec3],
    corridor: &SafeCorridor,
    hz: &HorizonConfig,
    beta: f64,
    opts: &CorridorQpOptions,
    slack: bool,
) -> Result<QpProblem> {
    let n = p_d.len();
    if n == 0 || n != hz.n {
        return Err(Error::InvalidArgument(format!("expected {} desired positions, got {n}", hz.n)));
    }
    if corridor.polys.len() != n {
        return Err(Error::InvalidArgument(format!("corridor has {} polyhedra for {n} knots", corridor.polys.len())));
    }
    let dt = hz.dt;
    let nu = 3 * n;
    let nz = nu + if slack { n } else { 0 };
    let free = |k: usize| x0.p + x0.v * (k as f64 * dt);

    // scalar prediction matrix shared by the three axes
    let pm = DMatrix::from_fn(n, n, |r, j| pos_coeff(r + 1, j, dt));
    let ptp = pm.tr_mul(&pm);
    let mut h = DMatrix::zeros(nz, nz);
    let mut g = DVector::zeros(nz);
    for j in 0..n {
        for l in 0..n {
            for i in 0..3 {
                h[(3 * j + i, 3 * l + i)] = 2.0 * ptp[(j, l)];
            }
        }
        for i in 0..3 {
            h[(3 * j + i, 3 * j + i)] += 2.0 * beta;
            g[3 * j + i] = 2.0 * (0..n).map(|r| pm[(r, j)] * (free(r + 1)[i] - p_d[r][i])).sum::<f64>();
        }
    }
    if slack {
        for k in 0..n {
            h[(nu + k, nu + k)] = 2.0 * opts.slack_weight;
        }
    }

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for k in 1..=n {
        for i in 0..3 {
            let coeffs: Vec<(usize, f64)> = (0..k).map(|j| (3 * j + i, dt)).collect();
            rows.push((coeffs.clone(), hz.v_max[i] - x0.v[i]));
            rows.push((coeffs.into_iter().map(|(c, v)| (c, -v)).collect(), x0.v[i] - hz.v_min[i]));
        }
    }
    for k in 1..=n {
        let mut polys = vec![&corridor.polys[k - 1]];
        if k < n {
            polys.push(&corridor.polys[k]);
        }
        let fk = free(k);
        let mut seen: Vec<&HalfSpace> = Vec::new();
        for poly in polys {
            for face in &poly.halfspaces {
                if seen.contains(&face) {
                    continue;
                }
                seen.push(face);
                let mut coeffs = Vec::with_capacity(3 * k + 1);
                for j in 0..k {
                    let c = pos_coeff(k, j, dt);
                    for i in 0..3 {
                        if face.normal[i] != 0.0 {
                            coeffs.push((3 * j + i, face.normal[i] * c));
                        }
                    }
                }
                if slack {
                    coeffs.push((nu + k - 1, -1.0));
                }
                rows.push((coeffs, face.offset - opts.margin - face.normal.dot(&fk)));
            }
        }
    }
    let mut a = DMatrix::zeros(rows.len(), nz);
    let mut b = DVector::zeros(rows.len());
    for (r, (coeffs, rhs)) in rows.into_iter().enumerate() {
        for (c, v) in coeffs {
            a[(r, c)] += v;
        }
        b[r] = rhs;
    }
    let mut lo = DVector::zeros(nz);
    let mut hi = DVector::zeros(nz);
    for j in 0..n {
        for i in 0..3 {
            lo[3 * j + i] = hz.u_min[i];
            hi[3 * j + i] = hz.u_max[i];
        }
    }
    for k in 0..nz - nu {
        lo[nu + k] = 0.0;
        hi[nu + k] = f64::INFINITY;
    }
    Ok(QpProblem { h, g, a, b, lo, hi })
}

/// Tracks `p_d` (knots 1..=N) inside the corridor.
///
/// `observer` sees every QP handed to the solver with its solution, which
/// lets callers audit scenario solves.
pub fn plan_in_corridor(
    t0: f64,
    x0: &PosState,
    p_d: &[Vec3],
    corridor: &SafeCorridor,
    hz: &HorizonConfig,
    beta: f64,
    opts: &CorridorQpOptions,
    warm_start: Option<&QpSolution>,
    mut observer: Option<QpObserverMut<'_>>,
) -> Result<CorridorPlan> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    let n = p_d.len();
    let problem = corridor_problem(x0, p_d, corridor, hz, beta, opts, false)?;
    let sol = solve_qp(&problem, warm_start, &opts.settings)?;
    if let Some(obs) = observer.as_deref_mut() {
        obs(&problem, &sol);
    }
    if sol.is_optimal() {
        let trajectory = inputs_to_trajectory(t0, x0, &sol.z, n, hz.dt)?;
        return Ok(CorridorPlan { trajectory, solution: sol, max_slack: 0.0, used_slack: false });
    }
    debug!("corridor qp {:?} after {} iterations; retrying with slack", sol.status, sol.iterations);
    let problem = corridor_problem(x0, p_d, corridor, hz, beta, opts, true)?;
    let sol = solve_qp(&problem, None, &opts.settings)?;
    if let Some(obs) = observer {
        obs(&problem, &sol);
    }
    let max_slack = sol.z.rows(3 * n, n).amax();
    if !sol.is_optimal() || max_slack > opts.slack_cap {
        return Err(Error::CorridorInfeasible { max_slack });
    }
    let trajectory = inputs_to_trajectory(t0, x0, &sol.z, n, hz.dt)?;
    Ok(CorridorPlan { trajectory, solution: sol, max_slack, used_slack: true })
}

fn inputs_to_trajectory(t0: f64, x0: &PosState, z: &DVector<f64>, n: usize, dt: f64) -> Result<Trajectory> {
    let inputs: Vec<PosInput> = (0..n).map(|j| PosInput::new(Vec3::new(z[3 * j], z[3 * j + 1], z[3 * j + 2]))).collect();
    rollout_at(t0, x0, &inputs, dt)
}

/// Gimbal angles that point from `p_self` at `p_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationTarget {
    pub heading: f64,
    pub pitch: f64,
    /// Set when the heading (or both angles) could not be determined and
    /// the previous values were kept.
    pub held: bool,
}

/// Heading `atan2(r_y, r_x)` and pitch `asin(r_z / |r|)` of `r = p_t - p_self`.
///
/// When the target is straight above or below, the heading of `previous`
/// is kept; when the two points coincide both angles are kept.
pub fn desired_orientation(p_self: &Vec3, p_t: &Vec3, previous: &OriState) -> OrientationTarget {
    let r = p_t - p_self;
    let norm = r.norm();
    if norm < 1e-6 {
        return OrientationTarget { heading: previous.heading, pitch: previous.pitch, held: true };
    }
    let pitch = (r.z / norm).clamp(-1.0, 1.0).asin();
    if r.xy().norm() < 1e-6 {
        return OrientationTarget { heading: previous.heading, pitch, held: true };
    }
    OrientationTarget { heading: r.y.atan2(r.x), pitch, held: false }
}

/// Condensed single-axis orientation QP over `N` angular accelerations.
///
/// `angle_limits` adds bounds on the angle itself (the gimbal pitch range);
/// with `soft_limits` those rows share one penalized slack variable.
pub fn orientation_axis_problem(
    a0: f64,
    w0: f64,
    targets: &[f64],
    dt: f64,
    gamma: f64,
    rate_limits: (f64, f64),
    input_limits: (f64, f64),
    angle_limits: Option<(f64, f64)>,
    soft_limits: bool,
) -> QpProblem {
    let n = targets.len();
    let soft = soft_limits && angle_limits.is_some();
    let nz = n + soft as usize;
    let pm = DMatrix::from_fn(n, n, |r, j| pos_coeff(r + 1, j, dt));
    let mut h = DMatrix::zeros(nz, nz);
    h.view_mut((0, 0), (n, n)).copy_from(&(pm.tr_mul(&pm) * 2.0));
    for j in 0..n {
        h[(j, j)] += 2.0 * gamma;
    }
    let resid = DVector::from_fn(n, |r, _| a0 + w0 * (r + 1) as f64 * dt - targets[r]);
    let mut g = DVector::zeros(nz);
    g.rows_mut(0, n).copy_from(&(pm.tr_mul(&resid) * 2.0));
    if soft {
        h[(n, n)] = 2.0 * 1e4;
    }

    let m = 2 * n + if angle_limits.is_some() { 2 * n } else { 0 };
    let mut a = DMatrix::zeros(m, nz);
    let mut b = DVector::zeros(m);
    for k in 1..=n {
        let r = 2 * (k - 1);
        for j in 0..k {
            a[(r, j)] = dt;
            a[(r + 1, j)] = -dt;
        }
        b[r] = rate_limits.1 - w0;
        b[r + 1] = w0 - rate_limits.0;
        if let Some((lo, hi)) = angle_limits {
            let r = 2 * n + 2 * (k - 1);
            for j in 0..k {
                a[(r, j)] = pm[(k - 1, j)];
                a[(r + 1, j)] = -pm[(k - 1, j)];
            }
            let free = a0 + w0 * k as f64 * dt;
            b[r] = hi - free;
            b[r + 1] = free - lo;
            if soft {
                a[(r, n)] = -1.0;
                a[(r + 1, n)] = -1.0;
            }
        }
    }
    let mut lo = DVector::from_element(nz, input_limits.0);
    let mut hi = DVector::from_element(nz, input_limits.1);
    if soft {
        lo[n] = 0.0;
        hi[n] = f64::INFINITY;
    }
    QpProblem { h, g, a, b, lo, hi }
}

#[derive(Clone, Debug)]
pub struct OrientationPlan {
    pub plan: OriPlan,
    pub heading: QpSolution,
    pub pitch: QpSolution,
    /// Set when the gimbal limits had to be relaxed.
    pub softened: bool,
}

/// Plans heading and pitch independently to track `targets` (knots 1..=N).
///
/// Desired headings are unwrapped step by step starting from the current
/// heading, so the quadratic model never sees the +-pi seam.
pub fn plan_orientation(
    t0: f64,
    x0: &OriState,
    targets: &[Vec2],
    hz: &HorizonConfig,
    gamma: f64,
    settings: &QpSettings,
    mut observer: Option<QpObserverMut<'_>>,
) -> Result<OrientationPlan> {
    let n = targets.len();
    if n != hz.n {
        return Err(Error::InvalidArgument(format!("expected {} orientation targets, got {n}", hz.n)));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let mut x = *x0;
    if x.pitch < hz.pitch_min || x.pitch > hz.pitch_max {
        warn!("gimbal pitch {:.3} outside [{}, {}]; clamping", x.pitch, hz.pitch_min, hz.pitch_max);
        x.pitch = x.pitch.clamp(hz.pitch_min, hz.pitch_max);
    }
    for i in 0..2 {
        x.rates[i] = x.rates[i].clamp(hz.omega_min[i], hz.omega_max[i]);
    }
    let mut prev = x.heading;
    let headings: Vec<f64> = targets
        .iter()
        .map(|t| {
            prev = unwrap_near(t.x, prev);
            prev
        })
        .collect();
    let pitches: Vec<f64> = targets.iter().map(|t| t.y).collect();

    let mut solve_axis = |i: usize, a0: f64, tgt: &[f64], limits: Option<(f64, f64)>| -> Result<(QpSolution, bool)> {
        let rate = (hz.omega_min[i], hz.omega_max[i]);
        let input = (hz.theta_min[i], hz.theta_max[i]);
        let p = orientation_axis_problem(a0, x.rates[i], tgt, hz.dt, gamma, rate, input, limits, false);
        let sol = solve_qp(&p, None, settings)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&p, &sol);
        }
        if sol.is_optimal() || limits.is_none() {
            return Ok((sol, false));
        }
        warn!("orientation axis {i} qp {:?}; softening gimbal limits", sol.status);
        let p = orientation_axis_problem(a0, x.rates[i], tgt, hz.dt, gamma, rate, input, limits, true);
        let sol = solve_qp(&p, None, settings)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&p, &sol);
        }
        Ok((sol, true))
    };
    let (hs, _) = solve_axis(0, x.heading, &headings, None)?;
    let (ps, softened) = solve_axis(1, x.pitch, &pitches, Some((hz.pitch_min, hz.pitch_max)))?;
    if !hs.is_optimal() || !ps.is_optimal() {
        return Err(Error::Diverged { iterations: hs.iterations.max(ps.iterations), last_finite: hs.z.iter().copied().collect() });
    }

    let inputs: Vec<OriInput> = (0..n).map(|j| OriInput { theta: Vec2::new(hs.z[j], ps.z[j]) }).collect();
    let mut states = Vec::with_capacity(n + 1);
    states.push(x);
    let mut cur = x;
    for u in &inputs {
        cur = step_ori_unwrapped(&cur, u, hz.dt);
        states.push(OriState { heading: normalize_angle(cur.heading), ..cur });
    }
    Ok(OrientationPlan { plan: OriPlan { t0, dt: hz.dt, states, inputs }, heading: hs, pitch: ps, softened })
}
