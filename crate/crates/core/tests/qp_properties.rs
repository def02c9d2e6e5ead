mod common;

use approx::assert_abs_diff_eq;
use cineswarm_core::corridor::{HalfSpace, Polyhedron, SafeCorridor};
use cineswarm_core::dynamics::{rollout, step_pos};
use cineswarm_core::qpsolve::{
    corridor_problem, orientation_axis_problem, plan_in_corridor, plan_orientation, solve_qp, CorridorQpOptions,
    QpMethod, QpProblem, QpSettings, QpStatus,
};
use cineswarm_core::{HorizonConfig, OriState, PosInput, PosState, Vec2, Vec3};
use common::{dual_projected_gradient, kkt_check, objective, random_spd};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random problem that is feasible by construction: the constraints are
/// built around a point strictly inside them.
fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QpProblem {
    let h = random_spd(n, rng);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let inner = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * &inner + DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    let lo = inner.map(|v| v - rng.random_range(0.1..2.0));
    let hi = inner.map(|v| v + rng.random_range(0.1..2.0));
    QpProblem { h, g, a, b, lo, hi }
}

#[test]
fn random_problems_pass_independent_kkt_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.random_range(2..40);
        let m = rng.random_range(0..2 * n);
        let p = random_problem(&mut rng, n, m);
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "problem {i} (n {n}, m {m})");
        let k = kkt_check(&p, &s);
        assert!(k.worst() <= 1e-5, "problem {i}: stationarity {:e} primal {:e} comp {:e} sign {:e}", k.stationarity, k.primal, k.complementarity, k.dual_sign);
        worst = worst.max(k.worst());
    }
    eprintln!("worst KKT residual over 100 problems: {worst:e}");
}

#[test]
fn objective_matches_first_order_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let p = random_problem(&mut rng, 30, 20);
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        assert!(s.is_optimal());
        let z_ref = dual_projected_gradient(&p, 3000);
        let (f, f_ref) = (objective(&p, &s.z), objective(&p, &z_ref));
        assert!((f - f_ref).abs() <= 1e-5 * (1.0 + f_ref.abs()), "solver {f} oracle {f_ref}");
    }
}

#[test]
fn admm_path_passes_kkt_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let set = QpSettings { method: QpMethod::Admm, max_iter: 20000, ..Default::default() };
    for i in 0..20 {
        let n = rng.random_range(2..20);
        let m = rng.random_range(0..n);
        let p = random_problem(&mut rng, n, m);
        let s = solve_qp(&p, None, &set).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "problem {i}");
        assert!(kkt_check(&p, &s).worst() <= 1e-5);
    }
}

#[test]
fn admm_handles_semidefinite_cost() {
    // linear cost in z1, bounded by the box
    let p = QpProblem::boxed(
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])),
        DVector::from_vec(vec![-2.0, 1.0]),
        DVector::from_element(2, -1.0),
        DVector::from_element(2, 1.0),
    );
    let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
    assert!(s.is_optimal());
    assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(s.z[1], -1.0, epsilon = 1e-6);
}

#[test]
fn solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_problem(&mut rng, 25, 30);
    let a = solve_qp(&p, None, &QpSettings::default()).unwrap();
    let b = solve_qp(&p, None, &QpSettings::default()).unwrap();
    assert_eq!(a, b);
}

fn box_poly(lo: Vec3, hi: Vec3) -> Polyhedron {
    let mut halfspaces = Vec::new();
    for i in 0..3 {
        let mut n = Vec3::zeros();
        n[i] = 1.0;
        halfspaces.push(HalfSpace { normal: n, offset: hi[i] });
        halfspaces.push(HalfSpace { normal: -n, offset: -lo[i] });
    }
    Polyhedron { halfspaces }
}

fn uniform_corridor(n: usize, poly: Polyhedron) -> SafeCorridor {
    SafeCorridor { waypoints: vec![Vec3::zeros(); n + 1], polys: vec![poly; n], dropped_spheres: 0 }
}

#[test]
fn tight_wall_is_ridden() {
    let hz = HorizonConfig { n: 20, ..Default::default() };
    let mut poly = box_poly(Vec3::new(-20.0, -20.0, -20.0), Vec3::new(20.0, 20.0, 20.0));
    poly.halfspaces.push(HalfSpace { normal: Vec3::y(), offset: 0.5 });
    let corridor = uniform_corridor(hz.n, poly);
    let opts = CorridorQpOptions { margin: 0.0, ..Default::default() };
    let p_d = vec![Vec3::new(0.0, 1.0, 0.0); hz.n];
    let x0 = PosState::at_rest(Vec3::zeros());
    let problem = corridor_problem(&x0, &p_d, &corridor, &hz, 0.05, &opts, false).unwrap();
    let plan = plan_in_corridor(0.0, &x0, &p_d, &corridor, &hz, 0.05, &opts, None, None).unwrap();
    let k = kkt_check(&problem, &plan.solution);
    assert!(k.worst() <= 1e-5);
    let ys: Vec<f64> = plan.trajectory.states.iter().map(|s| s.p.y).collect();
    assert!(ys.iter().all(|y| *y <= 0.5 + 1e-6));
    let riding = ys.iter().filter(|y| (**y - 0.5).abs() < 1e-6).count();
    assert!(riding >= hz.n / 2, "only {riding} knots on the wall: {ys:?}");
    assert!(plan.solution.y_ineq.iter().all(|y| *y >= -1e-7));
}

#[test]
fn condensed_prediction_matches_rollout() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let hz = HorizonConfig::default();
    let x0 = PosState::new(Vec3::new(1.0, -2.0, 3.0), Vec3::new(0.5, 0.2, -0.1));
    let inputs: Vec<PosInput> =
        (0..hz.n).map(|_| PosInput::new(Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0)))).collect();
    let z = DVector::from_iterator(3 * hz.n, inputs.iter().flat_map(|u| u.a.iter().copied()));
    // tracking error of the condensed objective evaluated at z equals the rollout's
    let p_d: Vec<Vec3> = (0..hz.n).map(|k| Vec3::new(k as f64 * 0.1, 1.0, 2.0)).collect();
    let corridor = uniform_corridor(hz.n, box_poly(Vec3::repeat(-1e3), Vec3::repeat(1e3)));
    let p = corridor_problem(&x0, &p_d, &corridor, &hz, 0.05, &CorridorQpOptions::default(), false).unwrap();
    let traj = rollout(&x0, &inputs, hz.dt).unwrap();
    let direct: f64 = traj.states[1..].iter().zip(&p_d).map(|(s, d)| (s.p - d).norm_squared()).sum::<f64>()
        + 0.05 * inputs.iter().map(|u| u.a.norm_squared()).sum::<f64>();
    let constant: f64 = (1..=hz.n).map(|k| (x0.p + x0.v * (k as f64 * hz.dt) - p_d[k - 1]).norm_squared()).sum();
    assert_abs_diff_eq!(objective(&p, &z) + constant, direct, epsilon = 1e-9 * direct.max(1.0));
    // step-by-step agreement of states
    let mut x = x0;
    for (k, u) in inputs.iter().enumerate() {
        x = step_pos(&x, u, hz.dt).unwrap();
        assert_abs_diff_eq!((x.p - traj.states[k + 1].p).amax(), 0.0, epsilon = 1e-9);
    }
}

#[test]
fn corridor_plan_respects_faces_and_velocity() {
    let hz = HorizonConfig::default();
    let corridor = uniform_corridor(hz.n, box_poly(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(30.0, 1.0, 4.0)));
    let x0 = PosState::new(Vec3::new(0.0, 0.0, 2.0), Vec3::new(1.0, 0.0, 0.0));
    let p_d: Vec<Vec3> = (1..=hz.n).map(|k| Vec3::new(k as f64, 3.0, 2.0)).collect();
    let opts = CorridorQpOptions::default();
    let plan = plan_in_corridor(0.0, &x0, &p_d, &corridor, &hz, 0.05, &opts, None, None).unwrap();
    assert!(!plan.used_slack);
    for s in &plan.trajectory.states[1..] {
        assert!(corridor.polys[0].max_violation(&s.p) <= -opts.margin + 1e-6);
        assert!(s.v.iter().zip(hz.v_max.iter()).all(|(v, m)| *v <= m + 1e-6));
    }
    assert!(plan.trajectory.dynamics_residual() < 1e-12);
}

#[test]
fn conflicting_corridor_uses_slack_then_fails() {
    let hz = HorizonConfig { n: 10, ..Default::default() };
    // the vehicle starts 0.3 m outside the box and cannot get in after one step
    let poly = box_poly(Vec3::new(0.3, -5.0, -5.0), Vec3::new(5.0, 5.0, 5.0));
    let corridor = uniform_corridor(hz.n, poly);
    let x0 = PosState::at_rest(Vec3::zeros());
    let p_d = vec![Vec3::new(1.0, 0.0, 0.0); hz.n];
    let plan = plan_in_corridor(0.0, &x0, &p_d, &corridor, &hz, 0.05, &CorridorQpOptions::default(), None, None).unwrap();
    assert!(plan.used_slack && plan.max_slack > 0.0 && plan.max_slack < 0.5);
    let far = uniform_corridor(hz.n, box_poly(Vec3::new(3.0, -5.0, -5.0), Vec3::new(5.0, 5.0, 5.0)));
    let err = plan_in_corridor(0.0, &x0, &p_d, &far, &hz, 0.05, &CorridorQpOptions::default(), None, None).unwrap_err();
    assert!(matches!(err, cineswarm_core::Error::CorridorInfeasible { max_slack } if max_slack > 0.5));
}

#[test]
fn orientation_axes_decouple() {
    let hz = HorizonConfig::default();
    let n = hz.n;
    let heading: Vec<f64> = (1..=n).map(|k| 0.3 + 0.01 * k as f64).collect();
    let pitch: Vec<f64> = (1..=n).map(|k| -0.2 - 0.02 * k as f64).collect();
    let ph = orientation_axis_problem(0.1, 0.2, &heading, hz.dt, 0.5, (-1.0, 1.0), (-2.0, 2.0), None, false);
    let pp = orientation_axis_problem(-0.1, 0.0, &pitch, hz.dt, 0.5, (-1.0, 1.0), (-2.0, 2.0), Some((hz.pitch_min, hz.pitch_max)), false);
    let set = QpSettings::default();
    let sh = solve_qp(&ph, None, &set).unwrap();
    let sp = solve_qp(&pp, None, &set).unwrap();
    let (mh, mp) = (ph.a.nrows(), pp.a.nrows());
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ph.h);
    h.view_mut((n, n), (n, n)).copy_from(&pp.h);
    let mut a = DMatrix::zeros(mh + mp, 2 * n);
    a.view_mut((0, 0), (mh, n)).copy_from(&ph.a);
    a.view_mut((mh, n), (mp, n)).copy_from(&pp.a);
    let cat = |x: &DVector<f64>, y: &DVector<f64>| DVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied());
    let joint = QpProblem { h, g: cat(&ph.g, &pp.g), a, b: cat(&ph.b, &pp.b), lo: cat(&ph.lo, &pp.lo), hi: cat(&ph.hi, &pp.hi) };
    let sj = solve_qp(&joint, None, &set).unwrap();
    assert!(sh.is_optimal() && sp.is_optimal() && sj.is_optimal());
    assert_abs_diff_eq!((sj.z - cat(&sh.z, &sp.z)).amax(), 0.0, epsilon = 1e-8);
}

#[test]
fn small_heading_step_is_approached_monotonically() {
    let hz = HorizonConfig::default();
    let x0 = OriState::new(0.0, 0.0);
    let plan = plan_orientation(0.0, &x0, &vec![Vec2::new(0.2, 0.0); hz.n], &hz, 50.0, &QpSettings::default(), None).unwrap();
    let h: Vec<f64> = plan.plan.states.iter().map(|s| s.heading).collect();
    assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{h:?}");
    // slow: still well short of the target after one second
    assert!(h[5] < 0.05, "{h:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn box_qp_solutions_are_projected_minimizers(
        diag in prop::collection::vec(0.1f64..10.0, 1..8),
        g in prop::collection::vec(-10.0f64..10.0, 8),
        width in 0.1f64..3.0,
    ) {
        // separable problem: the minimizer is the clamped unconstrained one
        let n = diag.len();
        let p = QpProblem::boxed(
            DMatrix::from_diagonal(&DVector::from_vec(diag.clone())),
            DVector::from_fn(n, |i, _| g[i]),
            DVector::from_element(n, -width),
            DVector::from_element(n, width),
        );
        let s = solve_qp(&p, None, &QpSettings::default()).unwrap();
        prop_assert!(s.is_optimal());
        for i in 0..n {
            prop_assert!((s.z[i] - (-g[i] / diag[i]).clamp(-width, width)).abs() < 1e-6);
        }
    }
}

