use std::hint::black_box;

use cineswarm_bench::{random_grid, random_qp, scenario};
use cineswarm_core::corridor::{build_corridor, jps_cells, DecomposeOptions, JpsOptions, ObstacleView};
use cineswarm_core::qpsolve::{solve_qp, QpSettings};
use cineswarm_core::shots::{plan_leader_reference, predict_target, terminal_goal, ShotCommand, ShotType, TargetEstimate};
use cineswarm_core::sim::{Scenario, Simulator};
use cineswarm_core::world::PointIndex;
use cineswarm_core::{HorizonConfig, PosState, Vec3};
use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

fn qp(c: &mut Criterion) {
    let settings = QpSettings::default();
    let mut group = c.benchmark_group("qp");
    for (n, m) in [(30, 40), (123, 480)] {
        let p = random_qp(n, m, 1);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{n}x{m}")), &p, |b, p| {
            b.iter(|| solve_qp(black_box(p), None, &settings).unwrap())
        });
    }
    group.finish();
}

fn jps(c: &mut Criterion) {
    let grid = random_grid([60, 60, 12], 0.2, 4);
    let opts = JpsOptions { max_expansions: usize::MAX, timeout: None };
    c.bench_function("jps/60x60x12", |b| b.iter(|| jps_cells(&grid, [0, 0, 0], [59, 59, 11], &opts)));
}

fn decomposition(c: &mut Criterion) {
    let forest = scenario("forest.json");
    let index = PointIndex::new(forest.obstacle_points().unwrap(), 2.0);
    let view = ObstacleView { points: &index, spheres: &[] };
    let opts = DecomposeOptions::default();
    // along the clear strip, forty half-metre steps
    let path: Vec<Vec3> = (0..=40).map(|k| Vec3::new(k as f64 * 0.5, 0.0, 2.0)).collect();
    c.bench_function("corridor/40_segments", |b| b.iter(|| build_corridor(black_box(&path), &view, &opts).unwrap()));
}

fn leader_reference(c: &mut Criterion) {
    let s = scenario("tower.json");
    let hz = HorizonConfig::default();
    let est = TargetEstimate { p: Vec3::new(-20.0, -9.0, 1.0), v: Vec3::new(1.0, 0.0, 0.0), timestamp: 0.0 };
    let pred = predict_target(&est, hz.n, hz.dt);
    let x0 = PosState::new(Vec3::new(-26.0, -9.0, 1.6), Vec3::new(1.0, 0.0, 0.0));
    let shot = ShotCommand::new(ShotType::Chase);
    let goal = terminal_goal(&shot, &pred, hz.dt, &x0).unwrap();
    c.bench_function("leader/reference_cold", |b| {
        b.iter(|| plan_leader_reference(0.0, &x0, &shot, goal, &pred, &s.config.cine, &hz, &s.config.nlp, None).unwrap())
    });
}

/// One leader period of the forest run, starting 10 s in.
fn sim_period(c: &mut Criterion) {
    let forest: Scenario = scenario("forest.json");
    let warm = || {
        let mut sim = Simulator::new(forest.clone()).unwrap();
        while sim.time() < 10.0 {
            sim.step();
        }
        sim
    };
    let period = {
        let cfg = &forest.config;
        (cfg.leader_period / cfg.tick).round() as u64
    };
    c.bench_function("sim/forest_leader_period", |b| {
        b.iter_batched(
            warm,
            |mut sim| {
                for _ in 0..period {
                    sim.step();
                }
                sim
            },
            BatchSize::PerIteration,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = qp, jps, decomposition, leader_reference
}
criterion_group! {
    name = slow;
    config = Criterion::default().sample_size(10);
    targets = sim_period
}
criterion_main!(benches, slow);
