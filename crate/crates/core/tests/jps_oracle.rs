mod common;

use cineswarm_core::corridor::{jps_cells, JpsOptions};
use cineswarm_core::world::{Aabb, VoxelGrid};
use cineswarm_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> VoxelGrid {
    let ext = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64);
    let mut g = VoxelGrid::empty(Aabb::new(Vec3::zeros(), ext), 1.0, 1 << 22).unwrap();
    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                if rng.random_bool(density) {
                    g.set_occupied([x, y, z]);
                }
            }
        }
    }
    g
}

fn random_free(rng: &mut ChaCha8Rng, g: &VoxelGrid) -> [i64; 3] {
    let d = g.dims();
    loop {
        let c = [0, 1, 2].map(|i| rng.random_range(0..d[i] as i64));
        if !g.is_occupied_cell(c) {
            return c;
        }
    }
}

fn compare(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> (usize, usize) {
    let g = random_grid(rng, dims, density);
    let s = random_free(rng, &g);
    let t = random_free(rng, &g);
    let opts = JpsOptions { max_expansions: usize::MAX, timeout: None };
    let oracle = common::astar(&g, s, t);
    let jps = jps_cells(&g, s, t, &opts);
    match (oracle, jps) {
        (Some(a), Ok(j)) => {
            assert_eq!(j.moves, a.moves, "cost mismatch {s:?} -> {t:?} on {dims:?} density {density}");
            assert_eq!(j.cost_cells(), a.cost_cells());
            assert_eq!(*j.cells.first().unwrap(), s);
            assert_eq!(*j.cells.last().unwrap(), t);
            (j.expansions, a.expansions)
        }
        (None, Err(_)) => (0, 0),
        (a, j) => panic!("reachability mismatch {s:?} -> {t:?}: astar {} jps {}", a.is_some(), j.is_ok()),
    }
}

#[test]
fn jps_matches_astar_on_fifty_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut je, mut ae, mut worse) = (0, 0, 0);
    for _ in 0..50 {
        let (j, a) = compare(&mut rng, [20, 20, 6], 0.2);
        je += j;
        ae += a;
        worse += (j > a) as usize;
    }
    // jump points can outnumber A* pops on an unlucky dense grid, but not often
    assert!(je < ae, "jps {je} expansions vs astar {ae}");
    assert!(worse <= 5, "{worse} grids where jps expanded more");
}

#[test]
fn jps_matches_astar_on_many_small_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..3000 {
        let dims = [rng.random_range(2..9), rng.random_range(2..9), rng.random_range(1..6)];
        let density = [0.0, 0.05, 0.15, 0.3, 0.45][i % 5];
        compare(&mut rng, dims, density);
    }
}
