mod common;

use common::{dense_solve, TwoByTwo};
use ksfv::scheme::{picard_advance, Scheme};
use ksfv::solver::{self, BandedLu, SparseMatrix, SparseSystem};
use ksfv::{Field, Mesh, ModelParams, PicardConfig, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_by_two_case(delta: f64, mu: f64, dt: f64, n_prev: [f64; 4]) -> f64 {
    let mesh = Mesh::cartesian(2, 2, Rect::centered_unit_square()).unwrap();
    let params = ModelParams::new(delta, mu).unwrap();
    let scheme = Scheme::new(&mesh, params).unwrap();
    let state = scheme.initial_state(Field::new(&mesh, n_prev.to_vec()).unwrap()).unwrap();
    let step = picard_advance(&mesh, &params, &state, dt, &PicardConfig::default()).unwrap();

    let oracle = TwoByTwo {
        h: 0.5,
        dt,
        delta,
        mu,
        n_prev,
    };
    let x0: Vec<f64> = n_prev.iter().copied().chain(n_prev.iter().map(|v| mu * v)).collect();
    let (x, res) = oracle.newton(&x0);
    assert!(res < 1e-12, "newton residual {res:e}");
    let got: Vec<f64> = step.state.n.values().iter().chain(step.state.s.values()).copied().collect();
    got.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn picard_step_matches_dense_newton_on_two_by_two() {
    for (delta, mu, dt, n) in [
        (1e-3, 1.0, 1e-2, [10.0, 2.0, 3.0, 1.0]),
        (0.0, 1.0, 5e-2, [0.0, 8.0, 1.0, 4.0]),
        (0.05, 2.0, 1e-1, [1.0, 1.0, 6.0, 0.5]),
    ] {
        let err = two_by_two_case(delta, mu, dt, n);
        assert!(err <= 1e-8, "delta {delta}: max deviation {err:e}");
    }
}

#[test]
fn banded_lu_matches_dense_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let n = rng.gen_range(1..40);
        let mut t = Vec::new();
        for i in 0..n {
            // Random sparse pattern, no dominance, nonzero diagonal.
            t.push((i, i, rng.gen_range(0.5..2.0) * if rng.gen() { 1.0 } else { -1.0 }));
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        let a = SparseMatrix::from_triplets(n, t).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = dense_solve(a.to_dense(), b.clone());
        let lu = BandedLu::factor_reordered(&a).unwrap();
        let got = lu.solve(&b);
        let scale = want.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let err = got.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9 * scale, "trial {trial}, n = {n}: {err:e}");
        let sys = SparseSystem::new(a, b).unwrap();
        let x = solver::solve(&sys, 1e-12, 3).unwrap();
        assert!(sys.relative_residual(&x) <= 1e-12);
    }
}
