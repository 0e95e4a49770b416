use ksfv::diagnostics::{csiszar_kullback_check, relative_entropy};
use ksfv::dspace::{self, Field};
use ksfv::scheme::{self, Scheme};
use ksfv::solver;
use ksfv::{Mesh, ModelParams, PicardConfig, Rect};
use proptest::prelude::*;

fn mesh_strategy() -> impl Strategy<Value = Mesh> {
    (1usize..7, 1usize..7, 0.3f64..3.0, 0.3f64..3.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(nx, ny, w, h, x0, y0)| {
        Mesh::cartesian(nx.max(2), ny, Rect::new(x0, x0 + w, y0, y0 + h)).unwrap()
    })
}

/// A mesh with a nonnegative density on it; about a quarter of the cells
/// are empty.
fn mesh_and_density() -> impl Strategy<Value = (Mesh, Field)> {
    mesh_strategy().prop_flat_map(|mesh| {
        let n = mesh.num_cells();
        (Just(mesh), prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0f64..10.0], n))
    })
    .prop_filter_map("all cells empty", |(mesh, v)| {
        v.iter().any(|&x| x > 0.0).then(|| {
            let f = Field::new(&mesh, v).unwrap();
            (mesh, f)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_keeps_density_nonnegative_and_mass_fixed(
        (mesh, n0) in mesh_and_density(),
        delta in prop_oneof![Just(0.0), 0.0f64..0.1],
        mu in 0.1f64..2.0,
        dt in 1e-4f64..1e-2,
    ) {
        let params = ModelParams::new(delta, mu).unwrap();
        let scheme = Scheme::new(&mesh, params).unwrap();
        let state = scheme.initial_state(n0).unwrap();
        let cfg = PicardConfig { anderson_depth: 3, max_iter: 500, ..PicardConfig::default() };
        let step = scheme.advance(&state, dt, &cfg).unwrap();
        prop_assert!(step.state.n.min() >= 0.0);
        let m0 = dspace::integral(&mesh, &state.n);
        let m1 = dspace::integral(&mesh, &step.state.n);
        prop_assert!((m1 - m0).abs() <= 1e-10 * m0, "{m0} -> {m1}");
    }

    #[test]
    fn signal_mean_is_mu_times_density_mean(
        (mesh, n) in mesh_and_density(),
        delta in 0.0f64..1.0,
        mu in 0.01f64..5.0,
    ) {
        let scheme = Scheme::new(&mesh, ModelParams::new(delta, mu).unwrap()).unwrap();
        let s = scheme.solve_signal(&n).unwrap();
        let lhs = dspace::integral(&mesh, &s);
        let rhs = mu * dspace::integral(&mesh, &n);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn density_matrix_column_margins_are_cell_measure_over_dt(
        (mesh, s) in mesh_and_density(),
        dt in 1e-5f64..1.0,
        shift in -5.0f64..5.0,
    ) {
        let s = s.shifted(shift);
        let n_prev = Field::constant(&mesh, 1.0);
        let sys = scheme::assemble_n_system(&mesh, &n_prev, &s, dt);
        let dom = solver::check_column_dominance(&sys);
        prop_assert!(dom.strictly_dominant());
        for (m, c) in dom.margins.iter().zip(mesh.cells()) {
            let want = c.area / dt;
            prop_assert!((m - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn csiszar_kullback_holds((mesh, n) in mesh_and_density()) {
        let n_star = dspace::mean_value(&mesh, &n);
        let ck = csiszar_kullback_check(&mesh, &n, n_star).unwrap();
        prop_assert!(ck.holds(), "{} > {}", ck.lhs, ck.rhs);
    }

    #[test]
    fn relative_entropy_is_nonnegative_and_vanishes_at_the_mean((mesh, n) in mesh_and_density()) {
        let n_star = dspace::mean_value(&mesh, &n);
        prop_assert!(relative_entropy(&mesh, &n, n_star).unwrap() >= 0.0);
        let flat = Field::constant(&mesh, n_star);
        prop_assert!(relative_entropy(&mesh, &flat, n_star).unwrap().abs() <= 1e-14 * n_star);
    }

    #[test]
    fn norms_are_absolutely_homogeneous(
        (mesh, u) in mesh_and_density(),
        c in -10.0f64..10.0,
        p in prop_oneof![Just(1.0), Just(2.0), 1.0f64..6.0, Just(f64::INFINITY)],
    ) {
        let cu = u.scaled(c);
        let mut pairs = vec![(dspace::norm_0p(&mesh, &cu, p).unwrap(), dspace::norm_0p(&mesh, &u, p).unwrap())];
        if p.is_finite() {
            pairs.push((dspace::seminorm_1p(&mesh, &cu, p).unwrap(), dspace::seminorm_1p(&mesh, &u, p).unwrap()));
        }
        for (a, b) in pairs {
            prop_assert!((a - c.abs() * b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn injection_preserves_integrals(
        (mesh, u) in mesh_and_density(),
        rx in 1usize..4,
        ry in 1usize..4,
    ) {
        let g = mesh.grid().unwrap();
        let fine = Mesh::cartesian(g.nx * rx, g.ny * ry, g.rect).unwrap();
        let v = dspace::inject(&mesh, &u, &fine).unwrap();
        let (a, b) = (dspace::integral(&mesh, &u), dspace::integral(&fine, &v));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
