use std::sync::OnceLock;

use approx::assert_relative_eq;
use phonon_nm::lindblad::{build_lindblad, dynamical_map, uniform_grid};
use phonon_nm::measures::{analytic_nd, DynamicalMap, ManifoldParams};
use phonon_nm::ode::OdeOptions;
use phonon_nm::quantum::{trace_distance, trace_distance_op};
use phonon_nm::siv::{build_full_hamiltonian, build_siv_hamiltonian, eigenenergies_longitudinal, reference_basis, PhononModeParams, SivParams};
use phonon_nm::sweep::{Axis, GridSpec};
use phonon_nm::units::ghz_to_rad;
use phonon_nm::{DensityMatrix, OperatorMatrix, C64};
use proptest::prelude::*;

fn density(entries: &[(f64, f64)]) -> DensityMatrix {
    let a = OperatorMatrix::from_fn(4, |i, j| C64::new(entries[4 * i + j].0, entries[4 * i + j].1));
    let m = &a * &a.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m * (1.0 / tr)).unwrap()
}

fn state() -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16)
        .prop_filter("non-degenerate", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| density(&v))
}

fn siv() -> SivParams {
    SivParams::from_ghz(45.0, 1.0, 1.0).unwrap()
}

/// Uncoupled (g = 0) SiV map under a tilted field: a Markovian semigroup.
fn markovian_map() -> &'static DynamicalMap {
    static MAP: OnceLock<DynamicalMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let p = siv().with_field([0.4, 0.0, 0.3]);
        let d = p.delta();
        let mode = PhononModeParams { omega_ph: d, g1: 0.0, g2: 0.0, quality: 1e5, temperature: 0.0, n_max: 1 };
        let model = build_lindblad(&p, &mode, ghz_to_rad(0.05), 2.0).unwrap().rescaled(1e-3 * d).unwrap();
        let phonon = mode.fock().projector(0).unwrap();
        dynamical_map(&model, &phonon, &uniform_grid(20.0, 81), &OdeOptions::default(), reference_basis(&p).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_distance_is_a_bounded_metric(a in state(), b in state(), c in state()) {
        let ab = trace_distance(&a, &b).unwrap();
        let ba = trace_distance(&b, &a).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-12);
        let ac = trace_distance(&a, &c).unwrap();
        let cb = trace_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn markovian_maps_contract_trace_distance(a in state(), b in state()) {
        let map = markovian_map();
        let d0 = trace_distance(&a, &b).unwrap();
        let mut prev = d0;
        for k in 1..map.len() {
            let d = trace_distance_op(&map.apply(k, a.op()), &map.apply(k, b.op())).unwrap();
            prop_assert!(d <= prev + 1e-9, "D rose from {prev} to {d} at sample {k}");
            prev = d;
        }
    }

    #[test]
    fn longitudinal_closed_form_matches_eigensolve(
        lambda in 20.0f64..80.0, gx in 0.0f64..5.0, gy in 0.0f64..5.0, bz in -300.0f64..300.0,
    ) {
        let p = SivParams::from_ghz(lambda, gx, gy).unwrap().with_field([0.0, 0.0, bz]);
        let mut closed = eigenenergies_longitudinal(&p).unwrap().to_vec();
        closed.sort_by(f64::total_cmp);
        let numeric = build_siv_hamiltonian(&p).unwrap().eigvalsh().unwrap();
        let scale = numeric.iter().fold(p.delta(), |m, e| m.max(e.abs()));
        for (a, b) in closed.iter().zip(&numeric) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn full_spectrum_is_even_in_each_field_component(bx in 0.0f64..200.0, bz in 0.0f64..200.0) {
        let d = siv().delta();
        let mode = PhononModeParams { omega_ph: d, g1: 1e-3 * d, g2: 1e-3 * d, quality: 1e5, temperature: 0.0, n_max: 3 };
        let e = |x: f64, z: f64| build_full_hamiltonian(&siv().with_field([x, 0.0, z]), &mode).unwrap().eigvalsh().unwrap();
        let e0 = e(bx, bz);
        let scale = e0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, z) in [(-bx, bz), (bx, -bz), (-bx, -bz)] {
            for (a, b) in e(x, z).iter().zip(&e0) {
                prop_assert!((a - b).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn grid_points_round_trip(nx in 2usize..6, ny in 2usize..6, seed in any::<u64>()) {
        let g = GridSpec::new(vec![Axis::linspace("x", 0.0, 1.0, nx).unwrap(), Axis::linspace("y", -1.0, 1.0, ny).unwrap()], seed).unwrap();
        let mut seeds = std::collections::BTreeSet::new();
        for i in 0..g.len() {
            let m = g.multi_index(i);
            prop_assert_eq!(m[0] * ny + m[1], i);
            prop_assert_eq!(g.point(i), vec![g.axes[0].values[m[0]], g.axes[1].values[m[1]]]);
            seeds.insert(g.seed(i));
        }
        prop_assert_eq!(seeds.len(), g.len());
    }

    #[test]
    fn analytic_nd_falls_with_damping(gamma in 0.001f64..0.3, extra in 0.001f64..0.3) {
        let nd = |gs: f64| analytic_nd(&ManifoldParams::from_fock_state(1.0, 1, 0.0, 0.0, gs, 0.0).unwrap()).unwrap();
        prop_assert!(nd(gamma + extra) < nd(gamma));
    }
}

#[test]
fn weakly_damped_analytic_nd_follows_inverse_damping() {
    // ¼ / sinh(x) → 1/(4x) with x = πΓ₀/(2μ), μ → 2|Ω₀| = 2
    let gs = 1e-4;
    let p = ManifoldParams::from_fock_state(1.0, 1, 0.0, 0.0, gs, 0.0).unwrap();
    let x = std::f64::consts::PI * 0.75 * gs / 4.0;
    assert_relative_eq!(analytic_nd(&p).unwrap(), 1.0 / (4.0 * x), max_relative = 1e-3);
}
