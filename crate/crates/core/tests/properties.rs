use std::f64::consts::TAU;

use proptest::prelude::*;
use sg_core::decimation::{decimation_kit, decimation_kit_with, psi, Branch};
use sg_core::gasket::{build_gasket, dim, pow3, GasketGraph, Orientation};
use sg_core::gauge::{
    build_connection, build_connection_with, cell_flux, cell_holonomies, restrict_to_previous, Connection, FluxPair,
    HoleFlux,
};
use sg_core::operator::{assemble, eigenvalues};
use sg_core::scalar::circ_dist;

fn flux() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1.0f64, 0.0..1.0f64)
}

fn regauge(g: &GasketGraph, c: &Connection, f: &[f64]) -> Connection {
    let phase = g
        .edges
        .iter()
        .zip(&c.phase)
        .map(|(&[u, v], &p)| p + f[v] - f[u])
        .collect();
    Connection { level: c.level, phase }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn symmetrized_operator_is_hermitian((a, b) in flux(), level in 1usize..=3) {
        let g = build_gasket(level).unwrap();
        let op = assemble(&g, &build_connection(&g, FluxPair::new(a, b)).unwrap()).unwrap();
        prop_assert!(op.hermitian_residual() <= 1e-14);
    }

    #[test]
    fn operator_is_positive_semidefinite((a, b) in flux(), level in 1usize..=3) {
        let g = build_gasket(level).unwrap();
        let op = assemble(&g, &build_connection(&g, FluxPair::new(a, b)).unwrap()).unwrap();
        let ev = eigenvalues(&op).unwrap();
        prop_assert!(ev[0] >= -1e-9, "{}", ev[0]);
        prop_assert!(ev[ev.len() - 1] <= 2.0 + 1e-9);
    }

    #[test]
    fn spectrum_is_gauge_invariant(
        (a, b) in flux(),
        level in 1usize..=3,
        root in 0usize..1000,
        shifts in prop::collection::vec(0.0..1.0f64, 42),
    ) {
        let g = build_gasket(level).unwrap();
        let fl = FluxPair::new(a, b);
        let c0 = build_connection_with(&g, fl, HoleFlux::Lattice, 0).unwrap();
        let c1 = build_connection_with(&g, fl, HoleFlux::Lattice, root % g.num_vertices()).unwrap();
        let f: Vec<f64> = (0..g.num_vertices()).map(|v| shifts[v % shifts.len()]).collect();
        let c2 = regauge(&g, &c0, &f);
        let e0 = eigenvalues(&assemble(&g, &c0).unwrap()).unwrap();
        for c in [c1, c2] {
            let e = eigenvalues(&assemble(&g, &c).unwrap()).unwrap();
            let worst = e0.iter().zip(&e).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(worst <= 1e-9, "{}", worst);
        }
    }

    #[test]
    fn reduced_fluxes_do_not_depend_on_the_arg_branch((a, b) in flux(), l in -1.0..3.0f64) {
        let k = decimation_kit_with(FluxPair::new(a, b), l, Branch::Polar);
        let p = psi(a, b, l);
        prop_assume!(p.norm() > 1e-9);
        // arg in (-π, π] instead of [0, 2π)
        let t = p.im.atan2(p.re) / TAU;
        let ad = 3.0 * a + b + 3.0 * t;
        let bd = 3.0 * b + a - 3.0 * t;
        prop_assert!(circ_dist(ad, k.alpha_down) <= 1e-12);
        prop_assert!(circ_dist(bd, k.beta_down) <= 1e-12);
    }

    #[test]
    fn connection_realizes_cell_fluxes((a, b) in flux(), level in 1usize..=5) {
        let g = build_gasket(level).unwrap();
        let fl = FluxPair::new(a, b);
        let c = build_connection(&g, fl).unwrap();
        for (cell, h) in g.cells.iter().zip(cell_holonomies(&g, &c).unwrap()) {
            prop_assert!(circ_dist(h, cell_flux(cell, fl, HoleFlux::Lattice)) <= 1e-12);
        }
    }

    #[test]
    fn restriction_carries_the_reduced_fluxes((a, b) in flux(), l in 0.0..2.0f64, level in 2usize..=3) {
        let fl = FluxPair::new(a, b);
        let k = decimation_kit(fl, l);
        prop_assume!(k.r.is_some());
        let g = build_gasket(level).unwrap();
        let (coarse, omega) = restrict_to_previous(&g, &build_connection(&g, fl).unwrap(), k.twist).unwrap();
        let down = FluxPair::new(k.alpha_down, k.beta_down);
        for (cell, h) in coarse.cells.iter().zip(cell_holonomies(&coarse, &omega).unwrap()) {
            prop_assert!(circ_dist(h, cell_flux(cell, down, HoleFlux::Lattice)) <= 1e-10);
        }
        prop_assert!(circ_dist(k.alpha_down + k.beta_down, 4.0 * (a + b)) <= 1e-10);
    }

    #[test]
    fn gasket_counts(level in 0usize..=6) {
        let g = build_gasket(level).unwrap();
        prop_assert_eq!(g.num_vertices(), dim(level));
        prop_assert_eq!(g.edges.len(), pow3(level + 1));
        prop_assert_eq!(g.edges.len() - g.num_vertices() + 1, g.cells.len());
        prop_assert_eq!(g.count_cells(Orientation::Upright), pow3(level));
        for v in 0..g.num_vertices() {
            prop_assert_eq!(g.degree(v), if g.is_corner(v) { 2 } else { 4 });
        }
    }
}

#[test]
fn psi_is_real_exactly_for_half_integer_fluxes() {
    let lambdas: Vec<f64> = (0..50).map(|k| 2.0 * k as f64 / 49.0).collect();
    for i in 0..100 {
        for j in 0..100 {
            let (a, b) = (i as f64 / 100.0, j as f64 / 100.0);
            let real = lambdas.iter().all(|&l| psi(a, b, l).im.abs() <= 1e-12);
            let half = (i == 0 || i == 50) && (j == 0 || j == 50);
            assert_eq!(real, half, "({a}, {b})");
        }
    }
}
