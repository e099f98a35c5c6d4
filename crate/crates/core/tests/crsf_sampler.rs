use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sg_core::crsf::{for_each_ocrsf, sample_crsf_with, sampler_weight, DEFAULT_MAX_STEPS};
use sg_core::determinants::{loop_entropy, ComplexityCase};
use sg_core::gasket::{build_gasket, dim};
use sg_core::gauge::{build_connection, FluxPair};

#[test]
fn cycle_counts_and_edge_marginals_match_enumeration() {
    let g = build_gasket(1).unwrap();
    let conn = build_connection(&g, FluxPair::new(0.05, 0.05)).unwrap();
    let n = g.num_vertices();
    let acc = Mutex::new((vec![0.0f64; n + 1], vec![0.0f64; n * n], 0.0f64));
    for_each_ocrsf(&g, &conn, |o| {
        let w = sampler_weight(&g, o);
        let mut a = acc.lock().unwrap();
        a.0[o.cycles.len()] += w;
        for (x, &y) in o.successor.iter().enumerate() {
            a.1[x * n + y] += w;
        }
        a.2 += w;
    })
    .unwrap();
    let (counts, edges, z) = acc.into_inner().unwrap();

    let samples = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut got_counts = vec![0usize; n + 1];
    let mut got_edges = vec![0usize; n * n];
    for _ in 0..samples {
        let o = sample_crsf_with(&g, &conn, &mut rng, DEFAULT_MAX_STEPS).unwrap();
        got_counts[o.cycles.len()] += 1;
        for (x, &y) in o.successor.iter().enumerate() {
            got_edges[x * n + y] += 1;
        }
    }
    let within = |p: f64, k: usize| {
        let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
        (k as f64 - samples as f64 * p).abs() <= 3.0 * sigma.max(1.0)
    };
    for (c, (&w, &k)) in counts.iter().zip(&got_counts).enumerate() {
        assert!(within(w / z, k), "{c} cycles: expected p {} got {k}/{samples}", w / z);
    }
    for (e, (&w, &k)) in edges.iter().zip(&got_edges).enumerate() {
        assert!(
            within(w / z, k),
            "edge {}->{}: expected p {} got {k}",
            e / n,
            e % n,
            w / z
        );
    }
}

#[test]
fn noloop_entropy_trend() {
    let target = loop_entropy(ComplexityCase::HalfHalf).unwrap();
    let mut gaps = Vec::new();
    for level in 2..=4 {
        let g = build_gasket(level).unwrap();
        let conn = build_connection(&g, FluxPair::new(0.5, 0.5)).unwrap();
        let v = sg_core::crsf::noloop_log_probability(&g, &conn, 1e-6).unwrap();
        gaps.push((-v / dim(level) as f64 - target).abs());
    }
    assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0], "{gaps:?}");
}
