//! Cross-check the entropic inner solve against exact optimal transport on
//! a desk-scale instance: at small eta the regularized plan's cost lands on
//! the assignment optimum.
//!
//! Run with: cargo run --example entropic_vs_exact

use kpw::kernel::{gram_bundle, KernelParams, SampleSet};
use kpw::manifold::SpherePoint;
use kpw::oracle::exact_ot;
use kpw::rng::Stream;
use kpw::solver::{projected_points, sinkhorn_fixed_s, SolverConfig};
use ndarray::Array2;

fn main() {
    let mut stream = Stream::new(5);
    let xs = SampleSet::new(Array2::from_shape_fn((6, 2), |_| stream.next_normal())).unwrap();
    let ys = SampleSet::new(Array2::from_shape_fn((6, 2), |_| {
        stream.next_normal() + 1.5
    }))
    .unwrap();
    let params = KernelParams::new(2.0, 0.5, 1).unwrap();
    let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
    let s = SpherePoint::random(bundle.sphere_dim(), &mut stream);

    println!(
        "{:>8} {:>14} {:>14} {:>10}",
        "eta", "entropic", "exact", "rel err"
    );
    let (fx, fy) = projected_points(&s, &bundle);
    let exact = exact_ot(&fx, &fy).unwrap();
    for eta in [0.1, 0.01, 0.001] {
        let config = SolverConfig {
            eta,
            ..SolverConfig::default()
        };
        let solved = sinkhorn_fixed_s(&bundle, &s, &config, 1e-10, 200_000).unwrap();
        let rel = (solved.transport_cost - exact.cost).abs() / exact.cost;
        println!(
            "{eta:>8} {:>14.8} {:>14.8} {:>10.2e}",
            solved.transport_cost, exact.cost, rel
        );
    }
}
