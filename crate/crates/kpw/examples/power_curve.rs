//! Test power across ambient dimensions for the mean-shift alternative,
//! with permutation calibration. Reduced version of the benchmark sweep.
//!
//! Run with: cargo run --example power_curve

use kpw::inference::permutation_test;
use kpw::kernel::{median_heuristic, KernelParams, SampleSet};
use kpw::rng::derive_seed;
use kpw::solver::SolverConfig;
use kpw::synthdata::{generate_pair, DatasetSpec, Family};
use rayon::prelude::*;

fn main() {
    let n = 60;
    let trials = 8;
    println!("mean shift of norm 0.8, n = m = {n}, {trials} trials, alpha = 0.05");
    println!("{:>6} {:>8}", "D", "power");
    for dim in [5usize, 20, 50] {
        let rejects: usize = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(7, &[dim as u64, trial as u64]);
                let spec = DatasetSpec {
                    family: Family::GaussMeanShift,
                    dim,
                    n,
                    m: n,
                    intrinsic_dim: None,
                    seed,
                };
                let (xs, ys) = generate_pair(&spec, true).unwrap();
                let pooled = SampleSet::concat(&xs, &ys).unwrap();
                let sigma2 = median_heuristic(&pooled).unwrap();
                let params = KernelParams::new(sigma2, 0.5, 1).unwrap();
                let config = SolverConfig {
                    eta: 0.05,
                    max_iters: 40,
                    seed,
                    ..SolverConfig::default()
                };
                let outcome = permutation_test(&xs, &ys, &params, &config, 49, 0.05, seed).unwrap();
                usize::from(outcome.reject_null)
            })
            .sum();
        println!("{dim:>6} {:>8.2}", rejects as f64 / trials as f64);
    }
}
