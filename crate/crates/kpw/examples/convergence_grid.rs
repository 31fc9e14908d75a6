//! Sample-size convergence of the empirical statistic when both samples come
//! from the same distribution: the median statistic should fall toward zero
//! as n grows. Reduced version of the benchmark grid.
//!
//! Run with: cargo run --example convergence_grid

use kpw::kernel::KernelParams;
use kpw::rng::derive_seed;
use kpw::solver::{kpw_distance, SolverConfig};
use kpw::synthdata::{generate_pair, DatasetSpec, Family};
use rayon::prelude::*;

fn main() {
    let dim = 30;
    let trials = 5;
    let params = KernelParams::new(3.0, 0.5, 1).unwrap();
    println!("uniform cube [-1,1]^{dim}, sigma^2 = 3, rho = 0.5, d = 1");
    println!("{:>6} {:>12}", "n", "median stat");
    for n in [5usize, 20, 50, 125] {
        let mut stats: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(99, &[n as u64, trial as u64]);
                let spec = DatasetSpec {
                    family: Family::UniformCube,
                    dim,
                    n,
                    m: n,
                    intrinsic_dim: None,
                    seed,
                };
                let (xs, ys) = generate_pair(&spec, false).unwrap();
                let config = SolverConfig {
                    eta: 0.02,
                    max_iters: 60,
                    seed,
                    ..SolverConfig::default()
                };
                kpw_distance(&xs, &ys, &params, &config).unwrap().statistic
            })
            .collect();
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("{n:>6} {:>12.5}", stats[trials / 2]);
    }
}
