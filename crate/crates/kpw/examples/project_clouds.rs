//! Export the one-dimensional projections of two samples under the trained
//! discriminator; the clouds are what an external density plot would show.
//!
//! Run with: cargo run --example project_clouds

use kpw::kernel::{median_heuristic, KernelParams, SampleSet};
use kpw::solver::{kpw_distance, SolverConfig};
use kpw::synthdata::{self, save_csv};

fn main() {
    let xs = synthdata::hdgm(200, 2, 31, false).unwrap();
    let ys = synthdata::hdgm(200, 2, 32, true).unwrap();

    let pooled = SampleSet::concat(&xs, &ys).unwrap();
    let sigma2 = median_heuristic(&pooled).unwrap();
    let params = KernelParams::new(sigma2, 0.5, 1).unwrap();
    let config = SolverConfig {
        eta: 0.05,
        max_iters: 80,
        seed: 13,
        ..SolverConfig::default()
    };

    let result = kpw_distance(&xs, &ys, &params, &config).unwrap();
    let dir = std::env::temp_dir();
    let x_path = dir.join("kpw_projected_x.csv");
    let y_path = dir.join("kpw_projected_y.csv");
    save_csv(
        &SampleSet::new(result.projected_x.clone()).unwrap(),
        &x_path,
    )
    .unwrap();
    save_csv(
        &SampleSet::new(result.projected_y.clone()).unwrap(),
        &y_path,
    )
    .unwrap();

    println!("statistic: {:.4}", result.statistic);
    println!("projected x cloud: {}", x_path.display());
    println!("projected y cloud: {}", y_path.display());

    // every projected point lies inside the ball of radius sqrt(B)
    let limit = (params.rho + (1.0 - params.rho) * params.d as f64).sqrt();
    let max_norm = result
        .projected_x
        .rows()
        .into_iter()
        .chain(result.projected_y.rows())
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0f64, f64::max);
    println!("max projected norm {max_norm:.4} <= sqrt(B) = {limit:.4}");
}
