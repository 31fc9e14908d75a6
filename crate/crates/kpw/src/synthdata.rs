//! Seeded generators for the benchmark distributions plus headerless CSV
//! ingestion and export.
//!
//! Every generator draws through a counter-based RNG keyed by
//! (seed, row, column), so outputs are identical regardless of fill order or
//! threading, and the null and alternative variants of one seed share their
//! underlying noise (toggling `is_alternative` changes only the transform).

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::kernel::SampleSet;
use crate::rng::{derive_seed, normal_at, uniform_at};
use crate::{Error, Result};

/// Benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    UniformCube,
    GaussMeanShift,
    GaussCovShift,
    Hdgm,
}

/// Description of one synthetic dataset draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub family: Family,
    /// Ambient dimension D.
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    /// Number of coordinates carrying the covariance shift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_dim: Option<usize>,
    pub seed: u64,
}

const XS_TAG: u64 = 0x78;
const YS_TAG: u64 = 0x79;
const COMPONENT_LANE: u64 = 1_000_003;

/// Draw the (xs, ys) pair for a dataset description. The x side always
/// follows the null distribution; `alternative` switches the y side.
pub fn generate_pair(spec: &DatasetSpec, alternative: bool) -> Result<(SampleSet, SampleSet)> {
    let xs_seed = derive_seed(spec.seed, &[XS_TAG]);
    let ys_seed = derive_seed(spec.seed, &[YS_TAG]);
    match spec.family {
        Family::UniformCube => Ok((
            uniform_cube(spec.n, spec.dim, xs_seed),
            uniform_cube(spec.m, spec.dim, ys_seed),
        )),
        Family::GaussMeanShift => Ok((
            gauss_mean_shift(spec.n, spec.dim, xs_seed, false),
            gauss_mean_shift(spec.m, spec.dim, ys_seed, alternative),
        )),
        Family::GaussCovShift => {
            let intrinsic = spec.intrinsic_dim.ok_or_else(|| {
                Error::InvalidParameter("gauss_cov_shift needs intrinsic_dim".into())
            })?;
            Ok((
                gauss_cov_shift(spec.n, spec.dim, intrinsic, xs_seed, false)?,
                gauss_cov_shift(spec.m, spec.dim, intrinsic, ys_seed, alternative)?,
            ))
        }
        Family::Hdgm => Ok((
            hdgm(spec.n, spec.dim, xs_seed, false)?,
            hdgm(spec.m, spec.dim, ys_seed, alternative)?,
        )),
    }
}

/// n i.i.d. draws from the uniform distribution on [-1, 1]^D.
pub fn uniform_cube(n: usize, dim: usize, seed: u64) -> SampleSet {
    let pts = Array2::from_shape_fn((n, dim), |(r, c)| {
        2.0 * uniform_at(seed, r as u64, c as u64, 0) - 1.0
    });
    SampleSet::new(pts).expect("generated entries are finite")
}

/// Standard Gaussian N(0, I_D); the alternative shifts every coordinate by
/// 0.8 / sqrt(D) so the mean displacement has norm 0.8 in every dimension.
pub fn gauss_mean_shift(n: usize, dim: usize, seed: u64, is_alternative: bool) -> SampleSet {
    let shift = if is_alternative {
        0.8 / (dim as f64).sqrt()
    } else {
        0.0
    };
    let pts = Array2::from_shape_fn((n, dim), |(r, c)| {
        normal_at(seed, r as u64, c as u64) + shift
    });
    SampleSet::new(pts).expect("generated entries are finite")
}

/// Standard Gaussian against the diagonal covariance shift: the first
/// `intrinsic_dim` coordinates get variance 0.25, the rest stay at 1.
pub fn gauss_cov_shift(
    n: usize,
    dim: usize,
    intrinsic_dim: usize,
    seed: u64,
    is_alternative: bool,
) -> Result<SampleSet> {
    if intrinsic_dim == 0 || intrinsic_dim > dim {
        return Err(Error::InvalidParameter(format!(
            "intrinsic_dim must lie in 1..=D, got {intrinsic_dim} with D = {dim}"
        )));
    }
    let pts = Array2::from_shape_fn((n, dim), |(r, c)| {
        let z = normal_at(seed, r as u64, c as u64);
        if is_alternative && c < intrinsic_dim {
            0.5 * z // variance 0.25
        } else {
            z
        }
    });
    SampleSet::new(pts).map_err(|_| Error::NonFinite {
        what: "generated sample".into(),
    })
}

/// Two-component Gaussian mixture in the plane with means (0,0) and (5,0),
/// equal weights. The alternative correlates the coordinates within each
/// component (off-diagonal 0.5).
pub fn hdgm(n: usize, dim: usize, seed: u64, is_alternative: bool) -> Result<SampleSet> {
    if dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "the mixture benchmark is defined at D = 2, got {dim}"
        )));
    }
    // Cholesky of [[1, 0.5], [0.5, 1]]
    let l21 = 0.5;
    let l22 = 0.75f64.sqrt();
    let mut pts = Array2::zeros((n, 2));
    for r in 0..n {
        let comp_two = uniform_at(seed, r as u64, COMPONENT_LANE, 2) >= 0.5;
        let mean_x = if comp_two { 5.0 } else { 0.0 };
        let z0 = normal_at(seed, r as u64, 0);
        let z1 = normal_at(seed, r as u64, 1);
        if is_alternative {
            pts[[r, 0]] = mean_x + z0;
            pts[[r, 1]] = l21 * z0 + l22 * z1;
        } else {
            pts[[r, 0]] = mean_x + z0;
            pts[[r, 1]] = z1;
        }
    }
    SampleSet::new(pts)
}

/// Load a headerless numeric CSV, one observation per row.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<SampleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            return Err(Error::Csv {
                line: lineno,
                message: "blank row".into(),
            });
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line: lineno,
                message: format!("non-numeric field {:?}", field.trim()),
            })?;
            if !value.is_finite() {
                return Err(Error::Csv {
                    line: lineno,
                    message: format!("non-finite value {value}"),
                });
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Csv {
                    line: lineno,
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            line: 0,
            message: "empty file".into(),
        });
    }
    SampleSet::from_rows(&rows)
}

/// Write a sample as headerless CSV. Values use the shortest representation
/// that parses back to the identical float, so save/load round-trips exactly.
pub fn save_csv<P: AsRef<Path>>(set: &SampleSet, path: P) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in set.points().rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            write!(out, "{v}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
