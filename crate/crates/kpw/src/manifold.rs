//! Unit-sphere primitives and the smoothed Euclidean norm.
//!
//! The search variable of the solver lives on the sphere S^{k-1}; the two
//! operations it needs are the tangent-space projection of an ambient
//! gradient and the normalization retraction that maps a step back onto the
//! sphere.

use ndarray::Array1;

use crate::rng::Stream;
use crate::{Error, Result};

/// Tolerance for membership of the unit sphere.
pub const SPHERE_TOL: f64 = 1e-12;

/// A point on the unit sphere S^{k-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint {
    coords: Array1<f64>,
}

impl SpherePoint {
    /// Wrap a vector that is already unit length (within [`SPHERE_TOL`]).
    pub fn new(coords: Array1<f64>) -> Result<Self> {
        let norm = coords.dot(&coords).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > SPHERE_TOL {
            return Err(Error::NotOnSphere { norm });
        }
        Ok(SpherePoint { coords })
    }

    /// Normalize an arbitrary nonzero vector onto the sphere.
    pub fn from_unnormalized(coords: Array1<f64>) -> Result<Self> {
        let norm = coords.dot(&coords).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NotOnSphere { norm });
        }
        Ok(SpherePoint {
            coords: coords / norm,
        })
    }

    /// Uniform random point: a normalized standard Gaussian vector.
    pub fn random(dim: usize, stream: &mut Stream) -> Self {
        loop {
            let v = Array1::from_shape_fn(dim, |_| stream.next_normal());
            if let Ok(p) = SpherePoint::from_unnormalized(v) {
                return p;
            }
        }
    }

    pub fn coords(&self) -> &Array1<f64> {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Array1<f64> {
        self.coords
    }
}

/// Smoothed Euclidean norm: sqrt(sum x_i^2 + kappa^2) - kappa.
///
/// 1/kappa-smooth approximation of the l2 norm; exact at x = 0 and within
/// kappa of the true norm everywhere.
pub fn smoothed_norm(x: &[f64], kappa: f64) -> f64 {
    debug_assert!(kappa > 0.0);
    let sq: f64 = x.iter().map(|&v| v * v).sum();
    ((sq + kappa * kappa).sqrt() - kappa).max(0.0)
}

/// Orthogonal projection of `zeta` onto the tangent space at `s`:
/// zeta - <s, zeta> s.
pub fn tangent_project(s: &SpherePoint, zeta: &Array1<f64>) -> Array1<f64> {
    let inner = s.coords.dot(zeta);
    zeta - &(inner * &s.coords)
}

/// Normalization retraction: (s + delta) / ||s + delta||.
///
/// Fails only when s + delta vanishes, which signals a degenerate
/// (antipodal-scale) step.
pub fn retract(s: &SpherePoint, delta: &Array1<f64>) -> Result<SpherePoint> {
    let moved = &s.coords + delta;
    let norm = moved.dot(&moved).sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::DegenerateStep);
    }
    Ok(SpherePoint {
        coords: moved / norm,
    })
}
