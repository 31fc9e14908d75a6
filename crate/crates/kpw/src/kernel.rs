//! Gaussian scalar kernel, separable matrix-valued kernel K = k * P, and the
//! signed Gram bundle that turns the RKHS-norm ball into a unit sphere.
//!
//! For pooled samples z = (x_1..x_n, y_1..y_m) the relevant Gram matrix is
//! block-signed: within-sample blocks enter with +, cross-sample blocks with
//! -. With a separable kernel this whole d(n+m) x d(n+m) matrix is the tensor
//! product of the signed scalar Gram with the d x d output matrix P, so only
//! the scalar factor is ever stored densely and the Cholesky is computed per
//! factor.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::manifold::SpherePoint;
use crate::{Error, Result};

/// Hyperparameters of the matrix-valued kernel K(x, x') = k(x, x') * P with
/// k Gaussian of bandwidth `sigma2` and P = (1 - rho) 11^T + rho I_d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Squared bandwidth of the scalar Gaussian kernel.
    pub sigma2: f64,
    /// Output-structure mixing weight in [0, 1].
    pub rho: f64,
    /// Dimension of the projected space.
    pub d: usize,
}

impl KernelParams {
    pub fn new(sigma2: f64, rho: f64, d: usize) -> Result<Self> {
        let p = KernelParams { sigma2, rho, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        Ok(())
    }
}

/// An empirical sample: n observations in R^D, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Array2<f64>,
}

impl SampleSet {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "sample set needs at least one row and one column".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "sample set contains a non-finite entry".into(),
            ));
        }
        Ok(SampleSet { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("empty sample set".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked");
        SampleSet::new(arr)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 1
    }

    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Stack two sets with matching ambient dimension.
    pub fn concat(a: &SampleSet, b: &SampleSet) -> Result<SampleSet> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                left: a.dim(),
                right: b.dim(),
            });
        }
        let stacked = ndarray::concatenate(Axis(0), &[a.points.view(), b.points.view()])
            .expect("dims checked");
        Ok(SampleSet { points: stacked })
    }

    /// Rows selected by index, in order (with repetition allowed).
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        let picked = self.points.select(Axis(0), idx);
        SampleSet { points: picked }
    }
}

/// Gaussian kernel k(x, x') = exp(-||x - x'||^2 / (2 sigma2)).
pub fn gaussian_kernel(
    x: ArrayView1<'_, f64>,
    x2: ArrayView1<'_, f64>,
    sigma2: f64,
) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: x2.len(),
        });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let sq: f64 = x
        .iter()
        .zip(x2.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((-sq / (2.0 * sigma2)).exp())
}

/// Output matrix P = (1 - rho) 11^T + rho I_d.
///
/// Eigenvalues are rho (multiplicity d - 1) and rho + (1 - rho) d.
pub fn output_matrix(rho: f64, d: usize) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    let mut p = Array2::from_elem((d, d), 1.0 - rho);
    for i in 0..d {
        p[[i, i]] += rho;
    }
    Ok(p)
}

/// Tight uniform bound B with 0 <= K(x, x') <= B I_d:
/// B = rho + (1 - rho) d, the top eigenvalue of P times sup k = 1.
pub fn kernel_bound(params: &KernelParams) -> f64 {
    params.rho + (1.0 - params.rho) * params.d as f64
}

/// Median-heuristic bandwidth over a pooled sample: the squared median of all
/// nonzero pairwise distances.
pub fn median_heuristic(pooled: &SampleSet) -> Result<f64> {
    let n = pooled.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "median heuristic needs at least two points".into(),
        ));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = pooled
                .row(i)
                .iter()
                .zip(pooled.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if sq > 0.0 {
                dists.push(sq.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::InvalidParameter(
            "all points identical: median pairwise distance is zero".into(),
        ));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    Ok(median * median)
}

/// Relative jitter escalation cap, as a multiple of trace/dim.
const JITTER_CAP_REL: f64 = 1e-4;
/// Default relative jitter start when the caller passes 0.
const JITTER_BASE_REL: f64 = 1e-10;
/// Cholesky pivots below this multiple of trace/dim trigger escalation.
/// Keeps the factor conditioning compatible with the 1e-8 norm checks.
const PIVOT_FLOOR_REL: f64 = 1e-7;

/// Cholesky with geometric jitter escalation (0, base, 10x, ... up to the
/// cap, all relative to trace/dim). Returns the factor and the absolute
/// jitter that was added to the diagonal.
fn jittered_cholesky(mat: &Array2<f64>, jitter_base: f64) -> Result<(Array2<f64>, f64)> {
    let q = mat.nrows();
    let scale = (mat.diag().sum() / q as f64).max(f64::MIN_POSITIVE);
    let pivot_floor = PIVOT_FLOOR_REL * scale;
    let base = if jitter_base > 0.0 {
        jitter_base
    } else {
        JITTER_BASE_REL
    };
    let mut rel = 0.0f64;
    loop {
        let abs = rel * scale;
        let attempt = if abs == 0.0 {
            linalg::cholesky_lower(mat, pivot_floor)
        } else {
            let mut shifted = mat.clone();
            for i in 0..q {
                shifted[[i, i]] += abs;
            }
            linalg::cholesky_lower(&shifted, pivot_floor)
        };
        if let Some(l) = attempt {
            return Ok((l, abs));
        }
        rel = if rel == 0.0 { base } else { rel * 10.0 };
        if rel > JITTER_CAP_REL {
            return Err(Error::DegenerateGram {
                cap: JITTER_CAP_REL,
            });
        }
    }
}

/// The signed Gram bundle for one pair of samples and one kernel.
///
/// Holds the pooled scalar Gram (unjittered, used for evaluation), the output
/// matrix P, and the Cholesky factors of the two jittered signed factors.
/// The full matrix G and its inverse Cholesky factor U exist only virtually
/// through the tensor identities; [`GramBundle::dense_signed_gram`] and
/// [`GramBundle::dense_inv_chol`] materialize them for verification.
#[derive(Debug, Clone)]
pub struct GramBundle {
    scalar_gram: Array2<f64>,
    output: Array2<f64>,
    chol_signed: Array2<f64>,
    chol_output: Array2<f64>,
    bound_b: f64,
    jitter_used: f64,
    n: usize,
    m: usize,
    d: usize,
}

/// Build the Gram bundle for samples `xs`, `ys` under `params`.
///
/// `jitter_base` is the relative starting jitter (0 means use the built-in
/// default). Escalation failing past the cap reports a degenerate Gram.
pub fn gram_bundle(
    xs: &SampleSet,
    ys: &SampleSet,
    params: &KernelParams,
    jitter_base: f64,
) -> Result<GramBundle> {
    params.validate()?;
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch {
            left: xs.dim(),
            right: ys.dim(),
        });
    }
    if jitter_base < 0.0 {
        return Err(Error::InvalidParameter("jitter_base must be >= 0".into()));
    }
    let (n, m, d) = (xs.len(), ys.len(), params.d);
    let pooled = SampleSet::concat(xs, ys)?;
    let total = n + m;

    // Scalar Gram over the pooled points via the squared-distance expansion.
    let pts = pooled.points();
    let sq: Vec<f64> = (0..total).map(|i| pts.row(i).dot(&pts.row(i))).collect();
    let cross = pts.dot(&pts.t());
    let inv_two_sigma2 = 1.0 / (2.0 * params.sigma2);
    let mut scalar_gram = Array2::zeros((total, total));
    for i in 0..total {
        scalar_gram[[i, i]] = 1.0;
        for j in (i + 1)..total {
            let sqdist = (sq[i] + sq[j] - 2.0 * cross[[i, j]]).max(0.0);
            let k = (-sqdist * inv_two_sigma2).exp();
            scalar_gram[[i, j]] = k;
            scalar_gram[[j, i]] = k;
        }
    }

    let mut signed = scalar_gram.clone();
    for i in 0..total {
        for j in 0..total {
            let sign = if (i < n) == (j < n) { 1.0 } else { -1.0 };
            signed[[i, j]] *= sign;
        }
    }

    let (chol_signed, jitter_scalar) = jittered_cholesky(&signed, jitter_base)?;
    let output = output_matrix(params.rho, d)?;
    let (chol_output, jitter_output) = jittered_cholesky(&output, jitter_base)?;

    Ok(GramBundle {
        scalar_gram,
        output,
        chol_signed,
        chol_output,
        bound_b: kernel_bound(params),
        jitter_used: jitter_scalar + jitter_output,
        n,
        m,
        d,
    })
}

impl GramBundle {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of pooled sample points, n + m.
    pub fn pooled_len(&self) -> usize {
        self.n + self.m
    }

    /// Dimension of the sphere variable, d (n + m).
    pub fn sphere_dim(&self) -> usize {
        self.d * (self.n + self.m)
    }

    /// Uniform kernel bound B.
    pub fn bound(&self) -> f64 {
        self.bound_b
    }

    /// Total absolute diagonal jitter added across the two factors.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Pooled scalar Gram k(z_i, z_j), unjittered, x rows first.
    pub fn scalar_gram(&self) -> &Array2<f64> {
        &self.scalar_gram
    }

    /// Output matrix P, unjittered.
    pub fn output_matrix(&self) -> &Array2<f64> {
        &self.output
    }

    /// +1 for pooled indices in the x block, -1 in the y block.
    pub fn sign(&self, pooled_index: usize) -> f64 {
        if pooled_index < self.n {
            1.0
        } else {
            -1.0
        }
    }

    /// Representer coefficients of a sphere point: the (n+m) x d block matrix
    /// of omega = U s, computed as L_k^{-T} S L_P^{-1} from the row-major
    /// reshape S of s.
    pub fn coefficient_blocks(&self, s: &SpherePoint) -> Array2<f64> {
        let total = self.pooled_len();
        let mut blocks = s
            .coords()
            .to_owned()
            .into_shape_with_order((total, self.d))
            .expect("sphere dim = d(n+m)");
        linalg::solve_lower_transpose(&self.chol_signed, &mut blocks);
        // right-multiply by L_P^{-1}: solve L_P^T Z^T = Y^T
        let mut t = transposed(&blocks);
        linalg::solve_lower_transpose(&self.chol_output, &mut t);
        transposed(&t)
    }

    /// Evaluate the representer at every pooled point: row q holds
    /// f(z_q) = sum_p sign_p k(z_q, z_p) P omega_p.
    pub fn evaluate_blocks(&self, omega_blocks: &Array2<f64>) -> Array2<f64> {
        let mut weighted = omega_blocks.dot(&self.output);
        for p in self.n..self.pooled_len() {
            let mut row = weighted.row_mut(p);
            row.mapv_inplace(|v| -v);
        }
        self.scalar_gram.dot(&weighted)
    }

    /// Adjoint pullback for the sphere gradient: given the Gram-mapped
    /// difference aggregate R (rows indexed by pooled points), returns
    /// Z = U_k^T (D_sign R P) U_P, the block reshape of U^T applied to the
    /// stacked per-block vectors.
    pub fn gradient_pullback(&self, r: &Array2<f64>) -> Array2<f64> {
        let mut mblocks = r.dot(&self.output);
        for p in self.n..self.pooled_len() {
            let mut row = mblocks.row_mut(p);
            row.mapv_inplace(|v| -v);
        }
        linalg::solve_lower(&self.chol_signed, &mut mblocks);
        // right-multiply by L_P^{-T}: solve L_P Z^T = W^T
        let mut t = transposed(&mblocks);
        linalg::solve_lower(&self.chol_output, &mut t);
        transposed(&t)
    }

    /// Materialize the jittered signed Gram G (for verification only).
    pub fn dense_signed_gram(&self) -> Array2<f64> {
        let left = self.chol_signed.dot(&self.chol_signed.t());
        let right = self.chol_output.dot(&self.chol_output.t());
        kron(&left, &right)
    }

    /// Materialize U with G^{-1} = U U^T (for verification only).
    pub fn dense_inv_chol(&self) -> Array2<f64> {
        let uk = linalg::inverse_transpose_lower(&self.chol_signed);
        let up = linalg::inverse_transpose_lower(&self.chol_output);
        kron(&uk, &up)
    }
}

/// Transpose into a fresh standard-layout array (a plain `.t()` view keeps
/// reversed strides, which the triangular solves cannot use).
fn transposed(a: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    out.assign(&a.t());
    out
}

/// Kronecker product with row-major block layout.
pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[[i * br + p, j * bc + q]] = aij * b[[p, q]];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::{array, Array1};

    fn set(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::from_rows(rows).unwrap()
    }

    fn random_set(n: usize, dim: usize, stream: &mut Stream) -> SampleSet {
        let pts = Array2::from_shape_fn((n, dim), |_| stream.next_normal());
        SampleSet::new(pts).unwrap()
    }

    #[test]
    fn gaussian_kernel_basics() {
        let x = array![1.0, 2.0];
        assert_eq!(gaussian_kernel(x.view(), x.view(), 3.0).unwrap(), 1.0);

        // squared distance 2 sigma2 gives exp(-1)
        let a = array![0.0];
        let b = array![2.0_f64.sqrt()];
        let k = gaussian_kernel(a.view(), b.view(), 1.0).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);

        let p = array![1.0, 0.0];
        let q = array![0.0, 0.0];
        let k2 = gaussian_kernel(p.view(), q.view(), 3.0).unwrap();
        assert!((k2 - (-1.0f64 / 6.0).exp()).abs() < 1e-15);

        // symmetry is exact
        assert_eq!(
            gaussian_kernel(p.view(), q.view(), 3.0).unwrap(),
            gaussian_kernel(q.view(), p.view(), 3.0).unwrap()
        );

        assert!(gaussian_kernel(p.view(), array![1.0].view(), 1.0).is_err());
        assert!(gaussian_kernel(p.view(), q.view(), 0.0).is_err());
    }

    #[test]
    fn output_matrix_limits() {
        let id = output_matrix(1.0, 3).unwrap();
        assert_eq!(id, Array2::<f64>::eye(3));
        let ones = output_matrix(0.0, 2).unwrap();
        assert_eq!(ones, Array2::from_elem((2, 2), 1.0));
        assert!(output_matrix(1.5, 2).is_err());
    }

    #[test]
    fn output_matrix_eigenvalues() {
        let p = output_matrix(0.5, 3).unwrap();
        let mut eigs = crate::oracle::symmetric_eigenvalues(&p);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] - 0.5).abs() < 1e-12);
        assert!((eigs[1] - 0.5).abs() < 1e-12);
        assert!((eigs[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_bound_values() {
        assert_eq!(kernel_bound(&KernelParams::new(1.0, 1.0, 7).unwrap()), 1.0);
        assert_eq!(kernel_bound(&KernelParams::new(1.0, 0.5, 2).unwrap()), 1.5);
        assert_eq!(kernel_bound(&KernelParams::new(1.0, 0.0, 5).unwrap()), 5.0);
    }

    #[test]
    fn kernel_bound_dominates_matrix_kernel() {
        // lambda_max(K(x, x')) <= B and lambda_min >= 0 over random pairs
        let mut stream = Stream::new(5);
        let params = KernelParams::new(2.0, 0.3, 3).unwrap();
        let b = kernel_bound(&params);
        let p = output_matrix(params.rho, params.d).unwrap();
        for _ in 0..1000 {
            let x = Array1::from_shape_fn(4, |_| stream.next_normal());
            let y = Array1::from_shape_fn(4, |_| stream.next_normal());
            let k = gaussian_kernel(x.view(), y.view(), params.sigma2).unwrap();
            let kmat = &p * k;
            let eigs = crate::oracle::symmetric_eigenvalues(&kmat);
            for e in eigs {
                assert!(e <= b + 1e-10);
                assert!(e >= -1e-10);
            }
        }
    }

    #[test]
    fn median_heuristic_cases() {
        assert_eq!(
            median_heuristic(&set(&[vec![0.0], vec![1.0]])).unwrap(),
            1.0
        );
        // distances {1, 2, 3}, median 2, squared 4
        assert_eq!(
            median_heuristic(&set(&[vec![0.0], vec![1.0], vec![3.0]])).unwrap(),
            4.0
        );
        // zero pair excluded
        assert_eq!(
            median_heuristic(&set(&[vec![0.0], vec![0.0], vec![1.0]])).unwrap(),
            1.0
        );
        assert!(median_heuristic(&set(&[vec![2.0], vec![2.0]])).is_err());
    }

    #[test]
    fn scalar_gram_is_psd() {
        let mut stream = Stream::new(9);
        let xs = random_set(6, 3, &mut stream);
        let ys = random_set(4, 3, &mut stream);
        let params = KernelParams::new(1.5, 0.5, 2).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        let eigs = crate::oracle::symmetric_eigenvalues(bundle.scalar_gram());
        assert!(eigs.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn hand_assembled_two_by_two() {
        // n = m = 1, d = 1, rho = 1: G = [[1, -q], [-q, 1]]
        let xs = set(&[vec![0.0, 0.0]]);
        let ys = set(&[vec![1.0, 1.0]]);
        let params = KernelParams::new(2.0, 1.0, 1).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        let q = (-2.0f64 / 4.0).exp();
        let g = bundle.dense_signed_gram();
        assert!((g[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((g[[0, 1]] + q).abs() < 1e-12);
        assert!((g[[1, 0]] + q).abs() < 1e-12);
        assert!((g[[1, 1]] - 1.0).abs() < 1e-12);
        assert_eq!(bundle.jitter_used(), 0.0);
    }

    #[test]
    fn duplicate_point_needs_jitter() {
        let xs = set(&[vec![0.5, -1.0]]);
        let ys = xs.clone();
        let params = KernelParams::new(1.0, 1.0, 1).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        assert!(bundle.jitter_used() > 0.0);
        // jittered G is PD: its materialization admits a Cholesky factor
        let g = bundle.dense_signed_gram();
        assert!(linalg::cholesky_lower(&g, 0.0).is_some());
    }

    #[test]
    fn inv_chol_whitens_gram() {
        let mut stream = Stream::new(13);
        let xs = random_set(5, 2, &mut stream);
        let ys = random_set(3, 2, &mut stream);
        let params = KernelParams::new(1.0, 0.4, 2).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        let g = bundle.dense_signed_gram();
        let u = bundle.dense_inv_chol();
        let id = u.t().dot(&g).dot(&u);
        let dim = bundle.sphere_dim();
        let mut frob = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                frob += (id[[i, j]] - want).powi(2);
            }
        }
        assert!(frob.sqrt() < 1e-8, "frobenius error {}", frob.sqrt());
    }

    #[test]
    fn signed_gram_matches_blockwise_construction() {
        // G = (E k E) tensor P, checked entry by entry on a random instance
        let mut stream = Stream::new(21);
        let xs = random_set(3, 2, &mut stream);
        let ys = random_set(2, 2, &mut stream);
        let params = KernelParams::new(0.8, 0.6, 2).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        assert_eq!(bundle.jitter_used(), 0.0);
        let g = bundle.dense_signed_gram();
        let p = output_matrix(params.rho, params.d).unwrap();
        let pooled = SampleSet::concat(&xs, &ys).unwrap();
        let total = pooled.len();
        let d = params.d;
        for bi in 0..total {
            for bj in 0..total {
                let sign = bundle.sign(bi) * bundle.sign(bj);
                let k = gaussian_kernel(pooled.row(bi), pooled.row(bj), params.sigma2).unwrap();
                for r in 0..d {
                    for c in 0..d {
                        let got = g[[bi * d + r, bj * d + c]];
                        let want = sign * k * p[[r, c]];
                        assert!(
                            (got - want).abs() < 1e-12,
                            "block ({bi},{bj}) entry ({r},{c}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_blocks_match_dense_u() {
        let mut stream = Stream::new(33);
        let xs = random_set(4, 3, &mut stream);
        let ys = random_set(3, 3, &mut stream);
        let params = KernelParams::new(1.2, 0.7, 2).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        let s = SpherePoint::random(bundle.sphere_dim(), &mut stream);
        let omega_blocks = bundle.coefficient_blocks(&s);
        let u = bundle.dense_inv_chol();
        let omega_dense = u.dot(s.coords());
        let total = bundle.pooled_len();
        for p in 0..total {
            for c in 0..params.d {
                let got = omega_blocks[[p, c]];
                let want = omega_dense[p * params.d + c];
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn rho_zero_duplicates_recover_with_jitter() {
        let xs = set(&[vec![0.0], vec![0.0]]);
        let ys = set(&[vec![1.0]]);
        let params = KernelParams::new(1.0, 0.0, 2).unwrap();
        let bundle = gram_bundle(&xs, &ys, &params, 0.0).unwrap();
        assert!(bundle.jitter_used() > 0.0);
    }

    #[test]
    fn kernel_params_json_round_trip() {
        let p = KernelParams::new(3.0, 0.5, 2).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"sigma2":3.0,"rho":0.5,"d":2}"#);
        let back: KernelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    proptest::proptest! {
        #[test]
        fn gaussian_kernel_symmetric_in_unit_interval(
            a in proptest::collection::vec(-50.0f64..50.0, 3),
            b in proptest::collection::vec(-50.0f64..50.0, 3),
            sigma2 in 1e-3f64..1e3,
        ) {
            let x = Array1::from(a);
            let y = Array1::from(b);
            let k1 = gaussian_kernel(x.view(), y.view(), sigma2).unwrap();
            let k2 = gaussian_kernel(y.view(), x.view(), sigma2).unwrap();
            proptest::prop_assert_eq!(k1.to_bits(), k2.to_bits());
            // exp underflows to exactly 0 for extreme distance/bandwidth ratios
            proptest::prop_assert!((0.0..=1.0).contains(&k1));
        }
    }
}
