//! Independent brute-force references used by the test suite: exact optimal
//! transport on desk-scale instances, central finite differences, and a plain
//! Jacobi eigensolver. Nothing here is on the production path; the point is
//! that these implementations share no code with the solver they check.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Exact transport plan and cost between two uniform empirical measures.
#[derive(Debug, Clone)]
pub struct ExactOtResult {
    /// Minimal expected transport cost.
    pub cost: f64,
    /// Optimal plan with row sums 1/n and column sums 1/m.
    pub plan: Array2<f64>,
}

/// Guard on n * m so the expanded assignment stays desk-scale.
pub const EXACT_OT_GUARD: usize = 400;

/// Exact 1-Wasserstein distance between uniform empirical measures on
/// `points_a` (n rows) and `points_b` (m rows), Euclidean ground cost.
///
/// Each atom is split into equal sub-atoms so both sides carry
/// lcm(n, m) points of equal mass; an optimal assignment on the expanded
/// problem is an exact solution of the original transport program.
pub fn exact_ot(points_a: &Array2<f64>, points_b: &Array2<f64>) -> Result<ExactOtResult> {
    let (n, m) = (points_a.nrows(), points_b.nrows());
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("empty point set".into()));
    }
    if points_a.ncols() != points_b.ncols() {
        return Err(Error::DimensionMismatch {
            left: points_a.ncols(),
            right: points_b.ncols(),
        });
    }
    if n * m > EXACT_OT_GUARD {
        return Err(Error::SizeGuard {
            size: n * m,
            guard: EXACT_OT_GUARD,
        });
    }

    let l = lcm(n, m);
    let (ra, rb) = (l / n, l / m);
    let mut cost = Array2::zeros((l, l));
    for bi in 0..l {
        let i = bi / ra;
        for bj in 0..l {
            let j = bj / rb;
            let sq: f64 = points_a
                .row(i)
                .iter()
                .zip(points_b.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            cost[[bi, bj]] = sq.sqrt();
        }
    }

    let assign = hungarian(&cost);
    let mass = 1.0 / l as f64;
    let mut plan = Array2::zeros((n, m));
    let mut total = 0.0;
    for (bi, &bj) in assign.iter().enumerate() {
        plan[[bi / ra, bj / rb]] += mass;
        total += cost[[bi, bj]] * mass;
    }
    Ok(ExactOtResult { cost: total, plan })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Minimum-cost perfect matching on a square cost matrix via the
/// shortest-augmenting-path method with dual potentials. Returns the
/// column assigned to each row.
pub fn hungarian(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "hungarian needs a square matrix");
    // 1-indexed buffers; p[j] is the row matched to column j, p[0] scratch.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Central finite differences of a scalar function, step h per coordinate.
pub fn finite_diff_gradient<F>(evaluate: F, s: &Array1<f64>, h: f64) -> Result<Array1<f64>>
where
    F: Fn(&Array1<f64>) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut grad = Array1::zeros(s.len());
    let mut probe = s.clone();
    for i in 0..s.len() {
        probe[i] = s[i] + h;
        let fp = evaluate(&probe);
        probe[i] = s[i] - h;
        let fm = evaluate(&probe);
        probe[i] = s[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite {
                what: "finite-difference evaluation".into(),
            });
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
///
/// Test-suite reference only; dense and slow but dependable for the small
/// matrices the checks need.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let scale = m.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::array;

    fn random_points(n: usize, d: usize, stream: &mut Stream) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| stream.next_normal())
    }

    fn brute_force_assignment_cost(cost: &Array2<f64>) -> f64 {
        let n = cost.nrows();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut idx, 0, &mut |perm| {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            if c < best {
                best = c;
            }
        });
        best
    }

    fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == idx.len() {
            visit(idx);
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(idx, k + 1, visit);
            idx.swap(k, i);
        }
    }

    #[test]
    fn identical_sets_cost_zero() {
        let a = array![[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
        let r = exact_ot(&a, &a).unwrap();
        assert!(r.cost.abs() < 1e-12);
        for i in 0..3 {
            assert!((r.plan[[i, i]] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_line() {
        let a = array![[0.0], [1.0]];
        let b = array![[0.0], [1.0]];
        let r = exact_ot(&a, &b).unwrap();
        assert!(r.cost.abs() < 1e-12);
    }

    #[test]
    fn hungarian_matches_enumeration() {
        let mut stream = Stream::new(77);
        for trial in 0..20 {
            let n = 3 + (trial % 3);
            let cost = Array2::from_shape_fn((n, n), |_| stream.next_unit() * 10.0);
            let assign = hungarian(&cost);
            let got: f64 = assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            let want = brute_force_assignment_cost(&cost);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn exact_ot_matches_permutation_enumeration() {
        let mut stream = Stream::new(101);
        for _ in 0..10 {
            let a = random_points(3, 2, &mut stream);
            let b = random_points(3, 2, &mut stream);
            let r = exact_ot(&a, &b).unwrap();
            let mut cost = Array2::zeros((3, 3));
            for i in 0..3 {
                for j in 0..3 {
                    let sq: f64 = a
                        .row(i)
                        .iter()
                        .zip(b.row(j).iter())
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum();
                    cost[[i, j]] = sq.sqrt();
                }
            }
            let want = brute_force_assignment_cost(&cost) / 3.0;
            assert!((r.cost - want).abs() < 1e-10);
        }
    }

    #[test]
    fn single_source_forces_uniform_plan() {
        // n = 1: the only feasible plan spreads 1/m to every target
        let a = array![[0.0, 0.0]];
        let b = array![[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]];
        let r = exact_ot(&a, &b).unwrap();
        let want = (1.0 + 2.0 + 5.0) / 3.0;
        assert!((r.cost - want).abs() < 1e-12);
        for j in 0..3 {
            assert!((r.plan[[0, j]] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unequal_sizes_feasible_and_symmetric() {
        let mut stream = Stream::new(55);
        let a = random_points(4, 3, &mut stream);
        let b = random_points(6, 3, &mut stream);
        let r = exact_ot(&a, &b).unwrap();
        let rt = exact_ot(&b, &a).unwrap();
        assert!((r.cost - rt.cost).abs() < 1e-12);
        for i in 0..4 {
            let row: f64 = (0..6).map(|j| r.plan[[i, j]]).sum();
            assert!((row - 0.25).abs() < 1e-12);
        }
        for j in 0..6 {
            let col: f64 = (0..4).map(|i| r.plan[[i, j]]).sum();
            assert!((col - 1.0 / 6.0).abs() < 1e-12);
            assert!((rt.plan[[j, 0]] - r.plan[[0, j]]).abs() < 1e-12);
        }
        // dominated by the independence coupling
        let mut indep = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                let sq: f64 = a
                    .row(i)
                    .iter()
                    .zip(b.row(j).iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                indep += sq.sqrt() / 24.0;
            }
        }
        assert!(r.cost <= indep + 1e-12);
    }

    #[test]
    fn size_guard_enforced() {
        let mut stream = Stream::new(3);
        let a = random_points(21, 1, &mut stream);
        let b = random_points(21, 1, &mut stream);
        assert!(matches!(exact_ot(&a, &b), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn finite_diff_linear_and_quadratic() {
        let c = array![1.5, -2.0, 0.25];
        let g = finite_diff_gradient(|s| s.dot(&c), &array![0.3, 0.4, -0.1], 1e-6).unwrap();
        for i in 0..3 {
            assert!((g[i] - c[i]).abs() < 1e-10);
        }
        let s0 = array![0.5, -1.0];
        let g2 = finite_diff_gradient(|s| s.dot(s), &s0, 1e-6).unwrap();
        for i in 0..2 {
            assert!((g2[i] - 2.0 * s0[i]).abs() < 1e-8);
        }
        assert!(finite_diff_gradient(|s| s.sum(), &s0, 0.0).is_err());
    }

    #[test]
    fn jacobi_eigenvalues_reference() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let mut e = symmetric_eigenvalues(&a);
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }
}
