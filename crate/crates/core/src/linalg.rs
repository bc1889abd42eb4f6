//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices at desk scale
//! (n, k up to a few thousand); no sparse structure is exploited.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Orthonormal basis of the column space of `a`, with numerical rank.
///
/// Columns of the returned matrix are left singular vectors whose singular
/// values exceed `RANK_REL_TOL` times the largest one.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    if a.ncols() == 0 || a.nrows() == 0 {
        return (DMatrix::zeros(a.nrows(), 0), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_REL_TOL * smax).count();
    (u.columns(0, rank).into_owned(), rank)
}

/// Residual of `v` after projecting out the span of the orthonormal columns
/// of `q`. Applies the projection twice so the result is orthogonal to the
/// basis to machine precision.
pub fn project_out_vec(q: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if q.ncols() == 0 {
        return v.clone();
    }
    let mut r = v - q * (q.transpose() * v);
    r -= q * (q.transpose() * &r);
    r
}

/// Column-wise [`project_out_vec`].
pub fn project_out_mat(q: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if q.ncols() == 0 || m.ncols() == 0 {
        return m.clone();
    }
    let mut r = m - q * (q.transpose() * m);
    r -= q * (q.transpose() * &r);
    r
}

/// Symmetric PSD square root with an eigenvalue floor.
pub fn spd_sqrt(g: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = g.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(floor).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Solve the SPD system `g x = b` by Cholesky; `None` if `g` is not PD.
pub fn solve_spd(g: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    g.clone().cholesky().map(|ch| ch.solve(b))
}

/// Minimum-norm least-squares solution of `a x ≈ b` via SVD.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    svd.solve(b, RANK_REL_TOL * smax.max(f64::MIN_POSITIVE))
        .expect("svd solve with u, v_t computed")
}

/// ℓp norm for p ≥ 1; `f64::INFINITY` selects the max-abs norm.
/// Scales by the max entry to avoid overflow for large p.
pub fn lp_norm(v: &DVector<f64>, p: f64) -> f64 {
    let m = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return m;
    }
    if (p - 1.0).abs() < 1e-14 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if (p - 2.0).abs() < 1e-14 {
        return v.norm();
    }
    let s: f64 = v.iter().map(|x| (x.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// Hölder conjugate q of p (1/p + 1/q = 1).
pub fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if (p - 1.0).abs() < 1e-14 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Largest singular value of `a`, by power iteration on `aᵀa`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(a.ncols(), 1.0 / (a.ncols() as f64).sqrt());
    let mut s = 0.0;
    for _ in 0..200 {
        let w = a.transpose() * (a * &v);
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
        let s_new = n.sqrt();
        if (s_new - s).abs() <= 1e-12 * s_new.max(1.0) {
            return s_new;
        }
        s = s_new;
    }
    s
}

/// Golden-section minimizer of a unimodal function on [a, b].
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, iters: usize) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Bisection root of a monotone nonincreasing function; requires
/// f(lo) ≥ 0 ≥ f(hi). Returns the midpoint after `iters` halvings.
pub fn bisect_decreasing<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_and_projection() {
        let z1 = DMatrix::from_column_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 4.0]);
        let (q, rank) = orthonormal_basis(&z1);
        assert_eq!(rank, 2);
        let v = DVector::from_column_slice(&[3.0, -1.0, 2.0, 5.0]);
        let r = project_out_vec(&q, &v);
        for j in 0..2 {
            let ip = z1.column(j).dot(&r);
            assert!(ip.abs() < 1e-12 * z1.column(j).norm() * v.norm());
        }
        // projecting twice changes nothing
        let r2 = project_out_vec(&q, &r);
        assert_relative_eq!((&r2 - &r).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn rank_detection_on_duplicates() {
        let z = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let (_, rank) = orthonormal_basis(&z);
        assert_eq!(rank, 1);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let g = DMatrix::from_column_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let m = spd_sqrt(&g, 0.0);
        assert_relative_eq!((&m * &m - &g).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lp_norms() {
        let v = DVector::from_column_slice(&[1.0, -3.0, 2.0]);
        assert_relative_eq!(lp_norm(&v, 1.0), 6.0);
        assert_relative_eq!(lp_norm(&v, 2.0), 14.0_f64.sqrt());
        assert_relative_eq!(lp_norm(&v, f64::INFINITY), 3.0);
        assert_relative_eq!(dual_exponent(1.0), f64::INFINITY);
        assert_relative_eq!(dual_exponent(2.0), 2.0);
        assert_relative_eq!(dual_exponent(1.5), 3.0);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let svd_max = a
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        assert_relative_eq!(spectral_norm(&a), svd_max, epsilon = 1e-9);
    }

    #[test]
    fn golden_finds_quadratic_min() {
        let (x, _) = golden_min(|x| (x - 1.3).powi(2), -4.0, 5.0, 80);
        assert_relative_eq!(x, 1.3, epsilon = 1e-9);
    }
}
