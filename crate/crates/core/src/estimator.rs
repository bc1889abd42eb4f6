//! Minimax linear estimators derived from path points.
//!
//! A path point π* with residual r = w − Zπ* yields the weight vector
//! a = r / (r'w). The estimate is a'Y; its worst-case bias over Pen(γ) ≤ C is
//! C·B̄ with B̄ = (r'Zπ*)/(Pen(π*)·r'w), and its variance under
//! homoskedasticity is σ²‖a‖². The short and long regressions are the two
//! corners of this bias-variance frontier.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CanonicalDesign, PenaltySpec};
use crate::pathsolver::PathPoint;

/// Relative threshold below which (w − Zπ)'w counts as zero.
const DENOM_REL_TOL: f64 = 1e-12;

/// A linear estimator a'Y with its exact worst-case-bias and variance
/// ingredients.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    /// Weight vector a (length n), normalized so a'w = 1.
    pub a: DVector<f64>,
    /// Worst-case bias per unit of the regularity parameter C.
    pub bbar: f64,
    /// Variance σ²‖a‖² under homoskedasticity.
    pub v_homo: f64,
    /// Maximal Lindeberg weight max_i a_i² / Σ_j a_j².
    pub lind: f64,
}

fn lindeberg_weight(a: &DVector<f64>) -> f64 {
    let total = a.norm_squared();
    if total == 0.0 {
        return 1.0;
    }
    a.iter().map(|x| x * x).fold(0.0_f64, f64::max) / total
}

fn estimator_from_residual(
    design: &CanonicalDesign,
    spec: &PenaltySpec,
    residual: &DVector<f64>,
    sigma2: f64,
) -> Result<LinearEstimator> {
    let denom = residual.dot(&design.w_t);
    if denom.abs() < DENOM_REL_TOL * design.w_t.norm() * residual.norm() {
        return Err(Error::ZeroDenominator);
    }
    let a = residual / denom;
    let eff = spec.effective(design)?;
    // sup over Pen(γ) ≤ 1 of a'Z₂γ: exact for any weight vector by Hölder,
    // and equal to the ratio (w−Zπ)'Zπ / (Pen(π)·(w−Zπ)'w) at exact path
    // solutions (covered by tests); the dual form stays valid at points that
    // are merely feasible, e.g. between grid points
    let bbar = eff.dual(&design.z2_t.tr_mul(&a))?;
    Ok(LinearEstimator { v_homo: sigma2 * a.norm_squared(), lind: lindeberg_weight(&a), a, bbar })
}

/// Build the minimax linear estimator of a path point.
///
/// `sigma2` is the (known or estimated) error variance entering `v_homo`.
pub fn weights_from_path(
    pp: &PathPoint,
    design: &CanonicalDesign,
    spec: &PenaltySpec,
    sigma2: f64,
) -> Result<LinearEstimator> {
    if pp.rss <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    estimator_from_residual(design, spec, &pp.residual, sigma2)
}

/// Short regression corner: only baseline controls, a = w_t/‖w_t‖².
/// Minimal variance among linear estimators with finite worst-case bias.
pub fn short_regression(
    design: &CanonicalDesign,
    spec: &PenaltySpec,
    sigma2: f64,
) -> Result<LinearEstimator> {
    if design.w_t.norm_squared() <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    estimator_from_residual(design, spec, &design.w_t.clone(), sigma2)
}

/// Long regression corner: all controls included; unbiased (B̄ = 0).
///
/// Errors with `CollinearDesign` when w lies in the column space of (Z1, Z2),
/// e.g. when k ≥ n.
pub fn long_regression(
    design: &CanonicalDesign,
    spec: &PenaltySpec,
    sigma2: f64,
) -> Result<LinearEstimator> {
    let pi_ls = linalg::least_squares(&design.z2_t, &design.w_t);
    let residual = &design.w_t - &design.z2_t * &pi_ls;
    if residual.norm() <= 1e-10 * design.w_t.norm() {
        return Err(Error::CollinearDesign(
            "w is numerically in the column space of the controls".into(),
        ));
    }
    estimator_from_residual(design, spec, &residual, sigma2)
}

/// Apply the estimator to an outcome vector: β̂ = a'y.
pub fn apply(est: &LinearEstimator, y: &DVector<f64>) -> Result<f64> {
    if y.len() != est.a.len() {
        return Err(Error::DimensionMismatch { expected: est.a.len(), got: y.len() });
    }
    Ok(est.a.dot(y))
}

/// Blend weight of the short regression in the predictor-norm ridge
/// estimator: β̂_λ = ω(λ) β̂_short + (1 − ω(λ)) β̂_long with
/// ω(λ) = (λ/n)/(λ/n + ς²) and ς² = w'(I−H_Z)w / w'(I−H_{Z1})w.
///
/// Returns (ω(λ), ς²). Valid for the penalty M'M = Z₂'Z₂/n.
pub fn ridge_blend(design: &CanonicalDesign, lambda: f64) -> Result<(f64, f64)> {
    let wss = design.w_t.norm_squared();
    if wss <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    let pi_ls = linalg::least_squares(&design.z2_t, &design.w_t);
    let rss_long = (&design.w_t - &design.z2_t * &pi_ls).norm_squared();
    if rss_long <= 1e-20 * wss {
        return Err(Error::CollinearDesign(
            "long regression undefined: w in the span of the controls".into(),
        ));
    }
    let varsigma2 = rss_long / wss;
    let ln = lambda / design.n() as f64;
    Ok((ln / (ln + varsigma2), varsigma2))
}

/// β̂ from the one-shot generalized ridge regression of Y on X = (w, Z1, Z2):
/// the first coordinate of (X'X + λ blockdiag(0, M'M))⁻¹X'Y. Used as an
/// algebraic cross-check of the path route.
pub fn ridge_one_shot(
    w: &DVector<f64>,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    y: &DVector<f64>,
    mm: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    let n = w.len();
    let (k1, k2) = (z1.ncols(), z2.ncols());
    let kx = 1 + k1 + k2;
    let mut x = DMatrix::zeros(n, kx);
    x.column_mut(0).copy_from(w);
    x.columns_mut(1, k1).copy_from(z1);
    x.columns_mut(1 + k1, k2).copy_from(z2);
    let mut system = x.transpose() * &x;
    system.view_mut((1 + k1, 1 + k1), (k2, k2)).add_assign(&(lambda * mm));
    let rhs = x.transpose() * y;
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("one-shot ridge system singular".into()))?;
    Ok(sol[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::{canonicalize, Dataset, PenaltyKind, WeightMatrix};
    use crate::pathsolver::{default_ridge_lambdas, lasso_path, ridge_path};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_dataset(seed: u64, n: usize, k1: usize, k2: usize) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut norm = || rng.sample::<f64, _>(rand_distr::StandardNormal);
        Dataset::new(
            DVector::from_fn(n, |_, _| norm()),
            DVector::from_fn(n, |_, _| norm()),
            DMatrix::from_fn(n, k1, |_, _| norm()),
            DMatrix::from_fn(n, k2, |_, _| norm()),
            None,
        )
        .unwrap()
    }

    #[test]
    fn short_corner_weights_and_bias() {
        let d = random_dataset(1, 10, 0, 3);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l1();
        let path = lasso_path(&design).unwrap();
        // the λ_max knot has π* = 0: short-regression corner
        let est = weights_from_path(&path.points[0], &design, &spec, 1.0).unwrap();
        let wss = design.w_t.norm_squared();
        assert_relative_eq!((&est.a - &design.w_t / wss).norm(), 0.0, epsilon = 1e-12);
        let expect_bbar =
            linalg::lp_norm(&(design.z2_t.transpose() * &design.w_t), f64::INFINITY) / wss;
        assert_relative_eq!(est.bbar, expect_bbar, max_relative = 1e-12);
        // and equals short_regression
        let short = short_regression(&design, &spec, 1.0).unwrap();
        assert_relative_eq!((&short.a - &est.a).norm(), 0.0, epsilon = 1e-13);
        assert_relative_eq!(short.bbar, est.bbar, max_relative = 1e-12);
    }

    #[test]
    fn ratio_bias_equals_dual_norm_at_knots() {
        // at exact solutions the (w−Zπ)'Zπ/(Pen(π)·(w−Zπ)'w) form of the
        // bias coincides with the Hölder dual used by the estimator
        let d = random_dataset(2, 12, 1, 4);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l1();
        let path = lasso_path(&design).unwrap();
        for pp in path.points.iter().filter(|p| p.t_lambda > 1e-10) {
            let est = weights_from_path(pp, &design, &spec, 1.0).unwrap();
            let denom = pp.residual.dot(&design.w_t);
            let ratio =
                pp.residual.dot(&(&design.z2_t * &pp.pi_star)) / (pp.t_lambda * denom);
            assert!(
                (est.bbar - ratio).abs() <= 1e-10 * ratio.abs().max(1.0),
                "dual {} vs ratio {} at λ={}",
                est.bbar,
                ratio,
                pp.lambda
            );
        }
    }

    #[test]
    fn ratio_bias_equals_dual_norm_on_ridge() {
        let d = random_dataset(3, 15, 0, 5);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l2();
        let eff = spec.effective(&design).unwrap();
        let lams = default_ridge_lambdas(&design, &eff);
        let path = ridge_path(&design, &eff, &lams).unwrap();
        for pp in path.points.iter().step_by(9) {
            let est = weights_from_path(pp, &design, &spec, 1.0).unwrap();
            let denom = pp.residual.dot(&design.w_t);
            let ratio =
                pp.residual.dot(&(&design.z2_t * &pp.pi_star)) / (pp.t_lambda * denom);
            assert!(
                (est.bbar - ratio).abs() <= 1e-9 * ratio.abs().max(1.0),
                "dual {} vs ratio {}",
                est.bbar,
                ratio
            );
        }
    }

    #[test]
    fn unit_weight_variance() {
        // w_t = e1 → a = e1, σ² = 1 → V = 1
        let design = CanonicalDesign {
            w_t: DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            z2_t: DMatrix::zeros(3, 1),
            y_t: DVector::zeros(3),
            proj_rank: 0,
        };
        let est = short_regression(&design, &PenaltySpec::l1(), 1.0).unwrap();
        assert_relative_eq!(est.v_homo, 1.0, epsilon = 1e-14);
        assert_relative_eq!(est.lind, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn short_equals_long_without_restricted_controls() {
        let d = random_dataset(4, 9, 2, 0);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l1();
        let short = short_regression(&design, &spec, 1.0).unwrap();
        let long = long_regression(&design, &spec, 1.0).unwrap();
        assert_relative_eq!((&short.a - &long.a).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(short.bbar, 0.0);
        assert_eq!(long.bbar, 0.0);
    }

    #[test]
    fn long_rejects_square_invertible_controls() {
        let d = random_dataset(5, 4, 0, 4);
        let design = canonicalize(&d).unwrap();
        assert!(matches!(
            long_regression(&design, &PenaltySpec::l1(), 1.0),
            Err(Error::CollinearDesign(_))
        ));
    }

    #[test]
    fn long_weights_match_ols_extraction_oracle() {
        let d = random_dataset(6, 20, 2, 3);
        let design = canonicalize(&d).unwrap();
        let long = long_regression(&design, &PenaltySpec::l2(), 1.0).unwrap();
        // oracle: a = X (X'X)⁻¹ e1 on the full design X = (w, Z1, Z2)
        let n = d.n();
        let kx = 1 + d.k1() + d.k2();
        let mut x = DMatrix::zeros(n, kx);
        x.column_mut(0).copy_from(&d.w);
        x.columns_mut(1, d.k1()).copy_from(&d.z1);
        x.columns_mut(1 + d.k1(), d.k2()).copy_from(&d.z2);
        let xtx = x.transpose() * &x;
        let mut e1 = DVector::zeros(kx);
        e1[0] = 1.0;
        let a_oracle = &x * xtx.full_piv_lu().solve(&e1).unwrap();
        assert!(
            (&long.a - &a_oracle).norm() < 1e-9 * a_oracle.norm(),
            "difference {}",
            (&long.a - &a_oracle).norm()
        );
    }

    #[test]
    fn apply_basic_and_certificate() {
        let d = random_dataset(7, 10, 1, 3);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l1();
        let path = lasso_path(&design).unwrap();
        let c = 0.8;
        for pp in &path.points {
            let est = weights_from_path(pp, &design, &spec, 1.0).unwrap();
            // a'w = 1 invariant (raw w: weights are Z1-orthogonal residuals)
            assert_relative_eq!(apply(&est, &d.w).unwrap(), 1.0, epsilon = 1e-8);
            // worst-case-bias certificate on random feasible γ
            let mut rng = ChaCha12Rng::seed_from_u64(pp.lambda.to_bits());
            for _ in 0..20 {
                let mut g = DVector::from_fn(3, |_, _| {
                    rng.sample::<f64, _>(rand_distr::StandardNormal)
                });
                let pen = linalg::lp_norm(&g, 1.0);
                if pen == 0.0 {
                    continue;
                }
                g *= c / pen;
                let y_bias = &design.z2_t * &g;
                let attained = apply(&est, &y_bias).unwrap().abs();
                assert!(attained <= c * est.bbar + 1e-8, "{attained} > {}", c * est.bbar);
            }
            // the max-bias γ = (C/t) π* attains the bound
            if pp.t_lambda > 1e-8 {
                let g_star = &pp.pi_star * (c / pp.t_lambda);
                let attained = apply(&est, &(&design.z2_t * &g_star)).unwrap().abs();
                assert_relative_eq!(attained, c * est.bbar, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn apply_length_mismatch_errors() {
        let d = random_dataset(8, 6, 0, 2);
        let design = canonicalize(&d).unwrap();
        let est = short_regression(&design, &PenaltySpec::l1(), 1.0).unwrap();
        assert!(matches!(
            apply(&est, &DVector::zeros(5)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frontier_monotone_along_path() {
        let d = random_dataset(9, 25, 1, 8);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l1();
        let path = lasso_path(&design).unwrap();
        let ests: Vec<_> = path
            .points
            .iter()
            .map(|pp| weights_from_path(pp, &design, &spec, 1.0).unwrap())
            .collect();
        for w in ests.windows(2) {
            // t increasing: bias decreases, variance increases
            assert!(w[1].bbar <= w[0].bbar + 1e-10);
            assert!(w[1].v_homo >= w[0].v_homo - 1e-10);
        }
    }

    #[test]
    fn generalized_ridge_identity_eq_one_shot() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let d = random_dataset(11, 18, 2, 4);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::l2();
        let eff = spec.effective(&design).unwrap();
        for &lambda in &[0.3, 2.0, 25.0] {
            let path = ridge_path(&design, &eff, &[lambda]).unwrap();
            let est = weights_from_path(&path.points[0], &design, &spec, 1.0).unwrap();
            let y = DVector::from_fn(18, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let beta_path = apply(&est, &y).unwrap();
            let mm = DMatrix::identity(4, 4);
            let beta_direct = ridge_one_shot(&d.w, &d.z1, &d.z2, &y, &mm, lambda).unwrap();
            assert_relative_eq!(beta_path, beta_direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn blend_identity_for_predictor_norm() {
        let d = random_dataset(12, 30, 1, 4);
        let design = canonicalize(&d).unwrap();
        let spec = PenaltySpec::predictor_norm();
        let eff = spec.effective(&design).unwrap();
        let sigma2 = 1.0;
        let short = short_regression(&design, &spec, sigma2).unwrap();
        let long = long_regression(&design, &spec, sigma2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let beta_short = apply(&short, &y).unwrap();
        let beta_long = apply(&long, &y).unwrap();
        for &lambda in &[0.5, 2.0, 40.0] {
            let (omega, varsigma2) = ridge_blend(&design, lambda).unwrap();
            assert!(varsigma2 > 0.0 && varsigma2 <= 1.0 + 1e-12);
            let path = ridge_path(&design, &eff, &[lambda]).unwrap();
            let est = weights_from_path(&path.points[0], &design, &spec, sigma2).unwrap();
            let beta_path = apply(&est, &y).unwrap();
            let blend = omega * beta_short + (1.0 - omega) * beta_long;
            assert_relative_eq!(beta_path, blend, max_relative = 1e-10);
        }
        // corner behavior of the blend weight
        assert_relative_eq!(ridge_blend(&design, 0.0).unwrap().0, 0.0);
        assert!(ridge_blend(&design, 1e14).unwrap().0 > 1.0 - 1e-9);
    }

    #[test]
    fn weighted_penalty_bias_respects_m() {
        let d = random_dataset(14, 12, 0, 2);
        let design = canonicalize(&d).unwrap();
        let m = DMatrix::from_diagonal_element(2, 2, 2.0);
        let spec = PenaltySpec {
            kind: PenaltyKind::Lp(2.0),
            weight: WeightMatrix::Matrix(m.clone()),
        };
        let eff = spec.effective(&design).unwrap();
        let path = ridge_path(&design, &eff, &[1.5]).unwrap();
        let est = weights_from_path(&path.points[0], &design, &spec, 1.0).unwrap();
        let pp = &path.points[0];
        let ratio = pp.residual.dot(&(&design.z2_t * &pp.pi_star))
            / (pp.t_lambda * pp.residual.dot(&design.w_t));
        assert_relative_eq!(est.bbar, ratio, max_relative = 1e-9);
    }

}
