//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured quantities (run with `-- --nocapture` to see
//! them). Tolerances are pinned in the assertions.

use biasaware::diagnostics::{
    basic_inequality, double_lasso_zz, known_sigma_lambda_star, lower_ci_c_at_lambda, rate_rq,
    slow_kn,
};
use biasaware::efficiency::efficiency_report;
use biasaware::estimator::{apply, ridge_blend, ridge_one_shot, weights_from_path};
use biasaware::inference::{baseline_pipeline, cv_alpha, solution_path, InitResiduals};
use biasaware::linalg;
use biasaware::model::{canonicalize, CanonicalDesign, Dataset, PenaltySpec};
use biasaware::pathsolver::{
    densify_l1, lasso_kkt_gaps, lasso_path, modulus_curve, ridge_path, ModulusPoint, PathKind,
};
use biasaware::simharness::{
    coverage_experiment, derive_seed, generate, ols_slope, rate_experiment, DesignStyle, DgpSpec,
    ErrorStyle, GammaStyle,
};
use biasaware::stats::z_two_sided;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

fn random_dataset(seed: u64, n: usize, k1: usize, k2: usize, sigma2: Option<f64>) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut norm = || rng.sample::<f64, _>(rand_distr::StandardNormal);
    Dataset::new(
        DVector::from_fn(n, |_, _| norm()),
        DVector::from_fn(n, |_, _| norm()),
        DMatrix::from_fn(n, k1, |_, _| norm()),
        DMatrix::from_fn(n, k2, |_, _| norm()),
        sigma2,
    )
    .unwrap()
}

/// Direct convex solve of "minimize variance subject to a bias bound" for
/// the ℓ1 penalty (dual q = ∞): the constraints C·|z_j'a| ≤ B are linear, so
/// the optimum is found by enumerating active-set sign patterns and solving
/// each equality-constrained least-norm problem.
fn oracle_min_variance_l1(
    design: &CanonicalDesign,
    c: f64,
    bias_bound: f64,
) -> Option<f64> {
    let n = design.n();
    let k2 = design.k2();
    let bound = bias_bound / c;
    let mut best: Option<f64> = None;
    let patterns = 3usize.pow(k2 as u32);
    for code in 0..patterns {
        // digit 0: inactive, 1: +bound, 2: −bound
        let mut digits = Vec::with_capacity(k2);
        let mut rem = code;
        for _ in 0..k2 {
            digits.push(rem % 3);
            rem /= 3;
        }
        let active: Vec<(usize, f64)> = digits
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(j, &d)| (j, if d == 1 { 1.0 } else { -1.0 }))
            .collect();
        let m = 1 + active.len();
        let mut g = DMatrix::zeros(n, m);
        g.column_mut(0).copy_from(&design.w_t);
        for (idx, (j, sign)) in active.iter().enumerate() {
            g.column_mut(idx + 1).copy_from(&(design.z2_t.column(*j) * *sign));
        }
        let mut rhs = DVector::from_element(m, bound);
        rhs[0] = 1.0;
        let gtg = g.transpose() * &g;
        let sol = match gtg.full_piv_lu().solve(&rhs) {
            Some(s) => s,
            None => continue,
        };
        let a = &g * &sol;
        // feasibility of the constraints left inactive
        let mut ok = (a.dot(&design.w_t) - 1.0).abs() < 1e-8;
        for (j, &d) in digits.iter().enumerate() {
            if d == 0 {
                ok &= design.z2_t.column(j).dot(&a).abs() <= bound * (1.0 + 1e-9) + 1e-12;
            }
        }
        if ok {
            let v = a.norm_squared();
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Direct convex solve for the ℓ2 penalty: a(μ) ∝ (I + μ ZZ')⁻¹w with the
/// multiplier μ found by bisection on C·‖Z'a(μ)‖₂ = B.
fn oracle_min_variance_l2(design: &CanonicalDesign, c: f64, bias_bound: f64) -> Option<f64> {
    let n = design.n();
    let zzt = &design.z2_t * design.z2_t.transpose();
    let a_of = |mu: f64| -> Option<DVector<f64>> {
        let m = DMatrix::identity(n, n) + mu * &zzt;
        let raw = m.full_piv_lu().solve(&design.w_t)?;
        let denom = raw.dot(&design.w_t);
        if denom.abs() < 1e-14 {
            return None;
        }
        Some(raw / denom)
    };
    let bias_of = |a: &DVector<f64>| c * (design.z2_t.tr_mul(a)).norm();
    let a0 = a_of(0.0)?;
    if bias_of(&a0) <= bias_bound * (1.0 + 1e-12) {
        return Some(a0.norm_squared());
    }
    let mut hi = 1.0;
    for _ in 0..200 {
        match a_of(hi) {
            Some(a) if bias_of(&a) > bias_bound => hi *= 2.0,
            _ => break,
        }
        if hi > 1e18 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        match a_of(mid) {
            Some(a) if bias_of(&a) > bias_bound => lo = mid,
            _ => hi = mid,
        }
    }
    a_of(0.5 * (lo + hi)).map(|a| a.norm_squared())
}

#[test]
fn criterion_01_frontier_matches_direct_convex_solve() {
    let started = std::time::Instant::now();
    let c = 0.7;
    let mut max_rel = 0.0_f64;
    let mut checked = 0usize;
    for inst in 0..20u64 {
        let n = 5 + (inst % 4) as usize;
        let k2 = 1 + (inst % 3) as usize;
        let k1 = (inst % 2) as usize;
        let p1 = inst % 2 == 0;
        let d = random_dataset(42_000 + inst, n, k1, k2, Some(1.0));
        let design = canonicalize(&d).unwrap();
        let spec = if p1 { PenaltySpec::l1() } else { PenaltySpec::l2() };
        let path = solution_path(&design, &spec).unwrap();
        // probe a few interior points plus the ends
        let idxs = [0, path.len() / 3, 2 * path.len() / 3, path.len() - 1];
        for &i in &idxs {
            let pp = &path.points[i.min(path.len() - 1)];
            let est = match weights_from_path(pp, &design, &spec, 1.0) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let bias_bound = c * est.bbar;
            let v_path = est.v_homo;
            let v_oracle = if p1 {
                oracle_min_variance_l1(&design, c, bias_bound)
            } else {
                oracle_min_variance_l2(&design, c, bias_bound)
            };
            let v_oracle = match v_oracle {
                Some(v) => v,
                None => continue,
            };
            let rel = (v_path - v_oracle).abs() / v_oracle.max(1e-300);
            max_rel = max_rel.max(rel);
            checked += 1;
            assert!(
                rel <= 1e-6,
                "instance {inst}, point {i}: path variance {v_path} vs oracle {v_oracle} (rel {rel:.2e})"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(checked >= 60, "only {checked} frontier points checked");
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 1 took {elapsed:?}");
    println!(
        "criterion 01: PASS — frontier equivalence on {checked} points, max rel err {max_rel:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_02_generalized_ridge_and_blend_identities() {
    let mut max_oneshot = 0.0_f64;
    let mut max_blend = 0.0_f64;
    for inst in 0..50u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(52_000 + inst);
        let n = 30 + (inst % 71) as usize; // 30..=100
        let k1 = (inst % 3) as usize;
        let k2 = 2 + (inst % 45) as usize; // keep 1 + k1 + k2 <= 50
        let d = random_dataset(52_000 + inst, n, k1, k2, Some(1.0));
        let design = canonicalize(&d).unwrap();
        let predictor_norm = inst % 2 == 1;
        let spec = if predictor_norm { PenaltySpec::predictor_norm() } else { PenaltySpec::l2() };
        let eff = spec.effective(&design).unwrap();
        let trace_scale = design
            .z2_t
            .column_iter()
            .map(|col| col.norm_squared())
            .sum::<f64>()
            / k2 as f64;
        let mm = match &eff.weight {
            None => DMatrix::identity(k2, k2),
            Some(m) => m.transpose() * m,
        };
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let (short, long) = if predictor_norm {
            let s = biasaware::estimator::short_regression(&design, &spec, 1.0).unwrap();
            let l = biasaware::estimator::long_regression(&design, &spec, 1.0).unwrap();
            (Some(apply(&s, &y).unwrap()), Some(apply(&l, &y).unwrap()))
        } else {
            (None, None)
        };
        for g in 0..10 {
            let lambda = trace_scale * 10f64.powf(-2.0 + 4.0 * g as f64 / 9.0);
            let path = ridge_path(&design, &eff, &[lambda]).unwrap();
            let est = weights_from_path(&path.points[0], &design, &spec, 1.0).unwrap();
            let beta_path = apply(&est, &y).unwrap();
            let beta_oneshot = ridge_one_shot(&d.w, &d.z1, &d.z2, &y, &mm, lambda).unwrap();
            let rel = (beta_path - beta_oneshot).abs() / beta_oneshot.abs().max(1.0);
            max_oneshot = max_oneshot.max(rel);
            assert!(
                rel <= 1e-8,
                "instance {inst}, λ={lambda}: one-shot identity violated ({beta_path} vs {beta_oneshot})"
            );
            if let (Some(bs), Some(bl)) = (short, long) {
                let (omega, _) = ridge_blend(&design, lambda).unwrap();
                let blend = omega * bs + (1.0 - omega) * bl;
                let rel = (beta_path - blend).abs() / blend.abs().max(1.0);
                max_blend = max_blend.max(rel);
                assert!(
                    rel <= 1e-10,
                    "instance {inst}, λ={lambda}: blend identity violated ({beta_path} vs {blend})"
                );
            }
        }
    }
    println!(
        "criterion 02: PASS — one-shot identity max rel {max_oneshot:.2e}, blend identity max rel {max_blend:.2e}"
    );
}

#[test]
fn criterion_03_kkt_certified_at_every_knot() {
    let mut knots_checked = 0usize;
    let mut worst_active = 0.0_f64;
    let mut worst_inactive = 0.0_f64;
    for inst in 0..50u64 {
        let n = 10 + (inst % 51) as usize; // 10..=60
        let k2 = 2 + ((inst * 7) % 79) as usize; // 2..=80, includes k2 > n
        let k1 = (inst % 3) as usize;
        let d = random_dataset(63_000 + inst, n, k1, k2, None);
        let design = canonicalize(&d).unwrap();
        let path = lasso_path(&design).unwrap();
        for pp in &path.points {
            let (active, inactive) = lasso_kkt_gaps(&design, pp);
            worst_active = worst_active.max(active);
            worst_inactive = worst_inactive.max(inactive);
            assert!(
                active <= 1e-8,
                "instance {inst}: active-set equality gap {active:.2e} at λ={}",
                pp.lambda
            );
            assert!(
                inactive <= 1e-8,
                "instance {inst}: inactive bound gap {inactive:.2e} at λ={}",
                pp.lambda
            );
            knots_checked += 1;
        }
    }
    println!(
        "criterion 03: PASS — {knots_checked} knots certified, worst gaps {worst_active:.2e} / {worst_inactive:.2e}"
    );
}

#[test]
fn criterion_04_critical_value_floors_and_monotonicity() {
    let cv0 = cv_alpha(0.0, 0.05);
    assert!((cv0 - 1.95996).abs() <= 1e-4, "cv(0) = {cv0}");
    let tail = cv_alpha(20.0, 0.05) - 20.0;
    assert!((tail - 1.64485).abs() <= 1e-3, "cv(20) − 20 = {tail}");
    let mut prev = f64::NEG_INFINITY;
    for i in 0..1000 {
        let b = i as f64 * 25.0 / 999.0;
        let cv = cv_alpha(b, 0.05);
        assert!(cv > prev, "cv not strictly increasing at B = {b}");
        prev = cv;
    }
    println!(
        "criterion 04: PASS — cv(0) = {cv0:.5}, cv(20)−20 = {tail:.5}, monotone on 1000-point grid"
    );
}

#[test]
fn criterion_05_idealized_coverage_worst_case() {
    let started = std::time::Instant::now();
    let spec = DgpSpec {
        n: 100,
        k1: 0,
        k2: 200,
        beta: 1.0,
        gamma_style: GammaStyle::WorstCase { c: 0.5 },
        design: DesignStyle::IidNormal,
        error: ErrorStyle::GaussHomo { sigma: 1.0 },
        pnorm: 1.0,
        seed: 7_500,
    };
    let reps = 10_000;
    let out = coverage_experiment(&spec, &PenaltySpec::l1(), 0.5, 0.05, reps).unwrap();
    let floor = 0.95 - 3.0 * (0.05_f64 * 0.95 / reps as f64).sqrt();
    assert!(
        out.coverage >= floor,
        "worst-case idealized coverage {} below floor {floor:.4}",
        out.coverage
    );
    println!(
        "criterion 05: PASS — coverage {:.4} ≥ {:.4} over {} reps (mean length {:.3}), {:?}",
        out.coverage,
        floor,
        reps,
        out.mean_length,
        started.elapsed()
    );
}

#[test]
fn criterion_06_feasible_coverage_heteroskedastic_t8() {
    let started = std::time::Instant::now();
    let spec = DgpSpec {
        n: 200,
        k1: 0,
        k2: 50,
        beta: 1.0,
        gamma_style: GammaStyle::DenseUniform { c: 0.5 },
        design: DesignStyle::IidNormal,
        error: ErrorStyle::HeteroByW { t_df: Some(8.0) },
        pnorm: 1.0,
        seed: 7_600,
    };
    let reps = 5_000;
    let out = coverage_experiment(&spec, &PenaltySpec::l1(), 0.5, 0.05, reps).unwrap();
    assert!(
        out.coverage >= 0.93,
        "feasible heteroskedastic coverage {} below 0.93 (asymptotic-validity tolerance)",
        out.coverage
    );
    println!(
        "criterion 06: PASS — robust-variance coverage {:.4} ≥ 0.93 over {} reps, {:?}",
        out.coverage,
        reps,
        started.elapsed()
    );
}

fn thin_modulus(points: &[ModulusPoint], max_len: usize) -> Vec<ModulusPoint> {
    if points.len() <= max_len {
        return points.to_vec();
    }
    let stride = points.len() as f64 / max_len as f64;
    let mut out: Vec<ModulusPoint> = (0..max_len)
        .map(|i| points[(i as f64 * stride) as usize])
        .collect();
    let last = *points.last().unwrap();
    if out.last().unwrap().delta < last.delta {
        out.push(last);
    }
    out
}

#[test]
fn criterion_07_efficiency_floors() {
    let mut min_kappa = f64::INFINITY;
    for inst in 0..20u64 {
        let n = 25 + (inst % 36) as usize;
        let k2 = 4 + (inst % 9) as usize;
        let c = [0.5, 1.0, 2.0][(inst % 3) as usize];
        let p1 = inst % 2 == 0;
        let d = random_dataset(77_000 + inst, n, 0, k2, Some(1.0));
        let design = canonicalize(&d).unwrap();
        let spec = if p1 { PenaltySpec::l1() } else { PenaltySpec::l2() };
        let path = solution_path(&design, &spec).unwrap();
        let dense = if path.kind == PathKind::L1 { densify_l1(&path, 6) } else { path };
        let modulus = thin_modulus(&modulus_curve(&dense, c, &design).unwrap(), 48);
        let rep = efficiency_report(&modulus, 0.05, 1.0).unwrap();
        min_kappa = min_kappa.min(rep.kappa_flci);
        assert!(
            rep.kappa_flci >= 0.717,
            "instance {inst}: κ_FLCI = {} below the universal floor",
            rep.kappa_flci
        );
        assert!(
            (rep.kappa_flci - rep.kappa_flci_coarse).abs() <= 1e-3,
            "instance {inst}: grid-density disagreement {} vs {}",
            rep.kappa_flci,
            rep.kappa_flci_coarse
        );
        assert!(rep.kappa_mse_hi >= 0.8, "instance {inst}: bracket top {}", rep.kappa_mse_hi);
        assert!(
            rep.kappa_mse_lo <= rep.kappa_mse_hi,
            "instance {inst}: inverted bracket [{}, {}]",
            rep.kappa_mse_lo,
            rep.kappa_mse_hi
        );
    }
    println!("criterion 07: PASS — 20 instances, min κ_FLCI = {min_kappa:.4} ≥ 0.717, brackets consistent");
}

#[test]
fn criterion_08_rate_trends() {
    let started = std::time::Instant::now();
    let reps = 24;
    // (a) ℓ1 length grows with k₂ like √log k₂ at fixed n and C
    let base = DgpSpec {
        n: 200,
        k1: 0,
        k2: 50,
        beta: 1.0,
        gamma_style: GammaStyle::Zero,
        design: DesignStyle::IidNormal,
        error: ErrorStyle::GaussHomo { sigma: 1.0 },
        pnorm: 1.0,
        seed: 8_800,
    };
    let cells = rate_experiment(
        &base,
        &PenaltySpec::l1(),
        &[200],
        &[50, 200, 800, 3200],
        1.0,
        0.05,
        reps,
    )
    .unwrap();
    let x: Vec<f64> = cells.iter().map(|c| ((c.k2 as f64).ln().sqrt()).ln()).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.mean_length.ln()).collect();
    let slope_k = ols_slope(&x, &y);
    assert!(slope_k > 0.0, "log-length slope on log √log k₂ is {slope_k}, expected positive");

    // (b) with C = 0 the length scales like n^{-1/2}
    let cells_n = rate_experiment(
        &base,
        &PenaltySpec::l1(),
        &[50, 100, 200, 400, 800],
        &[25],
        0.0,
        0.05,
        reps,
    )
    .unwrap();
    let xn: Vec<f64> = cells_n.iter().map(|c| (c.n as f64).ln()).collect();
    let yn: Vec<f64> = cells_n.iter().map(|c| c.mean_length.ln()).collect();
    let slope_n = ols_slope(&xn, &yn);
    assert!(
        (slope_n + 0.5).abs() <= 0.1,
        "C = 0 slope of log length on log n is {slope_n}, expected −0.5 ± 0.1"
    );

    // (c) large C: length plateaus in the bias-dominated regime
    let plateau = rate_experiment(
        &base,
        &PenaltySpec::l1(),
        &[100],
        &[50],
        5.0,
        0.05,
        reps,
    )
    .unwrap()[0]
        .mean_length;
    let plateau2 = rate_experiment(
        &base,
        &PenaltySpec::l1(),
        &[100],
        &[50],
        10.0,
        0.05,
        reps,
    )
    .unwrap()[0]
        .mean_length;
    let ratio = plateau / plateau2;
    assert!(ratio >= 0.9, "length ratio between large-C points is {ratio}, expected ≥ 0.9");

    println!(
        "criterion 08: PASS — k-sweep slope {slope_k:.3} > 0, n-sweep slope {slope_n:.3} ∈ [−0.6, −0.4], large-C ratio {ratio:.3}, {:?}",
        started.elapsed()
    );
}

#[test]
fn criterion_09_lower_ci_null_rate_and_basic_inequality() {
    let started = std::time::Instant::now();
    let (n, k2) = (60, 8);
    let sigma = 1.0;
    let alpha = 0.05;
    let beta = 0.4;
    let reps = 5_000usize;
    // fixed design, redrawn errors (the idealized model conditions on X)
    let mut rng = ChaCha12Rng::seed_from_u64(9_900);
    let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let z2 = DMatrix::from_fn(n, k2, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let spec = PenaltySpec::l1();
    let template = Dataset::new(
        DVector::zeros(n),
        w.clone(),
        DMatrix::zeros(n, 0),
        z2.clone(),
        Some(sigma * sigma),
    )
    .unwrap();
    // the quantile of the score norm depends only on the design: compute once
    let lambda_star =
        known_sigma_lambda_star(&template, &spec, alpha, 100_000, 424_242).unwrap();

    let lambda_reg = slow_kn(n) * rate_rq(k2, n, f64::INFINITY);
    let theta2_true = DVector::zeros(k2);
    let results: Vec<(bool, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rr = ChaCha12Rng::seed_from_u64(derive_seed(31_337, rep));
            let eps = DVector::from_fn(n, |_, _| {
                sigma * rr.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let y = &w * beta + &eps;
            let d = Dataset::new(y, w.clone(), DMatrix::zeros(n, 0), z2.clone(), Some(sigma * sigma))
                .unwrap();
            let lower =
                lower_ci_c_at_lambda(&d, &spec, alpha, lambda_star, "known-sigma-mc").unwrap();
            let check = basic_inequality(&d, &spec, lambda_reg, &theta2_true, &eps).unwrap();
            let basic_ok = check.lhs <= check.rhs + 1e-8;
            (lower.c_hat > 0.0, basic_ok)
        })
        .collect();
    let false_positive = results.iter().filter(|r| r.0).count() as f64 / reps as f64;
    let basic_failures = results.iter().filter(|r| !r.1).count();
    let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
    assert!(
        false_positive <= alpha + 3.0 * se,
        "P(Ĉ > 0) = {false_positive:.4} exceeds {alpha} + 3·{se:.4} under the γ₂ = 0 truth"
    );
    assert_eq!(basic_failures, 0, "{basic_failures} replications violated the basic inequality");
    println!(
        "criterion 09: PASS — P(Ĉ>0) = {false_positive:.4} ≤ {:.4}; basic inequality held on all {reps} reps, {:?}",
        alpha + 3.0 * se,
        started.elapsed()
    );
}

#[test]
fn criterion_10_double_lasso_undercovers_dense_truth() {
    let started = std::time::Instant::now();
    let reps = 2_000usize;
    let (n, k2) = (100, 150);
    let sigma = 1.0;
    let c = 1.0;
    let base = DgpSpec {
        n,
        k1: 0,
        k2,
        beta: 1.0,
        gamma_style: GammaStyle::DenseUniform { c },
        design: DesignStyle::Correlated { rho: 0.5 },
        error: ErrorStyle::GaussHomo { sigma },
        pnorm: 1.0,
        seed: 10_100,
    };
    let spec = PenaltySpec::l1();
    // conventional universal-threshold penalty on the raw ‖·‖² + λ‖·‖₁ scale
    let lambda_zz = 2.0 * sigma * (2.0 * (n as f64) * ((k2 + 1) as f64).ln()).sqrt();

    let results: Vec<(bool, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_spec = DgpSpec { seed: derive_seed(base.seed, rep), ..base.clone() };
            let (d, truth) = generate(&rep_spec).unwrap();
            let pair = baseline_pipeline(
                &d,
                &spec,
                c,
                0.05,
                &InitResiduals::OutcomeRegression,
                None,
            )
            .unwrap();
            let flci_covers = truth.beta >= pair.flci.ci_lo && truth.beta <= pair.flci.ci_hi;
            let zz = double_lasso_zz(&d, lambda_zz, lambda_zz, 0.05).unwrap();
            let zz_covers = truth.beta >= zz.ci_lo && truth.beta <= zz.ci_hi;
            (flci_covers, zz_covers)
        })
        .collect();
    let cov_flci = results.iter().filter(|r| r.0).count() as f64 / reps as f64;
    let cov_zz = results.iter().filter(|r| r.1).count() as f64 / reps as f64;
    let se = ((cov_flci * (1.0 - cov_flci) + cov_zz * (1.0 - cov_zz)) / reps as f64).sqrt();
    assert!(
        cov_zz < cov_flci,
        "naive double-lasso coverage {cov_zz:.4} not below bias-aware coverage {cov_flci:.4}"
    );
    assert!(
        cov_flci - cov_zz >= 2.0 * se.max(1e-6),
        "coverage gap {:.4} below 2·MC-se = {:.4}",
        cov_flci - cov_zz,
        2.0 * se
    );
    println!(
        "criterion 10: PASS — bias-aware coverage {cov_flci:.4} vs naive {cov_zz:.4} (gap ≥ 2·se = {:.4}), {:?}",
        2.0 * se,
        started.elapsed()
    );
}

#[test]
fn acceptance_suite_summary() {
    // reports the tolerances pinned above so a log scrape shows the gate
    println!(
        "acceptance gate: cv floors |cv(0)−1.95996|≤1e-4, cv(20)−20→1.64485±1e-3; \
         frontier ≤1e-6 rel; ridge identity ≤1e-8 rel; blend ≤1e-10 rel; KKT ≤1e-8; \
         idealized coverage ≥0.9435 (1e4 reps); feasible coverage ≥0.93 (5e3 reps); \
         κ_FLCI ≥0.717 and MSE bracket top ≥0.8 (20 instances); rate slopes (+, −0.5±0.1); \
         lower-CI null rate ≤α+3se with basic inequality on every rep; \
         double-lasso gap ≥2·MC-se ({} z for reference)",
        z_two_sided(0.05)
    );
    let _ = linalg::dual_exponent(2.0);
}
