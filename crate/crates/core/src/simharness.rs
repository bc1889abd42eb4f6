//! Seeded data-generating processes and Monte Carlo experiments for coverage
//! and rate verification at desk scale.
//!
//! Replications are embarrassingly parallel: replication r draws from a seed
//! derived from (base seed, r) with a splitmix mix, so results do not depend
//! on the parallel schedule.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{StandardNormal, StudentT as StudentTDist, Uniform};
use rayon::prelude::*;

use crate::diagnostics::rate_rq;
use crate::error::{Error, Result};
use crate::inference::{baseline_pipeline, select_lambda, solution_path, Criterion, InitResiduals};
use crate::linalg;
use crate::model::{canonicalize, Dataset, PenaltySpec};


/// Derive an independent substream seed for replication `stream`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Restricted-coefficient pattern of the simulated truth.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaStyle {
    /// γ₂ = 0.
    Zero,
    /// The bias-attaining direction of the FLCI-optimal estimator at the
    /// stated budget: γ₂ = (C/t_λ*)·π*_λ* (α = 0.05 inside the selection).
    WorstCase { c: f64 },
    /// Dense one-signed uniform draws (U(0,1) magnitudes) rescaled so
    /// Pen(γ₂) = C exactly; many small confounders pushing one way.
    DenseUniform { c: f64 },
    /// `s` nonzero coordinates of equal magnitude with Pen(γ₂) = C exactly.
    Sparse { s: usize, c: f64 },
}

/// Design-matrix distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignStyle {
    IidNormal,
    /// One-factor equicorrelation: each regressor is √ρ·f + √(1−ρ)·ξ.
    Correlated { rho: f64 },
}

/// Error distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorStyle {
    /// ε ~ N(0, σ²); the dataset carries σ² (idealized mode).
    GaussHomo { sigma: f64 },
    /// sd(εᵢ) = 0.5 + |wᵢ| with standard-normal shocks, or standardized
    /// Student-t shocks when `t_df` is set.
    HeteroByW { t_df: Option<f64> },
    /// Raw Student-t errors.
    StudentT { df: f64 },
}

/// Full description of one data-generating process.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub beta: f64,
    pub gamma_style: GammaStyle,
    pub design: DesignStyle,
    pub error: ErrorStyle,
    /// Exponent of the ℓp norm used to normalize γ₂ (and to build the
    /// worst-case direction).
    pub pnorm: f64,
    pub seed: u64,
}

/// The simulated truth accompanying a generated dataset.
#[derive(Debug, Clone)]
pub struct Truth {
    pub beta: f64,
    pub gamma1: DVector<f64>,
    pub gamma2: DVector<f64>,
    /// ‖γ₂‖_p under the spec's pnorm.
    pub pen_gamma2: f64,
    /// True error ε, kept for oracle checks.
    pub eps: DVector<f64>,
}

impl DgpSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("n must be >= 2, got {}", self.n)));
        }
        if self.k1 >= self.n {
            return Err(Error::InvalidSpec("k1 must be < n".into()));
        }
        if !(self.pnorm >= 1.0) {
            return Err(Error::InvalidSpec(format!("pnorm must be >= 1, got {}", self.pnorm)));
        }
        if let GammaStyle::Sparse { s, .. } = self.gamma_style {
            if s == 0 || s > self.k2 {
                return Err(Error::InvalidSpec(format!(
                    "sparse support size {s} out of range 1..={}",
                    self.k2
                )));
            }
        }
        if let DesignStyle::Correlated { rho } = self.design {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidSpec(format!("rho must lie in [0, 1), got {rho}")));
            }
        }
        Ok(())
    }

    fn penalty(&self) -> Result<PenaltySpec> {
        PenaltySpec::lp(self.pnorm)
    }
}

fn nominal_sigma2(error: &ErrorStyle) -> f64 {
    match error {
        ErrorStyle::GaussHomo { sigma } => sigma * sigma,
        ErrorStyle::HeteroByW { .. } => 1.0,
        ErrorStyle::StudentT { df } => {
            if *df > 2.0 {
                df / (df - 2.0)
            } else {
                1.0
            }
        }
    }
}

/// Worst-case direction when the FLCI-optimal point is the π* = 0 corner:
/// the Hölder-dual maximizer of the short-regression bias.
fn dual_direction(v: &DVector<f64>, p: f64, c: f64) -> DVector<f64> {
    let k = v.len();
    if (p - 1.0).abs() < 1e-12 {
        let vmax = v.amax();
        let j = (0..k).find(|&j| v[j].abs() >= vmax * (1.0 - 1e-12)).unwrap_or(0);
        let mut g = DVector::zeros(k);
        g[j] = c * v[j].signum();
        g
    } else {
        // ℓp maximizer: |g_j| ∝ |v_j|^{q−1}, scaled to ‖g‖_p = c
        let q = linalg::dual_exponent(p);
        let mut g = v.map(|x| x.signum() * x.abs().powf(q - 1.0));
        let norm = linalg::lp_norm(&g, p);
        if norm > 0.0 {
            g *= c / norm;
        }
        g
    }
}

/// Generate a dataset and its truth record. Identical specs produce
/// bit-identical output.
pub fn generate(spec: &DgpSpec) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (n, k1, k2) = (spec.n, spec.k1, spec.k2);

    let (factor, rho) = match spec.design {
        DesignStyle::IidNormal => (DVector::zeros(n), 0.0),
        DesignStyle::Correlated { rho } => {
            (DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)), rho)
        }
    };
    let draw_column = |rng: &mut ChaCha12Rng| -> DVector<f64> {
        DVector::from_fn(n, |i, _| {
            rho.sqrt() * factor[i] + (1.0 - rho).sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
    };
    let w = draw_column(&mut rng);
    let mut z1 = DMatrix::zeros(n, k1);
    for j in 0..k1 {
        z1.set_column(j, &draw_column(&mut rng));
    }
    let mut z2 = DMatrix::zeros(n, k2);
    for j in 0..k2 {
        z2.set_column(j, &draw_column(&mut rng));
    }

    let unit = Uniform::new_inclusive(-1.0, 1.0);
    let (gamma1, gamma2) = match &spec.gamma_style {
        GammaStyle::Zero => (DVector::zeros(k1), DVector::zeros(k2)),
        GammaStyle::WorstCase { c } => {
            let probe = Dataset::new(
                DVector::zeros(n),
                w.clone(),
                z1.clone(),
                z2.clone(),
                None,
            )?;
            let design = canonicalize(&probe)?;
            let penalty = spec.penalty()?;
            let path = solution_path(&design, &penalty)?;
            let sigma2 = nominal_sigma2(&spec.error);
            let sel = select_lambda(
                &path,
                &design,
                &penalty,
                *c,
                sigma2,
                0.05,
                Criterion::Flci,
                None,
            )?;
            let g2 = if sel.point.t_lambda > 1e-10 {
                &sel.point.pi_star * (*c / sel.point.t_lambda)
            } else {
                dual_direction(&(design.z2_t.transpose() * &design.w_t), spec.pnorm, *c)
            };
            (DVector::zeros(k1), g2)
        }
        GammaStyle::DenseUniform { c } => {
            let g1 = DVector::from_fn(k1, |_, _| rng.sample(unit));
            let mut g2 = DVector::from_fn(k2, |_, _| 0.5 * (rng.sample(unit) + 1.0));
            let norm = linalg::lp_norm(&g2, spec.pnorm);
            if norm > 0.0 {
                g2 *= *c / norm;
            }
            (g1, g2)
        }
        GammaStyle::Sparse { s, c } => {
            let g1 = DVector::from_fn(k1, |_, _| rng.sample(unit));
            // partial Fisher-Yates for the support
            let mut idx: Vec<usize> = (0..k2).collect();
            for i in 0..*s {
                let j = rng.gen_range(i..k2);
                idx.swap(i, j);
            }
            let mag = c / (*s as f64).powf(1.0 / spec.pnorm);
            let mut g2 = DVector::zeros(k2);
            for &j in idx.iter().take(*s) {
                g2[j] = if rng.gen::<bool>() { mag } else { -mag };
            }
            (g1, g2)
        }
    };

    let eps = match spec.error {
        ErrorStyle::GaussHomo { sigma } => {
            DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
        }
        ErrorStyle::HeteroByW { t_df } => {
            let shock: Box<dyn FnMut(&mut ChaCha12Rng) -> f64> = match t_df {
                None => Box::new(|rng: &mut ChaCha12Rng| rng.sample::<f64, _>(StandardNormal)),
                Some(df) => {
                    let t = StudentTDist::new(df).map_err(|e| {
                        Error::InvalidSpec(format!("bad t degrees of freedom: {e}"))
                    })?;
                    let scale = if df > 2.0 { (df / (df - 2.0)).sqrt() } else { 1.0 };
                    Box::new(move |rng: &mut ChaCha12Rng| rng.sample(t) / scale)
                }
            };
            let mut shock = shock;
            DVector::from_fn(n, |i, _| (0.5 + w[i].abs()) * shock(&mut rng))
        }
        ErrorStyle::StudentT { df } => {
            let t = StudentTDist::new(df)
                .map_err(|e| Error::InvalidSpec(format!("bad t degrees of freedom: {e}")))?;
            DVector::from_fn(n, |_, _| rng.sample(t))
        }
    };

    let y = &w * spec.beta + &z1 * &gamma1 + &z2 * &gamma2 + &eps;
    let sigma2 = match spec.error {
        ErrorStyle::GaussHomo { sigma } => Some(sigma * sigma),
        _ => None,
    };
    let pen_gamma2 = linalg::lp_norm(&gamma2, spec.pnorm);
    let d = Dataset::new(y, w, z1, z2, sigma2)?;
    Ok((d, Truth { beta: spec.beta, gamma1, gamma2, pen_gamma2, eps }))
}

/// One replication record of a coverage experiment.
#[derive(Debug, Clone)]
pub struct CoverageRep {
    pub rep: u64,
    pub covered: bool,
    pub length: f64,
    pub beta_hat: f64,
    pub maxbias: f64,
    pub lambda: f64,
}

/// Summary of a coverage experiment with its per-rep records.
#[derive(Debug, Clone)]
pub struct CoverageOutput {
    pub records: Vec<CoverageRep>,
    pub coverage: f64,
    pub mean_length: f64,
    /// Binomial Monte Carlo standard error of the coverage estimate.
    pub mc_se: f64,
}

/// Monte Carlo coverage of the FLCI-criterion report over `reps`
/// replications of the DGP, assuming the budget `c_assumed`.
pub fn coverage_experiment(
    spec: &DgpSpec,
    penalty: &PenaltySpec,
    c_assumed: f64,
    alpha: f64,
    reps: usize,
) -> Result<CoverageOutput> {
    if reps < 100 {
        return Err(Error::InvalidSpec(format!("need reps >= 100, got {reps}")));
    }
    let mut records: Vec<CoverageRep> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<CoverageRep> {
            let rep_spec = DgpSpec { seed: derive_seed(spec.seed, rep), ..spec.clone() };
            let (d, truth) = generate(&rep_spec)?;
            let pair = baseline_pipeline(
                &d,
                penalty,
                c_assumed,
                alpha,
                &InitResiduals::OutcomeRegression,
                None,
            )?;
            let rpt = &pair.flci;
            Ok(CoverageRep {
                rep,
                covered: truth.beta >= rpt.ci_lo && truth.beta <= rpt.ci_hi,
                length: rpt.ci_hi - rpt.ci_lo,
                beta_hat: rpt.beta_hat,
                maxbias: rpt.maxbias,
                lambda: rpt.lambda_chosen,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.rep);
    let covered = records.iter().filter(|r| r.covered).count() as f64;
    let coverage = covered / reps as f64;
    let mean_length = records.iter().map(|r| r.length).sum::<f64>() / reps as f64;
    let mc_se = (coverage * (1.0 - coverage) / reps as f64).sqrt();
    Ok(CoverageOutput { records, coverage, mean_length, mc_se })
}

/// One cell of a rate experiment.
#[derive(Debug, Clone)]
pub struct RateCell {
    pub n: usize,
    pub k2: usize,
    pub mean_length: f64,
    /// r_q(k₂, n) tabulated alongside for trend checks.
    pub rate_rq: f64,
}

/// Mean optimal FLCI length per (n, k₂) cell, with the rate functional
/// tabulated alongside.
pub fn rate_experiment(
    base: &DgpSpec,
    penalty: &PenaltySpec,
    n_grid: &[usize],
    k_grid: &[usize],
    c: f64,
    alpha: f64,
    reps: usize,
) -> Result<Vec<RateCell>> {
    for g in [n_grid, k_grid] {
        for w in g.windows(2) {
            if w[1] < w[0] {
                return Err(Error::InvalidSpec("rate grids must be ascending".into()));
            }
        }
    }
    let q = linalg::dual_exponent(base.pnorm);
    let mut cells = Vec::new();
    for &n in n_grid {
        for &k2 in k_grid {
            let lengths: Vec<f64> = (0..reps as u64)
                .into_par_iter()
                .map(|rep| -> Result<f64> {
                    let rep_spec = DgpSpec {
                        n,
                        k2,
                        seed: derive_seed(base.seed ^ ((n as u64) << 32) ^ k2 as u64, rep),
                        ..base.clone()
                    };
                    let (d, _) = generate(&rep_spec)?;
                    let pair = baseline_pipeline(
                        &d,
                        penalty,
                        c,
                        alpha,
                        &InitResiduals::OutcomeRegression,
                        None,
                    )?;
                    Ok(pair.flci.ci_hi - pair.flci.ci_lo)
                })
                .collect::<Result<Vec<_>>>()?;
            let mean_length = lengths.iter().sum::<f64>() / lengths.len() as f64;
            cells.push(RateCell { n, k2, mean_length, rate_rq: rate_rq(k2, n, q) });
        }
    }
    Ok(cells)
}

/// Ordinary least-squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// plain-text experiment configs
// ---------------------------------------------------------------------------

/// A parsed experiment configuration.
#[derive(Debug, Clone)]
pub enum ExperimentSpec {
    Coverage { dgp: DgpSpec, c_assumed: f64, alpha: f64, reps: usize },
    Rate { dgp: DgpSpec, n_grid: Vec<usize>, k_grid: Vec<usize>, c: f64, alpha: f64, reps: usize },
}

/// Parse a plain-text key=value experiment config ('#' starts a comment).
///
/// Common keys: experiment=coverage|rate, n, k1, k2, beta, p, gamma
/// (zero|worstcase|dense|sparse), c, sparse_s, design (iid|correlated), rho,
/// error (gauss|hetero|student), sigma, df, seed, reps, alpha, c_assumed,
/// n_grid, k_grid (comma-separated).
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec> {
    let mut kv = std::collections::HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidSpec(format!("config line {} is not key=value: '{raw}'", lineno + 1))
        })?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).cloned();
    let req = |k: &str| get(k).ok_or_else(|| Error::InvalidSpec(format!("missing config key '{k}'")));
    let parse_f = |k: &str, d: f64| -> Result<f64> {
        get(k).map_or(Ok(d), |v| {
            v.parse().map_err(|_| Error::InvalidSpec(format!("bad float for '{k}': {v}")))
        })
    };
    let parse_u = |k: &str, d: usize| -> Result<usize> {
        get(k).map_or(Ok(d), |v| {
            v.parse().map_err(|_| Error::InvalidSpec(format!("bad integer for '{k}': {v}")))
        })
    };
    let parse_list = |k: &str| -> Result<Vec<usize>> {
        req(k)?
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad integer in '{k}'")))
            })
            .collect()
    };

    let c = parse_f("c", 1.0)?;
    let gamma_style = match get("gamma").unwrap_or_else(|| "zero".into()).as_str() {
        "zero" => GammaStyle::Zero,
        "worstcase" => GammaStyle::WorstCase { c },
        "dense" => GammaStyle::DenseUniform { c },
        "sparse" => GammaStyle::Sparse { s: parse_u("sparse_s", 1)?, c },
        other => return Err(Error::InvalidSpec(format!("unknown gamma style '{other}'"))),
    };
    let design = match get("design").unwrap_or_else(|| "iid".into()).as_str() {
        "iid" => DesignStyle::IidNormal,
        "correlated" => DesignStyle::Correlated { rho: parse_f("rho", 0.3)? },
        other => return Err(Error::InvalidSpec(format!("unknown design '{other}'"))),
    };
    let error = match get("error").unwrap_or_else(|| "gauss".into()).as_str() {
        "gauss" => ErrorStyle::GaussHomo { sigma: parse_f("sigma", 1.0)? },
        "hetero" => ErrorStyle::HeteroByW {
            t_df: get("hetero_df").map(|v| v.parse().unwrap_or(8.0)),
        },
        "student" => ErrorStyle::StudentT { df: parse_f("df", 8.0)? },
        other => return Err(Error::InvalidSpec(format!("unknown error style '{other}'"))),
    };
    let dgp = DgpSpec {
        n: parse_u("n", 100)?,
        k1: parse_u("k1", 0)?,
        k2: parse_u("k2", 20)?,
        beta: parse_f("beta", 1.0)?,
        gamma_style,
        design,
        error,
        pnorm: parse_f("p", 1.0)?,
        seed: parse_u("seed", 1)? as u64,
    };
    let alpha = parse_f("alpha", 0.05)?;
    let reps = parse_u("reps", 2000)?;
    match req("experiment")?.as_str() {
        "coverage" => {
            Ok(ExperimentSpec::Coverage { dgp, c_assumed: parse_f("c_assumed", c)?, alpha, reps })
        }
        "rate" => Ok(ExperimentSpec::Rate {
            dgp,
            n_grid: parse_list("n_grid")?,
            k_grid: parse_list("k_grid")?,
            c,
            alpha,
            reps,
        }),
        other => Err(Error::InvalidSpec(format!("unknown experiment '{other}'"))),
    }
}
