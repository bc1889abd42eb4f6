//! Regression data model, penalty specifications, and canonicalization.
//!
//! The dataset carries an outcome `y`, a regressor of interest `w`, a block
//! of unrestricted baseline controls `Z1`, and a block of restricted controls
//! `Z2` whose coefficient vector is bounded through a penalty. Baseline
//! controls are partialled out once (Frisch–Waugh), so every solver downstream
//! works on a canonical problem in which any weight vector built from
//! residuals is automatically orthogonal to `Z1`.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue floor applied when materializing the predictor-norm weight
/// matrix (Z2'Z2/n)^{1/2}.
pub const PREDICTOR_NORM_EIG_FLOOR: f64 = 1e-12;

/// A regression dataset in raw (un-partialled) form.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Outcome vector, length n.
    pub y: DVector<f64>,
    /// Regressor of interest, length n.
    pub w: DVector<f64>,
    /// Unrestricted baseline controls, n × k1 (may have zero columns).
    pub z1: DMatrix<f64>,
    /// Restricted controls, n × k2.
    pub z2: DMatrix<f64>,
    /// Known error variance σ² (idealized mode); `None` in feasible mode.
    pub sigma2: Option<f64>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        w: DVector<f64>,
        z1: DMatrix<f64>,
        z2: DMatrix<f64>,
        sigma2: Option<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidSpec(format!("need n >= 2 observations, got {n}")));
        }
        for (len, what) in [(w.len(), "w"), (z1.nrows(), "Z1"), (z2.nrows(), "Z2")] {
            if len != n {
                return Err(Error::Schema(format!("{what} has {len} rows, outcome has {n}")));
            }
        }
        if z1.ncols() >= n {
            return Err(Error::InvalidSpec(format!(
                "baseline controls must satisfy k1 < n (k1 = {}, n = {n})",
                z1.ncols()
            )));
        }
        let finite = |m: &[f64]| m.iter().all(|x| x.is_finite());
        if !finite(y.as_slice())
            || !finite(w.as_slice())
            || !finite(z1.as_slice())
            || !finite(z2.as_slice())
        {
            return Err(Error::NonFiniteValue { column: "<matrix>".into(), row: 0 });
        }
        if w.amax() == 0.0 {
            return Err(Error::InvalidSpec("regressor of interest is identically zero".into()));
        }
        if let Some(s2) = sigma2 {
            if !(s2 >= 0.0) {
                return Err(Error::InvalidSpec(format!("sigma2 must be nonnegative, got {s2}")));
            }
        }
        Ok(Self { y, w, z1, z2, sigma2 })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k1(&self) -> usize {
        self.z1.ncols()
    }

    pub fn k2(&self) -> usize {
        self.z2.ncols()
    }
}

/// Column mapping used when ingesting a CSV file.
#[derive(Debug, Clone)]
pub struct Schema {
    pub y: String,
    pub w: String,
    pub baseline: Vec<String>,
    pub restricted: Vec<String>,
}

/// Load a dataset from a CSV file with a header row.
///
/// The schema must name one outcome column, one treatment column, and
/// disjoint baseline/restricted control sets; every named column must exist
/// and contain finite numbers.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    if schema.restricted.is_empty() {
        return Err(Error::Schema("restricted control set is empty; nothing to penalize".into()));
    }
    let mut seen = HashSet::new();
    for name in std::iter::once(&schema.y)
        .chain(std::iter::once(&schema.w))
        .chain(schema.baseline.iter())
        .chain(schema.restricted.iter())
    {
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("column '{name}' mapped more than once")));
        }
    }

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let y_idx = index_of(&schema.y)?;
    let w_idx = index_of(&schema.w)?;
    let z1_idx: Vec<usize> = schema.baseline.iter().map(|c| index_of(c)).collect::<Result<_>>()?;
    let z2_idx: Vec<usize> = schema.restricted.iter().map(|c| index_of(c)).collect::<Result<_>>()?;

    let mut y = Vec::new();
    let mut w = Vec::new();
    let mut z1 = vec![Vec::new(); z1_idx.len()];
    let mut z2 = vec![Vec::new(); z2_idx.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |idx: usize, column: &str| -> Result<f64> {
            let raw = record
                .get(idx)
                .ok_or_else(|| Error::Schema(format!("row {row} shorter than header")))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::NonFiniteValue { column: column.into(), row })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { column: column.into(), row });
            }
            Ok(v)
        };
        y.push(cell(y_idx, &schema.y)?);
        w.push(cell(w_idx, &schema.w)?);
        for (j, &idx) in z1_idx.iter().enumerate() {
            z1[j].push(cell(idx, &schema.baseline[j])?);
        }
        for (j, &idx) in z2_idx.iter().enumerate() {
            z2[j].push(cell(idx, &schema.restricted[j])?);
        }
    }
    let n = y.len();
    let z1_mat = DMatrix::from_fn(n, z1.len(), |i, j| z1[j][i]);
    let z2_mat = DMatrix::from_fn(n, z2.len(), |i, j| z2[j][i]);
    Dataset::new(DVector::from_vec(y), DVector::from_vec(w), z1_mat, z2_mat, None)
}

/// Which seminorm bounds the restricted coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    /// ‖M γ₂‖_p for p ≥ 1.
    Lp(f64),
    /// ‖Z₂ γ₂ / √n‖₂ (the partialled predictor norm), internally reduced to
    /// the weighted ℓ2 case with M = (Z₂'Z₂/n)^{1/2}.
    PredictorNorm,
}

/// Weight matrix for the ℓp penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMatrix {
    Identity,
    Matrix(DMatrix<f64>),
}

/// Penalty specification: the seminorm Pen(·) on the restricted coefficients.
///
/// Which coefficients are restricted is determined by the dataset split: `Z2`
/// columns are restricted, `Z1` columns are not.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub weight: WeightMatrix,
}

impl PenaltySpec {
    pub fn l1() -> Self {
        Self { kind: PenaltyKind::Lp(1.0), weight: WeightMatrix::Identity }
    }

    pub fn l2() -> Self {
        Self { kind: PenaltyKind::Lp(2.0), weight: WeightMatrix::Identity }
    }

    pub fn lp(p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidSpec(format!("penalty exponent must satisfy p >= 1, got {p}")));
        }
        Ok(Self { kind: PenaltyKind::Lp(p), weight: WeightMatrix::Identity })
    }

    pub fn weighted_l2(m: DMatrix<f64>) -> Self {
        Self { kind: PenaltyKind::Lp(2.0), weight: WeightMatrix::Matrix(m) }
    }

    pub fn predictor_norm() -> Self {
        Self { kind: PenaltyKind::PredictorNorm, weight: WeightMatrix::Identity }
    }

    /// Exponent p of the ℓp family (PredictorNorm reduces to p = 2).
    pub fn exponent(&self) -> f64 {
        match self.kind {
            PenaltyKind::Lp(p) => p,
            PenaltyKind::PredictorNorm => 2.0,
        }
    }

    /// Materialize the penalty against a canonical design: the effective
    /// (p, q, M) triple used by solvers and the dual norm.
    pub fn effective(&self, design: &CanonicalDesign) -> Result<EffectivePenalty> {
        let k2 = design.z2_t.ncols();
        match &self.kind {
            PenaltyKind::Lp(p) => {
                if !(*p >= 1.0) {
                    return Err(Error::InvalidSpec(format!("penalty exponent {p} < 1")));
                }
                let weight = match &self.weight {
                    WeightMatrix::Identity => None,
                    WeightMatrix::Matrix(m) => {
                        if m.nrows() != k2 || m.ncols() != k2 {
                            return Err(Error::DimensionMismatch { expected: k2, got: m.nrows() });
                        }
                        Some(m.clone())
                    }
                };
                Ok(EffectivePenalty { p: *p, q: linalg::dual_exponent(*p), weight })
            }
            PenaltyKind::PredictorNorm => {
                let n = design.w_t.len() as f64;
                let gram = design.z2_t.transpose() * &design.z2_t / n;
                let m = linalg::spd_sqrt(&gram, PREDICTOR_NORM_EIG_FLOOR);
                Ok(EffectivePenalty { p: 2.0, q: 2.0, weight: Some(m) })
            }
        }
    }
}

/// A penalty reduced to concrete ℓp form: Pen(γ) = ‖Mγ‖_p with M = identity
/// when `weight` is `None`.
#[derive(Debug, Clone)]
pub struct EffectivePenalty {
    pub p: f64,
    pub q: f64,
    pub weight: Option<DMatrix<f64>>,
}

impl EffectivePenalty {
    /// Pen(γ) = ‖Mγ‖_p.
    pub fn value(&self, gamma: &DVector<f64>) -> f64 {
        match &self.weight {
            None => linalg::lp_norm(gamma, self.p),
            Some(m) => linalg::lp_norm(&(m * gamma), self.p),
        }
    }

    /// Dual norm: sup { v'γ : Pen(γ) ≤ 1 } = ‖M⁻ᵀ v‖_q.
    pub fn dual(&self, v: &DVector<f64>) -> Result<f64> {
        match &self.weight {
            None => Ok(linalg::lp_norm(v, self.q)),
            Some(m) => {
                let x = m
                    .transpose()
                    .lu()
                    .solve(v)
                    .ok_or(Error::SingularWeightMatrix)?;
                let resid = (m.transpose() * &x - v).norm();
                if resid > 1e-8 * (v.norm() + x.norm()).max(1.0) {
                    return Err(Error::SingularWeightMatrix);
                }
                Ok(linalg::lp_norm(&x, self.q))
            }
        }
    }
}

/// The dataset after projecting the baseline controls out of every column.
#[derive(Debug, Clone)]
pub struct CanonicalDesign {
    /// w residualized on Z1.
    pub w_t: DVector<f64>,
    /// Z2 residualized on Z1 column-by-column.
    pub z2_t: DMatrix<f64>,
    /// Y residualized on Z1.
    pub y_t: DVector<f64>,
    /// Rank of Z1 used in the projection.
    pub proj_rank: usize,
}

impl CanonicalDesign {
    pub fn n(&self) -> usize {
        self.w_t.len()
    }

    pub fn k2(&self) -> usize {
        self.z2_t.ncols()
    }
}

/// Project the baseline controls out of `w`, `Z2`, and `Y`.
///
/// Errors with `RankDeficientBaseline` when Z1 does not have full column
/// rank (singular values below 1e-10 of the largest are treated as zero).
pub fn canonicalize(d: &Dataset) -> Result<CanonicalDesign> {
    let (q, rank) = linalg::orthonormal_basis(&d.z1);
    if rank < d.k1() {
        return Err(Error::RankDeficientBaseline { rank, cols: d.k1() });
    }
    Ok(CanonicalDesign {
        w_t: linalg::project_out_vec(&q, &d.w),
        z2_t: linalg::project_out_mat(&q, &d.z2),
        y_t: linalg::project_out_vec(&q, &d.y),
        proj_rank: rank,
    })
}

/// Pen(γ₂): ‖Mγ₂‖_p for the ℓp kinds, ‖Z₂γ₂/√n‖₂ for the predictor norm.
pub fn penalty_value(
    spec: &PenaltySpec,
    gamma2: &DVector<f64>,
    design: &CanonicalDesign,
) -> Result<f64> {
    if gamma2.len() != design.k2() {
        return Err(Error::DimensionMismatch { expected: design.k2(), got: gamma2.len() });
    }
    match &spec.kind {
        PenaltyKind::PredictorNorm => {
            let n = design.n() as f64;
            Ok((&design.z2_t * gamma2).norm() / n.sqrt())
        }
        PenaltyKind::Lp(_) => Ok(spec.effective(design)?.value(gamma2)),
    }
}

/// Dual norm of the penalty at `v`: sup { v'γ : Pen(γ) ≤ 1 }.
///
/// For an identity weight this is the ℓq norm with 1/p + 1/q = 1; a general
/// weight matrix must be invertible. The predictor norm dualizes through its
/// reduced weighted-ℓ2 form.
pub fn dual_norm(spec: &PenaltySpec, v: &DVector<f64>, design: &CanonicalDesign) -> Result<f64> {
    if v.len() != design.k2() {
        return Err(Error::DimensionMismatch { expected: design.k2(), got: v.len() });
    }
    spec.effective(design)?.dual(v)
}
