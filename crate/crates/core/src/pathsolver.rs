//! Solution paths for the regularized propensity-score regression
//! `min ‖w − Zπ‖₂²  s.t.  Pen(π) ≤ t`, and the modulus-of-continuity
//! correspondence that links each path point to a two-point testing problem.
//!
//! Three solvers cover the penalty families:
//! * [`ridge_path`] — closed form for weighted ℓ2 penalties,
//! * [`lasso_path`] — exact piecewise-linear homotopy for the ℓ1 penalty,
//! * [`generic_path`] — projected FISTA for any ℓp ball, used mainly as a
//!   cross-check of the exact solvers.
//!
//! Everything is keyed on the constraint level `t`; the Lagrange weight λ is
//! carried along because the ℓ1 homotopy naturally indexes knots by it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CanonicalDesign, EffectivePenalty, PenaltySpec};

/// Relative rss threshold below which the path is considered degenerate
/// (`w` numerically in the span of the restricted controls).
const RSS_REL_TOL: f64 = 1e-14;

/// λ floor as a fraction of λ_max for both path families.
pub const LAMBDA_FLOOR_RATIO: f64 = 1e-6;

/// Number of grid points used by the default ridge path.
pub const RIDGE_GRID_SIZE: usize = 100;

/// One solution of the propensity-score regression with derived quantities.
#[derive(Debug, Clone)]
pub struct PathPoint {
    /// Penalty weight indexing the point (Lagrange multiplier for ℓ1/ℓ2,
    /// constraint level itself for the generic solver).
    pub lambda: f64,
    /// Constraint level: Pen(π*) at the solution when the constraint binds.
    pub t_lambda: f64,
    /// Solution π*.
    pub pi_star: DVector<f64>,
    /// Residual w − Zπ*.
    pub residual: DVector<f64>,
    /// ‖w − Zπ*‖₂².
    pub rss: f64,
}

/// Which solver produced a path; local refinement between grid points keys
/// off this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Closed-form weighted ℓ2 path over a λ grid.
    Ridge,
    /// Exact ℓ1 homotopy: piecewise linear in λ, so interpolation is exact.
    L1,
    /// Constrained first-order solver over a t grid.
    Generic,
}

/// A path of solutions sorted by increasing `t_lambda`, with a flag marking
/// whether the path had to be truncated before reaching its natural end
/// because the residual vanished.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub points: Vec<PathPoint>,
    pub truncated: bool,
    pub kind: PathKind,
}

impl SolutionPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point on the modulus of continuity: δ, ω(δ), and ω'(δ).
#[derive(Debug, Clone, Copy)]
pub struct ModulusPoint {
    pub delta: f64,
    pub omega: f64,
    pub omega_prime: f64,
}

fn check_nondegenerate_w(design: &CanonicalDesign) -> Result<f64> {
    let wss = design.w_t.norm_squared();
    if wss <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    Ok(wss)
}

fn make_point(design: &CanonicalDesign, lambda: f64, t: f64, pi: DVector<f64>) -> PathPoint {
    let residual = &design.w_t - &design.z2_t * &pi;
    let rss = residual.norm_squared();
    PathPoint { lambda, t_lambda: t, pi_star: pi, residual, rss }
}

/// Default log-spaced λ grid for the ridge path: `RIDGE_GRID_SIZE` points on
/// [1e-6 λ_max, λ_max] with λ_max = 1e4 × trace scale of Z'Z relative to M'M.
pub fn default_ridge_lambdas(design: &CanonicalDesign, penalty: &EffectivePenalty) -> Vec<f64> {
    let k2 = design.k2().max(1) as f64;
    let tr_g = design.z2_t.column_iter().map(|c| c.norm_squared()).sum::<f64>();
    let tr_m = match &penalty.weight {
        None => k2,
        Some(m) => m.column_iter().map(|c| c.norm_squared()).sum::<f64>(),
    };
    let scale = if tr_g > 0.0 && tr_m > 0.0 { tr_g / tr_m } else { 1.0 };
    let lambda_max = 1e4 * scale;
    let lambda_min = LAMBDA_FLOOR_RATIO * lambda_max;
    log_grid(lambda_min, lambda_max, RIDGE_GRID_SIZE)
}

/// Log-spaced grid from `lo` to `hi` (ascending).
pub fn log_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && len >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..len)
        .map(|i| (llo + (lhi - llo) * i as f64 / (len - 1) as f64).exp())
        .collect()
}

/// Generalized ridge path: π*_λ = (Z'Z + λ M'M)⁻¹ Z'w for each λ, with
/// t_λ = ‖Mπ*_λ‖₂. Points are returned sorted by decreasing λ (increasing t).
pub fn ridge_path(
    design: &CanonicalDesign,
    penalty: &EffectivePenalty,
    lambdas: &[f64],
) -> Result<SolutionPath> {
    let wss = check_nondegenerate_w(design)?;
    let k2 = design.k2();
    let gram = design.z2_t.transpose() * &design.z2_t;
    let zw = design.z2_t.transpose() * &design.w_t;
    let mm = match &penalty.weight {
        None => DMatrix::identity(k2, k2),
        Some(m) => {
            if m.nrows() != k2 || m.ncols() != k2 {
                return Err(Error::DimensionMismatch { expected: k2, got: m.nrows() });
            }
            m.transpose() * m
        }
    };

    let mut lams: Vec<f64> = lambdas.to_vec();
    lams.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut points = Vec::with_capacity(lams.len());
    let mut truncated = false;
    for &lambda in &lams {
        if !(lambda > 0.0) {
            return Err(Error::InvalidSpec(format!("ridge path needs λ > 0, got {lambda}")));
        }
        let system = &gram + lambda * &mm;
        let pi = linalg::solve_spd(&system, &zw).ok_or_else(|| {
            Error::SingularSystem(format!(
                "Z'Z + λM'M not positive definite at λ = {lambda}; \
                 some direction satisfies Zπ = 0 and Mπ = 0 jointly"
            ))
        })?;
        let t = match &penalty.weight {
            None => pi.norm(),
            Some(m) => (m * &pi).norm(),
        };
        let pp = make_point(design, lambda, t, pi);
        if pp.rss <= RSS_REL_TOL * wss {
            truncated = true;
            break;
        }
        points.push(pp);
    }
    if points.is_empty() {
        return Err(Error::DegeneratePath);
    }
    Ok(SolutionPath { points, truncated, kind: PathKind::Ridge })
}

// ---------------------------------------------------------------------------
// ℓ1 homotopy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct HomotopyKnot {
    lambda: f64,
    pi: DVector<f64>,
}

enum Event {
    Entry { j: usize, sign: f64 },
    Drop { j: usize },
}

/// Incrementally maintained Cholesky factor of the active-set Gram matrix.
/// Entries append a column (forward substitution + new diagonal), drops apply
/// a Givens rank-1 update to the trailing block. The factor is refreshed from
/// scratch periodically to stop error accumulation.
struct CholFactor {
    l: DMatrix<f64>,
    size: usize,
}

impl CholFactor {
    fn from_active(x: &DMatrix<f64>, active: &[usize]) -> Option<Self> {
        let a = active.len();
        let gram = DMatrix::from_fn(a, a, |i, j| x.column(active[i]).dot(&x.column(active[j])));
        gram.cholesky().map(|ch| Self { l: ch.l(), size: a })
    }

    /// Append the variable with Gram column `col` (against the current active
    /// set) and squared norm `diag`. Fails when the new column is numerically
    /// collinear with the active set.
    fn push(&mut self, col: &DVector<f64>, diag: f64) -> bool {
        let a = self.size;
        // forward substitution L v = col (column-oriented)
        let mut v = col.clone_owned();
        let stride = self.l.nrows();
        let ls = self.l.as_slice();
        for j in 0..a {
            let vj = v[j] / ls[j + j * stride];
            v[j] = vj;
            for i in j + 1..a {
                v[i] -= ls[i + j * stride] * vj;
            }
        }
        let d2 = diag - v.norm_squared();
        if d2 <= 1e-8 * diag.max(1e-300) {
            return false;
        }
        self.l.resize_mut(a + 1, a + 1, 0.0);
        for j in 0..a {
            self.l[(a, j)] = v[j];
        }
        self.l[(a, a)] = d2.sqrt();
        self.size = a + 1;
        true
    }

    /// Remove the variable at position `p` in active order.
    fn remove(&mut self, p: usize) {
        let a = self.size;
        let v: Vec<f64> = (p + 1..a).map(|i| self.l[(i, p)]).collect();
        let mut nl = DMatrix::zeros(a - 1, a - 1);
        for i in 0..a - 1 {
            let si = if i < p { i } else { i + 1 };
            for j in 0..=i {
                let sj = if j < p { j } else { j + 1 };
                if sj <= si {
                    nl[(i, j)] = self.l[(si, sj)];
                }
            }
        }
        // rank-1 update of the trailing block with the removed column
        let m = a - 1 - p;
        let mut v = v;
        for kk in 0..m {
            let (row, col) = (p + kk, p + kk);
            let r = (nl[(row, col)].powi(2) + v[kk].powi(2)).sqrt();
            let c = r / nl[(row, col)];
            let s = v[kk] / nl[(row, col)];
            nl[(row, col)] = r;
            for i in kk + 1..m {
                nl[(p + i, col)] = (nl[(p + i, col)] + s * v[i]) / c;
                v[i] = c * v[i] - s * nl[(p + i, col)];
            }
        }
        self.l = nl;
        self.size = a - 1;
    }

    /// Solve (L L') x = b.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let a = self.size;
        let stride = self.l.nrows();
        let ls = self.l.as_slice();
        let mut z = b.clone_owned();
        // forward: walk down each column (contiguous in column-major layout)
        for j in 0..a {
            let zj = z[j] / ls[j + j * stride];
            z[j] = zj;
            for i in j + 1..a {
                z[i] -= ls[i + j * stride] * zj;
            }
        }
        // backward with L': column i of L is the row of L' we need
        for i in (0..a).rev() {
            let mut s = z[i];
            for j in i + 1..a {
                s -= ls[j + i * stride] * z[j];
            }
            z[i] = s / ls[i + i * stride];
        }
        z
    }
}

/// Exact LARS-style homotopy for `min ‖y − Xπ‖₂² + λ‖π‖₁`, producing the
/// knots of the piecewise-linear solution path from λ_max (π = 0) down to
/// `floor_ratio · λ_max`. Ties in the entering correlation are broken by the
/// lowest column index.
///
/// Worst KKT violation of a candidate solution at penalty λ, measured on the
/// raw (2X'r) correlation scale.
fn lasso_kkt_gap_raw(y: &DVector<f64>, x: &DMatrix<f64>, pi: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * pi;
    let mut corr = x.tr_mul(&r);
    corr *= 2.0;
    let mut gap = 0.0_f64;
    for j in 0..x.ncols() {
        if pi[j] != 0.0 {
            gap = gap.max((corr[j].abs() - lambda).abs());
            if corr[j].signum() != pi[j].signum() {
                gap = gap.max(corr[j].abs() + lambda);
            }
        } else {
            gap = gap.max(corr[j].abs() - lambda);
        }
    }
    gap
}

/// Stationarity finish on a fixed support: solve
/// X_S'X_S π_S = X_S'y − (λ/2)s_S exactly (with iterative refinement) and
/// accept the result when the full KKT gap is within tolerance.
fn active_set_finish(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
    pi: &DVector<f64>,
    gap_tol: f64,
) -> Option<DVector<f64>> {
    let k = x.ncols();
    let support: Vec<usize> = (0..k).filter(|&j| pi[j] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let factor = CholFactor::from_active(x, &support)?;
    let rhs = DVector::from_fn(support.len(), |jj, _| {
        x.column(support[jj]).dot(y) - 0.5 * lambda * pi[support[jj]].signum()
    });
    let mut sol = factor.solve(&rhs);
    for _ in 0..2 {
        // refinement against the true normal equations
        let mut xv = DVector::zeros(y.len());
        for (jj, &j) in support.iter().enumerate() {
            xv.axpy(sol[jj], &x.column(j), 1.0);
        }
        let mut resid = rhs.clone();
        for (jj, &j) in support.iter().enumerate() {
            resid[jj] -= x.column(j).dot(&xv);
        }
        sol += factor.solve(&resid);
    }
    let mut out = DVector::zeros(k);
    for (jj, &j) in support.iter().enumerate() {
        out[j] = sol[jj];
    }
    if lasso_kkt_gap_raw(y, x, &out, lambda) <= gap_tol {
        Some(out)
    } else {
        None
    }
}

/// Warm-started coordinate descent with an exact active-set finish, used to
/// certify/repair knots in degenerate stretches of the path (non-unique
/// solutions once the active set reaches the design rank). CD identifies the
/// support; the linear solve nails the values.
fn cd_polish(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
    mut pi: DVector<f64>,
    gap_tol: f64,
) -> Result<DVector<f64>> {
    let k = x.ncols();
    let col_ss: Vec<f64> = (0..k).map(|j| x.column(j).norm_squared()).collect();
    let mut r = y - x * &pi;
    let mut last_gap = f64::INFINITY;
    for sweep in 0..1_000 {
        let mut max_change = 0.0_f64;
        for j in 0..k {
            if col_ss[j] == 0.0 {
                continue;
            }
            let old = pi[j];
            let rho: f64 = x.column(j).dot(&r) + col_ss[j] * old;
            let new = rho.signum() * (rho.abs() - lambda / 2.0).max(0.0) / col_ss[j];
            if new != old {
                r.axpy(old - new, &x.column(j), 1.0);
                pi[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        let stalled = max_change < 1e-14 * pi.amax().max(1.0);
        if stalled || sweep % 16 == 15 {
            last_gap = lasso_kkt_gap_raw(y, x, &pi, lambda);
            if last_gap <= gap_tol {
                return Ok(pi);
            }
            if let Some(exact) = active_set_finish(y, x, lambda, &pi, gap_tol) {
                return Ok(exact);
            }
            if stalled {
                break;
            }
        }
    }
    Err(Error::ConvergenceFailure(format!(
        "knot repair stalled at KKT gap {last_gap:.3e} (tolerance {gap_tol:.3e}) at λ = {lambda:.6e}"
    )))
}

/// Returns the knots in decreasing λ together with a truncation flag set when
/// the residual vanished before the floor was reached.
fn lasso_homotopy(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    floor_ratio: f64,
) -> Result<(Vec<HomotopyKnot>, bool)> {
    let n = y.len();
    let k = x.ncols();
    if k == 0 {
        return Err(Error::InvalidSpec("lasso path requires at least one column".into()));
    }
    let yss = y.norm_squared();

    let mut corr0 = x.tr_mul(y);
    corr0 *= 2.0;
    let lambda_max = corr0.amax();
    if lambda_max <= 0.0 {
        // w orthogonal to every restricted column: constant null path
        return Ok((vec![HomotopyKnot { lambda: 1.0, pi: DVector::zeros(k) }], false));
    }
    let lambda_floor = floor_ratio * lambda_max;

    let mut knots = vec![HomotopyKnot { lambda: lambda_max, pi: DVector::zeros(k) }];
    let first = (0..k)
        .find(|&j| corr0[j].abs() >= lambda_max * (1.0 - 1e-12))
        .expect("max correlation exists");
    // active set kept in insertion order to match the factor's column order
    let mut active: Vec<usize> = vec![first];
    let mut signs: Vec<f64> = vec![corr0[first].signum()];
    let mut is_active = vec![false; k];
    is_active[first] = true;
    let mut factor = CholFactor::from_active(x, &active)
        .ok_or_else(|| Error::ConvergenceFailure("zero-norm active column".into()))?;
    let mut lambda = lambda_max;
    let mut truncated = false;
    let mut events_since_refresh = 0usize;

    let max_events = 50 * n.min(k) + 1000;
    for _ in 0..max_events {
        if events_since_refresh >= 16 {
            factor = CholFactor::from_active(x, &active).ok_or_else(|| {
                Error::ConvergenceFailure("collinear active set in homotopy".into())
            })?;
            events_since_refresh = 0;
        }
        let a = active.len();
        // one step of iterative refinement keeps the solves accurate even
        // when the active-set Gram is close to rank deficient
        let refine = |sol: &mut DVector<f64>, rhs: &DVector<f64>, factor: &CholFactor| {
            let mut xv = DVector::zeros(n);
            for (jj, &j) in active.iter().enumerate() {
                xv.axpy(sol[jj], &x.column(j), 1.0);
            }
            let mut resid = rhs.clone();
            for (jj, &j) in active.iter().enumerate() {
                resid[jj] -= x.column(j).dot(&xv);
            }
            let corr = factor.solve(&resid);
            *sol += corr;
        };
        let s_vec = DVector::from_vec(signs.clone());
        let xay = DVector::from_fn(a, |jj, _| x.column(active[jj]).dot(y));
        let mut pi_ls = factor.solve(&xay);
        refine(&mut pi_ls, &xay, &factor);
        let mut dir = factor.solve(&s_vec);
        refine(&mut dir, &s_vec, &factor);
        let (pi_ls, dir) = (pi_ls, dir);
        // π_A(λ') = pi_ls − (λ'/2) dir ; residual(λ') = r_ls + (λ'/2) X_A dir
        let mut r_ls = y.clone();
        let mut xdir = DVector::zeros(n);
        for (jj, &j) in active.iter().enumerate() {
            r_ls.axpy(-pi_ls[jj], &x.column(j), 1.0);
            xdir.axpy(dir[jj], &x.column(j), 1.0);
        }

        let pi_at = |lam: f64| -> DVector<f64> {
            let mut pi = DVector::zeros(k);
            for (jj, &j) in active.iter().enumerate() {
                pi[j] = pi_ls[jj] - 0.5 * lam * dir[jj];
            }
            pi
        };

        // candidate events strictly below the current λ
        let guard = lambda * (1.0 - 1e-12);
        let mut best_lambda = f64::NEG_INFINITY;
        let mut best_event: Option<Event> = None;
        let mut consider = |lam: f64, ev: Event| {
            if lam > 0.0 && lam < guard {
                let better = lam > best_lambda * (1.0 + 1e-12);
                let tie = (lam - best_lambda).abs() <= 1e-12 * lambda;
                let prefer = match (&best_event, &ev) {
                    (Some(Event::Entry { j: bj, .. }), Event::Drop { j }) => j <= bj,
                    (Some(Event::Drop { j: bj }), Event::Drop { j })
                    | (Some(Event::Entry { j: bj, .. }), Event::Entry { j, .. }) => j < bj,
                    (Some(Event::Drop { .. }), Event::Entry { .. }) => false,
                    (None, _) => true,
                };
                if better || (tie && prefer) {
                    best_lambda = lam;
                    best_event = Some(ev);
                }
            }
        };

        // entries: c_j(λ') = α_j + λ' β_j hits ±λ'
        let mut alpha = x.tr_mul(&r_ls);
        alpha *= 2.0;
        let beta = x.tr_mul(&xdir);
        for j in 0..k {
            if is_active[j] {
                continue;
            }
            for sign in [1.0_f64, -1.0] {
                let denom = sign - beta[j];
                if denom.abs() > 1e-14 {
                    let lam = alpha[j] / denom;
                    consider(lam, Event::Entry { j, sign });
                }
            }
        }
        // drops: π_j(λ') = 0
        for (jj, &j) in active.iter().enumerate() {
            if dir[jj].abs() > 1e-14 {
                let lam = 2.0 * pi_ls[jj] / dir[jj];
                consider(lam, Event::Drop { j });
            }
        }

        let mut next_lambda = match best_event {
            Some(_) if best_lambda > lambda_floor => best_lambda,
            _ => lambda_floor,
        };
        // sign-consistency safety net: with near-coincident events a
        // coefficient can cross zero inside the proposed segment without its
        // drop being selected; force the drop at the crossing instead
        let pi_scale = pi_ls.amax().max(1e-300);
        let mut override_drop: Option<(f64, usize)> = None;
        for (jj, &j) in active.iter().enumerate() {
            let pi_end = pi_ls[jj] - 0.5 * next_lambda * dir[jj];
            if signs[jj] * pi_end < -1e-13 * pi_scale && dir[jj].abs() > 1e-300 {
                let crossing = (2.0 * pi_ls[jj] / dir[jj]).min(lambda);
                if crossing >= next_lambda {
                    let better = override_drop.map_or(true, |(lc, _)| crossing > lc);
                    if better {
                        override_drop = Some((crossing, j));
                    }
                }
            }
        }
        if let Some((crossing, j)) = override_drop {
            next_lambda = crossing.max(lambda_floor);
            best_event = Some(Event::Drop { j });
        }
        let mut pi_next = pi_at(next_lambda);
        // a drop event is defined by the coefficient crossing zero: snap it
        // so the knot satisfies complementary slackness exactly
        if let Some(Event::Drop { j }) = best_event {
            if next_lambda > lambda_floor {
                pi_next[j] = 0.0;
            }
        }
        let kkt_tol = 1e-10 * lambda_max;
        let rss_next = (&r_ls + 0.5 * next_lambda * &xdir).norm_squared();
        if rss_next <= RSS_REL_TOL * yss {
            // truncate at the last λ where the residual is still safely
            // nonzero: rss(λ') = ‖r̂‖² + (λ'²/4)‖X_A d‖²
            let base = r_ls.norm_squared();
            let target = 4.0 * RSS_REL_TOL * yss;
            let slope = xdir.norm_squared();
            if base < target && slope > 0.0 {
                let lam_trunc = 2.0 * ((target - base) / slope).sqrt();
                if lam_trunc > next_lambda && lam_trunc < lambda {
                    let mut pi_trunc = pi_at(lam_trunc);
                    if lasso_kkt_gap_raw(y, x, &pi_trunc, lam_trunc) > kkt_tol {
                        pi_trunc = cd_polish(y, x, lam_trunc, pi_trunc, 0.5 * kkt_tol)?;
                    }
                    knots.push(HomotopyKnot { lambda: lam_trunc, pi: pi_trunc });
                }
            }
            truncated = true;
            break;
        }
        // self-check: in degenerate stretches (rank-deficient active sets)
        // the event algebra can miss coincident events; repair the knot by
        // coordinate descent and restart the state from the repaired point
        let mut repaired = false;
        if lasso_kkt_gap_raw(y, x, &pi_next, next_lambda) > kkt_tol {
            match cd_polish(y, x, next_lambda, pi_next, 0.5 * kkt_tol) {
                Ok(fixed) => {
                    pi_next = fixed;
                    repaired = true;
                }
                // the solution set has become numerically non-unique (active
                // set at the design rank): end at the last certified knot
                Err(_) => return Ok((knots, truncated)),
            }
        }
        knots.push(HomotopyKnot { lambda: next_lambda, pi: pi_next.clone() });
        if next_lambda <= lambda_floor {
            return Ok((knots, truncated));
        }
        if repaired {
            // the first repair marks the non-unique stretch where the active
            // set has hit the design rank; beyond it the events only
            // reshuffle π among equivalent solutions, so the path ends here
            return Ok((knots, truncated));
        }
        lambda = next_lambda;
        events_since_refresh += 1;
        match best_event.expect("event exists when above floor") {
            Event::Entry { j, sign } => {
                let col = DVector::from_fn(active.len(), |jj, _| {
                    x.column(active[jj]).dot(&x.column(j))
                });
                let diag = x.column(j).norm_squared();
                if !factor.push(&col, diag) {
                    // the entering column is numerically collinear with the
                    // active set: the path has reached the design rank and
                    // further knots are not unique; stop at the current knot
                    return Ok((knots, truncated));
                }
                active.push(j);
                signs.push(sign);
                is_active[j] = true;
            }
            Event::Drop { j } => {
                let pos = active.iter().position(|&aj| aj == j).expect("dropped var active");
                factor.remove(pos);
                active.remove(pos);
                signs.remove(pos);
                is_active[j] = false;
            }
        }
        if active.is_empty() {
            // can only happen by numerical accident; stop cleanly
            break;
        }
    }
    if truncated {
        Ok((knots, true))
    } else {
        Err(Error::ConvergenceFailure("homotopy exceeded the event budget".into()))
    }
}

/// ℓ1 solution path of the propensity-score regression: homotopy knots for
/// `min ‖w − Zπ‖₂² + λ‖π‖₁` from λ_max down to `LAMBDA_FLOOR_RATIO · λ_max`,
/// returned sorted by increasing t = ‖π‖₁.
pub fn lasso_path(design: &CanonicalDesign) -> Result<SolutionPath> {
    check_nondegenerate_w(design)?;
    if design.k2() == 0 {
        return Err(Error::InvalidSpec("lasso path requires k2 >= 1".into()));
    }
    let (knots, truncated) = lasso_homotopy(&design.w_t, &design.z2_t, LAMBDA_FLOOR_RATIO)?;
    // knots are generated from λ_max down, which is already increasing in t
    let points: Vec<PathPoint> = knots
        .into_iter()
        .map(|kn| {
            let t = linalg::lp_norm(&kn.pi, 1.0);
            make_point(design, kn.lambda, t, kn.pi)
        })
        .collect();
    Ok(SolutionPath { points, truncated, kind: PathKind::L1 })
}

/// Homotopy knots (λ, π) of `min ‖y − Xπ‖₂² + λ‖π‖₁` for an arbitrary
/// response/design pair, from λ_max down to `floor_ratio · λ_max`, in
/// decreasing λ. The boolean flags truncation at vanishing rss.
pub fn lasso_knots(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    floor_ratio: f64,
) -> Result<(Vec<(f64, DVector<f64>)>, bool)> {
    let (knots, truncated) = lasso_homotopy(y, x, floor_ratio)?;
    Ok((knots.into_iter().map(|k| (k.lambda, k.pi)).collect(), truncated))
}

/// Lasso solution of `min ‖y − Xπ‖₂² + λ‖π‖₁` at one specific λ, by running
/// the homotopy down to λ and interpolating between the bracketing knots.
pub fn lasso_solution_at_lambda(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidSpec(format!("lasso solution needs λ > 0, got {lambda}")));
    }
    let lambda_max = 2.0 * x.tr_mul(y).amax();
    if lambda >= lambda_max {
        return Ok(DVector::zeros(x.ncols()));
    }
    let floor_ratio = (0.5 * lambda / lambda_max).min(LAMBDA_FLOOR_RATIO);
    let (knots, _) = lasso_homotopy(y, x, floor_ratio)?;
    // knots run from λ_max downward; find the bracketing pair
    for win in knots.windows(2) {
        let (hi, lo) = (win[0].lambda, win[1].lambda);
        if lambda <= hi && lambda >= lo {
            let s = if hi - lo > 0.0 { (hi - lambda) / (hi - lo) } else { 0.0 };
            return Ok((1.0 - s) * &win[0].pi + s * &win[1].pi);
        }
    }
    // truncated path (rss vanished): fall back to the deepest knot
    Ok(knots.last().expect("nonempty homotopy").pi.clone())
}

/// Solve `min ‖y − Xθ‖₂² s.t. Pen(θ) ≤ t` for an arbitrary response/design
/// pair with a materialized penalty (projected first-order method).
pub fn constrained_fit(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    penalty: &EffectivePenalty,
    t: f64,
) -> Result<DVector<f64>> {
    let (x_eff, minv) = match &penalty.weight {
        None => (x.clone(), None),
        Some(m) => {
            let inv = m.clone().lu().try_inverse().ok_or(Error::SingularWeightMatrix)?;
            (x * &inv, Some(inv))
        }
    };
    let lipschitz = 2.0 * linalg::spectral_norm(&x_eff).powi(2).max(1e-300) * 1.01;
    let (u, _gap) = constrained_solve(&x_eff, y, penalty.p, penalty.q, t, lipschitz, 1e-9, 200_000)?;
    Ok(match &minv {
        None => u,
        Some(inv) => inv * u,
    })
}

/// Maximal KKT violation of an ℓ1 path point: the active-set equality gap
/// `max_j | |2 z_j'r| − λ |` over j with π_j ≠ 0, and the inactive bound gap
/// `max_j (|2 z_j'r| − λ)₊` over j with π_j = 0.
pub fn lasso_kkt_gaps(design: &CanonicalDesign, point: &PathPoint) -> (f64, f64) {
    let mut corr = design.z2_t.tr_mul(&point.residual);
    corr *= 2.0;
    let mut active_gap = 0.0_f64;
    let mut inactive_gap = 0.0_f64;
    for j in 0..design.k2() {
        if point.pi_star[j] != 0.0 {
            active_gap = active_gap.max((corr[j].abs() - point.lambda).abs());
            // sign agreement is part of stationarity
            if corr[j].signum() != point.pi_star[j].signum() {
                active_gap = active_gap.max(corr[j].abs() + point.lambda);
            }
        } else {
            inactive_gap = inactive_gap.max(corr[j].abs() - point.lambda);
        }
    }
    (active_gap, inactive_gap.max(0.0))
}

/// Exact solution on the segment between two adjacent ℓ1 knots (the homotopy
/// is piecewise linear in λ, so the interpolant is itself the lasso solution
/// at the interpolated λ). Also valid for ridge/generic neighbours as an
/// approximation used by local refinement.
pub fn interpolate_points(p0: &PathPoint, p1: &PathPoint, s: f64, exact_l1: bool) -> PathPoint {
    let s = s.clamp(0.0, 1.0);
    let pi = (1.0 - s) * &p0.pi_star + s * &p1.pi_star;
    let lambda = (1.0 - s) * p0.lambda + s * p1.lambda;
    let residual = (1.0 - s) * &p0.residual + s * &p1.residual;
    let rss = residual.norm_squared();
    let t = if exact_l1 {
        linalg::lp_norm(&pi, 1.0)
    } else {
        (1.0 - s) * p0.t_lambda + s * p1.t_lambda
    };
    PathPoint { lambda, t_lambda: t, pi_star: pi, residual, rss }
}

/// Insert `per_interval` interpolated solutions between consecutive ℓ1 knots.
pub fn densify_l1(path: &SolutionPath, per_interval: usize) -> SolutionPath {
    let mut points = Vec::new();
    for win in path.points.windows(2) {
        points.push(win[0].clone());
        for i in 1..=per_interval {
            let s = i as f64 / (per_interval + 1) as f64;
            points.push(interpolate_points(&win[0], &win[1], s, true));
        }
    }
    if let Some(last) = path.points.last() {
        points.push(last.clone());
    }
    SolutionPath { points, truncated: path.truncated, kind: path.kind }
}

// ---------------------------------------------------------------------------
// Generic constrained solver
// ---------------------------------------------------------------------------

/// Project `u` onto the ℓp ball of radius `t` (p ≥ 1).
fn project_lp_ball(u: &DVector<f64>, p: f64, t: f64) -> DVector<f64> {
    if t <= 0.0 {
        return DVector::zeros(u.len());
    }
    if linalg::lp_norm(u, p) <= t {
        return u.clone();
    }
    if (p - 2.0).abs() < 1e-14 {
        return u * (t / u.norm());
    }
    if (p - 1.0).abs() < 1e-14 {
        // soft threshold; bisection on the dual scalar θ
        let mut lo = 0.0_f64;
        let mut hi = u.amax();
        for _ in 0..100 {
            let th = 0.5 * (lo + hi);
            let s: f64 = u.iter().map(|&v| (v.abs() - th).max(0.0)).sum();
            if s > t {
                lo = th;
            } else {
                hi = th;
            }
        }
        let th = 0.5 * (lo + hi);
        return u.map(|v| v.signum() * (v.abs() - th).max(0.0));
    }
    // general p > 1: KKT system ξ + νp ξ^{p-1} = |u_i| with outer bisection on ν
    let xi_of = |nu: f64| -> DVector<f64> {
        u.map(|v| {
            let target = v.abs();
            if target == 0.0 {
                return 0.0;
            }
            let (mut lo, mut hi) = (0.0_f64, target);
            for _ in 0..80 {
                let xi = 0.5 * (lo + hi);
                if xi + nu * p * xi.powf(p - 1.0) < target {
                    lo = xi;
                } else {
                    hi = xi;
                }
            }
            0.5 * (lo + hi) * v.signum()
        })
    };
    let mut nu_hi = 1.0;
    while linalg::lp_norm(&xi_of(nu_hi), p) > t {
        nu_hi *= 2.0;
        if nu_hi > 1e18 {
            break;
        }
    }
    let mut lo = 0.0_f64;
    let mut hi = nu_hi;
    for _ in 0..80 {
        let nu = 0.5 * (lo + hi);
        if linalg::lp_norm(&xi_of(nu), p) > t {
            lo = nu;
        } else {
            hi = nu;
        }
    }
    xi_of(0.5 * (lo + hi))
}

/// Solve `min ‖w − Zπ‖₂² s.t. Pen(π) ≤ t` for one `t` by projected FISTA on
/// the substituted variable u = Mπ. Returns (π, Frank–Wolfe gap).
fn constrained_solve(
    z_eff: &DMatrix<f64>,
    w: &DVector<f64>,
    p: f64,
    q: f64,
    t: f64,
    lipschitz: f64,
    tol_rel: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, f64)> {
    let k = z_eff.ncols();
    if t == 0.0 {
        return Ok((DVector::zeros(k), 0.0));
    }
    let step = 1.0 / lipschitz;
    let mut u = DVector::zeros(k);
    let mut v = u.clone();
    let mut theta = 1.0_f64;
    let mut f_prev = f64::INFINITY;
    let mut gap = f64::INFINITY;
    for it in 0..max_iter {
        let mut grad_v = z_eff.tr_mul(&(w - z_eff * &v));
        grad_v *= -2.0;
        let u_next = project_lp_ball(&(&v - step * &grad_v), p, t);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let mut v_next = &u_next + ((theta - 1.0) / theta_next) * (&u_next - &u);
        let r = w - z_eff * &u_next;
        let f = r.norm_squared();
        if f > f_prev {
            v_next = u_next.clone(); // adaptive restart
            theta = 1.0;
        } else {
            theta = theta_next;
        }
        f_prev = f;
        u = u_next;
        v = v_next;
        if it % 10 == 0 || it + 1 == max_iter {
            let mut grad = z_eff.tr_mul(&r);
            grad *= -2.0;
            gap = grad.dot(&u) + t * linalg::lp_norm(&grad, q);
            if gap <= tol_rel * f.max(1e-300) {
                return Ok((u, gap));
            }
        }
    }
    Err(Error::ConvergenceFailure(format!(
        "projected gradient gap {gap:.3e} above tolerance after {max_iter} iterations"
    )))
}

/// Constrained solution path over a grid of penalty levels `t`, solved by a
/// projected first-order method; `t_lambda` equals the requested `t` exactly
/// and `lambda` mirrors it.
pub fn generic_path(
    design: &CanonicalDesign,
    spec: &PenaltySpec,
    t_grid: &[f64],
) -> Result<SolutionPath> {
    let wss = check_nondegenerate_w(design)?;
    let eff = spec.effective(design)?;

    // substitute u = Mπ so the constraint is a plain ℓp ball
    let (z_eff, minv) = match &eff.weight {
        None => (design.z2_t.clone(), None),
        Some(m) => {
            let inv = m
                .clone()
                .lu()
                .try_inverse()
                .ok_or(Error::SingularWeightMatrix)?;
            (&design.z2_t * &inv, Some(inv))
        }
    };
    let lipschitz = 2.0 * linalg::spectral_norm(&z_eff).powi(2).max(1e-300) * 1.01;

    let mut grid: Vec<f64> = t_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut points = Vec::with_capacity(grid.len());
    let mut truncated = false;
    for &t in &grid {
        if t < 0.0 {
            return Err(Error::InvalidSpec(format!("constraint level must be >= 0, got {t}")));
        }
        let (u, _gap) = constrained_solve(&z_eff, &design.w_t, eff.p, eff.q, t, lipschitz, 1e-9, 200_000)?;
        let pi = match &minv {
            None => u,
            Some(inv) => inv * u,
        };
        let pp = make_point(design, t.max(f64::MIN_POSITIVE), t, pi);
        if pp.rss <= RSS_REL_TOL * wss {
            truncated = true;
            break;
        }
        points.push(pp);
    }
    if points.is_empty() {
        return Err(Error::DegeneratePath);
    }
    // the optimal value of a constrained minimum is nonincreasing in t
    for win in points.windows(2) {
        if win[1].rss > win[0].rss * (1.0 + 1e-7) + 1e-12 {
            return Err(Error::ConvergenceFailure(format!(
                "rss not monotone along t grid ({} -> {})",
                win[0].rss, win[1].rss
            )));
        }
    }
    Ok(SolutionPath { points, truncated, kind: PathKind::Generic })
}

/// Map a path point to its modulus point: δ = (2C/t)‖w − Zπ*‖₂,
/// ω(δ) = 2C/t, ω'(δ) = δ / [w'(w − Zπ*) ω(δ)].
pub fn modulus_from_path(
    pp: &PathPoint,
    c: f64,
    design: &CanonicalDesign,
) -> Result<ModulusPoint> {
    if !(c > 0.0) {
        return Err(Error::InvalidSpec(format!("regularity parameter C must be > 0, got {c}")));
    }
    if pp.t_lambda <= 0.0 {
        return Err(Error::ZeroPenaltySolution);
    }
    if pp.rss <= 0.0 {
        return Err(Error::DegeneratePath);
    }
    let omega = 2.0 * c / pp.t_lambda;
    let delta = omega * pp.rss.sqrt();
    let wr = design.w_t.dot(&pp.residual);
    if wr <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(ModulusPoint { delta, omega, omega_prime: delta / (wr * omega) })
}

/// Sample the modulus curve along a path, sorted by increasing δ. Points with
/// t = 0 are skipped (the modulus is undefined there).
pub fn modulus_curve(
    path: &SolutionPath,
    c: f64,
    design: &CanonicalDesign,
) -> Result<Vec<ModulusPoint>> {
    let mut pts = Vec::with_capacity(path.len());
    for pp in &path.points {
        match modulus_from_path(pp, c, design) {
            Ok(mp) => pts.push(mp),
            Err(Error::ZeroPenaltySolution) => continue,
            Err(e) => return Err(e),
        }
    }
    if pts.is_empty() {
        return Err(Error::InsufficientModulusRange("no path point with Pen(π*) > 0".into()));
    }
    pts.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap());
    pts.dedup_by(|a, b| (a.delta - b.delta).abs() <= 1e-12 * b.delta.max(1e-300));
    Ok(pts)
}
