//! Stable serialization of reports.
//!
//! JSON output is byte-stable for fixed input: field order is fixed by
//! construction and every float is written with 17 significant digits, so
//! identical runs produce identical bytes. Every top-level document carries
//! `"schema_version": 1`.

use crate::diagnostics::CLowerCi;
use crate::efficiency::EfficiencyReport;
use crate::inference::{InferenceReport, PipelinePair};
use crate::pathsolver::SolutionPath;
use crate::simharness::{CoverageOutput, RateCell};

pub const SCHEMA_VERSION: u32 = 1;

/// A float with 17 significant digits (scientific notation); non-finite
/// values become JSON null.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Minimal ordered JSON object builder.
#[derive(Default)]
pub struct JsonObject {
    parts: Vec<String>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn f64(mut self, key: &str, v: f64) -> Self {
        self.parts.push(format!("\"{}\":{}", escape(key), fmt_f64(v)));
        self
    }

    pub fn u64(mut self, key: &str, v: u64) -> Self {
        self.parts.push(format!("\"{}\":{v}", escape(key)));
        self
    }

    pub fn bool(mut self, key: &str, v: bool) -> Self {
        self.parts.push(format!("\"{}\":{v}", escape(key)));
        self
    }

    pub fn str(mut self, key: &str, v: &str) -> Self {
        self.parts.push(format!("\"{}\":\"{}\"", escape(key), escape(v)));
        self
    }

    /// Insert pre-rendered JSON (nested object or array).
    pub fn raw(mut self, key: &str, v: String) -> Self {
        self.parts.push(format!("\"{}\":{v}", escape(key)));
        self
    }

    pub fn finish(self) -> String {
        format!("{{{}}}", self.parts.join(","))
    }
}

fn inference_fields(r: &InferenceReport) -> JsonObject {
    JsonObject::new()
        .f64("beta_hat", r.beta_hat)
        .f64("maxbias", r.maxbias)
        .f64("sd_homo", r.sd_homo)
        .f64("sd_robust", r.sd_robust)
        .f64("cv", r.cv)
        .f64("ci_lo", r.ci_lo)
        .f64("ci_hi", r.ci_hi)
        .f64("lambda_chosen", r.lambda_chosen)
        .f64("t_chosen", r.t_chosen)
        .str("criterion", &r.criterion.to_string())
        .f64("lind", r.lind)
        .f64("alpha", r.alpha)
}

/// One inference report as a standalone JSON document.
pub fn inference_report_json(r: &InferenceReport) -> String {
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .raw("report", inference_fields(r).finish())
        .finish()
}

/// The MSE/FLCI pair produced by the estimation pipeline.
pub fn pipeline_pair_json(p: &PipelinePair) -> String {
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .raw("mse", inference_fields(&p.mse).finish())
        .raw("flci", inference_fields(&p.flci).finish())
        .finish()
}

pub fn efficiency_report_json(r: &EfficiencyReport) -> String {
    let samples: Vec<String> = r
        .modulus_samples
        .iter()
        .map(|m| {
            JsonObject::new()
                .f64("delta", m.delta)
                .f64("omega", m.omega)
                .f64("omega_prime", m.omega_prime)
                .finish()
        })
        .collect();
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .f64("kappa_flci", r.kappa_flci)
        .f64("kappa_flci_coarse", r.kappa_flci_coarse)
        .f64("kappa_mse_lo", r.kappa_mse_lo)
        .f64("kappa_mse_hi", r.kappa_mse_hi)
        .f64("extension_mass", r.extension_mass)
        .bool("extension_flagged", r.extension_flagged)
        .f64("alpha", r.alpha)
        .raw("modulus", format!("[{}]", samples.join(",")))
        .finish()
}

pub fn c_lower_ci_json(r: &CLowerCi) -> String {
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .f64("c_hat", r.c_hat)
        .f64("lambda_star_alpha", r.lambda_star_alpha)
        .str("mode", r.mode)
        .f64("alpha", r.alpha)
        .finish()
}

pub fn coverage_summary_json(o: &CoverageOutput) -> String {
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .u64("reps", o.records.len() as u64)
        .f64("coverage", o.coverage)
        .f64("mean_length", o.mean_length)
        .f64("mc_se", o.mc_se)
        .finish()
}

pub fn rate_cells_json(cells: &[RateCell]) -> String {
    let rows: Vec<String> = cells
        .iter()
        .map(|c| {
            JsonObject::new()
                .u64("n", c.n as u64)
                .u64("k2", c.k2 as u64)
                .f64("mean_length", c.mean_length)
                .f64("rate_rq", c.rate_rq)
                .finish()
        })
        .collect();
    JsonObject::new()
        .u64("schema_version", SCHEMA_VERSION as u64)
        .raw("cells", format!("[{}]", rows.join(",")))
        .finish()
}

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------

pub fn coverage_records_csv(o: &CoverageOutput) -> String {
    let mut out = String::from("rep,covered,length,beta_hat,maxbias,lambda\n");
    for r in &o.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.rep,
            u8::from(r.covered),
            fmt_f64(r.length),
            fmt_f64(r.beta_hat),
            fmt_f64(r.maxbias),
            fmt_f64(r.lambda)
        ));
    }
    out
}

pub fn rate_cells_csv(cells: &[RateCell]) -> String {
    let mut out = String::from("n,k2,mean_length,rate_rq\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.n,
            c.k2,
            fmt_f64(c.mean_length),
            fmt_f64(c.rate_rq)
        ));
    }
    out
}

pub fn r2_curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("c,r2\n");
    for (c, r2) in curve {
        out.push_str(&format!("{},{}\n", fmt_f64(*c), fmt_f64(*r2)));
    }
    out
}

/// Debug dump of a solution path: λ, t, rss, ‖π‖₁, ‖π‖₂ per point.
pub fn path_csv(path: &SolutionPath) -> String {
    let mut out = String::from("lambda,t,rss,pi_l1,pi_l2\n");
    for p in &path.points {
        let l1: f64 = p.pi_star.iter().map(|x| x.abs()).sum();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.lambda),
            fmt_f64(p.t_lambda),
            fmt_f64(p.rss),
            fmt_f64(l1),
            fmt_f64(p.pi_star.norm())
        ));
    }
    out
}

/// Per-C sensitivity rows (C, estimate, CI, half-length, excluded flag).
pub fn sensitivity_csv(rows: &[(f64, InferenceReport, bool)]) -> String {
    let mut out = String::from("c,beta_hat,maxbias,sd_robust,cv,ci_lo,ci_hi,excludes_null\n");
    for (c, r, excludes) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(*c),
            fmt_f64(r.beta_hat),
            fmt_f64(r.maxbias),
            fmt_f64(r.sd_robust),
            fmt_f64(r.cv),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
            u8::from(*excludes)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_has_17_significant_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(fmt_f64(f64::NAN), "null");
        // round-trips exactly
        let v: f64 = s.parse().unwrap();
        assert_eq!(v, std::f64::consts::PI);
    }

    #[test]
    fn json_object_field_order_is_fixed() {
        let a = JsonObject::new().u64("schema_version", 1).f64("x", 1.0).finish();
        let b = JsonObject::new().u64("schema_version", 1).f64("x", 1.0).finish();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"schema_version\":1,\"x\":"));
    }

    #[test]
    fn strings_are_escaped() {
        let s = JsonObject::new().str("k", "a\"b\\c\nd").finish();
        assert_eq!(s, "{\"k\":\"a\\\"b\\\\c\\nd\"}");
    }
}
