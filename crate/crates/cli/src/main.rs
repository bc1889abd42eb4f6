//! `biasaware` — bias-aware estimation and confidence intervals for a single
//! regression coefficient under a bound Pen(γ) ≤ C on the restricted control
//! coefficients.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, schema, unreadable
//! data), 3 numerical failure. With `--format json`, errors are also written
//! to stderr as a machine-readable JSON object.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use biasaware::diagnostics::{self, LowerCiMode};
use biasaware::efficiency;
use biasaware::inference::{
    baseline_pipeline, pipeline_reports, prepare_pipeline, InferenceReport, InitResiduals,
};
use biasaware::model::{load_dataset, Dataset, PenaltySpec, Schema};
use biasaware::pathsolver::{densify_l1, modulus_curve, PathKind};
use biasaware::report;
use biasaware::simharness::{
    coverage_experiment, generate, parse_experiment, rate_experiment, ExperimentSpec,
};
use biasaware::Error;

#[derive(Parser)]
#[command(
    name = "biasaware",
    version,
    about = "Bias-aware estimation and confidence intervals under a bound on control coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PenaltyArg {
    /// ℓ1 norm of the restricted coefficients
    L1,
    /// ℓ2 norm (optionally weighted via --weight-matrix)
    L2,
    /// predictor norm ‖Z₂γ₂/√n‖₂
    PredictorL2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Mse,
    Flci,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LowerCiModeArg {
    /// Monte Carlo quantile under known σ² (requires --sigma)
    KnownSigma,
    /// data-driven moderate-deviations critical value (ℓ1 only)
    ModerateDeviations,
}

/// Flags shared by the data-reading subcommands.
#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// outcome column name
    #[arg(long)]
    y: String,
    /// treatment column name
    #[arg(long)]
    w: String,
    /// comma-separated unrestricted baseline control columns
    #[arg(long, default_value = "")]
    baseline: String,
    /// comma-separated restricted control columns, or '*' for all remaining
    #[arg(long, default_value = "*")]
    restricted: String,
    /// penalty family
    #[arg(long, value_enum, default_value = "l1")]
    penalty: PenaltyArg,
    /// optional k2×k2 weight matrix CSV (no header; ℓ2 penalty only)
    #[arg(long)]
    weight_matrix: Option<PathBuf>,
    /// known error variance σ² (enables idealized mode)
    #[arg(long)]
    sigma: Option<f64>,
    /// two-sided miscoverage level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// cap on the maximal Lindeberg weight (suggested: 10/n)
    #[arg(long)]
    lind_cap: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Run the estimation pipeline at one regularity budget C
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        /// regularity budget C in Pen(γ) ≤ C
        #[arg(long, short = 'C')]
        c: f64,
        /// selection criterion highlighted in text output
        #[arg(long, value_enum, default_value = "flci")]
        criterion: CriterionArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep C over a grid, reporting per-C intervals and the breakdown value
    Sensitivity {
        #[command(flatten)]
        data: DataArgs,
        /// C grid as start:stop:step (inclusive)
        #[arg(long)]
        c_grid: String,
        /// null value whose exclusion defines the breakdown C*
        #[arg(long, default_value_t = 0.0)]
        null: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Lower confidence bound for the regularity parameter C
    LowerC {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "moderate-deviations")]
        mode: LowerCiModeArg,
        /// Monte Carlo draws for the known-σ mode
        #[arg(long, default_value_t = diagnostics::KNOWN_SIGMA_MC_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 20_240_501)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Finite-sample efficiency constants κ* at a budget C
    Efficiency {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, short = 'C')]
        c: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// R²(C) curve from constrained outcome regressions
    R2curve {
        #[command(flatten)]
        data: DataArgs,
        /// C grid as start:stop:step (inclusive)
        #[arg(long)]
        c_grid: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a Monte Carlo experiment from a key=value config file
    Simulate {
        /// plain-text config (see README for keys)
        #[arg(long)]
        config: PathBuf,
        /// write the generated dataset as CSV and exit (no experiment)
        #[arg(long)]
        emit_data: Option<PathBuf>,
        /// output prefix; writes <prefix>.summary.json and, for coverage,
        /// <prefix>.records.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let format = command_format(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = error_exit_code(&err);
            if format == Some(FormatArg::Json) {
                let doc = report::JsonObject::new()
                    .u64("schema_version", report::SCHEMA_VERSION as u64)
                    .raw(
                        "error",
                        report::JsonObject::new()
                            .str("kind", error_kind(&err))
                            .str("message", &err.to_string())
                            .finish(),
                    )
                    .finish();
                eprintln!("{doc}");
            } else {
                eprintln!("error: {err}");
            }
            ExitCode::from(code)
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("BIASAWARE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn command_format(cmd: &Command) -> Option<FormatArg> {
    match cmd {
        Command::Estimate { output, .. }
        | Command::Sensitivity { output, .. }
        | Command::LowerC { output, .. }
        | Command::Efficiency { output, .. }
        | Command::R2curve { output, .. } => Some(output.format),
        Command::Simulate { .. } => Some(FormatArg::Json),
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::File(_) => "file",
        Error::Csv(_) => "csv",
        Error::Schema(_) => "schema",
        Error::NonFiniteValue { .. } => "non_finite_value",
        Error::RankDeficientBaseline { .. } => "rank_deficient_baseline",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::SingularWeightMatrix => "singular_weight_matrix",
        Error::SingularSystem(_) => "singular_system",
        Error::DegeneratePath => "degenerate_path",
        Error::ConvergenceFailure(_) => "convergence_failure",
        Error::ZeroPenaltySolution => "zero_penalty_solution",
        Error::ZeroDenominator => "zero_denominator",
        Error::CollinearDesign(_) => "collinear_design",
        Error::NonpositiveSd(_) => "nonpositive_sd",
        Error::EmptyFeasibleSet => "empty_feasible_set",
        Error::InsufficientModulusRange(_) => "insufficient_modulus_range",
        Error::MissingSigma => "missing_sigma",
        Error::MissingResiduals => "missing_residuals",
        Error::InvalidSpec(_) => "invalid_spec",
    }
}

/// 2 for validation problems, 3 for numerical failures.
fn error_exit_code(err: &Error) -> u8 {
    match err {
        Error::File(_)
        | Error::Csv(_)
        | Error::Schema(_)
        | Error::NonFiniteValue { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidSpec(_)
        | Error::MissingSigma
        | Error::MissingResiduals => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> biasaware::Result<()> {
    match cli.command {
        Command::Estimate { data, c, criterion, output } => cmd_estimate(&data, c, criterion, &output),
        Command::Sensitivity { data, c_grid, null, output } => {
            cmd_sensitivity(&data, &c_grid, null, &output)
        }
        Command::LowerC { data, mode, draws, seed, output } => {
            cmd_lower_c(&data, mode, draws, seed, &output)
        }
        Command::Efficiency { data, c, output } => cmd_efficiency(&data, c, &output),
        Command::R2curve { data, c_grid, output } => cmd_r2curve(&data, &c_grid, &output),
        Command::Simulate { config, emit_data, out } => cmd_simulate(&config, emit_data, out),
    }
}

fn split_columns(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Build the dataset and penalty from the common flags. `--restricted '*'`
/// expands to every header column not otherwise assigned.
fn read_inputs(args: &DataArgs) -> biasaware::Result<(Dataset, PenaltySpec)> {
    let baseline = split_columns(&args.baseline);
    let restricted = if args.restricted.trim() == "*" {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&args.data)?;
        let headers = reader.headers()?.clone();
        headers
            .iter()
            .filter(|h| *h != args.y && *h != args.w && !baseline.iter().any(|b| b == h))
            .map(str::to_string)
            .collect()
    } else {
        split_columns(&args.restricted)
    };
    let schema = Schema {
        y: args.y.clone(),
        w: args.w.clone(),
        baseline,
        restricted,
    };
    let mut d = load_dataset(&args.data, &schema)?;
    if let Some(s2) = args.sigma {
        if !(s2 > 0.0) {
            return Err(Error::InvalidSpec(format!("--sigma must be positive, got {s2}")));
        }
        d.sigma2 = Some(s2);
    }
    let penalty = match args.penalty {
        PenaltyArg::L1 => {
            if args.weight_matrix.is_some() {
                return Err(Error::InvalidSpec(
                    "--weight-matrix is only supported with --penalty l2".into(),
                ));
            }
            PenaltySpec::l1()
        }
        PenaltyArg::L2 => match &args.weight_matrix {
            None => PenaltySpec::l2(),
            Some(path) => PenaltySpec::weighted_l2(read_matrix(path, d.k2())?),
        },
        PenaltyArg::PredictorL2 => {
            if args.weight_matrix.is_some() {
                return Err(Error::InvalidSpec(
                    "--weight-matrix cannot be combined with the predictor norm".into(),
                ));
            }
            PenaltySpec::predictor_norm()
        }
    };
    if !(args.alpha > 0.0 && args.alpha < 0.5) {
        return Err(Error::InvalidSpec(format!(
            "--alpha must lie in (0, 0.5), got {}",
            args.alpha
        )));
    }
    Ok((d, penalty))
}

fn read_matrix(path: &Path, k2: usize) -> biasaware::Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Vec<f64> = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::NonFiniteValue {
                    column: "<weight-matrix>".into(),
                    row: rows.len(),
                })
            })
            .collect::<biasaware::Result<_>>()?;
        rows.push(row);
    }
    if rows.len() != k2 || rows.iter().any(|r| r.len() != k2) {
        return Err(Error::DimensionMismatch { expected: k2, got: rows.len() });
    }
    Ok(DMatrix::from_fn(k2, k2, |i, j| rows[i][j]))
}

fn parse_grid(raw: &str) -> biasaware::Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidSpec(format!(
            "grid must be start:stop:step, got '{raw}'"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("bad number in grid: '{p}'")))
        })
        .collect::<biasaware::Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start || start < 0.0 {
        return Err(Error::InvalidSpec(format!("invalid grid '{raw}'")));
    }
    let mut grid = Vec::new();
    let mut c = start;
    while c <= stop + 1e-12 * step {
        grid.push(c);
        c += step;
    }
    Ok(grid)
}

fn write_output(output: &OutputArgs, content: &str) -> biasaware::Result<()> {
    match &output.out {
        Some(path) => {
            std::fs::write(path, content)?;
        }
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(())
}

fn reports_csv(pair: &biasaware::inference::PipelinePair) -> String {
    let mut out = String::from(
        "criterion,beta_hat,maxbias,sd_homo,sd_robust,cv,ci_lo,ci_hi,lambda_chosen,lind,alpha\n",
    );
    for r in [&pair.mse, &pair.flci] {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.criterion,
            report::fmt_f64(r.beta_hat),
            report::fmt_f64(r.maxbias),
            report::fmt_f64(r.sd_homo),
            report::fmt_f64(r.sd_robust),
            report::fmt_f64(r.cv),
            report::fmt_f64(r.ci_lo),
            report::fmt_f64(r.ci_hi),
            report::fmt_f64(r.lambda_chosen),
            report::fmt_f64(r.lind),
            report::fmt_f64(r.alpha),
        ));
    }
    out
}

fn cmd_estimate(
    data: &DataArgs,
    c: f64,
    _criterion: CriterionArg,
    output: &OutputArgs,
) -> biasaware::Result<()> {
    if c < 0.0 {
        return Err(Error::InvalidSpec(format!("C must be nonnegative, got {c}")));
    }
    let (d, penalty) = read_inputs(data)?;
    let pair = baseline_pipeline(
        &d,
        &penalty,
        c,
        data.alpha,
        &InitResiduals::OutcomeRegression,
        data.lind_cap,
    )?;
    let content = match output.format {
        FormatArg::Json => report::pipeline_pair_json(&pair),
        FormatArg::Csv => reports_csv(&pair),
    };
    write_output(output, &content)
}

fn cmd_sensitivity(
    data: &DataArgs,
    c_grid: &str,
    null: f64,
    output: &OutputArgs,
) -> biasaware::Result<()> {
    let grid = parse_grid(c_grid)?;
    let (d, penalty) = read_inputs(data)?;
    // the path is independent of C: prepare once, sweep selections
    let ctx = prepare_pipeline(&d, &penalty, &InitResiduals::OutcomeRegression)?;
    let mut rows: Vec<(f64, InferenceReport, bool)> = Vec::with_capacity(grid.len());
    let mut breakdown: Option<f64> = None;
    for &c in &grid {
        let pair = pipeline_reports(&ctx, &d, &penalty, c, data.alpha, data.lind_cap)?;
        let excludes = null < pair.flci.ci_lo || null > pair.flci.ci_hi;
        if excludes {
            breakdown = Some(c);
        }
        rows.push((c, pair.flci, excludes));
    }
    let content = match output.format {
        FormatArg::Json => {
            let row_docs: Vec<String> = rows
                .iter()
                .map(|(c, r, excludes)| {
                    report::JsonObject::new()
                        .f64("c", *c)
                        .f64("beta_hat", r.beta_hat)
                        .f64("maxbias", r.maxbias)
                        .f64("sd_robust", r.sd_robust)
                        .f64("cv", r.cv)
                        .f64("ci_lo", r.ci_lo)
                        .f64("ci_hi", r.ci_hi)
                        .bool("excludes_null", *excludes)
                        .finish()
                })
                .collect();
            let mut doc = report::JsonObject::new()
                .u64("schema_version", report::SCHEMA_VERSION as u64)
                .f64("null_value", null);
            doc = match breakdown {
                Some(b) => doc.f64("breakdown_c", b),
                None => doc.str("breakdown_c", "none"),
            };
            doc.raw("rows", format!("[{}]", row_docs.join(","))).finish()
        }
        FormatArg::Csv => report::sensitivity_csv(&rows),
    };
    write_output(output, &content)
}

fn cmd_lower_c(
    data: &DataArgs,
    mode: LowerCiModeArg,
    draws: usize,
    seed: u64,
    output: &OutputArgs,
) -> biasaware::Result<()> {
    let (d, penalty) = read_inputs(data)?;
    let mode = match mode {
        LowerCiModeArg::KnownSigma => LowerCiMode::KnownSigmaMc { draws, seed },
        LowerCiModeArg::ModerateDeviations => LowerCiMode::ModerateDeviations,
    };
    let out = diagnostics::lower_ci_c(&d, &penalty, data.alpha, &mode)?;
    let content = match output.format {
        FormatArg::Json => report::c_lower_ci_json(&out),
        FormatArg::Csv => format!(
            "c_hat,lambda_star_alpha,mode,alpha\n{},{},{},{}\n",
            report::fmt_f64(out.c_hat),
            report::fmt_f64(out.lambda_star_alpha),
            out.mode,
            report::fmt_f64(out.alpha)
        ),
    };
    write_output(output, &content)
}

fn cmd_efficiency(data: &DataArgs, c: f64, output: &OutputArgs) -> biasaware::Result<()> {
    if !(c > 0.0) {
        return Err(Error::InvalidSpec(format!("efficiency needs C > 0, got {c}")));
    }
    let (d, penalty) = read_inputs(data)?;
    let ctx = prepare_pipeline(&d, &penalty, &InitResiduals::OutcomeRegression)?;
    let path = if ctx.path.kind == PathKind::L1 {
        densify_l1(&ctx.path, 6)
    } else {
        ctx.path.clone()
    };
    let modulus = modulus_curve(&path, c, &ctx.design)?;
    let rep = efficiency::efficiency_report(&modulus, data.alpha, ctx.sigma2_hat.sqrt())?;
    let content = match output.format {
        FormatArg::Json => report::efficiency_report_json(&rep),
        FormatArg::Csv => format!(
            "kappa_flci,kappa_flci_coarse,kappa_mse_lo,kappa_mse_hi,extension_mass,alpha\n{},{},{},{},{},{}\n",
            report::fmt_f64(rep.kappa_flci),
            report::fmt_f64(rep.kappa_flci_coarse),
            report::fmt_f64(rep.kappa_mse_lo),
            report::fmt_f64(rep.kappa_mse_hi),
            report::fmt_f64(rep.extension_mass),
            report::fmt_f64(rep.alpha)
        ),
    };
    write_output(output, &content)
}

fn cmd_r2curve(data: &DataArgs, c_grid: &str, output: &OutputArgs) -> biasaware::Result<()> {
    let grid = parse_grid(c_grid)?;
    let (d, penalty) = read_inputs(data)?;
    let curve = diagnostics::r2_curve(&d, &penalty, &grid)?;
    let content = match output.format {
        FormatArg::Json => {
            let rows: Vec<String> = curve
                .iter()
                .map(|(c, r2)| report::JsonObject::new().f64("c", *c).f64("r2", *r2).finish())
                .collect();
            report::JsonObject::new()
                .u64("schema_version", report::SCHEMA_VERSION as u64)
                .raw("curve", format!("[{}]", rows.join(",")))
                .finish()
        }
        FormatArg::Csv => report::r2_curve_csv(&curve),
    };
    write_output(output, &content)
}

fn dataset_csv(d: &Dataset) -> String {
    let mut header: Vec<String> = vec!["y".into(), "w".into()];
    header.extend((0..d.k1()).map(|j| format!("z1_{j}")));
    header.extend((0..d.k2()).map(|j| format!("z2_{j}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..d.n() {
        let mut row: Vec<String> = vec![format!("{:.17e}", d.y[i]), format!("{:.17e}", d.w[i])];
        row.extend((0..d.k1()).map(|j| format!("{:.17e}", d.z1[(i, j)])));
        row.extend((0..d.k2()).map(|j| format!("{:.17e}", d.z2[(i, j)])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cmd_simulate(
    config: &Path,
    emit_data: Option<PathBuf>,
    out: Option<PathBuf>,
) -> biasaware::Result<()> {
    let text = std::fs::read_to_string(config)?;
    let spec = parse_experiment(&text)?;
    if let Some(path) = emit_data {
        let dgp = match &spec {
            ExperimentSpec::Coverage { dgp, .. } => dgp,
            ExperimentSpec::Rate { dgp, .. } => dgp,
        };
        let (d, _) = generate(dgp)?;
        std::fs::write(&path, dataset_csv(&d))?;
        println!("wrote dataset ({} rows) to {}", d.n(), path.display());
        return Ok(());
    }
    match spec {
        ExperimentSpec::Coverage { dgp, c_assumed, alpha, reps } => {
            let penalty = PenaltySpec::lp(dgp.pnorm)?;
            let result = coverage_experiment(&dgp, &penalty, c_assumed, alpha, reps)?;
            let summary = report::coverage_summary_json(&result);
            match out {
                Some(prefix) => {
                    let summary_path = prefix.with_extension("summary.json");
                    let records_path = prefix.with_extension("records.csv");
                    std::fs::write(&summary_path, &summary)?;
                    std::fs::write(&records_path, report::coverage_records_csv(&result))?;
                    println!(
                        "coverage {:.4} ± {:.4}; wrote {} and {}",
                        result.coverage,
                        result.mc_se,
                        summary_path.display(),
                        records_path.display()
                    );
                }
                None => println!("{summary}"),
            }
        }
        ExperimentSpec::Rate { dgp, n_grid, k_grid, c, alpha, reps } => {
            let penalty = PenaltySpec::lp(dgp.pnorm)?;
            let cells = rate_experiment(&dgp, &penalty, &n_grid, &k_grid, c, alpha, reps)?;
            let summary = report::rate_cells_json(&cells);
            match out {
                Some(prefix) => {
                    let summary_path = prefix.with_extension("summary.json");
                    let csv_path = prefix.with_extension("cells.csv");
                    std::fs::write(&summary_path, &summary)?;
                    std::fs::write(&csv_path, report::rate_cells_csv(&cells))?;
                    println!(
                        "{} cells; wrote {} and {}",
                        cells.len(),
                        summary_path.display(),
                        csv_path.display()
                    );
                }
                None => println!("{summary}"),
            }
        }
    }
    Ok(())
}
