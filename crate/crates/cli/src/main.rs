use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use sg_core::butterfly::{self, BetaMode, MapKind, PsiZeroPolicy, RasterConfig, RasterFormat};
use sg_core::crsf;
use sg_core::decimation::{classify, decimation_kit, decimation_kit_with, Branch};
use sg_core::determinants::{self, ComplexityCase, DetCase, LogValue};
use sg_core::enumerator::{decimation_verify, spectrum_closed_form};
use sg_core::gasket::{build_gasket_with_max, DEFAULT_MAX_LEVEL};
use sg_core::gauge::{build_connection, FluxPair};
use sg_core::operator::{assemble, log_determinant, spectra_match, spectrum, DEFAULT_CLUSTER_TOL};

#[derive(Parser, Debug)]
#[command(name = "sg", version, about = "Magnetic Laplacians on Sierpinski gasket graphs")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest gasket level accepted
    #[arg(long, global = true, env = "SG_MAX_LEVEL", default_value_t = DEFAULT_MAX_LEVEL)]
    max_level: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectrum from the closed form, the dense eigensolver, or both
    Spectrum(SpectrumArgs),
    /// Check spectral decimation against the dense eigensolver
    Verify(VerifyArgs),
    /// Decimation quantities at one point
    Kit(KitArgs),
    /// Escape-time raster of the decimation map
    Butterfly(ButterflyArgs),
    /// Closed-form determinants and spanning-tree counts
    Det(DetArgs),
    /// Asymptotic complexity constants
    Complexity(ComplexityArgs),
    /// Cycle-rooted spanning forests
    #[command(subcommand)]
    Crsf(CrsfCommand),
    /// Gasket graph (and optionally its connection) as JSON
    GraphExport(GraphExportArgs),
}

#[derive(Args, Debug, Clone)]
struct FluxArgs {
    /// Upright flux, decimal or fraction such as 1/2
    #[arg(long, value_parser = parse_number, allow_hyphen_values = true)]
    alpha: f64,
    /// Downright flux, decimal or fraction
    #[arg(long, value_parser = parse_number, allow_hyphen_values = true)]
    beta: f64,
}

impl FluxArgs {
    fn flux(&self) -> FluxPair<f64> {
        FluxPair::new(self.alpha, self.beta)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    ClosedForm,
    Dense,
    Both,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    flux: FluxArgs,
    #[arg(long)]
    level: usize,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    method: Method,
    /// Eigenvalues closer than this are merged
    #[arg(long, default_value_t = DEFAULT_CLUSTER_TOL)]
    cluster_tol: f64,
    /// Eigenvalue tolerance of the match report
    #[arg(long, default_value_t = 1e-8)]
    match_tol: f64,
    /// Output file (.json, or .csv for a single method)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    flux: FluxArgs,
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BranchArg {
    Auto,
    Polar,
    Signed,
}

#[derive(Args, Debug)]
struct KitArgs {
    #[command(flatten)]
    flux: FluxArgs,
    #[arg(long, value_parser = parse_number, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = BranchArg::Auto)]
    branch: BranchArg,
    /// Tolerance for vanishing 𝒟 or Ψ in the classification
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MapArg {
    #[value(name = "U")]
    U,
    #[value(name = "U2")]
    U2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PsiZeroArg {
    Escape,
    Retain,
}

#[derive(Args, Debug)]
struct ButterflyArgs {
    #[arg(long, value_enum, default_value_t = MapArg::U, ignore_case = true)]
    map: MapArg,
    /// Grid points per axis
    #[arg(long, default_value_t = 301)]
    grid: usize,
    #[arg(long, value_parser = parse_number, default_value = "0", allow_hyphen_values = true)]
    lmin: f64,
    #[arg(long, value_parser = parse_number, default_value = "2", allow_hyphen_values = true)]
    lmax: f64,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 10.0)]
    threshold: f64,
    /// `diag` for β = α, or a fixed value
    #[arg(long, default_value = "diag")]
    beta: String,
    #[arg(long, value_enum, default_value_t = PsiZeroArg::Escape)]
    psi_zero: PsiZeroArg,
    /// Output raster (.pgm or .csv)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DetCaseArg {
    HalfHalf,
    HalfZero,
    ZeroHalf,
    Trees,
}

#[derive(Args, Debug)]
struct DetArgs {
    #[arg(long, value_enum)]
    case: DetCaseArg,
    #[arg(long)]
    level: usize,
    /// Evaluate below the smallest validated level
    #[arg(long)]
    allow_small_n: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ComplexityArg {
    ZeroZero,
    HalfHalf,
    HalfZero,
    ZeroHalf,
}

#[derive(Args, Debug)]
struct ComplexityArgs {
    #[arg(long, value_enum)]
    case: ComplexityArg,
    #[arg(long, default_value_t = 40)]
    terms: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CrsfCommand {
    /// Brute-force OCRSF partition function
    Partition(CrsfPartitionArgs),
    /// Cycle-popping samples, one JSON object per line
    Sample(CrsfSampleArgs),
}

#[derive(Args, Debug)]
struct CrsfPartitionArgs {
    #[command(flatten)]
    flux: FluxArgs,
    #[arg(long)]
    level: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CrsfSampleArgs {
    #[command(flatten)]
    flux: FluxArgs,
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GraphExportArgs {
    #[arg(long)]
    level: usize,
    /// Also export the connection for this upright flux
    #[arg(long, value_parser = parse_number, requires = "beta", allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_number, requires = "alpha", allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Decimal or `p/q`.
fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let q: i64 = q.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if q == 0 {
                return Err("zero denominator".into());
            }
            p as f64 / q as f64
        }
        None => s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s:?}"))
    }
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    args: Vec<String>,
    version: String,
    wall_time_s: f64,
    outputs: Vec<String>,
}

enum Outcome {
    Ok,
    VerificationFailed,
}

struct Ctx {
    max_level: usize,
    argv: Vec<String>,
    started: Instant,
}

impl Ctx {
    fn check_level(&self, level: usize) -> anyhow::Result<()> {
        if level > self.max_level {
            bail!(
                "level {level} exceeds the maximum {} (raise it with SG_MAX_LEVEL)",
                self.max_level
            );
        }
        Ok(())
    }

    fn manifest(&self, sub: &str, outputs: &[&Path]) -> anyhow::Result<()> {
        let m = RunManifest {
            subcommand: sub.to_string(),
            args: self.argv.iter().skip(1).cloned().collect(),
            version: sg_core::VERSION.to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        for p in outputs {
            let mp = manifest_path(p);
            fs::write(&mp, serde_json::to_vec_pretty(&m)?).with_context(|| format!("writing {}", mp.display()))?;
        }
        Ok(())
    }

    /// JSON to `out` (plus a manifest) or to stdout.
    fn emit(&self, sub: &str, value: &Value, out: Option<&Path>) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit_text(sub, &text, out)
    }

    fn emit_text(&self, sub: &str, text: &str, out: Option<&Path>) -> anyhow::Result<()> {
        match out {
            Some(p) => {
                fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
                self.manifest(sub, &[p])
            }
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn log_value_json(v: &LogValue) -> Value {
    let log10 = v.log_magnitude / std::f64::consts::LN_10;
    let exp = log10.floor();
    let mantissa = 10f64.powf(log10 - exp);
    let mut out = json!({
        "log_value": v.log_magnitude,
        "exact_factors": v.exact_factors,
        "decimal": format!("{mantissa:.12}e{exp}"),
    });
    if let Some(n) = v.to_bigint() {
        out["integer"] = Value::String(n.to_string());
    }
    out
}

fn run_spectrum(ctx: &Ctx, a: &SpectrumArgs) -> anyhow::Result<Outcome> {
    ctx.check_level(a.level)?;
    let flux = a.flux.flux();
    let closed = match a.method {
        Method::Dense => None,
        Method::ClosedForm => Some(spectrum_closed_form(flux, a.level)?),
        Method::Both => spectrum_closed_form(flux, a.level).ok(),
    };
    let dense = match a.method {
        Method::ClosedForm => None,
        _ => {
            let g = build_gasket_with_max(a.level, ctx.max_level)?;
            let c = build_connection(&g, flux)?;
            Some(spectrum(&assemble(&g, &c)?, a.cluster_tol)?)
        }
    };
    if let Some(p) = a.out.as_deref().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
        let s = match (&closed, &dense) {
            (Some(s), None) | (None, Some(s)) => s,
            _ => bail!("CSV output needs a single method"),
        };
        ctx.emit_text("spectrum", &s.to_csv(), Some(p))?;
        return Ok(Outcome::Ok);
    }
    let mut v = json!({
        "flux": flux,
        "level": a.level,
        "closed_form": closed,
        "dense": dense,
    });
    if let (Some(c), Some(d)) = (&closed, &dense) {
        v["match"] = json!({ "matched": spectra_match(c, d, a.match_tol), "tol": a.match_tol });
    } else if a.method == Method::Both {
        v["match"] = json!({ "matched": Value::Null, "note": "no closed form for this flux" });
    }
    ctx.emit("spectrum", &v, a.out.as_deref())?;
    Ok(Outcome::Ok)
}

fn run_verify(ctx: &Ctx, a: &VerifyArgs) -> anyhow::Result<Outcome> {
    ctx.check_level(a.level)?;
    let report = decimation_verify(a.flux.flux(), a.level, a.tol)?;
    ctx.emit("verify", &serde_json::to_value(&report)?, a.out.as_deref())?;
    if report.all_pass {
        Ok(Outcome::Ok)
    } else {
        eprintln!("verification failed: {} check(s)", report.failures);
        Ok(Outcome::VerificationFailed)
    }
}

fn run_kit(ctx: &Ctx, a: &KitArgs) -> anyhow::Result<Outcome> {
    let flux = a.flux.flux();
    let step = match a.branch {
        BranchArg::Auto => decimation_kit(flux, a.lambda),
        BranchArg::Polar => decimation_kit_with(flux, a.lambda, Branch::Polar),
        BranchArg::Signed => decimation_kit_with(flux, a.lambda, Branch::Signed),
    };
    let v = json!({ "kit": step, "classification": classify(flux, a.lambda, a.tol) });
    ctx.emit("kit", &v, None)?;
    Ok(Outcome::Ok)
}

fn run_butterfly(ctx: &Ctx, a: &ButterflyArgs) -> anyhow::Result<Outcome> {
    let beta_mode = if a.beta.eq_ignore_ascii_case("diag") {
        BetaMode::Diagonal
    } else {
        BetaMode::Fixed(parse_number(&a.beta).map_err(|e| anyhow!("--beta: {e}"))?)
    };
    let cfg = RasterConfig {
        grid_alpha: a.grid,
        grid_lambda: a.grid,
        lambda_min: a.lmin,
        lambda_max: a.lmax,
        threshold: a.threshold,
        max_iters: a.iters,
        map: match a.map {
            MapArg::U => MapKind::U,
            MapArg::U2 => MapKind::U2,
        },
        beta_mode,
        psi_zero: match a.psi_zero {
            PsiZeroArg::Escape => PsiZeroPolicy::Escape,
            PsiZeroArg::Retain => PsiZeroPolicy::Retain,
        },
    };
    let raster = butterfly::render(&cfg)?;
    match a.out.as_deref() {
        Some(p) => {
            let fmt = RasterFormat::from_path(p).ok_or_else(|| anyhow!("--out must end in .pgm or .csv"))?;
            butterfly::write_raster(&raster, fmt, p)?;
            ctx.manifest("butterfly", &[p])?;
        }
        None => {
            let rows: Vec<String> = (0..cfg.grid_lambda)
                .rev()
                .map(|j| {
                    (0..cfg.grid_alpha)
                        .map(|i| if raster.cell(i, j).retained { '1' } else { '0' })
                        .collect()
                })
                .collect();
            let v = json!({
                "config": cfg,
                "retained": raster.retained_count(),
                "psi_zero_hits": raster.psi_zero_hits,
                "rows_top_down": rows,
            });
            ctx.emit("butterfly", &v, None)?;
        }
    }
    Ok(Outcome::Ok)
}

fn run_det(ctx: &Ctx, a: &DetArgs) -> anyhow::Result<Outcome> {
    let (name, value) = match a.case {
        DetCaseArg::Trees => ("trees", determinants::tree_count_closed_form(a.level)?),
        DetCaseArg::HalfHalf => (
            "half-half",
            determinants::det_closed_form(DetCase::HalfHalf, a.level, a.allow_small_n)?,
        ),
        DetCaseArg::HalfZero => (
            "half-zero",
            determinants::det_closed_form(DetCase::HalfZero, a.level, a.allow_small_n)?,
        ),
        DetCaseArg::ZeroHalf => (
            "zero-half",
            determinants::det_closed_form(DetCase::ZeroHalf, a.level, a.allow_small_n)?,
        ),
    };
    let mut v = log_value_json(&value);
    v["case"] = json!(name);
    v["level"] = json!(a.level);
    ctx.emit("det", &v, a.out.as_deref())?;
    Ok(Outcome::Ok)
}

fn run_complexity(ctx: &Ctx, a: &ComplexityArgs) -> anyhow::Result<Outcome> {
    let case = match a.case {
        ComplexityArg::ZeroZero => ComplexityCase::ZeroZero,
        ComplexityArg::HalfHalf => ComplexityCase::HalfHalf,
        ComplexityArg::HalfZero => ComplexityCase::HalfZero,
        ComplexityArg::ZeroHalf => ComplexityCase::ZeroHalf,
    };
    let value = determinants::complexity(case, a.terms)?;
    let mut v = json!({ "case": case, "terms": a.terms, "value": value });
    if case != ComplexityCase::ZeroZero {
        v["lower_bound"] = json!(true);
        v["loop_entropy"] = json!(value - determinants::complexity(ComplexityCase::ZeroZero, a.terms)?);
    }
    ctx.emit("complexity", &v, a.out.as_deref())?;
    Ok(Outcome::Ok)
}

fn run_crsf(ctx: &Ctx, c: &CrsfCommand) -> anyhow::Result<Outcome> {
    match c {
        CrsfCommand::Partition(a) => {
            ctx.check_level(a.level)?;
            let g = build_gasket_with_max(a.level, ctx.max_level)?;
            let conn = build_connection(&g, a.flux.flux())?;
            let z = crsf::brute_force_partition(&g, &conn)?;
            let det = log_determinant(&assemble(&g, &conn)?, false)?;
            let v = json!({
                "flux": a.flux.flux(),
                "level": a.level,
                "partition": { "re": z.re, "im": z.im },
                "determinant": det.log_magnitude.exp(),
            });
            ctx.emit("crsf partition", &v, a.out.as_deref())?;
        }
        CrsfCommand::Sample(a) => {
            ctx.check_level(a.level)?;
            let g = build_gasket_with_max(a.level, ctx.max_level)?;
            let conn = build_connection(&g, a.flux.flux())?;
            let samples = (0..a.samples as u64)
                .into_par_iter()
                .map(|i| crsf::sample_crsf(&g, &conn, a.seed.wrapping_add(i)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut text = String::new();
            for s in &samples {
                text.push_str(&serde_json::to_string(s)?);
                text.push('\n');
            }
            ctx.emit_text("crsf sample", &text, a.out.as_deref())?;
        }
    }
    Ok(Outcome::Ok)
}

fn run_graph_export(ctx: &Ctx, a: &GraphExportArgs) -> anyhow::Result<Outcome> {
    ctx.check_level(a.level)?;
    let g = build_gasket_with_max(a.level, ctx.max_level)?;
    let mut v = serde_json::to_value(g.export())?;
    if let (Some(al), Some(be)) = (a.alpha, a.beta) {
        let conn = build_connection(&g, FluxPair::new(al, be))?;
        let phases: BTreeMap<String, f64> = conn
            .export(&g)
            .into_iter()
            .map(|(u, w, p)| (format!("{u}-{w}"), p))
            .collect();
        v["connection"] = json!(phases);
    }
    ctx.emit("graph-export", &v, a.out.as_deref())?;
    Ok(Outcome::Ok)
}

fn run(cli: &Cli, ctx: &Ctx) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Spectrum(a) => run_spectrum(ctx, a),
        Command::Verify(a) => run_verify(ctx, a),
        Command::Kit(a) => run_kit(ctx, a),
        Command::Butterfly(a) => run_butterfly(ctx, a),
        Command::Det(a) => run_det(ctx, a),
        Command::Complexity(a) => run_complexity(ctx, a),
        Command::Crsf(c) => run_crsf(ctx, c),
        Command::GraphExport(a) => run_graph_export(ctx, a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let ctx = Ctx {
        max_level: cli.max_level,
        argv,
        started: Instant::now(),
    };
    match run(&cli, &ctx) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
