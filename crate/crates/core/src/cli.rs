//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 2 for user errors, 3 for data errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cloning::{build_cloning_fragment, verify_factored, CloneModel, CloningConfig, InputMode, Task};
use crate::error::{Error, Result};
use crate::fragments::{
    cope_from_fragment, factored_cope, meqsd_cope, sdc_cope, CopeMatrix, MeqsdParams, SdcParams,
};
use crate::io::{read_fragment, read_matrix_file, write_curve_csv, write_matrix_csv, write_scan_csv};
use crate::nmf::{
    enmf_search, nmf_factorize_matrix, ConstraintMode, NmfConfig, UpdateRule, NMF_CAVEAT,
};
use crate::quantum::CloneCoefficients;
use crate::rank::{numerical_rank, rank_separation_verdict, CopeInput, SamplingConfig, VerdictConfig, DEFAULT_EPS};
use crate::solvers::{
    helstrom, sdc_scan, sdc_spectrum, solve_success_prob, success_curve, sweep_values, CurveRow,
    ScanConfig, SolverConfig,
};
use crate::SCHEMA;

/// Fragments up to this many preparations are certified densely.
const DENSE_CERTIFY_CAP: usize = 2000;

#[derive(Parser, Debug)]
#[command(name = "copectx", version, about = "Contextuality certification by rank separation")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative rank tolerance (default: max(rows, cols) * 1e-12).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Zero threshold for zero patterns.
    #[arg(long, global = true, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-state discrimination: verdicts and the success curve.
    Meqsd(MeqsdArgs),
    /// State-dependent cloning: spectrum and verdict, or a rank scan.
    Sdc(SdcArgs),
    /// Phase-covariant or universal cloning at scale.
    Cloning(CloningArgs),
    /// Certify a fragment JSON file.
    Certify(CertifyArgs),
    /// Nonnegative factorization of a matrix CSV.
    Nmf(NmfArgs),
}

#[derive(Args, Debug)]
struct MeqsdArgs {
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    cq: Option<f64>,
    /// start:end:step, inclusive.
    #[arg(long)]
    sweep: Option<String>,
    /// Success probability; defaults to the optimum for each c_q.
    #[arg(long)]
    sq: Option<f64>,
}

#[derive(Args, Debug)]
struct SdcArgs {
    #[arg(long)]
    phi: f64,
    #[arg(long, requires = "d")]
    c: Option<f64>,
    #[arg(long, requires = "c")]
    d: Option<f64>,
    #[arg(long)]
    search: bool,
    #[arg(long, default_value_t = 720)]
    samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    PhaseCovariant,
    Universal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Deterministic,
    Seeded,
}

#[derive(Args, Debug)]
struct CloningArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 12155)]
    n: usize,
    /// `ideal` or `rotated:<angle>`.
    #[arg(long, default_value = "rotated:0.2")]
    clone_model: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Deterministic)]
    mode: ModeArg,
    /// Include runtime_ms in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value_t = 2000)]
    exhaustive_cap: usize,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Write the 16 x N preparation factor as CSV.
    #[arg(long)]
    dump_factors: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NmfOptions {
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    success_tol: f64,
    #[arg(long)]
    ontological: bool,
    #[arg(long, value_enum, default_value_t = RuleArg::Mu)]
    rule: RuleArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Mu,
    Hals,
}

impl NmfOptions {
    fn config(&self, seed: u64) -> NmfConfig {
        NmfConfig {
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed,
            constraint_mode: if self.ontological { ConstraintMode::Ontological } else { ConstraintMode::Plain },
            success_tol: self.success_tol,
            rule: match self.rule {
                RuleArg::Mu => UpdateRule::Multiplicative,
                RuleArg::Hals => UpdateRule::Hals,
            },
            record_history: false,
        }
    }
}

#[derive(Args, Debug)]
struct CertifyArgs {
    file: PathBuf,
    /// Also run a factorization search at k = rank.
    #[arg(long)]
    enmf: bool,
    #[command(flatten)]
    nmf: NmfOptions,
}

#[derive(Args, Debug)]
struct NmfArgs {
    file: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    nmf: NmfOptions,
}

#[derive(Serialize)]
struct Echo {
    tol: Option<f64>,
    eps: f64,
    seed: u64,
    format: Format,
}

enum Report {
    Json(Value),
    Text(String),
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    match execute(&cli, stderr).and_then(|report| emit(&cli, report, stdout)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(cli: &Cli, report: Report, stdout: &mut dyn Write) -> Result<()> {
    let text = match report {
        Report::Json(v) => serde_json::to_string_pretty(&v)? + "\n",
        Report::Text(t) => t,
    };
    match &cli.output {
        Some(path) => fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cli: &Cli, stderr: &mut dyn Write) -> Result<Report> {
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("--tol must be positive, got {t}")));
        }
    }
    if !(cli.eps > 0.0 && cli.eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("--eps must be positive, got {}", cli.eps)));
    }
    let echo = Echo { tol: cli.tol, eps: cli.eps, seed: cli.seed, format: cli.format };
    let vcfg = VerdictConfig {
        tol: cli.tol,
        eps: cli.eps,
        n: None,
        sampling: SamplingConfig { seed: cli.seed, ..SamplingConfig::default() },
    };
    match &cli.command {
        Command::Meqsd(a) => cmd_meqsd(a, cli, &echo, &vcfg),
        Command::Sdc(a) => cmd_sdc(a, cli, &echo, &vcfg),
        Command::Cloning(a) => cmd_cloning(a, cli, &echo, stderr),
        Command::Certify(a) => cmd_certify(a, cli, &echo, &vcfg),
        Command::Nmf(a) => cmd_nmf(a, cli, &echo),
    }
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Report> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(Report::Text(String::from_utf8(buf).expect("csv output is utf-8")))
}

fn json_only(cli: &Cli, command: &str) -> Result<()> {
    if cli.format == Format::Csv {
        return Err(Error::InvalidParameter(format!("--format csv is not available for {command}")));
    }
    Ok(())
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([a, b, step]) => sweep_values(*a, *b, *step),
        _ => Err(Error::InvalidParameter(format!("--sweep expects start:end:step, got {s:?}"))),
    }
}

fn cmd_meqsd(a: &MeqsdArgs, cli: &Cli, echo: &Echo, vcfg: &VerdictConfig) -> Result<Report> {
    let values = match (&a.sweep, a.cq) {
        (Some(s), _) => parse_sweep(s)?,
        (None, Some(c)) => vec![c],
        (None, None) => unreachable!("clap requires one of --cq, --sweep"),
    };
    let solver = SolverConfig::default();
    let mut points = Vec::new();
    for &c_q in &values {
        let params = MeqsdParams::new(c_q, a.sq.unwrap_or_else(|| helstrom(c_q.clamp(0.0, 1.0))))?;
        let verdict = rank_separation_verdict(CopeInput::Dense(&meqsd_cope(params)), vcfg)?;
        let success = solve_success_prob(c_q, &solver)?;
        points.push(json!({ "c_q": c_q, "s_q": params.s_q, "verdict": verdict, "success": success }));
    }
    let curve: Vec<CurveRow> = success_curve(&values, &solver)?;
    if cli.format == Format::Csv {
        return csv_string(|buf| write_curve_csv(&curve, buf));
    }
    let max_err = curve.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    Ok(Report::Json(json!({
        "schema": SCHEMA,
        "command": "meqsd",
        "config": echo,
        "points": points,
        "curve": curve,
        "max_abs_error": max_err,
    })))
}

fn cmd_sdc(a: &SdcArgs, cli: &Cli, echo: &Echo, vcfg: &VerdictConfig) -> Result<Report> {
    if !(a.phi > 0.0 && a.phi < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("phi = {} must lie in (0, pi/2)", a.phi)));
    }
    if a.search {
        let points = sdc_scan(a.phi, &ScanConfig { samples: a.samples })?;
        if cli.format == Format::Csv {
            return csv_string(|buf| write_scan_csv(&points, buf));
        }
        let rank3 = points.iter().filter(|p| p.rank3).count();
        return Ok(Report::Json(json!({
            "schema": SCHEMA,
            "command": "sdc",
            "config": echo,
            "phi": a.phi,
            "samples": a.samples,
            "rank3_points": rank3,
            "points": points,
        })));
    }
    json_only(cli, "sdc without --search")?;
    let coeffs = match (a.c, a.d) {
        (Some(c), Some(d)) => CloneCoefficients::new(a.phi, c, d)?,
        _ => CloneCoefficients::inner_product_preserving(a.phi)?,
    };
    let params = SdcParams::from_coefficients(&coeffs)?;
    let cope: CopeMatrix = sdc_cope(params);
    let spectrum = sdc_spectrum(&coeffs)?;
    let rank = numerical_rank(cope.entries(), cli.tol)?.rank;
    let verdict = rank_separation_verdict(CopeInput::Dense(&cope), vcfg)?;
    Ok(Report::Json(json!({
        "schema": SCHEMA,
        "command": "sdc",
        "config": echo,
        "coefficients": coeffs,
        "params": params,
        "spectrum": spectrum,
        "rank": rank,
        "verdict": verdict,
    })))
}

fn parse_clone_model(s: &str) -> Result<CloneModel> {
    if s == "ideal" {
        return Ok(CloneModel::Ideal);
    }
    if let Some(angle) = s.strip_prefix("rotated:").or_else(|| s.strip_prefix("rotated=")) {
        let t: f64 = angle
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad rotation angle {angle:?}")))?;
        return Ok(CloneModel::Rotated(t));
    }
    Err(Error::InvalidParameter(format!("--clone-model expects ideal or rotated:<angle>, got {s:?}")))
}

fn cmd_cloning(a: &CloningArgs, cli: &Cli, echo: &Echo, stderr: &mut dyn Write) -> Result<Report> {
    json_only(cli, "cloning")?;
    let start = Instant::now();
    let cfg = CloningConfig {
        task: match a.task {
            TaskArg::PhaseCovariant => Task::PhaseCovariant,
            TaskArg::Universal => Task::Universal,
        },
        n: a.n,
        model: parse_clone_model(&a.clone_model)?,
        mode: match a.mode {
            ModeArg::Deterministic => InputMode::Deterministic,
            ModeArg::Seeded => InputMode::Seeded(cli.seed),
        },
        tol: cli.tol,
        eps: cli.eps,
        sampling: SamplingConfig {
            exhaustive_cap: a.exhaustive_cap,
            samples: a.samples,
            seed: cli.seed,
            partner: None,
        },
        timing: a.timing,
    };
    let (_, fc) = build_cloning_fragment(&cfg)?;
    if let Some(path) = &a.dump_factors {
        write_matrix_csv(fc.right(), fc.column_labels(), fs::File::create(path)?)?;
    }
    let mut report = verify_factored(&fc, &cfg)?;
    let elapsed = start.elapsed().as_millis() as u64;
    if a.timing {
        report.runtime_ms = Some(elapsed);
    }
    let _ = writeln!(stderr, "cloning: {} preparations verified in {elapsed} ms", report.n_preparations);
    let mut value = serde_json::to_value(&report)?;
    value["command"] = json!("cloning");
    value["run_config"] = serde_json::to_value(echo)?;
    Ok(Report::Json(value))
}

fn cmd_certify(a: &CertifyArgs, cli: &Cli, echo: &Echo, vcfg: &VerdictConfig) -> Result<Report> {
    json_only(cli, "certify")?;
    let fragment = read_fragment(&a.file)?;
    let n_preps = fragment.preparations().len();
    let (verdict, dense) = if n_preps <= DENSE_CERTIFY_CAP {
        let cope = cope_from_fragment(&fragment)?;
        (rank_separation_verdict(CopeInput::Dense(&cope), vcfg)?, Some(cope))
    } else {
        let fc = factored_cope(&fragment)?;
        (rank_separation_verdict(CopeInput::Factored(&fc), vcfg)?, None)
    };
    let enmf = match (a.enmf, &dense) {
        (true, Some(cope)) => Some(serde_json::to_value(enmf_search(cope, &a.nmf.config(cli.seed), cli.tol)?)?),
        (true, None) => {
            return Err(Error::InvalidParameter(format!(
                "--enmf needs a dense COPE (at most {DENSE_CERTIFY_CAP} preparations)"
            )))
        }
        (false, _) => None,
    };
    let mut report = json!({
        "schema": SCHEMA,
        "command": "certify",
        "config": echo,
        "fragment": {
            "file": a.file.display().to_string(),
            "dim": fragment.dim(),
            "n_preparations": n_preps,
            "n_measurements": fragment.measurements().len(),
        },
        "verdict": verdict,
    });
    if let Some(e) = enmf {
        report["enmf"] = e;
    }
    Ok(Report::Json(report))
}

fn cmd_nmf(a: &NmfArgs, cli: &Cli, echo: &Echo) -> Result<Report> {
    json_only(cli, "nmf")?;
    let (m, _, blocks) = read_matrix_file(&a.file)?;
    let cfg = a.nmf.config(cli.seed);
    let result = nmf_factorize_matrix(&m, blocks.as_deref(), a.k, &cfg)?;
    Ok(Report::Json(json!({
        "schema": SCHEMA,
        "command": "nmf",
        "config": echo,
        "k": a.k,
        "found": result.residual < cfg.success_tol,
        "caveat": NMF_CAVEAT,
        "result": result,
    })))
}
