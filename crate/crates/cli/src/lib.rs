//! `detline`: determinant ratios, spectra and self-adjointness reports for
//! problems described in JSON files.

pub mod config;
pub mod format;
pub mod validate;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use detline_core::boundary::{self, SelfAdjointReport};
use detline_core::gelfand::{BCase, DetRatioReport, RatioOptions, RatioPath};
use detline_core::linalg::CMatrix;
use detline_core::odeprop::PropagationError;
use detline_core::oracle::{
    eigenvalue_scan, truncated_product_ratio, EigenvalueList, ProductRatio, ScanOptions,
};
use detline_core::zeromode::{self, ZeroModeHandling};
use detline_core::DetError;
use serde_json::{json, Map, Value};

use crate::config::{load_problem, ConfigError, OracleCheck, PotentialField, ProblemConfig};
use crate::format::{num, pair, sig, sig_complex};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "detline",
    version,
    about = "Functional determinant ratios of 1-D Sturm-Liouville operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Output {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// det L1 / det L2, switching to det' L1 / det L2 when L1 has a zero mode.
    Ratio {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        output: Output,
        /// Compare with the truncated eigenvalue product over N eigenvalues.
        #[arg(long, value_name = "N")]
        oracle: Option<usize>,
    },
    /// Lowest eigenvalues of L1 under the problem's boundary conditions.
    Eigenvalues {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum, default_value_t)]
        output: Output,
    },
    /// Run the built-in regression table.
    Validate {
        #[arg(long, value_enum, default_value_t)]
        output: Output,
    },
    /// Echo the parsed problem with its boundary classification.
    Describe {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        output: Output,
    },
}

/// Failure of a subcommand, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Input(String),
    Computation(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<DetError> for Failure {
    fn from(e: DetError) -> Self {
        match e {
            DetError::Problem(_)
            | DetError::Boundary(_)
            | DetError::Mismatch(_)
            | DetError::Propagation(PropagationError::InvalidControls(_)) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Computation(e.to_string()),
        }
    }
}

/// Run with `argv` (including the program name), writing to the given streams.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Ratio {
            problem,
            output,
            oracle,
        } => ratio(&problem, output, oracle, out, err),
        Command::Eigenvalues {
            problem,
            count,
            output,
        } => eigenvalues(&problem, count, output, out, err),
        Command::Validate { output } => validate::run(output == Output::Json, out),
        Command::Describe { problem, output } => describe(&problem, output, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Computation(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_COMPUTATION
        }
    }
}

/// Run against the process's standard streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn io(e: std::io::Error) -> Failure {
    Failure::Computation(format!("writing output: {e}"))
}

fn print_json(out: &mut dyn Write, v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Computation(e.to_string()))?;
    writeln!(out, "{text}").map_err(io)
}

fn b_case_json(case: Option<BCase>) -> Value {
    match case {
        Some(BCase::Table(k)) => json!(k),
        Some(BCase::System) => json!("system"),
        None => Value::Null,
    }
}

fn path_name(path: RatioPath) -> &'static str {
    match path {
        RatioPath::Plain => "plain",
        RatioPath::ZeroModeExtracted => "zero_mode_extracted",
    }
}

struct OracleResult {
    n: usize,
    product: ProductRatio,
    deviation: f64,
}

fn ratio(
    path: &std::path::Path,
    output: Output,
    oracle: Option<usize>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    let cfg = load_problem(path)?;
    let opts = RatioOptions {
        controls: cfg.controls.clone(),
        ..RatioOptions::default()
    };
    let report = zeromode::ratio(
        &cfg.p1,
        &cfg.p2,
        &cfg.boundary,
        cfg.extract_zero_mode,
        &opts,
    )?;
    let n = match (oracle, cfg.oracle_check) {
        (Some(0), _) => return Err(Failure::Input("--oracle needs N ≥ 1".into())),
        (Some(n), _) | (None, OracleCheck::Product(n)) => Some(n),
        (None, OracleCheck::Off) => None,
    };
    let oracle = match n {
        Some(n) => {
            let scan = ScanOptions {
                controls: cfg.controls.clone(),
                ..ScanOptions::default()
            };
            let skip_zero = report.path == RatioPath::ZeroModeExtracted;
            let product =
                truncated_product_ratio(&cfg.p1, &cfg.p2, &cfg.boundary, n, skip_zero, &scan)?;
            let deviation = (product.value - report.value()).abs() / report.value().abs();
            Some(OracleResult {
                n,
                product,
                deviation,
            })
        }
        None => None,
    };
    match output {
        Output::Text => write_ratio_text(out, &report, oracle.as_ref()).map_err(io)?,
        Output::Json => print_json(out, &ratio_json(&report, oracle.as_ref()))?,
    }
    for w in report
        .warnings
        .iter()
        .chain(oracle.iter().flat_map(|o| &o.product.warnings))
    {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(EXIT_OK)
}

fn write_ratio_text(
    out: &mut dyn Write,
    r: &DetRatioReport,
    oracle: Option<&OracleResult>,
) -> std::io::Result<()> {
    writeln!(out, "det_ratio = {}", sig(r.value()))?;
    if !r.is_real() {
        writeln!(out, "det_ratio_im = {}", sig(r.ratio.im))?;
    }
    writeln!(out, "zero_mode = {}", r.zero_mode_numerator)?;
    writeln!(out, "path = {}", path_name(r.path))?;
    match r.path {
        RatioPath::Plain => writeln!(out, "numerator = {}", sig_complex(r.numerator))?,
        RatioPath::ZeroModeExtracted => writeln!(out, "f10 = {}", sig_complex(r.numerator))?,
    }
    writeln!(out, "denominator = {}", sig_complex(r.denominator))?;
    if let Some(case) = r.b_case {
        writeln!(out, "b_case = {case}")?;
    }
    if let Some(b) = r.b_constant {
        writeln!(out, "b_constant = {}", sig_complex(b))?;
    }
    if let Some(norm) = r.zero_mode_norm {
        writeln!(out, "zero_mode_norm = {}", sig(norm))?;
    }
    writeln!(out, "zero_mode_residual = {}", sig(r.numerator_residual))?;
    writeln!(out, "self_adjoint = {}", r.self_adjoint)?;
    if let Some(o) = oracle {
        writeln!(out, "oracle_n = {}", o.n)?;
        writeln!(out, "oracle_product = {}", sig(o.product.value))?;
        writeln!(out, "oracle_deviation = {}", sig(o.deviation))?;
    }
    Ok(())
}

fn ratio_json(r: &DetRatioReport, oracle: Option<&OracleResult>) -> Value {
    let mut m = Map::new();
    m.insert("ratio_re".into(), num(r.ratio.re));
    m.insert("ratio_im".into(), num(r.ratio.im));
    m.insert("zero_mode".into(), json!(r.zero_mode_numerator));
    m.insert("path".into(), json!(path_name(r.path)));
    m.insert("numerator".into(), pair(r.numerator));
    m.insert("denominator".into(), pair(r.denominator));
    m.insert("zero_mode_residual".into(), num(r.numerator_residual));
    m.insert("b_case".into(), b_case_json(r.b_case));
    m.insert(
        "b_constant".into(),
        r.b_constant.map(pair).unwrap_or(Value::Null),
    );
    m.insert(
        "zero_mode_norm".into(),
        r.zero_mode_norm.map(num).unwrap_or(Value::Null),
    );
    m.insert("self_adjoint".into(), json!(r.self_adjoint.to_string()));
    m.insert("warnings".into(), json!(r.warnings));
    m.insert(
        "oracle".into(),
        match oracle {
            Some(o) => json!({
                "n": o.n,
                "product": num(o.product.value),
                "deviation": num(o.deviation),
                "warnings": o.product.warnings,
            }),
            None => Value::Null,
        },
    );
    Value::Object(m)
}

fn eigenvalues(
    path: &std::path::Path,
    count: usize,
    output: Output,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, Failure> {
    if count == 0 {
        return Err(Failure::Input("--count must be at least 1".into()));
    }
    let cfg = load_problem(path)?;
    let scan = ScanOptions {
        controls: cfg.controls.clone(),
        ..ScanOptions::default()
    };
    let list = eigenvalue_scan(&cfg.p1, &cfg.boundary, count, &scan)?;
    match output {
        Output::Text => write_eigenvalues_text(out, &list).map_err(io)?,
        Output::Json => print_json(
            out,
            &json!({
                "count": list.len(),
                "eigenvalues": list.eigenvalues.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                "residuals": list.residuals.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                "even_multiplicity": list.even_multiplicity,
                "warnings": list.warnings,
            }),
        )?,
    }
    for w in &list.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(EXIT_OK)
}

fn write_eigenvalues_text(out: &mut dyn Write, list: &EigenvalueList) -> std::io::Result<()> {
    for (k, (l, double)) in list
        .eigenvalues
        .iter()
        .zip(&list.even_multiplicity)
        .enumerate()
    {
        let mark = if *double { "  (double?)" } else { "" };
        writeln!(out, "{:>4}  {}{mark}", k + 1, sig(*l))?;
    }
    Ok(())
}

fn potential_text(p: &PotentialField) -> String {
    match p {
        PotentialField::Scalar(s) => s.clone(),
        PotentialField::Matrix(rows) => {
            let rows: Vec<String> = rows.iter().map(|r| format!("[{}]", r.join(", "))).collect();
            format!("[{}]", rows.join(", "))
        }
    }
}

fn matrix_text(m: &CMatrix) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|row| {
            format!(
                "[{}]",
                row.iter()
                    .map(|z| sig_complex(*z))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        m.row_iter()
            .map(|row| Value::Array(row.iter().map(|z| pair(*z)).collect()))
            .collect(),
    )
}

fn describe(path: &std::path::Path, output: Output, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load_problem(path)?;
    let sa = boundary::check_self_adjoint(&cfg.boundary).map_err(DetError::from)?;
    match output {
        Output::Text => write_describe_text(out, &cfg, &sa).map_err(io)?,
        Output::Json => print_json(out, &describe_json(&cfg, &sa))?,
    }
    Ok(EXIT_OK)
}

fn handling_name(h: ZeroModeHandling) -> &'static str {
    match h {
        ZeroModeHandling::Auto => "auto",
        ZeroModeHandling::Force => "force",
        ZeroModeHandling::Off => "off",
    }
}

fn oracle_text(o: OracleCheck) -> String {
    match o {
        OracleCheck::Off => "off".into(),
        OracleCheck::Product(n) => n.to_string(),
    }
}

fn separation(cfg: &ProblemConfig) -> &'static str {
    if cfg.boundary.is_separated() {
        "separated"
    } else {
        "non-separated"
    }
}

fn write_describe_text(
    out: &mut dyn Write,
    cfg: &ProblemConfig,
    sa: &SelfAdjointReport,
) -> std::io::Result<()> {
    writeln!(
        out,
        "interval = [{}, {}]",
        sig(cfg.interval.a),
        sig(cfg.interval.b)
    )?;
    writeln!(out, "components = {}", cfg.r)?;
    writeln!(out, "potential1 = {}", potential_text(&cfg.potential1))?;
    writeln!(out, "potential2 = {}", potential_text(&cfg.potential2))?;
    for (k, v) in &cfg.parameters {
        writeln!(out, "parameter {k} = {}", sig_complex(*v))?;
    }
    writeln!(
        out,
        "real_potentials = {}",
        cfg.p1.is_real() && cfg.p2.is_real()
    )?;
    writeln!(
        out,
        "boundary = {} ({})",
        cfg.boundary.kind(),
        separation(cfg)
    )?;
    writeln!(out, "M = {}", matrix_text(cfg.boundary.m()))?;
    writeln!(out, "N = {}", matrix_text(cfg.boundary.n()))?;
    writeln!(out, "self_adjoint = {}", sa.status)?;
    if let Some(case) = sa.pivot_case {
        writeln!(out, "pivot_case = {case}")?;
    }
    if !sa.brackets.is_empty() {
        let b: Vec<String> = sa.brackets.iter().map(|z| sig_complex(*z)).collect();
        writeln!(out, "brackets = [{}]", b.join(", "))?;
    }
    if !sa.violated.is_empty() {
        writeln!(out, "violated = {:?}", sa.violated)?;
    }
    let max_step = cfg
        .controls
        .max_step
        .map(sig)
        .unwrap_or_else(|| "default".into());
    writeln!(
        out,
        "solver = rtol {}, atol {}, max_step {max_step}",
        sig(cfg.controls.rtol),
        sig(cfg.controls.atol)
    )?;
    writeln!(
        out,
        "extract_zero_mode = {}",
        handling_name(cfg.extract_zero_mode)
    )?;
    writeln!(out, "oracle_check = {}", oracle_text(cfg.oracle_check))
}

fn describe_json(cfg: &ProblemConfig, sa: &SelfAdjointReport) -> Value {
    let potential = |p: &PotentialField| match p {
        PotentialField::Scalar(s) => json!(s),
        PotentialField::Matrix(rows) => json!(rows),
    };
    let params: Map<String, Value> = cfg
        .parameters
        .iter()
        .map(|(k, v)| (k.clone(), pair(*v)))
        .collect();
    json!({
        "interval": {"a": num(cfg.interval.a), "b": num(cfg.interval.b)},
        "r": cfg.r,
        "potential1": potential(&cfg.potential1),
        "potential2": potential(&cfg.potential2),
        "parameters": params,
        "real_potentials": cfg.p1.is_real() && cfg.p2.is_real(),
        "boundary": {
            "kind": cfg.boundary.kind().to_string(),
            "separated": cfg.boundary.is_separated(),
            "M": matrix_json(cfg.boundary.m()),
            "N": matrix_json(cfg.boundary.n()),
        },
        "self_adjoint": {
            "status": sa.status.to_string(),
            "pivot_case": sa.pivot_case,
            "brackets": sa.brackets.iter().map(|z| pair(*z)).collect::<Vec<_>>(),
            "violated": sa.violated,
        },
        "solver": {
            "rtol": num(cfg.controls.rtol),
            "atol": num(cfg.controls.atol),
            "max_step": cfg.controls.max_step.map(num),
        },
        "extract_zero_mode": handling_name(cfg.extract_zero_mode),
        "oracle_check": match cfg.oracle_check {
            OracleCheck::Off => json!("off"),
            OracleCheck::Product(n) => json!(n),
        },
    })
}
