//! Problem files: JSON with interval, potentials, boundary conditions and
//! solver settings.

use std::collections::BTreeMap;
use std::path::Path;

use detline_core::boundary::{BoundaryError, BoundaryKind, BoundarySpec};
use detline_core::expr::Params;
use detline_core::linalg::{c, CMatrix};
use detline_core::odeprop::{Potential, ProblemError};
use detline_core::{Controls, Problem, ZeroModeHandling};
use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_RTOL: f64 = 1e-10;
pub const DEFAULT_ATOL: f64 = 1e-12;
pub const RTOL_ENV: &str = "DETLINE_RTOL";
/// Twisted boundaries need `b − a = l` to this relative accuracy.
const LENGTH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("field `{field}`: {source}")]
    Expression { field: String, source: ProblemError },
    #[error("field `boundary`: {0}")]
    Boundary(#[from] BoundaryError),
    #[error("environment variable {RTOL_ENV}: {0}")]
    Env(String),
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum PotentialField {
    Scalar(String),
    Matrix(Vec<Vec<String>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixField {
    Rows(Vec<Vec<[f64; 2]>>),
    Flat(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryField {
    pub kind: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub mu: Option<f64>,
    pub l: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<MatrixField>,
    #[serde(rename = "N")]
    pub n: Option<MatrixField>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverField {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_step: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleCheck {
    Off,
    Product(usize),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum OracleField {
    Word(String),
    Count(usize),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    interval: Interval,
    r: Option<usize>,
    potential1: PotentialField,
    potential2: PotentialField,
    #[serde(default)]
    parameters: BTreeMap<String, [f64; 2]>,
    boundary: BoundaryField,
    #[serde(default)]
    solver: SolverField,
    extract_zero_mode: Option<String>,
    oracle_check: Option<OracleField>,
}

/// A validated problem file.
#[derive(Clone, Debug)]
pub struct ProblemConfig {
    pub interval: Interval,
    pub r: usize,
    pub potential1: PotentialField,
    pub potential2: PotentialField,
    pub parameters: BTreeMap<String, Complex64>,
    pub p1: Problem,
    pub p2: Problem,
    pub boundary: BoundarySpec,
    pub controls: Controls,
    pub extract_zero_mode: ZeroModeHandling,
    pub oracle_check: OracleCheck,
}

pub fn load_problem(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let env_rtol = std::env::var(RTOL_ENV).ok();
    parse_problem(&text, &path.display().to_string(), env_rtol.as_deref())
}

/// Parse and validate problem text. `env_rtol` is the DETLINE_RTOL value, used
/// when the file does not set `solver.rtol`.
pub fn parse_problem(
    text: &str,
    origin: &str,
    env_rtol: Option<&str>,
) -> Result<ProblemConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw, env_rtol)
}

fn potential(field: &str, p: &PotentialField, r: usize) -> Result<Potential, ConfigError> {
    let expression = |source| ConfigError::Expression {
        field: field.to_string(),
        source,
    };
    match p {
        PotentialField::Scalar(s) if r == 1 => Potential::parse_scalar(s).map_err(expression),
        PotentialField::Scalar(_) => Err(schema(
            field,
            format!("expected a {r}×{r} matrix of expressions"),
        )),
        PotentialField::Matrix(rows) => {
            if rows.len() != r || rows.iter().any(|row| row.len() != r) {
                let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
                return Err(schema(
                    field,
                    format!("expected {r}×{r}, got {}×{cols}", rows.len()),
                ));
            }
            Potential::parse_matrix(rows).map_err(expression)
        }
    }
}

fn matrix(field: &str, m: &MatrixField, size: usize) -> Result<CMatrix, ConfigError> {
    let entries: Vec<[f64; 2]> = match m {
        MatrixField::Rows(rows) => {
            if rows.len() != size || rows.iter().any(|row| row.len() != size) {
                let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
                return Err(schema(
                    field,
                    format!("expected {size}×{size}, got {}×{cols}", rows.len()),
                ));
            }
            rows.iter().flatten().copied().collect()
        }
        MatrixField::Flat(v) => {
            if v.len() != size * size {
                return Err(schema(
                    field,
                    format!(
                        "expected {} entries ({size}×{size}), got {}",
                        size * size,
                        v.len()
                    ),
                ));
            }
            v.clone()
        }
    };
    if entries.iter().flatten().any(|x| !x.is_finite()) {
        return Err(schema(field, "entries must be finite"));
    }
    Ok(CMatrix::from_row_iterator(
        size,
        size,
        entries.iter().map(|&[re, im]| c(re, im)),
    ))
}

fn real_parameter(
    params: &BTreeMap<String, Complex64>,
    name: &str,
) -> Result<Option<f64>, ConfigError> {
    match params.get(name) {
        None => Ok(None),
        Some(z) if z.im == 0.0 => Ok(Some(z.re)),
        Some(_) => Err(schema(
            format!("parameters.{name}"),
            "must be real for the twisted boundary",
        )),
    }
}

fn boundary(
    b: &BoundaryField,
    r: usize,
    interval: &Interval,
    params: &BTreeMap<String, Complex64>,
) -> Result<BoundarySpec, ConfigError> {
    let explicit = b.m.is_some() || b.n.is_some();
    let kind = match (&b.kind, explicit) {
        (Some(k), false) => k.to_ascii_lowercase(),
        (Some(k), true) if k.eq_ignore_ascii_case("custom") => "custom".into(),
        (Some(_), true) => {
            return Err(schema(
                "boundary",
                "give either a named kind or explicit M and N, not both",
            ))
        }
        (None, true) => "custom".into(),
        (None, false) => return Err(schema("boundary.kind", "missing")),
    };
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| schema(format!("boundary.{name}"), "missing"));
    let named = |k| BoundarySpec::named(k, r).map_err(ConfigError::from);
    match kind.as_str() {
        "dirichlet" => named(BoundaryKind::Dirichlet),
        "neumann" => named(BoundaryKind::Neumann),
        "periodic" => named(BoundaryKind::Periodic),
        "robin" => named(BoundaryKind::Robin {
            a: need(b.a, "a")?,
            b: need(b.b, "b")?,
            c: need(b.c, "c")?,
            d: need(b.d, "d")?,
        }),
        "twisted" => {
            let mu = need(b.mu.or(real_parameter(params, "mu")?), "mu")?;
            let l = need(b.l.or(real_parameter(params, "l")?), "l")?;
            let length = interval.b - interval.a;
            if (length - l).abs() > LENGTH_TOLERANCE * l.abs().max(1.0) {
                return Err(schema(
                    "boundary.l",
                    format!("twisted boundary needs b − a = l, got b − a = {length} and l = {l}"),
                ));
            }
            named(BoundaryKind::Twisted { mu, l })
        }
        "custom" => {
            let m =
                b.m.as_ref()
                    .ok_or_else(|| schema("boundary.M", "missing"))?;
            let n =
                b.n.as_ref()
                    .ok_or_else(|| schema("boundary.N", "missing"))?;
            Ok(BoundarySpec::custom(
                r,
                matrix("boundary.M", m, 2 * r)?,
                matrix("boundary.N", n, 2 * r)?,
            )?)
        }
        other => Err(schema("boundary.kind", format!("unknown kind `{other}`"))),
    }
}

fn tolerance(field: &str, v: f64) -> Result<f64, ConfigError> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(schema(field, format!("{v} must be positive and finite")));
    }
    Ok(v)
}

fn controls(s: &SolverField, env_rtol: Option<&str>) -> Result<Controls, ConfigError> {
    let rtol = match (s.rtol, env_rtol) {
        (Some(v), _) => tolerance("solver.rtol", v)?,
        (None, Some(text)) => {
            let v: f64 = text
                .trim()
                .parse()
                .map_err(|_| ConfigError::Env(format!("`{text}` is not a number")))?;
            tolerance(RTOL_ENV, v).map_err(|e| ConfigError::Env(e.to_string()))?
        }
        (None, None) => DEFAULT_RTOL,
    };
    let mut ctl = Controls::default().with_rtol(rtol).with_atol(DEFAULT_ATOL);
    if let Some(v) = s.atol {
        ctl.atol = tolerance("solver.atol", v)?;
    }
    if let Some(v) = s.max_step {
        ctl.max_step = Some(tolerance("solver.max_step", v)?);
    }
    ctl.validate()
        .map_err(|e| schema("solver", e.to_string()))?;
    Ok(ctl)
}

fn validate(raw: RawConfig, env_rtol: Option<&str>) -> Result<ProblemConfig, ConfigError> {
    let Interval { a, b } = raw.interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(schema(
            "interval",
            format!("need finite a < b, got a = {a}, b = {b}"),
        ));
    }
    let inferred = match &raw.potential1 {
        PotentialField::Scalar(_) => 1,
        PotentialField::Matrix(rows) => rows.len(),
    };
    let r = raw.r.unwrap_or(inferred);
    if r == 0 {
        return Err(schema("r", "must be at least 1"));
    }
    let parameters: BTreeMap<String, Complex64> = raw
        .parameters
        .iter()
        .map(|(k, &[re, im])| (k.clone(), c(re, im)))
        .collect();
    if let Some((k, _)) = parameters
        .iter()
        .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(schema(format!("parameters.{k}"), "must be finite"));
    }
    let params: Params = parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let build = |field: &str, pf: &PotentialField| -> Result<Problem, ConfigError> {
        Problem::new(a, b, potential(field, pf, r)?, params.clone()).map_err(|source| {
            ConfigError::Expression {
                field: field.to_string(),
                source,
            }
        })
    };
    let p1 = build("potential1", &raw.potential1)?;
    let p2 = build("potential2", &raw.potential2)?;
    let boundary = boundary(&raw.boundary, r, &raw.interval, &parameters)?;
    let controls = controls(&raw.solver, env_rtol)?;
    let extract_zero_mode = match raw
        .extract_zero_mode
        .as_deref()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        None | Some("auto") => ZeroModeHandling::Auto,
        Some("force") => ZeroModeHandling::Force,
        Some("off") => ZeroModeHandling::Off,
        Some(other) => {
            return Err(schema(
                "extract_zero_mode",
                format!("expected auto, force or off, got `{other}`"),
            ))
        }
    };
    let oracle_check = match raw.oracle_check {
        None => OracleCheck::Off,
        Some(OracleField::Word(w)) if w.eq_ignore_ascii_case("off") => OracleCheck::Off,
        Some(OracleField::Word(w)) => {
            return Err(schema(
                "oracle_check",
                format!("expected off or a count, got `{w}`"),
            ))
        }
        Some(OracleField::Count(0)) => {
            return Err(schema("oracle_check", "count must be positive"))
        }
        Some(OracleField::Count(n)) => OracleCheck::Product(n),
    };
    Ok(ProblemConfig {
        interval: raw.interval,
        r,
        potential1: raw.potential1,
        potential2: raw.potential2,
        parameters,
        p1,
        p2,
        boundary,
        controls,
        extract_zero_mode,
        oracle_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
        parse_problem(text, "test.json", None)
    }

    #[test]
    fn minimal_airy_file() {
        let cfg = parse(r#"{"interval":{"a":0,"b":1},"r":1,"potential1":"x","potential2":"0","boundary":{"kind":"dirichlet"}}"#)
            .unwrap();
        assert_eq!(cfg.r, 1);
        assert_eq!(cfg.controls.rtol, DEFAULT_RTOL);
        assert_eq!(cfg.controls.atol, DEFAULT_ATOL);
        assert_eq!(cfg.extract_zero_mode, ZeroModeHandling::Auto);
        assert_eq!(cfg.oracle_check, OracleCheck::Off);
        assert!(cfg.boundary.is_separated());
    }

    #[test]
    fn wrong_boundary_shape_names_the_field() {
        let text = r#"{"interval":{"a":0,"b":1},"potential1":"x","potential2":"0",
            "boundary":{"M":[[[1,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]],
                        "N":[[[0,0],[0,0]],[[1,0],[0,0]]]}}"#;
        let err = parse(text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Schema { field, .. } if field == "boundary.M"),
            "{err}"
        );
    }

    const TWISTED: &str = r#"{"interval":{"a":-2,"b":2},"r":2,
        "potential1":[["1 - 2*mu^2","(1 - mu^2)*exp(2*i*mu*x)"],["(1 - mu^2)*exp(-2*i*mu*x)","1 - 2*mu^2"]],
        "potential2":[["0","0"],["0","0"]],
        "parameters":{"mu":[0.3,0],"l":[L,0]},
        "boundary":{"kind":"twisted"}}"#;

    #[test]
    fn twisted_length_is_checked() {
        let cfg = parse(&TWISTED.replace('L', "4")).unwrap();
        assert_eq!(cfg.r, 2);
        assert!(
            matches!(cfg.boundary.kind(), BoundaryKind::Twisted { mu, l } if *mu == 0.3 && *l == 4.0)
        );
        let err = parse(&TWISTED.replace('L', "3")).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Schema { field, .. } if field == "boundary.l"),
            "{err}"
        );
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("{\n  \"interval\": {\"a\": 0,, }\n}").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_expression_names_the_potential() {
        let text = r#"{"interval":{"a":0,"b":1},"potential1":"x +","potential2":"0","boundary":{"kind":"dirichlet"}}"#;
        let err = parse(text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Expression { field, .. } if field == "potential1"),
            "{err}"
        );
    }

    #[test]
    fn rtol_precedence() {
        let base = r#"{"interval":{"a":0,"b":1},"potential1":"x","potential2":"0","boundary":{"kind":"dirichlet"}SOLVER}"#;
        let plain = base.replace("SOLVER", "");
        let with_file = base.replace("SOLVER", r#","solver":{"rtol":1e-8}"#);
        assert_eq!(
            parse_problem(&plain, "t", Some("1e-9"))
                .unwrap()
                .controls
                .rtol,
            1e-9
        );
        assert_eq!(
            parse_problem(&with_file, "t", Some("1e-9"))
                .unwrap()
                .controls
                .rtol,
            1e-8
        );
        assert!(matches!(
            parse_problem(&plain, "t", Some("tight")),
            Err(ConfigError::Env(_))
        ));
        assert!(parse_problem(&plain, "t", Some("1e-2")).is_err());
    }

    #[test]
    fn task_hints() {
        let base = r#"{"interval":{"a":0,"b":1},"potential1":"x","potential2":"0","boundary":{"kind":"robin","a":1,"b":2,"c":3,"d":4}HINTS}"#;
        let cfg =
            parse(&base.replace("HINTS", r#","extract_zero_mode":"force","oracle_check":50"#))
                .unwrap();
        assert_eq!(cfg.extract_zero_mode, ZeroModeHandling::Force);
        assert_eq!(cfg.oracle_check, OracleCheck::Product(50));
        assert!(parse(&base.replace("HINTS", r#","extract_zero_mode":"maybe""#)).is_err());
        assert!(parse(&base.replace("HINTS", r#","unknown":1"#)).is_err());
        assert!(parse(&base.replace(r#","d":4"#, "").replace("HINTS", "")).is_err());
    }

    #[test]
    fn flat_custom_matrices() {
        let text = r#"{"interval":{"a":0,"b":1},"potential1":"0","potential2":"1",
            "boundary":{"M":[[1,0],[0,0],[0,0],[0,0]],"N":[[0,0],[0,0],[1,0],[0,0]]}}"#;
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.boundary.m(), BoundarySpec::dirichlet(1).m());
        assert_eq!(cfg.boundary.n(), BoundarySpec::dirichlet(1).n());
    }
}
