//! Built-in regression table of reference values.

use std::f64::consts::PI;
use std::io::Write;

use detline_core::expr::Params;
use detline_core::gelfand::{det_ratio, RatioOptions};
use detline_core::linalg::real;
use detline_core::odeprop::Potential;
use detline_core::oracle::{airy_dirichlet_ratio, eigenvalue_scan, ScanOptions};
use detline_core::zeromode::{det_ratio_primed, ratio, ZeroModeHandling};
use detline_core::{BoundarySpec, DetError, Problem};
use serde_json::{json, Value};

use crate::format::{num, sig};
use crate::{print_json, Failure, EXIT_COMPUTATION, EXIT_OK};

#[derive(Clone, Copy, Debug)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    fn accepts(self, got: f64, want: f64) -> bool {
        match self {
            Tolerance::Absolute(t) => (got - want).abs() <= t,
            Tolerance::Relative(t) => (got - want).abs() <= t * want.abs(),
        }
    }

    fn label(self) -> String {
        match self {
            Tolerance::Absolute(t) => format!("±{t:e}"),
            Tolerance::Relative(t) => format!("±{t:e} rel"),
        }
    }
}

pub struct Case {
    pub name: &'static str,
    pub expected: f64,
    pub tolerance: Tolerance,
    pub compute: fn() -> Result<f64, DetError>,
}

pub struct Outcome {
    pub name: &'static str,
    pub expected: f64,
    pub tolerance: Tolerance,
    pub computed: Result<f64, DetError>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        matches!(self.computed, Ok(v) if self.tolerance.accepts(v, self.expected))
    }
}

fn scalar(q: &str) -> Result<Problem, DetError> {
    Ok(Problem::scalar(0.0, 1.0, q)?)
}

fn opts() -> RatioOptions {
    RatioOptions::default()
}

fn airy_ratio() -> Result<f64, DetError> {
    Ok(det_ratio(
        &scalar("x")?,
        &scalar("0")?,
        &BoundarySpec::dirichlet(1),
        &opts(),
    )?
    .value())
}

fn airy_vs_reference() -> Result<f64, DetError> {
    Ok(airy_ratio()? - airy_dirichlet_ratio(0.0)?)
}

fn airy_lowest() -> Result<f64, DetError> {
    Ok(eigenvalue_scan(
        &scalar("x")?,
        &BoundarySpec::dirichlet(1),
        1,
        &ScanOptions::default(),
    )?
    .eigenvalues[0])
}

fn airy_zero_mode() -> Result<f64, DetError> {
    let x0 = airy_lowest()?;
    let p1 = scalar(&format!("x - ({x0:e})"))?;
    Ok(det_ratio_primed(&p1, &scalar("0")?, &BoundarySpec::dirichlet(1), &opts())?.value())
}

fn dirichlet_zero_mode() -> Result<f64, DetError> {
    Ok(det_ratio_primed(
        &scalar("-pi^2")?,
        &scalar("0")?,
        &BoundarySpec::dirichlet(1),
        &opts(),
    )?
    .value())
}

fn periodic_zero_mode() -> Result<f64, DetError> {
    Ok(det_ratio_primed(
        &scalar("0")?,
        &scalar("1")?,
        &BoundarySpec::periodic(1),
        &opts(),
    )?
    .value())
}

fn periodic_plain() -> Result<f64, DetError> {
    Ok(det_ratio(
        &scalar("1")?,
        &scalar("4")?,
        &BoundarySpec::periodic(1),
        &opts(),
    )?
    .value())
}

fn free_third_eigenvalue() -> Result<f64, DetError> {
    Ok(eigenvalue_scan(
        &scalar("0")?,
        &BoundarySpec::dirichlet(1),
        3,
        &ScanOptions::default(),
    )?
    .eigenvalues[2])
}

const MU: f64 = 0.3;
const L: f64 = 4.0;

fn twisted_f10() -> Result<f64, DetError> {
    let q = Potential::parse_matrix(&[
        vec!["1 - 2*mu^2", "(1 - mu^2)*exp(2*i*mu*x)"],
        vec!["(1 - mu^2)*exp(-2*i*mu*x)", "1 - 2*mu^2"],
    ])?;
    let mut params = Params::new();
    params.insert("mu".into(), real(MU));
    let p1 = Problem::new(-L / 2.0, L / 2.0, q, params)?;
    let p2 = Problem::new(
        -L / 2.0,
        L / 2.0,
        Potential::parse_matrix(&[vec!["0", "0"], vec!["0", "0"]])?,
        Params::new(),
    )?;
    let bc = BoundarySpec::twisted(MU, L)?;
    Ok(ratio(&p1, &p2, &bc, ZeroModeHandling::Force, &opts())?
        .numerator
        .re)
}

fn twisted_closed_form() -> f64 {
    let nu = (2.0 * (1.0 - 3.0 * MU * MU)).sqrt();
    8.0 * L * L * (1.0 - MU * MU) * (L * nu / 2.0).sinh().powi(2) / (nu * nu)
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "airy_dirichlet_ratio",
            expected: 1.085,
            tolerance: Tolerance::Absolute(1e-3),
            compute: airy_ratio,
        },
        Case {
            name: "airy_ratio_vs_series",
            expected: 0.0,
            tolerance: Tolerance::Absolute(1e-9),
            compute: airy_vs_reference,
        },
        Case {
            name: "airy_lowest_eigenvalue",
            expected: 10.3685,
            tolerance: Tolerance::Absolute(1e-3),
            compute: airy_lowest,
        },
        Case {
            name: "airy_zero_mode_ratio",
            expected: 0.050666,
            tolerance: Tolerance::Absolute(1e-4),
            compute: airy_zero_mode,
        },
        Case {
            name: "dirichlet_zero_mode_ratio",
            expected: 0.5 / (PI * PI),
            tolerance: Tolerance::Absolute(1e-8),
            compute: dirichlet_zero_mode,
        },
        Case {
            name: "periodic_zero_mode_ratio",
            expected: 1.0 / (4.0 * 0.5f64.sinh().powi(2)),
            tolerance: Tolerance::Absolute(1e-8),
            compute: periodic_zero_mode,
        },
        Case {
            name: "periodic_plain_ratio",
            expected: 0.5f64.sinh().powi(2) / 1f64.sinh().powi(2),
            tolerance: Tolerance::Absolute(1e-8),
            compute: periodic_plain,
        },
        Case {
            name: "free_dirichlet_third_eigenvalue",
            expected: 9.0 * PI * PI,
            tolerance: Tolerance::Relative(1e-9),
            compute: free_third_eigenvalue,
        },
        Case {
            name: "twisted_two_component_f10",
            expected: twisted_closed_form(),
            tolerance: Tolerance::Relative(1e-6),
            compute: twisted_f10,
        },
    ]
}

pub fn evaluate() -> Vec<Outcome> {
    cases()
        .into_iter()
        .map(|c| Outcome {
            name: c.name,
            expected: c.expected,
            tolerance: c.tolerance,
            computed: (c.compute)(),
        })
        .collect()
}

pub(crate) fn run(as_json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let outcomes = evaluate();
    let all = outcomes.iter().all(Outcome::passed);
    if as_json {
        let rows: Vec<Value> = outcomes
            .iter()
            .map(|o| {
                json!({
                    "name": o.name,
                    "expected": num(o.expected),
                    "computed": o.computed.as_ref().map(|&v| num(v)).unwrap_or(Value::Null),
                    "error": o.computed.as_ref().err().map(|e| e.to_string()),
                    "tolerance": o.tolerance.label(),
                    "pass": o.passed(),
                })
            })
            .collect();
        print_json(out, &json!({ "pass": all, "cases": rows }))?;
    } else {
        write_table(out, &outcomes).map_err(crate::io)?;
    }
    Ok(if all { EXIT_OK } else { EXIT_COMPUTATION })
}

fn write_table(out: &mut dyn Write, outcomes: &[Outcome]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<34} {:>18} {:>18} {:>14}  status",
        "case", "expected", "computed", "tolerance"
    )?;
    for o in outcomes {
        let computed = match &o.computed {
            Ok(v) => sig(*v),
            Err(_) => "error".into(),
        };
        let status = if o.passed() { "PASS" } else { "FAIL" };
        writeln!(
            out,
            "{:<34} {:>18} {:>18} {:>14}  {status}",
            o.name,
            sig(o.expected),
            computed,
            o.tolerance.label()
        )?;
        if let Err(e) = &o.computed {
            writeln!(out, "    {e}")?;
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    writeln!(out, "{passed}/{} passed", outcomes.len())
}
