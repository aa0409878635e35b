//! Ratios `det L₁ / det L₂` from boundary values of solutions at `λ = 0`.

use num_complex::Complex64;

use crate::boundary::{self, BoundarySpec, SelfAdjointStatus};
use crate::error::DetError;
use crate::exec::{self, Execution};
use crate::linalg::{self, real};
use crate::odeprop::{
    propagate_fundamental, Controls, FundamentalSolution, IntegratorStats, Problem,
};

/// `|det(M + N·Y(b))| ≤ tol · max(1, ‖M + N·Y(b)‖∞)` flags a zero mode.
pub const ZERO_MODE_TOLERANCE: f64 = 1e-8;
/// Imaginary parts below this (relative) are treated as rounding.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RatioOptions {
    pub controls: Controls,
    pub zero_mode_tolerance: f64,
    pub execution: Execution,
    /// Boundary row left unsatisfied by the zero-mode normalization; `None`
    /// means the last row, falling back to earlier rows if degenerate.
    pub designated_row: Option<usize>,
    /// Permit extraction when self-adjointness cannot be checked (r > 1).
    pub allow_unverified: bool,
}

impl Default for RatioOptions {
    fn default() -> Self {
        RatioOptions {
            controls: Controls::default(),
            zero_mode_tolerance: ZERO_MODE_TOLERANCE,
            execution: Execution::default(),
            designated_row: None,
            allow_unverified: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioPath {
    Plain,
    ZeroModeExtracted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BCase {
    /// One of the six scalar cases, 1-based.
    Table(u8),
    /// Boundary-form solve used for systems.
    System,
}

impl std::fmt::Display for BCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BCase::Table(k) => write!(f, "{k}"),
            BCase::System => f.write_str("system"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetRatioReport {
    pub ratio: Complex64,
    pub path: RatioPath,
    pub zero_mode_numerator: bool,
    pub zero_mode_reference: bool,
    /// `det(M + N·Y₁(b))` on the plain path, `f₁,₀ = −𝓑⟨y₁|y₁⟩` when extracted.
    pub numerator: Complex64,
    /// `det(M + N·Y₂(b))`.
    pub denominator: Complex64,
    pub numerator_residual: f64,
    pub b_case: Option<BCase>,
    pub b_constant: Option<Complex64>,
    pub zero_mode_norm: Option<f64>,
    pub self_adjoint: SelfAdjointStatus,
    pub stats: Vec<IntegratorStats>,
    pub warnings: Vec<String>,
}

impl DetRatioReport {
    /// Real part, the reported answer.
    pub fn value(&self) -> f64 {
        self.ratio.re
    }

    pub fn is_real(&self) -> bool {
        self.ratio.im.abs() <= IMAGINARY_TOLERANCE * (1.0 + self.ratio.norm())
    }
}

/// Characteristic value at `λ = 0` together with its zero-mode screening.
#[derive(Clone, Debug)]
pub struct ZeroModeScreen {
    pub detected: bool,
    pub value: Complex64,
    /// `|det(M + N·Y(b))|`.
    pub residual: f64,
    pub threshold: f64,
    pub fundamental: FundamentalSolution,
}

pub(crate) fn check_compatible(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
) -> Result<(), DetError> {
    if p1.interval() != p2.interval() {
        return Err(DetError::Mismatch(format!(
            "intervals differ: {:?} vs {:?}",
            p1.interval(),
            p2.interval()
        )));
    }
    if p1.components() != p2.components() || p1.components() != bc.components() {
        return Err(DetError::Mismatch(format!(
            "component counts differ: L1 r = {}, L2 r = {}, boundary r = {}",
            p1.components(),
            p2.components(),
            bc.components()
        )));
    }
    Ok(())
}

pub fn screen(
    p: &Problem,
    bc: &BoundarySpec,
    tol: f64,
    controls: &Controls,
) -> Result<ZeroModeScreen, DetError> {
    let fundamental = propagate_fundamental(p, real(0.0), controls)?;
    screen_fundamental(bc, fundamental, tol)
}

pub(crate) fn screen_fundamental(
    bc: &BoundarySpec,
    fundamental: FundamentalSolution,
    tol: f64,
) -> Result<ZeroModeScreen, DetError> {
    let value = boundary::characteristic(bc, &fundamental)?;
    let scale = linalg::norm_inf(&bc.boundary_matrix(&fundamental.end)).max(1.0);
    let residual = value.norm();
    let threshold = tol * scale;
    Ok(ZeroModeScreen {
        detected: residual <= threshold,
        value,
        residual,
        threshold,
        fundamental,
    })
}

pub(crate) fn screen_pair(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
    opts: &RatioOptions,
) -> Result<(ZeroModeScreen, ZeroModeScreen), DetError> {
    check_compatible(p1, p2, bc)?;
    opts.controls.validate()?;
    let tol = opts.zero_mode_tolerance;
    let (s1, s2) = exec::join(
        opts.execution,
        || screen(p1, bc, tol, &opts.controls),
        || screen(p2, bc, tol, &opts.controls),
    );
    Ok((s1?, s2?))
}

pub(crate) fn self_adjoint_status(bc: &BoundarySpec) -> Result<SelfAdjointStatus, DetError> {
    Ok(boundary::check_self_adjoint(bc)?.status)
}

/// `det(M + N·Y₁(b)) / det(M + N·Y₂(b))` with `Y_j` the fundamental matrix at `λ = 0`.
pub fn det_ratio(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
    opts: &RatioOptions,
) -> Result<DetRatioReport, DetError> {
    let (s1, s2) = screen_pair(p1, p2, bc, opts)?;
    if s2.detected {
        return Err(DetError::ZeroModeInReference {
            residual: s2.residual,
        });
    }
    if s1.detected {
        return Err(DetError::ZeroModeInNumerator {
            residual: s1.residual,
        });
    }
    let ratio = s1.value / s2.value;
    let mut warnings = Vec::new();
    if p1.is_real()
        && p2.is_real()
        && bc.is_real()
        && ratio.im.abs() > IMAGINARY_TOLERANCE * (1.0 + ratio.norm())
    {
        warnings.push(format!("imaginary residue {:.3e} on real input", ratio.im));
    }
    Ok(DetRatioReport {
        ratio,
        path: RatioPath::Plain,
        zero_mode_numerator: false,
        zero_mode_reference: false,
        numerator: s1.value,
        denominator: s2.value,
        numerator_residual: s1.residual,
        b_case: None,
        b_constant: None,
        zero_mode_norm: None,
        self_adjoint: self_adjoint_status(bc)?,
        stats: vec![s1.fundamental.stats, s2.fundamental.stats],
        warnings,
    })
}

/// `y₁(b)/y₂(b)` for the solutions with `y(a) = 0`, `y′(a) = 1`.
///
/// With other initial slopes `c_j` the ratio picks up the factor `c₂/c₁`.
pub fn dirichlet_ratio(p1: &Problem, p2: &Problem, opts: &RatioOptions) -> Result<f64, DetError> {
    if p1.components() != 1 {
        return Err(DetError::Mismatch(format!(
            "Dirichlet ratio needs r = 1, got r = {}",
            p1.components()
        )));
    }
    let bc = BoundarySpec::dirichlet(1);
    let (s1, s2) = screen_pair(p1, p2, &bc, opts)?;
    if s2.detected {
        return Err(DetError::ZeroModeInReference {
            residual: s2.residual,
        });
    }
    if s1.detected {
        return Err(DetError::ZeroModeInNumerator {
            residual: s1.residual,
        });
    }
    Ok((s1.fundamental.u_end(0, 1) / s2.fundamental.u_end(0, 1)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryKind;

    fn opts() -> RatioOptions {
        RatioOptions::default()
    }

    #[test]
    fn identical_operators_give_one() {
        let p = Problem::scalar(0.0, 1.0, "1 + x*x").unwrap();
        for bc in [
            BoundarySpec::dirichlet(1),
            BoundarySpec::neumann(1),
            BoundarySpec::robin(1.0, 2.0, 3.0, 4.0).unwrap(),
            BoundarySpec::periodic(1),
        ] {
            let rep = det_ratio(&p, &p, &bc, &opts()).unwrap();
            assert!((rep.ratio - 1.0).norm() < 1e-12, "{:?}", bc.kind());
        }
    }

    #[test]
    fn periodic_constant_potentials() {
        let p1 = Problem::scalar(0.0, 1.0, "1").unwrap();
        let p2 = Problem::scalar(0.0, 1.0, "4").unwrap();
        let rep = det_ratio(&p1, &p2, &BoundarySpec::periodic(1), &opts()).unwrap();
        let want = 0.5f64.sinh().powi(2) / 1.0f64.sinh().powi(2);
        assert!(
            (rep.value() - want).abs() < 1e-8,
            "{} vs {want}",
            rep.value()
        );
        assert!(rep.is_real());
        assert_eq!(rep.self_adjoint, SelfAdjointStatus::Pass);
    }

    #[test]
    fn zero_modes_are_rejected() {
        let zero = Problem::scalar(0.0, 1.0, "-pi^2").unwrap();
        let free = Problem::scalar(0.0, 1.0, "0").unwrap();
        let bc = BoundarySpec::dirichlet(1);
        assert!(matches!(
            det_ratio(&zero, &free, &bc, &opts()),
            Err(DetError::ZeroModeInNumerator { .. })
        ));
        assert!(matches!(
            det_ratio(&free, &zero, &bc, &opts()),
            Err(DetError::ZeroModeInReference { .. })
        ));
    }

    #[test]
    fn mismatched_operators() {
        let p1 = Problem::scalar(0.0, 1.0, "0").unwrap();
        let p2 = Problem::scalar(0.0, 2.0, "0").unwrap();
        assert!(matches!(
            det_ratio(&p1, &p2, &BoundarySpec::dirichlet(1), &opts()),
            Err(DetError::Mismatch(_))
        ));
        let bc2 = BoundarySpec::named(BoundaryKind::Dirichlet, 2).unwrap();
        assert!(matches!(
            det_ratio(&p1, &p1, &bc2, &opts()),
            Err(DetError::Mismatch(_))
        ));
    }

    #[test]
    fn dirichlet_ratio_matches_general_form() {
        let p1 = Problem::scalar(0.0, 1.0, "x").unwrap();
        let p2 = Problem::scalar(0.0, 1.0, "0").unwrap();
        let d = dirichlet_ratio(&p1, &p2, &opts()).unwrap();
        let g = det_ratio(&p1, &p2, &BoundarySpec::dirichlet(1), &opts()).unwrap();
        assert!((d - g.value()).abs() < 1e-12);
        assert!((d - 1.085).abs() < 1e-3);
    }

    #[test]
    fn sequential_matches_parallel() {
        let p1 = Problem::scalar(0.0, 1.0, "x").unwrap();
        let p2 = Problem::scalar(0.0, 1.0, "0").unwrap();
        let seq = RatioOptions {
            execution: Execution::Sequential,
            ..opts()
        };
        let a = det_ratio(&p1, &p2, &BoundarySpec::dirichlet(1), &seq).unwrap();
        let b = det_ratio(&p1, &p2, &BoundarySpec::dirichlet(1), &opts()).unwrap();
        assert_eq!(a.ratio, b.ratio);
    }
}
