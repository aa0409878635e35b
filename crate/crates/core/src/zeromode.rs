//! Zero-mode extraction: `det′L₁ / det L₂ = −𝓑⟨y₁|y₁⟩ / det(M + N·Y₂(b))`.
//!
//! The zero mode `y₁` is normalized so that every boundary row except a
//! designated one is satisfied identically in `λ`, which makes the designated
//! row equal to the characteristic function. Green's identity then gives
//! `det(M + N·H_λ(b)) = 𝓑·λ⟨y₁|u_λ⟩`.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::boundary::{self, BoundaryKind, BoundarySpec, SelfAdjointStatus};
use crate::error::DetError;
use crate::gelfand::{self, BCase, DetRatioReport, RatioOptions, RatioPath, ZeroModeScreen};
use crate::linalg::{self, real, CMatrix};
use crate::odeprop::{
    inner_product, propagate_combination, propagate_fundamental, Controls, Problem, Trajectory,
};

/// Table cases must agree to this relative precision.
pub const B_CASE_AGREEMENT: f64 = 1e-8;
const COEFFICIENT_FLOOR: f64 = 1e-12;
const CANCELLATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroModeDetection {
    pub detected: bool,
    pub residual: f64,
    pub threshold: f64,
    pub value: Complex64,
}

/// Flags `|det(M + N·Y(b))| ≤ tol · max(1, ‖M + N·Y(b)‖∞)`.
pub fn detect_zero_mode(
    p: &Problem,
    bc: &BoundarySpec,
    tol: f64,
    controls: &Controls,
) -> Result<ZeroModeDetection, DetError> {
    let s = gelfand::screen(p, bc, tol, controls)?;
    Ok(ZeroModeDetection {
        detected: s.detected,
        residual: s.residual,
        threshold: s.threshold,
        value: s.value,
    })
}

#[derive(Clone, Debug)]
pub struct ZeroModeData {
    /// Boundary conditions the normalization refers to. Equal to the input
    /// except for scalar problems normalized on the first row, where the two
    /// rows are exchanged so that the unsatisfied row is last.
    pub frame: BoundarySpec,
    pub rows_swapped: bool,
    pub designated_row: usize,
    /// Initial data `(y(a), y′(a))`.
    pub coefficients: Vec<Complex64>,
    pub trajectory: Trajectory,
    /// `⟨y₁|y₁⟩`.
    pub norm: f64,
    /// `|det(M + N·Y(b))|`.
    pub residual: f64,
    /// `‖[M | N]·(y(a), y′(a), y(b), y′(b))‖ / max(1, ‖data‖)`.
    pub boundary_residual: f64,
}

impl ZeroModeData {
    pub fn components(&self) -> usize {
        self.trajectory.components
    }

    pub fn y_a(&self, comp: usize) -> Complex64 {
        self.trajectory.u_start(comp)
    }

    pub fn dy_a(&self, comp: usize) -> Complex64 {
        self.trajectory.v_start(comp)
    }

    pub fn y_b(&self, comp: usize) -> Complex64 {
        self.trajectory.u_end(comp)
    }

    pub fn dy_b(&self, comp: usize) -> Complex64 {
        self.trajectory.v_end(comp)
    }

    /// Boundary data `(y(a), y′(a), y(b), y′(b))`.
    pub fn stacked(&self) -> Vec<Complex64> {
        self.trajectory
            .initial
            .iter()
            .chain(&self.trajectory.end)
            .copied()
            .collect()
    }
}

fn coefficient_scale(a: &CMatrix) -> f64 {
    linalg::max_abs(a).max(1.0).powi(a.nrows() as i32 - 1)
}

/// Initial data `adj(M + N·H_λ(b))·e_row` for the given frame, or `None`
/// when every coefficient is negligible.
fn normalizing_data(bc: &BoundarySpec, h_end: &CMatrix, row: usize) -> Option<Vec<Complex64>> {
    let a = bc.boundary_matrix(h_end);
    let coeffs = boundary::normalizing_coefficients(bc, h_end, row);
    let floor = COEFFICIENT_FLOOR * coefficient_scale(&a);
    coeffs.iter().any(|z| z.norm() > floor).then_some(coeffs)
}

/// Frame, designated row and coefficients for the zero-mode normalization.
fn choose_row(
    bc: &BoundarySpec,
    h_end: &CMatrix,
    designated: Option<usize>,
) -> Result<(BoundarySpec, bool, usize, Vec<Complex64>), DetError> {
    let dim = 2 * bc.components();
    let candidates: Vec<usize> = match designated {
        Some(d) if d < dim => vec![d],
        Some(d) => {
            return Err(DetError::OutOfRange(format!(
                "designated row {d} out of range for {dim} boundary rows"
            )))
        }
        None => (0..dim).rev().collect(),
    };
    for row in candidates {
        if normalizing_data(bc, h_end, row).is_none() {
            continue;
        }
        if bc.components() == 1 && row == 0 {
            let swapped = bc.with_rows_swapped(0, 1);
            if let Some(coeffs) = normalizing_data(&swapped, h_end, 1) {
                return Ok((swapped, true, 1, coeffs));
            }
            continue;
        }
        let coeffs = normalizing_data(bc, h_end, row).expect("checked above");
        return Ok((bc.clone(), false, row, coeffs));
    }
    Err(DetError::VanishingNorm)
}

pub(crate) fn zero_mode_from_screen(
    p: &Problem,
    bc: &BoundarySpec,
    screen: &ZeroModeScreen,
    opts: &RatioOptions,
) -> Result<ZeroModeData, DetError> {
    if !screen.detected {
        return Err(DetError::NoZeroMode {
            residual: screen.residual,
            threshold: screen.threshold,
        });
    }
    let h_end = &screen.fundamental.end;
    // Kernel dimension ≥ 2 means rank(M + N·Y(b)) ≤ 2r − 2, so the whole
    // adjugate vanishes relative to the size of the cancelling terms.
    let adj = linalg::adjugate(&bc.boundary_matrix(h_end));
    let term_scale = linalg::max_abs(bc.m())
        .max(linalg::max_abs(&(bc.n() * h_end)))
        .max(1.0);
    if linalg::max_abs(&adj) <= opts.zero_mode_tolerance * term_scale.powi(adj.nrows() as i32 - 1) {
        return Err(DetError::VanishingNorm);
    }
    let (frame, rows_swapped, designated_row, coefficients) =
        choose_row(bc, h_end, opts.designated_row)?;
    let controls = opts.controls.clone().with_trajectory();
    let trajectory = propagate_combination(p, real(0.0), &coefficients, &controls)?;
    let norm = inner_product(p, &trajectory, &trajectory, &opts.controls)?.re;
    if !(norm.is_finite() && norm > 0.0) {
        return Err(DetError::VanishingNorm);
    }
    let data: Vec<Complex64> = trajectory
        .initial
        .iter()
        .chain(&trajectory.end)
        .copied()
        .collect();
    let image = frame.stacked() * DVector::from_column_slice(&data);
    let data_norm = data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let boundary_residual = image.norm() / data_norm.max(1.0);
    Ok(ZeroModeData {
        frame,
        rows_swapped,
        designated_row,
        coefficients,
        trajectory,
        norm,
        residual: screen.residual,
        boundary_residual,
    })
}

/// Zero mode of `p` under `bc`, normalized via the adjugate of `M + N·Y(b)`.
pub fn normalized_zero_mode(
    p: &Problem,
    bc: &BoundarySpec,
    opts: &RatioOptions,
) -> Result<ZeroModeData, DetError> {
    opts.controls.validate()?;
    if p.components() != bc.components() {
        return Err(DetError::Mismatch(format!(
            "problem has r = {}, boundary has r = {}",
            p.components(),
            bc.components()
        )));
    }
    let screen = gelfand::screen(p, bc, opts.zero_mode_tolerance, &opts.controls)?;
    zero_mode_from_screen(p, bc, &screen, opts)
}

/// Solution at spectral parameter `λ` normalized like the zero mode (same
/// frame and designated row); its designated-row value is the characteristic.
pub fn normalized_solution(
    p: &Problem,
    frame: &BoundarySpec,
    designated_row: usize,
    lambda: Complex64,
    controls: &Controls,
) -> Result<Trajectory, DetError> {
    let h = propagate_fundamental(p, lambda, controls)?;
    let coeffs = boundary::normalizing_coefficients(frame, &h.end, designated_row);
    Ok(propagate_combination(p, lambda, &coeffs, controls)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BConstant {
    pub value: Complex64,
    pub case: BCase,
    /// Every applicable table case with its value.
    pub applicable: Vec<(u8, Complex64)>,
    /// Largest relative deviation of an applicable case from `value`.
    pub discrepancy: f64,
    /// Value from the boundary-form solve.
    pub system_value: Option<Complex64>,
    /// Relative least-squares residual of the boundary-form solve; nonzero
    /// when the boundary form is not a combination of the boundary rows.
    pub system_residual: f64,
}

/// Solve `[M | N]ᵀ c = ω` where `ω·z` is the boundary form `[y′* z_u − z_v y*]ₐᵇ`;
/// then `𝓑 = 1/c_row`.
pub fn boundary_form_constant(
    frame: &BoundarySpec,
    designated_row: usize,
    data: &[Complex64],
) -> (Option<Complex64>, f64) {
    let r = frame.components();
    let (ua, va, ub, vb) = (0, r, 2 * r, 3 * r);
    let mut omega = CMatrix::zeros(4 * r, 1);
    for comp in 0..r {
        omega[(ua + comp, 0)] = -data[va + comp].conj();
        omega[(va + comp, 0)] = data[ua + comp].conj();
        omega[(ub + comp, 0)] = data[vb + comp].conj();
        omega[(vb + comp, 0)] = -data[ub + comp].conj();
    }
    let (c, residual) = linalg::least_squares(&frame.stacked().transpose(), &omega);
    let rel = residual / omega.norm().max(f64::MIN_POSITIVE);
    let cd = c[(designated_row, 0)];
    let scale = c.norm().max(f64::MIN_POSITIVE);
    (
        (cd.norm() > COEFFICIENT_FLOOR * scale).then(|| 1.0 / cd),
        rel,
    )
}

/// `(selector, 𝓑)` for the six scalar cases, `None` where not applicable.
fn table_cases(
    frame: &BoundarySpec,
    zm: &ZeroModeData,
) -> Result<Vec<Option<Complex64>>, DetError> {
    let sel = boundary::selector_minors(frame)?;
    let (m, n) = (frame.m(), frame.n());
    let (m11, m12) = (m[(0, 0)], m[(0, 1)]);
    let (n11, n12) = (n[(0, 0)], n[(0, 1)]);
    let ya = zm.y_a(0).conj();
    let dya = zm.dy_a(0).conj();
    let yb = zm.y_b(0).conj();
    let dyb = zm.dy_b(0).conj();
    // Each denominator as its two terms; a case whose terms cancel to below
    // CANCELLATION of their size carries no reliable digits.
    let terms = [
        (m12 * yb, n12 * ya),
        (m11 * dyb, n11 * dya),
        (m12 * dya, m11 * ya),
        (m12 * dyb, -n11 * ya),
        (n12 * dyb, n11 * yb),
        (n12 * dya, -m11 * yb),
    ];
    let bscale = linalg::max_abs(&frame.stacked()).max(1.0);
    let yscale = [ya, dya, yb, dyb]
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    Ok(sel
        .iter()
        .zip(terms)
        .map(|(s, (t1, t2))| {
            let d = t1 + t2;
            let applies = s.norm() > COEFFICIENT_FLOOR * bscale * bscale
                && d.norm() > COEFFICIENT_FLOOR * bscale * yscale
                && d.norm() > CANCELLATION * (t1.norm() + t2.norm());
            applies.then(|| s / d)
        })
        .collect())
}

pub fn b_constant(zm: &ZeroModeData) -> Result<BConstant, DetError> {
    let (system_value, system_residual) =
        boundary_form_constant(&zm.frame, zm.designated_row, &zm.stacked());
    if zm.components() != 1 {
        let value = system_value.ok_or(DetError::NoApplicableBCase)?;
        return Ok(BConstant {
            value,
            case: BCase::System,
            applicable: Vec::new(),
            discrepancy: 0.0,
            system_value,
            system_residual,
        });
    }
    let applicable: Vec<(u8, Complex64)> = table_cases(&zm.frame, zm)?
        .into_iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k as u8 + 1, v)))
        .collect();
    let &(case, value) = applicable.first().ok_or(DetError::NoApplicableBCase)?;
    let discrepancy = applicable
        .iter()
        .map(|(_, v)| (v - value).norm() / value.norm())
        .fold(0.0, f64::max);
    Ok(BConstant {
        value,
        case: BCase::Table(case),
        applicable,
        discrepancy,
        system_value,
        system_residual,
    })
}

fn nodeless(t: &Trajectory) -> bool {
    let interior: Vec<f64> = t
        .samples
        .iter()
        .filter(|(x, _)| *x > t.a && *x < t.b)
        .map(|(_, y)| y[0].re)
        .collect();
    interior.iter().all(|&v| v > 0.0) || interior.iter().all(|&v| v < 0.0)
}

/// `det′L₁ / det L₂` when `L₁` has a zero mode under `bc`.
pub fn det_ratio_primed(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
    opts: &RatioOptions,
) -> Result<DetRatioReport, DetError> {
    let (s1, s2) = gelfand::screen_pair(p1, p2, bc, opts)?;
    if s2.detected {
        return Err(DetError::ZeroModeInReference {
            residual: s2.residual,
        });
    }
    if !s1.detected {
        return Err(DetError::NoZeroMode {
            residual: s1.residual,
            threshold: s1.threshold,
        });
    }
    let sa = boundary::check_self_adjoint(bc)?;
    match sa.status {
        SelfAdjointStatus::Fail => {
            return Err(DetError::NotSelfAdjoint {
                violated: sa.violated,
            })
        }
        SelfAdjointStatus::NotVerified if !opts.allow_unverified => {
            return Err(DetError::UnverifiedSelfAdjointness(bc.components()))
        }
        _ => {}
    }
    let zm = zero_mode_from_screen(p1, bc, &s1, opts)?;
    let b = b_constant(&zm)?;
    let denominator = boundary::characteristic(&zm.frame, &s2.fundamental)?;
    let numerator = -b.value * zm.norm;
    let ratio = numerator / denominator;

    let mut warnings = Vec::new();
    if b.discrepancy > B_CASE_AGREEMENT {
        warnings.push(format!(
            "boundary-constant cases disagree by {:.3e} (relative)",
            b.discrepancy
        ));
    }
    if b.system_residual > B_CASE_AGREEMENT {
        warnings.push(format!(
            "boundary form is not a combination of the boundary rows (relative residual {:.3e})",
            b.system_residual
        ));
    }
    if zm.boundary_residual > 1e-7 {
        warnings.push(format!(
            "zero mode violates the boundary rows by {:.3e}",
            zm.boundary_residual
        ));
    }
    if bc.components() == 1
        && bc.kind() == &BoundaryKind::Dirichlet
        && p1.is_real()
        && p2.is_real()
        && nodeless(&zm.trajectory)
        && denominator.re > 0.0
        && ratio.re <= 0.0
    {
        return Err(DetError::SignCheck(ratio.re));
    }
    if p1.is_real()
        && p2.is_real()
        && bc.is_real()
        && ratio.im.abs() > gelfand::IMAGINARY_TOLERANCE * (1.0 + ratio.norm())
    {
        warnings.push(format!("imaginary residue {:.3e} on real input", ratio.im));
    }
    Ok(DetRatioReport {
        ratio,
        path: RatioPath::ZeroModeExtracted,
        zero_mode_numerator: true,
        zero_mode_reference: false,
        numerator,
        denominator,
        numerator_residual: s1.residual,
        b_case: Some(b.case),
        b_constant: Some(b.value),
        zero_mode_norm: Some(zm.norm),
        self_adjoint: sa.status,
        stats: vec![
            s1.fundamental.stats,
            s2.fundamental.stats,
            zm.trajectory.stats,
        ],
        warnings,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroModeHandling {
    /// Extract when a zero mode is detected.
    #[default]
    Auto,
    /// Always extract; skips the self-adjointness verification requirement
    /// for systems. Still an error without an actual zero mode.
    Force,
    /// Never extract.
    Off,
}

/// Ratio with the path chosen by `handling`.
pub fn ratio(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
    handling: ZeroModeHandling,
    opts: &RatioOptions,
) -> Result<DetRatioReport, DetError> {
    match handling {
        ZeroModeHandling::Off => gelfand::det_ratio(p1, p2, bc, opts),
        ZeroModeHandling::Force => {
            let forced = RatioOptions {
                allow_unverified: true,
                ..opts.clone()
            };
            det_ratio_primed(p1, p2, bc, &forced)
        }
        ZeroModeHandling::Auto => match gelfand::det_ratio(p1, p2, bc, opts) {
            Err(DetError::ZeroModeInNumerator { .. }) => det_ratio_primed(p1, p2, bc, opts),
            other => other,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn opts() -> RatioOptions {
        RatioOptions::default()
    }

    #[test]
    fn detection_examples() {
        let c = Controls::default();
        let bc = BoundarySpec::dirichlet(1);
        let d =
            detect_zero_mode(&Problem::scalar(0.0, 1.0, "-pi^2").unwrap(), &bc, 1e-8, &c).unwrap();
        assert!(d.detected && d.residual < 1e-10);
        let d = detect_zero_mode(&Problem::scalar(0.0, 1.0, "0").unwrap(), &bc, 1e-8, &c).unwrap();
        assert!(!d.detected);
        assert!((d.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_mode_normalization() {
        let p = Problem::scalar(0.0, 1.0, "-pi^2").unwrap();
        let zm = normalized_zero_mode(&p, &BoundarySpec::dirichlet(1), &opts()).unwrap();
        assert_eq!(zm.coefficients, vec![real(0.0), real(1.0)]);
        assert!((zm.dy_a(0) - 1.0).norm() < 1e-9);
        // y = sin(πx)/π, ⟨y|y⟩ = 1/(2π²)
        assert!((zm.norm - 0.5 / (PI * PI)).abs() < 1e-10);
        assert!(zm.boundary_residual < 1e-7);
        let b = b_constant(&zm).unwrap();
        assert_eq!(b.case, BCase::Table(2));
        // y′(1) = −1
        assert!((b.value + 1.0).norm() < 1e-8);
        assert!((b.system_value.unwrap() - b.value).norm() < 1e-8);
    }

    #[test]
    fn periodic_mode_is_constant() {
        let p = Problem::scalar(0.0, 1.0, "0").unwrap();
        let zm = normalized_zero_mode(&p, &BoundarySpec::periodic(1), &opts()).unwrap();
        assert!((zm.coefficients[0] - 1.0).norm() < 1e-12);
        assert!(zm.coefficients[1].norm() < 1e-12);
        assert!((zm.norm - 1.0).abs() < 1e-10);
        let b = b_constant(&zm).unwrap();
        assert_eq!(b.case, BCase::Table(3));
        let five = b.applicable.iter().find(|(k, _)| *k == 5).unwrap().1;
        assert!((five - b.value).norm() < 1e-10);
        assert!((b.value - 1.0 / zm.y_a(0).conj()).norm() < 1e-12);
    }

    #[test]
    fn robin_case_one() {
        // u′ = 0 at both ends is Robin with A = C = 0; use a genuinely mixed one:
        // R = 0, A = 0, B = 1, C = 0, D = 1 (Neumann) has the constant zero mode.
        let p = Problem::scalar(0.0, 1.0, "0").unwrap();
        let bc = BoundarySpec::robin(0.0, 1.0, 0.0, 1.0).unwrap();
        let zm = normalized_zero_mode(&p, &bc, &opts()).unwrap();
        let b = b_constant(&zm).unwrap();
        assert_eq!(b.case, BCase::Table(1));
        assert!((b.value + 1.0 / zm.y_b(0).conj()).norm() < 1e-10);
    }

    #[test]
    fn primed_closed_forms() {
        let free = Problem::scalar(0.0, 1.0, "0").unwrap();
        let zero = Problem::scalar(0.0, 1.0, "-pi^2").unwrap();
        let rep = det_ratio_primed(&zero, &free, &BoundarySpec::dirichlet(1), &opts()).unwrap();
        assert!(
            (rep.value() - 0.5 / (PI * PI)).abs() < 1e-8,
            "{}",
            rep.value()
        );
        assert_eq!(rep.b_case, Some(BCase::Table(2)));

        let one = Problem::scalar(0.0, 1.0, "1").unwrap();
        let rep = det_ratio_primed(&free, &one, &BoundarySpec::periodic(1), &opts()).unwrap();
        let want = 1.0 / (4.0 * 0.5f64.sinh().powi(2));
        assert!((rep.value() - want).abs() < 1e-8, "{}", rep.value());
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
    }

    #[test]
    fn auto_switches_paths() {
        let free = Problem::scalar(0.0, 1.0, "0").unwrap();
        let zero = Problem::scalar(0.0, 1.0, "-pi^2").unwrap();
        let bc = BoundarySpec::dirichlet(1);
        let rep = ratio(&zero, &free, &bc, ZeroModeHandling::Auto, &opts()).unwrap();
        assert_eq!(rep.path, RatioPath::ZeroModeExtracted);
        let rep = ratio(&free, &free, &bc, ZeroModeHandling::Auto, &opts()).unwrap();
        assert_eq!(rep.path, RatioPath::Plain);
        assert!(matches!(
            ratio(&free, &free, &bc, ZeroModeHandling::Force, &opts()),
            Err(DetError::NoZeroMode { .. })
        ));
        assert!(matches!(
            ratio(&zero, &free, &bc, ZeroModeHandling::Off, &opts()),
            Err(DetError::ZeroModeInNumerator { .. })
        ));
    }

    #[test]
    fn non_self_adjoint_refused() {
        // u(0) = 2u(1), u′(0) = 2u′(1) with a zero mode: y = e^{-x ln 2}-type needs R = (ln 2)²
        let bc = BoundarySpec::custom(
            1,
            CMatrix::identity(2, 2),
            -CMatrix::identity(2, 2) * real(2.0),
        )
        .unwrap();
        let p1 = Problem::scalar(0.0, 1.0, "log(2)^2").unwrap();
        let p2 = Problem::scalar(0.0, 1.0, "5").unwrap();
        let d = detect_zero_mode(&p1, &bc, 1e-8, &Controls::default()).unwrap();
        assert!(d.detected, "residual {}", d.residual);
        assert!(matches!(
            det_ratio_primed(&p1, &p2, &bc, &opts()),
            Err(DetError::NotSelfAdjoint { .. })
        ));
    }

    #[test]
    fn doubly_degenerate_kernel() {
        let p = Problem::scalar(0.0, 1.0, "-4*pi^2").unwrap();
        let r = normalized_zero_mode(&p, &BoundarySpec::periodic(1), &opts());
        assert!(matches!(r, Err(DetError::VanishingNorm)), "{r:?}");
    }

    #[test]
    fn first_row_designation_is_consistent() {
        let p1 = Problem::scalar(0.0, 1.0, "-pi^2").unwrap();
        let p2 = Problem::scalar(0.0, 1.0, "0").unwrap();
        let bc = BoundarySpec::dirichlet(1);
        let last = det_ratio_primed(&p1, &p2, &bc, &opts()).unwrap();
        let first_opts = RatioOptions {
            designated_row: Some(0),
            ..opts()
        };
        let first = det_ratio_primed(&p1, &p2, &bc, &first_opts).unwrap();
        assert!(
            (first.ratio - last.ratio).norm() < 1e-9,
            "{} vs {}",
            first.ratio,
            last.ratio
        );
    }
}
