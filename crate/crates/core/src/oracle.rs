//! Independent references: spectra by root bracketing, truncated eigenvalue
//! products, Airy functions, and the closed-form fundamental matrix of the
//! twisted two-component problem.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::boundary::{self, BoundarySpec, SelfAdjointStatus};
use crate::error::DetError;
use crate::exec::{self, Execution};
use crate::linalg::{c, real, CMatrix};
use crate::odeprop::{propagate_fundamental, Controls, Problem};

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub controls: Controls,
    pub execution: Execution,
    /// Bisection stops once `hi − lo ≤ tol · max(1, |λ|)`.
    pub bisection_tolerance: f64,
    /// Grid points evaluated per batch.
    pub batch: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            controls: Controls::default(),
            execution: Execution::default(),
            bisection_tolerance: 1e-12,
            batch: 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EigenvalueList {
    pub eigenvalues: Vec<f64>,
    /// `|characteristic(λₙ)|`.
    pub residuals: Vec<f64>,
    /// Characteristic magnitude at the bracket ends, the local scale.
    pub scales: Vec<f64>,
    pub brackets: Vec<(f64, f64)>,
    /// Roots found as tangential minima rather than sign changes.
    pub even_multiplicity: Vec<bool>,
    pub warnings: Vec<String>,
    pub evaluations: usize,
}

impl EigenvalueList {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

struct Characteristic<'a> {
    problem: &'a Problem,
    bc: &'a BoundarySpec,
    controls: &'a Controls,
}

impl Characteristic<'_> {
    fn eval(&self, lambda: f64) -> Result<f64, DetError> {
        let h = propagate_fundamental(self.problem, real(lambda), self.controls)?;
        Ok(boundary::characteristic(self.bc, &h)?.re)
    }
}

/// Largest `|u coefficient| / |u′ coefficient|` over the boundary rows; a
/// Robin-type row with ratio `κ` can support an eigenvalue near `−κ²`.
fn robin_ratio(bc: &BoundarySpec) -> f64 {
    let (m, n) = (bc.m(), bc.n());
    (0..2)
        .filter_map(|i| {
            let u = m[(i, 0)].norm() + n[(i, 0)].norm();
            let v = m[(i, 1)].norm() + n[(i, 1)].norm();
            (v > 0.0).then(|| u / v)
        })
        .fold(0.0, f64::max)
}

/// Grid step at `λ`. Below `floor = min Re Q` only boundary-bound states
/// (at most two) exist, so the step grows geometrically with depth.
fn spacing(lambda: f64, length: f64, floor: f64) -> f64 {
    let unit = PI * PI / (length * length);
    if lambda < floor - unit {
        return (0.5 * unit).max(0.1 * (floor - lambda));
    }
    if lambda < 10.0 * unit {
        return 0.5 * unit;
    }
    let n = (lambda / unit).sqrt().floor();
    0.5 * (2.0 * n + 1.0) * unit
}

/// Golden-section minimum of `f` on `[lo, hi]`.
fn golden_min(
    f: &impl Fn(f64) -> Result<f64, DetError>,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> Result<(f64, f64), DetError> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

/// Root, residual, scale, bracket, tangent flag, evaluations.
type Refined = (f64, f64, f64, (f64, f64), bool, usize);

enum Candidate {
    Bracket {
        lo: f64,
        hi: f64,
        flo: f64,
        fhi: f64,
        scale: f64,
    },
    Tangent {
        lambda: f64,
        value: f64,
        scale: f64,
        lo: f64,
        hi: f64,
    },
}

/// Lowest `count` real roots of `λ ↦ det(M + N·H_λ(b))`.
pub fn eigenvalue_scan(
    p: &Problem,
    bc: &BoundarySpec,
    count: usize,
    opts: &ScanOptions,
) -> Result<EigenvalueList, DetError> {
    if p.components() != 1 || bc.components() != 1 {
        return Err(DetError::ScanFailed(
            "eigenvalue scan needs a scalar (r = 1) problem".into(),
        ));
    }
    if !p.is_real() || !bc.is_real() {
        return Err(DetError::ScanFailed(
            "eigenvalue scan needs a real potential and real boundary matrices".into(),
        ));
    }
    if boundary::check_self_adjoint(bc)?.status != SelfAdjointStatus::Pass {
        return Err(DetError::ScanFailed(
            "eigenvalue scan needs self-adjoint boundary conditions".into(),
        ));
    }
    opts.controls.validate()?;
    let mut out = EigenvalueList::default();
    if count == 0 {
        return Ok(out);
    }
    let length = p.length();
    let unit = PI * PI / (length * length);
    let kappa = robin_ratio(bc);
    let floor = p.min_real_potential();
    let start = (floor - 2.0 * kappa * kappa - unit - 1.0).min(0.0);
    let budget = start.abs() + 4.0 * ((count + 10) as f64).powi(2) * unit + 100.0;
    let f = Characteristic {
        problem: p,
        bc,
        controls: &opts.controls,
    };

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut grid: Vec<(f64, f64)> = Vec::new();
    let mut next = start;
    let mut found = 0usize;
    let mut processed = 1usize;
    while found < count {
        if next > start + budget {
            return Err(DetError::ScanFailed(format!(
                "found {found} of {count} roots below λ = {next:.6e}"
            )));
        }
        let mut batch = Vec::with_capacity(opts.batch);
        for _ in 0..opts.batch.max(1) {
            batch.push(next);
            next += spacing(next, length, floor);
        }
        let values = exec::map(opts.execution, &batch, |&l| f.eval(l));
        out.evaluations += batch.len();
        for (l, v) in batch.into_iter().zip(values) {
            grid.push((l, v?));
        }
        // Each cell [i-1, i] is examined once; the tangency test needs i+1.
        while processed + 1 < grid.len() && found < count {
            let i = processed;
            let (l0, f0) = grid[i - 1];
            let (l1, f1) = grid[i];
            let (_, f2) = grid[i + 1];
            let scale = f0.abs().max(f1.abs());
            if f1 == 0.0 {
                candidates.push(Candidate::Tangent {
                    lambda: l1,
                    value: 0.0,
                    scale,
                    lo: l1,
                    hi: l1,
                });
                found += 1;
            } else if f0.signum() != f1.signum() && f0 != 0.0 {
                candidates.push(Candidate::Bracket {
                    lo: l0,
                    hi: l1,
                    flo: f0,
                    fhi: f1,
                    scale,
                });
                found += 1;
            } else if f1.abs() < f0.abs() && f1.abs() < f2.abs() && f0.signum() == f2.signum() {
                // Suspicious: |f| dips without changing sign across [l0, l2].
                let l2 = grid[i + 1].0;
                found += refine(&f, l0, l2, f0, f2, &mut candidates, &mut out)?;
            }
            processed += 1;
        }
    }

    let tol = opts.bisection_tolerance;
    let refined = exec::map(
        opts.execution,
        &candidates,
        |cand| -> Result<Refined, DetError> {
            match *cand {
                Candidate::Tangent {
                    lambda,
                    value,
                    scale,
                    lo,
                    hi,
                } => Ok((lambda, value.abs(), scale, (lo, hi), true, 0)),
                Candidate::Bracket {
                    mut lo,
                    mut hi,
                    mut flo,
                    mut fhi,
                    scale,
                } => {
                    let mut evals = 0;
                    while hi - lo > tol * lo.abs().max(hi.abs()).max(1.0) {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        let fmid = f.eval(mid)?;
                        evals += 1;
                        if fmid == 0.0 {
                            (lo, hi, flo, fhi) = (mid, mid, 0.0, 0.0);
                            break;
                        }
                        if fmid.signum() == flo.signum() {
                            (lo, flo) = (mid, fmid);
                        } else {
                            (hi, fhi) = (mid, fmid);
                        }
                    }
                    // Report the bracket end with the smaller residual.
                    let (root, residual) = if flo.abs() <= fhi.abs() {
                        (lo, flo.abs())
                    } else {
                        (hi, fhi.abs())
                    };
                    Ok((root, residual, scale, (lo, hi), false, evals))
                }
            }
        },
    );
    let mut roots = Vec::with_capacity(refined.len());
    for r in refined {
        roots.push(r?);
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (root, residual, scale, bracket, tangent, evals) in roots {
        out.evaluations += evals;
        if let Some(&last) = out.eigenvalues.last() {
            if (root - last).abs() <= 1e-9 * root.abs().max(1.0) {
                continue;
            }
        }
        if tangent {
            out.warnings.push(format!(
                "λ = {root:.10e} is a tangential root (even multiplicity suspected)"
            ));
        }
        if residual > 1e-9 * scale.max(f64::MIN_POSITIVE) {
            out.warnings.push(format!(
                "λ = {root:.10e}: residual {residual:.3e} above 1e-9 of local scale {scale:.3e}"
            ));
        }
        out.eigenvalues.push(root);
        out.residuals.push(residual);
        out.scales.push(scale);
        out.brackets.push(bracket);
        out.even_multiplicity.push(tangent);
    }
    out.eigenvalues.truncate(count);
    out.residuals.truncate(count);
    out.scales.truncate(count);
    out.brackets.truncate(count);
    out.even_multiplicity.truncate(count);
    if out
        .eigenvalues
        .first()
        .is_some_and(|&l| l < -ZERO_EIGENVALUE)
    {
        out.warnings.push(format!(
            "negative eigenvalue {:.10e} present",
            out.eigenvalues[0]
        ));
    }
    Ok(out)
}

/// Resolve a cell where `|f|` dips without a sign change: either two close
/// simple roots (found on a 4× finer grid) or a tangential root.
fn refine(
    f: &Characteristic<'_>,
    lo: f64,
    hi: f64,
    flo: f64,
    fhi: f64,
    candidates: &mut Vec<Candidate>,
    out: &mut EigenvalueList,
) -> Result<usize, DetError> {
    let mut pts = vec![(lo, flo)];
    for k in 1..8 {
        let l = lo + (hi - lo) * k as f64 / 8.0;
        pts.push((l, f.eval(l)?));
        out.evaluations += 1;
    }
    pts.push((hi, fhi));
    let scale = flo.abs().max(fhi.abs());
    let mut added = 0;
    for w in pts.windows(2) {
        let ((l0, f0), (l1, f1)) = (w[0], w[1]);
        if f0 != 0.0 && f0.signum() != f1.signum() {
            candidates.push(Candidate::Bracket {
                lo: l0,
                hi: l1,
                flo: f0,
                fhi: f1,
                scale,
            });
            added += 1;
        }
    }
    if added > 0 {
        return Ok(added);
    }
    // Minimize f oriented so the cell ends are positive: a negative minimum
    // splits the cell into two sign changes, a vanishing one is a double root.
    let sign = flo.signum();
    let eval = |l: f64| f.eval(l).map(|v| sign * v);
    let (lambda, value) = golden_min(&eval, lo, hi, 60)?;
    out.evaluations += 62;
    if value < 0.0 && value.abs() > 1e-8 * scale {
        let fmin = sign * value;
        candidates.push(Candidate::Bracket {
            lo,
            hi: lambda,
            flo,
            fhi: fmin,
            scale,
        });
        candidates.push(Candidate::Bracket {
            lo: lambda,
            hi,
            flo: fmin,
            fhi,
            scale,
        });
        return Ok(2);
    }
    if value.abs() <= 1e-8 * scale {
        candidates.push(Candidate::Tangent {
            lambda,
            value: value.abs(),
            scale,
            lo,
            hi,
        });
        return Ok(1);
    }
    Ok(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductRatio {
    pub value: f64,
    pub skip_zero: bool,
    pub numerator: EigenvalueList,
    pub denominator: EigenvalueList,
    pub warnings: Vec<String>,
}

impl ProductRatio {
    /// The same product truncated at `n` ≤ the scanned count.
    pub fn prefix(&self, n: usize) -> Result<f64, DetError> {
        spectral_product(
            &self.numerator.eigenvalues,
            &self.denominator.eigenvalues,
            n,
            self.skip_zero,
        )
    }
}

const ZERO_EIGENVALUE: f64 = 1e-6;

/// `∏_{k≤n} λₖ⁽¹⁾ / ∏_{k≤n} λₖ⁽²⁾`, dropping `λ₁⁽¹⁾` when `skip_zero`.
pub fn spectral_product(
    numerator: &[f64],
    denominator: &[f64],
    n: usize,
    skip_zero: bool,
) -> Result<f64, DetError> {
    if numerator.len() < n || denominator.len() < n {
        return Err(DetError::ScanFailed(format!(
            "needed {n} roots, have {} and {}",
            numerator.len(),
            denominator.len()
        )));
    }
    let is_zero = |l: f64| l.abs() < ZERO_EIGENVALUE;
    let kept: &[f64] = if skip_zero {
        match numerator.first() {
            Some(&first) if is_zero(first) => &numerator[1..n],
            Some(&first) => {
                return Err(DetError::ScanFailed(format!(
                    "skip_zero requested but lowest eigenvalue is {first:.6e}"
                )))
            }
            None => &[],
        }
    } else {
        &numerator[..n]
    };
    let den = &denominator[..n];
    if let Some(&z) = kept.iter().chain(den).find(|&&l| is_zero(l)) {
        return Err(DetError::ZeroEigenvalue(z));
    }
    // Pairwise factors keep the running product near unity.
    Ok(den
        .iter()
        .enumerate()
        .map(|(i, d)| kept.get(i).copied().unwrap_or(1.0) / d)
        .product())
}

/// `∏ λₙ⁽¹⁾ / ∏ λₙ⁽²⁾` over the lowest `n` eigenvalues of each operator; with
/// `skip_zero` the vanishing lowest eigenvalue of `p1` is dropped.
pub fn truncated_product_ratio(
    p1: &Problem,
    p2: &Problem,
    bc: &BoundarySpec,
    n: usize,
    skip_zero: bool,
    opts: &ScanOptions,
) -> Result<ProductRatio, DetError> {
    let (numerator, denominator) = exec::join(
        opts.execution,
        || eigenvalue_scan(p1, bc, n, opts),
        || eigenvalue_scan(p2, bc, n, opts),
    );
    let (numerator, denominator) = (numerator?, denominator?);
    let value = spectral_product(
        &numerator.eigenvalues,
        &denominator.eigenvalues,
        n,
        skip_zero,
    )?;
    let mut warnings: Vec<String> = numerator
        .warnings
        .iter()
        .chain(&denominator.warnings)
        .cloned()
        .collect();
    if numerator
        .eigenvalues
        .iter()
        .chain(&denominator.eigenvalues)
        .any(|&l| l < -ZERO_EIGENVALUE)
    {
        warnings.push("negative eigenvalues present; products assume a positive spectrum".into());
    }
    Ok(ProductRatio {
        value,
        skip_zero,
        numerator,
        denominator,
        warnings,
    })
}

/// `Ai(0)`.
pub const AI0: f64 = 0.355_028_053_887_817_2;
/// `−Ai′(0)`.
pub const AIP0_NEG: f64 = 0.258_819_403_792_806_8;
const AIRY_RANGE: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Airy {
    pub ai: f64,
    pub bi: f64,
    pub aip: f64,
    pub bip: f64,
}

/// Airy functions from the Maclaurin series of the two standard solutions
/// `f = 1 + x³/3! + 1·4 x⁶/6! + …` and `g = x + 2x⁴/4! + 2·5 x⁷/7! + …`.
pub fn airy_reference(x: f64) -> Result<Airy, DetError> {
    if !(x.abs() <= AIRY_RANGE) {
        return Err(DetError::OutOfRange(format!(
            "Airy reference valid for |x| <= {AIRY_RANGE}, got {x}"
        )));
    }
    let x3 = x * x * x;
    let (mut f, mut g, mut fp, mut gp) = (1.0, x, 0.0, 1.0);
    let (mut tf, mut tg, mut tfp, mut tgp) = (1.0, x, x * x / 2.0, 1.0);
    fp += tfp;
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        tg *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        tgp *= x3 / ((3.0 * kf - 2.0) * (3.0 * kf));
        if k > 1 {
            tfp *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf - 3.0));
            fp += tfp;
        }
        f += tf;
        g += tg;
        gp += tgp;
        let small = |t: f64, s: f64| t.abs() <= 1e-18 * s.abs();
        if small(tf, f) && small(tg, g) && small(tfp, fp) && small(tgp, gp) {
            break;
        }
    }
    let s3 = 3f64.sqrt();
    Ok(Airy {
        ai: AI0 * f - AIP0_NEG * g,
        bi: s3 * (AI0 * f + AIP0_NEG * g),
        aip: AI0 * fp - AIP0_NEG * gp,
        bip: s3 * (AI0 * fp + AIP0_NEG * gp),
    })
}

/// `y(1)` for `−y″ + (x − x₀)y = 0`, `y(0) = 0`, `y′(0) = 1`:
/// `π[Ai(−x₀)Bi(1 − x₀) − Bi(−x₀)Ai(1 − x₀)]`. Equals the Dirichlet ratio
/// against the free operator on `[0, 1]`.
pub fn airy_dirichlet_ratio(x0: f64) -> Result<f64, DetError> {
    let a = airy_reference(-x0)?;
    let b = airy_reference(1.0 - x0)?;
    Ok(PI * (a.ai * b.bi - a.bi * b.ai))
}

/// Fundamental matrix `Y(x)` (λ = 0, `Y(−l/2) = I₄`) of the twisted
/// two-component operator with `Q₁₁ = Q₂₂ = 1 − 2μ²`, `Q₁₂ = (1 − μ²)e^{2iμx}`.
pub fn analytic_fundamental_twisted(x: f64, mu: f64, l: f64) -> Result<CMatrix, DetError> {
    if !(mu.is_finite() && mu * mu < 1.0 / 3.0) {
        return Err(DetError::OutOfRange(format!(
            "need mu^2 < 1/3, got mu = {mu}"
        )));
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(DetError::OutOfRange(format!("need l > 0, got {l}")));
    }
    let half = 0.5 * l;
    if !(x >= -half * (1.0 + 1e-12) && x <= half * (1.0 + 1e-12)) {
        return Err(DetError::OutOfRange(format!("x = {x} outside [-l/2, l/2]")));
    }
    let nu2 = 2.0 * (1.0 - 3.0 * mu * mu);
    let nu = nu2.sqrt();
    let z = x + half;
    let (ch, sh) = ((nu * z).cosh(), (nu * z).sinh());
    let w = 1.0 - mu * mu;
    let i = c(0.0, 1.0);
    let im = i * mu;
    let ep = c(0.0, mu * x).exp();
    let em = c(0.0, -mu * x).exp();
    let pp = c(0.0, mu * half).exp() / nu2;
    let pm = c(0.0, -mu * half).exp() / nu2;

    // (bracket, bracket′) for each component; component 1 carries e^{iμx},
    // component 2 carries e^{−iμx}.
    let cols: [(Complex64, [(Complex64, Complex64); 2]); 4] = [
        (
            pp,
            [
                (
                    real(nu2 / 2.0) + im * w * z + nu2 / 2.0 * ch
                        - im / nu * (3.0 - 7.0 * mu * mu) * sh,
                    im * w + nu2 * nu / 2.0 * sh - im * (3.0 - 7.0 * mu * mu) * ch,
                ),
                (
                    w * (real(-1.0) - im * z + ch + im / nu * sh),
                    w * (-im + nu * sh + im * ch),
                ),
            ],
        ),
        (
            pm,
            [
                (
                    w * (real(-1.0) + im * z + ch - im / nu * sh),
                    w * (im + nu * sh - im * ch),
                ),
                (
                    real(nu2 / 2.0) - im * w * z
                        + nu2 / 2.0 * ch
                        + im / nu * (3.0 - 7.0 * mu * mu) * sh,
                    -im * w + nu2 * nu / 2.0 * sh + im * (3.0 - 7.0 * mu * mu) * ch,
                ),
            ],
        ),
        (
            pp,
            [
                (
                    2.0 * im + w * z - 2.0 * im * ch + (1.0 - 5.0 * mu * mu) / nu * sh,
                    real(w) - 2.0 * im * nu * sh + (1.0 - 5.0 * mu * mu) * ch,
                ),
                (real(w * (-z + sh / nu)), real(w * (ch - 1.0))),
            ],
        ),
        (
            pm,
            [
                (real(w * (-z + sh / nu)), real(w * (ch - 1.0))),
                (
                    -2.0 * im + w * z + 2.0 * im * ch + (1.0 - 5.0 * mu * mu) / nu * sh,
                    real(w) + 2.0 * im * nu * sh + (1.0 - 5.0 * mu * mu) * ch,
                ),
            ],
        ),
    ];
    let mut y = CMatrix::zeros(4, 4);
    for (col, (pref, comps)) in cols.iter().enumerate() {
        let phases = [(ep, im), (em, -im)];
        for (comp, ((b, db), (phase, k))) in comps.iter().zip(phases).enumerate() {
            y[(comp, col)] = pref * b * phase;
            y[(2 + comp, col)] = pref * (db + k * b) * phase;
        }
    }
    Ok(y)
}
