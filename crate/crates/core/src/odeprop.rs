//! First-order formulation and fundamental-matrix propagation.
//!
//! The operator `-d²/dx² + Q(x)` with spectral parameter `λ` is written as
//! the system `d/dx (u, v) = [[0, I], [Q(x) - λ I, 0]] (u, v)` on `[a, b]`.
//! Every propagation starts from the identity at `x = a`, so columns of the
//! fundamental matrix are the solutions with unit initial data and the
//! coefficients of a linear combination are exactly its initial state.

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{self, CompiledExpr, EvalError, Expr, Params, ParseError};
use crate::linalg::{self, CMatrix};

const REALNESS_SAMPLES: usize = 257;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid interval [{a}, {b}]: need finite a < b")]
    InvalidInterval { a: f64, b: f64 },
    #[error("potential matrix must be square and non-empty, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("potential entry ({row}, {col}): {source}")]
    Parse {
        row: usize,
        col: usize,
        source: ParseError,
    },
    #[error("potential cannot be evaluated at x = {x}: {source}")]
    Eval { x: f64, source: EvalError },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PropagationError {
    #[error("potential evaluation failed at x = {x}: {source}")]
    Potential { x: f64, source: EvalError },
    #[error("step size underflow at x = {x} (h = {h:e}); potential too stiff or singular")]
    StepUnderflow { x: f64, h: f64 },
    #[error("tolerance unachievable: {max_steps} steps exhausted at x = {x}")]
    TooManySteps { x: f64, max_steps: usize },
    #[error("invalid solver controls: {0}")]
    InvalidControls(String),
    #[error("trajectory interval [{got_a}, {got_b}] does not match problem interval [{a}, {b}]")]
    IntervalMismatch {
        a: f64,
        b: f64,
        got_a: f64,
        got_b: f64,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Potential as given by the user: a scalar `R(x)` or an `r×r` matrix `Q(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Scalar(Expr),
    Matrix(Vec<Vec<Expr>>),
}

impl Potential {
    pub fn parse_scalar(text: &str) -> Result<Self, ProblemError> {
        expr::parse(text)
            .map(Potential::Scalar)
            .map_err(|source| ProblemError::Parse {
                row: 0,
                col: 0,
                source,
            })
    }

    pub fn parse_matrix<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self, ProblemError> {
        let parsed = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, s)| {
                        expr::parse(s.as_ref()).map_err(|source| ProblemError::Parse {
                            row: i,
                            col: j,
                            source,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Potential::Matrix(parsed))
    }

    pub fn components(&self) -> usize {
        match self {
            Potential::Scalar(_) => 1,
            Potential::Matrix(rows) => rows.len(),
        }
    }

    fn entries(&self) -> Result<Vec<Expr>, ProblemError> {
        match self {
            Potential::Scalar(e) => Ok(vec![e.clone()]),
            Potential::Matrix(rows) => {
                let r = rows.len();
                if r == 0 {
                    return Err(ProblemError::BadShape { rows: 0, cols: 0 });
                }
                if let Some(bad) = rows.iter().find(|row| row.len() != r) {
                    return Err(ProblemError::BadShape {
                        rows: r,
                        cols: bad.len(),
                    });
                }
                Ok(rows.iter().flatten().cloned().collect())
            }
        }
    }
}

/// A boundary problem's operator: interval, potential and parameter bindings.
#[derive(Clone, Debug)]
pub struct Problem {
    a: f64,
    b: f64,
    r: usize,
    source: Vec<Expr>,
    compiled: Vec<CompiledExpr>,
    params: Params,
    real: bool,
}

impl Problem {
    pub fn new(a: f64, b: f64, potential: Potential, params: Params) -> Result<Self, ProblemError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ProblemError::InvalidInterval { a, b });
        }
        let r = potential.components();
        let source = potential.entries()?;
        let compiled = source
            .iter()
            .map(|e| e.compile(&params))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ProblemError::Eval { x: a, source })?;
        let mut problem = Problem {
            a,
            b,
            r,
            source,
            compiled,
            params,
            real: true,
        };
        problem.real = problem.check_realness()?;
        Ok(problem)
    }

    /// Scalar problem from an expression string, without parameters.
    pub fn scalar(a: f64, b: f64, potential: &str) -> Result<Self, ProblemError> {
        Problem::new(a, b, Potential::parse_scalar(potential)?, Params::new())
    }

    fn check_realness(&self) -> Result<bool, ProblemError> {
        let mut real = true;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.r * self.r];
        for k in 0..REALNESS_SAMPLES {
            let x = self.a + (self.b - self.a) * k as f64 / (REALNESS_SAMPLES - 1) as f64;
            self.potential_into(x, &mut buf)
                .map_err(|source| ProblemError::Eval { x, source })?;
            real &= buf.iter().all(|z| z.im.abs() <= 1e-13 * (1.0 + z.norm()));
        }
        Ok(real)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Number of components `r`.
    pub fn components(&self) -> usize {
        self.r
    }

    /// True iff every sampled potential value on the interval is real.
    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Potential entries in row-major order, as parsed.
    pub fn potential_source(&self) -> &[Expr] {
        &self.source
    }

    /// Same operator on a different interval.
    pub fn restricted(&self, a: f64, b: f64) -> Result<Problem, ProblemError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(ProblemError::InvalidInterval { a, b });
        }
        let mut p = self.clone();
        p.a = a;
        p.b = b;
        p.real = p.check_realness()?;
        Ok(p)
    }

    /// Evaluate `Q(x)` into `out` (row-major, `r*r` entries).
    pub fn potential_into(&self, x: f64, out: &mut [Complex64]) -> Result<(), EvalError> {
        for (slot, e) in out.iter_mut().zip(&self.compiled) {
            *slot = e.eval(x)?;
        }
        Ok(())
    }

    /// Minimum of `Re Q(x)` (diagonal entries for `r > 1`) over a dense sample.
    pub fn min_real_potential(&self) -> f64 {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.r * self.r];
        let mut lo = f64::INFINITY;
        for k in 0..REALNESS_SAMPLES {
            let x = self.a + (self.b - self.a) * k as f64 / (REALNESS_SAMPLES - 1) as f64;
            if self.potential_into(x, &mut buf).is_ok() {
                for d in 0..self.r {
                    lo = lo.min(buf[d * self.r + d].re);
                }
            }
        }
        lo
    }
}

/// Right-hand side `d/dx (u, v) = (v, (Q(x) - λ) u)` of the first-order system.
pub struct FirstOrderSystem<'p> {
    problem: &'p Problem,
    lambda: Complex64,
}

pub fn assemble_first_order(problem: &Problem, lambda: Complex64) -> FirstOrderSystem<'_> {
    FirstOrderSystem { problem, lambda }
}

impl FirstOrderSystem<'_> {
    pub fn dimension(&self) -> usize {
        2 * self.problem.r
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Derivative of a single `2r` state vector.
    pub fn derivative(
        &self,
        x: f64,
        state: &[Complex64],
        out: &mut [Complex64],
    ) -> Result<(), PropagationError> {
        let r = self.problem.r;
        let mut q = vec![Complex64::new(0.0, 0.0); r * r];
        self.shifted_potential(x, &mut q)?;
        apply_columns(r, &q, state, out);
        Ok(())
    }

    fn shifted_potential(&self, x: f64, q: &mut [Complex64]) -> Result<(), PropagationError> {
        let r = self.problem.r;
        self.problem
            .potential_into(x, q)
            .map_err(|source| PropagationError::Potential { x, source })?;
        for d in 0..r {
            q[d * r + d] -= self.lambda;
        }
        Ok(())
    }
}

/// Applies the generator with shifted potential `q` to every `2r` column.
fn apply_columns(r: usize, q: &[Complex64], state: &[Complex64], out: &mut [Complex64]) {
    if r == 1 {
        let q = q[0];
        for (col, dcol) in state.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
            dcol[0] = col[1];
            dcol[1] = q * col[0];
        }
        return;
    }
    let dim = 2 * r;
    for (col, dcol) in state.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        let (u, v) = col.split_at(r);
        let (du, dv) = dcol.split_at_mut(r);
        du.copy_from_slice(v);
        for (i, dvi) in dv.iter_mut().enumerate() {
            let row = &q[i * r..(i + 1) * r];
            *dvi = row.iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }
}

/// Integrator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    /// Defaults to `(b - a) / 100`.
    pub initial_step: Option<f64>,
    /// Defaults to `(b - a) / 10`.
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub keep_trajectory: bool,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_step: None,
            max_steps: 2_000_000,
            keep_trajectory: false,
        }
    }
}

impl Controls {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.keep_trajectory = true;
        self
    }

    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(1e-14..=1e-4).contains(&self.rtol) {
            return Err(PropagationError::InvalidControls(format!(
                "rtol = {:e} outside [1e-14, 1e-4]",
                self.rtol
            )));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(PropagationError::InvalidControls(format!(
                "atol = {:e} must be positive",
                self.atol
            )));
        }
        for (name, v) in [
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ] {
            if let Some(h) = v {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(PropagationError::InvalidControls(format!(
                        "{name} = {h} must be positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest max-norm local error estimate among accepted steps.
    pub max_local_error: f64,
    /// Sum of accepted local error estimates; a crude bound on global error.
    pub error_estimate: f64,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn combine<const K: usize>(
    out: &mut [Complex64],
    y: &[Complex64],
    h: f64,
    weights: [f64; K],
    ks: [&[Complex64]; K],
) {
    let n = out.len();
    let y = &y[..n];
    let ks = ks.map(|k| &k[..n]);
    let w = weights.map(|w| w * h);
    for i in 0..n {
        let mut re = y[i].re;
        let mut im = y[i].im;
        for j in 0..K {
            re += w[j] * ks[j][i].re;
            im += w[j] * ks[j][i].im;
        }
        out[i] = Complex64::new(re, im);
    }
}

/// Local errors are held to this fraction of `atol + rtol·|y|` so that the
/// accumulated global error, not only each step, stays near the tolerance.
const LOCAL_TOLERANCE_FRACTION: f64 = 0.1;

fn modulus(z: Complex64) -> f64 {
    z.norm_sqr().sqrt()
}

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(x, y)` from `x0` to
/// `x1 > x0`. `observe` sees the initial point and every accepted step.
pub(crate) fn integrate<F, O>(
    mut f: F,
    x0: f64,
    x1: f64,
    y0: Vec<Complex64>,
    controls: &Controls,
    mut observe: O,
) -> Result<(Vec<Complex64>, IntegratorStats), PropagationError>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<(), PropagationError>,
    O: FnMut(f64, &[Complex64]),
{
    controls.validate()?;
    if !(x1 > x0) {
        return Err(PropagationError::InvalidInput(format!(
            "integration range [{x0}, {x1}] is empty"
        )));
    }
    let span = x1 - x0;
    let h_max = controls.max_step.unwrap_or(span / 10.0);
    let mut h = controls.initial_step.unwrap_or(span / 100.0).min(h_max);
    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut y = y0;
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];
    let mut stats = IntegratorStats::default();
    let mut x = x0;
    let mut last_rejected = false;

    observe(x, &y);
    f(x, &y, &mut k1)?;
    stats.evaluations += 1;

    loop {
        if x >= x1 {
            break;
        }
        if stats.steps + stats.rejected >= controls.max_steps {
            return Err(PropagationError::TooManySteps {
                x,
                max_steps: controls.max_steps,
            });
        }
        let remaining = x1 - x;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 16.0 * f64::EPSILON * x.abs().max(span) {
            return Err(PropagationError::StepUnderflow { x, h });
        }

        combine(&mut tmp, &y, h, [A21], [&k1]);
        f(x + C2 * h, &tmp, &mut k2)?;
        combine(&mut tmp, &y, h, [A31, A32], [&k1, &k2]);
        f(x + C3 * h, &tmp, &mut k3)?;
        combine(&mut tmp, &y, h, [A41, A42, A43], [&k1, &k2, &k3]);
        f(x + C4 * h, &tmp, &mut k4)?;
        combine(&mut tmp, &y, h, [A51, A52, A53, A54], [&k1, &k2, &k3, &k4]);
        f(x + C5 * h, &tmp, &mut k5)?;
        combine(
            &mut tmp,
            &y,
            h,
            [A61, A62, A63, A64, A65],
            [&k1, &k2, &k3, &k4, &k5],
        );
        f(x + h, &tmp, &mut k6)?;
        combine(
            &mut y_new,
            &y,
            h,
            [A71, A73, A74, A75, A76],
            [&k1, &k3, &k4, &k5, &k6],
        );
        let x_new = if last { x1 } else { x + h };
        f(x_new, &y_new, &mut k7)?;
        stats.evaluations += 6;

        let mut sum = 0.0;
        let mut local_max = 0.0f64;
        for i in 0..n {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let scale = LOCAL_TOLERANCE_FRACTION
                * (controls.atol + controls.rtol * modulus(y[i]).max(modulus(y_new[i])));
            let en = modulus(e);
            local_max = local_max.max(en);
            sum += (en / scale).powi(2);
        }
        let err = (sum / n as f64).sqrt();

        if err <= 1.0 {
            x = x_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            stats.steps += 1;
            stats.max_local_error = stats.max_local_error.max(local_max);
            stats.error_estimate += local_max;
            observe(x, &y);
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                SAFETY * err.powf(-0.2)
            };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(h_max);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
        }
    }
    Ok((y, stats))
}

/// Propagated fundamental matrix `H(x)` with `H(a) = I`.
#[derive(Clone, Debug)]
pub struct FundamentalSolution {
    pub lambda: Complex64,
    pub a: f64,
    pub b: f64,
    pub components: usize,
    /// `H(b)`.
    pub end: CMatrix,
    /// Samples `(x, H(x))` at accepted steps, when requested.
    pub trajectory: Option<Vec<(f64, CMatrix)>>,
    pub stats: IntegratorStats,
    /// `max |det H(x) - 1|` over the endpoint and any stored samples.
    pub det_drift: f64,
}

impl FundamentalSolution {
    /// Endpoint value `u_j(b)` of the `col`-th fundamental solution, component `comp`.
    pub fn u_end(&self, comp: usize, col: usize) -> Complex64 {
        self.end[(comp, col)]
    }

    /// Endpoint derivative `u_j'(b)`.
    pub fn v_end(&self, comp: usize, col: usize) -> Complex64 {
        self.end[(self.components + comp, col)]
    }
}

fn state_to_matrix(dim: usize, state: &[Complex64]) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, state)
}

pub fn propagate_fundamental(
    problem: &Problem,
    lambda: Complex64,
    controls: &Controls,
) -> Result<FundamentalSolution, PropagationError> {
    let (a, b) = problem.interval();
    propagate_fundamental_between(problem, lambda, a, b, controls)
}

/// Fundamental matrix for the sub-range `[from, to]` with `H(from) = I`.
pub fn propagate_fundamental_between(
    problem: &Problem,
    lambda: Complex64,
    from: f64,
    to: f64,
    controls: &Controls,
) -> Result<FundamentalSolution, PropagationError> {
    let r = problem.components();
    let dim = 2 * r;
    let system = assemble_first_order(problem, lambda);
    let mut q = vec![Complex64::new(0.0, 0.0); r * r];
    let initial = CMatrix::identity(dim, dim);
    let mut samples = Vec::new();
    let keep = controls.keep_trajectory;
    let (end_state, stats) = integrate(
        |x, y, dy| {
            system.shifted_potential(x, &mut q)?;
            apply_columns(r, &q, y, dy);
            Ok(())
        },
        from,
        to,
        initial.as_slice().to_vec(),
        controls,
        |x, y| {
            if keep {
                samples.push((x, state_to_matrix(dim, y)));
            }
        },
    )?;
    let end = state_to_matrix(dim, &end_state);
    let mut det_drift = (linalg::det(&end) - 1.0).norm();
    for (_, m) in &samples {
        det_drift = det_drift.max((linalg::det(m) - 1.0).norm());
    }
    Ok(FundamentalSolution {
        lambda,
        a: from,
        b: to,
        components: r,
        end,
        trajectory: keep.then_some(samples),
        stats,
        det_drift,
    })
}

/// A single solution `(u, v)` of the first-order system.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub lambda: Complex64,
    pub a: f64,
    pub b: f64,
    pub components: usize,
    /// State at `a`; equal to the combination coefficients.
    pub initial: Vec<Complex64>,
    /// State at `b`.
    pub end: Vec<Complex64>,
    /// `(x, state)` at every accepted step, including both endpoints.
    pub samples: Vec<(f64, Vec<Complex64>)>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn u_start(&self, comp: usize) -> Complex64 {
        self.initial[comp]
    }

    pub fn v_start(&self, comp: usize) -> Complex64 {
        self.initial[self.components + comp]
    }

    pub fn u_end(&self, comp: usize) -> Complex64 {
        self.end[comp]
    }

    pub fn v_end(&self, comp: usize) -> Complex64 {
        self.end[self.components + comp]
    }
}

/// Solution with initial state equal to `coefficients`, i.e. the combination
/// `Σ c_j · (column j of H)`.
pub fn propagate_combination(
    problem: &Problem,
    lambda: Complex64,
    coefficients: &[Complex64],
    controls: &Controls,
) -> Result<Trajectory, PropagationError> {
    let r = problem.components();
    if coefficients.len() != 2 * r {
        return Err(PropagationError::InvalidInput(format!(
            "expected {} coefficients, got {}",
            2 * r,
            coefficients.len()
        )));
    }
    if coefficients.iter().all(|z| z.norm() == 0.0) {
        return Err(PropagationError::InvalidInput(
            "combination coefficients are all zero".into(),
        ));
    }
    let system = assemble_first_order(problem, lambda);
    let mut q = vec![Complex64::new(0.0, 0.0); r * r];
    let mut samples = Vec::new();
    let (a, b) = problem.interval();
    let (end, stats) = integrate(
        |x, y, dy| {
            system.shifted_potential(x, &mut q)?;
            apply_columns(r, &q, y, dy);
            Ok(())
        },
        a,
        b,
        coefficients.to_vec(),
        controls,
        |x, y| samples.push((x, y.to_vec())),
    )?;
    Ok(Trajectory {
        lambda,
        a,
        b,
        components: r,
        initial: coefficients.to_vec(),
        end,
        samples,
        stats,
    })
}

/// `⟨u₁|u₂⟩ = ∫ₐᵇ Σ_c u₁,c(x)* u₂,c(x) dx`, computed by re-integrating both
/// solutions with an accumulator appended to the state.
pub fn inner_product(
    problem: &Problem,
    first: &Trajectory,
    second: &Trajectory,
    controls: &Controls,
) -> Result<Complex64, PropagationError> {
    let (a, b) = problem.interval();
    for t in [first, second] {
        if t.a != a || t.b != b {
            return Err(PropagationError::IntervalMismatch {
                a,
                b,
                got_a: t.a,
                got_b: t.b,
            });
        }
        if t.components != problem.components() {
            return Err(PropagationError::InvalidInput(
                "trajectory component count mismatch".into(),
            ));
        }
    }
    let r = problem.components();
    let dim = 2 * r;
    let zero = Complex64::new(0.0, 0.0);
    let same = first.lambda == second.lambda && first.initial == second.initial;
    let mut q = vec![zero; r * r];
    let mut q2 = vec![zero; r * r];
    let lambda1 = first.lambda;
    let lambda2 = second.lambda;

    let mut y0 = first.initial.clone();
    if !same {
        y0.extend_from_slice(&second.initial);
    }
    y0.push(zero);
    let controls = Controls {
        keep_trajectory: false,
        ..controls.clone()
    };
    let (end, _) = integrate(
        |x, y, dy| {
            problem
                .potential_into(x, &mut q)
                .map_err(|source| PropagationError::Potential { x, source })?;
            q2.copy_from_slice(&q);
            for d in 0..r {
                q[d * r + d] -= lambda1;
                q2[d * r + d] -= lambda2;
            }
            apply_columns(r, &q, &y[..dim], &mut dy[..dim]);
            let (u1, u2) = if same {
                (&y[..r], &y[..r])
            } else {
                apply_columns(r, &q2, &y[dim..2 * dim], &mut dy[dim..2 * dim]);
                (&y[..r], &y[dim..dim + r])
            };
            let acc: Complex64 = u1.iter().zip(u2).map(|(p, s)| p.conj() * s).sum();
            *dy.last_mut().unwrap() = acc;
            Ok(())
        },
        a,
        b,
        y0,
        &controls,
        |_, _| {},
    )?;
    Ok(*end.last().unwrap())
}
