//! Boundary conditions `M·(u(a), v(a)) + N·(u(b), v(b)) = 0` and the
//! characteristic function `λ ↦ det(M + N·H_λ(b))`.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, c, real, CMatrix};
use crate::odeprop::FundamentalSolution;

/// Relative singular-value threshold for the well-posedness rank check.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Curly-bracket self-adjointness conditions must vanish below this.
pub const SELF_ADJOINT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum BoundaryError {
    #[error("invalid boundary parameters: {0}")]
    InvalidParameters(String),
    #[error("boundary matrices must be {expected}x{expected}, got M {m_rows}x{m_cols} and N {n_rows}x{n_cols}")]
    Shape {
        expected: usize,
        m_rows: usize,
        m_cols: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("[M | N] has rank {rank}, need {expected} (ill-posed boundary conditions)")]
    RankDeficient { rank: usize, expected: usize },
    #[error("dimension mismatch: boundary has r = {boundary}, solution has r = {solution}")]
    DimensionMismatch { boundary: usize, solution: usize },
    #[error("operation only defined for scalar (r = 1) problems, got r = {0}")]
    ScalarOnly(usize),
    #[error("all six pivot minors of [M | N] vanish")]
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    /// `A u(a) + B u'(a) = 0`, `C u(b) + D u'(b) = 0` (componentwise for r > 1).
    Robin {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    Periodic,
    /// `u(b) = e^{±iμl} u(a)` per component; r = 2 only.
    Twisted {
        mu: f64,
        l: f64,
    },
    Custom,
}

impl fmt::Display for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryKind::Dirichlet => f.write_str("dirichlet"),
            BoundaryKind::Neumann => f.write_str("neumann"),
            BoundaryKind::Robin { a, b, c, d } => write!(f, "robin(A={a}, B={b}, C={c}, D={d})"),
            BoundaryKind::Periodic => f.write_str("periodic"),
            BoundaryKind::Twisted { mu, l } => write!(f, "twisted(mu={mu}, l={l})"),
            BoundaryKind::Custom => f.write_str("custom"),
        }
    }
}

/// Boundary conditions for an `r`-component problem; `M`, `N` are `2r×2r`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    r: usize,
    m: CMatrix,
    n: CMatrix,
    kind: BoundaryKind,
}

fn blocks(r: usize, tl: Complex64, tr: Complex64, bl: Complex64, br: Complex64) -> CMatrix {
    CMatrix::from_fn(2 * r, 2 * r, |i, j| {
        if i % r != j % r {
            return real(0.0);
        }
        match (i < r, j < r) {
            (true, true) => tl,
            (true, false) => tr,
            (false, true) => bl,
            (false, false) => br,
        }
    })
}

impl BoundarySpec {
    /// Explicit matrices; validated for shape and full row rank of `[M | N]`.
    pub fn custom(r: usize, m: CMatrix, n: CMatrix) -> Result<Self, BoundaryError> {
        Self::build(r, m, n, BoundaryKind::Custom)
    }

    fn build(r: usize, m: CMatrix, n: CMatrix, kind: BoundaryKind) -> Result<Self, BoundaryError> {
        let dim = 2 * r;
        if r == 0 || m.shape() != (dim, dim) || n.shape() != (dim, dim) {
            return Err(BoundaryError::Shape {
                expected: dim,
                m_rows: m.nrows(),
                m_cols: m.ncols(),
                n_rows: n.nrows(),
                n_cols: n.ncols(),
            });
        }
        let spec = BoundarySpec { r, m, n, kind };
        let rank = linalg::rank(&spec.stacked(), RANK_TOLERANCE);
        if rank != dim {
            return Err(BoundaryError::RankDeficient {
                rank,
                expected: dim,
            });
        }
        Ok(spec)
    }

    pub fn named(kind: BoundaryKind, r: usize) -> Result<Self, BoundaryError> {
        let one = real(1.0);
        let zero = real(0.0);
        let (m, n) = match kind {
            BoundaryKind::Dirichlet => (
                blocks(r, one, zero, zero, zero),
                blocks(r, zero, zero, one, zero),
            ),
            BoundaryKind::Neumann => (
                blocks(r, zero, one, zero, zero),
                blocks(r, zero, zero, zero, one),
            ),
            BoundaryKind::Robin { a, b, c, d } => {
                if [a, b, c, d].iter().any(|v| !v.is_finite()) {
                    return Err(BoundaryError::InvalidParameters(
                        "Robin coefficients must be finite".into(),
                    ));
                }
                if a == 0.0 && b == 0.0 {
                    return Err(BoundaryError::InvalidParameters(
                        "Robin needs (A, B) not both zero".into(),
                    ));
                }
                if c == 0.0 && d == 0.0 {
                    return Err(BoundaryError::InvalidParameters(
                        "Robin needs (C, D) not both zero".into(),
                    ));
                }
                (
                    blocks(r, real(a), real(b), zero, zero),
                    blocks(r, zero, zero, real(c), real(d)),
                )
            }
            BoundaryKind::Periodic => (
                CMatrix::identity(2 * r, 2 * r),
                -CMatrix::identity(2 * r, 2 * r),
            ),
            BoundaryKind::Twisted { mu, l } => {
                if r != 2 {
                    return Err(BoundaryError::InvalidParameters(format!(
                        "twisted boundary conditions need r = 2, got r = {r}"
                    )));
                }
                if !(mu.is_finite() && l.is_finite() && l > 0.0) {
                    return Err(BoundaryError::InvalidParameters(
                        "twisted needs finite mu and l > 0".into(),
                    ));
                }
                let plus = c(0.0, mu * l).exp();
                let minus = c(0.0, -mu * l).exp();
                let diag = [plus, minus, plus, minus];
                let m = CMatrix::from_fn(4, 4, |i, j| if i == j { -diag[i] } else { zero });
                (m, CMatrix::identity(4, 4))
            }
            BoundaryKind::Custom => {
                return Err(BoundaryError::InvalidParameters(
                    "custom boundary conditions need explicit M and N".into(),
                ))
            }
        };
        Self::build(r, m, n, kind)
    }

    pub fn dirichlet(r: usize) -> Self {
        Self::named(BoundaryKind::Dirichlet, r).expect("Dirichlet is well posed")
    }

    pub fn neumann(r: usize) -> Self {
        Self::named(BoundaryKind::Neumann, r).expect("Neumann is well posed")
    }

    pub fn periodic(r: usize) -> Self {
        Self::named(BoundaryKind::Periodic, r).expect("periodic is well posed")
    }

    pub fn robin(a: f64, b: f64, c: f64, d: f64) -> Result<Self, BoundaryError> {
        Self::named(BoundaryKind::Robin { a, b, c, d }, 1)
    }

    pub fn twisted(mu: f64, l: f64) -> Result<Self, BoundaryError> {
        Self::named(BoundaryKind::Twisted { mu, l }, 2)
    }

    pub fn components(&self) -> usize {
        self.r
    }

    pub fn m(&self) -> &CMatrix {
        &self.m
    }

    pub fn n(&self) -> &CMatrix {
        &self.n
    }

    pub fn kind(&self) -> &BoundaryKind {
        &self.kind
    }

    /// `[M | N]`, the `2r×4r` map from boundary data `(u(a), v(a), u(b), v(b))`.
    pub fn stacked(&self) -> CMatrix {
        let dim = 2 * self.r;
        CMatrix::from_fn(dim, 2 * dim, |i, j| {
            if j < dim {
                self.m[(i, j)]
            } else {
                self.n[(i, j - dim)]
            }
        })
    }

    pub fn is_real(&self) -> bool {
        self.m.iter().chain(self.n.iter()).all(|z| z.im == 0.0)
    }

    /// Every row constrains data at one endpoint only.
    pub fn is_separated(&self) -> bool {
        (0..2 * self.r).all(|i| {
            let m_zero = self.m.row(i).iter().all(|z| z.norm() == 0.0);
            let n_zero = self.n.row(i).iter().all(|z| z.norm() == 0.0);
            m_zero || n_zero
        })
    }

    /// The same conditions with rows `i` and `j` exchanged.
    pub fn with_rows_swapped(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.m.swap_rows(i, j);
        out.n.swap_rows(i, j);
        out.kind = BoundaryKind::Custom;
        out
    }

    /// `M + N·H`.
    pub fn boundary_matrix(&self, h_end: &CMatrix) -> CMatrix {
        &self.m + &self.n * h_end
    }
}

fn check_dims(bc: &BoundarySpec, fund: &FundamentalSolution) -> Result<(), BoundaryError> {
    if bc.components() != fund.components {
        return Err(BoundaryError::DimensionMismatch {
            boundary: bc.components(),
            solution: fund.components,
        });
    }
    Ok(())
}

/// `det(M + N·H(b))`; its zeros in `λ` are the eigenvalues.
pub fn characteristic(
    bc: &BoundarySpec,
    fund: &FundamentalSolution,
) -> Result<Complex64, BoundaryError> {
    check_dims(bc, fund)?;
    if bc.r == 1 {
        // det M + det N + tr(adj(M)·N·H) with det H = 1: linear in H, so it
        // survives where H is exponentially large and the 2×2 product cancels.
        let linear = (linalg::adjugate(&bc.m) * &bc.n * &fund.end).trace();
        return Ok(linalg::det(&bc.m) + linalg::det(&bc.n) + linear);
    }
    Ok(linalg::det(&bc.boundary_matrix(&fund.end)))
}

/// Boundary values of the solution normalized so that every row except
/// `designated_row` is satisfied and that row evaluates to `det(M + N·H(b))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointData {
    pub designated_row: usize,
    /// Initial state `(u(a), v(a))`, equal to the combination coefficients.
    pub start: Vec<Complex64>,
    /// `(u(b), v(b))`.
    pub end: Vec<Complex64>,
}

impl EndpointData {
    /// Concatenated boundary data `(u(a), v(a), u(b), v(b))`.
    pub fn stacked(&self) -> Vec<Complex64> {
        self.start.iter().chain(&self.end).copied().collect()
    }
}

/// Coefficients `adj(M + N·H(b))·e_row`. For `r = 1` and the last row this is
/// `(-[m₁₂ + n₁₁y⁽²⁾(b) + n₁₂y⁽²⁾'(b)], m₁₁ + n₁₁y⁽¹⁾(b) + n₁₂y⁽¹⁾'(b))`.
pub fn normalizing_coefficients(bc: &BoundarySpec, h_end: &CMatrix, row: usize) -> Vec<Complex64> {
    let adj = linalg::adjugate(&bc.boundary_matrix(h_end));
    adj.column(row).iter().copied().collect()
}

/// Scalar normalized solution. Uses the last row as the designated row unless
/// the resulting coefficients vanish, in which case the first row is used.
pub fn normalized_endpoint_data(
    bc: &BoundarySpec,
    fund: &FundamentalSolution,
) -> Result<EndpointData, BoundaryError> {
    check_dims(bc, fund)?;
    if bc.components() != 1 {
        return Err(BoundaryError::ScalarOnly(bc.components()));
    }
    let scale = 1.0 + linalg::max_abs(&bc.boundary_matrix(&fund.end));
    let mut row = 1;
    let mut coeffs = normalizing_coefficients(bc, &fund.end, row);
    if coeffs.iter().all(|z| z.norm() <= 1e-12 * scale) {
        row = 0;
        coeffs = normalizing_coefficients(bc, &fund.end, row);
    }
    let end = (&fund.end * nalgebra::DVector::from_column_slice(&coeffs))
        .iter()
        .copied()
        .collect();
    Ok(EndpointData {
        designated_row: row,
        start: coeffs,
        end,
    })
}

/// `m₂₁u(a) + m₂₂v(a) + n₂₁u(b) + n₂₂v(b)` (the designated row applied to the
/// normalized solution). Equals `det(M + N·H(b))`.
pub fn reduced_boundary_form(
    bc: &BoundarySpec,
    data: &EndpointData,
) -> Result<Complex64, BoundaryError> {
    if bc.components() != 1 {
        return Err(BoundaryError::ScalarOnly(bc.components()));
    }
    let z = data.stacked();
    let row = bc.stacked().row(data.designated_row).clone_owned();
    Ok(row.iter().zip(&z).map(|(a, b)| a * b).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfAdjointStatus {
    Pass,
    Fail,
    /// r > 1: no bracket conditions are available.
    NotVerified,
}

impl fmt::Display for SelfAdjointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelfAdjointStatus::Pass => "pass",
            SelfAdjointStatus::Fail => "fail",
            SelfAdjointStatus::NotVerified => "not verified",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfAdjointReport {
    pub status: SelfAdjointStatus,
    /// Which pivot minor (1–6, same order as the zero-mode constant table)
    /// was used to eliminate two boundary values.
    pub pivot_case: Option<usize>,
    /// Coefficients of `u(b)u₀(a)*`, `u(a)u₀(b)*`, `u(b)u₀(b)*`, `u(a)u₀(a)*`
    /// for the `u`-pivot; in general the boundary form on the kernel basis.
    pub brackets: Vec<Complex64>,
    /// 1-based indices of brackets that do not vanish.
    pub violated: Vec<usize>,
    /// `(det M, det N)` when both matrices are real.
    pub real_determinants: Option<(f64, f64)>,
}

/// Column pairs of `[M | N]` (data order `u(a), v(a), u(b), v(b)`) whose
/// 2×2 minors select the six cases.
pub(crate) const PIVOT_COLUMNS: [(usize, usize); 6] =
    [(1, 3), (0, 2), (0, 1), (1, 2), (2, 3), (0, 3)];

/// The six case-selector minors in table order.
pub fn selector_minors(bc: &BoundarySpec) -> Result<[Complex64; 6], BoundaryError> {
    if bc.components() != 1 {
        return Err(BoundaryError::ScalarOnly(bc.components()));
    }
    let (m, n) = (&bc.m, &bc.n);
    let (m11, m12, m21, m22) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let (n11, n12, n21, n22) = (n[(0, 0)], n[(0, 1)], n[(1, 0)], n[(1, 1)]);
    Ok([
        n12 * m22 - m12 * n22,
        m11 * n21 - m21 * n11,
        m11 * m22 - m12 * m21,
        m12 * n21 - m22 * n11,
        n12 * n21 - n22 * n11,
        m11 * n22 - m21 * n12,
    ])
}

/// Boundary form `[w'* z − z' w*]ₐᵇ` on stacked data `(u(a), v(a), u(b), v(b))`.
fn boundary_form(w: &[Complex64], z: &[Complex64]) -> Complex64 {
    let (ua, va, ub, vb) = (0, 1, 2, 3);
    w[vb].conj() * z[ub] - z[vb] * w[ub].conj() - (w[va].conj() * z[ua] - z[va] * w[ua].conj())
}

pub fn check_self_adjoint(bc: &BoundarySpec) -> Result<SelfAdjointReport, BoundaryError> {
    let real_determinants = bc
        .is_real()
        .then(|| (linalg::det(&bc.m).re, linalg::det(&bc.n).re));
    if bc.components() != 1 {
        return Ok(SelfAdjointReport {
            status: SelfAdjointStatus::NotVerified,
            pivot_case: None,
            brackets: Vec::new(),
            violated: Vec::new(),
            real_determinants,
        });
    }
    let minors = selector_minors(bc)?;
    let scale = linalg::max_abs(&bc.stacked()).max(1.0);
    let case = minors
        .iter()
        .position(|p| p.norm() > 1e-12 * scale * scale)
        .ok_or(BoundaryError::Degenerate)?;
    let (p1, p2) = PIVOT_COLUMNS[case];
    let free: Vec<usize> = (0..4).filter(|&k| k != p1 && k != p2).collect();
    let a = bc.stacked();
    let pivot = CMatrix::from_fn(2, 2, |i, j| a[(i, [p1, p2][j])]);
    let pivot_inv = pivot.try_inverse().ok_or(BoundaryError::Degenerate)?;

    // Kernel basis: free datum k set to one, pivot data solved from [M|N] z = 0.
    let basis: Vec<Vec<Complex64>> = free
        .iter()
        .map(|&k| {
            let rhs = nalgebra::DVector::from_fn(2, |i, _| -a[(i, k)]);
            let solved = &pivot_inv * rhs;
            let mut z = vec![real(0.0); 4];
            z[k] = real(1.0);
            z[p1] = solved[0];
            z[p2] = solved[1];
            z
        })
        .collect();
    // (zero-mode datum, general datum): (f0, f1), (f1, f0), (f1, f1), (f0, f0)
    let brackets = vec![
        boundary_form(&basis[0], &basis[1]),
        boundary_form(&basis[1], &basis[0]),
        boundary_form(&basis[1], &basis[1]),
        boundary_form(&basis[0], &basis[0]),
    ];
    let violated: Vec<usize> = brackets
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() >= SELF_ADJOINT_TOLERANCE)
        .map(|(i, _)| i + 1)
        .collect();
    let status = if violated.is_empty() {
        SelfAdjointStatus::Pass
    } else {
        SelfAdjointStatus::Fail
    };
    Ok(SelfAdjointReport {
        status,
        pivot_case: Some(case + 1),
        brackets,
        violated,
        real_determinants,
    })
}
