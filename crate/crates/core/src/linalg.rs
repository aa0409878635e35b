//! Dense complex linear algebra for the tiny (2r×2r, r ≤ 4) matrices that
//! appear in boundary problems.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Determinant by LU factorization with partial pivoting (2×2 fast path).
pub fn det(m: &CMatrix) -> Complex64 {
    assert!(m.is_square(), "determinant of non-square matrix");
    let n = m.nrows();
    match n {
        0 => return real(1.0),
        1 => return m[(0, 0)],
        2 => return m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => {}
    }
    let mut a = m.clone();
    let mut det = real(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
            .unwrap();
        if a[(pivot, col)].norm() == 0.0 {
            return real(0.0);
        }
        if pivot != col {
            a.swap_rows(pivot, col);
            det = -det;
        }
        let p = a[(col, col)];
        det *= p;
        for row in col + 1..n {
            let factor = a[(row, col)] / p;
            if factor.norm() == 0.0 {
                continue;
            }
            for k in col + 1..n {
                let v = a[(col, k)];
                a[(row, k)] -= factor * v;
            }
        }
    }
    det
}

fn minor(m: &CMatrix, skip_row: usize, skip_col: usize) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n - 1, n - 1, |i, j| {
        let r = if i < skip_row { i } else { i + 1 };
        let c = if j < skip_col { j } else { j + 1 };
        m[(r, c)]
    })
}

/// Classical adjugate (transposed cofactor matrix). Well defined for singular
/// matrices, where `A · adj(A) = det(A) · I = 0`.
pub fn adjugate(m: &CMatrix) -> CMatrix {
    assert!(m.is_square());
    let n = m.nrows();
    if n == 1 {
        return CMatrix::from_element(1, 1, real(1.0));
    }
    CMatrix::from_fn(n, n, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        det(&minor(m, j, i)) * sign
    })
}

/// Infinity norm (maximum absolute row sum).
pub fn norm_inf(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank with threshold `rel_tol · σ_max`.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&largest) = sv.first() else { return 0 };
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * largest).count()
}

/// Least-squares solution of `a · x = b` together with the residual norm.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> (CMatrix, f64) {
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let x = svd
        .solve(b, 1e-13 * largest.max(f64::MIN_POSITIVE))
        .expect("SVD computed with both U and V");
    let residual = (a * &x - b).norm();
    (x, residual)
}
