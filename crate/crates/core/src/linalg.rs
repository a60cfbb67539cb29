//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Subtracts column means in place and returns them.
pub fn center_columns(x: &mut Matrix) -> Vector {
    let n = x.nrows() as f64;
    let means = Vector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    for (mut col, m) in x.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    means
}

/// Subtracts the mean in place and returns it.
pub fn center_vector(y: &mut Vector) -> f64 {
    let m = y.mean();
    y.add_scalar_mut(-m);
    m
}

/// `ZᵀZ / n`.
pub fn gram(z: &Matrix) -> Matrix {
    let mut g = z.tr_mul(z);
    g /= z.nrows() as f64;
    symmetrize_mean(&mut g);
    g
}

/// Replaces `a` by `(a + aᵀ) / 2`.
pub fn symmetrize_mean(a: &mut Matrix) {
    let p = a.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `|A − B|_∞` over entries.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn eigenvalues_sym(a: &Matrix) -> Vector {
    SymmetricEigen::new(a.clone()).eigenvalues
}

pub fn min_eigenvalue(a: &Matrix) -> f64 {
    eigenvalues_sym(a).min()
}

pub fn max_eigenvalue(a: &Matrix) -> f64 {
    eigenvalues_sym(a).max()
}

/// Lower Cholesky factor with escalating diagonal jitter.
///
/// Jitter starts at zero, then `1e-10` times the mean diagonal scale, growing
/// ×10 up to `1e-6` before giving up.
pub fn cholesky_jittered(a: &Matrix) -> Result<(Matrix, f64)> {
    if let Some(c) = a.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let scale = (a.trace() / a.nrows().max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10;
    while jitter <= 1e-6 * (1.0 + 1e-9) {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter * scale;
        }
        if let Some(c) = b.cholesky() {
            return Ok((c.l(), jitter * scale));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(format!(
        "Cholesky failed with jitter up to 1e-6 (min eigenvalue {:e})",
        min_eigenvalue(a)
    )))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("inverse of a non-PD matrix".into()))?;
    let mut inv = chol.inverse();
    symmetrize_mean(&mut inv);
    Ok(inv)
}

/// General inverse via LU; `None` when singular.
pub fn inverse(a: &Matrix) -> Option<Matrix> {
    a.clone().try_inverse()
}

/// Rows `rows` of `x`, in the given order.
pub fn select_rows(x: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Columns `cols` of `x`, in the given order.
pub fn select_columns(x: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

pub fn select_entries(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `[A, B]` side by side.
pub fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut z = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    z.columns_mut(0, a.ncols()).copy_from(a);
    z.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    z
}

/// Sample covariance with divisor `n` around the column means.
pub fn sample_covariance(x: &Matrix) -> Matrix {
    let mut xc = x.clone();
    center_columns(&mut xc);
    gram(&xc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_and_gram() {
        let mut x = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 9.0]);
        let m = center_columns(&mut x);
        assert_eq!(m.as_slice(), &[2.0, 5.0]);
        assert!(x.column(0).sum().abs() < 1e-15);
        let g = gram(&x);
        assert!((g[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!(is_symmetric(&g, 0.0));
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank one
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let (l, jitter) = cholesky_jittered(&a).unwrap();
        assert!(jitter > 0.0);
        assert!(max_abs_diff(&(&l * l.transpose()), &a) < 1e-5);
    }

    #[test]
    fn jitter_gives_up_on_indefinite() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_jittered(&a), Err(Error::NotPositiveDefinite(_))));
    }
}
