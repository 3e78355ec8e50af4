//! Dense SVD-based helpers: numerical rank, null spaces and least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

/// Right null space of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpace {
    /// Orthonormal columns spanning the null space (`ncols x dim`).
    pub basis: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    pub tol: f64,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

struct FullSvd {
    u: DMatrix<f64>,
    singular: DVector<f64>,
    v_t: DMatrix<f64>,
}

/// Thin SVD of `m` padded with zero rows to at least `ncols` rows, so `V^T` is
/// square. Zero rows leave the right null space unchanged.
fn full_svd(m: &DMatrix<f64>) -> Result<FullSvd, LinalgError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let rows = m.nrows().max(m.ncols());
    let mut padded = DMatrix::zeros(rows, m.ncols());
    padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    let svd = padded
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(LinalgError::NoConvergence)?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(LinalgError::NoConvergence),
    };
    Ok(FullSvd {
        u,
        singular: svd.singular_values,
        v_t,
    })
}

fn numerical_rank(singular: &DVector<f64>, tol: f64) -> (usize, f64) {
    let sigma_max = singular.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return (0, 0.0);
    }
    let rank = singular.iter().filter(|&&s| s > tol * sigma_max).count();
    (rank, sigma_max)
}

/// Null space of `m` with relative singular-value threshold `tol`.
///
/// The dimension counts singular values `<= tol * sigma_max` (all of them
/// when `m` is zero); a wide matrix contributes its structural zeros.
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> Result<NullSpace, LinalgError> {
    let cols = m.ncols();
    if cols == 0 || m.nrows() == 0 {
        return Ok(NullSpace {
            basis: DMatrix::identity(cols, cols),
            rank: 0,
            sigma_max: 0.0,
            tol,
        });
    }
    let svd = full_svd(m)?;
    let (rank, sigma_max) = numerical_rank(&svd.singular, tol);
    let keep: alloc::vec::Vec<usize> = (0..svd.singular.len())
        .filter(|&i| sigma_max == 0.0 || svd.singular[i] <= tol * sigma_max)
        .collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &svd.v_t.row(i).transpose());
    }
    Ok(NullSpace {
        basis,
        rank,
        sigma_max,
        tol,
    })
}

/// Left null space: orthonormal columns `w` with `w^T m = 0`.
pub fn left_null_space(m: &DMatrix<f64>, tol: f64) -> Result<NullSpace, LinalgError> {
    null_space(&m.transpose(), tol)
}

/// Numerical rank with relative threshold `tol`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> Result<usize, LinalgError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0);
    }
    let svd = full_svd(m)?;
    Ok(numerical_rank(&svd.singular, tol).0)
}

/// Minimum-norm least-squares solution of `m x = b` via the truncated SVD.
/// Returns the solution and the numerical rank used.
pub fn lstsq(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, usize), LinalgError> {
    if m.ncols() == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    if m.nrows() == 0 {
        return Ok((DVector::zeros(m.ncols()), 0));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let svd = full_svd(m)?;
    let (rank, sigma_max) = numerical_rank(&svd.singular, tol);
    let mut padded_b = DVector::zeros(svd.u.nrows());
    padded_b.rows_mut(0, b.len()).copy_from(b);
    let mut x = DVector::zeros(m.ncols());
    for i in 0..svd.singular.len() {
        let s = svd.singular[i];
        if sigma_max > 0.0 && s > tol * sigma_max {
            let coeff = svd.u.column(i).dot(&padded_b) / s;
            x += svd.v_t.row(i).transpose() * coeff;
        }
    }
    Ok((x, rank))
}

/// Orthogonal `U` (square, `nrows x nrows`) whose first `rank` columns span
/// the range of a square `m`, so the trailing rows of `U^T m` vanish.
pub fn row_compression(m: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, usize), LinalgError> {
    debug_assert_eq!(m.nrows(), m.ncols());
    if m.nrows() == 0 {
        return Ok((DMatrix::zeros(0, 0), 0));
    }
    let svd = full_svd(m)?;
    Ok((svd.u, numerical_rank(&svd.singular, tol).0))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hcat(rows: usize, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(*b);
        offset += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RANK_TOL;

    #[test]
    fn identity_has_trivial_null_space() {
        let ns = null_space(&DMatrix::identity(3, 3), RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 0);
        assert_eq!(ns.rank, 3);
    }

    #[test]
    fn zero_matrix_null_space_is_everything() {
        let ns = null_space(&DMatrix::zeros(2, 3), RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 3);
        let gram = ns.basis.transpose() * &ns.basis;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn wide_and_tall() {
        // [A_C, A_V] of the CV-loop example
        let m = DMatrix::from_row_slice(3, 4, &[1., 0., 0., 1., -1., 1., 0., 0., 0., 0., 1., 0.]);
        let ns = null_space(&m, RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 1);
        assert!((&m * ns.basis.column(0)).norm() < 1e-12);

        let tall = DMatrix::from_row_slice(4, 2, &[1., 1., 1., 1., 0., 0., 2., 2.]);
        let ns = null_space(&tall, RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 1);
        assert!((&tall * ns.basis.column(0)).norm() < 1e-10);
        assert_eq!(
            null_space(&tall.columns(0, 1).into_owned(), RANK_TOL)
                .unwrap()
                .dim(),
            0
        );
    }

    #[test]
    fn empty_shapes() {
        assert_eq!(
            null_space(&DMatrix::zeros(3, 0), RANK_TOL).unwrap().dim(),
            0
        );
        assert_eq!(
            null_space(&DMatrix::zeros(0, 2), RANK_TOL).unwrap().dim(),
            2
        );
    }

    #[test]
    fn non_finite_rejected() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(
            null_space(&m, RANK_TOL).unwrap_err(),
            LinalgError::NonFinite
        );
    }

    #[test]
    fn least_squares_min_norm() {
        let m = DMatrix::from_row_slice(2, 2, &[1., 1., 1., 1.]);
        let (x, r) = lstsq(&m, &DVector::from_vec(alloc::vec![2., 2.]), RANK_TOL).unwrap();
        assert_eq!(r, 1);
        assert!((x - DVector::from_vec(alloc::vec![1., 1.])).norm() < 1e-12);
    }
}
