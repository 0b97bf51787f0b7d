use nalgebra::{DMatrix, DVector};

use super::QuadraticForms;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Cholesky, PivotRule, COVARIANCE_PIVOT_RTOL};

/// Forms from an explicit covariance matrix, via its Cholesky factor.
pub fn quadratic_forms_dense(
    v: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<QuadraticForms> {
    let n = v.nrows();
    if v.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "V is {}x{}",
            n,
            v.ncols()
        )));
    }
    if x.nrows() != n || y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "V is {n}x{n} but X has {} rows and Y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let chol = Cholesky::new(v, PivotRule::MaxDiagonal(COVARIANCE_PIVOT_RTOL)).map_err(|f| {
        Error::SingularCovariance(format!(
            "pivot {:.3e} at row {}; smallest eigenvalue ≈ {:.3e}",
            f.pivot,
            f.index,
            min_eigenvalue(v)
        ))
    })?;
    let wx = chol.whiten(x);
    let wy = chol.whiten_vec(y);
    let w1 = chol.whiten_vec(&DVector::from_element(n, 1.0));
    Ok(QuadraticForms {
        xtvix: wx.transpose() * &wx,
        xtviy: wx.transpose() * &wy,
        ytviy: wy.dot(&wy),
        logdet_v: chol.log_det(),
        one_tvi_one: w1.dot(&w1),
        one_tvi_x: wx.transpose() * &w1,
        one_tvi_y: w1.dot(&wy),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_covariance() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, -1.0, 1.0, 0.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let q = quadratic_forms_dense(&DMatrix::identity(3, 3), &x, &y).unwrap();
        assert!((q.xtvix - x.transpose() * &x).abs().max() < 1e-15);
        assert_eq!(q.logdet_v, 0.0);
        assert_eq!(q.one_tvi_one, 3.0);
    }

    #[test]
    fn scalar_case() {
        let q = quadratic_forms_dense(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 3.0),
        )
        .unwrap();
        assert!((q.xtviy[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_element(2, 1.0);
        assert!(matches!(
            quadratic_forms_dense(&v, &x, &y),
            Err(Error::SingularCovariance(_))
        ));
        let y3 = DVector::from_element(3, 1.0);
        assert!(matches!(
            quadratic_forms_dense(&DMatrix::identity(2, 2), &x, &y3),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
