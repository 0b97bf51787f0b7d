//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold used when factorizing covariance matrices.
pub const COVARIANCE_PIVOT_RTOL: f64 = 1e-12;
/// Relative pivot threshold used for rank detection of XᵗV⁻¹X.
pub const RANK_RTOL: f64 = 1e-10;

/// How a pivot is judged too small.
#[derive(Debug, Clone, Copy)]
pub enum PivotRule {
    /// pivot < rtol · max diagonal of the input.
    MaxDiagonal(f64),
    /// pivot < rtol · the diagonal entry of the same column.
    OwnDiagonal(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotFailure {
    pub index: usize,
    pub pivot: f64,
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn new(a: &DMatrix<f64>, rule: PivotRule) -> Result<Self, PivotFailure> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of a non-square matrix");
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            let floor = match rule {
                PivotRule::MaxDiagonal(rtol) => rtol * max_diag,
                PivotRule::OwnDiagonal(rtol) => rtol * a[(j, j)].abs(),
            };
            if d.is_nan() || d <= floor || d <= 0.0 {
                return Err(PivotFailure { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L⁻¹ B`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `A⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.whiten(b);
        self.l
            .tr_solve_lower_triangular(&w)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let w = self.whiten_vec(b);
        self.l
            .tr_solve_lower_triangular(&w)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        self.solve(&DMatrix::identity(n, n))
    }
}

/// Smallest eigenvalue of a symmetric matrix, for diagnostics.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetrize in place: `(A + Aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
