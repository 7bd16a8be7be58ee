//! Dense complex linear-algebra kernels.
//!
//! Everything operates on [`Matrix`], a column-major `DMatrix<Complex64>`.
//! Real data is stored with zero imaginary parts.

mod care;
mod eig;
mod expm;
mod rank;
mod sylvester;

pub use care::{care_residual, care_solve};
pub use eig::{eig, eigenvalues, schur, spectral_abscissa};
pub use expm::expm;
pub use rank::{pinv, rank, svd_rank, svd_rank_scaled, RankInfo};
pub use sylvester::{sylvester_generic, sylvester_residual};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative singular-value threshold used for every numerical rank decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance(f64);

impl RankTolerance {
    pub const DEFAULT: RankTolerance = RankTolerance(1e-9);

    pub fn new(relative_threshold: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&relative_threshold) {
            return Err(Error::Precondition(format!("rank tolerance must lie in [0, 1), got {relative_threshold}")));
        }
        Ok(RankTolerance(relative_threshold))
    }

    pub fn relative_threshold(self) -> f64 {
        self.0
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Builds a complex matrix from real row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    assert_eq!(data.len(), rows * cols, "real_matrix: data length");
    Matrix::from_fn(rows, cols, |i, j| C64::new(data[i * cols + j], 0.0))
}

/// Builds a complex matrix from complex row-major data.
pub fn complex_matrix(rows: usize, cols: usize, data: &[C64]) -> Matrix {
    assert_eq!(data.len(), rows * cols, "complex_matrix: data length");
    Matrix::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    Matrix::zeros(rows, cols)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Assembles a block matrix from a grid of blocks. All blocks in a block row
/// must share a row count and all blocks in a block column a column count.
pub fn from_blocks(grid: &[&[&Matrix]]) -> Result<Matrix> {
    if grid.is_empty() {
        return Ok(zeros(0, 0));
    }
    let ncols_blocks = grid[0].len();
    let row_heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let col_widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    for (bi, row) in grid.iter().enumerate() {
        if row.len() != ncols_blocks {
            return Err(Error::dim("from_blocks", format!("block row {bi} has {} blocks", row.len())));
        }
        for (bj, b) in row.iter().enumerate() {
            if b.nrows() != row_heights[bi] || b.ncols() != col_widths[bj] {
                return Err(Error::dim(
                    "from_blocks",
                    format!(
                        "block ({bi},{bj}) is {}x{}, expected {}x{}",
                        b.nrows(),
                        b.ncols(),
                        row_heights[bi],
                        col_widths[bj]
                    ),
                ));
            }
        }
    }
    let mut out = zeros(row_heights.iter().sum(), col_widths.iter().sum());
    let mut r = 0;
    for (bi, row) in grid.iter().enumerate() {
        let mut c = 0;
        for (bj, b) in row.iter().enumerate() {
            out.view_mut((r, c), b.shape()).copy_from(*b);
            c += col_widths[bj];
        }
        r += row_heights[bi];
    }
    Ok(out)
}

pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    from_blocks(&[blocks])
}

pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows: Vec<[&Matrix; 1]> = blocks.iter().map(|b| [*b]).collect();
    let grid: Vec<&[&Matrix]> = rows.iter().map(|r| &r[..]).collect();
    from_blocks(&grid)
}

/// Largest absolute entry; zero for empty matrices.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Maximum absolute column sum.
pub fn norm1(m: &Matrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// True when every imaginary part is negligible relative to the largest entry.
pub fn is_real(m: &Matrix) -> bool {
    let scale = max_abs(m).max(1.0);
    m.iter().all(|z| z.im.abs() <= 1e-14 * scale)
}

pub(crate) fn require_square(m: &Matrix, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(context, format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Solves `M X = rhs` by partial-pivoting LU, rejecting numerically singular `M`.
pub fn solve(m: &Matrix, rhs: &Matrix, context: &'static str) -> Result<Matrix> {
    require_square(m, context)?;
    if rhs.nrows() != m.nrows() {
        return Err(Error::dim(
            context,
            format!("rhs has {} rows, matrix is {}x{}", rhs.nrows(), m.nrows(), m.ncols()),
        ));
    }
    let scale = max_abs(m);
    let lu = m.clone().lu();
    let u = lu.u();
    let min_pivot = (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if m.nrows() > 0 && (scale == 0.0 || min_pivot <= 1e-14 * scale) {
        return Err(Error::Singular(context));
    }
    let x = lu.solve(rhs).ok_or(Error::Singular(context))?;
    if !is_finite(&x) {
        return Err(Error::Singular(context));
    }
    Ok(x)
}

pub fn inverse(m: &Matrix, context: &'static str) -> Result<Matrix> {
    solve(m, &identity(m.nrows()), context)
}

/// Matrix power by repeated multiplication (exponents here are tiny).
pub fn matrix_power(m: &Matrix, exponent: usize) -> Matrix {
    let mut out = identity(m.nrows());
    for _ in 0..exponent {
        out = &out * m;
    }
    out
}

/// `lambda I - m`.
pub fn shifted(m: &Matrix, lambda: C64) -> Matrix {
    let mut out = -m.clone();
    for i in 0..m.nrows() {
        out[(i, i)] += lambda;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_assembly_places_blocks() {
        let a = real_matrix(1, 1, &[1.0]);
        let b = real_matrix(1, 2, &[2.0, 3.0]);
        let c = real_matrix(1, 1, &[4.0]);
        let d = real_matrix(1, 2, &[5.0, 6.0]);
        let m = from_blocks(&[&[&a, &b], &[&c, &d]]).unwrap();
        assert_eq!(m, real_matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn block_assembly_rejects_mismatch() {
        let a = real_matrix(1, 1, &[1.0]);
        let b = real_matrix(2, 1, &[2.0, 3.0]);
        assert!(matches!(from_blocks(&[&[&a, &b]]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rank_tolerance_range() {
        assert!(RankTolerance::new(1.0).is_err());
        assert!(RankTolerance::new(-1e-3).is_err());
        assert_eq!(RankTolerance::default().relative_threshold(), 1e-9);
    }

    #[test]
    fn solve_rejects_singular() {
        let m = real_matrix(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&m, &identity(2), "test").is_err());
    }
}
