use super::{schur, Matrix, C64};
use crate::error::{Error, Result};

/// Solves `X B - A X = C` for `X` (Bartels-Stewart on complex Schur forms).
///
/// `A` is `n x n`, `B` is `k x k`, `C` and `X` are `n x k`. The equation is
/// uniquely solvable iff `A` and `B` have no common eigenvalue.
pub fn sylvester_generic(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    super::require_square(a, "sylvester A")?;
    super::require_square(b, "sylvester B")?;
    let (n, k) = (a.nrows(), b.nrows());
    if c.shape() != (n, k) {
        return Err(Error::dim("sylvester C", format!("expected {n}x{k}, got {}x{}", c.nrows(), c.ncols())));
    }
    if n == 0 || k == 0 {
        return Ok(Matrix::zeros(n, k));
    }
    let (ua, ta) = schur(a)?;
    let (ub, tb) = schur(b)?;
    let cc = ua.adjoint() * c * &ub;
    let scale = super::max_abs(&ta).max(super::max_abs(&tb)).max(f64::MIN_POSITIVE);
    let sep_tol = 1e-13 * scale;

    let mut y = Matrix::zeros(n, k);
    for j in 0..k {
        let mut rhs = cc.column(j).into_owned();
        for i in 0..j {
            let coeff = tb[(i, j)];
            if coeff != C64::new(0.0, 0.0) {
                rhs -= y.column(i) * coeff;
            }
        }
        let mu = tb[(j, j)];
        for r in (0..n).rev() {
            let mut acc = rhs[r];
            for s in (r + 1)..n {
                acc += ta[(r, s)] * y[(s, j)];
            }
            let d = mu - ta[(r, r)];
            if d.norm() <= sep_tol {
                return Err(Error::SylvesterSingular { eigenvalue: mu });
            }
            y[(r, j)] = acc / d;
        }
    }
    Ok(&ua * y * ub.adjoint())
}

/// Frobenius norm of `X B - A X - C`.
pub fn sylvester_residual(a: &Matrix, b: &Matrix, c: &Matrix, x: &Matrix) -> f64 {
    (x * b - a * x - c).norm()
}
