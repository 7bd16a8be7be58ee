//! Continuous algebraic Riccati equation
//! `A* P + P A - P B R^{-1} B* P + Q = 0`.
//!
//! The stabilizing solution spans the stable invariant subspace of the
//! Hamiltonian `[[A, -B R^{-1} B*], [-Q, -A*]]`. That subspace is extracted with
//! the scaled matrix-sign iteration, then polished with Newton-Kleinman steps.

use nalgebra::Cholesky;

use super::{eigenvalues, from_blocks, identity, norm1, sylvester_generic, Matrix, C64};
use crate::error::{Error, Result};

fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn check_hermitian(m: &Matrix, name: &'static str) -> Result<()> {
    let scale = super::max_abs(m).max(1.0);
    if (m - m.adjoint()).iter().any(|z| z.norm() > 1e-12 * scale) {
        return Err(Error::Precondition(format!("{name} must be Hermitian")));
    }
    Ok(())
}

/// Relative residual `|A*P + PA - PGP + Q| / (|A*P| + |PA| + |PGP| + |Q|)`
/// with `G = B R^{-1} B*`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    let g = b * super::solve(r, &b.adjoint(), "CARE R")?;
    Ok(residual_with_g(a, &g, q, p))
}

fn residual_with_g(a: &Matrix, g: &Matrix, q: &Matrix, p: &Matrix) -> f64 {
    let ap = a.adjoint() * p;
    let pa = p * a;
    let pgp = p * g * p;
    let res = (&ap + &pa - &pgp + q).norm();
    let denom = ap.norm() + pa.norm() + pgp.norm() + q.norm();
    if denom == 0.0 {
        res
    } else {
        res / denom
    }
}

/// Matrix sign function of `h` by Newton iteration with determinantal scaling.
fn matrix_sign(h: &Matrix) -> Result<Matrix> {
    let dim = h.nrows();
    let mut z = h.clone();
    let mut scaling = true;
    let mut last_diff = f64::INFINITY;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let u = lu.u();
        let zscale = super::max_abs(&z);
        let mut logdet = 0.0;
        for i in 0..dim {
            let piv = u[(i, i)].norm();
            if piv <= 1e-14 * zscale {
                return Err(Error::Synthesis("Hamiltonian matrix has eigenvalues on the imaginary axis".into()));
            }
            logdet += piv.ln();
        }
        let zinv = lu.try_inverse().ok_or(Error::Singular("matrix sign iteration"))?;
        let c = if scaling { (-logdet / dim as f64).exp() } else { 1.0 };
        let next = (&z * C64::new(c, 0.0) + zinv * C64::new(1.0 / c, 0.0)) * C64::new(0.5, 0.0);
        let diff = norm1(&(&next - &z)) / norm1(&next);
        z = next;
        if !super::is_finite(&z) {
            return Err(Error::NoConvergence("matrix sign iteration"));
        }
        if diff < 1e-2 {
            scaling = false;
        }
        if diff <= 1e-13 || (diff < 1e-8 && diff > 0.5 * last_diff) {
            return Ok(z);
        }
        last_diff = diff;
    }
    Err(Error::NoConvergence("matrix sign iteration"))
}

/// Stabilizing solution `P` of the CARE.
pub fn care_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    super::require_square(a, "CARE A")?;
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n {
        return Err(Error::dim("CARE B", format!("expected {n} rows, got {}", b.nrows())));
    }
    if q.shape() != (n, n) {
        return Err(Error::dim("CARE Q", format!("expected {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
    }
    if r.shape() != (m, m) {
        return Err(Error::dim("CARE R", format!("expected {m}x{m}, got {}x{}", r.nrows(), r.ncols())));
    }
    check_hermitian(q, "Q")?;
    check_hermitian(r, "R")?;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let chol = Cholesky::new(hermitian_part(r))
        .filter(|c| c.l_dirty().diagonal().iter().all(|d| d.re > 0.0 && d.im.abs() <= 1e-14 * d.re))
        .ok_or_else(|| Error::Precondition("R must be positive definite".into()))?;
    let g = hermitian_part(&(b * chol.solve(&b.adjoint())));

    let neg_g = -g.clone();
    let neg_q = -q.clone();
    let neg_a_adj = -a.adjoint();
    let ham = from_blocks(&[&[a, &neg_g], &[&neg_q, &neg_a_adj]])?;
    let w = matrix_sign(&ham)?;

    // Stable subspace = ker(W + I) = span [I; P].
    let w11 = w.view((0, 0), (n, n)).into_owned() + identity(n);
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n)).into_owned() + identity(n);
    let lhs = super::vstack(&[&w12, &w22])?;
    let rhs = -super::vstack(&[&w11, &w21])?;
    let qr = lhs.qr();
    let qt_rhs = qr.q().adjoint() * rhs;
    let mut p = qr
        .r()
        .solve_upper_triangular(&qt_rhs)
        .ok_or_else(|| Error::Synthesis("stable Hamiltonian subspace is not a graph; pair not stabilizable".into()))?;
    p = hermitian_part(&p);

    // Newton-Kleinman polishing.
    let mut best = residual_with_g(a, &g, q, &p);
    for _ in 0..4 {
        if best <= 1e-14 {
            break;
        }
        let ac = a - &g * &p;
        let rhs = -(q + &p * &g * &p);
        let Ok(next) = sylvester_generic(&(-ac.adjoint()), &ac, &rhs) else {
            break;
        };
        let next = hermitian_part(&next);
        let res = residual_with_g(a, &g, q, &next);
        if res < best {
            best = res;
            p = next;
        } else {
            break;
        }
    }

    if !super::is_finite(&p) || best > 1e-8 {
        return Err(Error::Synthesis(format!("CARE residual {best:.2e} exceeds 1e-8")));
    }
    let abscissa = eigenvalues(&(a - &g * &p))?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::Synthesis(format!("CARE closed loop is not Hurwitz (abscissa {abscissa:.3e})")));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::real_matrix;

    #[test]
    fn scalar_care() {
        let one = real_matrix(1, 1, &[1.0]);
        let p = care_solve(&one, &one, &one, &one).unwrap();
        assert!((p[(0, 0)].re - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!(p[(0, 0)].im.abs() < 1e-14);
    }

    #[test]
    fn hurwitz_with_zero_weight_gives_zero() {
        let a = real_matrix(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let b = real_matrix(2, 1, &[1.0, 1.0]);
        let p = care_solve(&a, &b, &Matrix::zeros(2, 2), &identity(1)).unwrap();
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_r() {
        let one = real_matrix(1, 1, &[1.0]);
        let r = real_matrix(1, 1, &[-1.0]);
        assert!(matches!(care_solve(&one, &one, &one, &r), Err(Error::Precondition(_))));
    }
}
