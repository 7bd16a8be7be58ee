//! Stabilizing state-feedback and output-injection gains from the Riccati
//! equation.

use crate::error::{Error, Result};
use crate::numerics::{
    care_solve, eigenvalues, hstack, identity, rank, shifted, solve, spectral_abscissa, Matrix, RankTolerance, C64,
};

/// A gain together with the spectral abscissa of the loop it closes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub matrix: Matrix,
    pub abscissa: f64,
}

/// First eigenvalue of `a` in the closed right half-plane at which
/// `[lambda I - a, b]` loses rank.
fn pbh_failure(a: &Matrix, b: &Matrix) -> Result<Option<C64>> {
    let n = a.nrows();
    let scale = crate::numerics::max_abs(a).max(1.0);
    for lambda in eigenvalues(a)? {
        if lambda.re < -1e-9 * scale {
            continue;
        }
        let pencil = hstack(&[&shifted(a, lambda), b])?;
        if rank(&pencil, RankTolerance::DEFAULT)? < n {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}

/// `K = -R^{-1} B* P` with `P` the stabilizing CARE solution for weights
/// `(Q, R)`, so that `A + BK` is Hurwitz.
pub fn lqr_gain_weighted(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Gain> {
    crate::numerics::require_square(a, "lqr A")?;
    if b.nrows() != a.nrows() {
        return Err(Error::dim("lqr B", format!("B has {} rows, A is {}x{}", b.nrows(), a.nrows(), a.nrows())));
    }
    if let Some(eigenvalue) = pbh_failure(a, b)? {
        return Err(Error::Unstabilizable { eigenvalue });
    }
    let p = care_solve(a, b, q, r)?;
    let k = -solve(r, &(b.adjoint() * p), "lqr R")?;
    let abscissa = spectral_abscissa(&(a + b * &k))?;
    if abscissa >= 0.0 {
        return Err(Error::Synthesis(format!("LQR closed loop not Hurwitz (abscissa {abscissa:.3e})")));
    }
    Ok(Gain { matrix: k, abscissa })
}

/// LQR gain with identity weights.
pub fn lqr_gain(a: &Matrix, b: &Matrix) -> Result<Gain> {
    lqr_gain_weighted(a, b, &identity(a.nrows()), &identity(b.ncols()))
}

/// `L = (lqr(A*, C*))*`, so that `A + LC` is Hurwitz.
pub fn output_injection_gain_weighted(a: &Matrix, c: &Matrix, q: &Matrix, r: &Matrix) -> Result<Gain> {
    if c.ncols() != a.nrows() {
        return Err(Error::dim(
            "output injection C",
            format!("C has {} columns, A is {}x{}", c.ncols(), a.nrows(), a.nrows()),
        ));
    }
    match lqr_gain_weighted(&a.adjoint(), &c.adjoint(), q, r) {
        Ok(g) => Ok(Gain { matrix: g.matrix.adjoint(), abscissa: g.abscissa }),
        Err(Error::Unstabilizable { eigenvalue }) => Err(Error::Undetectable { eigenvalue: eigenvalue.conj() }),
        Err(e) => Err(e),
    }
}

/// Output injection with identity weights.
pub fn output_injection_gain(a: &Matrix, c: &Matrix) -> Result<Gain> {
    output_injection_gain_weighted(a, c, &identity(a.nrows()), &identity(c.nrows()))
}

/// Plant-level stabilizing gains for the observer-type constructions. `None`
/// means "compute with identity-weight LQR".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StabilizingGains {
    /// `K` with `A + BK` Hurwitz.
    pub state_feedback: Option<Matrix>,
    /// `L` with `A + LC` Hurwitz.
    pub output_injection: Option<Matrix>,
}

impl StabilizingGains {
    pub fn state_feedback_for(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        match &self.state_feedback {
            None => Ok(lqr_gain(a, b)?.matrix),
            Some(k) => {
                if k.shape() != (b.ncols(), a.nrows()) {
                    return Err(Error::dim(
                        "state feedback gain",
                        format!("gain is {}x{}, expected {}x{}", k.nrows(), k.ncols(), b.ncols(), a.nrows()),
                    ));
                }
                let abscissa = spectral_abscissa(&(a + b * k))?;
                if abscissa >= 0.0 {
                    return Err(Error::Precondition(format!(
                        "supplied state feedback does not stabilize (abscissa {abscissa:.3e})"
                    )));
                }
                Ok(k.clone())
            }
        }
    }

    pub fn output_injection_for(&self, a: &Matrix, c: &Matrix) -> Result<Matrix> {
        match &self.output_injection {
            None => Ok(output_injection_gain(a, c)?.matrix),
            Some(l) => {
                if l.shape() != (a.nrows(), c.nrows()) {
                    return Err(Error::dim(
                        "output injection gain",
                        format!("gain is {}x{}, expected {}x{}", l.nrows(), l.ncols(), a.nrows(), c.nrows()),
                    ));
                }
                let abscissa = spectral_abscissa(&(a + l * c))?;
                if abscissa >= 0.0 {
                    return Err(Error::Precondition(format!(
                        "supplied output injection does not stabilize (abscissa {abscissa:.3e})"
                    )));
                }
                Ok(l.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::real_matrix;

    #[test]
    fn scalar_lqr() {
        let one = real_matrix(1, 1, &[1.0]);
        let g = lqr_gain(&one, &one).unwrap();
        assert!((g.matrix[(0, 0)].re + 1.0 + 2f64.sqrt()).abs() < 1e-12);
        assert!((g.abscissa + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_output_injection() {
        let one = real_matrix(1, 1, &[1.0]);
        let g = output_injection_gain(&one, &one).unwrap();
        assert!((g.matrix[(0, 0)].re + 1.0 + 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hurwitz_plant_stays_hurwitz() {
        let a = real_matrix(2, 2, &[-1.0, 5.0, 0.0, -0.5]);
        let b = real_matrix(2, 1, &[0.0, 1.0]);
        let g = lqr_gain(&a, &b).unwrap();
        assert!(spectral_abscissa(&(&a + &b * &g.matrix)).unwrap() < 0.0);
    }

    #[test]
    fn pbh_reports_uncontrollable_mode() {
        let a = real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = real_matrix(2, 1, &[0.0, 1.0]);
        match lqr_gain(&a, &b) {
            Err(Error::Unstabilizable { eigenvalue }) => {
                assert!((eigenvalue - C64::new(1.0, 0.0)).norm() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undetectable_pair_rejected() {
        let a = real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let c = real_matrix(1, 2, &[0.0, 1.0]);
        assert!(matches!(output_injection_gain(&a, &c), Err(Error::Undetectable { .. })));
    }

    #[test]
    fn duality_is_exact() {
        let a = real_matrix(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 2.0, -1.0, 0.5]);
        let c = real_matrix(1, 3, &[1.0, 0.0, 0.0]);
        let l = output_injection_gain(&a, &c).unwrap();
        let k = lqr_gain(&a.adjoint(), &c.adjoint()).unwrap();
        assert_eq!(l.matrix, k.matrix.adjoint());
        assert!(spectral_abscissa(&(&a + &l.matrix * &c)).unwrap() < 0.0);
    }
}
