//! Complex Schur decomposition and eigenpairs.
//!
//! Hessenberg reduction is delegated to nalgebra; the QR sweep is a
//! single-shift complex iteration with Wilkinson shifts, exceptional shifts
//! every ten stalled iterations, and the Ahues-Tisseur deflation test.

use nalgebra::linalg::Hessenberg;

use super::{require_square, Matrix, Vector, C64, ZERO};
use crate::error::{Error, Result};

const ULP: f64 = f64::EPSILON;
const SAFE_MIN: f64 = f64::MIN_POSITIVE;

fn abs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Complex Givens rotation `[c s; -conj(s) c]` mapping `(f, g)` to `(r, 0)`.
fn givens(f: C64, g: C64) -> (f64, C64) {
    if g == ZERO {
        return (1.0, ZERO);
    }
    if f == ZERO {
        return (0.0, g.conj() / g.norm());
    }
    let fa = f.norm();
    let nrm = fa.hypot(g.norm());
    let c = fa / nrm;
    let s = (f / fa) * g.conj() / nrm;
    (c, s)
}

fn rotate_rows(m: &mut Matrix, i: usize, j: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for col in cols {
        let x = m[(i, col)];
        let y = m[(j, col)];
        m[(i, col)] = x * c + s * y;
        m[(j, col)] = -s.conj() * x + y * c;
    }
}

fn rotate_cols(m: &mut Matrix, i: usize, j: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for row in rows {
        let x = m[(row, i)];
        let y = m[(row, j)];
        m[(row, i)] = x * c + s.conj() * y;
        m[(row, j)] = -s * x + y * c;
    }
}

/// Wilkinson shift from the trailing 2x2 block of the active window.
fn wilkinson_shift(h: &Matrix, hi: usize) -> C64 {
    let mut t = h[(hi, hi)];
    let u = h[(hi - 1, hi)].sqrt() * h[(hi, hi - 1)].sqrt();
    let s = abs1(u);
    if s != 0.0 {
        let x = (h[(hi - 1, hi - 1)] - t) * 0.5;
        let sx = abs1(x);
        let s = s.max(abs1(x));
        let mut y = ((x / s) * (x / s) + (u / s) * (u / s)).sqrt() * s;
        if sx > 0.0 {
            let xs = x / sx;
            if xs.re * y.re + xs.im * y.im < 0.0 {
                y = -y;
            }
        }
        t -= u * (u / (x + y));
    }
    t
}

/// Complex Schur form `M = Q T Q*` with `T` upper triangular.
///
/// Returns `(Q, T)`.
pub fn schur(m: &Matrix) -> Result<(Matrix, Matrix)> {
    require_square(m, "schur")?;
    let n = m.nrows();
    if !super::is_finite(m) {
        return Err(Error::Precondition("schur: matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok((Matrix::zeros(0, 0), Matrix::zeros(0, 0)));
    }
    if n == 1 {
        return Ok((Matrix::identity(1, 1), m.clone()));
    }

    let (mut z, mut h) = Hessenberg::new(m.clone()).unpack();
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = ZERO;
        }
    }

    let smlnum = SAFE_MIN * (n as f64 / ULP);
    let itmax = 30 * n.max(10);
    let mut hi = n - 1;

    'outer: while hi > 0 {
        for its in 0..=itmax {
            // Locate the bottom of the active unreduced block.
            let mut lo = 0;
            for k in (1..=hi).rev() {
                let sub = abs1(h[(k, k - 1)]);
                if sub <= smlnum {
                    lo = k;
                    break;
                }
                let mut tst = abs1(h[(k - 1, k - 1)]) + abs1(h[(k, k)]);
                if tst == 0.0 {
                    if k >= 2 {
                        tst += h[(k - 1, k - 2)].re.abs();
                    }
                    if k < hi {
                        tst += h[(k + 1, k)].re.abs();
                    }
                }
                if sub <= ULP * tst {
                    let ab = sub.max(abs1(h[(k - 1, k)]));
                    let ba = sub.min(abs1(h[(k - 1, k)]));
                    let diff = abs1(h[(k - 1, k - 1)] - h[(k, k)]);
                    let aa = abs1(h[(k, k)]).max(diff);
                    let bb = abs1(h[(k, k)]).min(diff);
                    let s = aa + ab;
                    if ba * (ab / s) <= smlnum.max(ULP * (bb * (aa / s))) {
                        lo = k;
                        break;
                    }
                }
            }
            if lo > 0 {
                h[(lo, lo - 1)] = ZERO;
            }
            if lo >= hi {
                // 1x1 block deflated.
                hi -= 1;
                continue 'outer;
            }

            let shift = if its > 0 && its % 20 == 10 {
                h[(lo + 1, lo)].re.abs() * 0.75 + h[(lo, lo)]
            } else if its > 0 && its % 20 == 0 {
                h[(hi, hi - 1)].re.abs() * 0.75 + h[(hi, hi)]
            } else {
                wilkinson_shift(&h, hi)
            };

            // Implicit single-shift sweep over [lo, hi].
            for k in lo..hi {
                let (c, s) = if k == lo {
                    givens(h[(lo, lo)] - shift, h[(lo + 1, lo)])
                } else {
                    givens(h[(k, k - 1)], h[(k + 1, k - 1)])
                };
                let first_col = if k == lo { lo } else { k - 1 };
                rotate_rows(&mut h, k, k + 1, c, s, first_col..n);
                let last_row = (k + 2).min(hi);
                rotate_cols(&mut h, k, k + 1, c, s, 0..last_row + 1);
                rotate_cols(&mut z, k, k + 1, c, s, 0..n);
                if k > lo {
                    h[(k + 1, k - 1)] = ZERO;
                }
            }
        }
        return Err(Error::NoConvergence("complex QR iteration"));
    }

    Ok((z, h))
}

/// Eigenvalues with algebraic multiplicity, in Schur order.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<C64>> {
    let (_, t) = schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenpairs `(lambda, v)` with unit-norm `v`, via back substitution on the
/// Schur factor.
pub fn eig(m: &Matrix) -> Result<Vec<(C64, Vector)>> {
    let (q, t) = schur(m)?;
    let n = t.nrows();
    let tnorm = t.iter().fold(0.0_f64, |a, z| a.max(abs1(*z)));
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let smin = (ULP * abs1(lambda)).max(ULP * tnorm).max(SAFE_MIN);
        let mut y = Vector::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = t[(i, k)];
            for j in (i + 1)..k {
                acc += t[(i, j)] * y[j];
            }
            let mut d = t[(i, i)] - lambda;
            if abs1(d) < smin {
                d = C64::new(smin, 0.0);
            }
            y[i] = -acc / d;
            // Rescale to avoid overflow on nearly defective eigenvalues.
            let ymax = y.iter().fold(0.0_f64, |a, z| a.max(abs1(*z)));
            if ymax > 1e100 {
                y /= C64::new(ymax, 0.0);
            }
        }
        let mut v = &q * y;
        let nv = v.norm();
        v /= C64::new(nv, 0.0);
        out.push((lambda, v));
    }
    Ok(out)
}

/// `max Re(lambda)` over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}
