//! Matrix exponential by scaling and squaring with diagonal Pade approximants
//! (degrees 3, 5, 7, 9, 13 selected from the 1-norm).

use super::{identity, norm1, require_square, solve, Matrix, C64};
use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539398330063230e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068e0)];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] =
    [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn scale(m: &Matrix, s: f64) -> Matrix {
    m * C64::new(s, 0.0)
}

/// Pade approximant of low degree: returns (U, V) with r = (V - U)^{-1} (V + U).
fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut powers = vec![identity(n), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        u += scale(p, b[2 * k + 1]);
        v += scale(p, b[2 * k]);
    }
    (a * u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let inner_u = scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]);
    let u = a * (&a6 * inner_u + scale(&a6, b[7]) + scale(&a4, b[5]) + scale(&a2, b[3]) + scale(&id, b[1]));
    let inner_v = scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]);
    let v = &a6 * inner_v + scale(&a6, b[6]) + scale(&a4, b[4]) + scale(&a2, b[2]) + scale(&id, b[0]);
    (u, v)
}

/// `exp(M)`.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    require_square(m, "expm")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if !super::is_finite(m) {
        return Err(Error::Precondition("expm: non-finite entries".into()));
    }
    let nrm = norm1(m);
    for &(deg, theta) in &THETA {
        if nrm <= theta {
            let b: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(m, b);
            return solve(&(&v - &u), &(&v + &u), "expm Pade denominator");
        }
    }
    let s = if nrm > THETA_13 { (nrm / THETA_13).log2().ceil() as i32 } else { 0 };
    if s > 1000 {
        return Err(Error::NoConvergence("expm scaling (norm too large)"));
    }
    let a = scale(m, 2f64.powi(-s));
    let (u, v) = pade13(&a);
    let mut r = solve(&(&v - &u), &(&v + &u), "expm Pade denominator")?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !super::is_finite(&r) {
        return Err(Error::NoConvergence("expm overflow"));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::real_matrix;

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Matrix::zeros(3, 3)).unwrap(), identity(3));
    }

    #[test]
    fn diagonal() {
        let e = expm(&real_matrix(2, 2, &[-1.0, 0.0, 0.0, -2.0])).unwrap();
        let expected = real_matrix(2, 2, &[(-1f64).exp(), 0.0, 0.0, (-2f64).exp()]);
        assert!((e - expected).norm() < 1e-15);
    }

    #[test]
    fn nilpotent_series_terminates() {
        let nmat = real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!((expm(&nmat).unwrap() - (identity(2) + &nmat)).norm() < 1e-15);
    }

    #[test]
    fn rotation_over_large_angle() {
        // exp([[0, t], [-t, 0]]) = [[cos t, sin t], [-sin t, cos t]]
        for t in [0.01, 0.7, 3.0, 40.0, 700.0] {
            let e = expm(&real_matrix(2, 2, &[0.0, t, -t, 0.0])).unwrap();
            let expected = real_matrix(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
            assert!((e - expected).norm() < 1e-10 * t.max(1.0), "t = {t}");
        }
    }

    #[test]
    fn scalar_imaginary() {
        let m = Matrix::from_element(1, 1, C64::new(0.0, std::f64::consts::PI));
        let e = expm(&m).unwrap();
        assert!((e[(0, 0)] - C64::new(-1.0, 0.0)).norm() < 1e-14);
    }
}
