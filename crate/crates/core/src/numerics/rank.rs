use nalgebra::SVD;

use super::{Matrix, RankTolerance, C64};
use crate::error::{Error, Result};

/// Singular values plus orthonormal bases for the kernel and the range.
#[derive(Debug, Clone)]
pub struct RankInfo {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `cols x (cols - rank)`, orthonormal columns spanning `ker M`.
    pub null_basis: Matrix,
    /// `rows x rank`, orthonormal columns spanning `ran M`.
    pub range_basis: Matrix,
}

impl RankInfo {
    /// Smallest retained singular value relative to the largest (1 for rank 0).
    pub fn smallest_kept(&self) -> f64 {
        match (self.rank, self.singular_values.first()) {
            (0, _) | (_, None) => 1.0,
            (r, Some(&s1)) => self.singular_values[r - 1] / s1,
        }
    }

    /// Largest discarded singular value relative to the largest (0 if none).
    pub fn largest_dropped(&self) -> f64 {
        match self.singular_values.first() {
            Some(&s1) if s1 > 0.0 => self.singular_values.get(self.rank).map_or(0.0, |s| s / s1),
            _ => 0.0,
        }
    }
}

struct FullSvd {
    /// `rows x rows` left vectors restricted to the original rows.
    u: Matrix,
    sigma: Vec<f64>,
    /// `cols x cols`.
    v: Matrix,
}

/// SVD with a complete right basis. Wide matrices are padded with zero rows so
/// nalgebra returns all `cols` right singular vectors.
fn full_svd(m: &Matrix) -> Result<FullSvd> {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::try_new(padded, true, true, f64::EPSILON, 0).ok_or(Error::NoConvergence("SVD"))?;
    let u_full = svd.u.ok_or(Error::NoConvergence("SVD"))?;
    let v_t = svd.v_t.ok_or(Error::NoConvergence("SVD"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Matrix::from_fn(rows, order.len(), |i, j| u_full[(i, order[j])]);
    let v_adj = v_t.adjoint();
    let v = Matrix::from_fn(cols, order.len(), |i, j| v_adj[(i, order[j])]);
    Ok(FullSvd { u, sigma, v })
}

/// Numerical rank with `rank = #{sigma_i > tol * sigma_1}`.
pub fn svd_rank(m: &Matrix, tol: RankTolerance) -> Result<RankInfo> {
    svd_rank_scaled(m, tol, 0.0)
}

/// Numerical rank with `rank = #{sigma_i > tol * max(sigma_1, scale)}`. A
/// product such as `M^k` carries round-off of order `eps |M|^k`, so its rank
/// is measured against `scale = |M|^k` rather than its own, possibly tiny,
/// norm.
pub fn svd_rank_scaled(m: &Matrix, tol: RankTolerance, scale: f64) -> Result<RankInfo> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(RankInfo {
            rank: 0,
            singular_values: Vec::new(),
            null_basis: Matrix::identity(cols, cols),
            range_basis: Matrix::zeros(rows, 0),
        });
    }
    if !super::is_finite(m) {
        return Err(Error::Precondition("svd_rank: non-finite entries".into()));
    }
    let FullSvd { u, sigma, v } = full_svd(m)?;
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let cutoff = tol.relative_threshold() * s1.max(scale);
    let rank = if s1 == 0.0 { 0 } else { sigma.iter().filter(|&&s| s > cutoff).count() };
    let null_basis = v.columns(rank, cols - rank).into_owned();
    let range_basis = u.columns(0, rank).into_owned();
    let singular_values = sigma.into_iter().take(rows.min(cols)).collect();
    Ok(RankInfo { rank, singular_values, null_basis, range_basis })
}

pub fn rank(m: &Matrix, tol: RankTolerance) -> Result<usize> {
    Ok(svd_rank(m, tol)?.rank)
}

/// Moore-Penrose pseudoinverse, truncating singular values below the default
/// rank tolerance.
pub fn pinv(m: &Matrix) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0).ok_or(Error::NoConvergence("SVD"))?;
    let u = svd.u.as_ref().ok_or(Error::NoConvergence("SVD"))?;
    let v_t = svd.v_t.as_ref().ok_or(Error::NoConvergence("SVD"))?;
    let s1 = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RankTolerance::DEFAULT.relative_threshold() * s1;
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s1 == 0.0 || s <= cutoff {
            continue;
        }
        let vk = v_t.row(k).adjoint();
        let uk = u.column(k).adjoint();
        out += (vk * uk) * C64::new(1.0 / s, 0.0);
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("pinv"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{identity, real_matrix};

    #[test]
    fn zero_matrix_has_full_null_basis() {
        let info = svd_rank(&Matrix::zeros(3, 2), RankTolerance::DEFAULT).unwrap();
        assert_eq!(info.rank, 0);
        assert_eq!(info.null_basis.shape(), (2, 2));
        assert!((info.null_basis.adjoint() * &info.null_basis - identity(2)).norm() < 1e-14);
    }

    #[test]
    fn identity_has_empty_null_basis() {
        let info = svd_rank(&identity(3), RankTolerance::DEFAULT).unwrap();
        assert_eq!(info.rank, 3);
        assert_eq!(info.null_basis.ncols(), 0);
    }

    #[test]
    fn proportional_rows_rank_one() {
        let m = real_matrix(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let info = svd_rank(&m, RankTolerance::DEFAULT).unwrap();
        assert_eq!(info.rank, 1);
        assert!((&m * &info.null_basis).norm() < 1e-14);
        assert!(info.largest_dropped() < 1e-15);
    }

    #[test]
    fn wide_matrix_null_space() {
        let m = real_matrix(1, 3, &[1.0, 1.0, 1.0]);
        let info = svd_rank(&m, RankTolerance::DEFAULT).unwrap();
        assert_eq!(info.rank, 1);
        assert_eq!(info.null_basis.shape(), (3, 2));
        assert!((&m * &info.null_basis).norm() < 1e-14);
        assert_eq!(info.range_basis.shape(), (1, 1));
    }

    #[test]
    fn pinv_examples() {
        let p = pinv(&real_matrix(1, 1, &[2.0])).unwrap();
        assert!((p[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);

        let m = real_matrix(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let inv = real_matrix(2, 2, &[-2.0, 1.0, 1.5, -0.5]);
        assert!((pinv(&m).unwrap() - inv).norm() < 1e-13);

        let wide = real_matrix(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        assert!((&wide * pinv(&wide).unwrap() - identity(2)).norm() < 1e-13);
    }
}
