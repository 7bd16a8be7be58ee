//! Internal-model blocks and the checks that certify them: p-copy structure,
//! the range/kernel conditions on `(G1, G2)`, feedback invariance of those
//! conditions, and exponential stability of `G1 - G2 G2*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    hstack, identity, matrix_power, shifted, spectral_abscissa, svd_rank, svd_rank_scaled, Matrix, RankInfo,
    RankTolerance, I, ONE,
};
use crate::sysmodel::{assemble_closed_loop, Controller, Exosystem, StateSpace};

/// Frequencies, Jordan sizes and output dimension an internal model must carry.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModelSpec {
    frequencies: Vec<f64>,
    jordan_sizes: Vec<usize>,
    output_dim: usize,
}

impl InternalModelSpec {
    pub fn new(frequencies: &[f64], jordan_sizes: &[usize], output_dim: usize) -> Result<Self> {
        if output_dim == 0 {
            return Err(Error::Precondition("internal model needs output dimension >= 1".into()));
        }
        if frequencies.len() != jordan_sizes.len() {
            return Err(Error::dim(
                "internal model spec",
                format!("{} frequencies but {} Jordan sizes", frequencies.len(), jordan_sizes.len()),
            ));
        }
        if jordan_sizes.contains(&0) {
            return Err(Error::Precondition("Jordan sizes must be >= 1".into()));
        }
        for i in 0..frequencies.len() {
            for j in (i + 1)..frequencies.len() {
                if frequencies[i] == frequencies[j] {
                    return Err(Error::Precondition(format!("duplicate frequency {}", frequencies[i])));
                }
            }
        }
        Ok(InternalModelSpec { frequencies: frequencies.to_vec(), jordan_sizes: jordan_sizes.to_vec(), output_dim })
    }

    pub fn from_exosystem(exo: &Exosystem, output_dim: usize) -> Result<Self> {
        Self::new(exo.frequencies(), exo.jordan_sizes(), output_dim)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
    pub fn jordan_sizes(&self) -> &[usize] {
        &self.jordan_sizes
    }
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }
    pub fn is_diagonal(&self) -> bool {
        self.jordan_sizes.iter().all(|&n| n == 1)
    }
    /// `p * sum n_k`.
    pub fn dim(&self) -> usize {
        self.output_dim * self.jordan_sizes.iter().sum::<usize>()
    }
}

/// Block-diagonal matrix of `n_k x n_k` block Jordan cells, each with
/// `i omega_k I_p` on the diagonal and `I_p` on the superdiagonal.
pub fn build_jordan_internal_model(spec: &InternalModelSpec) -> Matrix {
    build_internal_model(&full_layout(spec))
}

/// One frequency of an internal model: `jordan` Jordan levels, each `width`
/// copies wide (`width = p` for a full model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBlock {
    pub omega: f64,
    pub jordan: usize,
    pub width: usize,
}

impl ModelBlock {
    pub fn dim(&self) -> usize {
        self.jordan * self.width
    }
}

/// Blocks of the full model described by `spec`.
pub fn full_layout(spec: &InternalModelSpec) -> Vec<ModelBlock> {
    spec.frequencies
        .iter()
        .zip(&spec.jordan_sizes)
        .map(|(&omega, &jordan)| ModelBlock { omega, jordan, width: spec.output_dim })
        .collect()
}

/// Internal model for an arbitrary layout; equal to
/// [`build_jordan_internal_model`] on [`full_layout`].
pub fn build_internal_model(blocks: &[ModelBlock]) -> Matrix {
    let dim: usize = blocks.iter().map(ModelBlock::dim).sum();
    let mut g1 = Matrix::zeros(dim, dim);
    let mut off = 0;
    for b in blocks {
        for l in 0..b.jordan {
            for i in 0..b.width {
                let row = off + l * b.width + i;
                g1[(row, row)] = I * b.omega;
                if l + 1 < b.jordan {
                    g1[(row, row + b.width)] = ONE;
                }
            }
        }
        off += b.dim();
    }
    g1
}

/// Closest any rank decision came to the threshold: the smallest retained and
/// the largest discarded relative singular value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMargin {
    pub smallest_kept: f64,
    pub largest_dropped: f64,
}

impl Default for RankMargin {
    fn default() -> Self {
        RankMargin { smallest_kept: 1.0, largest_dropped: 0.0 }
    }
}

impl RankMargin {
    fn absorb(&mut self, info: &RankInfo) {
        self.smallest_kept = self.smallest_kept.min(info.smallest_kept());
        self.largest_dropped = self.largest_dropped.max(info.largest_dropped());
    }

    fn merge(&mut self, other: RankMargin) {
        self.smallest_kept = self.smallest_kept.min(other.smallest_kept);
        self.largest_dropped = self.largest_dropped.max(other.largest_dropped);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConditions {
    pub omega: f64,
    /// `ran(i omega - G1)` and `ran G2` intersect trivially.
    pub range_intersection: bool,
    /// `ker(i omega - G1)^{n_k - 1}` lies in `ran(i omega - G1)`.
    pub kernel_in_range: bool,
    pub margin: RankMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GConditionsReport {
    pub frequencies: Vec<FrequencyConditions>,
    /// `ker G2 = {0}`.
    pub g2_injective: bool,
    pub pass: bool,
    pub margin: RankMargin,
}

fn check_controller_dims(g1: &Matrix, g2: &Matrix, spec: &InternalModelSpec) -> Result<()> {
    if !g1.is_square() {
        return Err(Error::dim("G1", format!("G1 must be square, got {}x{}", g1.nrows(), g1.ncols())));
    }
    if g2.nrows() != g1.nrows() {
        return Err(Error::dim("G2", format!("G2 has {} rows, G1 is {}x{}", g2.nrows(), g1.nrows(), g1.nrows())));
    }
    if g2.ncols() != spec.output_dim {
        return Err(Error::dim(
            "G2",
            format!("G2 has {} columns, output dimension is {}", g2.ncols(), spec.output_dim),
        ));
    }
    Ok(())
}

/// Rank tests for the three range/kernel conditions on `(G1, G2)`.
pub fn check_g_conditions(g1: &Matrix, g2: &Matrix, spec: &InternalModelSpec) -> Result<GConditionsReport> {
    check_controller_dims(g1, g2, spec)?;
    let tol = RankTolerance::DEFAULT;
    let mut total = RankMargin::default();

    let g2_info = svd_rank(g2, tol)?;
    total.absorb(&g2_info);
    let g2_injective = g2_info.rank == spec.output_dim;

    let mut per = Vec::with_capacity(spec.frequencies.len());
    for (&w, &nk) in spec.frequencies.iter().zip(&spec.jordan_sizes) {
        let mut margin = RankMargin::default();
        let r1 = shifted(g1, I * w);
        let scale = shift_scale(g1, w);
        let r1_info = svd_rank_scaled(&r1, tol, scale)?;
        margin.absorb(&r1_info);
        let both = svd_rank_scaled(&hstack(&[&r1, g2])?, tol, scale)?;
        margin.absorb(&both);
        let range_intersection = both.rank == r1_info.rank + g2_info.rank;

        let kernel_in_range = if nk == 1 {
            true
        } else {
            let pow = matrix_power(&r1, nk - 1);
            let pow_info = svd_rank_scaled(&pow, tol, scale.powi(nk as i32 - 1))?;
            margin.absorb(&pow_info);
            if pow_info.null_basis.ncols() == 0 {
                true
            } else {
                let aug = svd_rank_scaled(&hstack(&[&r1, &pow_info.null_basis])?, tol, scale)?;
                margin.absorb(&aug);
                aug.rank == r1_info.rank
            }
        };
        total.merge(margin);
        per.push(FrequencyConditions { omega: w, range_intersection, kernel_in_range, margin });
    }
    let pass = g2_injective && per.iter().all(|f| f.range_intersection && f.kernel_in_range);
    Ok(GConditionsReport { frequencies: per, g2_injective, pass, margin: total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCount {
    pub omega: f64,
    pub jordan_size: usize,
    /// Jordan chains of length `>= n_k` at `i omega`.
    pub chains: usize,
    /// `dim ker(i omega - G1)`.
    pub kernel_dim: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCopyReport {
    pub frequencies: Vec<ChainCount>,
    pub required: usize,
    pub pass: bool,
    pub margin: RankMargin,
}

/// Size of the round-off in `G1 - i omega`, against which its rank (and the
/// ranks of its powers) is measured.
fn shift_scale(g1: &Matrix, omega: f64) -> f64 {
    g1.norm() + omega.abs()
}

/// Counts Jordan chains of `G1` by rank differences of powers of
/// `G1 - i omega_k`.
pub fn check_p_copy(g1: &Matrix, spec: &InternalModelSpec) -> Result<PCopyReport> {
    if !g1.is_square() {
        return Err(Error::dim("G1", format!("G1 must be square, got {}x{}", g1.nrows(), g1.ncols())));
    }
    let tol = RankTolerance::DEFAULT;
    let nc = g1.nrows();
    let p = spec.output_dim;
    let mut margin = RankMargin::default();
    let mut per = Vec::new();
    for (&w, &nk) in spec.frequencies.iter().zip(&spec.jordan_sizes) {
        let m = g1 - identity(nc) * (I * w);
        let scale = shift_scale(g1, w);
        let rank_of = |k: usize, margin: &mut RankMargin| -> Result<usize> {
            if k == 0 {
                return Ok(nc);
            }
            let info = svd_rank_scaled(&matrix_power(&m, k), tol, scale.powi(k as i32))?;
            margin.absorb(&info);
            Ok(info.rank)
        };
        let r1 = rank_of(1, &mut margin)?;
        let before = if nk == 1 { nc } else { rank_of(nk - 1, &mut margin)? };
        let at = if nk == 1 { r1 } else { rank_of(nk, &mut margin)? };
        let chains = before.saturating_sub(at);
        let kernel_dim = nc - r1;
        per.push(ChainCount { omega: w, jordan_size: nk, chains, kernel_dim, pass: chains >= p && kernel_dim >= p });
    }
    let pass = per.iter().all(|c| c.pass);
    Ok(PCopyReport { frequencies: per, required: p, pass, margin })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackInvariance {
    /// Hypotheses hold; the report is for `(G1 + G2 K, G2)` and passes.
    Holds(GConditionsReport),
    NotApplicable(String),
}

/// Checks that feedback `G1 + G2 K` preserves the conditions on `(G1, G2)`
/// when `S` is diagonal and `K` vanishes on every `ker(i omega_k - G1)`.
pub fn check_feedback_invariance(
    g1: &Matrix,
    g2: &Matrix,
    k: &Matrix,
    spec: &InternalModelSpec,
) -> Result<FeedbackInvariance> {
    check_controller_dims(g1, g2, spec)?;
    if k.shape() != (g2.ncols(), g1.nrows()) {
        return Err(Error::dim(
            "K",
            format!("K is {}x{}, expected {}x{}", k.nrows(), k.ncols(), g2.ncols(), g1.nrows()),
        ));
    }
    if !spec.is_diagonal() {
        return Ok(FeedbackInvariance::NotApplicable("exosystem has a nontrivial Jordan block".into()));
    }
    let base = check_g_conditions(g1, g2, spec)?;
    if !base.pass {
        return Ok(FeedbackInvariance::NotApplicable("(G1, G2) do not satisfy the conditions".into()));
    }
    let k_scale = k.norm().max(1.0);
    for &w in &spec.frequencies {
        let null = svd_rank(&shifted(g1, I * w), RankTolerance::DEFAULT)?.null_basis;
        let leak = (k * &null).norm();
        if leak > 1e-9 * k_scale {
            return Ok(FeedbackInvariance::NotApplicable(format!(
                "K does not vanish on ker(i*{w} - G1) (|K N| = {leak:.3e})"
            )));
        }
    }
    let report = check_g_conditions(&(g1 + g2 * k), g2, spec)?;
    if !report.pass {
        return Err(Error::RankAlert(
            "feedback-invariance hypotheses hold but (G1 + G2 K, G2) fail the conditions".into(),
        ));
    }
    Ok(FeedbackInvariance::Holds(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativeReport {
    /// Diagonal value and block size of each group of `G1`.
    pub blocks: Vec<(f64, usize)>,
    pub abscissa: f64,
    pub pass: bool,
}

/// Groups of consecutive equal diagonal entries `i omega_k` of a diagonal `g1`.
fn diagonal_groups(g1: &Matrix) -> Result<Vec<(f64, usize)>> {
    let n = g1.nrows();
    let scale = crate::numerics::max_abs(g1).max(1.0);
    for i in 0..n {
        for j in 0..n {
            if i != j && g1[(i, j)].norm() > 1e-12 * scale {
                return Err(Error::Precondition("G1 must be diagonal".into()));
            }
        }
        if g1[(i, i)].re.abs() > 1e-12 * scale {
            return Err(Error::Precondition("G1 must have a purely imaginary diagonal".into()));
        }
    }
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        let w = g1[(i, i)].im;
        match groups.last_mut() {
            Some((last, size)) if (*last - w).abs() <= 1e-12 * scale => *size += 1,
            _ => groups.push((w, 1)),
        }
    }
    Ok(groups)
}

/// For diagonal `G1 = diag(i omega_k I)` and square blocks `G2^k`, checks each
/// block is invertible and that `G1 - G2 G2*` is Hurwitz.
pub fn check_dissipative_stability(g1: &Matrix, g2: &Matrix) -> Result<DissipativeReport> {
    if !g1.is_square() || g2.nrows() != g1.nrows() {
        return Err(Error::dim("G2", format!("G2 has {} rows, G1 is {}x{}", g2.nrows(), g1.nrows(), g1.ncols())));
    }
    let blocks = diagonal_groups(g1)?;
    let p = g2.ncols();
    let mut off = 0;
    for (k, &(_, size)) in blocks.iter().enumerate() {
        if size != p {
            return Err(Error::dim("G2 block", format!("block {k} of G2 is {size}x{p}; blocks must be square")));
        }
        let block = g2.rows(off, size).into_owned();
        if svd_rank(&block, RankTolerance::DEFAULT)?.rank < p {
            return Err(Error::GainNotInvertible { k });
        }
        off += size;
    }
    let abscissa = spectral_abscissa(&(g1 - g2 * g2.adjoint()))?;
    Ok(DissipativeReport { blocks, abscissa, pass: abscissa < -1e-12 })
}

/// Finite-dimensional robust-regulation certificate: closed-loop stability
/// plus the internal-model conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub hurwitz: bool,
    pub abscissa: f64,
    pub g_conditions: bool,
    pub p_copy: bool,
    pub g_report: GConditionsReport,
    pub p_copy_report: PCopyReport,
}

impl Certificate {
    pub fn pass(&self) -> bool {
        self.hurwitz && self.g_conditions && self.p_copy
    }
}

pub fn certify_rorp(plant: &StateSpace, ctrl: &Controller, exo: &Exosystem) -> Result<Certificate> {
    let cl = assemble_closed_loop(plant, ctrl, exo)?;
    let abscissa = spectral_abscissa(&cl.ae)?;
    let spec = InternalModelSpec::from_exosystem(exo, plant.outputs())?;
    let g_report = check_g_conditions(ctrl.g1(), ctrl.g2(), &spec)?;
    let p_copy_report = check_p_copy(ctrl.g1(), &spec)?;
    Ok(Certificate {
        hurwitz: abscissa < 0.0,
        abscissa,
        g_conditions: g_report.pass,
        p_copy: p_copy_report.pass,
        g_report,
        p_copy_report,
    })
}
