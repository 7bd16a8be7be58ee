//! Controller with an internal model in the upper-left corner and an observer
//! of the plant below it:
//!
//! ```text
//! G1' = [[G1, G2 (C + D K2)], [0, A + B K2 + L (C + D K2)]]
//! G2' = [G2; L],  K = (K1, -K2),  L = L1 + H G2
//! ```
//!
//! where `H` solves `H G1 = (A + L1 C) H + (B + L1 D) K1`.

use crate::error::{Error, Result};
use crate::internal_model::{
    build_internal_model, check_dissipative_stability, full_layout, InternalModelSpec, ModelBlock,
};
use crate::minimal::{
    coupling_block, invertible_transfer, normalized_basis, reduced_generators, require_diagonal, surjective_transfer,
    GainChoice, PerturbedPlant,
};
use crate::numerics::{
    from_blocks, hstack, identity, pinv, solve, spectral_abscissa, svd_rank, Matrix, RankTolerance, C64, I,
};
use crate::stabilize::{output_injection_gain, StabilizingGains};
use crate::sysmodel::{Controller, ControllerMeta, Exosystem, Family, Resolvent, StateSpace};

/// Intermediate quantities of the synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularRecord {
    /// Internal model block (`dim Z0` square).
    pub g1: Matrix,
    pub k1: Matrix,
    pub k2: Matrix,
    pub l1: Matrix,
    pub h: Matrix,
    pub c1: Matrix,
    pub g2: Matrix,
    pub l: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangularDesign {
    pub controller: Controller,
    pub record: TriangularRecord,
}

impl TriangularDesign {
    /// `Q = [[I, 0, 0], [0, I, 0], [-I, H, -I]]` on `(x, z0, x_obs)`; `Q = Q^-1`
    /// and `Q Ae Q` is block upper triangular.
    pub fn similarity(&self) -> Matrix {
        let (n, nz) = self.record.h.shape();
        let id_n = identity(n);
        let id_z = identity(nz);
        let zn_z = Matrix::zeros(n, nz);
        let zz_n = Matrix::zeros(nz, n);
        let zn_n = Matrix::zeros(n, n);
        from_blocks(&[&[&id_n, &zn_z, &zn_n], &[&zz_n, &id_z, &zz_n], &[&(-&id_n), &self.record.h, &(-&id_n)]])
            .expect("consistent block sizes")
    }

    /// `(A + B K2, G1 + G2 C1, A + L1 C)`.
    pub fn diagonal_blocks(&self, plant: &StateSpace) -> [Matrix; 3] {
        let r = &self.record;
        [plant.a() + plant.b() * &r.k2, &r.g1 + &r.g2 * &r.c1, plant.a() + &r.l1 * plant.c()]
    }
}

/// `H = (H_k^l)` with
/// `H_k^l = sum_{j=1}^{l} (-1)^{l-j} R(i omega_k, A_L)^{l+1-j} B_L K1^{kj}`.
pub fn sylvester_triangular_coupling(a_l: &Matrix, b_l: &Matrix, k1: &Matrix, blocks: &[ModelBlock]) -> Result<Matrix> {
    let n = a_l.nrows();
    let total: usize = blocks.iter().map(ModelBlock::dim).sum();
    if k1.ncols() != total || k1.nrows() != b_l.ncols() || b_l.nrows() != n {
        return Err(Error::dim(
            "structured Sylvester",
            format!(
                "K1 is {}x{}, B_L is {}x{}, model has dimension {total}",
                k1.nrows(),
                k1.ncols(),
                b_l.nrows(),
                b_l.ncols()
            ),
        ));
    }
    let mut h = Matrix::zeros(n, total);
    let mut off = 0;
    for b in blocks {
        let res = Resolvent::new(a_l, I * b.omega)?;
        let terms =
            (0..b.jordan).map(|j| Ok(b_l * k1.columns(off + j * b.width, b.width))).collect::<Result<Vec<Matrix>>>()?;
        for l in 0..b.jordan {
            let mut acc = Matrix::zeros(n, b.width);
            for (j, term) in terms.iter().enumerate().take(l + 1) {
                let mut v = term.clone();
                for _ in 0..(l + 1 - j) {
                    v = res.apply(&v)?;
                }
                if (l - j) % 2 == 0 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            h.columns_mut(off + l * b.width, b.width).copy_from(&acc);
        }
        off += b.dim();
    }
    Ok(h)
}

/// `P_L(lambda) = C R(lambda, A + L1 C) (B + L1 D) + D`.
pub fn observer_transfer(plant: &StateSpace, l1: &Matrix, lambda: C64) -> Result<Matrix> {
    let a_l = plant.a() + l1 * plant.c();
    let b_l = plant.b() + l1 * plant.d();
    Ok(plant.c() * Resolvent::new(&a_l, lambda)?.apply(&b_l)? + plant.d())
}

struct Parts {
    g1: Matrix,
    k1: Matrix,
    k2: Matrix,
    l1: Matrix,
    h: Matrix,
    c1: Matrix,
    g2: Matrix,
}

fn assemble(plant: &StateSpace, parts: Parts, meta: ControllerMeta) -> Result<TriangularDesign> {
    let Parts { g1, k1, k2, l1, h, c1, g2 } = parts;
    let l = &l1 + &h * &g2;
    let ck2 = plant.c() + plant.d() * &k2;
    let top_right = &g2 * &ck2;
    let bottom_right = plant.a() + plant.b() * &k2 + &l * &ck2;
    let bottom_left = Matrix::zeros(plant.states(), g1.nrows());
    let big_g1 = from_blocks(&[&[&g1, &top_right], &[&bottom_left, &bottom_right]])?;
    let big_g2 = crate::numerics::vstack(&[&g2, &l])?;
    let big_k = hstack(&[&k1, &(-&k2)])?;
    let controller = Controller::new(big_g1, big_g2, big_k, meta)?;
    Ok(TriangularDesign { controller, record: TriangularRecord { g1, k1, k2, l1, h, c1, g2, l } })
}

fn observer_pair(plant: &StateSpace, gains: &StabilizingGains) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
    let k2 = gains.state_feedback_for(plant.a(), plant.b())?;
    let l1 = gains.output_injection_for(plant.a(), plant.c())?;
    let a_l = plant.a() + &l1 * plant.c();
    let b_l = plant.b() + &l1 * plant.d();
    Ok((k2, l1, a_l, b_l))
}

/// General construction for any exosystem. `K1^{k1}` is `P(i omega_k)^+` (or
/// the supplied block), `K1^{kl} = 0` for `l >= 2`, and `G2` comes from
/// output injection on `(C1, G1)`.
pub fn triangular_controller(
    plant: &StateSpace,
    exo: &Exosystem,
    gains: &StabilizingGains,
    k1_choice: &GainChoice,
) -> Result<TriangularDesign> {
    let (m, p) = (plant.inputs(), plant.outputs());
    let spec = InternalModelSpec::from_exosystem(exo, p)?;
    let layout = full_layout(&spec);
    if let GainChoice::Custom(blocks) = k1_choice {
        if blocks.len() != layout.len() {
            return Err(Error::dim(
                "custom gains",
                format!("{} blocks for {} frequencies", blocks.len(), layout.len()),
            ));
        }
    }
    let (k2, l1, a_l, b_l) = observer_pair(plant, gains)?;

    let mut k1 = Matrix::zeros(m, spec.dim());
    let mut off = 0;
    for (k, b) in layout.iter().enumerate() {
        let pk = surjective_transfer(plant, k, b.omega)?;
        let first = match k1_choice {
            GainChoice::Pseudoinverse => pinv(&pk)?,
            GainChoice::Custom(blocks) => blocks[k].clone(),
        };
        if first.shape() != (m, p) {
            return Err(Error::dim(
                "custom gains",
                format!("block {k} is {}x{}, expected {m}x{p}", first.nrows(), first.ncols()),
            ));
        }
        coupling_block(&pk, &first, k)?;
        let pl = observer_transfer(plant, &l1, I * b.omega)?;
        if svd_rank(&(pl * &first), RankTolerance::DEFAULT)?.rank < p {
            return Err(Error::RankAlert(format!("P_L(i omega_{k}) K1 is singular although P(i omega_{k}) K1 is not")));
        }
        k1.columns_mut(off, p).copy_from(&first);
        off += b.dim();
    }
    let g1 = build_internal_model(&layout);
    let h = sylvester_triangular_coupling(&a_l, &b_l, &k1, &layout)?;
    let c1 = plant.c() * &h + plant.d() * &k1;
    let g2 = match output_injection_gain(&g1, &c1) {
        Ok(g) => g.matrix,
        Err(Error::Undetectable { eigenvalue }) => {
            return Err(Error::RankAlert(format!("(C1, G1) is not detectable at {eigenvalue}")))
        }
        Err(e) => return Err(e),
    };
    let mut meta = ControllerMeta::new(Family::Triangular);
    meta.internal_model = layout.iter().map(|b| (b.omega, b.width)).collect();
    assemble(plant, Parts { g1, k1, k2, l1, h, c1, g2 }, meta)
}

/// Diagonal exosystem: `G2 = -C1*` in closed form. With the default
/// `K1^k = P_L(i omega_k)^+` every block of `G2` is `-I`.
pub fn triangular_controller_diag(
    plant: &StateSpace,
    exo: &Exosystem,
    gains: &StabilizingGains,
    k1_choice: &GainChoice,
) -> Result<TriangularDesign> {
    require_diagonal(exo)?;
    let (m, p) = (plant.inputs(), plant.outputs());
    let spec = InternalModelSpec::from_exosystem(exo, p)?;
    let layout = full_layout(&spec);
    if let GainChoice::Custom(blocks) = k1_choice {
        if blocks.len() != layout.len() {
            return Err(Error::dim(
                "custom gains",
                format!("{} blocks for {} frequencies", blocks.len(), layout.len()),
            ));
        }
    }
    let (k2, l1, a_l, b_l) = observer_pair(plant, gains)?;
    let mut blocks = Vec::new();
    for (k, b) in layout.iter().enumerate() {
        let pk = surjective_transfer(plant, k, b.omega)?;
        let block = match k1_choice {
            GainChoice::Pseudoinverse => pinv(&observer_transfer(plant, &l1, I * b.omega)?)?,
            GainChoice::Custom(given) => given[k].clone(),
        };
        if block.shape() != (m, p) {
            return Err(Error::dim(
                "custom gains",
                format!("block {k} is {}x{}, expected {m}x{p}", block.nrows(), block.ncols()),
            ));
        }
        coupling_block(&pk, &block, k)?;
        blocks.push(block);
    }
    let k1 = hstack(&blocks.iter().collect::<Vec<_>>())?;
    let g1 = build_internal_model(&layout);
    let h = sylvester_triangular_coupling(&a_l, &b_l, &k1, &layout)?;
    let c1 = plant.c() * &h + plant.d() * &k1;
    let g2 = -c1.adjoint();
    let dissipative = check_dissipative_stability(&g1, &g2)?;
    if !dissipative.pass {
        return Err(Error::RankAlert(format!("G1 - G2 G2* is not Hurwitz (abscissa {:.3e})", dissipative.abscissa)));
    }
    let mut meta = ControllerMeta::new(Family::TriangularDiag);
    meta.internal_model = layout.iter().map(|b| (b.omega, b.width)).collect();
    assemble(plant, Parts { g1, k1, k2, l1, h, c1, g2 }, meta)
}

/// Reduced internal model for a finite perturbation class: frequency `k`
/// carries `p_k = dim S_k` copies with `K1^k` a basis of `S_k` normalized so
/// that `P_L(i omega_k) K1^k` has orthonormal columns (or `P(i omega_k)^-1`
/// when `p_k = p`), and `G2 = -C1*`.
pub fn triangular_controller_reduced(
    plant: &StateSpace,
    exo: &Exosystem,
    class: &[PerturbedPlant],
    gains: &StabilizingGains,
) -> Result<TriangularDesign> {
    require_diagonal(exo)?;
    let p = plant.outputs();
    let transfers = exo
        .frequencies()
        .iter()
        .enumerate()
        .map(|(k, &w)| invertible_transfer(plant, k, w))
        .collect::<Result<Vec<_>>>()?;
    let bases = reduced_generators(plant, exo, class)?;
    let (k2, l1, a_l, b_l) = observer_pair(plant, gains)?;

    let mut layout = Vec::new();
    let mut blocks = Vec::new();
    for (k, (&omega, basis)) in exo.frequencies().iter().zip(&bases).enumerate() {
        let width = basis.ncols();
        if width == 0 {
            continue;
        }
        let block = if width < p {
            normalized_basis(&observer_transfer(plant, &l1, I * omega)?, basis)?
        } else {
            solve(&transfers[k], &identity(p), "P(i omega_k)")?
        };
        layout.push(ModelBlock { omega, jordan: 1, width });
        blocks.push(block);
    }
    let k1 =
        if blocks.is_empty() { Matrix::zeros(plant.inputs(), 0) } else { hstack(&blocks.iter().collect::<Vec<_>>())? };
    let g1 = build_internal_model(&layout);
    let h = sylvester_triangular_coupling(&a_l, &b_l, &k1, &layout)?;
    let c1 = plant.c() * &h + plant.d() * &k1;
    let g2 = -c1.adjoint();
    let abscissa = spectral_abscissa(&(&g1 + &g2 * &c1))?;
    if abscissa >= 0.0 {
        return Err(Error::RankAlert(format!("G1 + G2 C1 is not Hurwitz (abscissa {abscissa:.3e})")));
    }
    let mut meta = ControllerMeta::new(Family::TriangularReduced);
    meta.internal_model = layout.iter().map(|b| (b.omega, b.width)).collect();
    assemble(plant, Parts { g1, k1, k2, l1, h, c1, g2 }, meta)
}
