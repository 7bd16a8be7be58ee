//! Minimal-order controller for stable plants and diagonal exosystems: the
//! internal model alone, driven through a low-gain `K = eps K0`.

use crate::error::{Error, Result};
use crate::internal_model::{build_jordan_internal_model, InternalModelSpec};
use crate::numerics::{
    block_diag, hstack, identity, pinv, solve, spectral_abscissa, svd_rank, vstack, Matrix, RankTolerance, C64, I,
};
use crate::sysmodel::{assemble_closed_loop, Controller, ControllerMeta, Exosystem, Family, StateSpace};

/// How the blocks `K0^k` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum GainChoice {
    /// `K0^k = P(i omega_k)^+`, giving `G2^k = -I`.
    Pseudoinverse,
    /// User-supplied `m x p` blocks, one per frequency.
    Custom(Vec<Matrix>),
}

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

pub(crate) fn require_stable(plant: &StateSpace) -> Result<()> {
    let abscissa = spectral_abscissa(plant.a())?;
    if abscissa >= 0.0 {
        return Err(Error::UnstablePlant { abscissa });
    }
    Ok(())
}

pub(crate) fn require_diagonal(exo: &Exosystem) -> Result<()> {
    if !exo.is_diagonal() {
        return Err(Error::Precondition("this construction needs a diagonal exosystem (all Jordan sizes 1)".into()));
    }
    Ok(())
}

/// `P(i omega_k)`, checked to have full row rank.
pub(crate) fn surjective_transfer(plant: &StateSpace, k: usize, omega: f64) -> Result<Matrix> {
    let pk = plant.transfer(I * omega)?;
    let rank = svd_rank(&pk, RankTolerance::DEFAULT)?.rank;
    if rank < plant.outputs() {
        return Err(Error::NotSurjective { k, omega, rank, outputs: plant.outputs() });
    }
    Ok(pk)
}

/// `P(i omega_k)`, checked to be square and invertible.
pub(crate) fn invertible_transfer(plant: &StateSpace, k: usize, omega: f64) -> Result<Matrix> {
    if plant.inputs() != plant.outputs() {
        return Err(Error::dim(
            "plant",
            format!("needs as many inputs as outputs, got {} and {}", plant.inputs(), plant.outputs()),
        ));
    }
    let pk = plant.transfer(I * omega)?;
    if svd_rank(&pk, RankTolerance::DEFAULT)?.rank < plant.outputs() {
        return Err(Error::NotInvertible { k, omega });
    }
    Ok(pk)
}

/// `-(P K0)*` after checking `P K0` is invertible.
pub(crate) fn coupling_block(pk: &Matrix, k0: &Matrix, k: usize) -> Result<Matrix> {
    let prod = pk * k0;
    if !prod.is_square() || svd_rank(&prod, RankTolerance::DEFAULT)?.rank < prod.nrows() {
        return Err(Error::GainNotInvertible { k });
    }
    Ok(-prod.adjoint())
}

pub fn minimal_controller(plant: &StateSpace, exo: &Exosystem, epsilon: f64, gains: &GainChoice) -> Result<Controller> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    require_stable(plant)?;
    require_diagonal(exo)?;
    let (m, p) = (plant.inputs(), plant.outputs());
    if let GainChoice::Custom(blocks) = gains {
        if blocks.len() != exo.frequencies().len() {
            return Err(Error::dim(
                "custom gains",
                format!("{} blocks for {} frequencies", blocks.len(), exo.frequencies().len()),
            ));
        }
    }
    let mut k0_blocks = Vec::new();
    let mut g2_blocks = Vec::new();
    for (k, &w) in exo.frequencies().iter().enumerate() {
        let pk = surjective_transfer(plant, k, w)?;
        let k0 = match gains {
            GainChoice::Pseudoinverse => pinv(&pk)?,
            GainChoice::Custom(blocks) => {
                if blocks[k].shape() != (m, p) {
                    return Err(Error::dim(
                        "custom gains",
                        format!("block {k} is {}x{}, expected {m}x{p}", blocks[k].nrows(), blocks[k].ncols()),
                    ));
                }
                blocks[k].clone()
            }
        };
        g2_blocks.push(coupling_block(&pk, &k0, k)?);
        k0_blocks.push(k0);
    }
    let spec = InternalModelSpec::from_exosystem(exo, p)?;
    let g1 = build_jordan_internal_model(&spec);
    let g2 = vstack(&g2_blocks.iter().collect::<Vec<_>>())?;
    let k = hstack(&k0_blocks.iter().collect::<Vec<_>>())? * c(epsilon);
    let mut meta = ControllerMeta::new(Family::Minimal);
    meta.epsilon = Some(epsilon);
    meta.internal_model = exo.frequencies().iter().map(|&w| (w, p)).collect();
    Controller::new(g1, g2, k, meta)
}

/// Same controller with `K` rescaled to a new `epsilon`.
pub fn rescale_epsilon(ctrl: &Controller, epsilon: f64) -> Result<Controller> {
    let old = ctrl.meta.epsilon.ok_or_else(|| Error::Precondition("controller has no epsilon to rescale".into()))?;
    let mut meta = ctrl.meta.clone();
    meta.epsilon = Some(epsilon);
    Controller::new(ctrl.g1().clone(), ctrl.g2().clone(), ctrl.k() * c(epsilon / old), meta)
}

/// Largest `eps = eps_max 2^-j` (`j <= 40`) with `Ae(eps)` and `Ae(eps/2)`
/// both Hurwitz, then `refinement` bisection steps towards the next grid
/// point above.
pub fn tune_epsilon(
    plant: &StateSpace,
    exo: &Exosystem,
    epsilon_max: f64,
    refinement: usize,
    gains: &GainChoice,
) -> Result<f64> {
    let base = minimal_controller(plant, exo, 1.0, gains)?;
    tune_epsilon_for(plant, exo, &base, epsilon_max, refinement)
}

/// [`tune_epsilon`] for any controller whose `K` scales linearly in `eps`.
pub fn tune_epsilon_for(
    plant: &StateSpace,
    exo: &Exosystem,
    base: &Controller,
    epsilon_max: f64,
    refinement: usize,
) -> Result<f64> {
    if !(epsilon_max > 0.0 && epsilon_max.is_finite()) {
        return Err(Error::Precondition(format!("epsilon_max must be positive, got {epsilon_max}")));
    }
    let hurwitz = |eps: f64| -> Result<bool> {
        let ctrl = rescale_epsilon(base, eps)?;
        let cl = assemble_closed_loop(plant, &ctrl, exo)?;
        Ok(spectral_abscissa(&cl.ae)? < 0.0)
    };
    let accept = |eps: f64| -> Result<bool> { Ok(hurwitz(eps)? && hurwitz(eps / 2.0)?) };

    let mut found = None;
    for j in 0..=40 {
        let eps = epsilon_max * 2f64.powi(-j);
        if accept(eps)? {
            found = Some(j);
            break;
        }
    }
    let j = found.ok_or(Error::EpsilonSearchFailed { smallest: epsilon_max * 2f64.powi(-40) })?;
    let mut lo = epsilon_max * 2f64.powi(-j);
    if j == 0 {
        return Ok(lo);
    }
    let mut hi = 2.0 * lo;
    for _ in 0..refinement {
        let mid = 0.5 * (lo + hi);
        if accept(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Closes `u = -kappa y + u_new` around the plant (`m = p` required):
/// `(A + B K1 (I - D K1)^-1 C, B (I - K1 D)^-1, (I - D K1)^-1 C, (I - D K1)^-1 D)`
/// with `K1 = -kappa I`.
pub fn prestabilize_output_feedback(plant: &StateSpace, kappa: f64) -> Result<StateSpace> {
    let (m, p) = (plant.inputs(), plant.outputs());
    if m != p {
        return Err(Error::dim("output feedback", format!("K1 = -kappa I needs m = p, got m = {m}, p = {p}")));
    }
    if !kappa.is_finite() {
        return Err(Error::Precondition("kappa must be finite".into()));
    }
    let k1 = identity(p) * c(-kappa);
    let out_side = identity(p) - plant.d() * &k1;
    let in_side = identity(m) - &k1 * plant.d();
    let ill = |_| Error::FeedbackIllPosed;
    let c_new = solve(&out_side, plant.c(), "I - D K1").map_err(ill)?;
    let d_new = solve(&out_side, plant.d(), "I - D K1").map_err(ill)?;
    let b_new = solve(&in_side.transpose(), &plant.b().transpose(), "I - K1 D").map_err(ill)?.transpose();
    let a_new = plant.a() + plant.b() * &k1 * &c_new;
    let out = StateSpace::new(a_new, b_new, c_new, d_new)?;
    match plant.labels() {
        Some(l) => out.with_labels(l.clone()),
        None => Ok(out),
    }
}

/// Real-valued variant for real plants and frequency sets closed under
/// negation: each pair `(omega, -omega)` becomes the rotation block
/// `[[0, omega I], [-omega I, 0]]`, and `omega = 0` keeps a `0_p` block.
pub fn minimal_controller_real(plant: &StateSpace, exo: &Exosystem, epsilon: f64) -> Result<Controller> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    if !plant.is_real() {
        return Err(Error::Precondition("real controller form needs a real plant".into()));
    }
    require_stable(plant)?;
    require_diagonal(exo)?;
    let p = plant.outputs();
    let freqs = exo.frequencies();
    let position = |w: f64| freqs.iter().position(|&x| x == w);
    let mut positive = Vec::new();
    let mut zero = None;
    for (k, &w) in freqs.iter().enumerate() {
        if w == 0.0 {
            zero = Some(k);
        } else if w > 0.0 {
            if position(-w).is_none() {
                return Err(Error::Precondition(format!("frequency {w} has no partner {}", -w)));
            }
            positive.push((k, w));
        } else if position(-w).is_none() {
            return Err(Error::Precondition(format!("frequency {w} has no partner {}", -w)));
        }
    }

    let mut g1_blocks = Vec::new();
    let mut g2_blocks = Vec::new();
    let mut k0_blocks = Vec::new();
    let mut layout = Vec::new();
    for &(k, w) in &positive {
        let pk = surjective_transfer(plant, k, w)?;
        let pd = pinv(&pk)?;
        let re = pd.map(|z| c(z.re));
        let im = pd.map(|z| c(z.im));
        k0_blocks.push(hstack(&[&re, &im])?);
        let rot = identity(p) * c(w);
        let zero_p = Matrix::zeros(p, p);
        let neg_rot = -rot.clone();
        g1_blocks.push(crate::numerics::from_blocks(&[&[&zero_p, &rot], &[&neg_rot, &zero_p]])?);
        g2_blocks.push(vstack(&[&(-identity(p)), &Matrix::zeros(p, p)])?);
        layout.push((w, p));
        layout.push((-w, p));
    }
    if let Some(k) = zero {
        let pk = surjective_transfer(plant, k, 0.0)?;
        let pd = pinv(&pk)?;
        k0_blocks.push(pd.map(|z| c(z.re)));
        g1_blocks.push(Matrix::zeros(p, p));
        g2_blocks.push(-identity(p));
        layout.push((0.0, p));
    }
    let g1 = block_diag(&g1_blocks.iter().collect::<Vec<_>>());
    let g2 = vstack(&g2_blocks.iter().collect::<Vec<_>>())?;
    let k = hstack(&k0_blocks.iter().collect::<Vec<_>>())? * c(epsilon);
    let mut meta = ControllerMeta::new(Family::MinimalReal);
    meta.epsilon = Some(epsilon);
    meta.internal_model = layout;
    Controller::new(g1, g2, k, meta)
}

/// Unitary `diag(Q0, ..., Q0, I_p)` with `Q0 = [[I, I], [iI, -iI]] / sqrt 2`,
/// mapping the real controller onto a complex diagonal one.
pub fn real_form_similarity(pairs: usize, p: usize, has_zero: bool) -> Matrix {
    let s = c(std::f64::consts::FRAC_1_SQRT_2);
    let ip = identity(p);
    let q0 = crate::numerics::from_blocks(&[&[&(&ip * s), &(&ip * s)], &[&(&ip * (I * s)), &(&ip * (-I * s))]])
        .expect("square blocks");
    let mut blocks: Vec<Matrix> = vec![q0; pairs];
    if has_zero {
        blocks.push(ip);
    }
    block_diag(&blocks.iter().collect::<Vec<_>>())
}

/// A member of a finite perturbation class: perturbed plant plus perturbed
/// disturbance and reference maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPlant {
    pub plant: StateSpace,
    pub e: Matrix,
    pub f: Matrix,
}

/// Orthonormal basis of the span of
/// `P~(i omega_k)^-1 (C~ R(i omega_k, A~) E~ e_k + F~ e_k)` over the class,
/// one matrix per frequency (zero columns when the span is trivial).
pub fn reduced_generators(plant: &StateSpace, exo: &Exosystem, class: &[PerturbedPlant]) -> Result<Vec<Matrix>> {
    require_diagonal(exo)?;
    let (n, m, p, r) = (plant.states(), plant.inputs(), plant.outputs(), exo.dim());
    if m != p {
        return Err(Error::dim("plant", format!("needs as many inputs as outputs, got {m} and {p}")));
    }
    for (j, member) in class.iter().enumerate() {
        let sys = &member.plant;
        if sys.states() != n || sys.inputs() != m || sys.outputs() != p {
            return Err(Error::InvalidClassMember {
                member: j,
                k: 0,
                reason: format!(
                    "dimensions {}x{}x{} differ from the nominal plant",
                    sys.states(),
                    sys.inputs(),
                    sys.outputs()
                ),
            });
        }
        if member.e.shape() != (n, r) || member.f.shape() != (p, r) {
            return Err(Error::InvalidClassMember { member: j, k: 0, reason: "E or F has the wrong shape".into() });
        }
    }
    let mut bases = Vec::new();
    for (k, &w) in exo.frequencies().iter().enumerate() {
        let lambda = I * w;
        let mut gens = Vec::new();
        for (j, member) in class.iter().enumerate() {
            let invalid = |reason: String| Error::InvalidClassMember { member: j, k, reason };
            let pt = member.plant.transfer(lambda).map_err(|e| invalid(e.to_string()))?;
            let ek = member.e.columns(k, 1).into_owned();
            let fk = member.f.columns(k, 1).into_owned();
            let rek = member.plant.resolvent_apply(lambda, &ek).map_err(|e| invalid(e.to_string()))?;
            let rhs = member.plant.c() * rek + fk;
            if svd_rank(&pt, RankTolerance::DEFAULT)?.rank < p {
                return Err(invalid("transfer function is not invertible".into()));
            }
            gens.push(solve(&pt, &rhs, "perturbed transfer").map_err(|e| invalid(e.to_string()))?);
        }
        let stacked = if gens.is_empty() { Matrix::zeros(m, 0) } else { hstack(&gens.iter().collect::<Vec<_>>())? };
        bases.push(svd_rank(&stacked, RankTolerance::DEFAULT)?.range_basis);
    }
    Ok(bases)
}

/// Basis `T^-1 Q` of `ran(basis)` with `Q` an orthonormal basis of
/// `T ran(basis)`, so that `T K` has orthonormal columns.
pub(crate) fn normalized_basis(transfer: &Matrix, basis: &Matrix) -> Result<Matrix> {
    let image = svd_rank(&(transfer * basis), RankTolerance::DEFAULT)?.range_basis;
    solve(transfer, &image, "transfer at i omega_k")
}

/// Minimal controller carrying `p_k = dim S_k` copies of each frequency,
/// enough to regulate every member of `class`.
pub fn reduced_order_minimal_controller(
    plant: &StateSpace,
    exo: &Exosystem,
    class: &[PerturbedPlant],
    epsilon: f64,
) -> Result<Controller> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    require_stable(plant)?;
    require_diagonal(exo)?;
    let p = plant.outputs();
    let transfers = exo
        .frequencies()
        .iter()
        .enumerate()
        .map(|(k, &w)| invertible_transfer(plant, k, w))
        .collect::<Result<Vec<_>>>()?;
    let bases = reduced_generators(plant, exo, class)?;

    let mut g1_blocks = Vec::new();
    let mut g2_blocks = Vec::new();
    let mut k0_blocks = Vec::new();
    let mut layout = Vec::new();
    for (k, (&w, basis)) in exo.frequencies().iter().zip(&bases).enumerate() {
        let pk_dim = basis.ncols();
        if pk_dim == 0 {
            continue;
        }
        let k0 = if pk_dim < p {
            normalized_basis(&transfers[k], basis)?
        } else {
            solve(&transfers[k], &identity(p), "P(i omega_k)")?
        };
        let g2k = -(&transfers[k] * &k0).adjoint();
        if svd_rank(&g2k, RankTolerance::DEFAULT)?.rank < pk_dim {
            return Err(Error::GainNotInvertible { k });
        }
        g1_blocks.push(identity(pk_dim) * (I * w));
        g2_blocks.push(g2k);
        k0_blocks.push(k0);
        layout.push((w, pk_dim));
    }
    let g1 = block_diag(&g1_blocks.iter().collect::<Vec<_>>());
    let g2 = if g2_blocks.is_empty() { Matrix::zeros(0, p) } else { vstack(&g2_blocks.iter().collect::<Vec<_>>())? };
    let k = if k0_blocks.is_empty() {
        Matrix::zeros(plant.inputs(), 0)
    } else {
        hstack(&k0_blocks.iter().collect::<Vec<_>>())? * c(epsilon)
    };
    let mut meta = ControllerMeta::new(Family::MinimalReduced);
    meta.epsilon = Some(epsilon);
    meta.internal_model = layout;
    Controller::new(g1, g2, k, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::internal_model::certify_rorp;
    use crate::numerics::{eigenvalues, max_abs, real_matrix, ONE};
    use std::f64::consts::PI;

    fn scalar_plant() -> StateSpace {
        let one = real_matrix(1, 1, &[1.0]);
        StateSpace::new(real_matrix(1, 1, &[-1.0]), one.clone(), one, Matrix::zeros(1, 1)).unwrap()
    }

    fn constant_exo() -> Exosystem {
        Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), real_matrix(1, 1, &[-1.0])).unwrap()
    }

    #[test]
    fn scalar_example() {
        let ctrl = minimal_controller(&scalar_plant(), &constant_exo(), 0.25, &GainChoice::Pseudoinverse).unwrap();
        assert_eq!(ctrl.g1(), &Matrix::zeros(1, 1));
        assert!((ctrl.k()[(0, 0)] - c(0.25)).norm() < 1e-15);
        assert!((ctrl.g2()[(0, 0)] + ONE).norm() < 1e-15);
        let cl = assemble_closed_loop(&scalar_plant(), &ctrl, &constant_exo()).unwrap();
        for z in eigenvalues(&cl.ae).unwrap() {
            assert!((z + c(0.5)).norm() < 1e-7);
        }
        assert!(certify_rorp(&scalar_plant(), &ctrl, &constant_exo()).unwrap().pass());
    }

    #[test]
    fn unstable_plant_rejected() {
        let one = real_matrix(1, 1, &[1.0]);
        let plant = StateSpace::new(one.clone(), one.clone(), one, Matrix::zeros(1, 1)).unwrap();
        let err = minimal_controller(&plant, &constant_exo(), 0.25, &GainChoice::Pseudoinverse).unwrap_err();
        assert!(matches!(err, Error::UnstablePlant { .. }));
    }

    #[test]
    fn rank_deficient_transfer_names_frequency() {
        // P(s) = s / (s + 1) vanishes at s = 0.
        let plant = StateSpace::new(
            real_matrix(1, 1, &[-1.0]),
            real_matrix(1, 1, &[1.0]),
            real_matrix(1, 1, &[-1.0]),
            real_matrix(1, 1, &[1.0]),
        )
        .unwrap();
        let exo = Exosystem::from_frequencies(&[1.0, 0.0], &[1, 1], Matrix::zeros(1, 2), Matrix::zeros(1, 2)).unwrap();
        match minimal_controller(&plant, &exo, 0.1, &GainChoice::Pseudoinverse) {
            Err(Error::NotSurjective { k, .. }) => assert_eq!(k, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_gain_must_make_product_invertible() {
        let plant =
            StateSpace::new(real_matrix(2, 2, &[-1.0, 0.0, 0.0, -2.0]), identity(2), identity(2), Matrix::zeros(2, 2))
                .unwrap();
        let exo = constant_exo().with_maps(Matrix::zeros(2, 1), Matrix::zeros(2, 1)).unwrap();
        let bad = GainChoice::Custom(vec![real_matrix(2, 2, &[1.0, 1.0, 1.0, 1.0])]);
        assert!(matches!(minimal_controller(&plant, &exo, 0.1, &bad), Err(Error::GainNotInvertible { k: 0 })));
        let good = GainChoice::Custom(vec![identity(2)]);
        assert!(minimal_controller(&plant, &exo, 0.1, &good).is_ok());
    }

    #[test]
    fn tune_returns_max_when_hurwitz() {
        let eps = tune_epsilon(&scalar_plant(), &constant_exo(), 0.8, 10, &GainChoice::Pseudoinverse).unwrap();
        assert_eq!(eps, 0.8);
    }

    #[test]
    fn tune_bisects_below_instability() {
        // A = -1, B = C = 1 with a resonant internal model at omega = 2 has
        // a finite stability limit in epsilon.
        let exo = Exosystem::from_frequencies(&[0.0, 2.0], &[1, 1], Matrix::zeros(1, 2), Matrix::zeros(1, 2)).unwrap();
        let plant = scalar_plant();
        let eps = tune_epsilon(&plant, &exo, 100.0, 20, &GainChoice::Pseudoinverse).unwrap();
        let ctrl = minimal_controller(&plant, &exo, eps, &GainChoice::Pseudoinverse).unwrap();
        let half = rescale_epsilon(&ctrl, eps / 2.0).unwrap();
        assert!(assemble_closed_loop(&plant, &ctrl, &exo).unwrap().spectral_abscissa().unwrap() < 0.0);
        assert!(assemble_closed_loop(&plant, &half, &exo).unwrap().spectral_abscissa().unwrap() < 0.0);
        assert!(eps < 100.0);
    }

    #[test]
    fn prestabilize_reductions() {
        let a = real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = real_matrix(2, 1, &[0.0, 1.0]);
        let cm = real_matrix(1, 2, &[1.0, 1.0]);
        let plant = StateSpace::new(a.clone(), b.clone(), cm.clone(), Matrix::zeros(1, 1)).unwrap();
        let same = prestabilize_output_feedback(&plant, 0.0).unwrap();
        assert_eq!(same, plant);
        let fb = prestabilize_output_feedback(&plant, 1.0).unwrap();
        assert!(max_abs(&(fb.a() - (&a - &b * &cm))) < 1e-15);
        assert_eq!(fb.b(), &b);
        assert_eq!(fb.c(), &cm);
    }

    #[test]
    fn prestabilize_ill_posed() {
        let one = real_matrix(1, 1, &[1.0]);
        let plant = StateSpace::new(one.clone(), one.clone(), one, real_matrix(1, 1, &[-1.0])).unwrap();
        assert!(matches!(prestabilize_output_feedback(&plant, 1.0), Err(Error::FeedbackIllPosed)));
    }

    fn oscillator_plant() -> StateSpace {
        StateSpace::new(
            real_matrix(2, 2, &[-1.0, 2.0, -2.0, -1.0]),
            real_matrix(2, 1, &[1.0, 0.5]),
            real_matrix(1, 2, &[1.0, 0.0]),
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn real_form_pattern_and_similarity() {
        let plant = oscillator_plant();
        let exo =
            Exosystem::from_frequencies(&[PI, -PI, 0.0], &[1, 1, 1], Matrix::zeros(2, 3), Matrix::zeros(1, 3)).unwrap();
        let real = minimal_controller_real(&plant, &exo, 0.1).unwrap();
        assert!(
            crate::numerics::is_real(real.g1())
                && crate::numerics::is_real(real.g2())
                && crate::numerics::is_real(real.k())
        );
        let expected_g1 = real_matrix(3, 3, &[0.0, PI, 0.0, -PI, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(real.g1(), &expected_g1);

        let q = real_form_similarity(1, 1, true);
        assert!((q.adjoint() * &q - identity(3)).norm() < 1e-15);
        let g1c = q.adjoint() * real.g1() * &q;
        let complex_exo =
            Exosystem::from_frequencies(&[PI, -PI, 0.0], &[1, 1, 1], Matrix::zeros(2, 3), Matrix::zeros(1, 3)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let blocks = vec![
            pinv(&plant.transfer(I * PI).unwrap()).unwrap() * c(s),
            pinv(&plant.transfer(-I * PI).unwrap()).unwrap() * c(s),
            pinv(&plant.transfer(c(0.0)).unwrap()).unwrap(),
        ];
        let complex = minimal_controller(&plant, &complex_exo, 0.1, &GainChoice::Custom(blocks)).unwrap();
        assert!(max_abs(&(g1c - complex.g1())) < 1e-12);
        assert!(max_abs(&(q.adjoint() * real.g2() - complex.g2())) < 1e-12);
        assert!(max_abs(&(real.k() * &q - complex.k())) < 1e-12);
        assert!(certify_rorp(&plant, &real, &exo).unwrap().g_conditions);
    }

    #[test]
    fn real_form_rejects_complex_plant() {
        let plant = StateSpace::new(
            Matrix::from_element(1, 1, C64::new(-1.0, 0.5)),
            real_matrix(1, 1, &[1.0]),
            real_matrix(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(minimal_controller_real(&plant, &constant_exo(), 0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn reduced_single_generator() {
        let plant =
            StateSpace::new(real_matrix(2, 2, &[-1.0, 0.0, 0.0, -2.0]), identity(2), identity(2), Matrix::zeros(2, 2))
                .unwrap();
        let f = real_matrix(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let exo = Exosystem::from_frequencies(&[0.0, 1.0], &[1, 1], Matrix::zeros(2, 2), f.clone()).unwrap();
        let class = vec![PerturbedPlant { plant: plant.clone(), e: Matrix::zeros(2, 2), f }];
        let ctrl = reduced_order_minimal_controller(&plant, &exo, &class, 0.2).unwrap();
        // omega = 0 gets one copy, omega = 1 has F e_k = 0 and is dropped.
        assert_eq!(ctrl.order(), 1);
        assert_eq!(ctrl.meta.internal_model, vec![(0.0, 1)]);
        assert!(assemble_closed_loop(&plant, &ctrl, &exo).unwrap().spectral_abscissa().unwrap() < 0.0);
    }

    #[test]
    fn reduced_full_span_matches_full_dimension() {
        let plant =
            StateSpace::new(real_matrix(2, 2, &[-1.0, 0.0, 0.0, -2.0]), identity(2), identity(2), Matrix::zeros(2, 2))
                .unwrap();
        let f1 = real_matrix(2, 1, &[1.0, 0.0]);
        let f2 = real_matrix(2, 1, &[0.0, 1.0]);
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(2, 1), f1.clone()).unwrap();
        let class = vec![
            PerturbedPlant { plant: plant.clone(), e: Matrix::zeros(2, 1), f: f1 },
            PerturbedPlant { plant: plant.clone(), e: Matrix::zeros(2, 1), f: f2 },
        ];
        let reduced = reduced_order_minimal_controller(&plant, &exo, &class, 0.2).unwrap();
        let full = minimal_controller(&plant, &exo, 0.2, &GainChoice::Pseudoinverse).unwrap();
        assert_eq!(reduced.order(), full.order());
        assert!(max_abs(&(reduced.g2() + identity(2))) < 1e-12);
    }

    #[test]
    fn reduced_rejects_singular_member() {
        let plant = scalar_plant();
        let bad = StateSpace::new(
            real_matrix(1, 1, &[-1.0]),
            real_matrix(1, 1, &[0.0]),
            real_matrix(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let exo = constant_exo();
        let class = vec![
            PerturbedPlant { plant: plant.clone(), e: Matrix::zeros(1, 1), f: exo.f().clone() },
            PerturbedPlant { plant: bad, e: Matrix::zeros(1, 1), f: exo.f().clone() },
        ];
        match reduced_order_minimal_controller(&plant, &exo, &class, 0.1) {
            Err(Error::InvalidClassMember { member, k, .. }) => assert_eq!((member, k), (1, 0)),
            other => panic!("{other:?}"),
        }
    }
}
