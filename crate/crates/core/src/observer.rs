//! Observer-based controller for square plants: the internal model sits in
//! the upper-left corner and feeds an observer of the plant,
//!
//! ```text
//! G1' = [[G1, 0], [(B + L D) K1, A + B K2 + L (C + D K2)]]
//! G2' = [G2; -L],  K = (K1, K2),  K2 = K21 + K1 H
//! ```
//!
//! where `H` solves `G1 H = H (A + B K21) + G2 (C + D K21)`.

use crate::error::{Error, Result};
use crate::internal_model::{
    build_internal_model, check_dissipative_stability, full_layout, InternalModelSpec, ModelBlock,
};
use crate::minimal::{invertible_transfer, require_diagonal, GainChoice};
use crate::numerics::{from_blocks, hstack, identity, solve, vstack, Matrix, C64, I};
use crate::stabilize::{lqr_gain, StabilizingGains};
use crate::sysmodel::{Controller, ControllerMeta, Exosystem, Family, Resolvent, StateSpace};

/// Intermediate quantities of the synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRecord {
    pub g1: Matrix,
    pub g2: Matrix,
    pub h: Matrix,
    pub b1: Matrix,
    pub k1: Matrix,
    pub k21: Matrix,
    pub k2: Matrix,
    pub l: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub controller: Controller,
    pub record: ObserverRecord,
}

impl ObserverDesign {
    /// `Q = [[-I, 0, 0], [H, I, 0], [-I, 0, I]]` on `(x, z0, x_obs)`; `Q = Q^-1`
    /// and `Q Ae Q` is block upper triangular.
    pub fn similarity(&self) -> Matrix {
        let (nz, n) = self.record.h.shape();
        let id_n = identity(n);
        let id_z = identity(nz);
        let zn_z = Matrix::zeros(n, nz);
        let zz_n = Matrix::zeros(nz, n);
        let zn_n = Matrix::zeros(n, n);
        from_blocks(&[&[&(-&id_n), &zn_z, &zn_n], &[&self.record.h, &id_z, &zz_n], &[&(-&id_n), &zn_z, &id_n]])
            .expect("consistent block sizes")
    }

    /// `(A + B K21, G1 + B1 K1, A + L C)`.
    pub fn diagonal_blocks(&self, plant: &StateSpace) -> [Matrix; 3] {
        let r = &self.record;
        [plant.a() + plant.b() * &r.k21, &r.g1 + &r.b1 * &r.k1, plant.a() + &r.l * plant.c()]
    }
}

/// `H = (H_k^l)` with
/// `H_k^l = sum_{j=l}^{n_k} (-1)^{j-l} G2^{kj} C_K R(i omega_k, A_K)^{j+1-l}`.
pub fn sylvester_observer_coupling(a_k: &Matrix, c_k: &Matrix, g2: &Matrix, blocks: &[ModelBlock]) -> Result<Matrix> {
    let n = a_k.nrows();
    let total: usize = blocks.iter().map(ModelBlock::dim).sum();
    if g2.nrows() != total || g2.ncols() != c_k.nrows() || c_k.ncols() != n {
        return Err(Error::dim(
            "structured Sylvester",
            format!(
                "G2 is {}x{}, C_K is {}x{}, model has dimension {total}",
                g2.nrows(),
                g2.ncols(),
                c_k.nrows(),
                c_k.ncols()
            ),
        ));
    }
    let a_adj = a_k.adjoint();
    let mut h = Matrix::zeros(total, n);
    let mut off = 0;
    for b in blocks {
        // Row products X R^j are computed as (R(conj lambda, A*)^j X*)*.
        let res = Resolvent::new(&a_adj, (I * b.omega).conj())?;
        let terms: Vec<Matrix> = (0..b.jordan).map(|j| (g2.rows(off + j * b.width, b.width) * c_k).adjoint()).collect();
        for l in 0..b.jordan {
            let mut acc = Matrix::zeros(n, b.width);
            for (j, term) in terms.iter().enumerate().skip(l) {
                let mut v = term.clone();
                for _ in 0..(j + 1 - l) {
                    v = res.apply(&v)?;
                }
                if (j - l) % 2 == 0 {
                    acc += v;
                } else {
                    acc -= v;
                }
            }
            h.rows_mut(off + l * b.width, b.width).copy_from(&acc.adjoint());
        }
        off += b.dim();
    }
    Ok(h)
}

/// `P_K(lambda) = (C + D K21) R(lambda, A + B K21) B + D`.
pub fn feedback_transfer(plant: &StateSpace, k21: &Matrix, lambda: C64) -> Result<Matrix> {
    let a_k = plant.a() + plant.b() * k21;
    let c_k = plant.c() + plant.d() * k21;
    Ok(&c_k * Resolvent::new(&a_k, lambda)?.apply(plant.b())? + plant.d())
}

fn require_square(plant: &StateSpace) -> Result<()> {
    if plant.inputs() != plant.outputs() {
        return Err(Error::Precondition(format!(
            "observer-based controller needs as many inputs as outputs (plant has {} inputs, {} outputs)",
            plant.inputs(),
            plant.outputs()
        )));
    }
    Ok(())
}

struct Stage {
    layout: Vec<ModelBlock>,
    g1: Matrix,
    k21: Matrix,
    l: Matrix,
}

fn prepare(plant: &StateSpace, exo: &Exosystem, gains: &StabilizingGains) -> Result<Stage> {
    require_square(plant)?;
    let spec = InternalModelSpec::from_exosystem(exo, plant.outputs())?;
    let layout = full_layout(&spec);
    let k21 = gains.state_feedback_for(plant.a(), plant.b())?;
    let l = gains.output_injection_for(plant.a(), plant.c())?;
    for (k, b) in layout.iter().enumerate() {
        invertible_transfer(plant, k, b.omega)?;
        let pk = feedback_transfer(plant, &k21, I * b.omega)?;
        solve(&pk, &identity(pk.nrows()), "P_K(i omega_k)").map_err(|_| Error::NotInvertible { k, omega: b.omega })?;
    }
    let g1 = build_internal_model(&layout);
    Ok(Stage { layout, g1, k21, l })
}

fn finish(
    plant: &StateSpace,
    stage: Stage,
    g2: Matrix,
    k1_rule: impl Fn(&Matrix, &Matrix) -> Result<Matrix>,
    family: Family,
) -> Result<ObserverDesign> {
    let Stage { layout, g1, k21, l } = stage;
    let a_k = plant.a() + plant.b() * &k21;
    let c_k = plant.c() + plant.d() * &k21;
    let h = sylvester_observer_coupling(&a_k, &c_k, &g2, &layout)?;
    let b1 = &h * plant.b() + &g2 * plant.d();
    let k1 = k1_rule(&g1, &b1)?;
    let k2 = &k21 + &k1 * &h;

    let bl = plant.b() + &l * plant.d();
    let lower_left = &bl * &k1;
    let lower_right = plant.a() + plant.b() * &k2 + &l * (plant.c() + plant.d() * &k2);
    let upper_right = Matrix::zeros(g1.nrows(), plant.states());
    let big_g1 = from_blocks(&[&[&g1, &upper_right], &[&lower_left, &lower_right]])?;
    let big_g2 = vstack(&[&g2, &(-&l)])?;
    let big_k = hstack(&[&k1, &k2])?;
    let mut meta = ControllerMeta::new(family);
    meta.internal_model = layout.iter().map(|b| (b.omega, b.width)).collect();
    let controller = Controller::new(big_g1, big_g2, big_k, meta)?;
    Ok(ObserverDesign { controller, record: ObserverRecord { g1, g2, h, b1, k1, k21, k2, l } })
}

/// General construction. The block of `G2` at the end of each chain is the
/// identity (or the supplied block) and the others are zero; `K1` stabilizes
/// `(G1, B1)` by LQR.
pub fn observer_controller(
    plant: &StateSpace,
    exo: &Exosystem,
    gains: &StabilizingGains,
    g2_choice: &GainChoice,
) -> Result<ObserverDesign> {
    let stage = prepare(plant, exo, gains)?;
    let p = plant.outputs();
    let mut g2 = Matrix::zeros(stage.g1.nrows(), p);
    let mut off = 0;
    for (k, b) in stage.layout.iter().enumerate() {
        let last = match g2_choice {
            GainChoice::Pseudoinverse => identity(p),
            GainChoice::Custom(blocks) => custom_block(blocks, k, stage.layout.len(), p)?,
        };
        g2.rows_mut(off + (b.jordan - 1) * p, p).copy_from(&last);
        off += b.dim();
    }
    let rule = |g1: &Matrix, b1: &Matrix| match lqr_gain(g1, b1) {
        Ok(g) => Ok(g.matrix),
        Err(Error::Unstabilizable { eigenvalue }) => {
            Err(Error::RankAlert(format!("(G1, B1) is not stabilizable at {eigenvalue}")))
        }
        Err(e) => Err(e),
    };
    finish(plant, stage, g2, rule, Family::Observer)
}

/// Diagonal exosystem: `K1 = -B1*` in closed form. With the default
/// `G2^k = P_K(i omega_k)^-1` every block of `K1` is `-I`.
pub fn observer_controller_diag(
    plant: &StateSpace,
    exo: &Exosystem,
    gains: &StabilizingGains,
    g2_choice: &GainChoice,
) -> Result<ObserverDesign> {
    require_diagonal(exo)?;
    let stage = prepare(plant, exo, gains)?;
    let p = plant.outputs();
    let mut blocks = Vec::with_capacity(stage.layout.len());
    for (k, b) in stage.layout.iter().enumerate() {
        let block = match g2_choice {
            GainChoice::Pseudoinverse => {
                let pk = feedback_transfer(plant, &stage.k21, I * b.omega)?;
                solve(&pk, &identity(p), "P_K(i omega_k)")?
            }
            GainChoice::Custom(given) => custom_block(given, k, stage.layout.len(), p)?,
        };
        if crate::numerics::rank(&block, crate::numerics::RankTolerance::DEFAULT)? < p {
            return Err(Error::GainNotInvertible { k });
        }
        blocks.push(block);
    }
    let g2 = vstack(&blocks.iter().collect::<Vec<_>>())?;
    let rule = |g1: &Matrix, b1: &Matrix| {
        let dissipative = check_dissipative_stability(g1, b1)?;
        if !dissipative.pass {
            return Err(Error::RankAlert(format!(
                "G1 - B1 B1* is not Hurwitz (abscissa {:.3e})",
                dissipative.abscissa
            )));
        }
        Ok(-b1.adjoint())
    };
    finish(plant, stage, g2, rule, Family::ObserverDiag)
}

fn custom_block(blocks: &[Matrix], k: usize, count: usize, p: usize) -> Result<Matrix> {
    if blocks.len() != count {
        return Err(Error::dim("custom gains", format!("{} blocks for {count} frequencies", blocks.len())));
    }
    let block = &blocks[k];
    if block.shape() != (p, p) {
        return Err(Error::dim(
            "custom gains",
            format!("block {k} is {}x{}, expected {p}x{p}", block.nrows(), block.ncols()),
        ));
    }
    Ok(block.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::internal_model::certify_rorp;
    use crate::numerics::{max_abs, rank, real_matrix, sylvester_generic, RankTolerance, ONE};
    use crate::sysmodel::assemble_closed_loop;

    fn scalar_plant() -> StateSpace {
        let one = real_matrix(1, 1, &[1.0]);
        StateSpace::new(real_matrix(1, 1, &[-1.0]), one.clone(), one, Matrix::zeros(1, 1)).unwrap()
    }

    fn two_state_plant() -> StateSpace {
        StateSpace::new(
            real_matrix(2, 2, &[0.5, 1.0, 0.0, -1.0]),
            real_matrix(2, 1, &[0.0, 1.0]),
            real_matrix(1, 2, &[1.0, 0.0]),
            real_matrix(1, 1, &[0.2]),
        )
        .unwrap()
    }

    #[test]
    fn single_term_formula() {
        let a_k = real_matrix(2, 2, &[-1.0, 1.0, 0.0, -3.0]);
        let c_k = real_matrix(1, 2, &[1.0, 2.0]);
        let g2 = real_matrix(1, 1, &[0.5]);
        let blocks = [ModelBlock { omega: 2.0, jordan: 1, width: 1 }];
        let h = sylvester_observer_coupling(&a_k, &c_k, &g2, &blocks).unwrap();
        let r = crate::numerics::inverse(&crate::numerics::shifted(&a_k, I * 2.0), "test").unwrap();
        assert!(max_abs(&(h - &g2 * &c_k * r)) < 1e-15);
    }

    #[test]
    fn two_level_chain_example() {
        let a_k = real_matrix(1, 1, &[-1.0]);
        let c_k = real_matrix(1, 1, &[1.0]);
        let g2 = real_matrix(2, 1, &[0.0, 1.0]);
        let blocks = [ModelBlock { omega: 0.0, jordan: 2, width: 1 }];
        let h = sylvester_observer_coupling(&a_k, &c_k, &g2, &blocks).unwrap();
        assert!(max_abs(&(&h - real_matrix(2, 1, &[-1.0, 1.0]))) < 1e-15);
        let g1 = build_internal_model(&blocks);
        assert!(max_abs(&(&g1 * &h - (&h * &a_k + &g2 * &c_k))) < 1e-15);
        let generic = sylvester_generic(&g1, &a_k, &(-(&g2 * &c_k))).unwrap();
        assert!(max_abs(&(generic - h)) < 1e-12);
    }

    #[test]
    fn scalar_plant_auto_gains() {
        let plant = scalar_plant();
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), real_matrix(1, 1, &[-1.0])).unwrap();
        let d = observer_controller(&plant, &exo, &StabilizingGains::default(), &GainChoice::Pseudoinverse).unwrap();
        let cert = certify_rorp(&plant, &d.controller, &exo).unwrap();
        assert!(cert.pass(), "{cert:?}");
    }

    #[test]
    fn non_square_plant_rejected() {
        let plant = StateSpace::new(
            real_matrix(1, 1, &[-1.0]),
            real_matrix(1, 1, &[1.0]),
            real_matrix(2, 1, &[1.0, 1.0]),
            Matrix::zeros(2, 1),
        )
        .unwrap();
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), Matrix::zeros(2, 1)).unwrap();
        let err =
            observer_controller(&plant, &exo, &StabilizingGains::default(), &GainChoice::Pseudoinverse).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn structure_and_triangularization() {
        let plant = two_state_plant();
        let exo = Exosystem::from_frequencies(&[0.0, 1.5], &[2, 1], Matrix::zeros(2, 3), Matrix::zeros(1, 3)).unwrap();
        let d = observer_controller(&plant, &exo, &StabilizingGains::default(), &GainChoice::Pseudoinverse).unwrap();
        assert!(certify_rorp(&plant, &d.controller, &exo).unwrap().pass());
        let nz = d.record.g1.nrows();
        let n = plant.states();
        assert!(d.controller.g1().view((0, nz), (nz, n)).iter().all(|z| *z == C64::new(0.0, 0.0)));

        let cl = assemble_closed_loop(&plant, &d.controller, &exo).unwrap();
        let q = d.similarity();
        let t = &q * &cl.ae * &q;
        let lower =
            [t.view((n, 0), (nz, n)).norm(), t.view((n + nz, 0), (n, n)).norm(), t.view((n + nz, n), (n, nz)).norm()];
        assert!(lower.iter().all(|&x| x <= 1e-9 * cl.ae.norm()), "{lower:?}");
        let blocks = d.diagonal_blocks(&plant);
        assert!(max_abs(&(t.view((0, 0), (n, n)) - &blocks[0])) < 1e-9);
        assert!(max_abs(&(t.view((n, n), (nz, nz)) - &blocks[1])) < 1e-9);
        assert!(max_abs(&(t.view((n + nz, n + nz), (n, n)) - &blocks[2])) < 1e-9);
    }

    #[test]
    fn model_range_splits_state_space() {
        let plant = two_state_plant();
        let exo = Exosystem::from_frequencies(&[0.0, 1.5], &[2, 1], Matrix::zeros(2, 3), Matrix::zeros(1, 3)).unwrap();
        let d = observer_controller(&plant, &exo, &StabilizingGains::default(), &GainChoice::Pseudoinverse).unwrap();
        let g1 = &d.record.g1;
        let nz = g1.nrows();
        for &w in exo.frequencies() {
            let r1 = crate::numerics::shifted(g1, I * w);
            let joint = hstack(&[&r1, &d.record.g2]).unwrap();
            assert_eq!(rank(&joint, RankTolerance::DEFAULT).unwrap(), nz);
            let sum = rank(&r1, RankTolerance::DEFAULT).unwrap() + rank(&d.record.g2, RankTolerance::DEFAULT).unwrap();
            assert_eq!(sum, nz);
        }
    }

    #[test]
    fn diag_special_choice_gives_minus_identity() {
        let plant = two_state_plant();
        let exo = Exosystem::from_frequencies(&[0.0, 1.5], &[1, 1], Matrix::zeros(2, 2), Matrix::zeros(1, 2)).unwrap();
        let d =
            observer_controller_diag(&plant, &exo, &StabilizingGains::default(), &GainChoice::Pseudoinverse).unwrap();
        assert!(max_abs(&(&d.record.k1 + real_matrix(1, 2, &[1.0, 1.0]))) < 1e-12);
        assert!(certify_rorp(&plant, &d.controller, &exo).unwrap().pass());
        let k21 = &d.record.k21;
        for (k, &w) in exo.frequencies().iter().enumerate() {
            let correction = identity(1) - k21 * plant.resolvent_apply(I * w, plant.b()).unwrap();
            let expected = correction * crate::numerics::inverse(&plant.transfer(I * w).unwrap(), "test").unwrap();
            assert!(max_abs(&(d.record.g2.rows(k, 1) - expected)) < 1e-12);
        }
    }

    #[test]
    fn diag_identity_choice_matches_formula() {
        let plant = scalar_plant();
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), real_matrix(1, 1, &[-1.0])).unwrap();
        let d = observer_controller_diag(
            &plant,
            &exo,
            &StabilizingGains::default(),
            &GainChoice::Custom(vec![identity(1)]),
        )
        .unwrap();
        let pk = feedback_transfer(&plant, &d.record.k21, C64::new(0.0, 0.0)).unwrap();
        assert!((d.record.k1[(0, 0)] + pk[(0, 0)].conj()).norm() < 1e-12);
        assert!((d.record.g2[(0, 0)] - ONE).norm() == 0.0);
    }
}
