//! Spectral Galerkin model of the heat equation on the unit square with
//! Neumann boundary control on two half-edges and averaged boundary
//! observation on the same half-edges.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimal::prestabilize_output_feedback;
use crate::numerics::{real_matrix, Matrix, I};
use crate::sysmodel::{Exosystem, Labels, StateSpace};

/// Truncation order and output-feedback gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatModelConfig {
    /// Cosine modes per axis; the model has `modes^2` states.
    pub modes: usize,
    /// Gain of the pre-stabilizing feedback `u = -kappa y + u_new`.
    pub kappa: f64,
}

impl Default for HeatModelConfig {
    fn default() -> Self {
        Self { modes: 10, kappa: 1.0 }
    }
}

impl HeatModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::Precondition("heat model needs at least one mode per axis".into()));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Precondition(format!(
                "heat feedback gain must be finite and nonnegative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// The pre-stabilized plant and the raw Galerkin model.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatPlant {
    pub stabilized: StateSpace,
    pub raw: StateSpace,
}

fn norm_const(m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        SQRT_2
    }
}

/// `int_0^{1/2} cos(m pi s) ds`.
fn lower_half_integral(m: usize) -> f64 {
    if m == 0 {
        0.5
    } else {
        let mp = m as f64 * PI;
        (mp / 2.0).sin() / mp
    }
}

/// `int_{1/2}^1 cos(m pi s) ds`.
fn upper_half_integral(m: usize) -> f64 {
    if m == 0 {
        0.5
    } else {
        let mp = m as f64 * PI;
        -(mp / 2.0).sin() / mp
    }
}

/// State index of mode `(m, n)`: `m` along the first coordinate.
pub fn mode_index(modes: usize, m: usize, n: usize) -> usize {
    m * modes + n
}

pub fn build_heat_plant(cfg: &HeatModelConfig) -> Result<HeatPlant> {
    cfg.validate()?;
    let nm = cfg.modes;
    let dim = nm * nm;
    let mut a = Matrix::zeros(dim, dim);
    let mut b = Matrix::zeros(dim, 2);
    for m in 0..nm {
        for n in 0..nm {
            let i = mode_index(nm, m, n);
            let (mf, nf) = (m as f64, n as f64);
            a[(i, i)] = (-(mf * mf + nf * nf) * PI * PI).into();
            let c = norm_const(m) * norm_const(n);
            // First input edge at second coordinate 0, second at 1.
            b[(i, 0)] = (c * lower_half_integral(m)).into();
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            b[(i, 1)] = (c * sign * upper_half_integral(m)).into();
        }
    }
    let c = b.transpose().map(|z| z * 2.0);
    let labels = Labels {
        states: (0..nm).flat_map(|m| (0..nm).map(move |n| format!("mode_{m}_{n}"))).collect(),
        inputs: vec!["u1".into(), "u2".into()],
        outputs: vec!["y1".into(), "y2".into()],
    };
    let raw = StateSpace::new(a, b, c, Matrix::zeros(2, 2))?.with_labels(labels)?;
    let stabilized = prestabilize_output_feedback(&raw, cfg.kappa)?;
    Ok(HeatPlant { stabilized, raw })
}

/// Reference `(-1, cos(pi t))` generated from `v0 = (1, 1, 1)`; the
/// disturbance map is zero on a plant with `states` states.
pub fn benchmark_exosystem(states: usize) -> Result<Exosystem> {
    let f = real_matrix(2, 3, &[0.0, 1.0, 0.0, -0.5, 0.0, -0.5]);
    Exosystem::from_frequencies(&[-PI, 0.0, PI], &[1, 1, 1], Matrix::zeros(states, 3), f)
}

pub fn benchmark_initial_state() -> crate::numerics::Vector {
    crate::numerics::Vector::from_element(3, crate::numerics::ONE)
}

/// Largest change of `P(i omega_k)` between truncations `N` and `N + 4`,
/// for each `N` in `orders`.
pub fn transfer_convergence(orders: &[usize], kappa: f64, frequencies: &[f64]) -> Result<Vec<(usize, f64)>> {
    orders
        .iter()
        .map(|&nm| {
            let coarse = build_heat_plant(&HeatModelConfig { modes: nm, kappa })?.stabilized;
            let fine = build_heat_plant(&HeatModelConfig { modes: nm + 4, kappa })?.stabilized;
            let mut worst = 0.0f64;
            for &w in frequencies {
                let diff = coarse.transfer(I * w)? - fine.transfer(I * w)?;
                worst = worst.max(diff.norm());
            }
            Ok((nm, worst))
        })
        .collect()
}
