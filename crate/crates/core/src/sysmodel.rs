//! Plant, exosystem, controller and closed-loop data model.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{self, expm, from_blocks, Matrix, Vector, C64, I, ONE};

pub use crate::numerics::spectral_abscissa;

/// Optional human-readable names for states, inputs and outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

/// Finite-dimensional realization `x' = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    d: Matrix,
    labels: Option<Labels>,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("plant A", format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dim("plant B", format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::dim("plant C", format!("C has {} columns, A is {n}x{n}", c.ncols())));
        }
        if d.shape() != (c.nrows(), b.ncols()) {
            return Err(Error::dim(
                "plant D",
                format!("D is {}x{}, expected {}x{}", d.nrows(), d.ncols(), c.nrows(), b.ncols()),
            ));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !numerics::is_finite(m) {
                return Err(Error::Precondition(format!("plant {name} has non-finite entries")));
            }
        }
        Ok(StateSpace { a, b, c, d, labels: None })
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        let check = |name: &'static str, got: usize, want: usize| {
            if got != 0 && got != want {
                Err(Error::dim("labels", format!("{got} {name} labels for {want} {name}")))
            } else {
                Ok(())
            }
        };
        check("states", labels.states.len(), self.states())?;
        check("inputs", labels.inputs.len(), self.inputs())?;
        check("outputs", labels.outputs.len(), self.outputs())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn d(&self) -> &Matrix {
        &self.d
    }
    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// All four matrices have zero imaginary parts.
    pub fn is_real(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d].into_iter().all(numerics::is_real)
    }

    /// `R(lambda, A) rhs = (lambda I - A)^{-1} rhs` by LU solve.
    pub fn resolvent_apply(&self, lambda: C64, rhs: &Matrix) -> Result<Matrix> {
        resolvent_apply(&self.a, lambda, rhs)
    }

    /// `P(lambda) = C (lambda I - A)^{-1} B + D`.
    pub fn transfer(&self, lambda: C64) -> Result<Matrix> {
        transfer_eval(self, lambda)
    }
}

/// LU factorization of `lambda I - A`, reused across right-hand sides.
pub struct Resolvent {
    lambda: C64,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Resolvent {
    /// Rejects `lambda` within `1e-10` (relative to `max(1, |A|)`) of the
    /// spectrum as measured by the LU pivots.
    pub fn new(a: &Matrix, lambda: C64) -> Result<Self> {
        let n = a.nrows();
        let lu = numerics::shifted(a, lambda).lu();
        let u = lu.u();
        let scale = numerics::max_abs(a).max(1.0);
        let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if n > 0 && min_pivot <= 1e-10 * scale {
            return Err(Error::ResolventSingular { lambda });
        }
        Ok(Resolvent { lambda, lu })
    }

    /// `(lambda I - A)^{-1} rhs`.
    pub fn apply(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.lu.l().nrows();
        if rhs.nrows() != n {
            return Err(Error::dim("resolvent", format!("rhs has {} rows, A is {n}x{n}", rhs.nrows())));
        }
        if n == 0 {
            return Ok(rhs.clone());
        }
        let x = self.lu.solve(rhs).ok_or(Error::ResolventSingular { lambda: self.lambda })?;
        if !numerics::is_finite(&x) {
            return Err(Error::ResolventSingular { lambda: self.lambda });
        }
        Ok(x)
    }
}

/// `(lambda I - a)^{-1} rhs` by LU solve.
pub fn resolvent_apply(a: &Matrix, lambda: C64, rhs: &Matrix) -> Result<Matrix> {
    if rhs.nrows() != a.nrows() {
        return Err(Error::dim("resolvent", format!("rhs has {} rows, A is {}x{}", rhs.nrows(), a.nrows(), a.nrows())));
    }
    Resolvent::new(a, lambda)?.apply(rhs)
}

/// Transfer function value `P(lambda) = C R(lambda, A) B + D`.
pub fn transfer_eval(sys: &StateSpace, lambda: C64) -> Result<Matrix> {
    let rb = sys.resolvent_apply(lambda, &sys.b)?;
    Ok(&sys.c * rb + &sys.d)
}

/// Signal generator `v' = Sv, w = Ev, y_ref = -Fv` with `sigma(S)` on the
/// imaginary axis and one Jordan block per eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    frequencies: Vec<f64>,
    jordan_sizes: Vec<usize>,
    s: Matrix,
    e: Matrix,
    f: Matrix,
}

impl Exosystem {
    /// Builds `S = blockdiag(J_k)` with `J_k` the `n_k x n_k` Jordan block at
    /// `i omega_k`.
    pub fn from_frequencies(frequencies: &[f64], jordan_sizes: &[usize], e: Matrix, f: Matrix) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Precondition("exosystem needs at least one frequency".into()));
        }
        if frequencies.len() != jordan_sizes.len() {
            return Err(Error::dim(
                "exosystem",
                format!("{} frequencies but {} Jordan sizes", frequencies.len(), jordan_sizes.len()),
            ));
        }
        if let Some(k) = jordan_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Precondition(format!("Jordan size for frequency index {k} must be >= 1")));
        }
        if frequencies.iter().any(|w| !w.is_finite()) {
            return Err(Error::Precondition("frequencies must be finite".into()));
        }
        for i in 0..frequencies.len() {
            for j in (i + 1)..frequencies.len() {
                if (frequencies[i] - frequencies[j]).abs() <= 1e-12 * frequencies[i].abs().max(1.0) {
                    return Err(Error::Precondition(format!(
                        "duplicate exosystem frequency {} (indices {i} and {j})",
                        frequencies[i]
                    )));
                }
            }
        }
        let r: usize = jordan_sizes.iter().sum();
        if e.ncols() != r {
            return Err(Error::dim("exosystem E", format!("E has {} columns, S is {r}x{r}", e.ncols())));
        }
        if f.ncols() != r {
            return Err(Error::dim("exosystem F", format!("F has {} columns, S is {r}x{r}", f.ncols())));
        }
        let mut s = Matrix::zeros(r, r);
        let mut off = 0;
        for (&w, &nk) in frequencies.iter().zip(jordan_sizes) {
            for l in 0..nk {
                s[(off + l, off + l)] = I * w;
                if l + 1 < nk {
                    s[(off + l, off + l + 1)] = ONE;
                }
            }
            off += nk;
        }
        Ok(Exosystem { frequencies: frequencies.to_vec(), jordan_sizes: jordan_sizes.to_vec(), s, e, f })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
    pub fn jordan_sizes(&self) -> &[usize] {
        &self.jordan_sizes
    }
    pub fn s(&self) -> &Matrix {
        &self.s
    }
    pub fn e(&self) -> &Matrix {
        &self.e
    }
    pub fn f(&self) -> &Matrix {
        &self.f
    }
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
    pub fn is_diagonal(&self) -> bool {
        self.jordan_sizes.iter().all(|&n| n == 1)
    }

    /// Starting row of each Jordan block inside `S`.
    pub fn block_offsets(&self) -> Vec<usize> {
        self.jordan_sizes
            .iter()
            .scan(0, |acc, &n| {
                let o = *acc;
                *acc += n;
                Some(o)
            })
            .collect()
    }

    /// Same `S`, different disturbance and reference maps.
    pub fn with_maps(&self, e: Matrix, f: Matrix) -> Result<Self> {
        Self::from_frequencies(&self.frequencies, &self.jordan_sizes, e, f)
    }

    /// `y_ref(t) = -F e^{St} v0`.
    pub fn reference(&self, v0: &Vector, t: f64) -> Result<Vector> {
        if v0.len() != self.dim() {
            return Err(Error::dim(
                "exosystem v0",
                format!("v0 has {} entries, S is {}x{}", v0.len(), self.dim(), self.dim()),
            ));
        }
        let phi = expm(&(&self.s * C64::new(t, 0.0)))?;
        Ok(-(&self.f * (phi * v0)))
    }
}

/// Construction family recorded with every synthesized controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Minimal,
    MinimalReal,
    MinimalReduced,
    Triangular,
    TriangularDiag,
    TriangularReduced,
    Observer,
    ObserverDiag,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Minimal => "minimal",
            Family::MinimalReal => "minimal-real",
            Family::MinimalReduced => "minimal-reduced",
            Family::Triangular => "triangular",
            Family::TriangularDiag => "triangular-diag",
            Family::TriangularReduced => "triangular-reduced",
            Family::Observer => "observer",
            Family::ObserverDiag => "observer-diag",
            Family::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "minimal" => Family::Minimal,
            "minimal-real" => Family::MinimalReal,
            "minimal-reduced" => Family::MinimalReduced,
            "triangular" => Family::Triangular,
            "triangular-diag" => Family::TriangularDiag,
            "triangular-reduced" => Family::TriangularReduced,
            "observer" => Family::Observer,
            "observer-diag" => Family::ObserverDiag,
            "custom" => Family::Custom,
            other => return Err(Error::Precondition(format!("unknown controller family '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMeta {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Frequencies carried by the internal model, with the number of copies of
    /// each (`dim Y` for a full model, `p_k` for a reduced one).
    #[serde(default)]
    pub internal_model: Vec<(f64, usize)>,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl ControllerMeta {
    pub fn new(family: Family) -> Self {
        ControllerMeta { family, epsilon: None, internal_model: Vec::new(), parameters: BTreeMap::new() }
    }
}

/// Error-feedback controller `z' = G1 z + G2 e, u = K z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    g1: Matrix,
    g2: Matrix,
    k: Matrix,
    pub meta: ControllerMeta,
}

impl Controller {
    pub fn new(g1: Matrix, g2: Matrix, k: Matrix, meta: ControllerMeta) -> Result<Self> {
        let nc = g1.nrows();
        if g1.ncols() != nc {
            return Err(Error::dim("controller G1", format!("G1 must be square, got {}x{}", g1.nrows(), g1.ncols())));
        }
        if g2.nrows() != nc {
            return Err(Error::dim("controller G2", format!("G2 has {} rows, G1 is {nc}x{nc}", g2.nrows())));
        }
        if k.ncols() != nc {
            return Err(Error::dim("controller K", format!("K has {} columns, G1 is {nc}x{nc}", k.ncols())));
        }
        Ok(Controller { g1, g2, k, meta })
    }

    pub fn g1(&self) -> &Matrix {
        &self.g1
    }
    pub fn g2(&self) -> &Matrix {
        &self.g2
    }
    pub fn k(&self) -> &Matrix {
        &self.k
    }
    pub fn order(&self) -> usize {
        self.g1.nrows()
    }

    /// Checks `G2` is `n_c x p` and `K` is `m x n_c` for `plant`.
    pub fn check_against(&self, plant: &StateSpace) -> Result<()> {
        if self.g2.ncols() != plant.outputs() {
            return Err(Error::dim(
                "controller G2",
                format!("G2 has {} columns, plant has {} outputs", self.g2.ncols(), plant.outputs()),
            ));
        }
        if self.k.nrows() != plant.inputs() {
            return Err(Error::dim(
                "controller K",
                format!("K has {} rows, plant has {} inputs", self.k.nrows(), plant.inputs()),
            ));
        }
        Ok(())
    }

    /// Same `G2`, `K` and metadata with a replaced `G1`.
    pub fn with_g1(&self, g1: Matrix) -> Result<Self> {
        Controller::new(g1, self.g2.clone(), self.k.clone(), self.meta.clone())
    }
}

/// `x_e' = Ae x_e + Be v, e = Ce x_e + De v` on `x_e = (x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub ae: Matrix,
    pub be: Matrix,
    pub ce: Matrix,
    pub de: Matrix,
}

impl ClosedLoop {
    pub fn dim(&self) -> usize {
        self.ae.nrows()
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        spectral_abscissa(&self.ae)
    }
}

/// Block assembly
/// `Ae = [[A, BK], [G2 C, G1 + G2 D K]]`, `Be = [E; G2 F]`, `Ce = [C, DK]`, `De = F`.
pub fn assemble_closed_loop(plant: &StateSpace, ctrl: &Controller, exo: &Exosystem) -> Result<ClosedLoop> {
    ctrl.check_against(plant)?;
    if exo.e().nrows() != plant.states() {
        return Err(Error::dim(
            "exosystem E",
            format!("E has {} rows, plant has {} states", exo.e().nrows(), plant.states()),
        ));
    }
    if exo.f().nrows() != plant.outputs() {
        return Err(Error::dim(
            "exosystem F",
            format!("F has {} rows, plant has {} outputs", exo.f().nrows(), plant.outputs()),
        ));
    }
    let bk = plant.b() * ctrl.k();
    let dk = plant.d() * ctrl.k();
    let g2c = ctrl.g2() * plant.c();
    let g22 = ctrl.g1() + ctrl.g2() * &dk;
    let ae = from_blocks(&[&[plant.a(), &bk], &[&g2c, &g22]])?;
    let g2f = ctrl.g2() * exo.f();
    let be = numerics::vstack(&[exo.e(), &g2f])?;
    let ce = numerics::hstack(&[plant.c(), &dk])?;
    Ok(ClosedLoop { ae, be, ce, de: exo.f().clone() })
}

/// Convenience wrapper for [`Exosystem::from_frequencies`].
pub fn exosystem_from_frequencies(
    frequencies: &[f64],
    jordan_sizes: &[usize],
    e: Matrix,
    f: Matrix,
) -> Result<Exosystem> {
    Exosystem::from_frequencies(frequencies, jordan_sizes, e, f)
}
