//! Closed-loop simulation by exact exponential stepping, decay-rate fitting
//! and randomized perturbation sweeps.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expm, from_blocks, Matrix, Vector, C64};
use crate::sysmodel::{assemble_closed_loop, ClosedLoop, Controller, Exosystem, StateSpace};

/// Sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// Closed-loop state `(x, z)`.
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub references: Vec<Vector>,
    pub errors: Vec<Vector>,
}

impl SimResult {
    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("grid has at least two points")
    }

    pub fn error_norms(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.norm()).collect()
    }

    /// Largest `|e_i(t)|` over `t` in `[t1, t2]`, per output.
    pub fn max_error_on(&self, t1: f64, t2: f64) -> Result<Vec<f64>> {
        let idx = self.window_indices(t1, t2)?;
        let p = self.errors[0].len();
        Ok((0..p).map(|i| idx.iter().map(|&k| self.errors[k][i].norm()).fold(0.0, f64::max)).collect())
    }

    /// Largest error per output over the last quarter of the horizon.
    pub fn terminal_errors(&self) -> Vec<f64> {
        let tf = self.t_final();
        self.max_error_on(0.75 * tf, tf).expect("terminal window lies on the grid")
    }

    /// True when some sample has an imaginary part above `1e-9` relative to
    /// the largest value.
    pub fn is_complex(&self) -> bool {
        let all = || self.outputs.iter().chain(&self.references).chain(&self.errors).flat_map(|v| v.iter());
        let scale = all().map(|z| z.norm()).fold(1.0, f64::max);
        all().any(|z| z.im.abs() > 1e-9 * scale)
    }

    fn window_indices(&self, t1: f64, t2: f64) -> Result<Vec<usize>> {
        let (lo, hi) = (self.times[0], self.t_final());
        let slack = 1e-9 * hi.abs().max(1.0);
        if !(t1 <= t2 && t1 >= lo - slack && t2 <= hi + slack) {
            return Err(Error::Precondition(format!("window [{t1}, {t2}] is outside the grid [{lo}, {hi}]")));
        }
        Ok((0..self.times.len()).filter(|&k| self.times[k] >= t1 - slack && self.times[k] <= t2 + slack).collect())
    }
}

/// Integrates `d/dt (v, x_e) = [[S, 0], [Be, Ae]] (v, x_e)` on the grid
/// `0, dt, ..., t_final` by repeated application of `expm(dt M)`.
pub fn simulate(
    cl: &ClosedLoop,
    exo: &Exosystem,
    x0: &Vector,
    v0: &Vector,
    t_final: f64,
    dt: f64,
) -> Result<SimResult> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    if !(t_final >= dt && t_final.is_finite()) {
        return Err(Error::Precondition(format!("final time {t_final} must be at least the time step {dt}")));
    }
    let (ne, nv) = (cl.dim(), exo.dim());
    if x0.len() != ne || v0.len() != nv || cl.be.ncols() != nv {
        return Err(Error::dim(
            "simulation initial state",
            format!("x0 has {} entries and v0 {}, closed loop has {ne} states and exosystem {nv}", x0.len(), v0.len()),
        ));
    }
    let steps = (t_final / dt).round() as usize;
    let zero = Matrix::zeros(nv, ne);
    let generator = from_blocks(&[&[exo.s(), &zero], &[&cl.be, &cl.ae]])?;
    let step = expm(&generator.map(|z| z * dt))?;

    let mut w = Vector::zeros(nv + ne);
    w.rows_mut(0, nv).copy_from(v0);
    w.rows_mut(nv, ne).copy_from(x0);
    let mut out = SimResult {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        references: Vec::with_capacity(steps + 1),
        errors: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        if k > 0 {
            w = &step * &w;
        }
        let v = w.rows(0, nv).into_owned();
        let x = w.rows(nv, ne).into_owned();
        let error = &cl.ce * &x + &cl.de * &v;
        let reference = -(exo.f() * &v);
        out.times.push(k as f64 * dt);
        out.outputs.push(&error + &reference);
        out.references.push(reference);
        out.errors.push(error);
        out.states.push(x);
    }
    Ok(out)
}

/// Least-squares slope of `log |e|` on a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Minus the slope; `+inf` when the error vanishes on the window.
    pub rate: f64,
    pub r_squared: f64,
}

impl DecayFit {
    pub fn converged(&self) -> bool {
        self.rate == f64::INFINITY
    }
}

pub fn fit_decay(result: &SimResult, t1: f64, t2: f64) -> Result<DecayFit> {
    let idx = result.window_indices(t1, t2)?;
    let times: Vec<f64> = idx.iter().map(|&k| result.times[k]).collect();
    let norms: Vec<f64> = idx.iter().map(|&k| result.errors[k].norm()).collect();
    Ok(fit_decay_samples(&times, &norms))
}

/// Exponential fit to samples; zero samples are skipped.
pub fn fit_decay_samples(times: &[f64], norms: &[f64]) -> DecayFit {
    let pts: Vec<(f64, f64)> = times.iter().zip(norms).filter(|(_, &e)| e > 0.0).map(|(&t, &e)| (t, e.ln())).collect();
    if pts.len() < 2 {
        return DecayFit { rate: f64::INFINITY, r_squared: 1.0 };
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return DecayFit { rate: f64::INFINITY, r_squared: 1.0 };
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    DecayFit { rate: -slope, r_squared }
}

/// Which plant and exosystem matrices a sweep perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationTargets {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
    pub e: bool,
    pub f: bool,
}

impl Default for PerturbationTargets {
    fn default() -> Self {
        Self { a: true, b: true, c: true, d: true, e: true, f: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Relative Frobenius-norm size of each perturbation.
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub targets: PerturbationTargets,
    pub t_final: f64,
    pub dt: f64,
    /// Largest admissible terminal error.
    pub threshold: f64,
}

/// Outcome of one perturbed closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSample {
    pub index: usize,
    pub seed: u64,
    pub delta: f64,
    pub abscissa: f64,
    pub hurwitz: bool,
    /// Present for Hurwitz samples only.
    pub terminal_errors: Option<Vec<f64>>,
    pub decay_rate: Option<f64>,
    pub tracks: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub samples: Vec<PerturbationSample>,
    pub hurwitz: usize,
    pub out_of_class: usize,
    pub tracking: usize,
    pub failures: usize,
}

impl SweepReport {
    /// Every Hurwitz sample tracks.
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// `M + delta |M|_F G / |G|_F` with `G_ij = g_ij M_ij` and `g_ij` standard
/// Gaussian, so every entry moves in proportion to its own size.
pub fn perturb_matrix(m: &Matrix, delta: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let g = Matrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        let g: f64 = StandardNormal.sample(rng);
        m[(i, j)] * g
    });
    let gn = g.norm();
    if gn == 0.0 || delta == 0.0 {
        return m.clone();
    }
    m + g * C64::new(delta * m.norm() / gn, 0.0)
}

/// Perturbed copies of the plant and exosystem maps drawn from `rng`.
pub fn perturb_plant(
    plant: &StateSpace,
    exo: &Exosystem,
    delta: f64,
    targets: PerturbationTargets,
    rng: &mut ChaCha8Rng,
) -> Result<(StateSpace, Exosystem)> {
    let mut pick = |m: &Matrix, on: bool| {
        if on {
            perturb_matrix(m, delta, rng)
        } else {
            m.clone()
        }
    };
    let a = pick(plant.a(), targets.a);
    let b = pick(plant.b(), targets.b);
    let c = pick(plant.c(), targets.c);
    let d = pick(plant.d(), targets.d);
    let e = pick(exo.e(), targets.e);
    let f = pick(exo.f(), targets.f);
    Ok((StateSpace::new(a, b, c, d)?, exo.with_maps(e, f)?))
}

/// Sample `i` uses the generator seeded with `seed + i`, so results do not
/// depend on scheduling.
pub fn robustness_sweep(
    plant: &StateSpace,
    ctrl: &Controller,
    exo: &Exosystem,
    v0: &Vector,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if !(cfg.delta >= 0.0 && cfg.delta.is_finite()) {
        return Err(Error::Precondition(format!("perturbation size must be nonnegative, got {}", cfg.delta)));
    }
    ctrl.check_against(plant)?;
    let samples = (0..cfg.samples)
        .into_par_iter()
        .map(|index| {
            let seed = cfg.seed.wrapping_add(index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, x) = perturb_plant(plant, exo, cfg.delta, cfg.targets, &mut rng)?;
            let cl = assemble_closed_loop(&p, ctrl, &x)?;
            let abscissa = cl.spectral_abscissa()?;
            let mut sample = PerturbationSample {
                index,
                seed,
                delta: cfg.delta,
                abscissa,
                hurwitz: abscissa < 0.0,
                terminal_errors: None,
                decay_rate: None,
                tracks: None,
            };
            if sample.hurwitz {
                let res = simulate(&cl, &x, &Vector::zeros(cl.dim()), v0, cfg.t_final, cfg.dt)?;
                let terminal = res.terminal_errors();
                let fit = fit_decay(&res, cfg.t_final / 2.0, cfg.t_final)?;
                sample.tracks = Some(terminal.iter().all(|&e| e < cfg.threshold) && fit.rate > 0.0);
                sample.terminal_errors = Some(terminal);
                sample.decay_rate = Some(fit.rate);
            }
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;
    let hurwitz = samples.iter().filter(|s| s.hurwitz).count();
    let tracking = samples.iter().filter(|s| s.tracks == Some(true)).count();
    Ok(SweepReport { out_of_class: samples.len() - hurwitz, failures: hurwitz - tracking, hurwitz, tracking, samples })
}

fn push_value(line: &mut String, z: C64, complex: bool) {
    if complex {
        let _ = write!(line, ",{},{}", z.re, z.im);
    } else {
        let _ = write!(line, ",{}", z.re);
    }
}

/// Trajectory table `t,y1..,yref1..,e1..`; complex data gets `_re`/`_im`
/// column pairs.
pub fn trajectory_csv(result: &SimResult) -> String {
    let p = result.outputs.first().map_or(0, |v| v.len());
    let complex = result.is_complex();
    let mut out = String::from("t");
    for prefix in ["y", "yref", "e"] {
        for i in 1..=p {
            if complex {
                let _ = write!(out, ",{prefix}{i}_re,{prefix}{i}_im");
            } else {
                let _ = write!(out, ",{prefix}{i}");
            }
        }
    }
    out.push('\n');
    for k in 0..result.times.len() {
        let mut line = format!("{}", result.times[k]);
        for series in [&result.outputs, &result.references, &result.errors] {
            for z in series[k].iter() {
                push_value(&mut line, *z, complex);
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line plot of the real parts of outputs (solid) and references (dashed).
pub fn trajectory_svg(result: &SimResult) -> String {
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let t0 = result.times[0];
    let t1 = result.t_final();
    let vals = result.outputs.iter().chain(&result.references).flat_map(|v| v.iter().map(|z| z.re));
    let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let sx = |t: f64| pad + (t - t0) / (t1 - t0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - lo) / (hi - lo) * (h - 2.0 * pad);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(svg, "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">t = {t0:.3} .. {t1:.3}</text>", h - 12.0);
    let _ = writeln!(svg, "<text x=\"4\" y=\"{}\" font-size=\"12\">{hi:.3}</text>", pad - 4.0);
    let _ = writeln!(svg, "<text x=\"4\" y=\"{}\" font-size=\"12\">{lo:.3}</text>", h - pad + 14.0);
    let p = result.outputs.first().map_or(0, |v| v.len());
    for i in 0..p {
        let color = PALETTE[i % PALETTE.len()];
        for (series, dash) in [(&result.outputs, ""), (&result.references, " stroke-dasharray=\"6 4\"")] {
            let mut pts = String::new();
            for (k, v) in series.iter().enumerate() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(result.times[k]), sy(v[i].re));
            }
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
                pts.trim_end()
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimal::{minimal_controller, GainChoice};
    use crate::numerics::{real_matrix, spectral_abscissa};

    fn scalar_setup(eps: f64) -> (StateSpace, Exosystem, Controller) {
        let one = real_matrix(1, 1, &[1.0]);
        let plant = StateSpace::new(real_matrix(1, 1, &[-1.0]), one.clone(), one, Matrix::zeros(1, 1)).unwrap();
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), real_matrix(1, 1, &[-1.0])).unwrap();
        let ctrl = minimal_controller(&plant, &exo, eps, &GainChoice::Pseudoinverse).unwrap();
        (plant, exo, ctrl)
    }

    #[test]
    fn scalar_benchmark_closed_form() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let res = simulate(&cl, &exo, &Vector::zeros(2), &v0, 10.0, 0.01).unwrap();
        // Error obeys e'' + e' + e/4 = 0 with e(0) = -1, e'(0) = 0.
        for (k, &t) in res.times.iter().enumerate() {
            let exact = (-1.0 - 0.5 * t) * (-0.5 * t).exp();
            assert!((res.errors[k][0].re - exact).abs() < 1e-12, "t = {t}");
        }
        let last = res.errors.last().unwrap()[0].norm();
        assert!((last - 6.0 * (-5.0f64).exp()).abs() < 1e-12);
        let long = simulate(&cl, &exo, &Vector::zeros(2), &v0, 20.0, 0.01).unwrap();
        assert!(long.errors.last().unwrap()[0].norm() < 1e-3);
    }

    #[test]
    fn error_identity_and_grid() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(2.0, 0.0));
        let res = simulate(&cl, &exo, &Vector::zeros(2), &v0, 1.0, 0.1).unwrap();
        assert_eq!(res.times.len(), 11);
        assert!(res.times.windows(2).all(|w| w[1] > w[0]));
        for k in 0..res.times.len() {
            assert!((&res.outputs[k] - &res.references[k] - &res.errors[k]).norm() < 1e-14);
            assert!((&cl.ce * &res.states[k] - &res.outputs[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn halving_step_is_consistent() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let coarse = simulate(&cl, &exo, &Vector::zeros(2), &v0, 4.0, 0.02).unwrap();
        let fine = simulate(&cl, &exo, &Vector::zeros(2), &v0, 4.0, 0.01).unwrap();
        for k in 0..coarse.times.len() {
            assert!((&coarse.states[k] - &fine.states[2 * k]).norm() <= 1e-9);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        assert!(simulate(&cl, &exo, &Vector::zeros(2), &v0, 1.0, 0.0).is_err());
        assert!(simulate(&cl, &exo, &Vector::zeros(2), &v0, 0.001, 0.01).is_err());
    }

    #[test]
    fn fit_exact_exponential() {
        let times: Vec<f64> = (0..=100).map(|k| 0.05 * k as f64).collect();
        let norms: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = fit_decay_samples(&times, &norms);
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_modulated_exponential() {
        let times: Vec<f64> = (0..=1000).map(|k| 0.01 * k as f64).collect();
        let norms: Vec<f64> = times.iter().map(|t| (-t).exp() * (1.0 + 0.1 * (10.0 * t).sin())).collect();
        let fit = fit_decay_samples(&times, &norms);
        assert!((0.8..=1.2).contains(&fit.rate), "{fit:?}");
    }

    #[test]
    fn fit_zero_error_is_sentinel() {
        let fit = fit_decay_samples(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]);
        assert!(fit.converged());
    }

    #[test]
    fn fit_window_outside_grid() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let res = simulate(&cl, &exo, &Vector::zeros(2), &v0, 2.0, 0.1).unwrap();
        assert!(fit_decay(&res, 1.0, 3.0).is_err());
        let fit = fit_decay(&res, 1.0, 2.0).unwrap();
        assert!(fit.rate > 0.0 && fit.rate <= -spectral_abscissa(&cl.ae).unwrap() + 0.1);
    }

    #[test]
    fn zero_delta_sweep_is_nominal() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let cfg = SweepConfig {
            delta: 0.0,
            samples: 4,
            seed: 7,
            targets: PerturbationTargets::default(),
            t_final: 20.0,
            dt: 0.05,
            threshold: 0.05,
        };
        let report = robustness_sweep(&plant, &ctrl, &exo, &v0, &cfg).unwrap();
        assert_eq!(report.tracking, 4);
        assert!(report.pass());
        let first = &report.samples[0];
        assert!(report
            .samples
            .iter()
            .all(|s| s.abscissa == first.abscissa && s.terminal_errors == first.terminal_errors));
    }

    #[test]
    fn sweep_is_deterministic_and_relative() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let cfg = SweepConfig {
            delta: 0.05,
            samples: 6,
            seed: 11,
            targets: PerturbationTargets::default(),
            t_final: 20.0,
            dt: 0.05,
            threshold: 0.05,
        };
        let a = robustness_sweep(&plant, &ctrl, &exo, &v0, &cfg).unwrap();
        let b = robustness_sweep(&plant, &ctrl, &exo, &v0, &cfg).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, _) = perturb_plant(&plant, &exo, 0.05, PerturbationTargets::default(), &mut rng).unwrap();
        assert!((p.a() - plant.a()).norm() <= 0.05 * plant.a().norm() * (1.0 + 1e-12));
    }

    #[test]
    fn csv_header_and_rows() {
        let (plant, exo, ctrl) = scalar_setup(0.25);
        let cl = assemble_closed_loop(&plant, &ctrl, &exo).unwrap();
        let v0 = Vector::from_element(1, C64::new(1.0, 0.0));
        let res = simulate(&cl, &exo, &Vector::zeros(2), &v0, 0.2, 0.1).unwrap();
        let csv = trajectory_csv(&res);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,y1,yref1,e1");
        assert_eq!(lines.len(), 4);
        assert!(trajectory_svg(&res).contains("<polyline"));
    }
}
