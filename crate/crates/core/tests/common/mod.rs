//! Random test systems and spectrum comparison shared by the integration
//! tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use robreg::numerics::{eigenvalues, spectral_abscissa, Matrix, C64};
use robreg::sysmodel::{Exosystem, StateSpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| C64::new(StandardNormal.sample(rng), 0.0))
}

pub fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

/// Gaussian plant, generically stabilizable and detectable.
pub fn random_plant(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpace {
    let a = gaussian(rng, n, n);
    let b = gaussian(rng, n, m);
    let c = gaussian(rng, p, n);
    let d = gaussian(rng, p, m) * C64::new(0.5, 0.0);
    StateSpace::new(a, b, c, d).unwrap()
}

/// Gaussian plant shifted so that its spectral abscissa lies in [-1.5, -0.5].
pub fn random_stable_plant(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> StateSpace {
    let raw = random_plant(rng, n, m, p);
    let shift = spectral_abscissa(raw.a()).unwrap() + rng.random_range(0.5..1.5);
    let a = raw.a() - Matrix::identity(n, n) * C64::new(shift, 0.0);
    StateSpace::new(a, raw.b().clone(), raw.c().clone(), raw.d().clone()).unwrap()
}

/// `q` frequencies in [-3, 3] at least 0.2 apart.
pub fn random_frequencies(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    while out.len() < q {
        let w: f64 = rng.random_range(-3.0..3.0);
        if out.iter().all(|&u| (u - w).abs() >= 0.2) {
            out.push(w);
        }
    }
    out
}

pub fn random_exosystem(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, max_jordan: usize) -> Exosystem {
    let freqs = random_frequencies(rng, q);
    let sizes: Vec<usize> = (0..q).map(|_| rng.random_range(1..=max_jordan)).collect();
    let r: usize = sizes.iter().sum();
    let e = gaussian(rng, n, r);
    let f = gaussian(rng, p, r);
    Exosystem::from_frequencies(&freqs, &sizes, e, f).unwrap()
}

/// Largest distance in a greedy nearest-neighbour pairing of two spectra of
/// equal size.
pub fn spectrum_distance(lhs: &[C64], rhs: &[C64]) -> f64 {
    assert_eq!(lhs.len(), rhs.len(), "spectra of different size");
    let mut used = vec![false; rhs.len()];
    let mut worst = 0.0f64;
    for z in lhs {
        let (j, d) = rhs
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, w)| (j, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// Spectrum of `whole` against the union of the spectra of `parts`.
pub fn union_spectrum_distance(whole: &Matrix, parts: &[Matrix]) -> f64 {
    let lhs = eigenvalues(whole).unwrap();
    let rhs: Vec<C64> = parts.iter().flat_map(|m| eigenvalues(m).unwrap()).collect();
    spectrum_distance(&lhs, &rhs)
}
