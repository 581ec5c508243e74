#![allow(dead_code)]

use itertools::Itertools;
use mbcoherence::fock::matrix_element;
use mbcoherence::symmetric::falling_factorial;
use mbcoherence::{
    make_psi2, make_psi3, CMatrix, FockState, InternalVector, ModeSpaces, SeparableState, State, Statistics,
    SuperpositionState, SuperpositionTerm,
};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const BOTH: [Statistics; 2] = [Statistics::Boson, Statistics::Fermion];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

pub fn random_vector(rng: &mut impl Rng, d: usize) -> InternalVector {
    InternalVector::normalized((0..d).map(|_| gaussian(rng)).collect()).expect("nonzero")
}

pub fn random_modes(rng: &mut impl Rng, n: usize, d_ext: usize) -> Vec<usize> {
    let mut modes: Vec<usize> = (0..d_ext).collect();
    modes.shuffle(rng);
    modes.truncate(n);
    modes
}

/// Random separable state; internal vectors are mixed with a shared vector
/// by a random weight so that overlaps span the whole range.
pub fn random_separable(rng: &mut impl Rng, statistics: Statistics, n: usize, d_ext: usize, d_int: usize) -> SeparableState {
    let common = random_vector(rng, d_int);
    let weight: f64 = rng.random();
    let vectors: Vec<Vec<Complex64>> = (0..n)
        .map(|_| {
            let v = random_vector(rng, d_int);
            common.components().iter().zip(v.components()).map(|(c, x)| c * weight + x * (1.0 - weight)).collect()
        })
        .collect();
    let modes = random_modes(rng, n, d_ext);
    SeparableState::new(statistics, ModeSpaces::new(d_ext, d_int).unwrap(), &modes, vectors).unwrap()
}

pub fn random_superposition(
    rng: &mut impl Rng,
    statistics: Statistics,
    n: usize,
    d_ext: usize,
    d_int: usize,
    n_terms: usize,
) -> SuperpositionState {
    let modes = random_modes(rng, n, d_ext);
    let terms = (0..n_terms)
        .map(|_| SuperpositionTerm {
            amplitude: gaussian(rng),
            internal_labels: (0..n).map(|_| rng.random_range(0..d_int)).collect(),
        })
        .collect();
    SuperpositionState::new(statistics, ModeSpaces::new(d_ext, d_int).unwrap(), &modes, terms).unwrap()
}

pub fn psi2(statistics: Statistics) -> State {
    make_psi2(statistics, ModeSpaces::new(2, 2).unwrap()).unwrap().into()
}

pub fn psi3(statistics: Statistics) -> State {
    make_psi3(statistics, ModeSpaces::new(3, 3).unwrap()).unwrap().into()
}

/// Separable and entangled states with at most `max_n` particles.
pub fn test_states(seed: u64, max_n: usize) -> Vec<State> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for statistics in BOTH {
        for n in 1..=max_n {
            for d_ext in [n, n + 1] {
                for d_int in [1, 2, n.max(2)] {
                    out.push(random_separable(&mut r, statistics, n, d_ext, d_int).into());
                }
                out.push(random_superposition(&mut r, statistics, n, d_ext, 2, 3).into());
            }
        }
        out.push(psi2(statistics));
        out.push(psi3(statistics));
    }
    out
}

/// `<n| rho^(k) |m>` straight from second-quantized matrix elements.
pub fn brute_force_entry(psi: &FockState, n_particles: usize, d_int: usize, n: &[usize], m: &[usize]) -> Complex64 {
    let k = n.len();
    let norm = 1.0 / falling_factorial(n_particles, k);
    let mut sum = Complex64::new(0.0, 0.0);
    for labels in (0..k).map(|_| 0..d_int).multi_cartesian_product() {
        sum += matrix_element(psi, m, n, &labels).unwrap();
    }
    sum * norm
}

/// W^(k) as the sum of every reduced-density entry over ordered tuples of
/// distinct occupied modes.
pub fn brute_force_coherence(state: &State, k: usize) -> f64 {
    let psi = FockState::from(state);
    let n_particles = state.n_particles();
    let d_int = state.spaces().d_int;
    let tuples: Vec<Vec<usize>> = state.occupied_modes().iter().copied().permutations(k).collect();
    let mut sum = Complex64::new(0.0, 0.0);
    for n in &tuples {
        for m in &tuples {
            sum += brute_force_entry(&psi, n_particles, d_int, n, m);
        }
    }
    assert!(sum.im.abs() < 1e-10);
    sum.re
}

/// Leibniz expansion.
pub fn leibniz(a: &CMatrix, signed: bool) -> Complex64 {
    let n = a.nrows();
    (0..n)
        .permutations(n)
        .map(|p| {
            let inversions = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| p[i] > p[j]).count();
            let sign = if signed && inversions % 2 == 1 { -1.0 } else { 1.0 };
            p.iter().enumerate().map(|(i, &j)| a[(i, j)]).product::<Complex64>() * sign
        })
        .sum()
}

pub fn gram(state: &SeparableState) -> CMatrix {
    let v = state.internal_states();
    CMatrix::from_fn(v.len(), v.len(), |i, j| v[i].overlap(&v[j]))
}

/// W^(k) from explicit subset permanents or determinants via Leibniz.
pub fn leibniz_coherence(state: &SeparableState, k: usize) -> f64 {
    let g = gram(state);
    let n = state.n_particles();
    let signed = state.statistics() == Statistics::Fermion;
    let mut sum = Complex64::new(0.0, 0.0);
    for s in (0..n).combinations(k) {
        let sub = CMatrix::from_fn(k, k, |i, j| g[(s[i], s[j])]);
        sum += leibniz(&sub, signed);
    }
    sum.re * (1..=k).product::<usize>() as f64 / falling_factorial(n, k)
}
