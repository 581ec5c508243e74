//! Haar-random unitaries, Weingarten functions and Haar-averaged
//! correlators.
//!
//! For distinct rows `p_i`,
//! `E[prod_i U_{p_i m_i} U*_{p_i n_i}] = sum_{s in S_k} Wg_d(s) prod_i [m_{s(i)} = n_i]`.
//! The averaged connected correlator expands into moments of products of raw
//! correlators over disjoint blocks of output modes. Each such product is a
//! single monomial in the entries of one shared `U`, so it is averaged as a
//! whole rather than as a product of averages.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::{reduced_density, ReducedDensity};
use crate::correlators::{enumerate_partitions, CorrelatorTable, SetPartition};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ExternalUnitary};
use crate::states::State;
use crate::symmetric::{compose, falling_factorial, inverse, n_cycles, permutations, CycleType};

/// Largest order for which `S_k` is enumerated.
pub const MAX_WEINGARTEN_ORDER: usize = 7;

/// Haar-distributed unitary drawn from `rng`: complex Ginibre matrix, QR
/// decomposition, then the phases of `diag(R)` moved into `Q`.
pub fn sample_haar_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ExternalUnitary {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    ExternalUnitary::new_unchecked(q)
}

/// Deterministic Haar unitary for `seed`.
pub fn sample_haar(d: usize, seed: u64) -> ExternalUnitary {
    sample_haar_with(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// The `index`-th unitary of the stream derived from `seed`; independent of
/// how many other indices are drawn or in which order.
pub fn sample_haar_indexed(d: usize, seed: u64, index: u64) -> ExternalUnitary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    sample_haar_with(d, &mut rng)
}

/// Weingarten function `Wg_d` on `S_k`, one value per cycle type.
#[derive(Debug, Clone, PartialEq)]
pub struct WeingartenTable {
    k: usize,
    d: usize,
    values: BTreeMap<CycleType, f64>,
}

impl WeingartenTable {
    /// Solves the class-level system
    /// `sum_c (sum_{t in c} d^{cycles(s t^-1)}) w_c = [s = id]`
    /// with one representative `s` per class.
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k == 0 || k > MAX_WEINGARTEN_ORDER {
            return Err(Error::OrderOutOfRange { k, max: MAX_WEINGARTEN_ORDER });
        }
        if d < k {
            return Err(Error::SingularWeingarten { k, d });
        }
        let perms = permutations(k);
        let types: Vec<CycleType> = perms.iter().map(|p| CycleType::of(p)).collect();
        let classes: Vec<CycleType> = {
            let mut c = types.clone();
            c.sort();
            c.dedup();
            c
        };
        let class_of = |t: &CycleType| classes.binary_search(t).unwrap();
        let mut representatives = vec![usize::MAX; classes.len()];
        for (i, t) in types.iter().enumerate() {
            let c = class_of(t);
            if representatives[c] == usize::MAX {
                representatives[c] = i;
            }
        }
        let nc = classes.len();
        let df = d as f64;
        let mut g = DMatrix::<f64>::zeros(nc, nc);
        for (row, &rep) in representatives.iter().enumerate() {
            let sigma = &perms[rep];
            for (tau, t) in perms.iter().zip(&types) {
                let cycles = n_cycles(&compose(sigma, &inverse(tau)));
                g[(row, class_of(t))] += df.powi(cycles as i32);
            }
        }
        let mut rhs = nalgebra::DVector::<f64>::zeros(nc);
        let id_class = class_of(&CycleType::new(vec![1; k]));
        rhs[id_class] = 1.0;
        let w = g.lu().solve(&rhs).ok_or(Error::SingularWeingarten { k, d })?;
        let values = classes.into_iter().zip(w.iter().copied()).collect();
        Ok(WeingartenTable { k, d, values })
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &BTreeMap<CycleType, f64> {
        &self.values
    }

    pub fn by_type(&self, t: &CycleType) -> Option<f64> {
        self.values.get(t).copied()
    }

    pub fn value(&self, perm: &[usize]) -> f64 {
        self.values[&CycleType::of(perm)]
    }

    /// Largest violation of the defining system over all of `S_k`.
    pub fn residual(&self) -> f64 {
        let perms = permutations(self.k);
        let wg: Vec<f64> = perms.iter().map(|p| self.value(p)).collect();
        let df = self.d as f64;
        perms
            .par_iter()
            .enumerate()
            .map(|(i, sigma)| {
                let mut acc = if i == 0 { -1.0 } else { 0.0 };
                for (tau, &w) in perms.iter().zip(&wg) {
                    acc += df.powi(n_cycles(&compose(sigma, &inverse(tau))) as i32) * w;
                }
                acc.abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Dense lookup by the base-k encoding of a permutation.
    fn dense(&self) -> Vec<f64> {
        let k = self.k;
        let mut table = vec![f64::NAN; k.pow(k as u32)];
        for p in permutations(k) {
            table[perm_key(&p, k)] = self.value(&p);
        }
        table
    }
}

fn perm_key(p: &[usize], k: usize) -> usize {
    p.iter().rev().fold(0, |acc, &x| acc * k + x)
}

struct HaarAverager<'a> {
    k: usize,
    wg: Vec<f64>,
    densities: &'a [ReducedDensity],
    n: usize,
}

/// Nonzero density entry `(n tuple, m tuple, weighted value)`.
type Entry<'a> = (&'a [usize], &'a [usize], Complex64);

impl HaarAverager<'_> {
    /// `E[prod_{B in P} raw_B]` for blocks of positions `0..k`.
    fn product_moment(&self, partition: &SetPartition) -> Complex64 {
        // Nonzero entries (n tuple, m tuple, weighted value) for each block.
        let per_block: Vec<Vec<Entry<'_>>> = partition
            .blocks
            .iter()
            .map(|block| {
                let rho = &self.densities[block.len() - 1];
                let weight = falling_factorial(self.n, block.len());
                let support = rho.tuple_support();
                let bs = support.block_size();
                let mut entries = Vec::new();
                for (b, mat) in rho.blocks().iter().enumerate() {
                    for i in 0..bs {
                        for j in 0..bs {
                            let v = mat[(i, j)];
                            if v.norm() > 0.0 {
                                entries.push((support.tuple(b * bs + i), support.tuple(b * bs + j), v * weight));
                            }
                        }
                    }
                }
                entries
            })
            .collect();
        let mut n_full = vec![0usize; self.k];
        let mut m_full = vec![0usize; self.k];
        let mut total = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        self.recurse(partition, &per_block, 0, one, &mut n_full, &mut m_full, &mut total);
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        partition: &SetPartition,
        per_block: &[Vec<Entry<'_>>],
        b: usize,
        value: Complex64,
        n_full: &mut [usize],
        m_full: &mut [usize],
        total: &mut Complex64,
    ) {
        if b == per_block.len() {
            let w = self.matching_weight(n_full, m_full);
            if w != 0.0 {
                *total += value * w;
            }
            return;
        }
        let block = &partition.blocks[b];
        for &(n, m, v) in &per_block[b] {
            for (slot, (&ni, &mi)) in block.iter().zip(n.iter().zip(m)) {
                n_full[*slot] = ni;
                m_full[*slot] = mi;
            }
            self.recurse(partition, per_block, b + 1, value * v, n_full, m_full, total);
        }
    }

    /// `sum_{s : m_{s(i)} = n_i} Wg(s)`.
    fn matching_weight(&self, n: &[usize], m: &[usize]) -> f64 {
        let mut sigma = vec![0usize; self.k];
        let mut used = 0u32;
        let mut acc = 0.0;
        self.match_positions(n, m, 0, &mut sigma, &mut used, &mut acc);
        acc
    }

    fn match_positions(&self, n: &[usize], m: &[usize], i: usize, sigma: &mut [usize], used: &mut u32, acc: &mut f64) {
        if i == self.k {
            *acc += self.wg[perm_key(sigma, self.k)];
            return;
        }
        for j in 0..self.k {
            if *used & (1 << j) == 0 && m[j] == n[i] {
                *used |= 1 << j;
                sigma[i] = j;
                self.match_positions(n, m, i + 1, sigma, used, acc);
                *used &= !(1 << j);
            }
        }
    }
}

fn real_average(z: Complex64) -> Result<f64> {
    if z.im.abs() > 1e-9 {
        return Err(Error::InvariantViolation(format!("Haar average has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

fn densities_up_to(state: &State, k: usize) -> Result<Vec<ReducedDensity>> {
    (1..=k).map(|j| reduced_density(state, j)).collect()
}

fn check_haar_order(state: &State, k: usize) -> Result<usize> {
    let n = state.n_particles();
    let d = state.spaces().d_ext;
    if k == 0 || k > n {
        return Err(Error::OrderOutOfRange { k, max: n });
    }
    if k > MAX_WEINGARTEN_ORDER {
        return Err(Error::OrderOutOfRange { k, max: MAX_WEINGARTEN_ORDER });
    }
    if d < k {
        return Err(Error::SingularWeingarten { k, d });
    }
    Ok(d)
}

/// Haar average of the raw k-point correlator on any k distinct output
/// modes: `N!/(N-k)! sum_s Wg_d(s) sum_n <n|rho^(k)|s.n>`.
pub fn haar_avg_raw(state: &State, k: usize) -> Result<f64> {
    let d = check_haar_order(state, k)?;
    let table = WeingartenTable::new(k, d)?;
    let densities = densities_up_to(state, k)?;
    let avg = HaarAverager { k, wg: table.dense(), densities: &densities, n: state.n_particles() };
    let single = SetPartition { blocks: vec![(0..k).collect()] };
    real_average(avg.product_moment(&single))
}

/// Haar average of the connected k-point correlator at unit filling
/// (`N = d`), expanding the cumulant into moments of block products.
pub fn haar_avg_connected(state: &State, k: usize) -> Result<f64> {
    let d = check_haar_order(state, k)?;
    let n = state.n_particles();
    if d != n {
        return Err(Error::UnsupportedRegime(format!(
            "analytic connected averages need N = d, got N = {n}, d = {d}"
        )));
    }
    let table = WeingartenTable::new(k, d)?;
    let densities = densities_up_to(state, k)?;
    let avg = HaarAverager { k, wg: table.dense(), densities: &densities, n };
    let partitions = enumerate_partitions(k)?;
    let terms: Vec<Complex64> = partitions
        .par_iter()
        .map(|p| avg.product_moment(p) * p.moebius())
        .collect();
    real_average(terms.into_iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McEstimate { mean, stderr: (var / n).sqrt(), samples: values.len() }
    }
}

/// Monte-Carlo estimates over Haar unitaries of the raw and connected
/// correlators on the output modes `0..k`, for every `k` up to `max_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HaarMonteCarlo {
    pub raw: Vec<McEstimate>,
    pub connected: Vec<McEstimate>,
}

impl HaarMonteCarlo {
    pub fn connected(&self, k: usize) -> McEstimate {
        self.connected[k - 1]
    }

    pub fn raw(&self, k: usize) -> McEstimate {
        self.raw[k - 1]
    }
}

/// Samples are evaluated in parallel and reduced in index order, so the
/// result depends only on `(state, max_k, samples, seed)`.
pub fn haar_monte_carlo(state: &State, max_k: usize, samples: usize, seed: u64) -> Result<HaarMonteCarlo> {
    let d = state.spaces().d_ext;
    if max_k == 0 || max_k > d {
        return Err(Error::OrderOutOfRange { k: max_k, max: d });
    }
    if samples == 0 {
        return Err(Error::Config("at least one Monte-Carlo sample is required".into()));
    }
    let ground: Vec<usize> = (0..max_k).collect();
    let per_sample: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let u = sample_haar_indexed(d, seed, s);
            let mut table = CorrelatorTable::new(state, &u, &ground, max_k)?;
            let raw = (1..=max_k).map(|k| table.raw(&ground[..k]).unwrap()).collect();
            let conn = (1..=max_k).map(|k| table.connected(&ground[..k]).unwrap()).collect();
            Ok((raw, conn))
        })
        .collect();
    let mut raw_cols = vec![Vec::with_capacity(samples); max_k];
    let mut conn_cols = vec![Vec::with_capacity(samples); max_k];
    for r in per_sample {
        let (raw, conn) = r?;
        for k in 0..max_k {
            raw_cols[k].push(raw[k]);
            conn_cols[k].push(conn[k]);
        }
    }
    Ok(HaarMonteCarlo {
        raw: raw_cols.iter().map(|c| McEstimate::from_samples(c)).collect(),
        connected: conn_cols.iter().map(|c| McEstimate::from_samples(c)).collect(),
    })
}
