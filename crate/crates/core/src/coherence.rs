//! External k-particle reduced density matrices and the mean coherence
//! `W^(k)`, plus the related scalar measures: degree of indistinguishability,
//! the pairwise-overlap witness and the symmetric-subspace projection.
//!
//! With at most one particle per mode, `<n|rho^(k)|m>` vanishes unless `n`
//! and `m` are orderings of the same set of occupied modes. The support is
//! therefore stored as one dense `k! x k!` block per k-subset of particles.

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{annihilate_string, FockState};
use crate::linalg::{determinant, permanent, submatrix, CMatrix};
use crate::states::{SeparableState, State, Statistics, SuperpositionState};
use crate::symmetric::{factorial, falling_factorial, permutations, sequence_sign};

const REAL_TOLERANCE: f64 = 1e-10;

/// Ordered k-tuples of distinct particle positions `0..n`, grouped so that the
/// `k!` orderings of each k-subset are contiguous.
#[derive(Debug, Clone)]
pub struct TupleSupport {
    n: usize,
    k: usize,
    tuples: Vec<Vec<usize>>,
    lookup: Vec<u32>,
}

impl TupleSupport {
    pub fn new(n: usize, k: usize) -> Self {
        let orderings = permutations(k);
        let mut tuples: Vec<Vec<usize>> = Vec::with_capacity(falling_factorial(n, k) as usize);
        for subset in (0..n).combinations(k) {
            for p in &orderings {
                tuples.push(p.iter().map(|&i| subset[i]).collect());
            }
        }
        let mut lookup = vec![u32::MAX; n.pow(k as u32)];
        for (idx, t) in tuples.iter().enumerate() {
            lookup[Self::key(n, t)] = idx as u32;
        }
        TupleSupport { n, k, tuples, lookup }
    }

    fn key(n: usize, t: &[usize]) -> usize {
        t.iter().rev().fold(0, |acc, &i| acc * n + i)
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn block_size(&self) -> usize {
        factorial(self.k) as usize
    }

    pub fn n_blocks(&self) -> usize {
        self.len() / self.block_size()
    }

    pub fn tuple(&self, idx: usize) -> &[usize] {
        &self.tuples[idx]
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    /// Index of a tuple of particle positions, `None` when it has repeated
    /// entries or leaves the range.
    pub fn index_of(&self, t: &[usize]) -> Option<usize> {
        if t.len() != self.k || t.iter().any(|&i| i >= self.n) {
            return None;
        }
        match self.lookup[Self::key(self.n, t)] {
            u32::MAX => None,
            idx => Some(idx as usize),
        }
    }
}

/// `<n|rho_ext^(k)|m>` restricted to ordered tuples of distinct occupied modes.
#[derive(Debug, Clone)]
pub struct ReducedDensity {
    occupied_modes: Vec<usize>,
    support: TupleSupport,
    /// `blocks[b][(i, j)] = <n|rho|m>` with `n`, `m` the i-th and j-th
    /// orderings of the b-th subset.
    blocks: Vec<CMatrix>,
}

impl ReducedDensity {
    pub fn order(&self) -> usize {
        self.support.k
    }

    pub fn n_particles(&self) -> usize {
        self.support.n
    }

    pub fn occupied_modes(&self) -> &[usize] {
        &self.occupied_modes
    }

    pub fn tuple_support(&self) -> &TupleSupport {
        &self.support
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// Support tuples as external mode indices.
    pub fn support(&self) -> Vec<Vec<usize>> {
        self.support
            .tuples
            .iter()
            .map(|t| t.iter().map(|&i| self.occupied_modes[i]).collect())
            .collect()
    }

    /// `<n|rho|m>` for support indices `n`, `m`.
    #[inline]
    pub fn entry(&self, n: usize, m: usize) -> Complex64 {
        let bs = self.support.block_size();
        if n / bs != m / bs {
            return Complex64::new(0.0, 0.0);
        }
        self.blocks[n / bs][(n % bs, m % bs)]
    }

    /// `<n|rho|m>` for tuples of external modes; zero off the support.
    pub fn entry_by_modes(&self, n: &[usize], m: &[usize]) -> Complex64 {
        let to_pos = |t: &[usize]| -> Option<Vec<usize>> {
            t.iter().map(|x| self.occupied_modes.binary_search(x).ok()).collect()
        };
        match (to_pos(n).and_then(|t| self.support.index_of(&t)), to_pos(m).and_then(|t| self.support.index_of(&t))) {
            (Some(i), Some(j)) => self.entry(i, j),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let dim = self.dim();
        let bs = self.support.block_size();
        let mut out = CMatrix::zeros(dim, dim);
        for (b, block) in self.blocks.iter().enumerate() {
            out.view_mut((b * bs, b * bs), (bs, bs)).copy_from(block);
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    pub fn sum_entries(&self) -> Complex64 {
        self.blocks.iter().flat_map(|b| b.iter()).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| (b - b.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let herm = (b + b.adjoint()).scale(0.5);
                herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Traces out the last tensor factor, giving `rho^(k-1)` on the same
    /// support layout as [`reduced_density`] with order `k - 1`.
    pub fn partial_trace_last(&self) -> Result<ReducedDensity> {
        let k = self.order();
        if k < 2 {
            return Err(Error::OrderOutOfRange { k, max: self.n_particles() });
        }
        let n = self.n_particles();
        let lower = TupleSupport::new(n, k - 1);
        let bs = lower.block_size();
        let mut blocks = vec![CMatrix::zeros(bs, bs); lower.n_blocks()];
        for (b, block) in blocks.iter_mut().enumerate() {
            for i in 0..bs {
                let row = lower.tuple(b * bs + i);
                for j in 0..bs {
                    let col = lower.tuple(b * bs + j);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for last in (0..n).filter(|x| !row.contains(x)) {
                        let mut r = row.to_vec();
                        r.push(last);
                        let mut c = col.to_vec();
                        c.push(last);
                        if let (Some(ri), Some(ci)) = (self.support.index_of(&r), self.support.index_of(&c)) {
                            acc += self.entry(ri, ci);
                        }
                    }
                    block[(i, j)] = acc;
                }
            }
        }
        Ok(ReducedDensity { occupied_modes: self.occupied_modes.clone(), support: lower, blocks })
    }

    /// Checks Hermiticity (1e-12), unit trace (1e-12) and positivity
    /// (smallest eigenvalue above -1e-10).
    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_deviation();
        if h > 1e-12 {
            return Err(Error::InvariantViolation(format!("reduced density not Hermitian ({h:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-12 {
            return Err(Error::InvariantViolation(format!("reduced density trace {tr}")));
        }
        let ev = self.min_eigenvalue();
        if ev < -1e-10 {
            return Err(Error::InvariantViolation(format!("reduced density eigenvalue {ev:.3e}")));
        }
        Ok(())
    }
}

fn check_order(state: &State, k: usize) -> Result<()> {
    let n = state.n_particles();
    if k == 0 || k > n {
        return Err(Error::OrderOutOfRange { k, max: n });
    }
    Ok(())
}

/// Internal-state overlaps `S_ij = <phi_i|phi_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(CMatrix);

impl GramMatrix {
    pub fn from_state(state: &SeparableState) -> Self {
        let v = state.internal_states();
        GramMatrix(CMatrix::from_fn(v.len(), v.len(), |i, j| v[i].overlap(&v[j])))
    }

    pub fn entries(&self) -> &CMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }
}

/// External k-particle reduced density of either state family.
pub fn reduced_density(state: &State, k: usize) -> Result<ReducedDensity> {
    check_order(state, k)?;
    match state {
        State::Separable(s) => Ok(separable_reduced_density(s, k)),
        State::Superposition(s) => Ok(superposition_reduced_density(s, k)),
    }
}

/// `(N-k)!/N! * sgn * prod_i <phi_{m_i}|phi_{n_i}>` on each block.
fn separable_reduced_density(state: &SeparableState, k: usize) -> ReducedDensity {
    let n = state.n_particles();
    let gram = GramMatrix::from_state(state);
    let support = TupleSupport::new(n, k);
    let norm = 1.0 / falling_factorial(n, k);
    let bs = support.block_size();
    let stats = state.statistics();
    let signs: Vec<f64> = support.tuples.iter().map(|t| sequence_sign(t)).collect();
    let blocks = (0..support.n_blocks())
        .into_par_iter()
        .map(|b| {
            CMatrix::from_fn(bs, bs, |i, j| {
                let (ni, mj) = (b * bs + i, b * bs + j);
                let (nt, mt) = (support.tuple(ni), support.tuple(mj));
                let overlaps: Complex64 = nt.iter().zip(mt).map(|(&a, &c)| gram.get(c, a)).product();
                overlaps * (norm * stats.exchange_sign(signs[ni] * signs[mj]))
            })
        })
        .collect();
    ReducedDensity { occupied_modes: state.occupied_modes().to_vec(), support, blocks }
}

/// Sums `<psi| a^dag_{m a} a_{n a} |psi>` over label tuples drawn from the
/// labels present in the state.
fn superposition_reduced_density(state: &SuperpositionState, k: usize) -> ReducedDensity {
    let n = state.n_particles();
    let psi = FockState::from_superposition(state);
    let modes = state.occupied_modes();
    let labels: Vec<usize> = state
        .terms()
        .iter()
        .flat_map(|t| t.internal_labels.iter().copied())
        .sorted()
        .dedup()
        .collect();
    let label_tuples: Vec<Vec<usize>> = (0..k).map(|_| labels.iter().copied()).multi_cartesian_product().collect();
    let support = TupleSupport::new(n, k);
    let norm = 1.0 / falling_factorial(n, k);
    let bs = support.block_size();
    let blocks = (0..support.n_blocks())
        .into_par_iter()
        .map(|b| {
            // reduced[i][a] = a_{n a} |psi> for the i-th ordering.
            let reduced: Vec<Vec<FockState>> = (0..bs)
                .map(|i| {
                    let t: Vec<usize> = support.tuple(b * bs + i).iter().map(|&p| modes[p]).collect();
                    label_tuples.iter().map(|l| annihilate_string(&psi, &t, l)).collect()
                })
                .collect();
            CMatrix::from_fn(bs, bs, |i, j| {
                let sum: Complex64 = reduced[j].iter().zip(&reduced[i]).map(|(bra, ket)| bra.inner(ket)).sum();
                sum * norm
            })
        })
        .collect();
    ReducedDensity { occupied_modes: modes.to_vec(), support, blocks }
}

fn real_part(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() > REAL_TOLERANCE {
        return Err(Error::InvariantViolation(format!("{what} has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// Mean coherence `W^(k)`: the sum of all entries of `rho_ext^(k)`.
///
/// For separable states the sum is streamed over subsets and pairs of
/// orderings without materializing the matrix.
pub fn mean_coherence(state: &State, k: usize) -> Result<f64> {
    check_order(state, k)?;
    let total = match state {
        State::Separable(s) => separable_direct_sum(s, k),
        State::Superposition(_) => reduced_density(state, k)?.sum_entries(),
    };
    let w = real_part(total, "mean coherence")?;
    if w < -REAL_TOLERANCE {
        return Err(Error::InvariantViolation(format!("negative mean coherence {w:.3e}")));
    }
    Ok(w)
}

fn separable_direct_sum(state: &SeparableState, k: usize) -> Complex64 {
    let n = state.n_particles();
    let gram = GramMatrix::from_state(state);
    let stats = state.statistics();
    let orderings = permutations(k);
    let signs: Vec<f64> = orderings.iter().map(|p| sequence_sign(p)).collect();
    let subsets: Vec<Vec<usize>> = (0..n).combinations(k).collect();
    let partial: Vec<Complex64> = subsets
        .par_iter()
        .map(|subset| {
            let mut acc = CompensatedSum::default();
            for (pn, &sn) in orderings.iter().zip(&signs) {
                for (pm, &sm) in orderings.iter().zip(&signs) {
                    let prod: Complex64 = pn.iter().zip(pm).map(|(&a, &c)| gram.get(subset[c], subset[a])).product();
                    acc.add(prod * stats.exchange_sign(sn * sm));
                }
            }
            acc.value()
        })
        .collect();
    partial.into_iter().sum::<Complex64>() / falling_factorial(n, k)
}

/// Neumaier summation, applied to real and imaginary parts separately.
#[derive(Default)]
struct CompensatedSum {
    sum: Complex64,
    carry: Complex64,
}

impl CompensatedSum {
    fn add(&mut self, x: Complex64) {
        let (re, cre) = neumaier(self.sum.re, self.carry.re, x.re);
        let (im, cim) = neumaier(self.sum.im, self.carry.im, x.im);
        self.sum = Complex64::new(re, im);
        self.carry = Complex64::new(cre, cim);
    }

    fn value(&self) -> Complex64 {
        self.sum + self.carry
    }
}

fn neumaier(sum: f64, carry: f64, x: f64) -> (f64, f64) {
    let t = sum + x;
    let lost = if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
    (t, carry + lost)
}

/// `W^(k) = k!(N-k)!/N! * sum_S perm(S_S)` for bosons, with the determinant in
/// place of the permanent for fermions.
pub fn mean_coherence_gram(state: &SeparableState, k: usize) -> Result<f64> {
    let n = state.n_particles();
    if k == 0 || k > n {
        return Err(Error::OrderOutOfRange { k, max: n });
    }
    let gram = GramMatrix::from_state(state);
    let subsets: Vec<Vec<usize>> = (0..n).combinations(k).collect();
    let stats = state.statistics();
    let parts: Vec<Complex64> = subsets
        .par_iter()
        .map(|s| {
            let sub = submatrix(gram.entries(), s);
            match stats {
                Statistics::Boson => permanent(&sub),
                Statistics::Fermion => determinant(&sub),
            }
        })
        .collect();
    let total = parts.into_iter().sum::<Complex64>() * (factorial(k) / falling_factorial(n, k));
    let w = real_part(total, "mean coherence")?;
    Ok(w)
}

/// Like [`mean_coherence_gram`] but accepting a [`State`], failing on
/// superpositions.
pub fn mean_coherence_gram_state(state: &State, k: usize) -> Result<f64> {
    mean_coherence_gram(state.as_separable().ok_or(Error::NotSeparable)?, k)
}

/// Occupation numbers `N_{m a}` of a Fock basis state, indexed
/// `[external mode][internal label]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationTable(Vec<Vec<usize>>);

impl OccupationTable {
    pub fn new(counts: Vec<Vec<usize>>) -> Result<Self> {
        let width = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("ragged occupation table".into()));
        }
        Ok(OccupationTable(counts))
    }

    /// Occupations of a separable state whose internal vectors are basis
    /// vectors; `None` otherwise.
    pub fn from_basis_state(state: &SeparableState) -> Option<Self> {
        let spaces = state.spaces();
        let mut counts = vec![vec![0; spaces.d_int]; spaces.d_ext];
        for (&m, v) in state.occupied_modes().iter().zip(state.internal_states()) {
            let label = v.components().iter().position(|z| (z.norm() - 1.0).abs() < 1e-12)?;
            counts[m][label] += 1;
        }
        Some(OccupationTable(counts))
    }

    pub fn mode_occupation(&self, m: usize) -> usize {
        self.0[m].iter().sum()
    }

    pub fn n_particles(&self) -> usize {
        (0..self.0.len()).map(|m| self.mode_occupation(m)).sum()
    }

    /// `sum_{m != n} N_m N_n`.
    pub fn distinct_mode_pairs(&self) -> usize {
        let occ: Vec<usize> = (0..self.0.len()).map(|m| self.mode_occupation(m)).collect();
        let total: usize = occ.iter().sum();
        total * total - occ.iter().map(|x| x * x).sum::<usize>()
    }
}

/// `sum_{m != n} sum_a N_{ma} N_{na} / sum_{m != n} N_m N_n`.
pub fn degree_of_indistinguishability(occupations: &OccupationTable) -> Result<f64> {
    let denom = occupations.distinct_mode_pairs();
    if denom == 0 {
        return Err(Error::InvariantViolation(
            "degree of indistinguishability undefined: all particles share one mode".into(),
        ));
    }
    let rows = &occupations.0;
    let width = rows.first().map_or(0, Vec::len);
    let mut num = 0usize;
    for a in 0..width {
        let col: usize = rows.iter().map(|r| r[a]).sum();
        let sq: usize = rows.iter().map(|r| r[a] * r[a]).sum();
        num += col * col - sq;
    }
    Ok(num as f64 / denom as f64)
}

/// `N(N-1)(W^(2) - 1) / sum_{m != n} N_m N_n`, which equals the degree of
/// indistinguishability for bosonic Fock states.
pub fn indistinguishability_from_mean_coherence(w2: f64, occupations: &OccupationTable) -> Result<f64> {
    let denom = occupations.distinct_mode_pairs();
    if denom == 0 {
        return Err(Error::InvariantViolation(
            "degree of indistinguishability undefined: all particles share one mode".into(),
        ));
    }
    let n = occupations.n_particles() as f64;
    Ok(n * (n - 1.0) * (w2 - 1.0) / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessResult {
    pub w2: f64,
    pub threshold: f64,
    pub violated: bool,
}

/// States whose internal states contain an orthogonal pair satisfy
/// `W^(2) <= 2 - 2/N`; exceeding it certifies genuine N-particle
/// indistinguishability.
pub fn witness_genuine_indistinguishability(state: &SeparableState) -> Result<WitnessResult> {
    let n = state.n_particles();
    if n < 2 {
        return Err(Error::OrderOutOfRange { k: 2, max: n });
    }
    let w2 = mean_coherence(&State::Separable(state.clone()), 2)?;
    let threshold = 2.0 - 2.0 / n as f64;
    Ok(WitnessResult { w2, threshold, violated: w2 > threshold + 1e-12 })
}

/// `p_s = tr(rho_ext P_S)` with `P_S = (1/N!) sum_pi pi`, applying each
/// permutation of tensor factors explicitly.
pub fn symmetric_projection(state: &State) -> Result<f64> {
    let n = state.n_particles();
    let rho = reduced_density(state, n)?;
    let support = rho.tuple_support();
    let perms = permutations(n);
    let mut total = Complex64::new(0.0, 0.0);
    for idx in 0..support.len() {
        let m = support.tuple(idx);
        for p in &perms {
            // (pi m)_i = m_{pi^-1(i)}
            let mut image = vec![0; n];
            for (i, &pi) in p.iter().enumerate() {
                image[pi] = m[i];
            }
            let j = support.index_of(&image).expect("permuted tuple stays in support");
            total += rho.entry(idx, j);
        }
    }
    real_part(total / factorial(n), "symmetric projection")
}

/// `perm(S) / N!` for separable bosons, `det(S) / N!` for fermions.
pub fn symmetric_projection_gram(state: &SeparableState) -> Result<f64> {
    let gram = GramMatrix::from_state(state);
    let value = match state.statistics() {
        Statistics::Boson => permanent(gram.entries()),
        Statistics::Fermion => determinant(gram.entries()),
    };
    real_part(value / factorial(state.n_particles()), "symmetric projection")
}

/// Dense Hermitian eigenvalues helper used by tests and validation.
pub fn hermitian_min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let herm = (m + m.adjoint()).scale(0.5);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}
