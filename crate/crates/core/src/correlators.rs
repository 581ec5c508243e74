//! k-point density correlators after an external unitary, and their
//! connected (cumulant) parts.

use std::collections::HashMap;

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coherence::{reduced_density, ReducedDensity};
use crate::error::{Error, Result};
use crate::fock::check_distinct;
use crate::linalg::ExternalUnitary;
use crate::states::State;
use crate::symmetric::falling_factorial;

pub const MAX_PARTITION_ORDER: usize = 8;
const IMAG_TOLERANCE: f64 = 1e-9;

/// Distinct output modes `p_1 ... p_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeTuple(Vec<usize>);

impl ModeTuple {
    pub fn new(indices: Vec<usize>, d_ext: usize) -> Result<Self> {
        check_distinct(&indices, d_ext)?;
        Ok(ModeTuple(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &p| m | (1 << p))
    }
}

/// Partition of `{0, ..., k-1}` into disjoint nonempty blocks, each sorted,
/// blocks ordered by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Moebius coefficient `(-1)^(b-1) (b-1)!` of the partition lattice,
    /// weighting this partition when cumulants are expanded in moments.
    pub fn moebius(&self) -> f64 {
        let b = self.blocks.len();
        let f: f64 = (1..b).map(|i| i as f64).product();
        if b % 2 == 1 {
            f
        } else {
            -f
        }
    }
}

/// All set partitions of `k` elements via restricted growth strings.
pub fn enumerate_partitions(k: usize) -> Result<Vec<SetPartition>> {
    if k == 0 || k > MAX_PARTITION_ORDER {
        return Err(Error::OrderOutOfRange { k, max: MAX_PARTITION_ORDER });
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; k];
    loop {
        let n_blocks = rgs.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); n_blocks];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(SetPartition { blocks });
        // next restricted growth string: rgs[i] <= 1 + max(rgs[..i])
        let mut i = k - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            let prefix_max = *rgs[..i].iter().max().unwrap();
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

fn check_unitary(state: &State, unitary: &ExternalUnitary) -> Result<()> {
    if unitary.dim() != state.spaces().d_ext {
        return Err(Error::DimensionMismatch(format!(
            "unitary is {0}x{0} but d_ext = {1}",
            unitary.dim(),
            state.spaces().d_ext
        )));
    }
    Ok(())
}

/// `N!/(N-k)! sum_{n,m} prod_i U_{p_i m_i} U*_{p_i n_i} <n|rho^(k)|m>`, evaluated
/// blockwise as the quadratic form `a^dag rho a`.
pub(crate) fn raw_from_density(rho: &ReducedDensity, unitary: &ExternalUnitary, modes: &[usize]) -> Complex64 {
    let support = rho.tuple_support();
    let occupied = rho.occupied_modes();
    let bs = support.block_size();
    let mut total = Complex64::new(0.0, 0.0);
    let mut amps = vec![Complex64::new(0.0, 0.0); bs];
    for (b, block) in rho.blocks().iter().enumerate() {
        for (i, a) in amps.iter_mut().enumerate() {
            let t = support.tuple(b * bs + i);
            *a = modes.iter().zip(t).map(|(&p, &pos)| unitary.get(p, occupied[pos])).product();
        }
        for i in 0..bs {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..bs {
                row += block[(i, j)] * amps[j];
            }
            total += amps[i].conj() * row;
        }
    }
    total * falling_factorial(rho.n_particles(), rho.order())
}

fn real_or_fail(z: Complex64) -> Result<f64> {
    if z.im.abs() > IMAG_TOLERANCE {
        return Err(Error::InvariantViolation(format!("correlator has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// `<U^dag N_{p_1} ... N_{p_k} U>` through the reduced density `rho^(k)`.
pub fn raw_correlator(state: &State, unitary: &ExternalUnitary, modes: &ModeTuple) -> Result<f64> {
    check_unitary(state, unitary)?;
    let k = modes.len();
    let n = state.n_particles();
    if k == 0 || k > n {
        return Err(Error::OrderOutOfRange { k, max: n });
    }
    let rho = reduced_density(state, k)?;
    real_or_fail(raw_from_density(&rho, unitary, modes.indices()))
}

/// Raw and connected correlators for every subset of a ground set of output
/// modes, sharing one table of reduced densities.
#[derive(Debug)]
pub struct CorrelatorTable {
    ground: Vec<usize>,
    raw: HashMap<u64, f64>,
    connected: HashMap<u64, f64>,
    partitions: Vec<Vec<SetPartition>>,
}

impl CorrelatorTable {
    /// Evaluates the raw correlator of every subset of `ground` with at most
    /// `max_order` elements. Subsets larger than `N` have raw value zero.
    pub fn new(state: &State, unitary: &ExternalUnitary, ground: &[usize], max_order: usize) -> Result<Self> {
        check_unitary(state, unitary)?;
        check_distinct(ground, unitary.dim())?;
        if ground.len() > 64 {
            return Err(Error::DimensionMismatch("at most 64 output modes".into()));
        }
        let max_order = max_order.min(ground.len());
        if max_order > MAX_PARTITION_ORDER {
            return Err(Error::OrderOutOfRange { k: max_order, max: MAX_PARTITION_ORDER });
        }
        let n = state.n_particles();
        let densities: Vec<ReducedDensity> = (1..=max_order.min(n))
            .map(|k| reduced_density(state, k))
            .collect::<Result<_>>()?;
        let subsets: Vec<Vec<usize>> = (1..=max_order)
            .flat_map(|k| ground.iter().copied().combinations(k))
            .collect();
        let values: Vec<Result<f64>> = subsets
            .par_iter()
            .map(|s| {
                if s.len() > n {
                    Ok(0.0)
                } else {
                    real_or_fail(raw_from_density(&densities[s.len() - 1], unitary, s))
                }
            })
            .collect();
        let mut raw = HashMap::with_capacity(subsets.len());
        for (s, v) in subsets.iter().zip(values) {
            raw.insert(mask_of(s), v?);
        }
        let partitions = (1..=max_order).map(enumerate_partitions).collect::<Result<_>>()?;
        Ok(CorrelatorTable { ground: ground.to_vec(), raw, connected: HashMap::new(), partitions })
    }

    pub fn ground(&self) -> &[usize] {
        &self.ground
    }

    pub fn raw(&self, modes: &[usize]) -> Option<f64> {
        self.raw.get(&mask_of(modes)).copied()
    }

    /// `C_p = raw_p - sum_{P non-trivial} prod_{q in P} C_q`, memoized over
    /// subsets.
    pub fn connected(&mut self, modes: &[usize]) -> Option<f64> {
        let mask = mask_of(modes);
        if let Some(&c) = self.connected.get(&mask) {
            return Some(c);
        }
        let raw = self.raw(modes)?;
        let sorted: Vec<usize> = modes.iter().copied().sorted().collect();
        let mut value = raw;
        if sorted.len() > 1 {
            let parts = self.partitions[sorted.len() - 1].clone();
            for p in parts.iter().filter(|p| !p.is_trivial()) {
                let mut prod = 1.0;
                for block in &p.blocks {
                    let sub: Vec<usize> = block.iter().map(|&i| sorted[i]).collect();
                    prod *= self.connected(&sub)?;
                }
                value -= prod;
            }
        }
        self.connected.insert(mask, value);
        Some(value)
    }

    /// Mean of the connected correlator over all k-subsets of the ground set,
    /// in lexicographic subset order.
    pub fn mean_connected(&mut self, k: usize) -> Option<f64> {
        let subsets: Vec<Vec<usize>> = self.ground.iter().copied().combinations(k).collect();
        if subsets.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for s in &subsets {
            sum += self.connected(s)?;
        }
        Some(sum / subsets.len() as f64)
    }
}

fn mask_of(modes: &[usize]) -> u64 {
    modes.iter().fold(0, |m, &p| m | (1 << p))
}

pub fn connected_correlator(state: &State, unitary: &ExternalUnitary, modes: &ModeTuple) -> Result<f64> {
    let n = state.n_particles();
    if modes.is_empty() || modes.len() > n {
        return Err(Error::OrderOutOfRange { k: modes.len(), max: n });
    }
    let mut table = CorrelatorTable::new(state, unitary, modes.indices(), modes.len())?;
    debug_assert_eq!(mask_of(modes.indices()), modes.mask());
    Ok(table.connected(modes.indices()).expect("all subsets tabulated"))
}

/// Average of `C^(k)` over all `C(d, k)` choices of output modes for one
/// unitary.
pub fn mode_average_connected(state: &State, unitary: &ExternalUnitary, k: usize) -> Result<f64> {
    let d = state.spaces().d_ext;
    if k == 0 || k > d {
        return Err(Error::OrderOutOfRange { k, max: d });
    }
    let ground: Vec<usize> = (0..d).collect();
    let mut table = CorrelatorTable::new(state, unitary, &ground, k)?;
    Ok(table.mean_connected(k).expect("all subsets tabulated"))
}
