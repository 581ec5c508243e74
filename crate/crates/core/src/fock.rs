//! Exact second-quantized algebra on term-list Fock states.
//!
//! A basis state is a sorted list of occupied orbitals `(mode, label)`,
//! standing for `a^dag_{o_1} a^dag_{o_2} ... |0>` with `o_1 <= o_2 <= ...`
//! (repeated entries only for bosons, normalized with `1/sqrt(n!)`). This is
//! the slow brute-force reference against which the reduced-density route of
//! [`crate::correlators`] is checked.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ExternalUnitary;
use crate::states::{SeparableState, State, Statistics, SuperpositionState};

/// Amplitudes below this are dropped after every operator application.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

pub type Orbital = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderOp {
    pub kind: LadderKind,
    pub mode: usize,
    pub label: usize,
}

impl LadderOp {
    pub fn create(mode: usize, label: usize) -> Self {
        LadderOp { kind: LadderKind::Create, mode, label }
    }

    pub fn annihilate(mode: usize, label: usize) -> Self {
        LadderOp { kind: LadderKind::Annihilate, mode, label }
    }
}

/// Product of ladder operators `factors[0] factors[1] ...`; acting on a ket,
/// the last factor is applied first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorString {
    pub factors: Vec<LadderOp>,
}

impl OperatorString {
    pub fn new(factors: Vec<LadderOp>) -> Self {
        OperatorString { factors }
    }

    pub fn apply(&self, state: &FockState) -> FockState {
        self.factors.iter().rev().fold(state.clone(), |s, op| s.apply(op))
    }
}

/// Linear combination of Fock basis states with fixed statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    statistics: Statistics,
    terms: BTreeMap<Vec<Orbital>, Complex64>,
}

impl FockState {
    pub fn vacuum(statistics: Statistics) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), Complex64::new(1.0, 0.0));
        FockState { statistics, terms }
    }

    pub fn zero(statistics: Statistics) -> Self {
        FockState { statistics, terms: BTreeMap::new() }
    }

    pub fn from_separable(state: &SeparableState) -> Self {
        let mut acc = FockState::vacuum(state.statistics());
        for (&mode, phi) in state.occupied_modes().iter().zip(state.internal_states()).rev() {
            let mut next = FockState::zero(state.statistics());
            for (label, &amp) in phi.components().iter().enumerate() {
                if amp.norm() > 0.0 {
                    next.add_scaled(&acc.create(mode, label), amp);
                }
            }
            acc = next;
            acc.prune();
        }
        acc
    }

    pub fn from_superposition(state: &SuperpositionState) -> Self {
        let mut acc = FockState::zero(state.statistics());
        for term in state.terms() {
            let mut basis = FockState::vacuum(state.statistics());
            for (&mode, &label) in state.occupied_modes().iter().zip(&term.internal_labels).rev() {
                basis = basis.create(mode, label);
            }
            acc.add_scaled(&basis, term.amplitude);
        }
        acc.prune();
        acc
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[Orbital], Complex64)> {
        self.terms.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn amplitude(&self, orbitals: &[Orbital]) -> Complex64 {
        self.terms.get(orbitals).copied().unwrap_or_default()
    }

    pub fn add_scaled(&mut self, other: &FockState, scale: Complex64) {
        for (k, &v) in &other.terms {
            *self.terms.entry(k.clone()).or_default() += v * scale;
        }
    }

    pub fn prune(&mut self) {
        self.terms.retain(|_, v| v.norm() > PRUNE_THRESHOLD);
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockState) -> Complex64 {
        let (small, large, flip) = if self.terms.len() <= other.terms.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &a) in &small.terms {
            if let Some(&b) = large.terms.get(k) {
                acc += if flip { b.conj() * a } else { a.conj() * b };
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|z| z.norm_sqr()).sum()
    }

    pub fn apply(&self, op: &LadderOp) -> FockState {
        match op.kind {
            LadderKind::Create => self.create(op.mode, op.label),
            LadderKind::Annihilate => self.annihilate(op.mode, op.label),
        }
    }

    pub fn create(&self, mode: usize, label: usize) -> FockState {
        let orbital = (mode, label);
        let mut out = FockState::zero(self.statistics);
        for (key, &amp) in &self.terms {
            if let Some((new_key, factor)) = create_on(key, orbital, self.statistics) {
                *out.terms.entry(new_key).or_default() += amp * factor;
            }
        }
        out.prune();
        out
    }

    pub fn annihilate(&self, mode: usize, label: usize) -> FockState {
        let orbital = (mode, label);
        let mut out = FockState::zero(self.statistics);
        for (key, &amp) in &self.terms {
            if let Some((new_key, factor)) = annihilate_on(key, orbital, self.statistics) {
                *out.terms.entry(new_key).or_default() += amp * factor;
            }
        }
        out.prune();
        out
    }

    /// `U^dag N_p U |self> = sum_{m,n,a} U_{pm} U*_{pn} a^dag_{ma} a_{na} |self>`.
    pub fn apply_evolved_number(&self, unitary: &ExternalUnitary, p: usize) -> FockState {
        let d = unitary.dim();
        let mut out = FockState::zero(self.statistics);
        for (key, &amp) in &self.terms {
            let mut previous: Option<Orbital> = None;
            for &(n, alpha) in key {
                if previous == Some((n, alpha)) {
                    continue;
                }
                previous = Some((n, alpha));
                let Some((removed, f_ann)) = annihilate_on(key, (n, alpha), self.statistics) else {
                    continue;
                };
                let w_ann = amp * f_ann * unitary.get(p, n).conj();
                for m in 0..d {
                    let u = unitary.get(p, m);
                    if u.norm() == 0.0 {
                        continue;
                    }
                    if let Some((added, f_cre)) = create_on(&removed, (m, alpha), self.statistics) {
                        *out.terms.entry(added).or_default() += w_ann * u * f_cre;
                    }
                }
            }
        }
        out.prune();
        out
    }
}

impl From<&State> for FockState {
    fn from(state: &State) -> Self {
        match state {
            State::Separable(s) => FockState::from_separable(s),
            State::Superposition(s) => FockState::from_superposition(s),
        }
    }
}

fn create_on(key: &[Orbital], orbital: Orbital, statistics: Statistics) -> Option<(Vec<Orbital>, f64)> {
    let before = key.partition_point(|&o| o < orbital);
    let after = key.partition_point(|&o| o <= orbital);
    let occupation = after - before;
    let factor = match statistics {
        Statistics::Boson => ((occupation + 1) as f64).sqrt(),
        Statistics::Fermion => {
            if occupation > 0 {
                return None;
            }
            if before % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    };
    let mut new_key = Vec::with_capacity(key.len() + 1);
    new_key.extend_from_slice(&key[..before]);
    new_key.push(orbital);
    new_key.extend_from_slice(&key[before..]);
    Some((new_key, factor))
}

fn annihilate_on(key: &[Orbital], orbital: Orbital, statistics: Statistics) -> Option<(Vec<Orbital>, f64)> {
    let before = key.partition_point(|&o| o < orbital);
    let after = key.partition_point(|&o| o <= orbital);
    let occupation = after - before;
    if occupation == 0 {
        return None;
    }
    let factor = match statistics {
        Statistics::Boson => (occupation as f64).sqrt(),
        Statistics::Fermion => {
            if before % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    };
    let mut new_key = key.to_vec();
    new_key.remove(before);
    Some((new_key, factor))
}

/// Applies `a_{mode,label}` to a state; the result lives on `N - 1`
/// particles and is generally not normalized.
pub fn apply_annihilator(state: &FockState, mode: usize, label: usize) -> FockState {
    state.annihilate(mode, label)
}

/// `a_{n_k a_k} ... a_{n_1 a_1} |psi>`.
pub fn annihilate_string(state: &FockState, modes: &[usize], labels: &[usize]) -> FockState {
    modes
        .iter()
        .zip(labels)
        .fold(state.clone(), |s, (&n, &a)| s.annihilate(n, a))
}

/// `<psi| a^dag_{m_1 a_1} ... a^dag_{m_k a_k} a_{n_k a_k} ... a_{n_1 a_1} |psi>`.
pub fn matrix_element(state: &FockState, m: &[usize], n: &[usize], labels: &[usize]) -> Result<Complex64> {
    if m.len() != n.len() || m.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "tuple lengths m = {}, n = {}, labels = {}",
            m.len(),
            n.len(),
            labels.len()
        )));
    }
    let bra = annihilate_string(state, m, labels);
    if bra.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ket = annihilate_string(state, n, labels);
    Ok(bra.inner(&ket))
}

/// `<psi| U^dag N_{p_1} ... N_{p_k} U |psi>` by applying each evolved number
/// operator to the full term list. Cost grows exponentially in `k`.
pub fn correlator_oracle(state: &State, unitary: &ExternalUnitary, modes: &[usize]) -> Result<f64> {
    check_distinct(modes, unitary.dim())?;
    let psi = FockState::from(state);
    let mut phi = psi.clone();
    for &p in modes.iter().rev() {
        phi = phi.apply_evolved_number(unitary, p);
    }
    let value = psi.inner(&phi);
    if value.im.abs() > 1e-10 {
        return Err(Error::InvariantViolation(format!(
            "correlator has imaginary part {:.3e}",
            value.im
        )));
    }
    Ok(value.re)
}

pub(crate) fn check_distinct(modes: &[usize], d: usize) -> Result<()> {
    for (i, &p) in modes.iter().enumerate() {
        if p >= d {
            return Err(Error::ModeOutOfRange { mode: p, d_ext: d });
        }
        if modes[..i].contains(&p) {
            return Err(Error::DuplicateMode(p));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_psi2, ModeSpaces};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(statistics: Statistics, mode: usize, label: usize) -> FockState {
        FockState::vacuum(statistics).create(mode, label)
    }

    #[test]
    fn annihilate_single_particle() {
        let s = single(Statistics::Boson, 2, 1);
        let out = apply_annihilator(&s, 2, 1);
        assert_eq!(out.amplitude(&[]), Complex64::new(1.0, 0.0));
        assert!(apply_annihilator(&s, 0, 1).is_zero());
        assert!(apply_annihilator(&s, 2, 0).is_zero());
    }

    // a_{q b} a^dag_{p a} a^dag_{q b}|0> = -a^dag_{p a} a_{q b} a^dag_{q b}|0> = -a^dag_{p a}|0>.
    #[test]
    fn fermion_annihilation_sign_from_anticommutation() {
        let s = FockState::vacuum(Statistics::Fermion).create(1, 0).create(0, 0);
        let out = apply_annihilator(&s, 1, 0);
        assert_eq!(out.amplitude(&[(0, 0)]), Complex64::new(-1.0, 0.0));
        let out = apply_annihilator(&s, 0, 0);
        assert_eq!(out.amplitude(&[(1, 0)]), Complex64::new(1.0, 0.0));
        let b = FockState::vacuum(Statistics::Boson).create(1, 0).create(0, 0);
        assert_eq!(apply_annihilator(&b, 1, 0).amplitude(&[(0, 0)]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn pauli_exclusion_and_bosonic_enhancement() {
        let f = single(Statistics::Fermion, 0, 0);
        assert!(f.create(0, 0).is_zero());
        let b = single(Statistics::Boson, 0, 0).create(0, 0);
        assert!((b.norm_sqr() - 2.0).abs() < 1e-14);
    }

    fn random_basis_term(rng: &mut ChaCha8Rng, statistics: Statistics) -> FockState {
        let mut s = FockState::vacuum(statistics);
        for _ in 0..rng.random_range(0..4) {
            let next = s.create(rng.random_range(0..3), rng.random_range(0..2));
            if !next.is_zero() {
                s = next;
            }
        }
        let norm = s.norm_sqr().sqrt();
        let mut unit = FockState::zero(statistics);
        unit.add_scaled(&s, Complex64::new(1.0 / norm, 0.0));
        unit
    }

    #[test]
    fn canonical_commutation_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for statistics in [Statistics::Boson, Statistics::Fermion] {
            let sign = match statistics {
                Statistics::Boson => -1.0,
                Statistics::Fermion => 1.0,
            };
            for _ in 0..40 {
                let s = random_basis_term(&mut rng, statistics);
                for p in 0..3 {
                    for a in 0..2 {
                        for q in 0..3 {
                            for b in 0..2 {
                                let mut lhs = s.create(q, b).annihilate(p, a);
                                lhs.add_scaled(&s.annihilate(p, a).create(q, b), Complex64::new(sign, 0.0));
                                lhs.prune();
                                let delta = if p == q && a == b { 1.0 } else { 0.0 };
                                let mut expected = FockState::zero(statistics);
                                expected.add_scaled(&s, Complex64::new(delta, 0.0));
                                let mut diff = lhs.clone();
                                diff.add_scaled(&expected, Complex64::new(-1.0, 0.0));
                                assert!(diff.norm_sqr() < 1e-24, "{statistics:?} p{p} a{a} q{q} b{b}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn number_operator_on_single_occupancy() {
        let sep = SeparableState::from_labels(
            Statistics::Fermion,
            ModeSpaces::new(3, 2).unwrap(),
            &[0, 1],
            &[0, 1],
        )
        .unwrap();
        let psi = FockState::from_separable(&sep);
        let occupied: Complex64 = (0..2).map(|a| matrix_element(&psi, &[1], &[1], &[a]).unwrap()).sum();
        assert!((occupied - 1.0).norm() < 1e-14);
        let empty: Complex64 = (0..2).map(|a| matrix_element(&psi, &[2], &[2], &[a]).unwrap()).sum();
        assert_eq!(empty, Complex64::new(0.0, 0.0));
        assert!(matrix_element(&psi, &[0, 1], &[0], &[0]).is_err());
    }

    // Direct expansion of the four bra-ket pairs of psi2: for bosons
    // <psi2| a^dag_{p a} a^dag_{q b} a_{p b} a_{q a} |psi2> = -1/2, and the
    // two label assignments sum to -1.
    #[test]
    fn psi2_cross_element() {
        let spaces = ModeSpaces::new(2, 2).unwrap();
        let boson = FockState::from_superposition(&make_psi2(Statistics::Boson, spaces).unwrap());
        let cross: Complex64 = [[0, 1], [1, 0]]
            .iter()
            .map(|l| matrix_element(&boson, &[0, 1], &[1, 0], l).unwrap())
            .sum();
        assert!((cross - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        let fermion = FockState::from_superposition(&make_psi2(Statistics::Fermion, spaces).unwrap());
        let cross: Complex64 = [[0, 1], [1, 0]]
            .iter()
            .map(|l| matrix_element(&fermion, &[0, 1], &[1, 0], l).unwrap())
            .sum();
        assert!((cross - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn oracle_at_identity() {
        let sep = SeparableState::from_labels(Statistics::Boson, ModeSpaces::new(3, 2).unwrap(), &[0, 2], &[0, 0])
            .unwrap();
        let state = State::from(sep);
        let id = ExternalUnitary::identity(3);
        assert!((correlator_oracle(&state, &id, &[2]).unwrap() - 1.0).abs() < 1e-14);
        assert!(correlator_oracle(&state, &id, &[0, 1]).unwrap().abs() < 1e-14);
        assert!((correlator_oracle(&state, &id, &[0, 2]).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(correlator_oracle(&state, &id, &[0, 0]), Err(Error::DuplicateMode(0)));
    }
}
