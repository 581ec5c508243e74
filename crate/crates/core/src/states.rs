//! Many-particle input states with at most one particle per external mode.
//!
//! Two families are supported: externally separable states, where each
//! occupied mode carries one particle in an arbitrary pure internal state,
//! and externally entangled superpositions of product terms that assign
//! internal basis labels to a fixed set of occupied modes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmetric::sequence_sign;

pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    /// Sign picked up by a permutation of the given parity sign.
    #[inline]
    pub fn exchange_sign(self, permutation_sign: f64) -> f64 {
        match self {
            Statistics::Boson => 1.0,
            Statistics::Fermion => permutation_sign,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Statistics::Boson => "boson",
            Statistics::Fermion => "fermion",
        }
    }
}

impl std::fmt::Display for Statistics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Statistics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "boson" | "bosons" => Ok(Statistics::Boson),
            "fermion" | "fermions" => Ok(Statistics::Fermion),
            other => Err(Error::Config(format!("unknown statistics '{other}'"))),
        }
    }
}

/// Dimensions of the external (interferometer) and internal (spectator)
/// single-particle spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpaces {
    pub d_ext: usize,
    pub d_int: usize,
}

impl ModeSpaces {
    pub fn new(d_ext: usize, d_int: usize) -> Result<Self> {
        if d_ext == 0 || d_int == 0 {
            return Err(Error::InsufficientDimensions(format!(
                "d_ext = {d_ext}, d_int = {d_int}; both must be positive"
            )));
        }
        Ok(ModeSpaces { d_ext, d_int })
    }
}

/// Unit-norm internal state `sum_a phi^a |a>`.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalVector(Vec<Complex64>);

impl InternalVector {
    /// Normalizes `components`; returns `None` for the zero vector.
    pub fn normalized(components: Vec<Complex64>) -> Option<Self> {
        let norm = components.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        Some(InternalVector(components.into_iter().map(|z| z / norm).collect()))
    }

    pub fn basis(dim: usize, label: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[label] = Complex64::new(1.0, 0.0);
        InternalVector(v)
    }

    pub fn components(&self) -> &[Complex64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn overlap(&self, other: &InternalVector) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn sort_modes(modes: &[usize], spaces: ModeSpaces) -> Result<Vec<usize>> {
    for &m in modes {
        if m >= spaces.d_ext {
            return Err(Error::ModeOutOfRange { mode: m, d_ext: spaces.d_ext });
        }
    }
    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by_key(|&i| modes[i]);
    for w in order.windows(2) {
        if modes[w[0]] == modes[w[1]] {
            return Err(Error::DuplicateMode(modes[w[0]]));
        }
    }
    Ok(order)
}

/// Externally separable state: particle `i` sits in external mode
/// `occupied_modes[i]` with internal state `internal_states[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableState {
    statistics: Statistics,
    spaces: ModeSpaces,
    occupied_modes: Vec<usize>,
    internal_states: Vec<InternalVector>,
}

impl SeparableState {
    /// Builds a separable state. Modes may be given in any order; they are
    /// stored sorted together with their internal vectors, which are
    /// renormalized.
    pub fn new(
        statistics: Statistics,
        spaces: ModeSpaces,
        occupied_modes: &[usize],
        internal_states: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if occupied_modes.len() != internal_states.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} modes but {} internal vectors",
                occupied_modes.len(),
                internal_states.len()
            )));
        }
        let order = sort_modes(occupied_modes, spaces)?;
        let mut vectors = Vec::with_capacity(order.len());
        for &i in &order {
            let v = &internal_states[i];
            if v.len() != spaces.d_int {
                return Err(Error::DimensionMismatch(format!(
                    "internal vector {i} has length {}, expected d_int = {}",
                    v.len(),
                    spaces.d_int
                )));
            }
            vectors.push(InternalVector::normalized(v.clone()).ok_or(Error::ZeroVector(i))?);
        }
        Ok(SeparableState {
            statistics,
            spaces,
            occupied_modes: order.iter().map(|&i| occupied_modes[i]).collect(),
            internal_states: vectors,
        })
    }

    /// Separable state with particles in modes `0..N`.
    pub fn from_vectors(statistics: Statistics, d_ext: usize, internal: Vec<InternalVector>) -> Result<Self> {
        let d_int = internal.first().map_or(1, InternalVector::dim);
        let spaces = ModeSpaces::new(d_ext, d_int)?;
        let modes: Vec<usize> = (0..internal.len()).collect();
        Self::new(statistics, spaces, &modes, internal.into_iter().map(|v| v.0).collect())
    }

    /// Every particle in the internal basis state `labels[i]`.
    pub fn from_labels(statistics: Statistics, spaces: ModeSpaces, modes: &[usize], labels: &[usize]) -> Result<Self> {
        let mut vectors = Vec::with_capacity(labels.len());
        for &l in labels {
            if l >= spaces.d_int {
                return Err(Error::LabelOutOfRange { label: l, d_int: spaces.d_int });
            }
            vectors.push(InternalVector::basis(spaces.d_int, l).0);
        }
        Self::new(statistics, spaces, modes, vectors)
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn spaces(&self) -> ModeSpaces {
        self.spaces
    }

    pub fn n_particles(&self) -> usize {
        self.occupied_modes.len()
    }

    pub fn occupied_modes(&self) -> &[usize] {
        &self.occupied_modes
    }

    pub fn internal_states(&self) -> &[InternalVector] {
        &self.internal_states
    }

    pub fn with_statistics(&self, statistics: Statistics) -> Self {
        SeparableState { statistics, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionTerm {
    pub amplitude: Complex64,
    /// Internal basis label of the particle in each occupied mode.
    pub internal_labels: Vec<usize>,
}

/// Superposition of product terms `a^dag_{p_1 a_1} ... a^dag_{p_N a_N} |0>`
/// sharing the occupied modes `p_1 < ... < p_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionState {
    statistics: Statistics,
    spaces: ModeSpaces,
    occupied_modes: Vec<usize>,
    terms: Vec<SuperpositionTerm>,
}

impl SuperpositionState {
    /// Builds and normalizes a superposition. Terms with equal label lists are
    /// merged. If `occupied_modes` is not sorted, each term's creation string
    /// is reordered and, for fermions, multiplied by the reordering sign.
    pub fn new(
        statistics: Statistics,
        spaces: ModeSpaces,
        occupied_modes: &[usize],
        terms: Vec<SuperpositionTerm>,
    ) -> Result<Self> {
        let order = sort_modes(occupied_modes, spaces)?;
        let reorder_sign = statistics.exchange_sign(sequence_sign(occupied_modes));
        let mut merged: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
        for term in terms {
            if term.internal_labels.len() != occupied_modes.len() {
                return Err(Error::DimensionMismatch(format!(
                    "term has {} labels for {} modes",
                    term.internal_labels.len(),
                    occupied_modes.len()
                )));
            }
            if let Some(&l) = term.internal_labels.iter().find(|&&l| l >= spaces.d_int) {
                return Err(Error::LabelOutOfRange { label: l, d_int: spaces.d_int });
            }
            let labels: Vec<usize> = order.iter().map(|&i| term.internal_labels[i]).collect();
            *merged.entry(labels).or_default() += term.amplitude * reorder_sign;
        }
        let norm = merged.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm(norm));
        }
        let terms = merged
            .into_iter()
            .filter(|(_, a)| *a != Complex64::new(0.0, 0.0))
            .map(|(internal_labels, a)| SuperpositionTerm { amplitude: a / norm, internal_labels })
            .collect();
        Ok(SuperpositionState {
            statistics,
            spaces,
            occupied_modes: order.iter().map(|&i| occupied_modes[i]).collect(),
            terms,
        })
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn spaces(&self) -> ModeSpaces {
        self.spaces
    }

    pub fn n_particles(&self) -> usize {
        self.occupied_modes.len()
    }

    pub fn occupied_modes(&self) -> &[usize] {
        &self.occupied_modes
    }

    pub fn terms(&self) -> &[SuperpositionTerm] {
        &self.terms
    }

    /// `<self|self>`. Distinct sorted modes make the term inner product a
    /// plain comparison of label lists.
    pub fn norm_sqr(&self) -> f64 {
        let mut acc: BTreeMap<&[usize], Complex64> = BTreeMap::new();
        for t in &self.terms {
            *acc.entry(&t.internal_labels).or_default() += t.amplitude;
        }
        acc.values().map(|a| a.norm_sqr()).sum()
    }
}

/// Either state family; every measure in this crate accepts both.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Separable(SeparableState),
    Superposition(SuperpositionState),
}

impl State {
    pub fn statistics(&self) -> Statistics {
        match self {
            State::Separable(s) => s.statistics(),
            State::Superposition(s) => s.statistics(),
        }
    }

    pub fn spaces(&self) -> ModeSpaces {
        match self {
            State::Separable(s) => s.spaces(),
            State::Superposition(s) => s.spaces(),
        }
    }

    pub fn n_particles(&self) -> usize {
        self.occupied_modes().len()
    }

    pub fn occupied_modes(&self) -> &[usize] {
        match self {
            State::Separable(s) => s.occupied_modes(),
            State::Superposition(s) => s.occupied_modes(),
        }
    }

    pub fn as_separable(&self) -> Option<&SeparableState> {
        match self {
            State::Separable(s) => Some(s),
            State::Superposition(_) => None,
        }
    }
}

impl From<SeparableState> for State {
    fn from(s: SeparableState) -> Self {
        State::Separable(s)
    }
}

impl From<SuperpositionState> for State {
    fn from(s: SuperpositionState) -> Self {
        State::Superposition(s)
    }
}

/// `(a^dag_{p a} a^dag_{q b} - a^dag_{p b} a^dag_{q a}) |0> / sqrt(2)` with
/// `p, q = 0, 1` and `a, b = 0, 1`.
pub fn make_psi2(statistics: Statistics, spaces: ModeSpaces) -> Result<SuperpositionState> {
    if spaces.d_ext < 2 || spaces.d_int < 2 {
        return Err(Error::InsufficientDimensions(format!(
            "psi2 needs d_ext >= 2 and d_int >= 2, got {} and {}",
            spaces.d_ext, spaces.d_int
        )));
    }
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let terms = vec![
        SuperpositionTerm { amplitude: a, internal_labels: vec![0, 1] },
        SuperpositionTerm { amplitude: -a, internal_labels: vec![1, 0] },
    ];
    SuperpositionState::new(statistics, spaces, &[0, 1], terms)
}

/// Cyclic three-particle state on modes `0, 1, 2` with labels
/// `(0,1,2) + (2,0,1) + (1,2,0)`, normalized.
pub fn make_psi3(statistics: Statistics, spaces: ModeSpaces) -> Result<SuperpositionState> {
    if spaces.d_ext < 3 || spaces.d_int < 3 {
        return Err(Error::InsufficientDimensions(format!(
            "psi3 needs d_ext >= 3 and d_int >= 3, got {} and {}",
            spaces.d_ext, spaces.d_int
        )));
    }
    let a = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
    let terms = [[0, 1, 2], [2, 0, 1], [1, 2, 0]]
        .into_iter()
        .map(|l| SuperpositionTerm { amplitude: a, internal_labels: l.to_vec() })
        .collect();
    SuperpositionState::new(statistics, spaces, &[0, 1, 2], terms)
}

/// Complex number on the wire: `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireComplex(pub f64, pub f64);

impl From<WireComplex> for Complex64 {
    fn from(w: WireComplex) -> Self {
        Complex64::new(w.0, w.1)
    }
}

impl From<Complex64> for WireComplex {
    fn from(z: Complex64) -> Self {
        WireComplex(z.re, z.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTerm {
    pub amp: WireComplex,
    pub labels: Vec<usize>,
}

/// JSON state description. Separable states carry `internal`, superpositions
/// carry `terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDescription {
    pub statistics: Statistics,
    pub d_ext: usize,
    pub d_int: usize,
    pub modes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal: Option<Vec<Vec<WireComplex>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<WireTerm>>,
}

impl StateDescription {
    pub fn into_state(self) -> Result<State> {
        let spaces = ModeSpaces::new(self.d_ext, self.d_int)?;
        match (self.internal, self.terms) {
            (Some(internal), None) => {
                let vectors = internal
                    .into_iter()
                    .map(|v| v.into_iter().map(Complex64::from).collect())
                    .collect();
                Ok(SeparableState::new(self.statistics, spaces, &self.modes, vectors)?.into())
            }
            (None, Some(terms)) => {
                let terms = terms
                    .into_iter()
                    .map(|t| SuperpositionTerm { amplitude: t.amp.into(), internal_labels: t.labels })
                    .collect();
                Ok(SuperpositionState::new(self.statistics, spaces, &self.modes, terms)?.into())
            }
            _ => Err(Error::Config(
                "state description needs exactly one of 'internal' or 'terms'".into(),
            )),
        }
    }

    pub fn from_state(state: &State) -> Self {
        let spaces = state.spaces();
        let (internal, terms) = match state {
            State::Separable(s) => (
                Some(
                    s.internal_states()
                        .iter()
                        .map(|v| v.components().iter().map(|&z| z.into()).collect())
                        .collect(),
                ),
                None,
            ),
            State::Superposition(s) => (
                None,
                Some(
                    s.terms()
                        .iter()
                        .map(|t| WireTerm { amp: t.amplitude.into(), labels: t.internal_labels.clone() })
                        .collect(),
                ),
            ),
        };
        StateDescription {
            statistics: state.statistics(),
            d_ext: spaces.d_ext,
            d_int: spaces.d_int,
            modes: state.occupied_modes().to_vec(),
            internal,
            terms,
        }
    }
}

impl std::str::FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str::<StateDescription>(s)?.into_state()
    }
}
