//! Two-step sampler of internal states sweeping from indistinguishable
//! through distinguishable particles.
//!
//! Near-indistinguishable draws perturb one common unit vector; near-
//! distinguishable draws perturb `N` orthonormal vectors. Perturbation
//! components have real and imaginary parts `~ N(0, epsilon)`, and every
//! vector is renormalized afterwards. Large `epsilon` approaches uniform
//! sampling on the unit sphere in both regimes.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{InternalVector, ModeSpaces, SeparableState, Statistics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NearIndistinguishable,
    NearDistinguishable,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::NearIndistinguishable => "near_indistinguishable",
            Regime::NearDistinguishable => "near_distinguishable",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub regime: Regime,
    /// Variance of the real and of the imaginary part of each perturbation
    /// component.
    pub epsilon: f64,
    pub n_particles: usize,
    pub d_int: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n_particles == 0 || self.d_int == 0 {
            return Err(Error::Config("need at least one particle and one internal dimension".into()));
        }
        if self.regime == Regime::NearDistinguishable && self.d_int < self.n_particles {
            return Err(Error::Config(format!(
                "near-distinguishable sampling needs d_int >= N, got d_int = {} < N = {}",
                self.d_int, self.n_particles
            )));
        }
        Ok(())
    }
}

pub fn sample_internal_states(config: &SamplerConfig) -> Result<Vec<InternalVector>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(draw(config, &mut rng))
}

fn draw<R: Rng>(config: &SamplerConfig, rng: &mut R) -> Vec<InternalVector> {
    let normal = Normal::new(0.0, config.epsilon.sqrt()).expect("validated epsilon");
    (0..config.n_particles)
        .map(|i| {
            let center = match config.regime {
                Regime::NearIndistinguishable => 0,
                Regime::NearDistinguishable => i,
            };
            loop {
                let v: Vec<Complex64> = (0..config.d_int)
                    .map(|a| {
                        let base = if a == center { 1.0 } else { 0.0 };
                        Complex64::new(base + normal.sample(rng), normal.sample(rng))
                    })
                    .collect();
                if let Some(unit) = InternalVector::normalized(v) {
                    break unit;
                }
            }
        })
        .collect()
}

/// 24 values log-spaced over `[1e-4, 1e2]`.
pub fn default_epsilon_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 24)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A sampled separable state with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledState {
    pub state: SeparableState,
    pub config: SamplerConfig,
}

/// `n_states` separable states of `n_particles` particles in modes
/// `0..n_particles` (so `d_ext = N`). State `j` uses regime `j mod 2` and
/// epsilon `grid[(j / 2) mod len]`, with its own derived seed.
pub fn sweep_transition(
    n_states: usize,
    n_particles: usize,
    d_int: usize,
    epsilon_grid: &[f64],
    statistics: Statistics,
    seed: u64,
) -> Result<Vec<SampledState>> {
    if epsilon_grid.is_empty() {
        return Err(Error::Config("epsilon grid is empty".into()));
    }
    let spaces = ModeSpaces::new(n_particles, d_int)?;
    let modes: Vec<usize> = (0..n_particles).collect();
    (0..n_states)
        .into_par_iter()
        .map(|j| {
            let regime = if j % 2 == 0 { Regime::NearIndistinguishable } else { Regime::NearDistinguishable };
            let config = SamplerConfig {
                regime,
                epsilon: epsilon_grid[(j / 2) % epsilon_grid.len()],
                n_particles,
                d_int,
                seed: derive_seed(seed, j as u64),
            };
            let vectors = sample_internal_states(&config)?;
            let state = SeparableState::new(
                statistics,
                spaces,
                &modes,
                vectors.into_iter().map(|v| v.components().to_vec()).collect(),
            )?;
            Ok(SampledState { state, config })
        })
        .collect()
}
