//! Many-body coherence of partially distinguishable bosons and fermions,
//! probed through randomized density correlations.

pub mod coherence;
pub mod correlators;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod haar;
pub mod linalg;
pub mod sampling;
pub mod states;
pub mod symmetric;

pub use coherence::{
    degree_of_indistinguishability, mean_coherence, mean_coherence_gram, reduced_density, symmetric_projection,
    witness_genuine_indistinguishability, GramMatrix, OccupationTable, ReducedDensity, WitnessResult,
};
pub use correlators::{
    connected_correlator, enumerate_partitions, mode_average_connected, raw_correlator, CorrelatorTable, ModeTuple,
    SetPartition,
};
pub use error::{Error, Result};
pub use experiments::{
    run_entangled_demo, run_fig1, run_fig2, EntangledReport, Fig1Output, Fig1Row, Fig2Output, Fig2Row, RunConfig, UnitaryId,
};
pub use fock::{correlator_oracle, FockState};
pub use haar::{
    haar_avg_connected, haar_avg_raw, haar_monte_carlo, sample_haar, sample_haar_indexed, McEstimate, WeingartenTable,
};
pub use linalg::{CMatrix, ExternalUnitary};
pub use sampling::{default_epsilon_grid, sample_internal_states, sweep_transition, Regime, SampledState, SamplerConfig};
pub use states::{
    make_psi2, make_psi3, InternalVector, ModeSpaces, SeparableState, State, StateDescription, Statistics,
    SuperpositionState, SuperpositionTerm, WireComplex,
};
pub use symmetric::CycleType;
