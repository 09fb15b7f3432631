//! Linearization about ground and single-mode states: dense operators,
//! spectra, zero modes, ladder structure and coercivity.

mod coercivity;
mod identities;
mod ladder;
mod ops;
mod spectrum;

pub use coercivity::{coercivity, hessian_residual, inverse_mass_pairing};
pub use identities::{
    appendix_identities, mode_energy_relation, AppendixReport, IdentityCheck, ModeEnergyReport,
};
pub use ladder::{
    first_ladder_vector, ladder_check, mu_ladder, LadderReport, MuLadderEntry, MuLadderReport,
};
pub use ops::{
    build_ground_ops, build_single_mode_ops, toeplitz_entry, OperatorPair, Which, TAIL_TOLERANCE,
};
pub use spectrum::{
    commutators, ground_frequency, lambda_star, single_mode_frequencies, spectrum,
    stability_spectrum, zero_mode_analysis, SpectralReport, StabilityReport, ZeroModeAnalysis,
    ZERO_TOL,
};

#[derive(Debug, thiserror::Error)]
pub enum LinearizedError {
    #[error("ground parameter p = {0} outside [0, 1)")]
    InvalidP(f64),
    #[error("truncation must be positive")]
    EmptyTruncation,
    #[error("truncation {got} too small, need at least {needed}")]
    TruncationTooSmall { needed: usize, got: usize },
    #[error("amplitude must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error("linear algebra did not converge: {0}")]
    NoConvergence(String),
    #[error("operation requires a ground-state linearization")]
    NotGround,
    #[error("vector length {got} does not match truncation {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}
