//! Numerical laboratory for the truncated conformal flow: resonant dynamics,
//! conserved quantities, linearized spectra around stationary states and
//! modulation tracking near the ground-state family.

pub mod flow;
pub mod kernel;
pub mod lab;
pub mod linearized;
pub mod modulation;
pub mod observables;
pub mod state;
pub mod summation;

pub use num_complex::Complex64;

pub use flow::{integrate, FlowError, IntegratorConfig, TrajectoryRecord};
pub use kernel::{min_plus_one, LayeredPairSums};
pub use linearized::{build_ground_ops, build_single_mode_ops, LinearizedError, OperatorPair};
pub use modulation::{
    decompose, decompose_p0, orbit_distance, track_modulation, ModulationError, ModulationFrame,
    ModulationOptions, ModulationTrack, OrbitDistance,
};
pub use observables::{
    charge, energy_fast, energy_naive, functional_k, gap, hankel_identity_check, higher_charge,
    ConservedTriple, ObservableError,
};
pub use state::{
    gauge_apply, make_reference, scaling_apply, weighted_norm, ModeVector, ReferenceKind,
    ReferenceState, StateError, TruncatedReference, WeightedNormOrder,
};
