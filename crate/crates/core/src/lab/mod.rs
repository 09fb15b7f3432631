//! Experiment orchestration: configuration, seeded perturbations, the
//! experiment drivers behind the CLI and run persistence.

mod config;
mod experiments;
mod io;
mod perturbation;

pub use config::{ConfigOverrides, ExperimentConfig, ExperimentKind};
pub use experiments::{
    hessian_check, run, run_decompose, run_drift_study, run_inequality_scan, run_simulate,
    run_spectrum_suite, run_verify_identities, single_mode_scaling, DecomposeReport, DriftSummary,
    EnsembleConstants, GroundSuiteEntry, HessianCheck, IdentitiesReport, InequalityReport,
    RunOutcome, RunSummary, ScalingReport, SimulateReport, SingleModeSuiteEntry,
    SpectrumSuiteReport,
};
pub use io::{RunMetadata, RNG_DESCRIPTION};
pub use perturbation::{generate_perturbation, PerturbationSpec};

use crate::flow::FlowError;
use crate::linearized::LinearizedError;
use crate::modulation::ModulationError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit code: 2 for validation, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation(_) => 2,
            LabError::Numerical(_) => 3,
            LabError::Io(_) => 1,
        }
    }
}

impl From<FlowError> for LabError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::InvalidConfig(_) => LabError::Validation(e.to_string()),
            _ => LabError::Numerical(e.to_string()),
        }
    }
}

impl From<ModulationError> for LabError {
    fn from(e: ModulationError) -> Self {
        match e {
            ModulationError::InvalidP(_) | ModulationError::Empty => {
                LabError::Validation(e.to_string())
            }
            _ => LabError::Numerical(e.to_string()),
        }
    }
}

impl From<LinearizedError> for LabError {
    fn from(e: LinearizedError) -> Self {
        match e {
            LinearizedError::NoConvergence(_) => LabError::Numerical(e.to_string()),
            _ => LabError::Validation(e.to_string()),
        }
    }
}

impl From<crate::state::StateError> for LabError {
    fn from(e: crate::state::StateError) -> Self {
        LabError::Validation(e.to_string())
    }
}
