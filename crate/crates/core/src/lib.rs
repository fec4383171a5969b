//! Simulation of multipartite GHZ entanglement purification.
//!
//! Three engines cross-check each other:
//!
//! * [`analytics`]: closed-form maps on GHZ-diagonal ensembles,
//! * [`engine`]: exact enumeration of every measurement branch on pure
//!   states with amplitudes in `ℚ(√2)`,
//! * [`montecarlo`]: seeded sampling of the same branch kernel in `f64`.
//!
//! Everything numeric is generic over [`scalar::Weight`] (probabilities)
//! and [`scalar::Amplitude`]; the aliases below fix the common choices.

pub mod analytics;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod montecarlo;
pub mod qnd;
pub mod register;
pub mod scalar;

pub use analytics::{
    conventional_round, entanglement_link, four_photon_recycle, phase_round, recycle_by_pattern,
    recycle_pair_tables, recycle_tables, yields_and_fidelities, CurveRecord, LinkPlan,
};
pub use engine::{
    explain_cross, explain_product, run_conventional_bitflip, run_link, run_phaseflip,
    run_recycling, BranchRecord, Fate, ProtocolReport, RecyclingReport,
};
pub use ensemble::{
    BellDiagonalEnsemble, GhzDiagonalEnsemble, PhaseEnsemble, SymmetricNoiseParams,
};
pub use error::{Error, Result};
pub use montecarlo::{mc_run, mc_sweep, McConfig, McEstimate, McInput, PipelineKind};
pub use qnd::{parity_project, parity_via_cnot, ParityOutcome};
pub use register::{GhzLabel, Party, PhotonTag, PureState, Sign};
pub use scalar::{QSqrt2, Rational};

/// Pure state with exact amplitudes.
pub type ExactState = PureState<QSqrt2>;
/// Pure state with double-precision amplitudes.
pub type FloatState = PureState<f64>;
pub type ExactEnsemble = GhzDiagonalEnsemble<Rational>;
pub type FloatEnsemble = GhzDiagonalEnsemble<f64>;
pub type ExactCurve = CurveRecord<Rational>;
pub type FloatCurve = CurveRecord<f64>;
