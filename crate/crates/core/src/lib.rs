//! Event-driven simulation of dissipatively protected quantum memories.
//!
//! - [`lattice4d`], [`toric4d`]: the 4D toric code under a local Toom-style
//!   recovery rule.
//! - [`toy2d`]: the 2D open-boundary majority-vote memory.
//! - [`concat`]: concatenated-code dissipation, bounds and Pauli-frame Monte Carlo.
//! - [`gadget`]: the damped-qubit gadget ODEs and their deviation bounds.
//! - [`engine`]: Gillespie sampling, per-trial random streams and statistics.

pub mod concat;
pub mod engine;
pub mod gadget;
pub mod lattice4d;
pub mod toric4d;
pub mod toy2d;

pub use concat::{
    BlockAddress, ConcatError, ConcatOutcome, ConcatParams, ConcatSummary, EnabledSample,
    Factorization, Letter, PauliFrame, StabilizerCode,
};
pub use engine::{
    next_event, restricted_mean, run_trials, Cadence, Censorable, EngineError, Estimate,
    Parallelism, Proportion, RateTable, RngStream, Step,
};
pub use gadget::{
    Blocks, BoundReport, CMatrix, FullTrajectory, GadgetConfig, GadgetError, InequalityReport,
    Norm, SystemLiouvillian, TargetTrajectory, Verdict,
};
pub use lattice4d::{CellId, CellKind, Lattice4D, LatticeError, Orientation, Vertex};
pub use toric4d::{
    NoiseModel, Sector, SectorKind, SectorState, StaticConvention, ToomParams, ToricError, Tracked,
    TrialOutcome,
};
pub use toy2d::{
    Grid, SizeScan, SizeScanRow, SpinGrid, TieRule, ToyError, ToyOutcome, ToyParams, Triple,
};
