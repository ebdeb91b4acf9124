//! Planning toolkit for distributed generation (DG) on radial distribution
//! feeders.
//!
//! The crate covers the full planning chain:
//!
//! 1. [`network`] — case-file model of a radial feeder (buses, branches,
//!    per-unit bases) plus a bundled PG&E 69-bus test case.
//! 2. [`powerflow`] — backward/forward sweep power flow with branch losses
//!    and an impedance-matrix cross-check of the total loss.
//! 3. [`siting`] — stage 1: loss-sensitivity ranking and greedy placement
//!    of DG buses with golden-section capacity seeding.
//! 4. [`objectives`] + [`moalo`] — stage 2: multi-objective ant lion
//!    optimization of DG capacities at the sited buses (investment benefit,
//!    voltage stability, active loss).
//! 5. [`grp`] — grey relation projection ranking to pick a compromise
//!    solution from the Pareto archive.
//! 6. [`stochastic`] + [`storage`] + [`ppf`] — Monte Carlo output models for
//!    wind/solar units, chance-constrained storage sizing, and probabilistic
//!    power flow with/without storage compensation.
//! 7. [`pipeline`] — an end-to-end seeded run that writes CSV artifacts and
//!    a reproducibility manifest.
//!
//! All power quantities cross module boundaries in kW/kVar; voltages are per
//! unit. Internally the solver works in per-unit on the case base.

pub mod grp;
pub mod moalo;
pub mod network;
pub mod objectives;
pub mod pipeline;
pub mod powerflow;
pub mod ppf;
pub mod siting;
pub mod stochastic;
pub mod storage;

pub use grp::{DecisionMatrix, GrpRanking};
pub use moalo::{Archive, Candidate, Evaluation, MoaloConfig, Sense};
pub use network::{Branch, Bus, BusKind, CaseError, NetworkCase};
pub use objectives::{DgEconomics, DgKind, DgUnit, Evaluator, ObjectiveVector};
pub use powerflow::{Injection, PowerFlowSolution, SolveError, SweepOptions};
pub use ppf::{CdfSeries, PpfConfig, PpfReport};
pub use siting::SitingResult;
pub use stochastic::{PvModel, SampleSet, StochasticModels, WtCurve};
pub use storage::StorageSpec;
