//! Partially observed and decentralized information structures: models,
//! reference-measure simulators and the independence audit.

mod audit;
mod models;
mod simulate;

pub use audit::{
    anticipative_probe_batch, audit_batch_coupled, audit_batch_full, audit_batch_local_meas, independence_audit,
    AuditBatch, AuditFlag, AuditReport,
};
pub use models::{
    AgentDynamics, CoupledLocalStateTeamModel, CouplingFn, LocalMeasurementTeamModel, ObservationChannel,
    ObservationCoupling, ObservationFn, ObservedDiffusionFn, ObservedDriftFn, PartiallyObservedModel,
};
pub use simulate::{
    simulate_pomdp_direct, simulate_pomdp_reference, simulate_team_coupled_direct, simulate_team_decoupled,
    simulate_team_local_meas_direct, simulate_team_local_meas_reference, ObservedPath,
};
