//! A resilient deployment-and-configuration engine for component-based
//! distributed applications.
//!
//! The engine maps an application model (components, dependencies,
//! virtual-node assignments, collocation groups) onto a cluster of physical
//! nodes, executes a phased deployment plan through per-node deployment
//! manager state machines coordinated by a cluster leader, and autonomously
//! recovers the affected application subgraph when a node goes offline at
//! any point, during setup or after activation.
//!
//! Modules:
//! * [`model`] — domain types, structural validation, process groups and
//!   dependency-ordered activation.
//! * [`planner`] — node mapping, resource and label-flow checks, plan
//!   synthesis and reconciliation diffs.
//! * [`lifecycle`] — component state machines and the per-node deployment
//!   manager.
//! * [`orchestrator`] — the cluster-leader protocol: phase barriers,
//!   acknowledgement tracking, leader election and takeover.
//! * [`failure`] — heartbeat failure detection and recovery planning.
//! * [`simnet`] — the deterministic seeded discrete-event simulation
//!   driving all of the above.

pub mod event;
pub mod failure;
pub mod lifecycle;
pub mod model;
pub mod orchestrator;
pub mod planner;
pub mod report;
pub mod simnet;
pub mod testutil;

pub use event::{Event, EventBody, EventLog};
pub use lifecycle::{AckResult, ComponentState, ConfigurationState, NodeDM, Refusal};
pub use model::{
    AppIndex, Application, Cluster, ComponentId, ComponentInstance, Connection, GroupId, Level,
    NodeId, NodeStatus, PhysicalNode, Port, PortKind, SecurityLabel, Violation, VnodeId,
};
pub use planner::{
    DeployAction, FeasibilityReason, FlowViolation, NodeMapping, PhaseKind, Plan, PlanError,
    ResourceReport,
};
pub use report::{Outcome, RunReport};
pub use simnet::{DelayModel, RunOutput, Scenario, SimRng, TakeoverAudit};
