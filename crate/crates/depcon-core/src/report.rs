//! Run outcome summary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::event::{EventBody, EventLog};
use crate::lifecycle::{ComponentState, ConfigurationState};
use crate::model::ComponentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Unrecoverable,
    HorizonExceeded,
    ValidationFailed,
    PlanInfeasible,
}

impl Outcome {
    /// The process exit code contract: 0 converged, 1 validation or
    /// planning failure, 3 unrecoverable, 4 horizon exceeded.
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Converged => 0,
            Outcome::ValidationFailed | Outcome::PlanInfeasible => 1,
            Outcome::Unrecoverable => 3,
            Outcome::HorizonExceeded => 4,
        }
    }
}

/// Summary of one simulated run: the outcome, event counts, final component
/// states and simulated timings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub outcome: Outcome,
    pub actions: u64,
    pub failures: u64,
    pub recoveries: u64,
    pub end_time: u64,
    pub converged_at: Option<u64>,
    pub components: BTreeMap<ComponentId, ComponentState>,
}

impl RunReport {
    pub fn from_log(
        outcome: Outcome,
        log: &EventLog,
        final_config: &ConfigurationState,
        end_time: u64,
    ) -> Self {
        let mut actions = 0;
        let mut failures = 0;
        let mut recoveries = 0;
        let mut last_complete = None;
        for event in log.iter() {
            match &event.body {
                EventBody::ActionAck { .. } => actions += 1,
                EventBody::Crash { .. } => failures += 1,
                EventBody::RecoveryComplete { .. } => {
                    recoveries += 1;
                    last_complete = Some(event.t);
                }
                EventBody::PlanComplete { .. } => last_complete = Some(event.t),
                _ => {}
            }
        }
        Self {
            outcome,
            actions,
            failures,
            recoveries,
            end_time,
            converged_at: if outcome == Outcome::Converged { last_complete.or(Some(0)) } else { None },
            components: final_config.comp_states.clone(),
        }
    }
}
