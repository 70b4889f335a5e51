//! The append-only simulation event log.
//!
//! One record per line when serialized: `{"t":..,"seq":..,"kind":..,...}`.
//! Records are written in processing order, `seq` is the monotone record
//! counter, and serialization is byte-stable so identical runs produce
//! identical files.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::lifecycle::{AckResult, Refusal};
use crate::model::{ComponentId, Connection, NodeId, VnodeId};
use crate::planner::{DeployAction, FeasibilityReason, PhaseKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    /// A node's periodic heartbeat round (one record per round, not per
    /// destination).
    Heartbeat { node: NodeId },
    Dispatch {
        plan: u64,
        phase: PhaseKind,
        idx: usize,
        from: NodeId,
        to: NodeId,
        action: DeployAction,
    },
    /// A manager applied an action; `node` is the executor.
    ActionAck {
        plan: u64,
        node: NodeId,
        idx: usize,
        action: DeployAction,
        result: AckResult,
    },
    ActionRefused {
        plan: u64,
        node: NodeId,
        action: DeployAction,
        reason: Refusal,
    },
    MsgDropped { from: NodeId, to: NodeId, msg: String },
    Crash { node: NodeId },
    ConnectionSevered { connection: Connection },
    FailureDetected { observer: NodeId, suspect: NodeId },
    LeaderClaim { node: NodeId },
    QueryState { from: NodeId, to: NodeId },
    StateReport { from: NodeId, to: NodeId, components: usize },
    TakeoverComplete { leader: NodeId },
    PlanStarted { plan: u64, leader: NodeId, actions: usize, recovery: bool },
    PlanSuspended { plan: u64, cause: NodeId },
    PlanComplete { plan: u64 },
    PlanAborted { plan: u64, reason: String },
    RecoveryPlanned {
        failed: Vec<ComponentId>,
        impacted: Vec<ComponentId>,
        binding: BTreeMap<VnodeId, NodeId>,
    },
    RecoveryComplete { plan: u64 },
    Unrecoverable {
        vnode: VnodeId,
        node_kind: String,
        reason: FeasibilityReason,
        failed: Vec<ComponentId>,
        impacted: Vec<ComponentId>,
    },
    HorizonExceeded {},
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, t: u64, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(Event { t, seq, body });
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One JSON object per line, trailing newline included when nonempty.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}
