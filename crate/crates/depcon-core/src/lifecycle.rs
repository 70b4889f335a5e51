//! Component lifecycle state machine, node-level deployment manager and the
//! time-stamped configuration snapshot.
//!
//! All transitions run through [`apply_transition`], shared by the node
//! managers, the simulation ground truth and the leader's replica, so the
//! three views can never disagree on the rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppIndex, Cluster, ComponentId, Connection, GroupId, NodeId, NodeStatus};
use crate::planner::{DeployAction, NodeMapping, PhaseKind};

/// Lifecycle state of one component incarnation.
///
/// The legal action-driven transitions are: Absent to Instantiated
/// (instantiate), Instantiated to Connected (once every required connection
/// is established), Connected to Active (activate), Active to Deactivated
/// (deactivate), Deactivated back to Active (re-activate, connections
/// permitting) or to Absent (destroy). A node going offline moves every
/// hosted component to Failed; Failed clears to Absent through the recovery
/// bookkeeping destroy. Failed is terminal per incarnation: recovery builds
/// a fresh one instead of resuming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentState {
    Absent,
    Instantiated,
    Connected,
    Active,
    Deactivated,
    Failed,
}

/// Outcome of applying an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckResult {
    Applied,
    /// The action's effect already held; repeats are tolerated so dispatch
    /// can be at-least-once.
    Idempotent,
    /// Applied by the leader on its replica for a subject whose node is
    /// offline (the recovery destroy of a failed incarnation).
    Bookkeeping,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Refusal {
    #[error("IllegalTransition: {action:?} from {from:?}")]
    IllegalTransition { from: ComponentState, action: PhaseKind },
    #[error("WrongNode: action for {expected} reached {got}")]
    WrongNode { expected: NodeId, got: NodeId },
}

fn state_of(states: &BTreeMap<ComponentId, ComponentState>, id: &ComponentId) -> ComponentState {
    states.get(id).copied().unwrap_or(ComponentState::Absent)
}

/// Applies one deployment action to a (states, connections, processes)
/// scope, enforcing the transition table. Atomic: on refusal nothing is
/// modified.
pub fn apply_transition(
    states: &mut BTreeMap<ComponentId, ComponentState>,
    connections: &mut BTreeSet<Connection>,
    processes: &mut BTreeMap<GroupId, NodeId>,
    action: &DeployAction,
    index: &AppIndex,
) -> Result<AckResult, Refusal> {
    use ComponentState::*;

    let illegal = |from: ComponentState| Refusal::IllegalTransition {
        from,
        action: action.phase_kind(),
    };

    match action {
        DeployAction::StartProcess { group, node } => {
            if processes.get(group) == Some(node) {
                return Ok(AckResult::Idempotent);
            }
            processes.insert(group.clone(), node.clone());
            Ok(AckResult::Applied)
        }
        DeployAction::StopProcess { group, node } => {
            if processes.get(group) == Some(node) {
                processes.remove(group);
                Ok(AckResult::Applied)
            } else {
                Ok(AckResult::Idempotent)
            }
        }
        DeployAction::Instantiate { component, .. } => match state_of(states, component) {
            Absent => {
                let next = if index.required[component].is_subset(connections) {
                    Connected
                } else {
                    Instantiated
                };
                states.insert(component.clone(), next);
                Ok(AckResult::Applied)
            }
            Failed => Err(illegal(Failed)),
            _ => Ok(AckResult::Idempotent),
        },
        DeployAction::Connect { connection, .. } => {
            let subject = connection.subject();
            match state_of(states, subject) {
                Absent => Err(illegal(Absent)),
                Failed => Err(illegal(Failed)),
                state => {
                    if connections.contains(connection) {
                        return Ok(AckResult::Idempotent);
                    }
                    connections.insert(connection.clone());
                    if state == Instantiated && index.required[subject].is_subset(connections) {
                        states.insert(subject.clone(), Connected);
                    }
                    Ok(AckResult::Applied)
                }
            }
        }
        DeployAction::Activate { component, .. } => match state_of(states, component) {
            Active => Ok(AckResult::Idempotent),
            Connected => {
                states.insert(component.clone(), Active);
                Ok(AckResult::Applied)
            }
            // Re-activation of a deactivated component, once recovery has
            // restored its connections.
            Deactivated if index.required[component].is_subset(connections) => {
                states.insert(component.clone(), Active);
                Ok(AckResult::Applied)
            }
            from => Err(illegal(from)),
        },
        DeployAction::Deactivate { component, .. } => match state_of(states, component) {
            Active => {
                states.insert(component.clone(), Deactivated);
                Ok(AckResult::Applied)
            }
            Deactivated => Ok(AckResult::Idempotent),
            from => Err(illegal(from)),
        },
        DeployAction::Disconnect { connection, .. } => {
            if connections.remove(connection) {
                Ok(AckResult::Applied)
            } else {
                Ok(AckResult::Idempotent)
            }
        }
        DeployAction::Destroy { component, .. } => match state_of(states, component) {
            Absent => Ok(AckResult::Idempotent),
            Deactivated | Failed => {
                states.insert(component.clone(), Absent);
                Ok(AckResult::Applied)
            }
            from => Err(illegal(from)),
        },
    }
}

/// The per-node Deployment Manager: applies dispatched actions to its local
/// state and emits periodic heartbeats. Every node runs one.
#[derive(Debug, Clone)]
pub struct NodeDM {
    pub node: NodeId,
    pub states: BTreeMap<ComponentId, ComponentState>,
    pub connections: BTreeSet<Connection>,
    pub processes: BTreeMap<GroupId, NodeId>,
    pub heartbeat_period: u64,
    pub last_heartbeat: u64,
}

impl NodeDM {
    pub fn new(node: NodeId, heartbeat_period: u64) -> Self {
        Self {
            node,
            states: BTreeMap::new(),
            connections: BTreeSet::new(),
            processes: BTreeMap::new(),
            heartbeat_period,
            last_heartbeat: 0,
        }
    }

    /// Performs the state transition for an action addressed to this node
    /// and reports the acknowledgement to send back.
    pub fn apply_action(
        &mut self,
        action: &DeployAction,
        index: &AppIndex,
    ) -> Result<AckResult, Refusal> {
        if action.node() != &self.node {
            return Err(Refusal::WrongNode {
                expected: action.node().clone(),
                got: self.node.clone(),
            });
        }
        apply_transition(&mut self.states, &mut self.connections, &mut self.processes, action, index)
    }

    /// True (and the send is recorded) iff a heartbeat is due: at least one
    /// period has elapsed since the last one, boundary inclusive.
    pub fn heartbeat_due(&mut self, now: u64) -> bool {
        if now >= self.last_heartbeat + self.heartbeat_period {
            self.last_heartbeat = now;
            true
        } else {
            false
        }
    }

    /// Local truth for the leader's state query: non-absent component
    /// states, established connections and running processes.
    pub fn state_report(&self) -> StateReport {
        StateReport {
            states: self
                .states
                .iter()
                .filter(|(_, s)| **s != ComponentState::Absent)
                .map(|(c, s)| (c.clone(), *s))
                .collect(),
            connections: self.connections.clone(),
            processes: self.processes.clone(),
        }
    }
}

/// A node's answer to a state query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateReport {
    pub states: BTreeMap<ComponentId, ComponentState>,
    pub connections: BTreeSet<Connection>,
    pub processes: BTreeMap<GroupId, NodeId>,
}

/// The time-stamped status of the deployed application: every component's
/// lifecycle state, the virtual-node binding, established connections,
/// running processes and node statuses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurationState {
    pub time: u64,
    pub comp_states: BTreeMap<ComponentId, ComponentState>,
    pub mapping: NodeMapping,
    pub connections: BTreeSet<Connection>,
    pub node_status: BTreeMap<NodeId, NodeStatus>,
    pub processes: BTreeMap<GroupId, NodeId>,
}

impl ConfigurationState {
    /// The undeployed configuration: everything absent, statuses taken from
    /// the cluster, no binding yet.
    pub fn initial(index: &AppIndex, cluster: &Cluster) -> Self {
        Self {
            time: 0,
            comp_states: index
                .comp_ids
                .iter()
                .map(|c| (c.clone(), ComponentState::Absent))
                .collect(),
            mapping: NodeMapping::default(),
            connections: BTreeSet::new(),
            node_status: cluster
                .nodes
                .values()
                .map(|n| (n.id.clone(), n.status))
                .collect(),
            processes: BTreeMap::new(),
        }
    }

    pub fn state_of(&self, id: &ComponentId) -> ComponentState {
        state_of(&self.comp_states, id)
    }

    pub fn online(&self, node: &NodeId) -> bool {
        self.node_status.get(node) == Some(&NodeStatus::Online)
    }

    pub fn all_active(&self, index: &AppIndex) -> bool {
        index
            .comp_ids
            .iter()
            .all(|c| self.state_of(c) == ComponentState::Active)
    }

    /// Components currently bound to a node through the mapping.
    pub fn hosted_on<'a>(&'a self, index: &'a AppIndex, node: &'a NodeId) -> impl Iterator<Item = &'a ComponentId> {
        index
            .comp_ids
            .iter()
            .filter(move |c| self.mapping.component_node(index, c) == Some(node))
    }

    /// Applies an acknowledged action to this (global) view.
    pub fn apply_action(
        &mut self,
        action: &DeployAction,
        index: &AppIndex,
    ) -> Result<AckResult, Refusal> {
        apply_transition(
            &mut self.comp_states,
            &mut self.connections,
            &mut self.processes,
            action,
            index,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CrashError {
    #[error("UnknownNode: {0}")]
    UnknownNode(NodeId),
    #[error("AlreadyOffline: {0}")]
    AlreadyOffline(NodeId),
}

/// Marks a node offline: every hosted non-absent component fails, every
/// connection touching the node is severed, processes on the node are gone.
/// Returns the severed connections for the log.
pub fn crash_node(
    config: &mut ConfigurationState,
    node: &NodeId,
    index: &AppIndex,
) -> Result<Vec<Connection>, CrashError> {
    match config.node_status.get(node) {
        None => return Err(CrashError::UnknownNode(node.clone())),
        Some(NodeStatus::Offline) => return Err(CrashError::AlreadyOffline(node.clone())),
        Some(NodeStatus::Online) => {}
    }
    config.node_status.insert(node.clone(), NodeStatus::Offline);

    let hosted: Vec<ComponentId> = config.hosted_on(index, node).cloned().collect();
    for comp in &hosted {
        if config.state_of(comp) != ComponentState::Absent {
            config.comp_states.insert(comp.clone(), ComponentState::Failed);
        }
    }
    let severed: Vec<Connection> = config
        .connections
        .iter()
        .filter(|conn| hosted.iter().any(|c| conn.touches(c)))
        .cloned()
        .collect();
    for conn in &severed {
        config.connections.remove(conn);
    }
    config.processes.retain(|_, n| n != node);
    Ok(severed)
}

/// A configuration with every component active on its mapped node, every
/// required connection established and every process running. The quiescent
/// end state of a successful deployment.
pub fn fully_active_config(index: &AppIndex, mapping: &NodeMapping) -> ConfigurationState {
    let node_status: BTreeMap<NodeId, NodeStatus> = mapping
        .binding
        .values()
        .map(|n| (n.clone(), NodeStatus::Online))
        .collect();
    ConfigurationState {
        time: 0,
        comp_states: index
            .comp_ids
            .iter()
            .map(|c| (c.clone(), ComponentState::Active))
            .collect(),
        mapping: mapping.clone(),
        connections: index.required.values().flat_map(|s| s.iter().cloned()).collect(),
        node_status,
        processes: index
            .groups
            .iter()
            .map(|g| (g.id.clone(), mapping.binding[&g.vnode].clone()))
            .collect(),
    }
}
