//! Cluster-lead deployment manager protocol.
//!
//! One manager acts as cluster leader: it dispatches plan actions phase by
//! phase, collects acknowledgements into its configuration replica and
//! never crosses a phase barrier with outstanding actions. Within the
//! activate phase a component is dispatched only once the activations of
//! all servers it depends on are acknowledged. Leadership follows the
//! smallest online node id; a successor rebuilds the replica by querying
//! every surviving node.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::event::EventBody;
use crate::lifecycle::{AckResult, ComponentState, ConfigurationState, Refusal, StateReport};
use crate::model::{AppIndex, ComponentId, NodeId, NodeStatus};
use crate::planner::{DeployAction, PhaseKind, Plan};

/// Acknowledgement of one dispatched action.
#[derive(Debug, Clone, PartialEq)]
pub struct AckMsg {
    pub plan: u64,
    pub phase: usize,
    pub idx: usize,
    pub action: DeployAction,
    pub result: Result<AckResult, Refusal>,
}

/// Messages exchanged between deployment managers.
#[derive(Debug, Clone, PartialEq)]
pub enum DmMessage {
    Dispatch { plan: u64, phase: usize, idx: usize, action: DeployAction },
    Ack(AckMsg),
    Heartbeat,
    QueryState,
    StateReport(StateReport),
    LeaderClaim,
}

impl DmMessage {
    pub fn label(&self) -> &'static str {
        match self {
            DmMessage::Dispatch { .. } => "dispatch",
            DmMessage::Ack(_) => "ack",
            DmMessage::Heartbeat => "heartbeat",
            DmMessage::QueryState => "query_state",
            DmMessage::StateReport(_) => "state_report",
            DmMessage::LeaderClaim => "leader_claim",
        }
    }
}

/// A message in flight between two online nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: DmMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("NoNodesOnline")]
pub struct NoNodesOnline;

/// The leader is the smallest online node id.
pub fn elect_leader(status: &BTreeMap<NodeId, NodeStatus>) -> Result<NodeId, NoNodesOnline> {
    status
        .iter()
        .find(|(_, s)| **s == NodeStatus::Online)
        .map(|(n, _)| n.clone())
        .ok_or(NoNodesOnline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    /// Initial deployment.
    Deploy,
    /// Reconfiguration after a failure; completion is a recovery.
    Recovery,
    /// Deactivation of impacted clients when no spare exists.
    Degradation,
}

/// Progress of the plan currently executed by the leader.
#[derive(Debug, Clone)]
pub struct PlanRun {
    pub id: u64,
    pub plan: Plan,
    pub kind: PlanKind,
    pub phase: usize,
    pub dispatched: BTreeSet<(usize, usize)>,
    pub acked: BTreeSet<(usize, usize)>,
    /// Where each component's activate action sits in this plan.
    activate_refs: BTreeMap<ComponentId, (usize, usize)>,
}

impl PlanRun {
    fn new(id: u64, plan: Plan, kind: PlanKind) -> Self {
        let mut activate_refs = BTreeMap::new();
        for (p, phase) in plan.phases.iter().enumerate() {
            if phase.phase == PhaseKind::Activate {
                for (i, action) in phase.actions.iter().enumerate() {
                    if let DeployAction::Activate { component, .. } = action {
                        activate_refs.insert(component.clone(), (p, i));
                    }
                }
            }
        }
        Self {
            id,
            plan,
            kind,
            phase: 0,
            dispatched: BTreeSet::new(),
            acked: BTreeSet::new(),
            activate_refs,
        }
    }

    /// An activate action may be dispatched only when every server the
    /// component depends on is either acknowledged active in this plan or
    /// already active in the replica.
    fn activation_ready(
        &self,
        component: &ComponentId,
        replica: &ConfigurationState,
        index: &AppIndex,
    ) -> bool {
        index.servers_of(component).all(|server| {
            match self.activate_refs.get(server) {
                Some(r) => self.acked.contains(r),
                None => replica.state_of(server) == ComponentState::Active,
            }
        })
    }
}

/// Pending reconstruction of the replica by a fresh leader.
#[derive(Debug, Clone)]
pub struct TakeoverRun {
    pub awaiting: BTreeSet<NodeId>,
    pub reports: BTreeMap<NodeId, StateReport>,
}

/// Side effects a leader step wants performed, in order.
#[derive(Debug, Clone)]
pub enum Effect {
    Send { to: NodeId, msg: DmMessage },
    Log(EventBody),
    /// A destroy applied directly to the replica because the subject's node
    /// is offline: the bookkeeping that clears a failed incarnation.
    Bookkeep { plan: u64, idx: usize, action: DeployAction },
}

#[derive(Debug, Clone, Default)]
pub struct Outbox {
    pub effects: Vec<Effect>,
    pub takeover_finished: bool,
    pub plan_aborted: bool,
}

impl Outbox {
    pub fn log(&mut self, body: EventBody) {
        self.effects.push(Effect::Log(body));
    }

    pub fn send(&mut self, to: NodeId, msg: DmMessage) {
        self.effects.push(Effect::Send { to, msg });
    }
}

/// Leader-side state: the configuration replica, the plan in flight and a
/// takeover in progress, if any.
#[derive(Debug, Clone)]
pub struct LeadState {
    pub node: NodeId,
    pub replica: ConfigurationState,
    pub plan: Option<PlanRun>,
    pub takeover: Option<TakeoverRun>,
}

impl LeadState {
    /// A leader starting from a known replica (the initial leader starts
    /// from the undeployed configuration).
    pub fn new(node: NodeId, replica: ConfigurationState) -> Self {
        Self { node, replica, plan: None, takeover: None }
    }

    /// A successor leader: its replica starts from its own local truth and
    /// the node-status view; everything else arrives via state reports.
    pub fn take_over(
        node: NodeId,
        view: BTreeMap<NodeId, NodeStatus>,
        own_report: StateReport,
        index: &AppIndex,
    ) -> Self {
        let awaiting: BTreeSet<NodeId> = view
            .iter()
            .filter(|(n, s)| **s == NodeStatus::Online && **n != node)
            .map(|(n, _)| n.clone())
            .collect();
        let replica = ConfigurationState {
            time: 0,
            comp_states: index
                .comp_ids
                .iter()
                .map(|c| (c.clone(), ComponentState::Absent))
                .collect(),
            mapping: Default::default(),
            connections: BTreeSet::new(),
            node_status: view,
            processes: BTreeMap::new(),
        };
        Self {
            node: node.clone(),
            replica,
            plan: None,
            takeover: Some(TakeoverRun {
                awaiting,
                reports: BTreeMap::from([(node, own_report)]),
            }),
        }
    }

    /// Starts executing a plan: logs the start, then dispatches everything
    /// the barriers allow. An empty plan completes immediately.
    pub fn start_plan(
        &mut self,
        id: u64,
        plan: Plan,
        kind: PlanKind,
        index: &AppIndex,
        out: &mut Outbox,
    ) {
        out.log(EventBody::PlanStarted {
            plan: id,
            leader: self.node.clone(),
            actions: plan.action_count(),
            recovery: kind == PlanKind::Recovery,
        });
        self.plan = Some(PlanRun::new(id, plan, kind));
        dispatch_ready(&self.node, &mut self.plan, &mut self.replica, index, out);
    }

    /// Handles an acknowledgement from a node manager. Acknowledgements of
    /// superseded plans are ignored; their effects are recovered by
    /// idempotent re-dispatch.
    pub fn on_ack(&mut self, now: u64, ack: AckMsg, index: &AppIndex, out: &mut Outbox) {
        let Some(run) = self.plan.as_mut() else { return };
        if run.id != ack.plan {
            return;
        }
        match ack.result {
            Err(_refusal) => {
                out.log(EventBody::PlanAborted {
                    plan: ack.plan,
                    reason: format!("refused: {:?}", ack.action),
                });
                self.plan = None;
                out.plan_aborted = true;
            }
            Ok(_) => {
                self.replica.time = now;
                let applied = self.replica.apply_action(&ack.action, index);
                debug_assert!(applied.is_ok(), "replica diverged on {:?}: {applied:?}", ack.action);
                run.acked.insert((ack.phase, ack.idx));
                dispatch_ready(&self.node, &mut self.plan, &mut self.replica, index, out);
            }
        }
    }

    /// Merges a state report during takeover; finishes the reconstruction
    /// once every awaited node has reported.
    pub fn on_state_report(
        &mut self,
        from: NodeId,
        report: StateReport,
        now: u64,
        index: &AppIndex,
        out: &mut Outbox,
    ) {
        let Some(takeover) = self.takeover.as_mut() else { return };
        takeover.reports.insert(from.clone(), report);
        takeover.awaiting.remove(&from);
        if takeover.awaiting.is_empty() {
            self.finish_takeover(now, index, out);
        }
    }

    /// Finishes the takeover if nothing is awaited (the sole-survivor
    /// case).
    pub fn poll_takeover(&mut self, now: u64, index: &AppIndex, out: &mut Outbox) {
        if self.takeover.as_ref().is_some_and(|t| t.awaiting.is_empty()) {
            self.finish_takeover(now, index, out);
        }
    }

    /// Notes a node lost during takeover: it will never report, and any
    /// report it already sent describes dead state.
    pub fn takeover_note_offline(
        &mut self,
        node: &NodeId,
        now: u64,
        index: &AppIndex,
        out: &mut Outbox,
    ) {
        let Some(takeover) = self.takeover.as_mut() else { return };
        self.replica.node_status.insert(node.clone(), NodeStatus::Offline);
        takeover.awaiting.remove(node);
        takeover.reports.remove(node);
        if takeover.awaiting.is_empty() {
            self.finish_takeover(now, index, out);
        }
    }

    /// Rebuilds the replica as the union of node-local truths: component
    /// states and connections from each report, the virtual-node binding
    /// reconstructed from where components and processes actually live.
    fn finish_takeover(&mut self, now: u64, index: &AppIndex, out: &mut Outbox) {
        let Some(takeover) = self.takeover.take() else { return };
        self.replica.time = now;
        for (node, report) in &takeover.reports {
            for (comp, state) in &report.states {
                self.replica.comp_states.insert(comp.clone(), *state);
                self.replica
                    .mapping
                    .binding
                    .insert(index.vnode_of[comp].clone(), node.clone());
            }
            self.replica.connections.extend(report.connections.iter().cloned());
            for (group, gnode) in &report.processes {
                self.replica.processes.insert(group.clone(), gnode.clone());
                let vnode = index.group(group).vnode.clone();
                self.replica.mapping.binding.insert(vnode, gnode.clone());
            }
        }
        out.log(EventBody::TakeoverComplete { leader: self.node.clone() });
        out.takeover_finished = true;
    }
}

/// Advances the plan: dispatches every eligible action of the current
/// phase, applies bookkeeping destroys directly, and crosses the phase
/// barrier whenever the whole phase is acknowledged. Logs completion when
/// the final phase closes.
fn dispatch_ready(
    node: &NodeId,
    plan_slot: &mut Option<PlanRun>,
    replica: &mut ConfigurationState,
    index: &AppIndex,
    out: &mut Outbox,
) {
    loop {
        let Some(run) = plan_slot.as_mut() else { return };
        if run.phase >= run.plan.phases.len() {
            out.log(EventBody::PlanComplete { plan: run.id });
            if run.kind == PlanKind::Recovery {
                out.log(EventBody::RecoveryComplete { plan: run.id });
            }
            *plan_slot = None;
            return;
        }

        let phase_idx = run.phase;
        let phase_kind = run.plan.phases[phase_idx].phase;
        let total = run.plan.phases[phase_idx].actions.len();
        let mut progressed = false;
        for idx in 0..total {
            let r = (phase_idx, idx);
            if run.dispatched.contains(&r) {
                continue;
            }
            let action = run.plan.phases[phase_idx].actions[idx].clone();
            if phase_kind == PhaseKind::Activate {
                let component = action.component().expect("activate has a component");
                if !run.activation_ready(component, replica, index) {
                    continue;
                }
            }
            run.dispatched.insert(r);
            let bookkeeping = matches!(action, DeployAction::Destroy { .. })
                && !replica.online(action.node());
            if bookkeeping {
                let applied = replica.apply_action(&action, index);
                debug_assert!(applied.is_ok(), "bookkeeping destroy refused: {applied:?}");
                run.acked.insert(r);
                out.effects.push(Effect::Bookkeep { plan: run.id, idx, action });
                progressed = true;
            } else {
                out.log(EventBody::Dispatch {
                    plan: run.id,
                    phase: phase_kind,
                    idx,
                    from: node.clone(),
                    to: action.node().clone(),
                    action: action.clone(),
                });
                out.send(
                    action.node().clone(),
                    DmMessage::Dispatch { plan: run.id, phase: phase_idx, idx, action },
                );
            }
        }

        let acked_in_phase = run.acked.iter().filter(|(p, _)| *p == phase_idx).count();
        if acked_in_phase == total {
            run.phase += 1;
            continue;
        }
        if !progressed {
            return;
        }
    }
}

/// Per-node protocol state: the node's belief about peer liveness, its
/// failure detector, and leader state while it leads.
#[derive(Debug, Clone)]
pub struct Agent {
    pub node: NodeId,
    pub view: BTreeMap<NodeId, NodeStatus>,
    pub detector: crate::failure::DetectorState,
    pub lead: Option<LeadState>,
    pub known_leader: NodeId,
}

impl Agent {
    pub fn new(
        node: NodeId,
        all_nodes: &BTreeSet<NodeId>,
        heartbeat_period: u64,
        miss_threshold: u64,
        initial_leader: NodeId,
    ) -> Self {
        let peers = all_nodes.iter().filter(|n| **n != node).cloned();
        Self {
            view: all_nodes.iter().map(|n| (n.clone(), NodeStatus::Online)).collect(),
            detector: crate::failure::DetectorState::new(peers, heartbeat_period, miss_threshold),
            node,
            lead: None,
            known_leader: initial_leader,
        }
    }
}
