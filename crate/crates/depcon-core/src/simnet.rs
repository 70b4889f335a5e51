//! Deterministic seeded discrete-event simulation of the cluster.
//!
//! A single event loop drives node managers, detectors and the leader
//! protocol. Events are processed in strict (time, sequence) order, all
//! randomness (message delays) flows from one seeded stream, and message
//! delivery is FIFO per ordered node pair, so a given (application,
//! cluster, scenario, seed) always produces a byte-identical event log.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::event::{EventBody, EventLog};
use crate::failure::{degradation_plan, recover, Recovery, RecoveryError};
use crate::lifecycle::{crash_node, AckResult, ComponentState, ConfigurationState};
use crate::model::{
    AppIndex, Application, Cluster, ComponentId, Connection, GroupId, NodeId, NodeStatus, VnodeId,
};
use crate::orchestrator::{
    elect_leader, AckMsg, Agent, DmMessage, Effect, Envelope, LeadState, Outbox, PlanKind,
};
use crate::planner::check_label_flows;
use crate::report::{Outcome, RunReport};

/// Deterministic xorshift64* stream. Not cryptographic; stable across
/// platforms, which is what the replay guarantee needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    /// A zero seed is remapped to a fixed constant to avoid the xorshift
    /// lockup state.
    pub fn new(seed: u64) -> Self {
        Self { state: if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw from the inclusive range [lo, hi].
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        if hi <= lo {
            return lo;
        }
        lo + self.next_u64() % (hi - lo + 1)
    }
}

/// Message delay distribution, in simulated time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayModel {
    Fixed(u64),
    Uniform { min: u64, max: u64 },
}

impl DelayModel {
    pub fn bounds(&self) -> (u64, u64) {
        match self {
            DelayModel::Fixed(d) => (*d, *d),
            DelayModel::Uniform { min, max } => (*min, *max),
        }
    }

    fn sample(&self, rng: &mut SimRng) -> u64 {
        match self {
            DelayModel::Fixed(d) => *d,
            DelayModel::Uniform { min, max } => rng.range(*min, *max),
        }
    }
}

/// A simulation scenario: scripted node crashes, the message delay model,
/// the seed and the run horizon. Crashes can hit at any time, during setup
/// or after activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub crashes: Vec<(NodeId, u64)>,
    pub delay: DelayModel,
    pub seed: u64,
    pub horizon: u64,
    pub heartbeat_period: u64,
    pub miss_threshold: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            crashes: Vec::new(),
            delay: DelayModel::Fixed(1),
            seed: 0,
            horizon: 10_000,
            heartbeat_period: 10,
            miss_threshold: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerKind {
    Init,
    Heartbeat,
    Detector,
    TakeoverRetry,
}

#[derive(Debug, Clone)]
enum Payload {
    Crash(NodeId),
    Timer { node: NodeId, kind: TimerKind },
    Deliver(Box<Envelope>),
}

#[derive(Debug, Clone)]
struct QueuedEvent {
    time: u64,
    seq: u64,
    payload: Payload,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// The message fabric and clock: schedules events, samples delays, keeps
/// per-pair FIFO order and owns the event log.
pub struct Bus {
    pub now: u64,
    next_seq: u64,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    rng: SimRng,
    delay: DelayModel,
    fifo: BTreeMap<(NodeId, NodeId), u64>,
    pub log: EventLog,
}

impl Bus {
    fn new(delay: DelayModel, seed: u64) -> Self {
        Self {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng: SimRng::new(seed),
            delay,
            fifo: BTreeMap::new(),
            log: EventLog::default(),
        }
    }

    fn schedule(&mut self, time: u64, payload: Payload) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEvent { time, seq, payload }));
    }

    fn pop(&mut self) -> Option<QueuedEvent> {
        self.queue.pop().map(|Reverse(ev)| ev)
    }

    /// Schedules delivery of a message at now + sampled delay, clamped so
    /// delivery order per (from, to) pair follows send order.
    fn send(&mut self, from: NodeId, to: NodeId, msg: DmMessage) {
        let delay = self.delay.sample(&mut self.rng);
        let mut at = self.now + delay;
        if let Some(last) = self.fifo.get(&(from.clone(), to.clone())) {
            at = at.max(*last);
        }
        self.fifo.insert((from.clone(), to.clone()), at);
        self.schedule(at, Payload::Deliver(Box::new(Envelope { from, to, msg })));
    }

    fn log(&mut self, body: EventBody) {
        self.log.push(self.now, body);
    }
}

/// Projection of a configuration onto the currently online nodes: what the
/// surviving cluster collectively knows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub states: BTreeMap<ComponentId, ComponentState>,
    pub connections: BTreeSet<Connection>,
    pub processes: BTreeMap<GroupId, NodeId>,
}

fn project(
    config: &ConfigurationState,
    index: &AppIndex,
    online: &BTreeMap<NodeId, NodeStatus>,
) -> Projection {
    let is_online = |n: &NodeId| online.get(n) == Some(&NodeStatus::Online);
    let node_of = |c: &ComponentId| config.mapping.binding.get(&index.vnode_of[c]);
    Projection {
        // A component not hosted on an online node is absent as far as the
        // surviving cluster is concerned.
        states: index
            .comp_ids
            .iter()
            .map(|c| {
                let state = if node_of(c).is_some_and(is_online) {
                    config.state_of(c)
                } else {
                    ComponentState::Absent
                };
                (c.clone(), state)
            })
            .collect(),
        connections: config
            .connections
            .iter()
            .filter(|conn| node_of(conn.subject()).is_some_and(is_online))
            .cloned()
            .collect(),
        processes: config
            .processes
            .iter()
            .filter(|(_, n)| is_online(n))
            .map(|(g, n)| (g.clone(), n.clone()))
            .collect(),
    }
}

/// Snapshot taken when a successor leader finishes rebuilding its replica:
/// the replica must equal the ground truth projected onto online nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TakeoverAudit {
    pub time: u64,
    pub leader: NodeId,
    pub replica: Projection,
    pub truth: Projection,
}

impl TakeoverAudit {
    pub fn lossless(&self) -> bool {
        self.replica == self.truth
    }
}

/// Everything a finished run yields: the log, the final ground-truth
/// configuration, the summary report and the takeover audits.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EventLog,
    pub final_config: ConfigurationState,
    pub report: RunReport,
    pub takeover_audits: Vec<TakeoverAudit>,
}

struct Ctx<'a> {
    index: &'a AppIndex,
    cluster: &'a Cluster,
    scenario: &'a Scenario,
}

struct Sim {
    bus: Bus,
    truth: ConfigurationState,
    dms: BTreeMap<NodeId, crate::lifecycle::NodeDM>,
    agents: BTreeMap<NodeId, Agent>,
    plan_counter: u64,
    pending_crashes: usize,
    unresolved: BTreeSet<NodeId>,
    unrecoverable: bool,
    infeasible_start: bool,
    dispatched_any: bool,
    crash_count: u64,
    audits: Vec<TakeoverAudit>,
}

impl Sim {
    fn new(ctx: &Ctx) -> Self {
        let scenario = ctx.scenario;
        let mut bus = Bus::new(scenario.delay, scenario.seed);
        let node_ids: BTreeSet<NodeId> = ctx.cluster.nodes.keys().cloned().collect();
        let initial_leader = elect_leader(
            &ctx.cluster.nodes.values().map(|n| (n.id.clone(), n.status)).collect(),
        )
        .ok();

        let mut crashes = scenario.crashes.clone();
        crashes.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        for (node, t) in &crashes {
            bus.schedule(*t, Payload::Crash(node.clone()));
        }
        for node in &node_ids {
            bus.schedule(
                scenario.heartbeat_period,
                Payload::Timer { node: node.clone(), kind: TimerKind::Heartbeat },
            );
            bus.schedule(
                scenario.heartbeat_period,
                Payload::Timer { node: node.clone(), kind: TimerKind::Detector },
            );
        }
        if let Some(leader) = &initial_leader {
            bus.schedule(0, Payload::Timer { node: leader.clone(), kind: TimerKind::Init });
        }

        let agents = node_ids
            .iter()
            .map(|node| {
                (
                    node.clone(),
                    Agent::new(
                        node.clone(),
                        &node_ids,
                        scenario.heartbeat_period,
                        scenario.miss_threshold,
                        initial_leader.clone().unwrap_or_else(|| node.clone()),
                    ),
                )
            })
            .collect();
        let dms = node_ids
            .iter()
            .map(|node| {
                (node.clone(), crate::lifecycle::NodeDM::new(node.clone(), scenario.heartbeat_period))
            })
            .collect();

        Sim {
            bus,
            truth: ConfigurationState::initial(ctx.index, ctx.cluster),
            dms,
            agents,
            plan_counter: 0,
            pending_crashes: crashes.len(),
            unresolved: BTreeSet::new(),
            unrecoverable: false,
            infeasible_start: false,
            dispatched_any: false,
            crash_count: 0,
            audits: Vec::new(),
        }
    }

    fn online(&self, node: &NodeId) -> bool {
        self.truth.online(node)
    }

    fn busy(&self) -> bool {
        self.agents.values().any(|a| {
            self.truth.online(&a.node)
                && a.lead
                    .as_ref()
                    .is_some_and(|l| l.plan.is_some() || l.takeover.is_some())
        })
    }

    fn terminal(&self) -> bool {
        self.pending_crashes == 0 && self.unresolved.is_empty() && !self.busy()
    }

    fn run_loop(&mut self, ctx: &Ctx) -> Outcome {
        loop {
            let Some(ev) = self.bus.pop() else {
                return self.settled_outcome(ctx);
            };
            if ev.time > ctx.scenario.horizon {
                self.bus.now = ctx.scenario.horizon;
                self.truth.time = self.bus.now;
                self.bus.log(EventBody::HorizonExceeded {});
                return Outcome::HorizonExceeded;
            }
            self.bus.now = ev.time;
            self.truth.time = ev.time;
            match ev.payload {
                Payload::Crash(node) => self.handle_crash(&node, ctx),
                Payload::Timer { node, kind } => self.handle_timer(&node, kind, ctx),
                Payload::Deliver(env) => self.handle_deliver(*env, ctx),
            }
            if self.terminal() {
                return self.settled_outcome(ctx);
            }
        }
    }

    fn settled_outcome(&self, ctx: &Ctx) -> Outcome {
        if self.truth.all_active(ctx.index) {
            Outcome::Converged
        } else if self.infeasible_start && self.crash_count == 0 {
            Outcome::PlanInfeasible
        } else {
            Outcome::Unrecoverable
        }
    }

    fn handle_crash(&mut self, node: &NodeId, ctx: &Ctx) {
        self.pending_crashes -= 1;
        if !self.online(node) {
            return;
        }
        let severed =
            crash_node(&mut self.truth, node, ctx.index).expect("crash target is online");
        self.crash_count += 1;
        self.bus.log(EventBody::Crash { node: node.clone() });
        for connection in severed {
            self.bus.log(EventBody::ConnectionSevered { connection });
        }
        self.unresolved.insert(node.clone());
    }

    fn handle_timer(&mut self, node: &NodeId, kind: TimerKind, ctx: &Ctx) {
        if !self.online(node) {
            return;
        }
        let now = self.bus.now;
        let period = ctx.scenario.heartbeat_period;
        match kind {
            TimerKind::Init => {
                let replica = ConfigurationState::initial(ctx.index, ctx.cluster);
                self.agents.get_mut(node).unwrap().lead =
                    Some(LeadState::new(node.clone(), replica));
                self.reconcile(node, ctx);
            }
            TimerKind::Heartbeat => {
                if self.dms.get_mut(node).unwrap().heartbeat_due(now) {
                    self.bus.log(EventBody::Heartbeat { node: node.clone() });
                    let peers: Vec<NodeId> = self.agents[node]
                        .view
                        .iter()
                        .filter(|(n, s)| **s == NodeStatus::Online && *n != node)
                        .map(|(n, _)| n.clone())
                        .collect();
                    for peer in peers {
                        self.bus.send(node.clone(), peer, DmMessage::Heartbeat);
                    }
                }
                self.bus
                    .schedule(now + period, Payload::Timer { node: node.clone(), kind });
            }
            TimerKind::Detector => {
                let newly = self.agents.get_mut(node).unwrap().detector.detect(now);
                for suspect in newly {
                    self.handle_suspicion(node, &suspect, ctx);
                }
                self.bus
                    .schedule(now + period, Payload::Timer { node: node.clone(), kind });
            }
            TimerKind::TakeoverRetry => {
                let awaiting: Vec<NodeId> = match &self.agents[node].lead {
                    Some(lead) => match &lead.takeover {
                        Some(t) => t.awaiting.iter().cloned().collect(),
                        None => return,
                    },
                    None => return,
                };
                for peer in awaiting {
                    self.bus.log(EventBody::QueryState { from: node.clone(), to: peer.clone() });
                    self.bus.send(node.clone(), peer, DmMessage::QueryState);
                }
                self.bus
                    .schedule(now + period, Payload::Timer { node: node.clone(), kind });
            }
        }
    }

    fn handle_suspicion(&mut self, observer: &NodeId, suspect: &NodeId, ctx: &Ctx) {
        self.bus.log(EventBody::FailureDetected {
            observer: observer.clone(),
            suspect: suspect.clone(),
        });
        let now = self.bus.now;
        let agent = self.agents.get_mut(observer).unwrap();
        agent.view.insert(suspect.clone(), NodeStatus::Offline);
        let has_lead = agent.lead.is_some();
        let in_takeover = agent.lead.as_ref().is_some_and(|l| l.takeover.is_some());

        if has_lead && in_takeover {
            let mut out = Outbox::default();
            {
                let lead = self.agents.get_mut(observer).unwrap().lead.as_mut().unwrap();
                lead.takeover_note_offline(suspect, now, ctx.index, &mut out);
            }
            let finished = self.flush(observer, out, ctx);
            if finished {
                self.record_audit(observer, ctx);
                self.reconcile(observer, ctx);
            }
        } else if has_lead {
            self.incorporate_failure(observer, suspect, ctx);
        } else {
            let view = &self.agents[observer].view;
            if elect_leader(view).as_ref() == Ok(observer) {
                self.begin_takeover(observer, ctx);
            }
        }
    }

    /// A standing leader absorbs a worker failure: crash the replica,
    /// suspend any plan in flight, replan.
    fn incorporate_failure(&mut self, leader: &NodeId, dead: &NodeId, ctx: &Ctx) {
        let suspended = {
            let lead = self.agents.get_mut(leader).unwrap().lead.as_mut().unwrap();
            if !lead.replica.online(dead) {
                return;
            }
            let _ = crash_node(&mut lead.replica, dead, ctx.index);
            lead.plan.take().map(|run| run.id)
        };
        if let Some(plan) = suspended {
            self.bus.log(EventBody::PlanSuspended { plan, cause: dead.clone() });
        }
        self.reconcile(leader, ctx);
    }

    fn begin_takeover(&mut self, node: &NodeId, ctx: &Ctx) {
        let now = self.bus.now;
        self.bus.log(EventBody::LeaderClaim { node: node.clone() });
        let own_report = self.dms[node].state_report();
        let view = self.agents[node].view.clone();
        let lead = LeadState::take_over(node.clone(), view.clone(), own_report, ctx.index);
        let awaiting: Vec<NodeId> = lead
            .takeover
            .as_ref()
            .map(|t| t.awaiting.iter().cloned().collect())
            .unwrap_or_default();
        self.agents.get_mut(node).unwrap().lead = Some(lead);

        for (peer, status) in &view {
            if *status == NodeStatus::Online && peer != node {
                self.bus.send(node.clone(), peer.clone(), DmMessage::LeaderClaim);
            }
        }
        for peer in &awaiting {
            self.bus.log(EventBody::QueryState { from: node.clone(), to: peer.clone() });
            self.bus.send(node.clone(), peer.clone(), DmMessage::QueryState);
        }
        self.bus.schedule(
            now + ctx.scenario.heartbeat_period,
            Payload::Timer { node: node.clone(), kind: TimerKind::TakeoverRetry },
        );

        if awaiting.is_empty() {
            // Sole survivor: the replica is just this node's local truth.
            let mut out = Outbox::default();
            {
                let lead = self.agents.get_mut(node).unwrap().lead.as_mut().unwrap();
                lead.poll_takeover(now, ctx.index, &mut out);
            }
            let finished = self.flush(node, out, ctx);
            if finished {
                self.record_audit(node, ctx);
                self.reconcile(node, ctx);
            }
        }
    }

    fn handle_deliver(&mut self, env: Envelope, ctx: &Ctx) {
        if !self.online(&env.from) || !self.online(&env.to) {
            self.bus.log(EventBody::MsgDropped {
                from: env.from.clone(),
                to: env.to.clone(),
                msg: env.msg.label().to_owned(),
            });
            return;
        }
        let now = self.bus.now;
        match env.msg {
            DmMessage::Heartbeat => {
                self.agents
                    .get_mut(&env.to)
                    .unwrap()
                    .detector
                    .record_heartbeat(&env.from, now);
            }
            DmMessage::LeaderClaim => {
                self.agents.get_mut(&env.to).unwrap().known_leader = env.from;
            }
            DmMessage::QueryState => {
                let report = self.dms[&env.to].state_report();
                self.bus.log(EventBody::StateReport {
                    from: env.to.clone(),
                    to: env.from.clone(),
                    components: report.states.len(),
                });
                self.bus.send(env.to, env.from, DmMessage::StateReport(report));
            }
            DmMessage::StateReport(report) => {
                let Some(lead) = self.agents.get_mut(&env.to).and_then(|a| a.lead.as_mut())
                else {
                    return;
                };
                let mut out = Outbox::default();
                lead.on_state_report(env.from, report, now, ctx.index, &mut out);
                let finished = self.flush(&env.to, out, ctx);
                if finished {
                    self.record_audit(&env.to, ctx);
                    self.reconcile(&env.to, ctx);
                }
            }
            DmMessage::Dispatch { plan, phase, idx, action } => {
                let result = self
                    .dms
                    .get_mut(&env.to)
                    .unwrap()
                    .apply_action(&action, ctx.index);
                match &result {
                    Ok(ack) => {
                        let mirrored = self.truth.apply_action(&action, ctx.index);
                        debug_assert!(
                            mirrored.is_ok(),
                            "ground truth diverged on {action:?}: {mirrored:?}"
                        );
                        self.bus.log(EventBody::ActionAck {
                            plan,
                            node: env.to.clone(),
                            idx,
                            action: action.clone(),
                            result: *ack,
                        });
                    }
                    Err(refusal) => {
                        self.bus.log(EventBody::ActionRefused {
                            plan,
                            node: env.to.clone(),
                            action: action.clone(),
                            reason: refusal.clone(),
                        });
                    }
                }
                self.bus.send(
                    env.to,
                    env.from,
                    DmMessage::Ack(AckMsg { plan, phase, idx, action, result }),
                );
            }
            DmMessage::Ack(ack) => {
                let Some(lead) = self.agents.get_mut(&env.to).and_then(|a| a.lead.as_mut())
                else {
                    return;
                };
                let mut out = Outbox::default();
                lead.on_ack(now, ack, ctx.index, &mut out);
                self.flush(&env.to, out, ctx);
            }
        }
    }

    /// Performs the side effects a leader step produced, in order. Returns
    /// whether a takeover finished in this step.
    fn flush(&mut self, leader: &NodeId, out: Outbox, ctx: &Ctx) -> bool {
        for effect in out.effects {
            match effect {
                Effect::Log(body) => self.bus.log(body),
                Effect::Send { to, msg } => self.bus.send(leader.clone(), to, msg),
                Effect::Bookkeep { plan, idx, action } => {
                    let applied = self.truth.apply_action(&action, ctx.index);
                    debug_assert!(applied.is_ok(), "bookkeeping diverged: {applied:?}");
                    self.bus.log(EventBody::ActionAck {
                        plan,
                        node: leader.clone(),
                        idx,
                        action,
                        result: AckResult::Bookkeeping,
                    });
                }
            }
        }
        if out.plan_aborted {
            self.unrecoverable = true;
        }
        out.takeover_finished
    }

    fn record_audit(&mut self, leader: &NodeId, ctx: &Ctx) {
        let lead = self.agents[leader].lead.as_ref().unwrap();
        self.audits.push(TakeoverAudit {
            time: self.bus.now,
            leader: leader.clone(),
            replica: project(&lead.replica, ctx.index, &self.truth.node_status),
            truth: project(&self.truth, ctx.index, &self.truth.node_status),
        });
    }

    /// Drives the replica toward the all-active target: remap what must be
    /// remapped (surviving bindings pinned), then execute the diff. Called
    /// for the initial deployment, after every incorporated failure and
    /// after every takeover.
    fn reconcile(&mut self, leader: &NodeId, ctx: &Ctx) {
        let (seeds, recovery_mode, offline, result, old_binding) = {
            let lead = self.agents[leader].lead.as_ref().unwrap();
            // A component needs a fresh incarnation if it failed outright,
            // or if it is absent with no online node holding its virtual
            // node (it went down with its host, possibly with the previous
            // leader's plan state).
            let seeds: BTreeSet<ComponentId> = ctx
                .index
                .comp_ids
                .iter()
                .filter(|c| match lead.replica.state_of(c) {
                    ComponentState::Failed => true,
                    ComponentState::Absent => !lead
                        .replica
                        .mapping
                        .component_node(ctx.index, c)
                        .is_some_and(|n| lead.replica.online(n)),
                    _ => false,
                })
                .cloned()
                .collect();
            let offline: BTreeSet<NodeId> = lead
                .replica
                .node_status
                .iter()
                .filter(|(_, s)| **s == NodeStatus::Offline)
                .map(|(n, _)| n.clone())
                .collect();
            let recovery_mode = !offline.is_empty();
            let result = recover(ctx.index, ctx.cluster, &lead.replica);
            (seeds, recovery_mode, offline, result, lead.replica.mapping.binding.clone())
        };
        self.unresolved.retain(|n| !offline.contains(n));

        let impacted: Vec<ComponentId> =
            ctx.index.transitive_clients(&seeds).into_iter().collect();
        let failed: Vec<ComponentId> = seeds.iter().cloned().collect();

        match result {
            Ok(Recovery { mapping, plan }) => {
                let binding: BTreeMap<VnodeId, NodeId> = mapping
                    .binding
                    .iter()
                    .filter(|(v, n)| old_binding.get(*v) != Some(*n))
                    .map(|(v, n)| (v.clone(), n.clone()))
                    .collect();
                let mut out = Outbox::default();
                if recovery_mode {
                    out.log(EventBody::RecoveryPlanned { failed, impacted, binding });
                }
                self.truth.mapping = mapping.clone();
                // A failed incarnation died with its node; once its virtual
                // node is remapped onto a live one, the stale record clears
                // so the fresh instantiate is legal.
                for comp in &ctx.index.comp_ids {
                    if self.truth.state_of(comp) == ComponentState::Failed {
                        let node = mapping.component_node(ctx.index, comp);
                        if node.is_some_and(|n| self.truth.online(n)) {
                            self.truth.comp_states.insert(comp.clone(), ComponentState::Absent);
                        }
                    }
                }
                {
                    let lead = self.agents.get_mut(leader).unwrap().lead.as_mut().unwrap();
                    lead.replica.mapping = mapping;
                    if plan.is_empty() {
                        if recovery_mode {
                            self.plan_counter += 1;
                            out.log(EventBody::RecoveryComplete { plan: self.plan_counter });
                        }
                    } else {
                        self.plan_counter += 1;
                        let kind = if recovery_mode { PlanKind::Recovery } else { PlanKind::Deploy };
                        lead.start_plan(self.plan_counter, plan, kind, ctx.index, &mut out);
                        self.dispatched_any = true;
                    }
                }
                self.flush(leader, out, ctx);
            }
            Err(RecoveryError::NoSpareNode { vnode, kind, reason }) => {
                let mut out = Outbox::default();
                out.log(EventBody::Unrecoverable {
                    vnode,
                    node_kind: kind,
                    reason,
                    failed,
                    impacted: impacted.clone(),
                });
                self.unrecoverable = true;
                if self.crash_count == 0 && !self.dispatched_any {
                    self.infeasible_start = true;
                }
                {
                    let lead = self.agents.get_mut(leader).unwrap().lead.as_mut().unwrap();
                    let impacted_set: BTreeSet<ComponentId> = impacted.into_iter().collect();
                    let plan = degradation_plan(ctx.index, &lead.replica, &impacted_set);
                    if !plan.is_empty() {
                        self.plan_counter += 1;
                        lead.start_plan(
                            self.plan_counter,
                            plan,
                            PlanKind::Degradation,
                            ctx.index,
                            &mut out,
                        );
                        self.dispatched_any = true;
                    }
                }
                self.flush(leader, out, ctx);
            }
        }
    }
}

fn early_output(outcome: Outcome, app: &Application, cluster: &Cluster) -> RunOutput {
    let final_config = ConfigurationState {
        time: 0,
        comp_states: app
            .components
            .iter()
            .map(|c| (c.id.clone(), ComponentState::Absent))
            .collect(),
        mapping: Default::default(),
        connections: BTreeSet::new(),
        node_status: cluster.nodes.values().map(|n| (n.id.clone(), n.status)).collect(),
        processes: BTreeMap::new(),
    };
    let log = EventLog::default();
    let report = RunReport::from_log(outcome, &log, &final_config, 0);
    RunOutput { log, final_config, report, takeover_audits: Vec::new() }
}

/// Runs the full deployment simulation to quiescence or the horizon.
/// Deterministic: identical inputs and seed give byte-identical logs.
pub fn run(app: &Application, cluster: &Cluster, scenario: &Scenario) -> RunOutput {
    let index = match AppIndex::new(app) {
        Ok(index) => index,
        Err(_) => return early_output(Outcome::ValidationFailed, app, cluster),
    };
    if !check_label_flows(app).is_empty() {
        return early_output(Outcome::ValidationFailed, app, cluster);
    }
    for (node, _) in &scenario.crashes {
        if !cluster.nodes.contains_key(node) {
            return early_output(Outcome::ValidationFailed, app, cluster);
        }
    }
    let (dmin, dmax) = scenario.delay.bounds();
    // The detector tolerates at most (miss_threshold - 1) periods of delay
    // spread before it would suspect a healthy node.
    let safe_delay = scenario.heartbeat_period * scenario.miss_threshold.saturating_sub(1);
    if dmin > dmax || dmax > safe_delay {
        return early_output(Outcome::ValidationFailed, app, cluster);
    }

    let ctx = Ctx { index: &index, cluster, scenario };
    let mut sim = Sim::new(&ctx);
    let outcome = sim.run_loop(&ctx);
    let end_time = sim.bus.now;
    let report = RunReport::from_log(outcome, &sim.bus.log, &sim.truth, end_time);
    RunOutput {
        log: sim.bus.log,
        final_config: sim.truth,
        report,
        takeover_audits: sim.audits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicalNode;
    use crate::testutil::{nav_app, nav_cluster};

    fn no_crash_scenario() -> Scenario {
        Scenario { delay: DelayModel::Fixed(2), seed: 42, ..Default::default() }
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let app = nav_app();
        let cluster = nav_cluster();
        let scenario = no_crash_scenario();
        let a = run(&app, &cluster, &scenario);
        let b = run(&app, &cluster, &scenario);
        assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
        assert!(!a.log.is_empty());
    }

    #[test]
    fn no_crash_run_converges_all_active() {
        let app = nav_app();
        let out = run(&app, &nav_cluster(), &no_crash_scenario());
        assert_eq!(out.report.outcome, Outcome::Converged);
        assert!(out
            .final_config
            .comp_states
            .values()
            .all(|s| *s == ComponentState::Active));
        assert_eq!(out.report.recoveries, 0);
    }

    #[test]
    fn crash_with_spare_recovers() {
        let app = nav_app();
        let cluster = nav_cluster();
        // Find where gps lands, crash that node mid-steady-state.
        let index = AppIndex::new(&app).unwrap();
        let mapping = crate::planner::map_nodes(
            &index,
            &cluster,
            &crate::planner::NodeMapping::default(),
        )
        .unwrap();
        let gps_node = mapping.component_node(&index, &"gps".into()).unwrap().clone();
        let scenario = Scenario {
            crashes: vec![(gps_node, 500)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Converged);
        assert_eq!(out.report.failures, 1);
        assert_eq!(out.report.recoveries, 1);
        assert!(out.final_config.all_active(&index));
    }

    #[test]
    fn crash_without_spare_is_unrecoverable() {
        let mut app = nav_app();
        app.virtual_nodes.insert("vn2".into(), "gps-host".into());
        let mut cluster = nav_cluster();
        let mut n9 = PhysicalNode::new("n9", "gps-host", 1024, 1000);
        n9.hw_tags.insert("antenna".into());
        cluster.nodes.insert("n9".into(), n9);
        let scenario = Scenario {
            crashes: vec![("n9".into(), 300)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Unrecoverable);
        assert!(out
            .log
            .iter()
            .any(|e| matches!(e.body, EventBody::Unrecoverable { .. })));
        // The publisher keeps running, the impacted client is shut down.
        assert_eq!(
            out.final_config.state_of(&"sensor".into()),
            ComponentState::Active
        );
        assert_eq!(
            out.final_config.state_of(&"navdisplay".into()),
            ComponentState::Deactivated
        );
        assert_eq!(out.final_config.state_of(&"gps".into()), ComponentState::Failed);
    }

    #[test]
    fn crash_at_time_zero_without_spare_is_unrecoverable() {
        // The only node of the required kind dies before anything deploys.
        let mut app = nav_app();
        app.virtual_nodes.insert("vn2".into(), "gps-host".into());
        let mut cluster = nav_cluster();
        let mut n9 = PhysicalNode::new("n9", "gps-host", 1024, 1000);
        n9.hw_tags.insert("antenna".into());
        cluster.nodes.insert("n9".into(), n9);
        let scenario = Scenario {
            crashes: vec![("n9".into(), 0)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Unrecoverable);
        assert!(out
            .log
            .iter()
            .any(|e| matches!(e.body, EventBody::Unrecoverable { .. })));
    }

    #[test]
    fn crash_of_idle_node_is_an_empty_recovery() {
        let app = nav_app();
        let mut cluster = nav_cluster();
        cluster
            .nodes
            .insert("nidle".into(), PhysicalNode::new("nidle", "x86", 10, 10));
        let scenario = Scenario {
            crashes: vec![("nidle".into(), 300)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Converged);
        assert_eq!(out.report.recoveries, 1);
        // The recovery touched nothing.
        assert!(out.log.iter().any(|e| matches!(
            &e.body,
            EventBody::RecoveryPlanned { failed, impacted, .. }
                if failed.is_empty() && impacted.is_empty()
        )));
        let recovery_plans: Vec<u64> = out
            .log
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::PlanStarted { plan, recovery: true, .. } => Some(*plan),
                _ => None,
            })
            .collect();
        assert!(recovery_plans.is_empty(), "no recovery plan should be dispatched");
    }

    #[test]
    fn fixed_delay_delivers_after_exactly_that_many_units() {
        let mut bus = Bus::new(DelayModel::Fixed(2), 7);
        bus.now = 5;
        bus.send("a".into(), "b".into(), DmMessage::Heartbeat);
        let ev = bus.pop().unwrap();
        assert_eq!(ev.time, 7);
    }

    #[test]
    fn messages_to_crashed_nodes_are_dropped() {
        let app = nav_app();
        let cluster = nav_cluster();
        let scenario = Scenario {
            crashes: vec![("n3".into(), 6)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        assert!(out
            .log
            .iter()
            .any(|e| matches!(&e.body, EventBody::MsgDropped { to, .. } if to.as_str() == "n3")));
    }

    #[test]
    fn uniform_delays_replay_identically() {
        let app = nav_app();
        let cluster = nav_cluster();
        let scenario = Scenario {
            delay: DelayModel::Uniform { min: 1, max: 3 },
            seed: 1234,
            ..Default::default()
        };
        let a = run(&app, &cluster, &scenario);
        let b = run(&app, &cluster, &scenario);
        assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
    }

    #[test]
    fn clock_is_monotone_and_offline_nodes_receive_nothing() {
        let app = nav_app();
        let cluster = nav_cluster();
        let scenario = Scenario {
            crashes: vec![("n2".into(), 40)],
            ..no_crash_scenario()
        };
        let out = run(&app, &cluster, &scenario);
        let mut last = 0;
        let mut crashed_at = None;
        for event in out.log.iter() {
            assert!(event.t >= last);
            last = event.t;
            if let EventBody::Crash { node } = &event.body {
                crashed_at = Some((node.clone(), event.t));
            }
            if let EventBody::ActionAck { node, result, .. } = &event.body {
                if let Some((dead, t)) = &crashed_at {
                    if node == dead && event.t > *t {
                        assert_eq!(*result, AckResult::Bookkeeping);
                    }
                }
            }
        }
    }

    #[test]
    fn validation_failures_short_circuit() {
        let mut app = nav_app();
        app.dependencies.push(("gps".into(), "ghost".into()));
        let out = run(&app, &nav_cluster(), &Scenario::default());
        assert_eq!(out.report.outcome, Outcome::ValidationFailed);
        assert!(out.log.is_empty());
    }

    #[test]
    fn infeasible_cluster_reports_plan_infeasible() {
        let mut app = nav_app();
        for comp in &mut app.components {
            comp.mem_demand = 10_000;
        }
        let out = run(&app, &nav_cluster(), &Scenario::default());
        assert_eq!(out.report.outcome, Outcome::PlanInfeasible);
    }
}
