//! Node mapping, feasibility and label-flow checks, and plan synthesis.
//!
//! Plans are phased: a phase's actions may run in any order, but no action
//! of the next phase is dispatched until every action of the current phase
//! is acknowledged. Deployment runs start-process, instantiate, connect,
//! activate; teardown runs the exact reverse.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lifecycle::{ComponentState, ConfigurationState};
use crate::model::{
    AppIndex, Application, Cluster, ComponentId, Connection, GroupId, NodeId, NodeStatus,
    PortKind, SecurityLabel, VnodeId,
};

/// Binding of virtual nodes to physical nodes. Not necessarily injective:
/// two virtual nodes may share a physical node when resources permit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeMapping {
    pub binding: BTreeMap<VnodeId, NodeId>,
}

impl NodeMapping {
    pub fn node_of(&self, vnode: &VnodeId) -> Option<&NodeId> {
        self.binding.get(vnode)
    }

    /// Physical node a component is bound to, through its virtual node.
    pub fn component_node<'a>(&'a self, index: &AppIndex, comp: &ComponentId) -> Option<&'a NodeId> {
        self.binding.get(&index.vnode_of[comp])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityReason {
    KindMismatch,
    MissingHardware,
    InsufficientMemory,
    InsufficientCpu,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum PlanError {
    #[error("NoFeasibleNode: virtual node {vnode} ({reason:?})")]
    NoFeasibleNode { vnode: VnodeId, reason: FeasibilityReason },
    #[error("UnknownComponent: {0}")]
    UnknownComponent(ComponentId),
}

/// Phases of deployment and teardown, in dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Deactivate,
    Disconnect,
    Destroy,
    StopProcess,
    StartProcess,
    Instantiate,
    Connect,
    Activate,
}

/// One deployment action, executed by the manager on `node`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DeployAction {
    StartProcess { group: GroupId, node: NodeId },
    Instantiate { component: ComponentId, node: NodeId },
    Connect { connection: Connection, node: NodeId },
    Activate { component: ComponentId, node: NodeId },
    Deactivate { component: ComponentId, node: NodeId },
    Disconnect { connection: Connection, node: NodeId },
    Destroy { component: ComponentId, node: NodeId },
    StopProcess { group: GroupId, node: NodeId },
}

impl DeployAction {
    pub fn node(&self) -> &NodeId {
        match self {
            DeployAction::StartProcess { node, .. }
            | DeployAction::Instantiate { node, .. }
            | DeployAction::Connect { node, .. }
            | DeployAction::Activate { node, .. }
            | DeployAction::Deactivate { node, .. }
            | DeployAction::Disconnect { node, .. }
            | DeployAction::Destroy { node, .. }
            | DeployAction::StopProcess { node, .. } => node,
        }
    }

    /// The component whose state the action changes, if any.
    pub fn component(&self) -> Option<&ComponentId> {
        match self {
            DeployAction::Instantiate { component, .. }
            | DeployAction::Activate { component, .. }
            | DeployAction::Deactivate { component, .. }
            | DeployAction::Destroy { component, .. } => Some(component),
            DeployAction::Connect { connection, .. }
            | DeployAction::Disconnect { connection, .. } => Some(connection.subject()),
            _ => None,
        }
    }

    pub fn phase_kind(&self) -> PhaseKind {
        match self {
            DeployAction::StartProcess { .. } => PhaseKind::StartProcess,
            DeployAction::Instantiate { .. } => PhaseKind::Instantiate,
            DeployAction::Connect { .. } => PhaseKind::Connect,
            DeployAction::Activate { .. } => PhaseKind::Activate,
            DeployAction::Deactivate { .. } => PhaseKind::Deactivate,
            DeployAction::Disconnect { .. } => PhaseKind::Disconnect,
            DeployAction::Destroy { .. } => PhaseKind::Destroy,
            DeployAction::StopProcess { .. } => PhaseKind::StopProcess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPhase {
    pub phase: PhaseKind,
    pub actions: Vec<DeployAction>,
}

/// An ordered list of phases with a barrier between consecutive phases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub phases: Vec<PlanPhase>,
}

impl Plan {
    pub fn is_empty(&self) -> bool {
        self.phases.iter().all(|p| p.actions.is_empty())
    }

    pub fn action_count(&self) -> usize {
        self.phases.iter().map(|p| p.actions.len()).sum()
    }

    pub fn actions(&self) -> impl Iterator<Item = &DeployAction> {
        self.phases.iter().flat_map(|p| p.actions.iter())
    }

    fn push(&mut self, phase: PhaseKind, actions: Vec<DeployAction>) {
        self.phases.push(PlanPhase { phase, actions });
    }
}

struct VnodeDemand {
    mem: u64,
    cpu: u64,
    hw: BTreeSet<String>,
}

fn vnode_demand(index: &AppIndex, vnode: &VnodeId) -> VnodeDemand {
    let mut demand = VnodeDemand { mem: 0, cpu: 0, hw: BTreeSet::new() };
    for comp in &index.comps_on_vnode[vnode] {
        demand.mem += index.mem_demand[comp];
        demand.cpu += index.cpu_demand[comp];
        demand.hw.extend(index.hw_required[comp].iter().cloned());
    }
    demand
}

/// Extends `pinned` to a total mapping of virtual nodes onto online
/// physical nodes of equal kind, sufficient hardware tags and enough
/// remaining memory and processing capacity.
///
/// Deterministic first-fit-decreasing: virtual nodes are placed in order of
/// descending total memory demand (ties by id), candidate nodes are scanned
/// in ascending id. Bindings present in `pinned` are kept unchanged, so
/// replanning after a failure preserves surviving assignments.
pub fn map_nodes(
    index: &AppIndex,
    cluster: &Cluster,
    pinned: &NodeMapping,
) -> Result<NodeMapping, PlanError> {
    let mut remaining: BTreeMap<&NodeId, (u64, u64)> = cluster
        .nodes
        .values()
        .filter(|n| n.status == NodeStatus::Online)
        .map(|n| (&n.id, (n.mem_capacity, n.cpu_capacity)))
        .collect();

    let mut binding = NodeMapping::default();
    for (vnode, node) in &pinned.binding {
        let demand = vnode_demand(index, vnode);
        if let Some((mem, cpu)) = remaining.get_mut(node) {
            *mem = mem.saturating_sub(demand.mem);
            *cpu = cpu.saturating_sub(demand.cpu);
        }
        binding.binding.insert(vnode.clone(), node.clone());
    }

    let mut todo: Vec<(&VnodeId, VnodeDemand)> = index
        .vnode_kind
        .keys()
        .filter(|v| !pinned.binding.contains_key(*v))
        .map(|v| (v, vnode_demand(index, v)))
        .collect();
    todo.sort_by(|(va, da), (vb, db)| db.mem.cmp(&da.mem).then_with(|| va.cmp(vb)));

    for (vnode, demand) in todo {
        let kind = &index.vnode_kind[vnode];
        let mut deepest = FeasibilityReason::KindMismatch;
        let mut chosen = None;
        for node in cluster.nodes.values() {
            if node.status != NodeStatus::Online || &node.kind != kind {
                continue;
            }
            deepest = deepest.max(FeasibilityReason::MissingHardware);
            if !demand.hw.is_subset(&node.hw_tags) {
                continue;
            }
            deepest = deepest.max(FeasibilityReason::InsufficientMemory);
            let (mem, cpu) = remaining[&node.id];
            if mem < demand.mem {
                continue;
            }
            deepest = deepest.max(FeasibilityReason::InsufficientCpu);
            if cpu < demand.cpu {
                continue;
            }
            chosen = Some(node.id.clone());
            break;
        }
        match chosen {
            Some(node) => {
                let (mem, cpu) = remaining.get_mut(&node).unwrap();
                *mem -= demand.mem;
                *cpu -= demand.cpu;
                binding.binding.insert(vnode.clone(), node);
            }
            None => {
                return Err(PlanError::NoFeasibleNode {
                    vnode: vnode.clone(),
                    reason: deepest,
                })
            }
        }
    }
    Ok(binding)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResourceViolation {
    InsufficientMemory { needed: u64, capacity: u64 },
    InsufficientCpu { needed: u64, capacity: u64 },
    MissingHardware { component: ComponentId, missing: BTreeSet<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeUtilization {
    pub node: NodeId,
    pub mem_used: u64,
    pub mem_capacity: u64,
    pub mem_utilization: f64,
    pub cpu_used: u64,
    pub cpu_capacity: u64,
    pub cpu_utilization: f64,
    pub violations: Vec<ResourceViolation>,
}

/// Declared cross-node flows routed over a link. Informational only: the
/// input model declares no per-flow bandwidth demands, so link capacity is
/// reported, not enforced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkFlow {
    pub a: NodeId,
    pub b: NodeId,
    pub flows: u64,
    pub bandwidth: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceReport {
    pub nodes: Vec<NodeUtilization>,
    pub link_flows: Vec<LinkFlow>,
}

impl ResourceReport {
    pub fn ok(&self) -> bool {
        self.nodes.iter().all(|n| n.violations.is_empty())
    }
}

fn ratio(used: u64, capacity: u64) -> f64 {
    if capacity == 0 {
        if used == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        used as f64 / capacity as f64
    }
}

/// Per-node resource utilization under a total mapping, with one entry per
/// bound node and a violation record for each exceeded dimension.
pub fn check_resources(
    index: &AppIndex,
    mapping: &NodeMapping,
    cluster: &Cluster,
) -> ResourceReport {
    let mut hosted: BTreeMap<&NodeId, Vec<&ComponentId>> = BTreeMap::new();
    for (vnode, node) in &mapping.binding {
        for comp in &index.comps_on_vnode[vnode] {
            hosted.entry(node).or_default().push(comp);
        }
        hosted.entry(node).or_default();
    }

    let mut nodes = Vec::new();
    for (node_id, comps) in hosted {
        let Some(node) = cluster.nodes.get(node_id) else { continue };
        let mem_used: u64 = comps.iter().map(|c| index.mem_demand[*c]).sum();
        let cpu_used: u64 = comps.iter().map(|c| index.cpu_demand[*c]).sum();
        let mut violations = Vec::new();
        if mem_used > node.mem_capacity {
            violations.push(ResourceViolation::InsufficientMemory {
                needed: mem_used,
                capacity: node.mem_capacity,
            });
        }
        if cpu_used > node.cpu_capacity {
            violations.push(ResourceViolation::InsufficientCpu {
                needed: cpu_used,
                capacity: node.cpu_capacity,
            });
        }
        for comp in &comps {
            let missing: BTreeSet<String> = index.hw_required[*comp]
                .difference(&node.hw_tags)
                .cloned()
                .collect();
            if !missing.is_empty() {
                violations.push(ResourceViolation::MissingHardware {
                    component: (*comp).clone(),
                    missing,
                });
            }
        }
        nodes.push(NodeUtilization {
            node: node_id.clone(),
            mem_used,
            mem_capacity: node.mem_capacity,
            mem_utilization: ratio(mem_used, node.mem_capacity),
            cpu_used,
            cpu_capacity: node.cpu_capacity,
            cpu_utilization: ratio(cpu_used, node.cpu_capacity),
            violations,
        });
    }

    let node_of = |comp: &ComponentId| mapping.binding.get(&index.vnode_of[comp]);
    let mut per_link: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
    let mut count_flow = |a: Option<&NodeId>, b: Option<&NodeId>| {
        if let (Some(a), Some(b)) = (a, b) {
            if a != b {
                let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                *per_link.entry(key).or_insert(0) += 1;
            }
        }
    };
    for (client, servers) in &index.servers {
        for server in servers {
            count_flow(node_of(client), node_of(server));
        }
    }
    for (topic, publishers) in &index.topic_publishers {
        for publisher in publishers {
            for subscriber in index.topic_subscribers.get(topic).into_iter().flatten() {
                count_flow(node_of(publisher), node_of(subscriber));
            }
        }
    }
    let link_flows = cluster
        .links
        .iter()
        .map(|link| {
            let key = if link.a < link.b {
                (link.a.clone(), link.b.clone())
            } else {
                (link.b.clone(), link.a.clone())
            };
            LinkFlow {
                a: link.a.clone(),
                b: link.b.clone(),
                flows: per_link.get(&key).copied().unwrap_or(0),
                bandwidth: link.bandwidth,
            }
        })
        .collect();

    ResourceReport { nodes, link_flows }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowPath {
    /// Client-to-server direction of a dependency edge.
    DependencyRequest,
    /// Server-to-client direction of a dependency edge.
    DependencyReply,
    /// Publisher-to-subscriber sample flow over the named topic.
    Topic(String),
}

/// An information flow whose receiver does not dominate the sender.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FlowViolation {
    pub sender: ComponentId,
    pub sender_label: SecurityLabel,
    pub receiver: ComponentId,
    pub receiver_label: SecurityLabel,
    pub via: FlowPath,
}

impl std::fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "FlowViolation: {} ({}) -> {} ({}) via {:?}",
            self.sender, self.sender_label, self.receiver, self.receiver_label, self.via
        )
    }
}

/// Audits every information-flow edge of the application against the
/// domination rule: a flow is valid only if the receiver's label dominates
/// the sender's. Dependency edges carry both a request and a reply flow, so
/// client and server must dominate each other; topic edges flow from each
/// publisher to each subscriber.
pub fn check_label_flows(app: &Application) -> Vec<FlowViolation> {
    let label = |id: &ComponentId| app.component(id).map(|c| c.label.clone());
    let mut violations = BTreeSet::new();
    let mut check = |sender: &ComponentId, receiver: &ComponentId, via: FlowPath| {
        if let (Some(sl), Some(rl)) = (label(sender), label(receiver)) {
            if !rl.dominates(&sl) {
                violations.insert(FlowViolation {
                    sender: sender.clone(),
                    sender_label: sl,
                    receiver: receiver.clone(),
                    receiver_label: rl,
                    via,
                });
            }
        }
    };

    for (client, server) in &app.dependencies {
        check(client, server, FlowPath::DependencyRequest);
        check(server, client, FlowPath::DependencyReply);
    }

    let mut publishers: BTreeMap<&str, Vec<&ComponentId>> = BTreeMap::new();
    let mut subscribers: BTreeMap<&str, Vec<&ComponentId>> = BTreeMap::new();
    for comp in &app.components {
        for port in &comp.ports {
            match port.kind {
                PortKind::Publisher => {
                    publishers.entry(&port.contract).or_default().push(&comp.id)
                }
                PortKind::Subscriber => {
                    subscribers.entry(&port.contract).or_default().push(&comp.id)
                }
                _ => {}
            }
        }
    }
    for (topic, pubs) in &publishers {
        for publisher in pubs {
            for subscriber in subscribers.get(topic).into_iter().flatten() {
                check(publisher, subscriber, FlowPath::Topic((*topic).to_string()));
            }
        }
    }

    violations.into_iter().collect()
}

fn deploy_phases(
    index: &AppIndex,
    mapping: &NodeMapping,
    starts: &BTreeSet<GroupId>,
    installs: &BTreeSet<ComponentId>,
    connects: &BTreeSet<Connection>,
    activates: &BTreeSet<ComponentId>,
) -> Vec<PlanPhase> {
    let node_of = |comp: &ComponentId| mapping.binding[&index.vnode_of[comp]].clone();

    let start_actions = index
        .groups
        .iter()
        .filter(|g| starts.contains(&g.id))
        .map(|g| DeployAction::StartProcess {
            group: g.id.clone(),
            node: mapping.binding[&g.vnode].clone(),
        })
        .collect();

    let instantiate_actions = installs
        .iter()
        .map(|c| DeployAction::Instantiate { component: c.clone(), node: node_of(c) })
        .collect();

    let connect_actions = connects
        .iter()
        .map(|conn| DeployAction::Connect {
            node: node_of(conn.subject()),
            connection: conn.clone(),
        })
        .collect();

    let activate_actions = index
        .activation
        .iter()
        .filter(|c| activates.contains(*c))
        .map(|c| DeployAction::Activate { component: c.clone(), node: node_of(c) })
        .collect();

    vec![
        PlanPhase { phase: PhaseKind::StartProcess, actions: start_actions },
        PlanPhase { phase: PhaseKind::Instantiate, actions: instantiate_actions },
        PlanPhase { phase: PhaseKind::Connect, actions: connect_actions },
        PlanPhase { phase: PhaseKind::Activate, actions: activate_actions },
    ]
}

fn teardown_phases(
    index: &AppIndex,
    config: &ConfigurationState,
    deactivates: &BTreeSet<ComponentId>,
    disconnects: &BTreeSet<Connection>,
    destroys: &BTreeSet<ComponentId>,
    stops: &BTreeSet<GroupId>,
) -> Vec<PlanPhase> {
    let node_of = |comp: &ComponentId| {
        config
            .mapping
            .binding
            .get(&index.vnode_of[comp])
            .expect("deployed component has a binding")
            .clone()
    };

    // Clients are shut down before the servers they depend on.
    let deactivate_actions = index
        .activation
        .iter()
        .rev()
        .filter(|c| deactivates.contains(*c))
        .map(|c| DeployAction::Deactivate { component: c.clone(), node: node_of(c) })
        .collect();

    let disconnect_actions = disconnects
        .iter()
        .map(|conn| DeployAction::Disconnect {
            node: node_of(conn.subject()),
            connection: conn.clone(),
        })
        .collect();

    let destroy_actions = index
        .activation
        .iter()
        .rev()
        .filter(|c| destroys.contains(*c))
        .map(|c| DeployAction::Destroy { component: c.clone(), node: node_of(c) })
        .collect();

    let stop_actions = config
        .processes
        .iter()
        .filter(|(group, _)| stops.contains(group))
        .map(|(group, node)| DeployAction::StopProcess {
            group: group.clone(),
            node: node.clone(),
        })
        .collect();

    vec![
        PlanPhase { phase: PhaseKind::Deactivate, actions: deactivate_actions },
        PlanPhase { phase: PhaseKind::Disconnect, actions: disconnect_actions },
        PlanPhase { phase: PhaseKind::Destroy, actions: destroy_actions },
        PlanPhase { phase: PhaseKind::StopProcess, actions: stop_actions },
    ]
}

/// Synthesizes the full deployment plan for a freshly mapped application:
/// start every process group on its bound node, instantiate every
/// component, establish every connection, then activate in dependency
/// order.
pub fn synth_plan(index: &AppIndex, mapping: &NodeMapping) -> Plan {
    let starts: BTreeSet<GroupId> = index.groups.iter().map(|g| g.id.clone()).collect();
    let installs: BTreeSet<ComponentId> = index.comp_ids.iter().cloned().collect();
    let connects: BTreeSet<Connection> =
        index.required.values().flat_map(|set| set.iter().cloned()).collect();
    let activates = installs.clone();
    Plan { phases: deploy_phases(index, mapping, &starts, &installs, &connects, &activates) }
}

/// Synthesizes teardown actions for a subset of deployed components, in the
/// exact reverse phase order of deployment. Deactivation runs in reverse
/// activation order; a process stops only when all of its components are
/// being destroyed.
pub fn synth_teardown(
    index: &AppIndex,
    config: &ConfigurationState,
    subset: &BTreeSet<ComponentId>,
) -> Result<Plan, PlanError> {
    for comp in subset {
        if !index.vnode_of.contains_key(comp) {
            return Err(PlanError::UnknownComponent(comp.clone()));
        }
    }

    let deactivates: BTreeSet<ComponentId> = subset
        .iter()
        .filter(|c| config.state_of(c) == ComponentState::Active)
        .cloned()
        .collect();
    let disconnects: BTreeSet<Connection> = config
        .connections
        .iter()
        .filter(|conn| subset.iter().any(|c| conn.touches(c)))
        .cloned()
        .collect();
    let destroys: BTreeSet<ComponentId> = subset
        .iter()
        .filter(|c| config.state_of(c) != ComponentState::Absent)
        .cloned()
        .collect();
    let stops: BTreeSet<GroupId> = index
        .groups
        .iter()
        .filter(|g| g.members.iter().all(|m| subset.contains(m)))
        .map(|g| g.id.clone())
        .collect();

    Ok(Plan {
        phases: teardown_phases(index, config, &deactivates, &disconnects, &destroys, &stops),
    })
}

/// Computes the minimal phased action list that takes `current` to the
/// all-active configuration under `target`: teardown (in teardown order)
/// for components whose binding or state must change, deployment actions
/// for components to create or re-create, reconnects for surviving clients
/// of moved servers. Components already active on their target node are
/// untouched. Empty phases are omitted.
pub fn diff_plans(
    index: &AppIndex,
    current: &ConfigurationState,
    target: &NodeMapping,
) -> Plan {
    let state = |c: &ComponentId| current.state_of(c);
    let current_node = |c: &ComponentId| current.mapping.binding.get(&index.vnode_of[c]);
    let target_node = |c: &ComponentId| &target.binding[&index.vnode_of[c]];

    // Components that need a fresh incarnation: failed ones, and live ones
    // whose binding moved.
    let fresh: BTreeSet<ComponentId> = index
        .comp_ids
        .iter()
        .filter(|c| match state(c) {
            ComponentState::Failed => true,
            ComponentState::Absent => false,
            _ => current_node(c) != Some(target_node(c)),
        })
        .cloned()
        .collect();

    let impacted = index.transitive_clients(&fresh);
    let impacted_active: BTreeSet<ComponentId> = impacted
        .iter()
        .filter(|c| state(c) == ComponentState::Active)
        .cloned()
        .collect();

    let deactivates: BTreeSet<ComponentId> = fresh
        .iter()
        .filter(|c| state(c) == ComponentState::Active)
        .chain(impacted_active.iter())
        .cloned()
        .collect();
    let disconnects: BTreeSet<Connection> = current
        .connections
        .iter()
        .filter(|conn| fresh.iter().any(|c| conn.touches(c)))
        .cloned()
        .collect();
    let destroys: BTreeSet<ComponentId> = fresh
        .iter()
        .filter(|c| state(c) != ComponentState::Absent)
        .cloned()
        .collect();
    let stops: BTreeSet<GroupId> = index
        .groups
        .iter()
        .filter(|g| g.members.iter().all(|m| fresh.contains(m)))
        .map(|g| g.id.clone())
        .collect();

    let installs: BTreeSet<ComponentId> = index
        .comp_ids
        .iter()
        .filter(|c| fresh.contains(*c) || state(c) == ComponentState::Absent)
        .cloned()
        .collect();
    let starts: BTreeSet<GroupId> = index
        .groups
        .iter()
        .filter(|g| {
            g.members.iter().any(|m| installs.contains(m))
                && !current
                    .processes
                    .get(&g.id)
                    .is_some_and(|node| node == &target.binding[&g.vnode])
        })
        .map(|g| g.id.clone())
        .collect();

    let established_after: BTreeSet<&Connection> =
        current.connections.difference(&disconnects).collect();
    let connects: BTreeSet<Connection> = index
        .required
        .values()
        .flat_map(|set| set.iter())
        .filter(|conn| !established_after.contains(*conn))
        .cloned()
        .collect();

    let activates: BTreeSet<ComponentId> = index
        .comp_ids
        .iter()
        .filter(|c| {
            installs.contains(*c)
                || deactivates.contains(*c)
                || state(c) != ComponentState::Active
        })
        .cloned()
        .collect();

    let mut plan = Plan::default();
    for phase in teardown_phases(index, current, &deactivates, &disconnects, &destroys, &stops)
        .into_iter()
        .chain(deploy_phases(index, target, &starts, &installs, &connects, &activates))
    {
        if !phase.actions.is_empty() {
            plan.push(phase.phase, phase.actions);
        }
    }
    plan
}
