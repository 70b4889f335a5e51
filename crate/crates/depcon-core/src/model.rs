//! Application and cluster domain model.
//!
//! An application is a set of component instances with peer-to-peer
//! dependencies, publish/subscribe ports over named topics, a virtual-node
//! assignment for every component, and a collocation relation grouping
//! components into shared processes. A cluster is a set of physical nodes
//! with computation resources and an online/offline status.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(
    /// Identifier of a component instance, unique within an application.
    ComponentId
);
id_type!(
    /// Identifier of a physical cluster node.
    NodeId
);
id_type!(
    /// Identifier of a virtual node in the application model.
    VnodeId
);
id_type!(
    /// Identifier of a process group, named after its smallest member.
    GroupId
);

/// Direction of a component port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortKind {
    /// Provides a collection of operations (an interface).
    Facet,
    /// Requires operations from another component's facet.
    Receptacle,
    /// Publishes samples into a topic.
    Publisher,
    /// Consumes samples from a topic.
    Subscriber,
}

/// A named port. The contract is an interface name for facets and
/// receptacles, a topic name for publishers and subscribers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub kind: PortKind,
    pub contract: String,
}

/// Sensitivity levels in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Confidential,
    CompetitionSensitive,
    ManagementOnly,
}

/// A multi-domain security label. Labels in distinct domains are
/// incomparable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SecurityLabel {
    pub level: Level,
    pub domain: String,
}

impl SecurityLabel {
    pub fn new(level: Level, domain: impl Into<String>) -> Self {
        Self { level, domain: domain.into() }
    }

    /// `self` dominates `other` iff both share a domain and `self`'s level
    /// is at least `other`'s. Information may flow from a label to any label
    /// that dominates it.
    pub fn dominates(&self, other: &SecurityLabel) -> bool {
        self.domain == other.domain && self.level >= other.level
    }
}

impl fmt::Display for SecurityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.level, self.domain)
    }
}

/// One component instance of the application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentInstance {
    pub id: ComponentId,
    pub type_name: String,
    pub ports: Vec<Port>,
    /// Memory demand in bytes.
    pub mem_demand: u64,
    /// Processing demand in instructions per second.
    pub cpu_demand: u64,
    /// Hardware tags the hosting node must provide (sensors, DSP, ...).
    pub hw_required: BTreeSet<String>,
    pub label: SecurityLabel,
}

impl ComponentInstance {
    /// Minimal instance with no ports, no demands and a default label.
    pub fn new(id: impl Into<String>, type_name: impl Into<String>) -> Self {
        Self {
            id: ComponentId::new(id),
            type_name: type_name.into(),
            ports: Vec::new(),
            mem_demand: 0,
            cpu_demand: 0,
            hw_required: BTreeSet::new(),
            label: SecurityLabel::new(Level::Confidential, "default"),
        }
    }
}

/// The deployable unit: components, dependency pairs (client, server),
/// the virtual-node assignment, the collocation relation and the set of
/// virtual nodes with their kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    pub components: Vec<ComponentInstance>,
    /// Peer-to-peer dependencies as (client, server) pairs: the server
    /// services requests from the client.
    pub dependencies: Vec<(ComponentId, ComponentId)>,
    /// Virtual-node assignment, total over components.
    pub sigma: BTreeMap<ComponentId, VnodeId>,
    /// Collocation pairs; semantics are the symmetric-transitive closure.
    pub colloc: Vec<(ComponentId, ComponentId)>,
    /// Virtual node id to node-kind mapping.
    pub virtual_nodes: BTreeMap<VnodeId, String>,
}

impl Application {
    pub fn empty() -> Self {
        Self {
            components: Vec::new(),
            dependencies: Vec::new(),
            sigma: BTreeMap::new(),
            colloc: Vec::new(),
            virtual_nodes: BTreeMap::new(),
        }
    }

    pub fn component(&self, id: &ComponentId) -> Option<&ComponentInstance> {
        self.components.iter().find(|c| &c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Online,
    Offline,
}

/// A physical computing node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalNode {
    pub id: NodeId,
    pub kind: String,
    pub mem_capacity: u64,
    pub cpu_capacity: u64,
    pub hw_tags: BTreeSet<String>,
    pub status: NodeStatus,
}

impl PhysicalNode {
    pub fn new(id: impl Into<String>, kind: impl Into<String>, mem: u64, cpu: u64) -> Self {
        Self {
            id: NodeId::new(id),
            kind: kind.into(),
            mem_capacity: mem,
            cpu_capacity: cpu,
            hw_tags: BTreeSet::new(),
            status: NodeStatus::Online,
        }
    }
}

/// A bidirectional communication link between two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    /// Bytes per second.
    pub bandwidth: u64,
    pub encrypted: bool,
}

/// The set of physical nodes and links available for deployment. Links to
/// offline nodes are unusable; the effective connectivity graph changes as
/// nodes go offline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub nodes: BTreeMap<NodeId, PhysicalNode>,
    pub links: Vec<Link>,
}

impl Cluster {
    pub fn new(nodes: impl IntoIterator<Item = PhysicalNode>) -> Self {
        Self {
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            links: Vec::new(),
        }
    }

    pub fn online_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .values()
            .filter(|n| n.status == NodeStatus::Online)
            .map(|n| &n.id)
    }
}

/// A structural defect found in an application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    /// A component id or port name occurs more than once in its scope.
    DuplicateId { id: String },
    /// A relation entry names something that does not exist.
    DanglingReference { element: String, reference: String },
    /// The dependency relation contains a cycle; no deployment order exists.
    CyclicDependency { members: Vec<ComponentId> },
    /// A dependency pair has no (receptacle, facet) port pair with a common
    /// contract.
    UnmatchedDependencyPorts { client: ComponentId, server: ComponentId },
    /// Collocated components are assigned to different virtual nodes.
    CollocationNodeMismatch { a: ComponentId, b: ComponentId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "DuplicateId: {id}"),
            Violation::DanglingReference { element, reference } => {
                write!(f, "DanglingReference: {element} references missing {reference}")
            }
            Violation::CyclicDependency { members } => {
                let ids: Vec<&str> = members.iter().map(|m| m.as_str()).collect();
                write!(f, "CyclicDependency: [{}]", ids.join(", "))
            }
            Violation::UnmatchedDependencyPorts { client, server } => {
                write!(f, "UnmatchedDependencyPorts: {client} -> {server}")
            }
            Violation::CollocationNodeMismatch { a, b } => {
                write!(f, "CollocationNodeMismatch: {a} and {b}")
            }
        }
    }
}

/// Checks every structural invariant of an application and reports all
/// violations with the offending element ids. Pure: identical input yields
/// an identical report.
pub fn validate_application(app: &Application) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for comp in &app.components {
        if !seen.insert(comp.id.clone()) {
            violations.push(Violation::DuplicateId { id: comp.id.to_string() });
        }
        let mut port_names = BTreeSet::new();
        for port in &comp.ports {
            if !port_names.insert(port.name.as_str()) {
                violations.push(Violation::DuplicateId {
                    id: format!("{}.{}", comp.id, port.name),
                });
            }
        }
    }
    let ids: BTreeSet<&ComponentId> = app.components.iter().map(|c| &c.id).collect();

    for (client, server) in &app.dependencies {
        for end in [client, server] {
            if !ids.contains(end) {
                violations.push(Violation::DanglingReference {
                    element: format!("dependency ({client}, {server})"),
                    reference: end.to_string(),
                });
            }
        }
        if ids.contains(client) && ids.contains(server) && !ports_match(app, client, server) {
            violations.push(Violation::UnmatchedDependencyPorts {
                client: client.clone(),
                server: server.clone(),
            });
        }
    }

    for (a, b) in &app.colloc {
        for end in [a, b] {
            if !ids.contains(end) {
                violations.push(Violation::DanglingReference {
                    element: format!("colloc ({a}, {b})"),
                    reference: end.to_string(),
                });
            }
        }
    }

    for comp in &app.components {
        match app.sigma.get(&comp.id) {
            None => violations.push(Violation::DanglingReference {
                element: comp.id.to_string(),
                reference: format!("sigma({})", comp.id),
            }),
            Some(vnode) => {
                if !app.virtual_nodes.contains_key(vnode) {
                    violations.push(Violation::DanglingReference {
                        element: format!("sigma({})", comp.id),
                        reference: vnode.to_string(),
                    });
                }
            }
        }
    }
    for key in app.sigma.keys() {
        if !ids.contains(key) {
            violations.push(Violation::DanglingReference {
                element: "sigma".to_owned(),
                reference: key.to_string(),
            });
        }
    }

    // Collocated components must share a virtual node across the whole
    // closure of the relation, reported pairwise on the given pairs.
    for (a, b) in &app.colloc {
        if let (Some(va), Some(vb)) = (app.sigma.get(a), app.sigma.get(b)) {
            if va != vb {
                violations.push(Violation::CollocationNodeMismatch {
                    a: a.clone(),
                    b: b.clone(),
                });
            }
        }
    }

    if let Some(members) = dependency_cycle(app) {
        violations.push(Violation::CyclicDependency { members });
    }

    violations
}

fn ports_match(app: &Application, client: &ComponentId, server: &ComponentId) -> bool {
    matching_dependency_ports(app, client, server).is_some()
}

/// The lexicographically smallest (receptacle, facet) port pair with a
/// common contract for a dependency edge, if any.
pub fn matching_dependency_ports<'a>(
    app: &'a Application,
    client: &ComponentId,
    server: &ComponentId,
) -> Option<(&'a Port, &'a Port)> {
    let client = app.component(client)?;
    let server = app.component(server)?;
    let mut best: Option<(&Port, &Port)> = None;
    for r in client.ports.iter().filter(|p| p.kind == PortKind::Receptacle) {
        for f in server.ports.iter().filter(|p| p.kind == PortKind::Facet) {
            if r.contract == f.contract {
                let better = match best {
                    None => true,
                    Some((br, bf)) => (&r.name, &f.name) < (&br.name, &bf.name),
                };
                if better {
                    best = Some((r, f));
                }
            }
        }
    }
    best
}

/// Components left on a cycle of the dependency relation, if one exists.
/// Uses Kahn peeling: whatever cannot be peeled sits on or downstream of a
/// cycle; of those, only nodes on an actual cycle are reported.
fn dependency_cycle(app: &Application) -> Option<Vec<ComponentId>> {
    let ids: BTreeSet<&ComponentId> = app.components.iter().map(|c| &c.id).collect();
    // server -> clients; a client's in-degree counts its (existing) servers.
    let mut indegree: BTreeMap<&ComponentId, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut clients: BTreeMap<&ComponentId, Vec<&ComponentId>> = BTreeMap::new();
    for (client, server) in &app.dependencies {
        if ids.contains(client) && ids.contains(server) {
            *indegree.get_mut(client).unwrap() += 1;
            clients.entry(server).or_default().push(client);
        }
    }
    let mut ready: VecDeque<&ComponentId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut remaining = ids.len();
    while let Some(id) = ready.pop_front() {
        remaining -= 1;
        for client in clients.get(id).into_iter().flatten() {
            let d = indegree.get_mut(client).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push_back(client);
            }
        }
    }
    if remaining == 0 {
        return None;
    }
    // Restrict to components reachable from themselves among the residue.
    let residue: BTreeSet<&ComponentId> = indegree
        .iter()
        .filter(|(_, d)| **d > 0)
        .map(|(id, _)| *id)
        .collect();
    let mut members: Vec<ComponentId> = residue
        .iter()
        .filter(|id| on_cycle(id, &clients, &residue))
        .map(|id| (*id).clone())
        .collect();
    members.sort();
    Some(members)
}

fn on_cycle(
    start: &ComponentId,
    clients: &BTreeMap<&ComponentId, Vec<&ComponentId>>,
    residue: &BTreeSet<&ComponentId>,
) -> bool {
    let mut stack: Vec<&ComponentId> = clients
        .get(start)
        .into_iter()
        .flatten()
        .filter(|c| residue.contains(*c))
        .copied()
        .collect();
    let mut visited = BTreeSet::new();
    while let Some(id) = stack.pop() {
        if id == start {
            return true;
        }
        if visited.insert(id) {
            stack.extend(
                clients
                    .get(id)
                    .into_iter()
                    .flatten()
                    .filter(|c| residue.contains(*c)),
            );
        }
    }
    false
}

/// Partitions components into process groups: the connected components of
/// the symmetric collocation relation, singletons for unrelated components.
/// Groups are ordered by smallest member id, members sorted by id.
pub fn process_groups(app: &Application) -> Vec<Vec<ComponentId>> {
    let mut parent: BTreeMap<&ComponentId, &ComponentId> =
        app.components.iter().map(|c| (&c.id, &c.id)).collect();

    fn find<'a>(
        parent: &BTreeMap<&'a ComponentId, &'a ComponentId>,
        mut id: &'a ComponentId,
    ) -> &'a ComponentId {
        while parent[id] != id {
            id = parent[id];
        }
        id
    }

    for (a, b) in &app.colloc {
        if parent.contains_key(a) && parent.contains_key(b) {
            let ra = find(&parent, a);
            let rb = find(&parent, b);
            if ra != rb {
                // Root at the smaller id so group naming is stable.
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent.insert(hi, lo);
            }
        }
    }

    let mut groups: BTreeMap<&ComponentId, Vec<ComponentId>> = BTreeMap::new();
    for comp in &app.components {
        let root = find(&parent, &comp.id);
        groups.entry(root).or_default().push(comp.id.clone());
    }
    groups
        .into_values()
        .map(|mut members| {
            members.sort();
            members
        })
        .collect()
}

/// A total deployment order over the components: every server precedes all
/// of its clients; among ready components the smallest id goes first, so the
/// result is the lexicographically smallest topological order. Group
/// interactions over topics impose no ordering.
pub fn activation_order(app: &Application) -> Result<Vec<ComponentId>, Violation> {
    let ids: BTreeSet<&ComponentId> = app.components.iter().map(|c| &c.id).collect();
    let mut indegree: BTreeMap<&ComponentId, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut clients: BTreeMap<&ComponentId, Vec<&ComponentId>> = BTreeMap::new();
    for (client, server) in &app.dependencies {
        if ids.contains(client) && ids.contains(server) {
            *indegree.get_mut(client).unwrap() += 1;
            clients.entry(server).or_default().push(client);
        }
    }
    let mut ready: BTreeSet<&ComponentId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(next) = ready.iter().next().copied() {
        ready.remove(next);
        order.push(next.clone());
        for client in clients.get(next).into_iter().flatten() {
            let d = indegree.get_mut(client).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(client);
            }
        }
    }
    if order.len() != ids.len() {
        let members = dependency_cycle(app).unwrap_or_default();
        return Err(Violation::CyclicDependency { members });
    }
    Ok(order)
}

/// An established connection, keyed so that bookkeeping is canonical. The
/// dependency form records the chosen (receptacle, facet) pair; the topic
/// form records one endpoint registration, reflecting anonymous
/// publish/subscribe.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Connection {
    Dependency {
        client: ComponentId,
        client_port: String,
        server: ComponentId,
        server_port: String,
        contract: String,
    },
    Topic {
        component: ComponentId,
        port: String,
        topic: String,
    },
}

impl Connection {
    /// The component whose requirement this connection satisfies and on
    /// whose node the connect action executes.
    pub fn subject(&self) -> &ComponentId {
        match self {
            Connection::Dependency { client, .. } => client,
            Connection::Topic { component, .. } => component,
        }
    }

    /// True if either endpoint of the connection is the given component.
    pub fn touches(&self, id: &ComponentId) -> bool {
        match self {
            Connection::Dependency { client, server, .. } => client == id || server == id,
            Connection::Topic { component, .. } => component == id,
        }
    }
}

/// One process group with its virtual node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessGroup {
    pub id: GroupId,
    pub members: Vec<ComponentId>,
    pub vnode: VnodeId,
}

/// Derived, read-only views of a valid application used throughout the
/// engine: activation order, process groups, per-component required
/// connections and per-virtual-node resource demands.
#[derive(Debug, Clone)]
pub struct AppIndex {
    pub comp_ids: Vec<ComponentId>,
    pub activation: Vec<ComponentId>,
    pub groups: Vec<ProcessGroup>,
    pub group_of: BTreeMap<ComponentId, GroupId>,
    pub vnode_of: BTreeMap<ComponentId, VnodeId>,
    pub vnode_kind: BTreeMap<VnodeId, String>,
    pub comps_on_vnode: BTreeMap<VnodeId, Vec<ComponentId>>,
    /// Direct servers of a component: `(c, s)` pairs indexed by `c`.
    pub servers: BTreeMap<ComponentId, BTreeSet<ComponentId>>,
    /// Direct clients of a component: `(c, s)` pairs indexed by `s`.
    pub clients: BTreeMap<ComponentId, BTreeSet<ComponentId>>,
    /// Connections each component requires before it counts as connected.
    pub required: BTreeMap<ComponentId, BTreeSet<Connection>>,
    /// Memory demand per component, bytes.
    pub mem_demand: BTreeMap<ComponentId, u64>,
    /// Processing demand per component, instructions per second.
    pub cpu_demand: BTreeMap<ComponentId, u64>,
    pub hw_required: BTreeMap<ComponentId, BTreeSet<String>>,
    /// Publishers per topic, sorted.
    pub topic_publishers: BTreeMap<String, Vec<ComponentId>>,
    /// Subscribers per topic, sorted.
    pub topic_subscribers: BTreeMap<String, Vec<ComponentId>>,
}

impl AppIndex {
    /// Builds the index, validating the application first.
    pub fn new(app: &Application) -> Result<Self, Vec<Violation>> {
        let violations = validate_application(app);
        if !violations.is_empty() {
            return Err(violations);
        }
        let activation = activation_order(app).expect("validated app is acyclic");
        let comp_ids: Vec<ComponentId> = {
            let mut ids: Vec<_> = app.components.iter().map(|c| c.id.clone()).collect();
            ids.sort();
            ids
        };

        let groups: Vec<ProcessGroup> = process_groups(app)
            .into_iter()
            .map(|members| ProcessGroup {
                id: GroupId::new(members[0].as_str()),
                vnode: app.sigma[&members[0]].clone(),
                members,
            })
            .collect();
        let mut group_of = BTreeMap::new();
        for group in &groups {
            for member in &group.members {
                group_of.insert(member.clone(), group.id.clone());
            }
        }

        let mut servers: BTreeMap<ComponentId, BTreeSet<ComponentId>> = BTreeMap::new();
        let mut clients: BTreeMap<ComponentId, BTreeSet<ComponentId>> = BTreeMap::new();
        for (client, server) in &app.dependencies {
            servers.entry(client.clone()).or_default().insert(server.clone());
            clients.entry(server.clone()).or_default().insert(client.clone());
        }

        let mut required: BTreeMap<ComponentId, BTreeSet<Connection>> = BTreeMap::new();
        for comp in &app.components {
            required.entry(comp.id.clone()).or_default();
        }
        for (client, server) in &app.dependencies {
            let (r, f) = matching_dependency_ports(app, client, server)
                .expect("validated dependency has matching ports");
            required.get_mut(client).unwrap().insert(Connection::Dependency {
                client: client.clone(),
                client_port: r.name.clone(),
                server: server.clone(),
                server_port: f.name.clone(),
                contract: r.contract.clone(),
            });
        }
        for comp in &app.components {
            for port in &comp.ports {
                if matches!(port.kind, PortKind::Publisher | PortKind::Subscriber) {
                    required.get_mut(&comp.id).unwrap().insert(Connection::Topic {
                        component: comp.id.clone(),
                        port: port.name.clone(),
                        topic: port.contract.clone(),
                    });
                }
            }
        }

        let mut comps_on_vnode: BTreeMap<VnodeId, Vec<ComponentId>> = BTreeMap::new();
        for vnode in app.virtual_nodes.keys() {
            comps_on_vnode.entry(vnode.clone()).or_default();
        }
        for id in &comp_ids {
            comps_on_vnode.get_mut(&app.sigma[id]).unwrap().push(id.clone());
        }

        let mut mem_demand = BTreeMap::new();
        let mut cpu_demand = BTreeMap::new();
        let mut hw_required = BTreeMap::new();
        let mut topic_publishers: BTreeMap<String, Vec<ComponentId>> = BTreeMap::new();
        let mut topic_subscribers: BTreeMap<String, Vec<ComponentId>> = BTreeMap::new();
        for comp in &app.components {
            mem_demand.insert(comp.id.clone(), comp.mem_demand);
            cpu_demand.insert(comp.id.clone(), comp.cpu_demand);
            hw_required.insert(comp.id.clone(), comp.hw_required.clone());
            for port in &comp.ports {
                match port.kind {
                    PortKind::Publisher => topic_publishers
                        .entry(port.contract.clone())
                        .or_default()
                        .push(comp.id.clone()),
                    PortKind::Subscriber => topic_subscribers
                        .entry(port.contract.clone())
                        .or_default()
                        .push(comp.id.clone()),
                    _ => {}
                }
            }
        }
        for list in topic_publishers.values_mut().chain(topic_subscribers.values_mut()) {
            list.sort();
        }

        Ok(Self {
            comp_ids,
            activation,
            groups,
            group_of,
            vnode_of: app.sigma.clone(),
            vnode_kind: app.virtual_nodes.clone(),
            comps_on_vnode,
            servers,
            clients,
            required,
            mem_demand,
            cpu_demand,
            hw_required,
            topic_publishers,
            topic_subscribers,
        })
    }

    pub fn servers_of(&self, id: &ComponentId) -> impl Iterator<Item = &ComponentId> {
        self.servers.get(id).into_iter().flatten()
    }

    pub fn clients_of(&self, id: &ComponentId) -> impl Iterator<Item = &ComponentId> {
        self.clients.get(id).into_iter().flatten()
    }

    pub fn group(&self, id: &GroupId) -> &ProcessGroup {
        self.groups.iter().find(|g| &g.id == id).expect("known group")
    }

    /// Transitive closure of dependency clients of a seed set, excluding the
    /// seeds themselves.
    pub fn transitive_clients(&self, seeds: &BTreeSet<ComponentId>) -> BTreeSet<ComponentId> {
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<&ComponentId> = seeds.iter().collect();
        while let Some(id) = queue.pop_front() {
            for client in self.clients_of(id) {
                if !seeds.contains(client) && out.insert(client.clone()) {
                    queue.push_back(client);
                }
            }
        }
        out
    }
}
