//! File formats and rendering for the depcon command line.
//!
//! Applications, clusters and scenarios are ingested from JSON documents;
//! event logs are emitted as JSON lines. Parsing then re-serializing a
//! document is idempotent after one normalization pass (components and
//! relations come back sorted).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use depcon_core::model::{
    Application, Cluster, ComponentId, ComponentInstance, Level, Link, NodeId, PhysicalNode,
    Port, SecurityLabel, VnodeId,
};
use depcon_core::planner::{LinkFlow, NodeUtilization, Plan};
use depcon_core::report::RunReport;
use depcon_core::simnet::{DelayModel, Scenario};
use depcon_core::NodeMapping;

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read file: {e}"),
            LoadError::Json(e) => write!(f, "cannot parse JSON: {e}"),
        }
    }
}

fn default_type() -> String {
    "component".to_owned()
}

fn default_label() -> SecurityLabel {
    SecurityLabel::new(Level::Confidential, "default")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentDoc {
    pub id: String,
    #[serde(rename = "type", default = "default_type")]
    pub type_name: String,
    #[serde(default)]
    pub mem: u64,
    #[serde(default)]
    pub cpu: u64,
    #[serde(default)]
    pub hw: BTreeSet<String>,
    #[serde(default = "default_label")]
    pub label: SecurityLabel,
    #[serde(default)]
    pub ports: Vec<Port>,
}

/// Application document: components plus the dependency, collocation and
/// virtual-node relations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AppDoc {
    #[serde(default)]
    pub components: Vec<ComponentDoc>,
    #[serde(default)]
    pub dependencies: Vec<(String, String)>,
    #[serde(default)]
    pub colloc: Vec<(String, String)>,
    #[serde(default)]
    pub sigma: BTreeMap<String, String>,
    #[serde(default)]
    pub vnodes: BTreeMap<String, String>,
}

impl AppDoc {
    pub fn into_application(self) -> Application {
        Application {
            components: self
                .components
                .into_iter()
                .map(|c| ComponentInstance {
                    id: ComponentId::new(c.id),
                    type_name: c.type_name,
                    ports: c.ports,
                    mem_demand: c.mem,
                    cpu_demand: c.cpu,
                    hw_required: c.hw,
                    label: c.label,
                })
                .collect(),
            dependencies: self
                .dependencies
                .into_iter()
                .map(|(c, s)| (ComponentId::new(c), ComponentId::new(s)))
                .collect(),
            sigma: self
                .sigma
                .into_iter()
                .map(|(c, v)| (ComponentId::new(c), VnodeId::new(v)))
                .collect(),
            colloc: self
                .colloc
                .into_iter()
                .map(|(a, b)| (ComponentId::new(a), ComponentId::new(b)))
                .collect(),
            virtual_nodes: self
                .vnodes
                .into_iter()
                .map(|(v, k)| (VnodeId::new(v), k))
                .collect(),
        }
    }

    /// Normalized form of an application: components sorted by id,
    /// relations sorted.
    pub fn from_application(app: &Application) -> Self {
        let mut components: Vec<ComponentDoc> = app
            .components
            .iter()
            .map(|c| ComponentDoc {
                id: c.id.to_string(),
                type_name: c.type_name.clone(),
                mem: c.mem_demand,
                cpu: c.cpu_demand,
                hw: c.hw_required.clone(),
                label: c.label.clone(),
                ports: c.ports.clone(),
            })
            .collect();
        components.sort_by(|a, b| a.id.cmp(&b.id));
        let mut dependencies: Vec<(String, String)> = app
            .dependencies
            .iter()
            .map(|(c, s)| (c.to_string(), s.to_string()))
            .collect();
        dependencies.sort();
        dependencies.dedup();
        let mut colloc: Vec<(String, String)> = app
            .colloc
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        colloc.sort();
        colloc.dedup();
        Self {
            components,
            dependencies,
            colloc,
            sigma: app
                .sigma
                .iter()
                .map(|(c, v)| (c.to_string(), v.to_string()))
                .collect(),
            vnodes: app
                .virtual_nodes
                .iter()
                .map(|(v, k)| (v.to_string(), k.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub mem: u64,
    #[serde(default)]
    pub cpu: u64,
    #[serde(default)]
    pub hw: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClusterDoc {
    #[serde(default)]
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub links: Vec<(String, String, u64, bool)>,
}

impl ClusterDoc {
    pub fn into_cluster(self) -> Cluster {
        let mut cluster = Cluster::new(self.nodes.into_iter().map(|n| {
            let mut node = PhysicalNode::new(n.id, n.kind, n.mem, n.cpu);
            node.hw_tags = n.hw;
            node
        }));
        cluster.links = self
            .links
            .into_iter()
            .map(|(a, b, bandwidth, encrypted)| Link {
                a: NodeId::new(a),
                b: NodeId::new(b),
                bandwidth,
                encrypted,
            })
            .collect();
        cluster
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDoc {
    Fixed(u64),
    Range((u64, u64)),
}

impl Default for DelayDoc {
    fn default() -> Self {
        DelayDoc::Fixed(1)
    }
}

fn default_horizon() -> u64 {
    10_000
}

fn default_period() -> u64 {
    10
}

fn default_miss_threshold() -> u64 {
    3
}

/// Scenario document: scripted crashes, message delay, seed and horizon.
/// The failure detector's heartbeat period and miss threshold are
/// overridable and default to 10 time units and 3 misses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub crashes: Vec<(String, u64)>,
    #[serde(default)]
    pub delay: DelayDoc,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_period")]
    pub heartbeat_period: u64,
    #[serde(default = "default_miss_threshold")]
    pub miss_threshold: u64,
}

impl ScenarioDoc {
    pub fn into_scenario(self) -> Scenario {
        Scenario {
            crashes: self
                .crashes
                .into_iter()
                .map(|(n, t)| (NodeId::new(n), t))
                .collect(),
            delay: match self.delay {
                DelayDoc::Fixed(d) => DelayModel::Fixed(d),
                DelayDoc::Range((min, max)) => DelayModel::Uniform { min, max },
            },
            seed: self.seed,
            horizon: self.horizon,
            heartbeat_period: self.heartbeat_period,
            miss_threshold: self.miss_threshold,
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    serde_json::from_str(&text).map_err(LoadError::Json)
}

pub fn load_application(path: &Path) -> Result<Application, LoadError> {
    load_json::<AppDoc>(path).map(AppDoc::into_application)
}

pub fn load_cluster(path: &Path) -> Result<Cluster, LoadError> {
    load_json::<ClusterDoc>(path).map(ClusterDoc::into_cluster)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, LoadError> {
    load_json::<ScenarioDoc>(path).map(ScenarioDoc::into_scenario)
}

/// Everything `plan` prints: the binding, per-node utilization, the
/// informational per-link flow counts and the phased plan.
#[derive(Debug, Serialize)]
pub struct PlanOutput {
    pub mapping: NodeMapping,
    pub utilization: Vec<NodeUtilization>,
    pub link_flows: Vec<LinkFlow>,
    pub plan: Plan,
}

pub fn render_plan_text(out: &PlanOutput) -> String {
    let mut s = String::new();
    s.push_str("mapping:\n");
    for (vnode, node) in &out.mapping.binding {
        let _ = writeln!(s, "  {vnode} -> {node}");
    }
    s.push_str("utilization:\n");
    for n in &out.utilization {
        let _ = writeln!(
            s,
            "  {}: mem {}/{} ({:.3}), cpu {}/{} ({:.3})",
            n.node, n.mem_used, n.mem_capacity, n.mem_utilization, n.cpu_used, n.cpu_capacity,
            n.cpu_utilization
        );
    }
    let _ = writeln!(s, "plan ({} phases):", out.plan.phases.len());
    for phase in &out.plan.phases {
        let _ = writeln!(s, "  phase {:?} ({} actions):", phase.phase, phase.actions.len());
        for action in &phase.actions {
            let _ = writeln!(
                s,
                "    {}",
                serde_json::to_string(action).expect("action serializes")
            );
        }
    }
    s
}

pub fn render_report_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "outcome: {:?}", report.outcome);
    let _ = writeln!(
        s,
        "actions: {}  failures: {}  recoveries: {}",
        report.actions, report.failures, report.recoveries
    );
    match report.converged_at {
        Some(t) => {
            let _ = writeln!(s, "end_time: {}  converged_at: {}", report.end_time, t);
        }
        None => {
            let _ = writeln!(s, "end_time: {}", report.end_time);
        }
    }
    s.push_str("components:\n");
    for (comp, state) in &report.components {
        let _ = writeln!(s, "  {comp}: {state:?}");
    }
    s
}
