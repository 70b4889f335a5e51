//! Failure detection and recovery planning.
//!
//! A node is suspected once it has been silent for more than
//! `miss_threshold` heartbeat periods (strict inequality). Recovery remaps
//! the failed node's virtual nodes onto surviving kind-equal nodes while
//! pinning every surviving binding, then reconfigures exactly the affected
//! application subgraph.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::lifecycle::ConfigurationState;
use crate::model::{AppIndex, Cluster, ComponentId, NodeId, VnodeId};
use crate::planner::{diff_plans, map_nodes, FeasibilityReason, NodeMapping, Plan, PlanError};

/// Heartbeat-based crash-stop detector for a set of peers.
#[derive(Debug, Clone)]
pub struct DetectorState {
    pub period: u64,
    pub miss_threshold: u64,
    last_heartbeat: BTreeMap<NodeId, u64>,
    suspected: BTreeSet<NodeId>,
}

impl DetectorState {
    /// Tracks the given peers, all considered heard-from at time zero.
    pub fn new(peers: impl IntoIterator<Item = NodeId>, period: u64, miss_threshold: u64) -> Self {
        Self {
            period,
            miss_threshold,
            last_heartbeat: peers.into_iter().map(|n| (n, 0)).collect(),
            suspected: BTreeSet::new(),
        }
    }

    pub fn record_heartbeat(&mut self, node: &NodeId, now: u64) {
        if let Some(last) = self.last_heartbeat.get_mut(node) {
            *last = (*last).max(now);
        }
    }

    /// Nodes crossing the silence threshold at `now`, each reported exactly
    /// once, in id order. A node is suspected when
    /// `now - last_heartbeat > miss_threshold * period`.
    pub fn detect(&mut self, now: u64) -> Vec<NodeId> {
        let window = self.miss_threshold * self.period;
        let mut newly = Vec::new();
        for (node, last) in &self.last_heartbeat {
            if now.saturating_sub(*last) > window && !self.suspected.contains(node) {
                newly.push(node.clone());
            }
        }
        for node in &newly {
            self.suspected.insert(node.clone());
        }
        newly
    }

    pub fn is_suspected(&self, node: &NodeId) -> bool {
        self.suspected.contains(node)
    }
}

/// The application subgraph touched by a node failure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AffectedSet {
    /// Components bound to the offline node.
    pub failed: BTreeSet<ComponentId>,
    /// Surviving transitive dependency clients of the failed components;
    /// they need reconfiguration. Topic-only consumers are not impacted.
    pub impacted: BTreeSet<ComponentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FailureError {
    #[error("UnknownNode: {0}")]
    UnknownNode(NodeId),
}

/// Splits the application into failed components (bound to the offline
/// node) and impacted ones (their transitive dependency clients).
pub fn affected_set(
    index: &AppIndex,
    config: &ConfigurationState,
    failed_node: &NodeId,
) -> Result<AffectedSet, FailureError> {
    if !config.node_status.contains_key(failed_node) {
        return Err(FailureError::UnknownNode(failed_node.clone()));
    }
    let failed: BTreeSet<ComponentId> = config.hosted_on(index, failed_node).cloned().collect();
    let impacted = index.transitive_clients(&failed);
    Ok(AffectedSet { failed, impacted })
}

/// A recovery decision: the new total mapping (surviving bindings pinned
/// unchanged) and the reconfiguration plan taking the current configuration
/// back to all-active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovery {
    pub mapping: NodeMapping,
    pub plan: Plan,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum RecoveryError {
    #[error("NoSpareNode: no online {kind:?} node can host {vnode} ({reason:?})")]
    NoSpareNode { vnode: VnodeId, kind: String, reason: FeasibilityReason },
}

/// Plans the recovery for the current configuration: virtual nodes bound to
/// offline nodes are remapped via first-fit with all surviving bindings
/// pinned; the plan is the diff from the current configuration to all-active
/// under the new mapping. Pure: identical snapshots yield identical plans.
pub fn recover(
    index: &AppIndex,
    cluster: &Cluster,
    config: &ConfigurationState,
) -> Result<Recovery, RecoveryError> {
    // The planner must see the configuration's view of node availability,
    // not the cluster document's initial statuses.
    let mut view = cluster.clone();
    for node in view.nodes.values_mut() {
        if let Some(status) = config.node_status.get(&node.id) {
            node.status = *status;
        }
    }

    let pinned = NodeMapping {
        binding: config
            .mapping
            .binding
            .iter()
            .filter(|(_, node)| config.online(node))
            .map(|(v, n)| (v.clone(), n.clone()))
            .collect(),
    };

    let mapping = map_nodes(index, &view, &pinned).map_err(|err| match err {
        PlanError::NoFeasibleNode { vnode, reason } => RecoveryError::NoSpareNode {
            kind: index.vnode_kind[&vnode].clone(),
            vnode,
            reason,
        },
        PlanError::UnknownComponent(c) => unreachable!("map_nodes cannot see {c}"),
    })?;

    let plan = diff_plans(index, config, &mapping);
    Ok(Recovery { mapping, plan })
}

/// When no spare exists, impacted clients are shut down instead of left
/// active against dead servers: one deactivate phase in reverse activation
/// order. Untouched components are not named at all.
pub fn degradation_plan(
    index: &AppIndex,
    config: &ConfigurationState,
    impacted: &BTreeSet<ComponentId>,
) -> Plan {
    use crate::lifecycle::ComponentState;
    use crate::planner::{DeployAction, PhaseKind, PlanPhase};

    let actions: Vec<DeployAction> = index
        .activation
        .iter()
        .rev()
        .filter(|c| impacted.contains(*c) && config.state_of(c) == ComponentState::Active)
        .map(|c| DeployAction::Deactivate {
            component: c.clone(),
            node: config.mapping.binding[&index.vnode_of[c]].clone(),
        })
        .collect();
    if actions.is_empty() {
        Plan::default()
    } else {
        Plan { phases: vec![PlanPhase { phase: PhaseKind::Deactivate, actions }] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifecycle::{crash_node, fully_active_config, ComponentState};
    use crate::model::{AppIndex, PhysicalNode, Port, PortKind};
    use crate::planner::PhaseKind;
    use crate::testutil::{nav_app, nav_cluster, simple_app};

    #[test]
    fn detection_threshold_is_strict() {
        let mut detector = DetectorState::new([NodeId::from("n1")], 10, 3);
        assert!(detector.detect(30).is_empty());
        assert_eq!(detector.detect(31), vec![NodeId::from("n1")]);
        // Reported exactly once.
        assert!(detector.detect(40).is_empty());
    }

    #[test]
    fn healthy_node_is_never_suspected() {
        let mut detector = DetectorState::new([NodeId::from("n1")], 10, 3);
        for now in (10..=1000).step_by(10) {
            detector.record_heartbeat(&"n1".into(), now);
            assert!(detector.detect(now).is_empty(), "false positive at {now}");
        }
    }

    fn nav_failed_gps() -> (AppIndex, ConfigurationState, NodeId) {
        let app = nav_app();
        let index = AppIndex::new(&app).unwrap();
        let mapping =
            map_nodes(&index, &nav_cluster(), &NodeMapping::default()).unwrap();
        let mut config = fully_active_config(&index, &mapping);
        let gps_node = mapping.component_node(&index, &"gps".into()).unwrap().clone();
        crash_node(&mut config, &gps_node, &index).unwrap();
        (index, config, gps_node)
    }

    #[test]
    fn gps_failure_impacts_only_its_clients() {
        let (index, config, gps_node) = nav_failed_gps();
        let affected = affected_set(&index, &config, &gps_node).unwrap();
        assert_eq!(affected.failed, [ComponentId::from("gps")].into());
        assert_eq!(affected.impacted, [ComponentId::from("navdisplay")].into());
    }

    #[test]
    fn empty_node_failure_affects_nothing() {
        let app = nav_app();
        let index = AppIndex::new(&app).unwrap();
        let mut cluster = nav_cluster();
        cluster.nodes.insert(
            "spare".into(),
            PhysicalNode::new("spare", "x86", 1024, 1000),
        );
        let mapping = map_nodes(&index, &cluster, &NodeMapping::default()).unwrap();
        let mut config = fully_active_config(&index, &mapping);
        config.node_status.insert("spare".into(), crate::model::NodeStatus::Online);
        crash_node(&mut config, &"spare".into(), &index).unwrap();

        let affected = affected_set(&index, &config, &"spare".into()).unwrap();
        assert!(affected.failed.is_empty());
        assert!(affected.impacted.is_empty());
        assert_eq!(
            affected_set(&index, &config, &"ghost".into()),
            Err(FailureError::UnknownNode("ghost".into()))
        );
    }

    #[test]
    fn failure_impact_is_transitive() {
        // a depends on b depends on c; c's node dies.
        let mut app = simple_app(&["a", "b", "c"]);
        app.dependencies = vec![
            ("a".into(), "b".into()),
            ("b".into(), "c".into()),
        ];
        for comp in &mut app.components {
            comp.mem_demand = 30;
            comp.ports.push(Port {
                name: "req".into(),
                kind: PortKind::Receptacle,
                contract: "I".into(),
            });
            comp.ports.push(Port {
                name: "svc".into(),
                kind: PortKind::Facet,
                contract: "I".into(),
            });
        }
        // v1 (a, b) fills most of n1, so v2 (c) lands elsewhere.
        app.components[2].mem_demand = 45;
        app.virtual_nodes.insert("v2".into(), "x86".into());
        app.sigma.insert("c".into(), "v2".into());

        let index = AppIndex::new(&app).unwrap();
        let mapping = map_nodes(&index, &nav_cluster(), &NodeMapping::default()).unwrap();
        let mut config = fully_active_config(&index, &mapping);
        let c_node = mapping.component_node(&index, &"c".into()).unwrap().clone();
        crash_node(&mut config, &c_node, &index).unwrap();

        let affected = affected_set(&index, &config, &c_node).unwrap();
        assert_eq!(affected.failed, [ComponentId::from("c")].into());
        assert_eq!(
            affected.impacted,
            [ComponentId::from("a"), ComponentId::from("b")].into()
        );
    }

    #[test]
    fn recovery_preserves_surviving_bindings() {
        let (index, config, gps_node) = nav_failed_gps();
        let recovery = recover(&index, &nav_cluster(), &config).unwrap();
        for (vnode, node) in &config.mapping.binding {
            if node != &gps_node {
                assert_eq!(&recovery.mapping.binding[vnode], node);
            }
        }
        let new_gps = &recovery.mapping.binding[&VnodeId::from("vn2")];
        assert_ne!(new_gps, &gps_node);
        assert!(!recovery.plan.is_empty());
        // The fresh incarnation is instantiated on the new node.
        assert!(recovery.plan.actions().any(|a| matches!(
            a,
            crate::planner::DeployAction::Instantiate { component, node }
                if component.as_str() == "gps" && node == new_gps
        )));
    }

    #[test]
    fn recovery_is_idempotent_on_a_snapshot() {
        let (index, config, _) = nav_failed_gps();
        let a = recover(&index, &nav_cluster(), &config).unwrap();
        let b = recover(&index, &nav_cluster(), &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_spare_kind_is_unrecoverable() {
        // gps's virtual node needs a unique kind hosted by a single node.
        let mut app = nav_app();
        app.virtual_nodes.insert("vn2".into(), "gps-host".into());
        let index = AppIndex::new(&app).unwrap();
        let mut cluster = nav_cluster();
        let mut n9 = PhysicalNode::new("n9", "gps-host", 1024, 1000);
        n9.hw_tags.insert("antenna".into());
        cluster.nodes.insert("n9".into(), n9);

        let mapping = map_nodes(&index, &cluster, &NodeMapping::default()).unwrap();
        let mut config = fully_active_config(&index, &mapping);
        crash_node(&mut config, &"n9".into(), &index).unwrap();

        let err = recover(&index, &cluster, &config).unwrap_err();
        assert_eq!(
            err,
            RecoveryError::NoSpareNode {
                vnode: "vn2".into(),
                kind: "gps-host".into(),
                reason: FeasibilityReason::KindMismatch,
            }
        );

        let affected = affected_set(&index, &config, &"n9".into()).unwrap();
        let plan = degradation_plan(&index, &config, &affected.impacted);
        assert_eq!(plan.phases.len(), 1);
        assert_eq!(plan.phases[0].phase, PhaseKind::Deactivate);
        assert_eq!(plan.phases[0].actions.len(), 1);
    }

    #[test]
    fn empty_degradation_plan_for_inactive_impacted() {
        let (index, mut config, gps_node) = nav_failed_gps();
        let affected = affected_set(&index, &config, &gps_node).unwrap();
        for comp in &affected.impacted {
            config.comp_states.insert(comp.clone(), ComponentState::Deactivated);
        }
        assert!(degradation_plan(&index, &config, &affected.impacted).is_empty());
    }
}
