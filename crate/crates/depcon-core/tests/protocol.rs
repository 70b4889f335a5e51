//! Log oracles for the leader protocol and the simulation fabric: phase
//! barriers, dependency-staged activation, single dispatcher per plan,
//! delivery timing bounds, replay determinism and offline-node invariants.

use std::collections::{BTreeMap, BTreeSet};

use depcon_core::event::{EventBody, EventLog};
use depcon_core::lifecycle::{AckResult, ComponentState};
use depcon_core::model::{AppIndex, Application, ComponentId, NodeId};
use depcon_core::planner::{map_nodes, DeployAction, NodeMapping, PhaseKind};
use depcon_core::report::Outcome;
use depcon_core::simnet::{run, DelayModel, RunOutput, Scenario, SimRng};
use depcon_core::testutil::{ample_cluster, nav_app, nav_cluster, random_app, AppGenConfig};

fn generated(seed: u64) -> (Application, depcon_core::Cluster) {
    let mut rng = SimRng::new(seed.wrapping_mul(0x9e37) + 1);
    let app = random_app(
        &mut rng,
        &AppGenConfig {
            components: 3 + (seed % 10) as usize,
            vnodes: 1 + (seed % 3) as usize,
            edge_fraction_percent: 30,
            topic_count: 1,
            colloc_pairs: 1,
        },
    );
    let cluster = ample_cluster(&app, 1);
    (app, cluster)
}

fn crash_scenario(app: &Application, cluster: &depcon_core::Cluster, seed: u64) -> Scenario {
    let index = AppIndex::new(app).unwrap();
    let mapping = map_nodes(&index, cluster, &NodeMapping::default()).unwrap();
    let victim = mapping
        .component_node(&index, &app.components[0].id)
        .unwrap()
        .clone();
    Scenario {
        crashes: vec![(victim, 40 + seed * 17 % 400)],
        delay: DelayModel::Fixed(1),
        seed,
        ..Default::default()
    }
}

/// No dispatch of a later phase may precede any acknowledgement of an
/// earlier phase of the same plan, and activations are staged behind their
/// servers' activate acks.
fn assert_barriers(log: &EventLog) {
    #[derive(Default)]
    struct PlanTrace {
        dispatches: Vec<(usize, PhaseKind, DeployAction)>,
        acks: Vec<(usize, PhaseKind, DeployAction)>,
    }
    let mut plans: BTreeMap<u64, PlanTrace> = BTreeMap::new();
    for (i, event) in log.iter().enumerate() {
        match &event.body {
            EventBody::Dispatch { plan, phase, action, .. } => {
                plans
                    .entry(*plan)
                    .or_default()
                    .dispatches
                    .push((i, *phase, action.clone()));
            }
            EventBody::ActionAck { plan, action, .. } => {
                plans
                    .entry(*plan)
                    .or_default()
                    .acks
                    .push((i, action.phase_kind(), action.clone()));
            }
            _ => {}
        }
    }

    for (plan, trace) in &plans {
        // Phase order as observed from dispatch/ack order.
        let mut phase_order: Vec<PhaseKind> = Vec::new();
        for (_, phase, _) in trace.dispatches.iter().chain(trace.acks.iter()) {
            if !phase_order.contains(phase) {
                phase_order.push(*phase);
            }
        }
        let rank = |p: &PhaseKind| phase_order.iter().position(|q| q == p).unwrap();
        for (di, dphase, _) in &trace.dispatches {
            for (ai, aphase, _) in &trace.acks {
                if rank(aphase) < rank(dphase) {
                    assert!(
                        ai < di,
                        "plan {plan}: {dphase:?} dispatch at {di} precedes {aphase:?} ack at {ai}"
                    );
                }
            }
        }
    }
}

/// Dependency staging: for each plan, a client's activate dispatch comes
/// after the activate acks of all servers activated in the same plan.
fn assert_activation_staging(app: &Application, log: &EventLog) {
    let mut activate_dispatch: BTreeMap<(u64, ComponentId), usize> = BTreeMap::new();
    let mut activate_ack: BTreeMap<(u64, ComponentId), usize> = BTreeMap::new();
    for (i, event) in log.iter().enumerate() {
        match &event.body {
            EventBody::Dispatch {
                plan,
                action: DeployAction::Activate { component, .. },
                ..
            } => {
                activate_dispatch.insert((*plan, component.clone()), i);
            }
            EventBody::ActionAck {
                plan,
                action: DeployAction::Activate { component, .. },
                ..
            } => {
                activate_ack.insert((*plan, component.clone()), i);
            }
            _ => {}
        }
    }
    for ((plan, client), di) in &activate_dispatch {
        for (c, server) in &app.dependencies {
            if c == client {
                if let Some(ai) = activate_ack.get(&(*plan, server.clone())) {
                    assert!(
                        ai < di,
                        "plan {plan}: Activate({client}) dispatched at {di} before ack of server {server} at {ai}"
                    );
                }
            }
        }
    }
}

fn assert_single_dispatcher_per_plan(log: &EventLog) {
    let mut dispatchers: BTreeMap<u64, BTreeSet<NodeId>> = BTreeMap::new();
    for event in log.iter() {
        if let EventBody::Dispatch { plan, from, .. } = &event.body {
            dispatchers.entry(*plan).or_default().insert(from.clone());
        }
    }
    for (plan, nodes) in dispatchers {
        assert_eq!(nodes.len(), 1, "plan {plan} dispatched by {nodes:?}");
    }
}

fn assert_delivery_bounds(log: &EventLog, d_min: u64) {
    // An action is applied (acked) no earlier than its dispatch plus the
    // minimum delay; bookkeeping applies are leader-local and exempt.
    let mut dispatch_time: BTreeMap<(u64, String), u64> = BTreeMap::new();
    for event in log.iter() {
        match &event.body {
            EventBody::Dispatch { plan, action, .. } => {
                let key = (*plan, serde_json::to_string(action).unwrap());
                dispatch_time.entry(key).or_insert(event.t);
            }
            EventBody::ActionAck { plan, action, result, .. } => {
                if *result == AckResult::Bookkeeping {
                    continue;
                }
                let key = (*plan, serde_json::to_string(action).unwrap());
                if let Some(sent) = dispatch_time.get(&key) {
                    assert!(
                        event.t >= sent + d_min,
                        "action applied at {} but dispatched at {sent} (d_min {d_min})",
                        event.t
                    );
                }
            }
            _ => {}
        }
    }
}

fn assert_nothing_runs_on_offline_nodes(out: &RunOutput, index: &AppIndex) {
    let mut crashed: BTreeSet<NodeId> = BTreeSet::new();
    for event in out.log.iter() {
        match &event.body {
            EventBody::Crash { node } => {
                crashed.insert(node.clone());
            }
            EventBody::Heartbeat { node } => {
                assert!(!crashed.contains(node), "heartbeat from offline {node}");
            }
            EventBody::ActionAck { node, result, .. }
                if *result != AckResult::Bookkeeping =>
            {
                assert!(!crashed.contains(node), "{node} applied an action while offline");
            }
            _ => {}
        }
    }
    // No component may rest in a non-absent, non-failed state on an
    // offline node.
    for comp in &index.comp_ids {
        if let Some(node) = out.final_config.mapping.component_node(index, comp) {
            if !out.final_config.online(node) {
                let state = out.final_config.state_of(comp);
                assert!(
                    state == ComponentState::Absent || state == ComponentState::Failed,
                    "{comp} is {state:?} on offline {node}"
                );
            }
        }
    }
}

#[test]
fn barriers_hold_across_seeds() {
    for seed in 0..40u64 {
        let (app, cluster) = generated(seed);
        let scenario = Scenario { delay: DelayModel::Fixed(1), seed, ..Default::default() };
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Converged);
        assert_barriers(&out.log);
        assert_activation_staging(&app, &out.log);
        assert_single_dispatcher_per_plan(&out.log);
        assert_delivery_bounds(&out.log, 1);
    }
}

#[test]
fn barriers_hold_under_crashes() {
    for seed in 0..40u64 {
        let (app, cluster) = generated(seed);
        let scenario = crash_scenario(&app, &cluster, seed);
        let out = run(&app, &cluster, &scenario);
        assert_eq!(out.report.outcome, Outcome::Converged, "seed {seed}");
        let index = AppIndex::new(&app).unwrap();
        assert_barriers(&out.log);
        assert_activation_staging(&app, &out.log);
        assert_single_dispatcher_per_plan(&out.log);
        assert_delivery_bounds(&out.log, 1);
        assert_nothing_runs_on_offline_nodes(&out, &index);
    }
}

/// The gps node crashing right after the instantiate phase suspends the
/// deployment; the recovery replans and the final log still activates
/// servers before clients.
#[test]
fn mid_deployment_crash_suspends_and_replans() {
    let app = nav_app();
    let cluster = nav_cluster();
    // With fixed delay 2, instantiate acks land at t = 6.
    let scenario = Scenario {
        crashes: vec![(NodeId::from("n2"), 7)],
        delay: DelayModel::Fixed(2),
        seed: 9,
        ..Default::default()
    };
    let out = run(&app, &cluster, &scenario);
    assert_eq!(out.report.outcome, Outcome::Converged);
    assert!(out
        .log
        .iter()
        .any(|e| matches!(e.body, EventBody::PlanSuspended { .. })));
    assert!(out
        .log
        .iter()
        .any(|e| matches!(e.body, EventBody::RecoveryComplete { .. })));
    assert_activation_staging(&app, &out.log);

    // The final activations respect the dependency even across the replan.
    let mut last_activate: BTreeMap<ComponentId, usize> = BTreeMap::new();
    for (i, event) in out.log.iter().enumerate() {
        if let EventBody::ActionAck { action: DeployAction::Activate { component, .. }, .. } =
            &event.body
        {
            last_activate.insert(component.clone(), i);
        }
    }
    assert!(last_activate[&ComponentId::from("gps")] < last_activate[&ComponentId::from("navdisplay")]);
}

/// Replay equality over 100 seeds.
#[test]
fn replay_equality_holds_for_100_seeds() {
    let app = nav_app();
    let cluster = nav_cluster();
    for seed in 0..100u64 {
        let scenario = Scenario {
            crashes: vec![(NodeId::from("n2"), 200 + seed)],
            delay: DelayModel::Uniform { min: 1, max: 3 },
            seed,
            ..Default::default()
        };
        let a = run(&app, &cluster, &scenario).log.to_jsonl();
        let b = run(&app, &cluster, &scenario).log.to_jsonl();
        assert_eq!(a, b, "seed {seed} replay diverged");
    }
}

/// Crashing the only node mid-run strands the application with no leader;
/// the run ends unrecoverable rather than hanging.
#[test]
fn losing_every_node_terminates() {
    let mut app = nav_app();
    for comp in &mut app.components {
        comp.hw_required.clear();
        comp.mem_demand = 1;
    }
    let cluster = depcon_core::Cluster::new([depcon_core::PhysicalNode::new(
        "only", "x86", 100, 100,
    )]);
    let scenario = Scenario {
        crashes: vec![(NodeId::from("only"), 50)],
        delay: DelayModel::Fixed(1),
        seed: 3,
        ..Default::default()
    };
    let out = run(&app, &cluster, &scenario);
    assert_eq!(out.report.outcome, Outcome::Unrecoverable);
}
