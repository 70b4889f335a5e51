//! Builders and independent oracles used by tests and benches.
//!
//! The oracles here (brute-force order enumeration, random application
//! generation) deliberately avoid the engine's own algorithms so they can
//! serve as cross-checks.

use std::collections::BTreeSet;

use crate::model::{
    Application, Cluster, ComponentId, ComponentInstance, Level, PhysicalNode, Port, PortKind,
    SecurityLabel, VnodeId,
};
use crate::simnet::SimRng;

/// An application with the given component ids, all on one virtual node
/// `v1` of kind `x86`, no edges and no ports.
pub fn simple_app(ids: &[&str]) -> Application {
    let mut app = Application::empty();
    app.virtual_nodes.insert(VnodeId::from("v1"), "x86".into());
    for id in ids {
        app.components.push(ComponentInstance::new(*id, format!("{id}_type")));
        app.sigma.insert(ComponentId::from(*id), VnodeId::from("v1"));
    }
    app
}

/// The canonical three-component navigation application: `sensor`
/// periodically publishes fixes that `gps` consumes, `gps` publishes
/// position updates that `navdisplay` consumes, and `navdisplay` refreshes
/// itself through the `IGps` interface provided by `gps`. One component per
/// virtual node, all of kind `x86`.
pub fn nav_app() -> Application {
    let mut app = Application::empty();

    let mut sensor = ComponentInstance::new("sensor", "Sensor");
    sensor.ports.push(Port {
        name: "fix_out".into(),
        kind: PortKind::Publisher,
        contract: "sensor_fix".into(),
    });
    sensor.mem_demand = 60;
    sensor.cpu_demand = 10;
    sensor.hw_required.insert("imu".into());

    let mut gps = ComponentInstance::new("gps", "Gps");
    gps.ports.push(Port {
        name: "fix_in".into(),
        kind: PortKind::Subscriber,
        contract: "sensor_fix".into(),
    });
    gps.ports.push(Port {
        name: "pos_out".into(),
        kind: PortKind::Publisher,
        contract: "gps_position".into(),
    });
    gps.ports.push(Port {
        name: "gps_if".into(),
        kind: PortKind::Facet,
        contract: "IGps".into(),
    });
    gps.mem_demand = 45;
    gps.cpu_demand = 20;
    gps.hw_required.insert("antenna".into());

    let mut nav = ComponentInstance::new("navdisplay", "NavDisplay");
    nav.ports.push(Port {
        name: "pos_in".into(),
        kind: PortKind::Subscriber,
        contract: "gps_position".into(),
    });
    nav.ports.push(Port {
        name: "gps_link".into(),
        kind: PortKind::Receptacle,
        contract: "IGps".into(),
    });
    nav.mem_demand = 42;
    nav.cpu_demand = 15;
    nav.hw_required.insert("display".into());

    app.components = vec![sensor, gps, nav];
    app.dependencies = vec![(ComponentId::from("navdisplay"), ComponentId::from("gps"))];
    for (comp, vnode) in [("sensor", "vn1"), ("gps", "vn2"), ("navdisplay", "vn3")] {
        app.sigma.insert(ComponentId::from(comp), VnodeId::from(vnode));
        app.virtual_nodes.insert(VnodeId::from(vnode), "x86".into());
    }
    app
}

/// Three online `x86` nodes shaped like a small industrial testbed. The
/// hardware tags and capacities spread [`nav_app`] one component per node
/// (sensor on n1, gps on n2, navdisplay on n3) while leaving n3 enough
/// headroom to absorb gps if n2 is lost.
pub fn nav_cluster() -> Cluster {
    let mut n1 = PhysicalNode::new("n1", "x86", 100, 100);
    n1.hw_tags.insert("imu".into());
    let mut n2 = PhysicalNode::new("n2", "x86", 50, 100);
    n2.hw_tags.insert("antenna".into());
    let mut n3 = PhysicalNode::new("n3", "x86", 100, 100);
    n3.hw_tags.insert("antenna".into());
    n3.hw_tags.insert("display".into());
    Cluster::new([n1, n2, n3])
}

/// Every topological order of the dependency relation, by backtracking.
/// Independent of the engine's ordering algorithm.
pub fn all_topological_orders(app: &Application) -> Vec<Vec<ComponentId>> {
    let ids: Vec<ComponentId> = {
        let mut v: Vec<_> = app.components.iter().map(|c| c.id.clone()).collect();
        v.sort();
        v
    };
    let mut orders = Vec::new();
    let mut current = Vec::new();
    let mut placed = BTreeSet::new();
    extend_orders(app, &ids, &mut current, &mut placed, &mut orders);
    orders
}

fn extend_orders(
    app: &Application,
    ids: &[ComponentId],
    current: &mut Vec<ComponentId>,
    placed: &mut BTreeSet<ComponentId>,
    orders: &mut Vec<Vec<ComponentId>>,
) {
    if current.len() == ids.len() {
        orders.push(current.clone());
        return;
    }
    for id in ids {
        if placed.contains(id) {
            continue;
        }
        // id may be placed next iff every server of id is already placed.
        let ok = app
            .dependencies
            .iter()
            .filter(|(client, _)| client == id)
            .all(|(_, server)| placed.contains(server));
        if ok {
            placed.insert(id.clone());
            current.push(id.clone());
            extend_orders(app, ids, current, placed, orders);
            current.pop();
            placed.remove(id);
        }
    }
}

/// The lexicographically smallest topological order, computed greedily and
/// independently of the engine.
pub fn lexmin_topological_order(app: &Application) -> Vec<ComponentId> {
    let mut remaining: BTreeSet<ComponentId> =
        app.components.iter().map(|c| c.id.clone()).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let next = remaining
            .iter()
            .find(|id| {
                app.dependencies
                    .iter()
                    .filter(|(client, _)| &client == id)
                    .all(|(_, server)| !remaining.contains(server))
            })
            .expect("acyclic dependency relation")
            .clone();
        remaining.remove(&next);
        order.push(next);
    }
    order
}

/// Knobs for [`random_app`].
pub struct AppGenConfig {
    pub components: usize,
    pub vnodes: usize,
    pub edge_fraction_percent: u64,
    pub topic_count: usize,
    pub colloc_pairs: usize,
}

impl Default for AppGenConfig {
    fn default() -> Self {
        Self {
            components: 6,
            vnodes: 3,
            edge_fraction_percent: 30,
            topic_count: 2,
            colloc_pairs: 1,
        }
    }
}

/// A random valid application: acyclic dependencies wired with matching
/// ports, random pub/sub topics, collocation pairs consistent with the
/// virtual-node assignment, uniform labels.
pub fn random_app(rng: &mut SimRng, cfg: &AppGenConfig) -> Application {
    let mut app = Application::empty();
    let n = cfg.components.max(1);
    let vnodes = cfg.vnodes.clamp(1, n);
    for v in 0..vnodes {
        app.virtual_nodes.insert(VnodeId::new(format!("v{v:02}")), "x86".into());
    }

    for i in 0..n {
        let id = format!("c{i:02}");
        let mut comp = ComponentInstance::new(&id, "Generated");
        comp.mem_demand = rng.range(1, 16);
        comp.cpu_demand = rng.range(1, 16);
        comp.label = SecurityLabel::new(Level::Confidential, "mission");
        app.components.push(comp);
        let v = rng.range(0, vnodes as u64 - 1) as usize;
        app.sigma.insert(ComponentId::from(id.as_str()), VnodeId::new(format!("v{v:02}")));
    }

    // Dependencies flow from higher index (client) to lower index (server),
    // which keeps the relation acyclic by construction.
    for hi in 1..n {
        for lo in 0..hi {
            if rng.range(0, 99) < cfg.edge_fraction_percent {
                let client = ComponentId::new(format!("c{hi:02}"));
                let server = ComponentId::new(format!("c{lo:02}"));
                let contract = format!("I{lo:02}");
                app.components[hi].ports.push(Port {
                    name: format!("req{lo:02}"),
                    kind: PortKind::Receptacle,
                    contract: contract.clone(),
                });
                if !app.components[lo].ports.iter().any(|p| p.kind == PortKind::Facet) {
                    app.components[lo].ports.push(Port {
                        name: "svc".into(),
                        kind: PortKind::Facet,
                        contract,
                    });
                }
                app.dependencies.push((client, server));
            }
        }
    }

    for t in 0..cfg.topic_count {
        let topic = format!("topic{t}");
        let publisher = rng.range(0, n as u64 - 1) as usize;
        let subscriber = rng.range(0, n as u64 - 1) as usize;
        app.components[publisher].ports.push(Port {
            name: format!("pub{t}"),
            kind: PortKind::Publisher,
            contract: topic.clone(),
        });
        if subscriber != publisher {
            app.components[subscriber].ports.push(Port {
                name: format!("sub{t}"),
                kind: PortKind::Subscriber,
                contract: topic,
            });
        }
    }

    // Collocation only between components that already share a virtual node.
    let mut added = 0;
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            if added >= cfg.colloc_pairs {
                break 'outer;
            }
            let a = ComponentId::new(format!("c{i:02}"));
            let b = ComponentId::new(format!("c{j:02}"));
            if app.sigma[&a] == app.sigma[&b] && rng.range(0, 3) == 0 {
                app.colloc.push((a, b));
                added += 1;
            }
        }
    }

    app
}

/// A cluster able to host `app` with headroom: one ample node per virtual
/// node plus `spares` extra nodes of the same kind.
pub fn ample_cluster(app: &Application, spares: usize) -> Cluster {
    let total_mem: u64 = app.components.iter().map(|c| c.mem_demand).sum();
    let total_cpu: u64 = app.components.iter().map(|c| c.cpu_demand).sum();
    let count = app.virtual_nodes.len() + spares;
    Cluster::new((0..count.max(1)).map(|i| {
        PhysicalNode::new(
            format!("n{i:02}"),
            "x86",
            total_mem.max(1) * 2,
            total_cpu.max(1) * 2,
        )
    }))
}
