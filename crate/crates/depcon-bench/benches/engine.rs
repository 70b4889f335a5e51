use criterion::{black_box, criterion_group, criterion_main, Criterion};

use depcon_core::model::AppIndex;
use depcon_core::planner::{map_nodes, synth_plan, NodeMapping};
use depcon_core::simnet::{run, DelayModel, Scenario, SimRng};
use depcon_core::testutil::{ample_cluster, random_app, AppGenConfig};

fn sized_app(components: usize) -> depcon_core::Application {
    let mut rng = SimRng::new(0xbe0c);
    random_app(
        &mut rng,
        &AppGenConfig {
            components,
            vnodes: 5,
            edge_fraction_percent: 20,
            topic_count: 4,
            colloc_pairs: 3,
        },
    )
}

fn bench_plan_synthesis(c: &mut Criterion) {
    let app = sized_app(80);
    let cluster = ample_cluster(&app, 1);
    let index = AppIndex::new(&app).unwrap();
    c.bench_function("map_nodes+synth_plan 80 components", |b| {
        b.iter(|| {
            let mapping = map_nodes(black_box(&index), &cluster, &NodeMapping::default()).unwrap();
            synth_plan(&index, &mapping)
        })
    });
}

fn bench_deploy_run(c: &mut Criterion) {
    let app = sized_app(40);
    let cluster = ample_cluster(&app, 0);
    let scenario = Scenario { delay: DelayModel::Fixed(1), seed: 7, ..Default::default() };
    c.bench_function("simulated deployment 40 components", |b| {
        b.iter(|| run(black_box(&app), &cluster, &scenario))
    });
}

fn bench_recovery_run(c: &mut Criterion) {
    let app = sized_app(40);
    let cluster = ample_cluster(&app, 1);
    let index = AppIndex::new(&app).unwrap();
    let mapping = map_nodes(&index, &cluster, &NodeMapping::default()).unwrap();
    let victim = mapping
        .component_node(&index, &app.components[0].id)
        .unwrap()
        .clone();
    let scenario = Scenario {
        crashes: vec![(victim, 300)],
        delay: DelayModel::Fixed(1),
        seed: 7,
        ..Default::default()
    };
    c.bench_function("crash recovery 40 components", |b| {
        b.iter(|| run(black_box(&app), &cluster, &scenario))
    });
}

criterion_group!(benches, bench_plan_synthesis, bench_deploy_run, bench_recovery_run);
criterion_main!(benches);
