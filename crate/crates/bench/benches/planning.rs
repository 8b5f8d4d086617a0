use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pomdp_manip::dish::DishAction;
use pomdp_manip::planner::{improve, init_random_graph};
use pomdp_manip::pomdp::belief_update;
use pomdp_manip::rng::seeded;
use pomdp_manip::{GenerativeModel, OnlinePlanner, PlannerConfig};
use pomdp_manip_bench::{default_config, initial_belief, table_model};

fn transitions(c: &mut Criterion) {
    let model = table_model();
    let belief = initial_belief(&model, 64);
    let lift = model.action_id(DishAction::Lift(4));
    let wash = model.action_id(DishAction::Wash(0));
    let mut rng = seeded(2);
    c.bench_function("sample_transition/lift", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % belief.len();
            black_box(model.sample_transition(&belief.particles()[i].state, lift, &mut rng))
        })
    });
    c.bench_function("sample_transition/wash", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % belief.len();
            black_box(model.sample_transition(&belief.particles()[i].state, wash, &mut rng))
        })
    });
}

fn filtering(c: &mut Criterion) {
    let model = table_model();
    let belief = initial_belief(&model, 2000);
    let lift = model.action_id(DishAction::Lift(4));
    let observation = model.sample_transition(&belief.particles()[0].state, lift, &mut seeded(3)).observation;
    let mut rng = seeded(4);
    c.bench_function("belief_update/N2000", |b| {
        b.iter(|| black_box(belief_update(&belief, lift, observation, &model, 0.1, &mut rng)))
    });
}

fn improvement(c: &mut Criterion) {
    let model = table_model();
    let config = default_config();
    let belief = initial_belief(&model, config.particles);
    let mut group = c.benchmark_group("improve");
    group.sample_size(10);
    for horizon in [2, 3] {
        let config = PlannerConfig { horizon, ..config };
        group.bench_function(format!("round/T{horizon}"), |b| {
            let mut rng = seeded(5);
            b.iter_batched(
                || init_random_graph(&config, &model, &mut seeded(6)).unwrap(),
                |mut graph| black_box(improve(&mut graph, &belief, 0, &model, &config, 1, &mut rng)),
                BatchSize::SmallInput,
            )
        });
    }
    group.bench_function("offline/T3", |b| {
        b.iter(|| black_box(OnlinePlanner::new(&model, belief.clone(), config).unwrap().action()))
    });
    group.finish();
}

criterion_group!(benches, transitions, filtering, improvement);
criterion_main!(benches);
