use criterion::{black_box, criterion_group, criterion_main, Criterion};

use physattn_core::{
    derive_params, disentangled_attention, otsu_threshold, run_algorithm1, run_physics_operator,
    BaseConstants, FeatureSequence, MaskSequence, MetricConfig, OperatorSchedule, PriorKind,
    PriorSpec, ProjectionSet, RngHandle, ScenarioParams, StoryScenario,
};

fn random_sequence(t: usize, h: usize, w: usize, d: usize, rng: &mut RngHandle) -> FeatureSequence {
    let data: Vec<f64> = (0..t * h * w * d).map(|_| rng.normal()).collect();
    FeatureSequence::new(t, h, w, d, data).unwrap()
}

fn bench_operator(c: &mut Criterion) {
    let mut rng = RngHandle::new(7, "bench-operator");
    let state = random_sequence(8, 16, 16, 16, &mut rng);
    let masks = MaskSequence::all_ones(8, 16, 16).unwrap();
    let params = derive_params(0.5, BaseConstants::default()).unwrap();
    let schedule = OperatorSchedule::default();
    let spec = PriorSpec::alpha_scaled(PriorKind::HeatDiffusion, &params, &schedule);
    c.bench_function("heat_operator_8x16x16x16_n10", |b| {
        b.iter(|| {
            let mut noise = rng.fork("noise");
            run_physics_operator(
                black_box(state.clone()),
                &masks,
                &spec,
                &params,
                &schedule,
                Some(&mut noise),
            )
            .unwrap()
        })
    });
}

fn bench_otsu(c: &mut Criterion) {
    let mut rng = RngHandle::new(11, "bench-otsu");
    let values: Vec<f64> = (0..4096)
        .map(|i| if i % 3 == 0 { 1.0 } else { 0.0 } + 0.1 * rng.normal().abs())
        .collect();
    c.bench_function("otsu_4096_values_256_bins", |b| {
        b.iter(|| otsu_threshold(black_box(&values), 256).unwrap())
    });
}

fn bench_attention(c: &mut Criterion) {
    let mut rng = RngHandle::new(13, "bench-attention");
    let q = random_sequence(4, 8, 8, 32, &mut rng);
    let kv = random_sequence(4, 8, 8, 32, &mut rng);
    let proj = ProjectionSet::seeded_orthogonal(32, &mut rng).unwrap();
    c.bench_function("attention_4x64tokens_d32", |b| {
        b.iter(|| disentangled_attention(black_box(&q), black_box(&kv), &proj).unwrap())
    });
}

fn bench_full_run(c: &mut Criterion) {
    let scenario = StoryScenario::from_params(&ScenarioParams::default(), 3).unwrap();
    let params = derive_params(0.5, BaseConstants::default()).unwrap();
    let schedule = OperatorSchedule::default();
    let spec = PriorSpec::alpha_scaled(PriorKind::HeatDiffusion, &params, &schedule);
    let mut proj_rng = RngHandle::new(3, "bench-proj");
    let proj = ProjectionSet::seeded_orthogonal(8, &mut proj_rng).unwrap();
    let cfg = MetricConfig::default();
    c.bench_function("full_run_default_scenario_10_steps", |b| {
        b.iter(|| {
            run_algorithm1(&scenario, &params, &spec, &schedule, 10, &proj, &cfg).unwrap()
        })
    });
}

criterion_group!(benches, bench_operator, bench_otsu, bench_attention, bench_full_run);
criterion_main!(benches);
