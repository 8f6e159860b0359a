use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psd_core::equilibrium::{learn_equilibrium, LearnerConfig};
use psd_core::mechanism::heuristic_signals;
use psd_core::scenario::{generate_scenario, ScenarioConfig};
use psd_core::welfare::{outcome_stats, Play};
use psd_core::Exec;

const SCENARIO: &str = r#"
seed = 5
num_students = 1000
num_courses = 40
bundle_size = 4
num_dorms = 10
[preferences]
model = "calibrated"
"#;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_stats(c: &mut Criterion) {
    let cfg = ScenarioConfig::from_toml_str(SCENARIO).unwrap();
    let (spec, prefs) = generate_scenario(&cfg).unwrap();
    let space = cfg.signal_space();
    let signals = heuristic_signals(&prefs, space).unwrap();

    let mut group = c.benchmark_group("outcome_stats_200_draws");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| outcome_stats(Play::Pure(&signals), &spec, &prefs, space, 200, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_learner(c: &mut Criterion) {
    let cfg = ScenarioConfig::from_toml_str(SCENARIO).unwrap();
    let (spec, prefs) = generate_scenario(&cfg).unwrap();
    let learner = LearnerConfig {
        iterations: 5,
        draws_per_iteration: 50,
        ..cfg.learner_config()
    };

    let mut group = c.benchmark_group("learner_5x50");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| learn_equilibrium(&spec, &prefs, cfg.signal_space(), &learner, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_stats, bench_learner,
);
criterion_main!(benches);
