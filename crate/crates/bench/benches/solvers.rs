use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mktfx::equilibrium::{solve_finite_sample_price, solve_mean_field_price, Policy, SolverSettings};
use mktfx::estimators::{estimate, EstimatorOptions};
use mktfx::experiment::{assign_treatments, draw_perturbations, run_experiment, Design};
use mktfx::rng::{stream, Stream};
use mktfx::{sample_population, Scenario, ScenarioId};

fn finite_sample_solver(c: &mut Criterion) {
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("finite_sample_price");
    for (scenario, n) in [(Scenario::tech(), 2500), (Scenario::goat_hay(), 1000)] {
        let pop = sample_population(&scenario, n, 1).unwrap();
        let arms = scenario.treatment.arms(n);
        let w = assign_treatments(n, 0.5, arms, &mut stream(1, Stream::Treatment)).unwrap();
        let h = Design::reference(scenario.id).h(n);
        let u = draw_perturbations(n, scenario.num_goods, h, &mut stream(1, Stream::Perturbation)).unwrap();
        group.bench_with_input(BenchmarkId::new(scenario.id.as_str(), n), &n, |b, _| {
            b.iter(|| {
                solve_finite_sample_price(&pop.units, &w, &u, &scenario.price_box, None, &settings).unwrap()
            })
        });
    }
    group.finish();
}

fn mean_field_solver(c: &mut Criterion) {
    let settings = SolverSettings::default();
    let scenario = Scenario::goat_hay();
    let policy = Policy::for_scenario(&scenario, 0.5, 1000).unwrap();
    c.bench_function("mean_field_price/goat-hay", |b| {
        b.iter(|| solve_mean_field_price(black_box(&scenario), &policy, &settings).unwrap())
    });
}

fn one_replication(c: &mut Criterion) {
    let scenario = Scenario::tech();
    let design = Design::reference(ScenarioId::TechIntervention);
    let opts = EstimatorOptions::default();
    let mut seed = 0;
    c.bench_function("replication/tech-2500", |b| {
        b.iter(|| {
            seed += 1;
            let data = run_experiment(&scenario, 2500, &design, seed).unwrap();
            estimate(&data, &opts).unwrap()
        })
    });
}

criterion_group!(benches, finite_sample_solver, mean_field_solver, one_replication);
criterion_main!(benches);
