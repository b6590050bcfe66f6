use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ipi_core::driver::{IpiConfig, MethodConfig, Problem};
use ipi_core::funcapprox::Net;
use ipi_core::policyimp::{policy_head_gradient, ImprovementObjective};
use ipi_core::rollout::{collect_windows, Behavior};
use ipi_core::{ExecMode, Vector};
use std::hint::black_box;

const MODES: [(&str, ExecMode); 2] = [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)];

fn pendulum(method: MethodConfig, mode: ExecMode) -> Problem {
    let mut p = IpiConfig::pendulum_desk(method).build().unwrap();
    p.opts.mode = mode;
    p
}

fn windows(c: &mut Criterion) {
    let mut g = c.benchmark_group("collect_windows");
    g.sample_size(10);
    for (name, mode) in MODES {
        let p = pendulum(MethodConfig::Iepi, mode);
        let behavior = Behavior::Stationary(p.initial_policy.clone());
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(collect_windows(&p.env, &behavior, &p.starts, p.opts.dt, p.opts.substep, mode).unwrap()))
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate_iepi");
    g.sample_size(10);
    for (name, mode) in MODES {
        let p = pendulum(MethodConfig::Iepi, mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(p.evaluate(&p.initial_policy).unwrap()))
        });
    }
    g.finish();
}

fn rud_gradient(c: &mut Criterion) {
    let mut g = c.benchmark_group("rud_gradient");
    let p = pendulum(MethodConfig::Iepi, ExecMode::Parallel);
    let value: Net = p.evaluate(&p.initial_policy).unwrap().value.unwrap();
    let objective = ImprovementObjective::Hamiltonian {
        env: &p.env,
        reward: &p.reward,
        value: &value,
    };
    let theta = Vector::from_fn(p.policy_basis.len(), |i, _| ((i as f64) * 0.37).sin());
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                black_box(
                    policy_head_gradient(&objective, &p.reward, &p.policy_basis, &p.improvement_grid, &theta, mode).unwrap(),
                )
            })
        });
    }
    g.finish();
}

criterion_group!(benches, windows, evaluation, rud_gradient);
criterion_main!(benches);
