use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use mfrom::dataset::{evaluate_fields, make_linked_partition, sample_doe, Fidelity, ProblemParams, SyntheticProblemSpec};
use mfrom::par::Exec;
use mfrom::rom::{train, RomConfig, Variant};
use mfrom::subspace::{covariance_at_points, fit_sf_surrogate};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn covariance(c: &mut Criterion) {
    let spec = SyntheticProblemSpec::generate(&ProblemParams::new(20, 3)).unwrap();
    let x = sample_doe(&spec.bounds, 120, 1).unwrap();
    let h = DVector::from_iterator(x.len(), (0..x.len()).map(|i| spec.coefficients(&x.row(i))[0]));
    let model = fit_sf_surrogate(&x, &h, false).unwrap();
    let pts = sample_doe(&spec.bounds, 8192, 2).unwrap();
    let mut g = c.benchmark_group("gradient_covariance");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| covariance_at_points(&model, pts.values(), exec).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let spec = SyntheticProblemSpec::generate(&ProblemParams::new(10, 4)).unwrap();
    let x_lf = sample_doe(&spec.bounds, 60, 3).unwrap();
    let x_hf = x_lf.select_rows(&(0..20).collect::<Vec<_>>());
    let y = evaluate_fields(&spec, &x_hf, Fidelity::Hf).unwrap();
    let z = evaluate_fields(&spec, &x_lf, Fidelity::Lf).unwrap();
    let part = make_linked_partition(&x_hf, &x_lf).unwrap();
    let cfg = RomConfig::default();
    let mut g = c.benchmark_group("train_mf_pcas");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train(Variant::MfPcas, &y, Some(&z), &x_hf, Some(&x_lf), Some(&part), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, covariance, training);
criterion_main!(benches);
