use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fsi_core::fsi::{fit_fsi, wn_criterion, wn_proxy_sphere, BandwidthGrid, FsiConfig};
use fsi_core::mortality::{generate_synthetic_mortality, lifetable_to_quantile, Smoothing, SYNTH_AGE_RANGE};
use fsi_core::sim::{generate_sphere_dataset, SimSetting};
use fsi_core::{weighted_frechet_mean, Kernel, QuantileGrid, Sphere, Wasserstein};

fn sphere_mean(c: &mut Criterion) {
    let setting = SimSetting::new(200, 2, 0.4, 1, 1).unwrap();
    let data = generate_sphere_dataset(&setting, 0).unwrap().data;
    let weights: Vec<f64> = (0..200).map(|i| 1.0 + 0.5 * ((i as f64) * 0.37).sin()).collect();
    c.bench_function("sphere_mean_n200", |b| {
        b.iter(|| weighted_frechet_mean(&Sphere::new(), black_box(data.y()), black_box(&weights)).unwrap())
    });
}

fn criteria(c: &mut Criterion) {
    let setting = SimSetting::new(100, 2, 0.4, 1, 2).unwrap();
    let sim = generate_sphere_dataset(&setting, 0).unwrap();
    let theta = setting.theta0.clone();
    c.bench_function("wn_sphere_n100", |b| {
        b.iter(|| wn_criterion(&sim.data, black_box(&theta), 0.4, Kernel::Gaussian).unwrap())
    });
    c.bench_function("proxy_sphere_n100", |b| {
        b.iter(|| wn_proxy_sphere(&sim.data, black_box(&theta), 0.4, Kernel::Gaussian).unwrap())
    });
}

fn fsi_fit(c: &mut Criterion) {
    let setting = SimSetting::new(50, 2, 0.4, 1, 3).unwrap();
    let data = generate_sphere_dataset(&setting, 0).unwrap().data;
    let config = FsiConfig { bandwidths: BandwidthGrid::Explicit(vec![0.5]), ..FsiConfig::default() };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("fsi_sphere_n50_single_h", |b| b.iter(|| fit_fsi(black_box(&data), &config).unwrap()));
    group.finish();
}

fn distributions(c: &mut Criterion) {
    let synth = generate_synthetic_mortality(12, 4).unwrap();
    let grid = QuantileGrid::uniform_grid(101);
    let lt = &synth.lifetables[0];
    c.bench_function("lifetable_to_quantile_silverman", |b| {
        b.iter(|| lifetable_to_quantile(black_box(lt), SYNTH_AGE_RANGE, &grid, Smoothing::Silverman).unwrap())
    });
    let qs: Vec<QuantileGrid> = synth
        .lifetables
        .iter()
        .map(|lt| lifetable_to_quantile(lt, SYNTH_AGE_RANGE, &grid, Smoothing::Silverman).unwrap())
        .collect();
    let weights: Vec<f64> = (0..qs.len()).map(|i| if i % 3 == 0 { -0.2 } else { 1.0 }).collect();
    let space = Wasserstein::new(grid.clone()).unwrap();
    c.bench_function("wasserstein_signed_mean", |b| {
        b.iter(|| weighted_frechet_mean(&space, black_box(&qs), black_box(&weights)).unwrap())
    });
}

criterion_group!(benches, sphere_mean, criteria, fsi_fit, distributions);
criterion_main!(benches);
