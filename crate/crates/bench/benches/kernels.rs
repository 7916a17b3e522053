use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lightloc_core::nn::Mlp;
use lightloc_core::scg::kmeans;
use lightloc_core::solver::{ransac_pose, rigid_fit, CorrespondenceSet, RansacParams};
use lightloc_core::Pose;
use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn correspondences(n: usize, outliers: usize, seed: u64) -> CorrespondenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = Pose::from_euler(0.1, -0.2, 1.3, Vector3::new(4.0, -7.0, 1.0));
    let mut point = || Vector3::from_fn(|_, _| rng.random_range(-30.0..30.0));
    let sensor: Vec<Vector3<f64>> = (0..n).map(|_| point()).collect();
    let world: Vec<Vector3<f64>> = sensor
        .iter()
        .enumerate()
        .map(|(i, p)| if i < outliers { point() } else { truth.apply(p) })
        .collect();
    CorrespondenceSet::from_points(&sensor, &world).unwrap()
}

fn solver(c: &mut Criterion) {
    let clean = correspondences(300, 0, 1);
    c.bench_function("rigid_fit 300 points", |b| b.iter(|| rigid_fit(black_box(&clean)).unwrap()));
    let noisy = correspondences(300, 90, 2);
    let params = RansacParams::default();
    c.bench_function("ransac 300 points 30% outliers", |b| {
        b.iter(|| ransac_pose(black_box(&noisy), &params).unwrap())
    });
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::new(&[68, 96, 96, 96, 3], Vec::new(), 0).unwrap();
    let x = Array2::from_shape_simple_fn((512, 68), || rng.random_range(-1.0..1.0));
    let g = Array2::from_shape_simple_fn((512, 3), || rng.random_range(-1.0..1.0));
    c.bench_function("mlp forward 512x68", |b| b.iter(|| net.forward(black_box(x.view())).unwrap()));
    c.bench_function("mlp forward+backward 512x68", |b| {
        b.iter(|| {
            let cache = net.forward_cached(black_box(x.view())).unwrap();
            net.backward(&cache, g.view()).unwrap()
        })
    });
}

fn clustering(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), 1.8])
        .collect();
    c.bench_function("kmeans 2000 points k=20", |b| {
        b.iter_batched(|| points.clone(), |p| kmeans(&p, 20, 0, 100).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, solver, mlp, clustering);
criterion_main!(benches);
