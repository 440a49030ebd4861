use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use morphopc::autodiff::Graph;
use morphopc::litho::{LithoModel, LithoSim};
use morphopc::morphology::dilate;
use morphopc::parallel;
use morphopc::{Shape, Tensor};

const PATHS: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::randn(Shape::new(4, 16, 64, 64), 1.0, &mut rng);
    let w = Tensor::<f32>::randn(Shape::new(32, 16, 3, 3), 0.1, &mut rng);
    let mut group = c.benchmark_group("conv3x3_fwd_bwd");
    for (name, on) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_enabled(on);
            b.iter(|| {
                let mut g = Graph::new();
                let xv = g.input(x.clone());
                let wv = g.input(w.clone());
                let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
                let l = g.sum(y);
                g.backward(l).unwrap();
            });
        });
    }
    group.finish();
    parallel::set_enabled(true);
}

fn morph(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::<f32>::randn(Shape::new(4, 32, 64, 64), 1.0, &mut rng);
    let w = Tensor::<f32>::randn(Shape::new(1, 32, 5, 5), 0.1, &mut rng);
    let beta = Tensor::<f32>::zeros(Shape::new(1, 32, 1, 1));
    let mut group = c.benchmark_group("dilate5x5_fwd_bwd");
    for (name, on) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_enabled(on);
            b.iter(|| {
                let mut g = Graph::new();
                let xv = g.input(x.clone());
                let wv = g.input(w.clone());
                let bv = g.input(beta.clone());
                let y = dilate(&mut g, xv, wv, bv).unwrap();
                let l = g.sum(y);
                g.backward(l).unwrap();
            });
        });
    }
    group.finish();
    parallel::set_enabled(true);
}

fn litho(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sim = LithoSim::<f64>::new(LithoModel::gaussian(8.0), 128, 128).unwrap();
    let mask = Tensor::<f64>::uniform(Shape::new(8, 1, 128, 128), 0.0, 1.0, &mut rng);
    let mut group = c.benchmark_group("litho_print_band");
    group.sample_size(20);
    for (name, on) in PATHS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            parallel::set_enabled(on);
            b.iter(|| sim.print_band(&mask).unwrap());
        });
    }
    group.finish();
    parallel::set_enabled(true);
}

criterion_group!(benches, conv, morph, litho);
criterion_main!(benches);
