mod common;

use common::{rng, tie_free, tie_free_surface, uniform};
use morphopc::autodiff::{gradcheck, Adam, GradcheckOptions, Graph, Mode, Module};
use morphopc::morphology::default_se_schedule;
use morphopc::network::{binarize, binarize_grids, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use morphopc::{Shape, Tensor};
use rand::Rng;

fn conv(ci: usize, co: usize, k: usize) -> usize {
    co * ci * k * k + co
}

fn block(ci: usize, co: usize, k: usize) -> usize {
    conv(ci, co, k) + 2 * co
}

/// Surface weights and bias, gate, 1x1 projection, batch norm.
fn morph_basic(c: usize, k: usize) -> usize {
    c * k * k + c + c + conv(c, c, 1) + 2 * c
}

fn multiscale(c: usize, s: usize) -> usize {
    let w = c / s;
    default_se_schedule(s).iter().map(|&k| block(w, w, 3) + morph_basic(w, k)).sum::<usize>()
        + conv(c, c, 1)
        + 2 * c
}

fn counted(cfg: &GeneratorConfig) -> usize {
    let mut ch = vec![cfg.stem];
    ch.extend(&cfg.widths);
    let l = cfg.widths.len();
    let mut n = block(1, cfg.stem, 3) + conv(cfg.stem, 1, 1);
    for i in 1..=l {
        n += block(ch[i - 1], ch[i], 3) + multiscale(ch[i], cfg.scale);
    }
    n += multiscale(ch[l], cfg.scale);
    for j in 0..l {
        n += conv(ch[j + 1], 4 * ch[j], 1) + block(2 * ch[j], ch[j], 3);
    }
    n
}

fn mini() -> GeneratorConfig {
    GeneratorConfig { size: 16, widths: vec![8, 8], stem: 4, scale: 2, ..GeneratorConfig::default() }
}

#[test]
fn default_parameter_count() {
    let cfg = GeneratorConfig::default();
    let mut g = Generator::<f32>::new(&cfg, &mut rng(0)).unwrap();
    assert_eq!(g.num_params(), counted(&cfg));
    assert_eq!(g.num_params(), 1_292_325);
    let mut again = Generator::<f32>::new(&cfg, &mut rng(99)).unwrap();
    assert_eq!(again.num_params(), 1_292_325);
    let mut d = Discriminator::<f32>::new(&DiscriminatorConfig::default(), &mut rng(0)).unwrap();
    assert_eq!(d.num_params(), conv(2, 16, 3) + conv(16, 32, 3) + conv(32, 64, 3) + conv(64, 128, 3) + conv(128, 1, 1));
}

/// Forward pass normalized by batch statistics; an untrained network's
/// running statistics are still at their initial values.
fn train_forward(gen: &mut Generator<f32>, x: &Tensor<f32>) -> Tensor<f32> {
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let y = gen.forward(&mut g, v, Mode::Train).unwrap();
    g.value(y).clone()
}

#[test]
fn generator_shapes_and_determinism() {
    let cfg = GeneratorConfig::default();
    let mut gen = Generator::<f32>::new(&cfg, &mut rng(1)).unwrap();
    let mut r = rng(2);
    let x = Tensor::<f32>::uniform(Shape::new(2, 1, 128, 128), 0.0, 1.0, &mut r);
    let y = train_forward(&mut gen, &x);
    assert_eq!(y.shape(), x.shape());
    assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let e = gen.predict(&x).unwrap();
    assert_eq!(e.shape(), x.shape());
    assert_eq!(gen.predict(&x).unwrap(), e);

    let mut g = Graph::new();
    let bad = g.input(Tensor::zeros(Shape::new(1, 1, 64, 64)));
    assert!(gen.forward(&mut g, bad, Mode::Eval).is_err());
    let two = g.input(Tensor::zeros(Shape::new(1, 2, 128, 128)));
    assert!(gen.forward(&mut g, two, Mode::Eval).is_err());
}

#[test]
fn generator_rejects_bad_configs() {
    let mut r = rng(3);
    for cfg in [
        GeneratorConfig { widths: vec![12, 64], scale: 8, ..mini() },
        GeneratorConfig { size: 24, ..mini() },
        GeneratorConfig { size: 16, widths: vec![8; 5], ..mini() },
        GeneratorConfig { widths: vec![], ..mini() },
    ] {
        assert!(Generator::<f64>::new(&cfg, &mut r).is_err(), "{cfg:?}");
    }
}

#[test]
fn initial_output_mean_is_moderate() {
    let cfg = GeneratorConfig::default();
    for trial in 0..32 {
        let mut gen = Generator::<f32>::new(&cfg, &mut rng(100 + trial)).unwrap();
        let x = Tensor::<f32>::uniform(Shape::new(2, 1, 128, 128), 0.0, 1.0, &mut rng(200 + trial));
        let y = train_forward(&mut gen, &x);
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / y.numel() as f64;
        assert!(mean > 0.2 && mean < 0.8, "trial {trial}: {mean}");
    }
}

#[test]
fn skip_ablation_changes_output() {
    let cfg = GeneratorConfig { size: 32, widths: vec![8, 16, 16], stem: 4, scale: 2, ..GeneratorConfig::default() };
    let mut gen = Generator::<f64>::new(&cfg, &mut rng(4)).unwrap();
    let x = uniform(Shape::new(1, 1, 32, 32), 0.0, 1.0, &mut rng(5));
    let run = |gen: &mut Generator<f64>, skips: Option<&[bool]>| {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let t = gen.trace(&mut g, v, Mode::Eval, skips).unwrap();
        assert_eq!(t.skips.len(), 3);
        g.value(t.output).clone()
    };
    let full = run(&mut gen, None);
    assert_eq!(run(&mut gen, Some(&[true, true, true])), full);
    for i in 0..2 {
        let mut on = [true; 3];
        on[i] = false;
        assert!(run(&mut gen, Some(&on)).max_abs_diff(&full) > 1e-6, "skip {i}");
    }
}

#[test]
fn miniature_generator_gradcheck() {
    let mut gen = Generator::<f64>::new(&mini(), &mut rng(6)).unwrap();
    let mut r = rng(13);
    let blocks = gen.morph.iter_mut().chain(std::iter::once(&mut gen.bottleneck));
    for mb in blocks.flat_map(|b| b.morphs.iter_mut()) {
        let s = mb.surface.weights.value().shape();
        *mb.surface.weights.value_mut() = tie_free_surface(s.c, s.h, 0.05, &mut r);
    }
    let x = tie_free(Shape::new(2, 1, 16, 16), 1.0 / 512.0, &mut rng(7));
    let x = x.map(|v| v + 0.5);
    let rep = gradcheck(
        &mut gen,
        &[x],
        |g, gen, v| {
            let y = gen.forward(g, v[0], Mode::Train)?;
            let w = g.input(Tensor::from_fn(g.shape(y), |b, _, i, j| ((b + 5 * i + 7 * j) % 13) as f64 / 6.0 - 1.0));
            let p = g.mul(y, w)?;
            Ok(g.sum(p))
        },
        GradcheckOptions { tolerance: 1e-3, max_elems: Some(24), ..GradcheckOptions::default() },
    )
    .unwrap();
    assert!(rep.passed(), "{:?}", rep.worst());
}

#[test]
fn discriminator_range_shape_and_errors() {
    let d = Discriminator::<f64>::new(&DiscriminatorConfig::default(), &mut rng(8)).unwrap();
    let mut r = rng(9);
    let mut g = Graph::new();
    let t = g.input(uniform(Shape::new(4, 1, 32, 32), 0.0, 1.0, &mut r));
    let m = g.input(uniform(Shape::new(4, 1, 32, 32), 0.0, 1.0, &mut r));
    let p = d.forward(&mut g, t, m).unwrap();
    assert_eq!(g.shape(p), Shape::new(4, 1, 1, 1));
    assert!(g.value(p).data().iter().all(|&v| v > 0.0 && v < 1.0));
    let small = g.input(Tensor::zeros(Shape::new(4, 1, 16, 16)));
    assert!(d.forward(&mut g, t, small).is_err());
    assert!(Discriminator::<f64>::new(&DiscriminatorConfig { widths: vec![] }, &mut r).is_err());
}

/// Real pairs have `mask == target`; fake pairs have an unrelated noise mask.
fn toy_batch(r: &mut impl Rng, n: usize) -> (Tensor<f32>, Tensor<f32>, Tensor<f32>) {
    let size = 16;
    let mut target = Tensor::zeros(Shape::new(n, 1, size, size));
    for b in 0..n {
        let (y0, x0) = (r.random_range(0..8), r.random_range(0..8));
        for i in y0..y0 + 8 {
            for j in x0..x0 + 8 {
                target.set(b, 0, i, j, 1.0);
            }
        }
    }
    let noise = Tensor::from_fn(target.shape(), |_, _, _, _| if r.random_bool(0.5) { 1.0 } else { 0.0 });
    (target.clone(), target, noise)
}

#[test]
fn discriminator_learns_separable_toy() {
    let mut d = Discriminator::<f32>::new(&DiscriminatorConfig::default(), &mut rng(10)).unwrap();
    let opt = Adam::with_lr(1e-3);
    let mut r = rng(11);
    for _ in 0..50 {
        let (t, real, fake) = toy_batch(&mut r, 8);
        let mut g = Graph::new();
        let (tv, rv, fv) = (g.input(t), g.input(real), g.input(fake));
        let lr = d.logits(&mut g, tv, rv).unwrap();
        let lf = d.logits(&mut g, tv, fv).unwrap();
        let a = g.log_sigmoid(lr);
        let nf = g.neg(lf);
        let b = g.log_sigmoid(nf);
        let s = g.add(a, b).unwrap();
        let m = g.mean(s);
        let loss = g.neg(m);
        g.backward(loss).unwrap();
        d.zero_grads();
        d.collect_grads(&g);
        opt.step_module(&mut d).unwrap();
    }
    let (t, real, fake) = toy_batch(&mut rng(12), 64);
    let mut g = Graph::new();
    let (tv, rv, fv) = (g.input(t), g.input(real), g.input(fake));
    let pr = d.forward(&mut g, tv, rv).unwrap();
    let pf = d.forward(&mut g, tv, fv).unwrap();
    let correct = g.value(pr).data().iter().filter(|&&p| p > 0.5).count()
        + g.value(pf).data().iter().filter(|&&p| p < 0.5).count();
    let acc = correct as f64 / 128.0;
    assert!(acc > 0.9, "accuracy {acc}");
    assert!(g.value(pr).max_abs_diff(g.value(pf)) > 0.0);
}

#[test]
fn binarize_rules() {
    let t = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![0.49, 0.5, 0.51, 0.0]).unwrap();
    let b = binarize(&t, 0.5);
    assert_eq!(b.data(), &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(binarize(&b, 0.5), b);
    let grids = binarize_grids(&t, 0.5);
    assert_eq!(grids.len(), 1);
    assert_eq!(grids[0].count(), 2);
    assert!(grids[0].get(0, 1) && grids[0].get(1, 0));
}
