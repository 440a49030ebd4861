//! Acceptance criteria 1 to 8. Each test prints one `criterion N PASS|FAIL`
//! line. Criteria 6 and 7 train full-size models and are opt-in:
//! `cargo test --test acceptance -- --include-ignored`.

mod common;

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{brute_epe, epe_fixtures, morph_oracle, random_grid, rng, tie_free, tie_free_surface, uniform};
use morphopc::autodiff::{gradcheck, BatchNorm, GradcheckOptions, GradcheckReport, Graph, Mode, Parameter, Var};
use morphopc::data::{build_dataset, Dataset, IltConfig, LabeledTile, LayoutSpec, Split};
use morphopc::litho::{Kernel, LithoModel, LithoSim};
use morphopc::metrics::{epe_violations, l2_error, pvb, shot_decomposition, write_report, EpeConfig, ReportRow};
use morphopc::morphology::{dilate, erode, gate_mix, MorphBasicBlock, MorphBasicConfig, MultiScaleConfig, MultiScaleMorphBlock, StructuringSurface};
use morphopc::network::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use morphopc::training::{
    evaluate_checkpoint, evaluate_masks, predict, scale_factor_sweep, train, write_sweep_csv, Stage, SweepSetup,
    SweepStatus, TrainConfig, TrainOutput,
};
use morphopc::{parallel, BinaryGrid, Result, Shape, Tensor};
use rand::{Rng, SeedableRng};

/// Written straight to stdout so the line shows even when output is captured.
fn report(n: u32, ok: bool, what: &str, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n} {verdict}: {what} ({detail})").unwrap();
    out.flush().unwrap();
}

fn weights_like(g: &mut Graph<f64>, y: Var) -> Var {
    g.input(Tensor::from_fn(g.shape(y), |b, c, i, j| ((b + 3 * c + 5 * i + 7 * j) % 11) as f64 / 5.0 - 1.0))
}

/// `sum(y * W)` for a fixed non-constant `W`.
fn weighted(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    let w = weights_like(g, y);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

type Check = Box<dyn FnMut() -> Result<GradcheckReport>>;

fn op_check(
    inputs: Vec<Tensor<f64>>,
    opts: GradcheckOptions,
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'static,
) -> Check {
    Box::new(move || gradcheck(&mut Vec::<Parameter<f64>>::new(), &inputs, |g, _, v| f(g, v), opts))
}

/// Tie-free values kept away from zero so ReLU kinks are not straddled.
fn off_zero(shape: Shape, r: &mut impl Rng) -> Tensor<f64> {
    tie_free(shape, 0.05, r).map(|v| v + 0.025)
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut r = rng(1001);
    let tight = GradcheckOptions::default();
    let loose = GradcheckOptions { tolerance: 1e-3, ..tight };
    let s = Shape::new(2, 3, 5, 6);
    let mut checks: Vec<(&str, Check)> = Vec::new();
    let (x, y) = (uniform(s, -1.0, 1.0, &mut r), uniform(s, -1.0, 1.0, &mut r));
    let chan = uniform(Shape::channels(3), -1.0, 1.0, &mut r);
    checks.push(("add", op_check(vec![x.clone(), y.clone()], tight, |g, v| { let o = g.add(v[0], v[1])?; weighted(g, o) })));
    checks.push(("add channel", op_check(vec![x.clone(), chan.clone()], tight, |g, v| { let o = g.add(v[0], v[1])?; weighted(g, o) })));
    checks.push(("sub", op_check(vec![x.clone(), y.clone()], tight, |g, v| { let o = g.sub(v[0], v[1])?; weighted(g, o) })));
    checks.push(("mul", op_check(vec![x.clone(), y.clone()], tight, |g, v| { let o = g.mul(v[0], v[1])?; weighted(g, o) })));
    checks.push(("mul channel", op_check(vec![x.clone(), chan.clone()], tight, |g, v| { let o = g.mul(v[0], v[1])?; weighted(g, o) })));
    checks.push(("affine", op_check(vec![x.clone()], tight, |g, v| { let o = g.affine(v[0], -1.5, 0.25); weighted(g, o) })));
    checks.push(("scale", op_check(vec![x.clone()], tight, |g, v| { let o = g.scale(v[0], 2.5); weighted(g, o) })));
    checks.push(("neg", op_check(vec![x.clone()], tight, |g, v| { let o = g.neg(v[0]); weighted(g, o) })));
    checks.push(("square", op_check(vec![x.clone()], tight, |g, v| { let o = g.square(v[0]); weighted(g, o) })));
    checks.push(("sigmoid", op_check(vec![x.clone().map(|v| 4.0 * v)], tight, |g, v| { let o = g.sigmoid(v[0]); weighted(g, o) })));
    checks.push(("relu", op_check(vec![off_zero(s, &mut r)], tight, |g, v| { let o = g.relu(v[0]); weighted(g, o) })));
    checks.push(("log_sigmoid", op_check(vec![x.clone().map(|v| 6.0 * v)], tight, |g, v| { let o = g.log_sigmoid(v[0]); weighted(g, o) })));
    checks.push(("sum", op_check(vec![x.clone()], tight, |g, v| { let o = g.square(v[0]); Ok(g.sum(o)) })));
    checks.push(("mean", op_check(vec![x.clone()], tight, |g, v| { let o = g.square(v[0]); Ok(g.mean(o)) })));
    checks.push(("spatial_mean", op_check(vec![x.clone()], tight, |g, v| { let o = g.spatial_mean(v[0]); weighted(g, o) })));
    checks.push(("mse", op_check(vec![x.clone(), y.clone()], tight, |g, v| g.mse(v[0], v[1]))));
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (5, 2, 2)] {
        let w = uniform(Shape::new(4, 3, k, k), -0.5, 0.5, &mut r);
        let b = uniform(Shape::channels(4), -0.5, 0.5, &mut r);
        let name = match (k, stride) { (3, 1) => "conv2d 3x3", (3, _) => "conv2d 3x3 stride 2", (1, _) => "conv2d 1x1", _ => "conv2d 5x5 stride 2" };
        checks.push((name, op_check(vec![x.clone(), w, b], tight, move |g, v| { let o = g.conv2d(v[0], v[1], Some(v[2]), stride, pad)?; weighted(g, o) })));
    }
    checks.push(("concat_channels", op_check(vec![x.clone(), uniform(Shape::new(2, 2, 5, 6), -1.0, 1.0, &mut r)], tight, |g, v| { let o = g.concat_channels(&[v[0], v[1]])?; weighted(g, o) })));
    checks.push(("slice_channels", op_check(vec![x.clone()], tight, |g, v| { let o = g.slice_channels(v[0], 1, 2)?; weighted(g, o) })));
    checks.push(("split_channels", op_check(vec![uniform(Shape::new(2, 4, 5, 6), -1.0, 1.0, &mut r)], tight, |g, v| {
        let p = g.split_channels(v[0], 2)?;
        let q = g.square(p[1]);
        let o = g.add(p[0], q)?;
        weighted(g, o)
    })));
    checks.push(("pixel_shuffle", op_check(vec![uniform(Shape::new(2, 8, 3, 4), -1.0, 1.0, &mut r)], tight, |g, v| { let o = g.pixel_shuffle(v[0], 2)?; weighted(g, o) })));
    let gamma = uniform(Shape::channels(3), 0.5, 1.5, &mut r);
    let beta = uniform(Shape::channels(3), -0.5, 0.5, &mut r);
    checks.push(("batchnorm train", op_check(vec![x.clone(), gamma.clone(), beta.clone()], loose, |g, v| {
        let (o, _, _) = g.batchnorm_train(v[0], v[1], v[2], BatchNorm::<f64>::EPS)?;
        weighted(g, o)
    })));
    checks.push(("batchnorm eval", op_check(vec![x.clone(), gamma, beta], loose, |g, v| {
        let o = g.batchnorm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], BatchNorm::<f64>::EPS)?;
        weighted(g, o)
    })));
    for k in [3, 5] {
        let xs = tie_free(Shape::new(2, 3, 7, 6), 0.05, &mut r);
        let w = tie_free_surface(3, k, 0.05, &mut r);
        let b = uniform(Shape::channels(3), -1.0, 1.0, &mut r);
        checks.push((if k == 3 { "dilate 3x3" } else { "dilate 5x5" }, op_check(vec![xs.clone(), w.clone(), b.clone()], tight, |g, v| { let o = dilate(g, v[0], v[1], v[2])?; weighted(g, o) })));
        checks.push((if k == 3 { "erode 3x3" } else { "erode 5x5" }, op_check(vec![xs, w, b], tight, |g, v| { let o = erode(g, v[0], v[1], v[2])?; weighted(g, o) })));
    }
    checks.push(("gate_mix", op_check(vec![x.clone(), y.clone(), chan], tight, |g, v| { let o = gate_mix(g, v[0], v[1], v[2])?; weighted(g, o) })));

    let mut mb = MorphBasicBlock::<f64>::new("mb", &MorphBasicConfig::new(2, 3), &mut r).unwrap();
    mb.surface = StructuringSurface::from_tensors("se", tie_free_surface(2, 3, 0.05, &mut r), uniform(Shape::channels(2), -1.0, 1.0, &mut r)).unwrap();
    mb.gate.logits.value_mut().data_mut().copy_from_slice(&[0.3, -0.7]);
    let xm = tie_free(Shape::new(2, 2, 6, 6), 0.05, &mut r);
    checks.push(("MorphBasic", Box::new(move || gradcheck(&mut mb, &[xm.clone()], |g, m, v| { let o = m.forward(g, v[0], Mode::Train)?; weighted(g, o) }, tight))));

    let mut ms = MultiScaleMorphBlock::<f64>::new("ms", &MultiScaleConfig::new(4, 2), &mut r).unwrap();
    ms.morphs[0].surface = StructuringSurface::from_tensors("se", tie_free_surface(2, 5, 0.05, &mut r), uniform(Shape::channels(2), -1.0, 1.0, &mut r)).unwrap();
    let xs = tie_free(Shape::new(2, 4, 5, 5), 0.02, &mut r);
    checks.push(("MultiScaleMorph", Box::new(move || gradcheck(&mut ms, &[xs.clone()], |g, m, v| { let o = m.forward(g, v[0], Mode::Train)?; weighted(g, o) }, tight))));

    let cfg = GeneratorConfig { size: 16, widths: vec![8, 8], stem: 4, scale: 2, ..GeneratorConfig::default() };
    let mut gen = Generator::<f64>::new(&cfg, &mut r).unwrap();
    let blocks = gen.morph.iter_mut().chain(std::iter::once(&mut gen.bottleneck));
    for b in blocks.flat_map(|b| b.morphs.iter_mut()) {
        let sh = b.surface.weights.value().shape();
        *b.surface.weights.value_mut() = tie_free_surface(sh.c, sh.h, 0.05, &mut r);
    }
    let xg = tie_free(Shape::new(2, 1, 16, 16), 1.0 / 512.0, &mut r).map(|v| v + 0.5);
    let gen_opts = GradcheckOptions { max_elems: Some(24), ..loose };
    checks.push(("2-scale generator", Box::new(move || gradcheck(&mut gen, &[xg.clone()], |g, m, v| { let o = m.forward(g, v[0], Mode::Train)?; weighted(g, o) }, gen_opts))));

    let k = 5;
    let mut kv = || (0..k * k).map(|_| r.random_range(-0.3..0.3)).collect::<Vec<f64>>();
    let model = LithoModel {
        size: k,
        kernels: vec![Kernel { re: kv(), im: Some(kv()), weight: 0.7 }, Kernel { re: kv(), im: None, weight: 0.3 }],
        steepness: 4.0,
        ..LithoModel::gaussian(2.0)
    };
    let sim = LithoSim::<f64>::new(model, 12, 12).unwrap();
    let mask = uniform(Shape::new(2, 1, 12, 12), 0.0, 1.0, &mut r);
    let target = uniform(Shape::new(2, 1, 12, 12), 0.0, 1.0, &mut r);
    checks.push(("soft litho print", op_check(vec![mask, target], tight, move |g, v| {
        let z = sim.print_soft(g, v[0], 1.02)?;
        g.mse(z, v[1])
    })));

    let mut failed = Vec::new();
    let total = checks.len();
    for (name, mut c) in checks {
        let rep = c().unwrap();
        if !rep.passed() {
            failed.push(format!("{name}: {:?}", rep.worst()));
        }
    }
    let elapsed = start.elapsed();
    let ok = failed.is_empty() && elapsed < Duration::from_secs(120);
    let detail = format!("{total} checks, {} failed, {:.1}s{}", failed.len(), elapsed.as_secs_f64(), if failed.is_empty() { String::new() } else { format!("; {}", failed.join("; ")) });
    report(1, ok, "finite-difference gradient checks", &detail);
    assert!(ok, "{detail}");
}

fn run_morph(x: &Tensor<f64>, se: &StructuringSurface<f64>, ero: bool) -> Tensor<f64> {
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let y = if ero { se.erode(&mut g, v) } else { se.dilate(&mut g, v) }.unwrap();
    g.value(y).clone()
}

#[test]
fn criterion_2_morphology_oracles() {
    let start = Instant::now();
    let mut r = rng(1002);
    let mut bad = Vec::new();
    for case in 0..200 {
        let c = r.random_range(1..=6);
        let k = [1, 3, 5, 7][case % 4];
        let (h, w) = (r.random_range(1..=16), r.random_range(1..=16));
        let shape = Shape::new(r.random_range(1..=2), c, h, w);
        let x = uniform(shape, -3.0, 3.0, &mut r);
        let wt = uniform(Shape::new(1, c, k, k), -1.0, 1.0, &mut r);
        let bias = uniform(Shape::channels(c), -1.0, 1.0, &mut r);
        let se = StructuringSurface::from_tensors("se", wt.clone(), bias.clone()).unwrap();
        let d = run_morph(&x, &se, false);
        let e = run_morph(&x, &se, true);
        for (got, ero) in [(&d, false), (&e, true)] {
            let want = morph_oracle(&x, &wt, bias.data(), ero);
            if got.data().iter().zip(want.data()).any(|(a, b)| (a - b).abs() > 1e-6 * b.abs().max(1.0)) {
                bad.push(format!("case {case} oracle"));
            }
        }
        // erosion by W equals negated dilation of -x by the reflected surface
        let unbiased = StructuringSurface::from_tensors("u", wt.clone(), Tensor::zeros(Shape::channels(c))).unwrap();
        let refl = StructuringSurface::from_tensors("r", unbiased.reflected(), Tensor::zeros(Shape::channels(c))).unwrap();
        if run_morph(&x, &unbiased, true) != run_morph(&x.map(|v| -v), &refl, false).map(|v| -v) {
            bad.push(format!("case {case} duality"));
        }
        let flat = StructuringSurface::<f64>::flat("f", c, k).unwrap();
        let (fd, fe) = (run_morph(&x, &flat, false), run_morph(&x, &flat, true));
        if (0..x.numel()).any(|i| !(fe.data()[i] <= x.data()[i] && x.data()[i] <= fd.data()[i])) {
            bad.push(format!("case {case} extensivity"));
        }
        let x2 = Tensor::from_vec(shape, x.data().iter().map(|&v| v + r.random_range(0.0..0.5)).collect()).unwrap();
        let (d2, e2) = (run_morph(&x2, &se, false), run_morph(&x2, &se, true));
        if d.data().iter().zip(d2.data()).any(|(a, b)| a > b) || e.data().iter().zip(e2.data()).any(|(a, b)| a > b) {
            bad.push(format!("case {case} monotonicity"));
        }
        let mut mb = MorphBasicBlock::<f64>::new("mb", &MorphBasicConfig::new(c, k), &mut r).unwrap();
        mb.surface = se;
        for v in mb.gate.logits.value_mut().data_mut() {
            *v = r.random_range(-5.0..5.0);
        }
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = mb.gated_fuse(&mut g, xv).unwrap();
        let yv = g.value(y);
        if (0..x.numel()).any(|i| {
            let (lo, hi) = (d.data()[i].min(e.data()[i]), d.data()[i].max(e.data()[i]));
            yv.data()[i] < lo - 1e-12 || yv.data()[i] > hi + 1e-12
        }) {
            bad.push(format!("case {case} convexity"));
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && elapsed < Duration::from_secs(60);
    let detail = format!("200 cases, {} violations, {:.1}s {}", bad.len(), elapsed.as_secs_f64(), bad.join(", "));
    report(2, ok, "morphology oracle and properties", detail.trim_end());
    assert!(ok, "{detail}");
}

fn xor_popcount(a: &BinaryGrid, b: &BinaryGrid) -> usize {
    a.data().iter().zip(b.data()).filter(|(p, q)| p != q).count()
}

/// Exact disjoint cover check; returns the number of rectangles.
fn cover_count(mask: &BinaryGrid) -> Option<usize> {
    let rects = shot_decomposition(mask);
    let mut hits = vec![0u32; mask.height() * mask.width()];
    for rc in &rects {
        for y in rc.y0..rc.y1 {
            for x in rc.x0..rc.x1 {
                hits[y * mask.width() + x] += 1;
            }
        }
    }
    let exact = hits.iter().zip(mask.data()).all(|(&h, &m)| h == m as u32);
    exact.then_some(rects.len())
}

#[test]
fn criterion_3_metric_oracles() {
    let start = Instant::now();
    let mut r = rng(1003);
    let mut bad = Vec::new();
    for i in 0..100 {
        let (h, w) = (r.random_range(1..40), r.random_range(1..40));
        let a = random_grid(h, w, r.random_range(0.1..0.9), &mut r);
        let b = random_grid(h, w, r.random_range(0.1..0.9), &mut r);
        if l2_error(&a, &b).unwrap() != xor_popcount(&a, &b) {
            bad.push(format!("l2 pair {i}"));
        }
        if cover_count(&a).is_none() {
            bad.push(format!("cover {i}"));
        }
        let zmin = BinaryGrid::from_fn(h, w, |y, x| a.get(y, x) && r.random_bool(0.7));
        let diff = (0..h * w).filter(|&j| a.data()[j] && !zmin.data()[j]).count();
        if pvb(&zmin, &a).unwrap() != diff {
            bad.push(format!("pvb {i}"));
        }
    }
    for k in 1..=10 {
        let mut g = BinaryGrid::new(40, 30);
        let mut cells: Vec<usize> = (0..12).collect();
        for i in 0..k {
            let j = r.random_range(i..12);
            cells.swap(i, j);
            let (cy, cx) = (cells[i] / 3 * 10, cells[i] % 3 * 10);
            g.fill_rect(cy, cx, cy + r.random_range(1..10), cx + r.random_range(1..10), true);
        }
        if cover_count(&g) != Some(k) {
            bad.push(format!("{k} rectangles"));
        }
    }
    let cfg = EpeConfig::for_pitch(4.0);
    let fixtures = epe_fixtures(&cfg);
    for (name, target, printed) in &fixtures {
        if epe_violations(printed, target, &cfg).unwrap() != brute_epe(printed, target, &cfg) {
            bad.push(format!("epe {name}"));
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && fixtures.len() == 10 && elapsed < Duration::from_secs(60);
    let detail = format!("100 pairs, 10 rectangle sets, {} EPE fixtures, {} mismatches, {:.1}s {}", fixtures.len(), bad.len(), elapsed.as_secs_f64(), bad.join(", "));
    report(3, ok, "metric oracles", detail.trim_end());
    assert!(ok, "{detail}");
}

fn block_mask(h: usize, w: usize, r: &mut impl Rng) -> BinaryGrid {
    let mut g = BinaryGrid::new(h, w);
    for _ in 0..r.random_range(1..5) {
        let (y0, x0) = (r.random_range(0..h - 4), r.random_range(0..w - 4));
        let (y1, x1) = (r.random_range(y0 + 2..h), r.random_range(x0 + 2..w));
        g.fill_rect(y0, x0, y1, x1, true);
    }
    g
}

#[test]
fn criterion_4_litho_properties() {
    let start = Instant::now();
    let mut r = rng(1004);
    let mut bad = Vec::new();
    let sim = LithoSim::<f64>::new(LithoModel::gaussian(4.0), 64, 64).unwrap();
    let masks: Vec<BinaryGrid> = (0..32).map(|_| block_mask(64, 64, &mut r)).collect();
    let refs: Vec<&BinaryGrid> = masks.iter().collect();
    for (i, b) in sim.print_band(&BinaryGrid::stack(&refs)).unwrap().iter().enumerate() {
        if !(b.min.is_subset_of(&b.nominal) && b.nominal.is_subset_of(&b.max)) {
            bad.push(format!("nesting {i}"));
        }
    }
    let k = 5;
    let mut kv = || (0..k * k).map(|_| r.random_range(-0.3..0.3)).collect::<Vec<f64>>();
    let model = LithoModel {
        size: k,
        kernels: vec![Kernel { re: kv(), im: Some(kv()), weight: 0.7 }, Kernel { re: kv(), im: None, weight: 0.3 }],
        ..LithoModel::gaussian(2.0)
    };
    let socs = LithoSim::<f64>::new(model, 24, 24).unwrap();
    for i in 0..32 {
        let m = uniform(Shape::new(1, 1, 24, 24), 0.0, 1.0, &mut r);
        let unit = socs.aerial(&m, 1.0).unwrap();
        if unit.data().iter().any(|&v| v < 0.0) {
            bad.push(format!("negative aerial {i}"));
        }
        for d in [0.98, 1.02] {
            if socs.aerial(&m, d).unwrap() != unit.map(|v| d * v) {
                bad.push(format!("dose ratio {i} at {d}"));
            }
        }
    }
    let tsim = LithoSim::<f64>::new(LithoModel::gaussian(2.0), 48, 48).unwrap();
    for trial in 0..8 {
        let mut mask = BinaryGrid::new(48, 48);
        for _ in 0..6 {
            let (y, x) = (r.random_range(14..26), r.random_range(14..26));
            mask.fill_rect(y, x, y + 6, x + 4, true);
        }
        let (dy, dx) = (r.random_range(-5..=5i32) as isize, r.random_range(-5..=5i32) as isize);
        let moved = mask.shifted(dy, dx);
        let a = tsim.aerial(&mask.to_tensor(), 1.0).unwrap();
        let b = tsim.aerial(&moved.to_tensor(), 1.0).unwrap();
        let pa = tsim.print_grid(&mask).unwrap().shifted(dy, dx);
        let pb = tsim.print_grid(&moved).unwrap();
        for y in 8..40 {
            for x in 8..40 {
                let (sy, sx) = ((y as isize - dy) as usize, (x as isize - dx) as usize);
                if (b.at(0, 0, y, x) - a.at(0, 0, sy, sx)).abs() > 1e-12 || pa.get(y, x) != pb.get(y, x) {
                    bad.push(format!("translation {trial} at ({y}, {x})"));
                }
            }
        }
    }
    bad.dedup_by(|a, b| a.split(" at").next() == b.split(" at").next());
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && elapsed < Duration::from_secs(60);
    let detail = format!("32 nested bands, 32 dose-ratio masks, 8 shifts, {} violations, {:.1}s {}", bad.len(), elapsed.as_secs_f64(), bad.join(", "));
    report(4, ok, "litho properties", detail.trim_end());
    assert!(ok, "{detail}");
}

#[test]
fn criterion_5_zero_gate_is_even_mixture() {
    let mut r = rng(1005);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let c = r.random_range(1..=8);
        let k = [3, 5][r.random_range(0..2)];
        let mut mb = MorphBasicBlock::<f64>::new("mb", &MorphBasicConfig::new(c, k), &mut r).unwrap();
        assert!(mb.gate.logits.value().data().iter().all(|&v| v == 0.0));
        mb.surface = StructuringSurface::from_tensors(
            "se",
            uniform(Shape::new(1, c, k, k), -1.0, 1.0, &mut r),
            uniform(Shape::channels(c), -1.0, 1.0, &mut r),
        )
        .unwrap();
        let x = uniform(Shape::new(2, c, 9, 9), -2.0, 2.0, &mut r);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = mb.gated_fuse(&mut g, xv).unwrap();
        let (d, e) = (run_morph(&x, &mb.surface, false), run_morph(&x, &mb.surface, true));
        for i in 0..x.numel() {
            worst = worst.max((g.value(y).data()[i] - 0.5 * (d.data()[i] + e.data()[i])).abs());
        }
    }
    let ok = worst <= 1e-12;
    report(5, ok, "zero gate equals the 0.5/0.5 mixture", &format!("max deviation {worst:.3e}, tolerance 1e-12"));
    assert!(ok);
}

struct DeskData {
    _dir: tempfile::TempDir,
    ds: Dataset,
    build: Duration,
}

/// The 64-tile 128x128 dataset shared by criteria 6 and 7.
fn desk_data() -> &'static DeskData {
    static DATA: OnceLock<DeskData> = OnceLock::new();
    DATA.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let sim = LithoSim::<f64>::new(LithoModel::gaussian(8.0), 128, 128).unwrap();
        build_dataset(dir.path(), &LayoutSpec::default(), 64, &sim, &IltConfig::default()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        DeskData { _dir: dir, ds, build: start.elapsed() }
    })
}

fn seeded_models(cfg: &GeneratorConfig, seed: u64) -> (Generator<f32>, Discriminator<f32>) {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let gen = Generator::new(cfg, &mut r).unwrap();
    let disc = Discriminator::new(&DiscriminatorConfig::default(), &mut r).unwrap();
    (gen, disc)
}

#[test]
#[ignore = "desk-scale training run; use --include-ignored"]
fn criterion_6_desk_scale_learning_trend() {
    let data = desk_data();
    let start = Instant::now();
    let train_set = data.ds.split(Split::Train);
    let val = data.ds.split(Split::Val);
    let (mut gen, mut disc) = seeded_models(&GeneratorConfig::default(), 42);
    let model = LithoModel::gaussian(8.0);
    let sim32 = LithoSim::<f32>::new(model.clone(), 128, 128).unwrap();
    let sim64 = LithoSim::<f64>::new(model, 128, 128).unwrap();
    let cfg = TrainConfig::default();
    train(&train_set, &mut gen, None, None, Stage::Pretrain, &cfg, &TrainOutput::default()).unwrap();
    train(&train_set, &mut gen, Some(&mut disc), Some(&sim32), Stage::Finetune, &cfg, &TrainOutput::default()).unwrap();
    let masks = predict(&mut gen, &val, cfg.batch_size).unwrap();
    let evals = evaluate_masks(&masks, &val, &sim64, &EpeConfig::for_pitch(4.0)).unwrap();
    let n = evals.len();
    let below = evals.iter().filter(|e| e.metrics.l2 < e.baseline_l2).count();
    let near = evals.iter().filter(|e| e.metrics.l2 as f64 <= 1.25 * e.oracle_l2 as f64).count();
    let mean = |f: &dyn Fn(&morphopc::training::TileEval) -> usize| evals.iter().map(f).sum::<usize>() as f64 / n as f64;
    let (a, b) = (below * 5 >= n * 4, near * 2 >= n);
    let ok = a && b && n > 0;
    let detail = format!(
        "{n} held-out tiles; below baseline {below}/{n} [{}]; within 25% of ILT oracle {near}/{n} [{}]; mean l2 model {:.1} baseline {:.1} oracle {:.1}; data {:.0}s, training {:.0}s",
        if a { "pass" } else { "fail" },
        if b { "pass" } else { "fail" },
        mean(&|e| e.metrics.l2),
        mean(&|e| e.baseline_l2),
        mean(&|e| e.oracle_l2),
        data.build.as_secs_f64(),
        start.elapsed().as_secs_f64()
    );
    report(6, ok, "desk-scale learning trend", &detail);
    assert!(ok, "{detail}");
}

#[test]
#[ignore = "desk-scale training run; use --include-ignored"]
fn criterion_7_scale_factor_sweep() {
    let data = desk_data();
    let start = Instant::now();
    let train_set = data.ds.split(Split::Train);
    let val = data.ds.split(Split::Val);
    let model = LithoModel::gaussian(8.0);
    let out = tempfile::tempdir().unwrap();
    let gen_cfg = GeneratorConfig::default();
    let stage = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let setup = SweepSetup {
        train: &train_set,
        val: &val,
        generator: &gen_cfg,
        discriminator: &DiscriminatorConfig::default(),
        pretrain: &stage,
        finetune: &stage,
        sim: &LithoSim::new(model.clone(), 128, 128).unwrap(),
        eval_sim: &LithoSim::new(model, 128, 128).unwrap(),
        epe: &EpeConfig::for_pitch(4.0),
        out: out.path(),
    };
    let rows = scale_factor_sweep(&setup, &[4, 8]).unwrap();
    let csv = out.path().join("sweep.csv");
    write_sweep_csv(&csv, &rows).unwrap();
    let lines = std::fs::read_to_string(&csv).unwrap().lines().count();
    let mut rederived = 0;
    for row in rows.iter().filter(|r| r.status == SweepStatus::Trained) {
        let cfg = GeneratorConfig { scale: row.scale, ..gen_cfg.clone() };
        let again = evaluate_checkpoint(&setup, &cfg, Path::new(&row.checkpoint)).unwrap();
        if again == [row.mse, row.l2, row.epe, row.pvb, row.shots] {
            rederived += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = rows.len() == 2 && rederived == 2 && lines == 3 && elapsed < Duration::from_secs(45 * 60);
    let table: Vec<String> = rows.iter().map(|r| format!("s={} l2 {:.1} epe {:.2} pvb {:.1} shots {:.1} mse {:.4}", r.scale, r.l2, r.epe, r.pvb, r.shots, r.mse)).collect();
    let detail = format!("{} rows, {rederived} re-derived from checkpoints, {:.0}s; {}", rows.len(), elapsed.as_secs_f64(), table.join("; "));
    report(7, ok, "scale-factor sweep harness", &detail);
    assert!(ok, "{detail}");
}

/// Dataset, two-stage training and metric report under one root.
fn deterministic_run(root: &Path) -> Vec<(String, Vec<u8>)> {
    let spec = LayoutSpec {
        size: 64,
        min_width: 8,
        max_width: 10,
        min_spacing: 8,
        max_length: 40,
        margin: 4,
        max_shapes: 3,
        ..LayoutSpec::default()
    };
    let model = LithoModel::gaussian(3.0);
    let sim64 = LithoSim::<f64>::new(model.clone(), 64, 64).unwrap();
    let sim32 = LithoSim::<f32>::new(model, 64, 64).unwrap();
    build_dataset(&root.join("data"), &spec, 8, &sim64, &IltConfig { steps: 40, ..IltConfig::default() }).unwrap();
    let ds = Dataset::load(&root.join("data")).unwrap();
    let tiles: Vec<&LabeledTile> = ds.tiles.iter().collect();
    let cfg = GeneratorConfig { size: 64, widths: vec![16, 32], stem: 8, scale: 4, ..GeneratorConfig::default() };
    let (mut gen, mut disc) = seeded_models(&cfg, 7);
    let tc = TrainConfig { epochs: 2, batch_size: 3, lr: 1e-3, ..TrainConfig::default() };
    let out = TrainOutput { dir: Some(root.join("ckpt")), first_step: 0 };
    let pre = train(&tiles, &mut gen, None, None, Stage::Pretrain, &tc, &out).unwrap();
    pre.write_csv(&root.join("pretrain.csv")).unwrap();
    let out = TrainOutput { first_step: pre.records.len(), ..out };
    let fine = train(&tiles, &mut gen, Some(&mut disc), Some(&sim32), Stage::Finetune, &tc, &out).unwrap();
    fine.write_csv(&root.join("finetune.csv")).unwrap();
    let masks = predict(&mut gen, &tiles, 3).unwrap();
    let evals = evaluate_masks(&masks, &tiles, &sim64, &EpeConfig::for_pitch(4.0)).unwrap();
    let rows: Vec<ReportRow> = evals.iter().map(|e| ReportRow::new(&e.id, e.metrics, &sim64, "det")).collect();
    write_report(&root.join("metrics.csv"), &rows).unwrap();
    let mut files = vec!["pretrain.csv".to_string(), "finetune.csv".into(), "metrics.csv".into(), "data/manifest.csv".into()];
    files.extend(pre.checkpoints.iter().chain(&fine.checkpoints).map(|p| p.strip_prefix(root).unwrap().display().to_string()));
    files.into_iter().map(|f| { let b = std::fs::read(root.join(&f)).unwrap(); (f, b) }).collect()
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = deterministic_run(a.path());
    let rb = deterministic_run(b.path());
    let was = parallel::enabled();
    parallel::set_enabled(false);
    let rc = deterministic_run(c.path());
    parallel::set_enabled(was);
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .zip(&rc)
        .filter(|((x, y), z)| x != y || x != z)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    let ok = differing.is_empty() && ra.len() == rb.len() && ra.len() > 4;
    let detail = format!(
        "{} files compared across two runs and a sequential run, {} differ, {:.1}s {}",
        ra.len(),
        differing.len(),
        start.elapsed().as_secs_f64(),
        differing.join(", ")
    );
    report(8, ok, "byte-identical traces and metric CSVs", detail.trim_end());
    assert!(ok, "{detail}");
}
