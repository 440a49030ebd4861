//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use morphopc::autodiff::{checkpoint, Graph, Mode};
use morphopc::config::Config;
use morphopc::data::{build_dataset, Dataset, LabeledTile, Split};
use morphopc::litho::LithoSim;
use morphopc::metrics::{evaluate, mean, ReportRow};
use morphopc::morphology::delta::export_delta_maps;
use morphopc::network::{binarize_grids, Discriminator, Generator};
use morphopc::parallel;
use morphopc::training::{self, scale_factor_sweep, write_sweep_csv, Stage, SweepSetup, TrainOutput};
use morphopc::{BinaryGrid, Shape, Tensor};

use crate::images;
use crate::{Failure, SplitArg};

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn snapshot(cfg: &Config, path: &Path) -> Result<(), Failure> {
    cfg.save(path)?;
    log::info!("config {} -> {}", cfg.hash(), path.display());
    Ok(())
}

fn eval_sim(cfg: &Config) -> Result<LithoSim<f64>, Failure> {
    let n = cfg.data.layout.size;
    Ok(LithoSim::new(cfg.litho.build()?, n, n)?)
}

fn load_generator(cfg: &Config, path: &Path) -> Result<Generator<f32>, Failure> {
    let mut gen = Generator::new(&cfg.network.generator, &mut ChaCha8Rng::seed_from_u64(0))?;
    checkpoint::load(&mut gen, path)?;
    Ok(gen)
}

fn select(ds: &Dataset, split: SplitArg) -> Vec<&LabeledTile> {
    match split {
        SplitArg::Train => ds.split(Split::Train),
        SplitArg::Val => ds.split(Split::Val),
        SplitArg::All => ds.tiles.iter().collect(),
    }
}

pub fn gen_data(cfg: &Config, out: &Path, count: Option<usize>) -> Result<(), Failure> {
    create_dir(out)?;
    let count = count.unwrap_or(cfg.data.count);
    let sim = eval_sim(cfg)?;
    let rows = build_dataset(out, &cfg.data.layout, count, &sim, &cfg.data.ilt)?;
    let val = rows.iter().filter(|r| r.split == Split::Val).count();
    log::info!("{} tiles ({val} validation) in {}", rows.len(), out.display());
    snapshot(cfg, &out.join("config.toml"))
}

pub fn train(cfg: &Config, stage: Stage, dataset: &Path, out: &Path, init: Option<&Path>) -> Result<(), Failure> {
    let ds = Dataset::load(dataset)?;
    let tiles = ds.split(Split::Train);
    if tiles.is_empty() {
        return Err(Failure::Data(format!("{}: no training tiles", dataset.display())));
    }
    let tc = match stage {
        Stage::Pretrain => &cfg.training.pretrain,
        Stage::Finetune => &cfg.training.finetune,
    };
    create_dir(out)?;
    snapshot(cfg, &out.join("config.toml"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut gen = Generator::<f32>::new(&cfg.network.generator, &mut rng)?;
    let start = match (stage, init) {
        (_, Some(p)) => Some(p.to_path_buf()),
        (Stage::Finetune, None) => {
            let p = out.join("pretrain_final_gen.mopc");
            if !p.exists() {
                return Err(Failure::Usage(format!(
                    "fine-tuning needs --init or {}",
                    p.display()
                )));
            }
            Some(p)
        }
        (Stage::Pretrain, None) => None,
    };
    if let Some(p) = &start {
        checkpoint::load(&mut gen, p)?;
        log::info!("generator initialized from {}", p.display());
    }
    let mut disc = if stage == Stage::Finetune && tc.uses_discriminator() {
        Some(Discriminator::<f32>::new(&cfg.network.discriminator, &mut rng)?)
    } else {
        None
    };
    let n = cfg.data.layout.size;
    let sim = match stage {
        Stage::Finetune => Some(LithoSim::<f32>::new(cfg.litho.build()?, n, n)?),
        Stage::Pretrain => None,
    };
    let output = TrainOutput {
        dir: Some(out.to_path_buf()),
        first_step: 0,
    };
    let log = training::train(&tiles, &mut gen, disc.as_mut(), sim.as_ref(), stage, tc, &output)?;
    log.write_csv(&out.join(format!("{}_log.csv", stage.name())))?;
    checkpoint::save(&mut gen, &out.join(format!("{}_final_gen.mopc", stage.name())))?;
    if let Some(d) = disc.as_mut() {
        checkpoint::save(d, &out.join(format!("{}_final_disc.mopc", stage.name())))?;
    }
    if let Some(last) = log.records.last() {
        log::info!(
            "{} done: {} steps, last mask loss {:.6}, print loss {:.6}",
            stage.name(),
            log.records.len(),
            last.loss_mask,
            last.loss_print
        );
    }
    Ok(())
}

pub fn infer(cfg: &Config, ckpt: &Path, dataset: &Path, out: &Path, split: SplitArg) -> Result<(), Failure> {
    let ds = Dataset::load(dataset)?;
    let tiles = select(&ds, split);
    let mut gen = load_generator(cfg, ckpt)?;
    let masks = training::predict(&mut gen, &tiles, cfg.training.pretrain.batch_size)?;
    create_dir(out)?;
    let written: Vec<Result<(), Failure>> = parallel::map_range(tiles.len(), |i| {
        let (t, m) = (tiles[i], &masks[i]);
        let s = m.shape();
        let levels = images::quantize(m.data());
        let bits = images::threshold_levels(&levels);
        images::save_levels(&out.join(format!("{}.cont.png", t.tile.id)), s.h, s.w, levels)?;
        images::save_binary(&out.join(format!("{}.bin.png", t.tile.id)), s.h, s.w, &bits)
    });
    written.into_iter().collect::<Result<(), Failure>>()?;
    log::info!("{} mask pairs in {}", tiles.len(), out.display());
    snapshot(cfg, &out.join("config.toml"))
}

/// `<id>` to path for every file in `dir` named `<id><suffix>`.
fn by_id(dir: &Path, suffix: &str) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(id) = name.strip_suffix(suffix) {
            out.insert(id.to_string(), path.clone());
        }
    }
    Ok(out)
}

pub fn eval(cfg: &Config, masks: &Path, targets: &Path, out: &Path) -> Result<(), Failure> {
    let tdir = if targets.join("tiles").is_dir() {
        targets.join("tiles")
    } else {
        targets.to_path_buf()
    };
    let ms = by_id(masks, ".bin.png")?;
    let ts = by_id(&tdir, ".target.png")?;
    let mut unpaired = Vec::new();
    for id in ms.keys().filter(|id| !ts.contains_key(*id)) {
        unpaired.push(format!("{id}: mask without target"));
    }
    for id in ts.keys().filter(|id| !ms.contains_key(*id)) {
        unpaired.push(format!("{id}: target without mask"));
    }
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = ms
        .iter()
        .filter_map(|(id, m)| ts.get(id).map(|t| (id, m, t)))
        .collect();
    let sim = eval_sim(cfg)?;
    let epe = cfg.epe();
    let hash = cfg.hash();
    let rows = parallel::map_slice(&pairs, |(id, m, t)| {
        let mask = images::read_binary(m)?;
        let target = images::read_binary(t)?;
        let rec = evaluate(&mask, &target, &sim, &epe)?;
        Ok(ReportRow::new(id, rec, &sim, &hash))
    })
    .into_iter()
    .collect::<Result<Vec<_>, Failure>>()?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_with_summary(out, &rows, &sim, &hash)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("eval");
    snapshot(cfg, &out.with_file_name(format!("{stem}.config.toml")))?;
    log::info!("{} rows in {}", rows.len(), out.display());
    if unpaired.is_empty() {
        return Ok(());
    }
    for u in &unpaired {
        eprintln!("skipped {u}");
    }
    Err(Failure::Data(format!("{} unpaired file(s) skipped", unpaired.len())))
}

fn write_with_summary(path: &Path, rows: &[ReportRow], sim: &LithoSim<f64>, hash: &str) -> Result<(), Failure> {
    let csv_err = |e: csv::Error| Failure::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if rows.is_empty() {
        w.write_record(["id", "l2", "epe", "pvb", "shots", "dose_min", "dose_max", "config_hash"])
            .map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let recs: Vec<_> = rows
        .iter()
        .map(|r| morphopc::metrics::MetricsRecord {
            l2: r.l2,
            epe: r.epe,
            pvb: r.pvb,
            shots: r.shots,
        })
        .collect();
    let [l2, epe, pvb, shots] = mean(&recs);
    let m = sim.model();
    w.write_record([
        "mean".to_string(),
        l2.to_string(),
        epe.to_string(),
        pvb.to_string(),
        shots.to_string(),
        m.dose_min.to_string(),
        m.dose_max.to_string(),
        hash.to_string(),
    ])
    .map_err(csv_err)?;
    w.flush().map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn sweep(cfg: &Config, dataset: &Path, out: &Path, scales: &[usize]) -> Result<(), Failure> {
    if scales.is_empty() {
        return Err(Failure::Usage("no scale factors given".into()));
    }
    let ds = Dataset::load(dataset)?;
    let (train, val) = (ds.split(Split::Train), ds.split(Split::Val));
    if train.is_empty() || val.is_empty() {
        return Err(Failure::Data(format!(
            "{}: sweep needs both train and validation tiles",
            dataset.display()
        )));
    }
    create_dir(out)?;
    snapshot(cfg, &out.join("config.toml"))?;
    let n = cfg.data.layout.size;
    let model = cfg.litho.build()?;
    let sim = LithoSim::<f32>::new(model.clone(), n, n)?;
    let eval_sim = LithoSim::<f64>::new(model, n, n)?;
    let epe = cfg.epe();
    let setup = SweepSetup {
        train: &train,
        val: &val,
        generator: &cfg.network.generator,
        discriminator: &cfg.network.discriminator,
        pretrain: &cfg.training.pretrain,
        finetune: &cfg.training.finetune,
        sim: &sim,
        eval_sim: &eval_sim,
        epe: &epe,
        out,
    };
    let rows = scale_factor_sweep(&setup, scales)?;
    write_sweep_csv(&out.join("sweep.csv"), &rows)?;
    log::info!("{} sweep rows in {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}

fn tile_tensor(t: &LabeledTile) -> Tensor<f32> {
    let (h, w) = (t.tile.target.height(), t.tile.target.width());
    let data = t.tile.target.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec(Shape::new(1, 1, h, w), data).expect("tile shape")
}

/// Delta maps of every operator-bearing split at each requested encoder
/// scale, concatenated along channels, for one input.
pub fn layer_deltas(
    gen: &mut Generator<f32>,
    input: &Tensor<f32>,
    layers: &[usize],
) -> morphopc::Result<BTreeMap<usize, Tensor<f32>>> {
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let mut cur = gen.stem.forward(&mut g, x, Mode::Eval)?;
    let mut out = BTreeMap::new();
    let last = layers.iter().copied().max().unwrap_or(0);
    for i in 0..=last {
        let f = gen.down[i].forward(&mut g, cur, Mode::Eval)?;
        let (m, probes) = gen.morph[i].forward_probe(&mut g, f, Mode::Eval)?;
        if layers.contains(&i) {
            let mut dg = Graph::new();
            let mut parts = Vec::with_capacity(probes.len());
            for (mb, p) in gen.morph[i].morphs.iter().zip(&probes) {
                let d = mb.delta_maps(g.value(*p))?;
                parts.push(dg.input(d));
            }
            let cat = dg.concat_channels(&parts)?;
            out.insert(i, dg.value(cat).clone());
        }
        cur = m;
    }
    Ok(out)
}

pub fn viz(
    cfg: &Config,
    ckpt: &Path,
    dataset: &Path,
    out: &Path,
    layers: &[usize],
    tile: Option<&str>,
    triptychs: usize,
) -> Result<(), Failure> {
    let scales = cfg.network.generator.scales();
    if let Some(bad) = layers.iter().find(|&&l| l >= scales) {
        let valid: Vec<String> = (0..scales).map(|i| i.to_string()).collect();
        return Err(Failure::Usage(format!(
            "layer {bad} does not exist; valid layers: {}",
            valid.join(", ")
        )));
    }
    let layers: Vec<usize> = if layers.is_empty() {
        (0..scales).collect()
    } else {
        layers.to_vec()
    };
    let ds = Dataset::load(dataset)?;
    let val = ds.split(Split::Val);
    let pool: Vec<&LabeledTile> = if val.is_empty() { ds.tiles.iter().collect() } else { val };
    let chosen = match tile {
        Some(id) => ds
            .tiles
            .iter()
            .find(|t| t.tile.id == id)
            .ok_or_else(|| Failure::Data(format!("{}: no tile {id}", dataset.display())))?,
        None => *pool
            .first()
            .ok_or_else(|| Failure::Data(format!("{}: empty dataset", dataset.display())))?,
    };
    let mut gen = load_generator(cfg, ckpt)?;
    create_dir(out)?;
    snapshot(cfg, &out.join("config.toml"))?;

    let deltas = layer_deltas(&mut gen, &tile_tensor(chosen), &layers)?;
    for (i, d) in &deltas {
        let files = export_delta_maps(d, 0, out, &format!("layer{i}"))?;
        log::info!("layer {i}: {} files for tile {}", files.len(), chosen.tile.id);
    }

    let picked: Vec<&LabeledTile> = pool.iter().copied().take(triptychs).collect();
    if picked.is_empty() {
        return Ok(());
    }
    let masks = training::predict(&mut gen, &picked, cfg.training.pretrain.batch_size)?;
    let sim = eval_sim(cfg)?;
    for (t, m) in picked.iter().zip(&masks) {
        let bin: BinaryGrid = binarize_grids(m, 0.5).remove(0);
        let band = sim.print_band(&bin.to_tensor())?.remove(0);
        let img = images::triptych(&t.tile.target, m.data(), &band.nominal);
        images::save_rgb(&out.join(format!("triptych_{}.png", t.tile.id)), &img)?;
    }
    Ok(())
}
