//! Two-stage optimization: MSE pretraining, then mask + print +
//! adversarial fine-tuning, with per-epoch checkpoints and CSV logs.

mod eval;
mod sweep;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate_masks, predict, TileEval};
pub use sweep::{evaluate_checkpoint, scale_factor_sweep, write_sweep_csv, SweepRow, SweepSetup, SweepStatus};

use crate::autodiff::{checkpoint, Adam, Graph, Mode, Module, Var};
use crate::data::LabeledTile;
use crate::error::{Error, Result};
use crate::litho::LithoSim;
use crate::network::{Discriminator, Generator};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Multiplies the learning rate from epoch `ceil(epochs / 2)` on.
    pub lr_decay: f64,
    pub lambda_mask: f64,
    pub lambda_print: f64,
    pub lambda_adv: f64,
    pub adversarial: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 4,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            lr_decay: 0.1,
            lambda_mask: 1.0,
            lambda_print: 1.0,
            lambda_adv: 0.01,
            adversarial: true,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be positive");
        }
        if [self.lambda_mask, self.lambda_print, self.lambda_adv]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }

    /// Whether fine-tuning builds and trains a discriminator.
    pub fn uses_discriminator(&self) -> bool {
        self.adversarial && self.lambda_adv > 0.0
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.epochs.div_ceil(2) && self.epochs > 1 {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }

    fn adam(&self, epoch: usize) -> Adam {
        Adam {
            lr: self.lr_at(epoch),
            beta1: self.beta1,
            beta2: self.beta2,
            ..Adam::default()
        }
    }
}

/// A stacked minibatch of targets and reference masks, `(B, 1, H, W)`.
pub struct Batch {
    pub ids: Vec<String>,
    pub target: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl Batch {
    pub fn from_tiles(tiles: &[&LabeledTile]) -> Result<Self> {
        let first = tiles.first().ok_or_else(|| Error::invalid("batch", "no tiles"))?;
        let (h, w) = (first.tile.target.height(), first.tile.target.width());
        let mut target = Vec::with_capacity(tiles.len() * h * w);
        let mut mask = Vec::with_capacity(tiles.len() * h * w);
        for t in tiles {
            if (t.tile.target.height(), t.tile.target.width()) != (h, w) || t.mask.numel() != h * w {
                return Err(Error::invalid("batch", format!("{}: tile size differs", t.tile.id)));
            }
            target.extend(t.tile.target.data().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
            mask.extend(t.mask.data().iter().map(|&v| v as f32));
        }
        let s = Shape::new(tiles.len(), 1, h, w);
        Ok(Batch {
            ids: tiles.iter().map(|t| t.tile.id.clone()).collect(),
            target: Tensor::from_vec(s, target)?,
            mask: Tensor::from_vec(s, mask)?,
        })
    }
}

/// One logged optimizer step. Losses not computed in a stage are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub stage: Stage,
    pub epoch: usize,
    pub lr: f64,
    pub loss_mask: f64,
    pub loss_print: f64,
    pub loss_adv: f64,
    pub loss_disc: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<StepRecord>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

fn check_finite(what: &str, v: f64, step: usize, batch: &Batch) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericAbort {
            what: what.to_string(),
            step,
            batch: batch.ids.join(","),
        })
    }
}

/// One Adam step on `mean (G(Z_t) - M*)^2`.
pub fn pretrain_step(
    gen: &mut Generator<f32>,
    opt: &Adam,
    batch: &Batch,
    step: usize,
) -> Result<StepRecord> {
    let mut g = Graph::new();
    let x = g.input(batch.target.clone());
    let y = gen.forward(&mut g, x, Mode::Train)?;
    let m = g.input(batch.mask.clone());
    let loss = g.mse(y, m)?;
    let lv = g.value(loss).item() as f64;
    check_finite("pretrain mask loss", lv, step, batch)?;
    g.backward(loss)?;
    gen.collect_grads(&g);
    let grad_norm = gen.grad_norm();
    check_finite("generator gradient norm", grad_norm, step, batch)?;
    opt.step_module(gen)?;
    Ok(StepRecord {
        step,
        stage: Stage::Pretrain,
        epoch: 0,
        lr: opt.lr,
        loss_mask: lv,
        loss_print: 0.0,
        loss_adv: 0.0,
        loss_disc: 0.0,
        grad_norm,
    })
}

/// Generator loss terms of the fine-tuning objective on an existing graph.
pub struct FinetuneLosses {
    pub total: Var,
    pub mask: Var,
    pub print: Var,
    pub adv: Option<Var>,
    pub output: Var,
}

/// Builds `l_mask * mse(G, M*) + l_print * mse(print_soft(G), Z_t)
/// - l_adv * mean(log D(Z_t, G))`. Terms with zero weight are skipped.
pub fn finetune_losses(
    g: &mut Graph<f32>,
    gen: &mut Generator<f32>,
    disc: Option<&Discriminator<f32>>,
    sim: &LithoSim<f32>,
    batch: &Batch,
    cfg: &TrainConfig,
) -> Result<FinetuneLosses> {
    let x = g.input(batch.target.clone());
    let y = gen.forward(g, x, Mode::Train)?;
    let m = g.input(batch.mask.clone());
    let mask = g.mse(y, m)?;
    let z = sim.print_soft(g, y, 1.0)?;
    let print = g.mse(z, x)?;
    let a = g.scale(mask, cfg.lambda_mask);
    let b = g.scale(print, cfg.lambda_print);
    let mut total = g.add(a, b)?;
    let mut adv = None;
    if let Some(d) = disc.filter(|_| cfg.uses_discriminator()) {
        let logit = d.logits(g, x, y)?;
        let ls = g.log_sigmoid(logit);
        let l = g.mean(ls);
        let l = g.neg(l);
        let c = g.scale(l, cfg.lambda_adv);
        total = g.add(total, c)?;
        adv = Some(l);
    }
    Ok(FinetuneLosses {
        total,
        mask,
        print,
        adv,
        output: y,
    })
}

/// One generator step on the combined objective, then (with the
/// adversarial term on) one discriminator step on
/// `-mean log D(Z_t, M*) - mean log(1 - D(Z_t, G(Z_t)))`.
pub fn finetune_step(
    gen: &mut Generator<f32>,
    disc: Option<&mut Discriminator<f32>>,
    sim: &LithoSim<f32>,
    opt: &Adam,
    batch: &Batch,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepRecord> {
    if cfg.uses_discriminator() && disc.is_none() {
        return Err(Error::invalid("finetune", "adversarial loss needs a discriminator"));
    }
    let mut g = Graph::new();
    let l = finetune_losses(&mut g, gen, disc.as_deref(), sim, batch, cfg)?;
    let val = |g: &Graph<f32>, v: Var| g.value(v).item() as f64;
    let (lm, lp) = (val(&g, l.mask), val(&g, l.print));
    let la = l.adv.map_or(0.0, |v| val(&g, v));
    for (what, v) in [("mask loss", lm), ("print loss", lp), ("adversarial loss", la)] {
        check_finite(what, v, step, batch)?;
    }
    g.backward(l.total)?;
    gen.collect_grads(&g);
    let grad_norm = gen.grad_norm();
    check_finite("generator gradient norm", grad_norm, step, batch)?;
    opt.step_module(gen)?;
    let fake = g.value(l.output).clone();
    drop(g);

    let mut ld = 0.0;
    if let Some(d) = disc.filter(|_| cfg.uses_discriminator()) {
        let mut g = Graph::new();
        let x = g.input(batch.target.clone());
        let real = g.input(batch.mask.clone());
        let fake = g.input(fake);
        let lr = d.logits(&mut g, x, real)?;
        let lf = d.logits(&mut g, x, fake)?;
        let a = g.log_sigmoid(lr);
        let nf = g.neg(lf);
        let b = g.log_sigmoid(nf);
        let a = g.mean(a);
        let b = g.mean(b);
        let s = g.add(a, b)?;
        let loss = g.neg(s);
        ld = g.value(loss).item() as f64;
        check_finite("discriminator loss", ld, step, batch)?;
        g.backward(loss)?;
        d.collect_grads(&g);
        opt.step_module(d)?;
    }
    Ok(StepRecord {
        step,
        stage: Stage::Finetune,
        epoch: 0,
        lr: opt.lr,
        loss_mask: lm,
        loss_print: lp,
        loss_adv: la,
        loss_disc: ld,
        grad_norm,
    })
}

/// Where and how often [`train`] writes checkpoints.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
    /// Step number of the first record (to continue a previous log).
    pub first_step: usize,
}

/// Runs one stage over `epochs` epochs. Tile order is reshuffled every
/// epoch from `cfg.seed`. Checkpoints go to
/// `<dir>/<stage>_gen_e<NN>.mopc` (and `_disc_` with a discriminator).
pub fn train(
    tiles: &[&LabeledTile],
    gen: &mut Generator<f32>,
    mut disc: Option<&mut Discriminator<f32>>,
    sim: Option<&LithoSim<f32>>,
    stage: Stage,
    cfg: &TrainConfig,
    out: &TrainOutput,
) -> Result<TrainLog> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::invalid("train", "empty dataset"));
    }
    if stage == Stage::Finetune && sim.is_none() {
        return Err(Error::invalid("train", "fine-tuning needs a litho model"));
    }
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut step = out.first_step;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let opt = cfg.adam(epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let picked: Vec<&LabeledTile> = chunk.iter().map(|&i| tiles[i]).collect();
            let batch = Batch::from_tiles(&picked)?;
            let mut rec = match stage {
                Stage::Pretrain => pretrain_step(gen, &opt, &batch, step)?,
                Stage::Finetune => {
                    let sim = sim.expect("checked above");
                    finetune_step(gen, disc.as_deref_mut(), sim, &opt, &batch, cfg, step)?
                }
            };
            rec.epoch = epoch;
            log::debug!(
                "{} step {step} epoch {epoch}: mask {:.6} print {:.6} adv {:.6} disc {:.6}",
                stage.name(),
                rec.loss_mask,
                rec.loss_print,
                rec.loss_adv,
                rec.loss_disc
            );
            log.records.push(rec);
            step += 1;
        }
        if let Some(dir) = &out.dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(format!("{}_gen_e{:02}.mopc", stage.name(), epoch + 1));
            checkpoint::save(gen, &p)?;
            log.checkpoints.push(p);
            if let Some(d) = disc.as_deref_mut() {
                let p = dir.join(format!("{}_disc_e{:02}.mopc", stage.name(), epoch + 1));
                checkpoint::save(d, &p)?;
                log.checkpoints.push(p);
            }
        }
    }
    Ok(log)
}
