use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::checkpoint;
use crate::data::LabeledTile;
use crate::error::{Error, Result};
use crate::litho::LithoSim;
use crate::metrics::EpeConfig;
use crate::network::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::training::{evaluate_masks, predict, train, Stage, TrainConfig, TrainOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepStatus {
    Trained,
    Skipped,
}

/// One row of the scale-factor table: validation means of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: usize,
    pub status: SweepStatus,
    pub note: String,
    pub mse: f64,
    pub l2: f64,
    pub epe: f64,
    pub pvb: f64,
    pub shots: f64,
    pub checkpoint: String,
}

/// Everything a sweep run shares across scale factors.
pub struct SweepSetup<'a> {
    pub train: &'a [&'a LabeledTile],
    pub val: &'a [&'a LabeledTile],
    pub generator: &'a GeneratorConfig,
    pub discriminator: &'a DiscriminatorConfig,
    pub pretrain: &'a TrainConfig,
    pub finetune: &'a TrainConfig,
    pub sim: &'a LithoSim<f32>,
    pub eval_sim: &'a LithoSim<f64>,
    pub epe: &'a EpeConfig,
    pub out: &'a Path,
}

/// Validation means `[mse, l2, epe, pvb, shots]` of a stored generator.
pub fn evaluate_checkpoint(setup: &SweepSetup<'_>, cfg: &GeneratorConfig, path: &Path) -> Result<[f64; 5]> {
    let mut gen = Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    checkpoint::load(&mut gen, path)?;
    means(setup, &mut gen)
}

fn means(setup: &SweepSetup<'_>, gen: &mut Generator<f32>) -> Result<[f64; 5]> {
    let masks = predict(gen, setup.val, setup.pretrain.batch_size)?;
    let evals = evaluate_masks(&masks, setup.val, setup.eval_sim, setup.epe)?;
    let n = evals.len().max(1) as f64;
    let mut s = [0.0; 5];
    for e in &evals {
        let m = e.metrics;
        for (acc, v) in s.iter_mut().zip([e.mse, m.l2 as f64, m.epe as f64, m.pvb as f64, m.shots as f64]) {
            *acc += v;
        }
    }
    Ok(s.map(|v| v / n))
}

/// Trains one generator per scale factor (pretrain, then fine-tune) and
/// tabulates validation metrics. Scale factors that do not divide every
/// channel width get a skipped row.
pub fn scale_factor_sweep(setup: &SweepSetup<'_>, scales: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(scales.len());
    for &s in scales {
        let cfg = GeneratorConfig {
            scale: s,
            se_sizes: None,
            ..setup.generator.clone()
        };
        let skipped = |note: String| SweepRow {
            scale: s,
            status: SweepStatus::Skipped,
            note,
            mse: f64::NAN,
            l2: f64::NAN,
            epe: f64::NAN,
            pvb: f64::NAN,
            shots: f64::NAN,
            checkpoint: String::new(),
        };
        if let Err(e) = cfg.validate() {
            log::warn!("scale factor {s} skipped: {e}");
            rows.push(skipped(e.to_string()));
            continue;
        }
        let dir: PathBuf = setup.out.join(format!("s{s}"));
        let mut rng = ChaCha8Rng::seed_from_u64(setup.pretrain.seed);
        let mut gen = Generator::<f32>::new(&cfg, &mut rng)?;
        let mut disc = if setup.finetune.uses_discriminator() {
            Some(Discriminator::<f32>::new(setup.discriminator, &mut rng)?)
        } else {
            None
        };
        let out = TrainOutput {
            dir: Some(dir.clone()),
            first_step: 0,
        };
        let pre = train(setup.train, &mut gen, None, None, Stage::Pretrain, setup.pretrain, &out)?;
        pre.write_csv(&dir.join("pretrain_log.csv"))?;
        let out = TrainOutput {
            first_step: pre.records.len(),
            ..out
        };
        let fine = train(
            setup.train,
            &mut gen,
            disc.as_mut(),
            Some(setup.sim),
            Stage::Finetune,
            setup.finetune,
            &out,
        )?;
        fine.write_csv(&dir.join("finetune_log.csv"))?;
        let ckpt = dir.join("final_gen.mopc");
        checkpoint::save(&mut gen, &ckpt)?;
        let [mse, l2, epe, pvb, shots] = means(setup, &mut gen)?;
        rows.push(SweepRow {
            scale: s,
            status: SweepStatus::Trained,
            note: String::new(),
            mse,
            l2,
            epe,
            pvb,
            shots,
            checkpoint: ckpt.display().to_string(),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
