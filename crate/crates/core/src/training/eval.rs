use crate::data::LabeledTile;
use crate::error::Result;
use crate::grid::BinaryGrid;
use crate::litho::LithoSim;
use crate::metrics::{evaluate, EpeConfig, MetricsRecord};
use crate::network::{binarize_grids, Generator};
use crate::parallel;
use crate::tensor::Tensor;
use crate::training::Batch;

/// Eval-mode generator output for each tile, in input order.
pub fn predict(gen: &mut Generator<f32>, tiles: &[&LabeledTile], batch_size: usize) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(batch_size.max(1)) {
        let b = Batch::from_tiles(chunk)?;
        let y = gen.predict(&b.target)?;
        let s = y.shape();
        for i in 0..s.b {
            out.push(Tensor::from_vec(
                crate::tensor::Shape::new(1, 1, s.h, s.w),
                y.plane(i, 0).to_vec(),
            )?);
        }
    }
    Ok(out)
}

/// Metrics of one generated mask next to the tile's two references.
#[derive(Clone, Debug, PartialEq)]
pub struct TileEval {
    pub id: String,
    pub metrics: MetricsRecord,
    /// Soft-mask MSE against the reference mask.
    pub mse: f64,
    pub baseline_l2: usize,
    pub oracle_l2: usize,
}

/// Binarizes each mask at 0.5 and evaluates it against its tile.
pub fn evaluate_masks(
    masks: &[Tensor<f32>],
    tiles: &[&LabeledTile],
    sim: &LithoSim<f64>,
    epe: &EpeConfig,
) -> Result<Vec<TileEval>> {
    let pairs: Vec<(&Tensor<f32>, &&LabeledTile)> = masks.iter().zip(tiles).collect();
    parallel::map_slice(&pairs, |(m, t)| {
        let bin: BinaryGrid = binarize_grids(m, 0.5).remove(0);
        let metrics = evaluate(&bin, &t.tile.target, sim, epe)?;
        let mse = m
            .data()
            .iter()
            .zip(t.mask.data())
            .map(|(&a, &b)| (a as f64 - b).powi(2))
            .sum::<f64>()
            / m.numel() as f64;
        Ok(TileEval {
            id: t.tile.id.clone(),
            metrics,
            mse,
            baseline_l2: t.meta.baseline_l2,
            oracle_l2: t.meta.oracle_l2,
        })
    })
    .into_iter()
    .collect()
}
