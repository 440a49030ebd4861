use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::grid::BinaryGrid;
use crate::litho::LithoSim;
use crate::metrics::l2_error;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IltConfig {
    pub steps: usize,
    pub lr: f64,
    /// Slope of the pixel relaxation `mask = sigmoid(relax * theta)`.
    pub relax: f64,
}

impl Default for IltConfig {
    fn default() -> Self {
        IltConfig {
            steps: 200,
            lr: 1.0,
            relax: 4.0,
        }
    }
}

/// Outcome of one pixel-ILT run.
#[derive(Clone, Debug, PartialEq)]
pub struct IltResult {
    /// Best-seen relaxed mask, quantized to multiples of 1/65535.
    pub mask: Tensor<f64>,
    pub binary: BinaryGrid,
    pub iterations: usize,
    pub best_step: usize,
    pub baseline_l2: usize,
    pub oracle_l2: usize,
    /// Set when the oracle misses `oracle_l2 <= 0.9 * baseline_l2`.
    pub flagged: bool,
    /// Best-seen soft loss after each evaluated step.
    pub history: Vec<f64>,
}

pub fn quantize16(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0
}

/// Gradient descent on `theta` minimizing `sum (print_soft(sigmoid(relax *
/// theta)) - target)^2`. The returned mask is the best seen, ranked by the
/// printed l2 of its binarized form and then by soft loss.
pub fn pixel_ilt(target: &BinaryGrid, sim: &LithoSim<f64>, cfg: &IltConfig) -> Result<IltResult> {
    if (target.height(), target.width()) != sim.size() {
        return Err(Error::invalid("pixel ilt", "target size differs from the simulator's"));
    }
    let baseline = sim.print_grid(target)?;
    let baseline_l2 = l2_error(&baseline, target)?;
    let zt = target.to_tensor::<f64>();
    let mut theta = zt.map(|v| 2.0 * v - 1.0);
    let mut best: Option<(usize, f64, usize, Tensor<f64>)> = None;
    let mut history = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let mut g = Graph::new();
        let th = g.leaf(theta.clone(), true);
        let z = g.scale(th, cfg.relax);
        let m = g.sigmoid(z);
        let printed = sim.print_soft(&mut g, m, 1.0)?;
        let t = g.input(zt.clone());
        let d = g.sub(printed, t)?;
        let sq = g.square(d);
        let loss = g.sum(sq);
        let soft = g.value(loss).item();
        if !soft.is_finite() {
            return Err(Error::NumericAbort {
                what: "pixel ilt loss".into(),
                step,
                batch: "single tile".into(),
            });
        }
        let mask = g.value(m).map(quantize16);
        let bin = BinaryGrid::from_plane(mask.data(), target.height(), target.width(), 0.5);
        let l2 = l2_error(&sim.print_grid(&bin)?, target)?;
        if best.as_ref().is_none_or(|b| (l2, soft) < (b.0, b.1)) {
            best = Some((l2, soft, step, mask));
        }
        history.push(best.as_ref().unwrap().1);
        if step == cfg.steps {
            break;
        }
        g.backward(loss)?;
        let grad = g.grad(th).expect("theta is a tracked leaf");
        for (p, &gv) in theta.data_mut().iter_mut().zip(grad) {
            *p -= cfg.lr * gv;
        }
    }
    let (oracle_l2, _, best_step, mask) = best.expect("at least one step evaluated");
    let binary = BinaryGrid::from_plane(mask.data(), target.height(), target.width(), 0.5);
    Ok(IltResult {
        mask,
        binary,
        iterations: cfg.steps,
        best_step,
        baseline_l2,
        oracle_l2,
        flagged: baseline_l2 > 0 && oracle_l2 as f64 > 0.9 * baseline_l2 as f64,
        history,
    })
}
