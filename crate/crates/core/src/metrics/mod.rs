//! Mask-quality metrics: printed l2 error, EPE violations, PV band area and
//! rectangular shot count.

mod epe;
mod shots;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use epe::{contour_loops, edge_distance, epe_violations, sample_edges, Edge, EpeConfig, Side};
pub use shots::{shot_count, shot_decomposition, Rectangle};

use crate::error::{Error, Result};
use crate::grid::BinaryGrid;
use crate::litho::LithoSim;
use crate::real::Real;

/// Number of pixels where the two images differ.
pub fn l2_error(printed: &BinaryGrid, target: &BinaryGrid) -> Result<usize> {
    printed.same_size(target, "l2 error")?;
    Ok(printed.xor_count(target))
}

/// Area of `z_max \ z_min`. Fails if the sets are not nested.
pub fn pvb(z_min: &BinaryGrid, z_max: &BinaryGrid) -> Result<usize> {
    z_min.same_size(z_max, "pvb")?;
    if !z_min.is_subset_of(z_max) {
        return Err(Error::invalid("pvb", "inner printed set is not contained in the outer one"));
    }
    Ok(z_max.count() - z_min.count())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub l2: usize,
    pub epe: usize,
    pub pvb: usize,
    pub shots: usize,
}

/// All four metrics of a binary mask against its target: l2 and EPE at
/// nominal dose, PVB across the dose corners, shots on the mask itself.
pub fn evaluate<T: Real>(
    mask: &BinaryGrid,
    target: &BinaryGrid,
    sim: &LithoSim<T>,
    cfg: &EpeConfig,
) -> Result<MetricsRecord> {
    mask.same_size(target, "evaluate")?;
    let band = sim.print_band(&mask.to_tensor())?.remove(0);
    Ok(MetricsRecord {
        l2: l2_error(&band.nominal, target)?,
        epe: epe_violations(&band.nominal, target, cfg)?,
        pvb: pvb(&band.min, &band.max)?,
        shots: shot_count(mask),
    })
}

/// One CSV report row. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub l2: usize,
    pub epe: usize,
    pub pvb: usize,
    pub shots: usize,
    pub dose_min: f64,
    pub dose_max: f64,
    pub config_hash: String,
}

impl ReportRow {
    pub fn new<T: Real>(id: &str, m: MetricsRecord, sim: &LithoSim<T>, config_hash: &str) -> Self {
        ReportRow {
            id: id.to_string(),
            l2: m.l2,
            epe: m.epe,
            pvb: m.pvb,
            shots: m.shots,
            dose_min: sim.model().dose_min,
            dose_max: sim.model().dose_max,
            config_hash: config_hash.to_string(),
        }
    }
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean of each metric over a set of records.
pub fn mean(records: &[MetricsRecord]) -> [f64; 4] {
    let n = records.len().max(1) as f64;
    let mut s = [0.0; 4];
    for r in records {
        for (acc, v) in s.iter_mut().zip([r.l2, r.epe, r.pvb, r.shots]) {
            *acc += v as f64;
        }
    }
    s.map(|v| v / n)
}
