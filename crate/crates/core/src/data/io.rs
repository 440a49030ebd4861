use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ilt::{pixel_ilt, IltConfig, IltResult};
use crate::data::layout::{generate_tile, rasterize, LayoutSpec, LayoutTile, Polygon};
use crate::error::{Error, Result};
use crate::grid::BinaryGrid;
use crate::litho::LithoSim;
use crate::parallel;
use crate::tensor::{Shape, Tensor};

/// Oracle bookkeeping stored in the `meta.txt` sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct TileMeta {
    pub iterations: usize,
    pub best_step: usize,
    pub baseline_l2: usize,
    pub oracle_l2: usize,
    pub flagged: bool,
}

/// A layout tile with its reference mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTile {
    pub tile: LayoutTile,
    /// `(1, 1, H, W)`, values are multiples of 1/65535.
    pub mask: Tensor<f64>,
    pub binary: BinaryGrid,
    pub meta: TileMeta,
}

impl LabeledTile {
    pub fn from_ilt(tile: LayoutTile, r: IltResult) -> Self {
        LabeledTile {
            tile,
            mask: r.mask,
            binary: r.binary,
            meta: TileMeta {
                iterations: r.iterations,
                best_step: r.best_step,
                baseline_l2: r.baseline_l2,
                oracle_l2: r.oracle_l2,
                flagged: r.flagged,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// 80/20 train/validation assignment from a hash of the tile id.
pub fn split_of(id: &str) -> Split {
    let d = Sha256::digest(id.as_bytes());
    let v = u64::from_le_bytes(d[..8].try_into().unwrap());
    if v % 5 == 0 {
        Split::Val
    } else {
        Split::Train
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub split: Split,
    pub baseline_l2: usize,
    pub oracle_l2: usize,
}

fn tile_path(dir: &Path, id: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{id}.{suffix}"))
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Writes `<id>.target.png`, `<id>.mask.png`, `<id>.poly.txt` and
/// `<id>.meta.txt` into `dir`.
pub fn save_tile(dir: &Path, t: &LabeledTile) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &t.tile.id;
    let (h, w) = (t.tile.target.height() as u32, t.tile.target.width() as u32);

    let p = tile_path(dir, id, "target.png");
    let px = t.tile.target.data().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, px)
        .expect("buffer size")
        .save(&p)
        .map_err(|e| image_err(&p, e))?;

    let p = tile_path(dir, id, "mask.png");
    let px = t.mask.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, px)
        .expect("buffer size")
        .save(&p)
        .map_err(|e| image_err(&p, e))?;

    let p = tile_path(dir, id, "poly.txt");
    let mut text = String::new();
    for poly in &t.tile.polygons {
        text.push_str(&poly.to_line());
        text.push('\n');
    }
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;

    let p = tile_path(dir, id, "meta.txt");
    let m = &t.meta;
    let text = format!(
        "id={id}\npitch_nm={}\nheight={h}\nwidth={w}\niterations={}\nbest_step={}\nbaseline_l2={}\noracle_l2={}\nflagged={}\n",
        t.tile.pitch_nm, m.iterations, m.best_step, m.baseline_l2, m.oracle_l2, m.flagged
    );
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

fn read_meta(path: &Path) -> Result<BTreeMap<String, (usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    Ok(out)
}

fn meta_field<T: std::str::FromStr>(path: &Path, meta: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let (line, v) = meta.get(key).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("missing key `{key}`"),
    })?;
    v.parse().map_err(|e: T::Err| Error::Parse {
        path: path.to_path_buf(),
        line: *line,
        msg: format!("{key}: {e}"),
    })
}

/// Loads a tile written by [`save_tile`] and checks that its polygons
/// rasterize to its target.
pub fn load_tile(dir: &Path, id: &str) -> Result<LabeledTile> {
    let mp = tile_path(dir, id, "meta.txt");
    let meta = read_meta(&mp)?;
    let h: usize = meta_field(&mp, &meta, "height")?;
    let w: usize = meta_field(&mp, &meta, "width")?;

    let p = tile_path(dir, id, "target.png");
    let img = image::open(&p).map_err(|e| image_err(&p, e))?.to_luma8();
    if img.dimensions() != (w as u32, h as u32) {
        return Err(image_err(&p, format!("expected {w}x{h}, got {:?}", img.dimensions())));
    }
    if let Some(v) = img.as_raw().iter().find(|&&v| v != 0 && v != 255) {
        return Err(image_err(&p, format!("target is not binary (value {v})")));
    }
    let target = BinaryGrid::from_vec(h, w, img.as_raw().iter().map(|&v| v == 255).collect())?;

    let p = tile_path(dir, id, "mask.png");
    let img = image::open(&p).map_err(|e| image_err(&p, e))?.to_luma16();
    if img.dimensions() != (w as u32, h as u32) {
        return Err(image_err(&p, format!("expected {w}x{h}, got {:?}", img.dimensions())));
    }
    let mask = Tensor::from_vec(
        Shape::new(1, 1, h, w),
        img.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
    )?;

    let p = tile_path(dir, id, "poly.txt");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let polygons = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            Polygon::parse_line(l).map_err(|msg| Error::Parse {
                path: p.clone(),
                line: i + 1,
                msg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if rasterize(&polygons, h, w) != target {
        return Err(Error::invalid("load tile", format!("{id}: polygons do not rasterize to the target")));
    }

    let binary = BinaryGrid::from_plane(mask.data(), h, w, 0.5);
    Ok(LabeledTile {
        tile: LayoutTile {
            id: id.to_string(),
            target,
            polygons,
            pitch_nm: meta_field(&mp, &meta, "pitch_nm")?,
        },
        mask,
        binary,
        meta: TileMeta {
            iterations: meta_field(&mp, &meta, "iterations")?,
            best_step: meta_field(&mp, &meta, "best_step")?,
            baseline_l2: meta_field(&mp, &meta, "baseline_l2")?,
            oracle_l2: meta_field(&mp, &meta, "oracle_l2")?,
            flagged: meta_field(&mp, &meta, "flagged")?,
        },
    })
}

/// Generates, labels and stores `count` tiles under `root/tiles`, and
/// writes `root/manifest.csv`.
pub fn build_dataset(
    root: &Path,
    spec: &LayoutSpec,
    count: usize,
    sim: &LithoSim<f64>,
    ilt: &IltConfig,
) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    let tiles_dir = root.join("tiles");
    fs::create_dir_all(&tiles_dir).map_err(|e| Error::io(&tiles_dir, e))?;
    let labeled: Vec<Result<ManifestRow>> = parallel::map_range(count, |i| {
        let tile = generate_tile(spec, i)?;
        let r = pixel_ilt(&tile.target, sim, ilt)?;
        if r.flagged {
            log::warn!(
                "{}: oracle l2 {} is not below 0.9 x baseline {}",
                tile.id,
                r.oracle_l2,
                r.baseline_l2
            );
        }
        let t = LabeledTile::from_ilt(tile, r);
        save_tile(&tiles_dir, &t)?;
        Ok(ManifestRow {
            id: t.tile.id.clone(),
            split: split_of(&t.tile.id),
            baseline_l2: t.meta.baseline_l2,
            oracle_l2: t.meta.oracle_l2,
        })
    });
    let rows = labeled.into_iter().collect::<Result<Vec<_>>>()?;
    write_manifest(&root.join("manifest.csv"), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// A stored dataset: manifest rows with their tiles.
pub struct Dataset {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub tiles: Vec<LabeledTile>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let rows = read_manifest(&root.join("manifest.csv"))?;
        let dir = root.join("tiles");
        let tiles = rows
            .iter()
            .map(|r| load_tile(&dir, &r.id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            root: root.to_path_buf(),
            rows,
            tiles,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&LabeledTile> {
        self.rows
            .iter()
            .zip(&self.tiles)
            .filter(|(r, _)| r.split == split)
            .map(|(_, t)| t)
            .collect()
    }
}
