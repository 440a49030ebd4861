use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coherent system: a real or complex `K x K` kernel and its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub re: Vec<f64>,
    pub im: Option<Vec<f64>>,
    pub weight: f64,
}

/// Forward-simulation parameters: optical kernels, resist, and dose corners.
#[derive(Clone, Debug, PartialEq)]
pub struct LithoModel {
    /// Kernel window size `K` (odd).
    pub size: usize,
    pub kernels: Vec<Kernel>,
    pub threshold: f64,
    pub steepness: f64,
    pub dose_min: f64,
    pub dose_max: f64,
    pub pitch_nm: f64,
}

/// Normalized isotropic Gaussian of width `2 * ceil(3 sigma) + 1`.
pub fn gaussian_kernel(sigma: f64) -> (usize, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as usize;
    let k = 2 * r + 1;
    let mut v: Vec<f64> = (0..k * k)
        .map(|i| {
            let y = (i / k) as f64 - r as f64;
            let x = (i % k) as f64 - r as f64;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    (k, v)
}

impl LithoModel {
    pub fn gaussian(sigma_px: f64) -> Self {
        let (size, re) = gaussian_kernel(sigma_px);
        LithoModel {
            size,
            kernels: vec![Kernel {
                re,
                im: None,
                weight: 1.0,
            }],
            threshold: 0.5,
            steepness: 50.0,
            dose_min: 0.98,
            dose_max: 1.02,
            pitch_nm: 4.0,
        }
    }

    pub fn doses(&self) -> [f64; 3] {
        [self.dose_min, 1.0, self.dose_max]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("litho model", m));
        if self.kernels.is_empty() {
            return bad("no kernels".into());
        }
        if self.size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.size));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            if !(k.weight >= 0.0) {
                return bad(format!("kernel {i} has negative weight {}", k.weight));
            }
            let n = self.size * self.size;
            if k.re.len() != n || k.im.as_ref().is_some_and(|im| im.len() != n) {
                return bad(format!("kernel {i} does not have {n} entries"));
            }
        }
        if !(self.dose_min < 1.0 && 1.0 < self.dose_max && self.dose_min > 0.0) {
            return bad(format!(
                "dose band must satisfy 0 < lo < 1 < hi, got {}..{}",
                self.dose_min, self.dose_max
            ));
        }
        if !(self.threshold > 0.0 && self.steepness > 0.0) {
            return bad("threshold and steepness must be positive".into());
        }
        Ok(())
    }
}

/// Litho section of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LithoConfig {
    pub sigma_px: f64,
    pub threshold: f64,
    pub steepness: f64,
    pub dose_band: [f64; 2],
    pub pitch_nm: f64,
    /// Optional kernel file replacing the Gaussian.
    pub kernels: Option<PathBuf>,
}

impl Default for LithoConfig {
    fn default() -> Self {
        LithoConfig {
            sigma_px: 8.0,
            threshold: 0.5,
            steepness: 50.0,
            dose_band: [0.98, 1.02],
            pitch_nm: 4.0,
            kernels: None,
        }
    }
}

impl LithoConfig {
    pub fn build(&self) -> Result<LithoModel> {
        let mut m = match &self.kernels {
            Some(p) => {
                let (size, kernels) = load_kernels(p)?;
                LithoModel {
                    size,
                    kernels,
                    ..LithoModel::gaussian(1.0)
                }
            }
            None => LithoModel::gaussian(self.sigma_px),
        };
        m.threshold = self.threshold;
        m.steepness = self.steepness;
        m.dose_min = self.dose_band[0];
        m.dose_max = self.dose_band[1];
        m.pitch_nm = self.pitch_nm;
        m.validate()?;
        Ok(m)
    }
}

// Kernel file: "LKRN", then u32 version, count, K, complex flag; `count`
// f64 weights; then per kernel K*K f64 real parts followed, when complex,
// by K*K f64 imaginary parts. Little-endian throughout.
const KERNEL_MAGIC: &[u8; 4] = b"LKRN";
const KERNEL_VERSION: u32 = 1;

pub fn encode_kernels(size: usize, kernels: &[Kernel]) -> Vec<u8> {
    let complex = kernels.iter().any(|k| k.im.is_some());
    let mut out = Vec::new();
    out.extend_from_slice(KERNEL_MAGIC);
    for v in [KERNEL_VERSION, kernels.len() as u32, size as u32, complex as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for k in kernels {
        out.extend_from_slice(&k.weight.to_le_bytes());
    }
    let zeros = vec![0.0; size * size];
    for k in kernels {
        for v in &k.re {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if complex {
            for v in k.im.as_ref().unwrap_or(&zeros) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_kernels(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<Kernel>)> {
    let mut pos = 0usize;
    let fail = |pos: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: pos as u64,
        msg,
    };
    let mut take = |n: usize| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(fail(pos, format!("truncated: need {n} more bytes")));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    if take(4)? != KERNEL_MAGIC {
        return Err(fail(0, "bad magic".into()));
    }
    let mut u32s = [0u32; 4];
    for v in &mut u32s {
        *v = u32::from_le_bytes(take(4)?.try_into().unwrap());
    }
    let [version, count, size, complex] = u32s;
    if version != KERNEL_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    if count == 0 || size == 0 || size % 2 == 0 || complex > 1 {
        return Err(fail(8, format!("bad header: count {count}, K {size}, complex {complex}")));
    }
    let (count, size) = (count as usize, size as usize);
    let mut f64s = |n: usize| -> Result<Vec<f64>> {
        Ok(take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let weights = f64s(count)?;
    let mut kernels = Vec::with_capacity(count);
    for w in weights {
        let re = f64s(size * size)?;
        let im = if complex == 1 { Some(f64s(size * size)?) } else { None };
        kernels.push(Kernel { re, im, weight: w });
    }
    if pos != bytes.len() {
        return Err(fail(pos, "trailing bytes".into()));
    }
    Ok((size, kernels))
}

pub fn save_kernels(path: &Path, size: usize, kernels: &[Kernel]) -> Result<()> {
    fs::write(path, encode_kernels(size, kernels)).map_err(|e| Error::io(path, e))
}

pub fn load_kernels(path: &Path) -> Result<(usize, Vec<Kernel>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_kernels(path, &bytes)
}
