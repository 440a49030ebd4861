//! Flat binary parameter container.
//!
//! Layout (all integers little-endian `u32`):
//! `"MOPC"`, version, record count, then per record: name length, UTF-8
//! name, rank, dims, and the values as little-endian `f32`.

use std::fs;
use std::path::Path;

use crate::autodiff::param::Module;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MOPC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

pub fn encode(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("name is not UTF-8"))?
            .to_string();
        let rank = r.u32()?;
        if rank > 8 {
            return Err(r.fail(format!("implausible rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().map(|&d| d as usize).product::<usize>();
        let raw = r.take(n * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(Record { name, dims, values });
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(records)
}

pub fn records_of<T: Real, M: Module<T> + ?Sized>(module: &mut M) -> Vec<Record> {
    let mut out = Vec::new();
    module.visit(&mut |mut s| {
        let name = s.name().to_string();
        let t = s.tensor_mut();
        out.push(Record {
            name,
            dims: t.shape().dims().iter().map(|&d| d as u32).collect(),
            values: t.data().iter().map(|v| v.f64() as f32).collect(),
        });
    });
    out
}

pub fn save<T: Real, M: Module<T> + ?Sized>(module: &mut M, path: &Path) -> Result<()> {
    let bytes = encode(&records_of(module));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads every parameter and buffer of `module` by name. Names missing from
/// the file, unknown names, and shape disagreements are errors.
pub fn load<T: Real, M: Module<T> + ?Sized>(module: &mut M, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let records = decode(path, &bytes)?;
    apply(module, path, records)
}

pub fn apply<T: Real, M: Module<T> + ?Sized>(
    module: &mut M,
    path: &Path,
    records: Vec<Record>,
) -> Result<()> {
    let mut by_name: std::collections::HashMap<String, Record> =
        records.into_iter().map(|r| (r.name.clone(), r)).collect();
    let mut err = None;
    module.visit(&mut |mut s| {
        if err.is_some() {
            return;
        }
        let name = s.name().to_string();
        let t = s.tensor_mut();
        let Some(rec) = by_name.remove(&name) else {
            err = Some(Error::Config(format!("{}: missing tensor `{name}`", path.display())));
            return;
        };
        let want: Vec<u32> = t.shape().dims().iter().map(|&d| d as u32).collect();
        if rec.dims != want {
            err = Some(Error::Config(format!(
                "{}: tensor `{name}` has dims {:?}, model expects {:?}",
                path.display(),
                rec.dims,
                want
            )));
            return;
        }
        for (d, v) in t.data_mut().iter_mut().zip(&rec.values) {
            *d = T::of(*v as f64);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Config(format!(
            "{}: unexpected tensor `{extra}`",
            path.display()
        )));
    }
    Ok(())
}

/// Stand-alone tensor from a record with rank 4.
pub fn record_tensor<T: Real>(r: &Record) -> Option<Tensor<T>> {
    let [b, c, h, w] = r.dims[..] else { return None };
    let data = r.values.iter().map(|&v| T::of(v as f64)).collect();
    Tensor::from_vec(Shape::new(b as usize, c as usize, h as usize, w as usize), data).ok()
}
