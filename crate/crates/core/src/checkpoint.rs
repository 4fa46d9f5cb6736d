//! Self-describing binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PNGANCKP"
//! version  u32
//! n_meta   u32, then n_meta × (u32 len, utf-8 key, u32 len, utf-8 value)
//! n_array  u32, then n_array × (u32 len, utf-8 name, u8 dtype (0=f32, 1=f64),
//!                               u32 ndim, ndim × u64 dim, values)
//! ```
//!
//! Entries are written in lexicographic order, so saving the same content
//! always produces the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Module;
use crate::real::{Precision, Real};

pub const MAGIC: &[u8; 8] = b"PNGANCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    fn to_vec<T: Real>(&self) -> Vec<T> {
        match self {
            ArrayData::F32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
            ArrayData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub arrays: BTreeMap<String, Array>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    /// Stores a serializable config as JSON under `<namespace>.config`.
    pub fn set_config<C: Serialize>(&mut self, namespace: &str, config: &C) -> Result<()> {
        self.set_meta(format!("{namespace}.config"), serde_json::to_string(config)?);
        Ok(())
    }

    pub fn config<C: DeserializeOwned>(&self, namespace: &str) -> Result<C> {
        Ok(serde_json::from_str(self.meta(&format!("{namespace}.config"))?)?)
    }

    pub fn insert<T: Real>(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[T]) {
        let data = match T::PRECISION {
            Precision::F32 => ArrayData::F32(values.iter().map(|v| v.as_f64() as f32).collect()),
            Precision::F64 => ArrayData::F64(values.iter().map(|v| v.as_f64()).collect()),
        };
        self.arrays.insert(name.into(), Array { shape, data });
    }

    pub fn get<T: Real>(&self, name: &str) -> Result<(Vec<usize>, Vec<T>)> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))?;
        Ok((a.shape.clone(), a.data.to_vec()))
    }

    pub fn has_namespace(&self, namespace: &str) -> bool {
        let prefix = format!("{namespace}/");
        self.arrays.keys().any(|k| k.starts_with(&prefix))
    }

    /// Stores every parameter of `module` as `<namespace>/<name>`.
    pub fn store_module<T: Real, M: Module<T> + ?Sized>(&mut self, namespace: &str, module: &M) {
        for (name, p) in module.named_params() {
            self.insert(format!("{namespace}/{name}"), p.shape.clone(), &p.value);
        }
    }

    /// Overwrites every parameter of `module` from `<namespace>/<name>`;
    /// shapes must match exactly.
    pub fn load_module<T: Real, M: Module<T> + ?Sized>(&self, namespace: &str, module: &mut M) -> Result<()> {
        for (name, p) in module.named_params_mut() {
            let key = format!("{namespace}/{name}");
            let (shape, values) = self.get::<T>(&key)?;
            if shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "`{key}` has shape {shape:?}, module expects {:?}",
                    p.shape
                )));
            }
            p.value = values;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let put_str = |out: &mut Vec<u8>, s: &str| {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        };
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            put_str(&mut out, name);
            out.push(match a.data {
                ArrayData::F32(_) => 0,
                ArrayData::F64(_) => 1,
            });
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &a.data {
                ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let dtype = r.take(1)?[0];
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = match dtype {
                0 => ArrayData::F32(
                    r.take(4 * n)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                1 => ArrayData::F64(
                    r.take(8 * n)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                other => return Err(Error::Checkpoint(format!("unknown dtype tag {other}"))),
            };
            debug_assert_eq!(data.len(), n);
            ck.arrays.insert(name, Array { shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
