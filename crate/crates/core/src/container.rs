//! Binary artifact container: named little-endian f64 tensors plus string
//! metadata, closed by a SHA-256 digest of everything before it.
//!
//! Layout: magic `SBCA`, u32 version, u32 metadata count, then
//! `(key, value)` length-prefixed strings, u32 tensor count, then per tensor
//! a length-prefixed name, u32 rank, u64 dims and the row-major values.
//! Entries are written in key order so identical content gives identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SBCA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.shape[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(Error::Format(format!(
                "expected a rank-2 tensor, found shape {:?}",
                self.shape
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

/// Human-readable summary written next to each container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub sha256: String,
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Vec<usize>>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("container lacks metadata '{key}'")))
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.tensors.insert(name.to_string(), tensor);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("container lacks tensor '{name}'")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 4 + 32 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a container (bad magic)".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("container checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let mut c = Container::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            c.metadata.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Format("tensor too large".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            c.tensors.insert(name, Tensor { shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes in container".into()));
        }
        Ok(c)
    }

    pub fn sidecar(&self, bytes: &[u8]) -> Sidecar {
        let digest = &bytes[bytes.len() - 32..];
        Sidecar {
            version: VERSION,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            metadata: self.metadata.clone(),
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.shape.clone())).collect(),
        }
    }

    /// Writes `path` and a `path.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        let json = serde_json::to_string_pretty(&self.sidecar(&bytes)).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(sidecar_path(path), json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated container".into()))?;
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
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 in container".into()))
    }
}
