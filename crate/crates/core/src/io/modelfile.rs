//! Binary container for learned parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "TXCODE\0\x01"
//! version    u16
//! kind       u16
//! geometry   5 x u64  dim, units, side, scales, color (0 or 1)
//! count      u32      number of arrays
//! per array:
//!   name_len u16, name (UTF-8)
//!   ndim     u8,  dims (ndim x u64)
//!   len      u64, data (len x f64, row-major)
//! crc32      u32      over every preceding byte
//! ```

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"TXCODE\0\x01";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Km,
    Sc,
    Ae,
    S3c,
    S4c,
    Ms4c,
    Features,
    SvmLinear,
    SvmChi2,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Km,
        ModelKind::Sc,
        ModelKind::Ae,
        ModelKind::S3c,
        ModelKind::S4c,
        ModelKind::Ms4c,
        ModelKind::Features,
        ModelKind::SvmLinear,
        ModelKind::SvmChi2,
        ModelKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Km => "km",
            ModelKind::Sc => "sc",
            ModelKind::Ae => "ae",
            ModelKind::S3c => "s3c",
            ModelKind::S4c => "s4c",
            ModelKind::Ms4c => "ms4c",
            ModelKind::Features => "features",
            ModelKind::SvmLinear => "svm-linear",
            ModelKind::SvmChi2 => "svm-chi2",
            ModelKind::Knn => "knn",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::config(format!("unknown model kind '{name}'")))
    }

    fn code(self) -> u16 {
        self as u16 + 1
    }

    fn from_code(code: u16) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown model kind code {code}")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Geometry {
    /// Visible dimension `D`.
    pub dim: usize,
    /// Dictionary size `N`.
    pub units: usize,
    /// Patch side `p`.
    pub side: usize,
    /// Number of scales `M`.
    pub scales: usize,
    pub color: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub geometry: Geometry,
    pub arrays: Vec<NamedArray>,
}

impl ModelFile {
    pub fn new(kind: ModelKind, geometry: Geometry) -> Self {
        Self {
            kind,
            geometry,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let name = name.into();
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::Format(format!(
                "array '{name}' has {} values but shape {shape:?}",
                data.len()
            )));
        }
        if name.len() > u16::MAX as usize || shape.len() > u8::MAX as usize {
            return Err(Error::Format(format!("array '{name}' header is too large")));
        }
        self.arrays.push(NamedArray {
            name,
            shape: shape.to_vec(),
            data,
        });
        Ok(())
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        self.push(name, &[1], vec![value])
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("{} file has no array '{name}'", self.kind)))
    }

    pub fn has(&self, name: &str) -> bool {
        self.arrays.iter().any(|a| a.name == name)
    }

    /// Data of `name`, checked against `shape`.
    pub fn array(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let a = self.get(name)?;
        if a.shape != shape {
            return Err(Error::Format(format!(
                "array '{name}' has shape {:?}, expected {shape:?}",
                a.shape
            )));
        }
        Ok(&a.data)
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.array(name, &[1])?[0])
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.name().into(),
                found: self.kind.name().into(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        let g = &self.geometry;
        for x in [g.dim, g.units, g.side, g.scales, g.color as usize] {
            out.extend_from_slice(&(x as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.shape.len() as u8);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(a.data.len() as u64).to_le_bytes());
            for x in &a.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a file image. Structure is read first so that a short file
    /// reports truncation; the checksum is verified afterwards.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let kind_code = r.u16("kind")?;
        let mut geo = [0usize; 5];
        for g in geo.iter_mut() {
            *g = r.u64("geometry")? as usize;
        }
        let count = r.u32("array count")?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let name_len = r.u16("array name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "array name")?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let ndim = r.take(1, "array rank")?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64("array shape")? as usize);
            }
            let len = r.u64("array length")? as usize;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Truncated(name.clone()))?, &name)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if shape.iter().product::<usize>() != len {
                return Err(Error::Format(format!("array '{name}' length disagrees with its shape")));
            }
            arrays.push(NamedArray { name, shape, data });
        }
        let body = r.pos;
        let stored = r.u32("checksum")?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let computed = crc32fast::hash(&bytes[..body]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(Self {
            kind: ModelKind::from_code(kind_code)?,
            geometry: Geometry {
                dim: geo[0],
                units: geo[1],
                side: geo[2],
                scales: geo[3],
                color: geo[4] != 0,
            },
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads a file and rejects any kind other than `kind`.
    pub fn load_as(path: impl AsRef<Path>, kind: ModelKind) -> Result<Self> {
        let file = Self::load(path)?;
        file.expect_kind(kind)?;
        Ok(file)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(what.to_string())),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
