//! Binary checkpoints.
//!
//! All integers are little-endian `u64` unless noted, all reals are
//! little-endian IEEE-754 `f64` (single precision values widen exactly).
//!
//! ```text
//! magic      8 bytes  "GAPCAST1"
//! kind       u8       0 = bare GRU cell, 1 = forecast model
//! -- kind 0 --
//! input_dim, hidden_dim, seed
//! -- kind 1 --
//! variant    u8       0 simple, 1 bilayer, 2 velocity
//! num_vars, hidden, seed
//! 4 arrays   value_mean, value_scale, gap_mean, gap_scale
//! -- both --
//! count      number of parameter arrays that follow
//! count × (len, len × f64)   in the model's canonical parameter order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ForecastModel, Variant};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::gru::GruParams;
use crate::params::Parameterized;
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"GAPCAST1";
const KIND_GRU: u8 = 0;
const KIND_MODEL: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: u8) -> Self {
        let mut buf = MAGIC.to_vec();
        buf.push(kind);
        Self(buf)
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn array<T: Real>(&mut self, values: &[T]) {
        self.u64(values.len() as u64);
        for v in values {
            self.0.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }

    fn arrays<T: Real>(&mut self, arrays: &[&[T]]) {
        self.u64(arrays.len() as u64);
        for a in arrays {
            self.array(a);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], kind: u8) -> std::result::Result<Self, String> {
        if buf.len() < 9 || &buf[..8] != MAGIC {
            return Err("not a gapcast checkpoint".into());
        }
        if buf[8] != kind {
            return Err(format!("checkpoint kind {} where {kind} was expected", buf[8]));
        }
        Ok(Self { buf, pos: 9 })
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated checkpoint")?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "dimension overflows usize".to_string())
    }

    fn array<T: Real>(&mut self) -> std::result::Result<Vec<T>, String> {
        let len = self.usize()?;
        let bytes = self.take(len.checked_mul(8).ok_or("array length overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn load_into<T: Real, P: Parameterized<T>>(&mut self, target: &mut P) -> std::result::Result<(), String> {
        let count = self.usize()?;
        let shapes = target.shapes();
        if count != shapes.len() {
            return Err(format!("{count} parameter arrays, expected {}", shapes.len()));
        }
        for (i, slot) in target.arrays_mut().into_iter().enumerate() {
            let values: Vec<T> = self.array()?;
            if values.len() != slot.len() {
                return Err(format!("array {i} has {} entries, expected {}", values.len(), slot.len()));
            }
            slot.copy_from_slice(&values);
        }
        if self.pos != self.buf.len() {
            return Err("trailing bytes after checkpoint".into());
        }
        Ok(())
    }
}

pub fn gru_to_bytes<T: Real>(params: &GruParams<T>, seed: u64) -> Vec<u8> {
    let mut w = Writer::new(KIND_GRU);
    w.u64(params.input_dim as u64);
    w.u64(params.hidden_dim as u64);
    w.u64(seed);
    w.arrays(&params.arrays());
    w.0
}

/// Returns the parameters and the seed they were initialized from.
pub fn gru_from_bytes<T: Real>(buf: &[u8]) -> std::result::Result<(GruParams<T>, u64), String> {
    let mut r = Reader::open(buf, KIND_GRU)?;
    let input = r.usize()?;
    let hidden = r.usize()?;
    let seed = r.u64()?;
    let mut params = GruParams::zeros(input, hidden);
    r.load_into(&mut params)?;
    Ok((params, seed))
}

pub fn model_to_bytes<T: Real>(model: &ForecastModel<T>) -> Vec<u8> {
    let mut w = Writer::new(KIND_MODEL);
    w.u8(model.variant.tag());
    w.u64(model.num_vars as u64);
    w.u64(model.hidden as u64);
    w.u64(model.seed);
    let n = &model.normalization;
    for a in [&n.value_mean, &n.value_scale, &n.gap_mean, &n.gap_scale] {
        w.array(a);
    }
    w.arrays(&model.arrays());
    w.0
}

pub fn model_from_bytes<T: Real>(buf: &[u8]) -> std::result::Result<ForecastModel<T>, String> {
    let mut r = Reader::open(buf, KIND_MODEL)?;
    let tag = r.u8()?;
    let variant = Variant::from_tag(tag).ok_or_else(|| format!("unknown variant tag {tag}"))?;
    let num_vars = r.usize()?;
    let hidden = r.usize()?;
    let seed = r.u64()?;
    let normalization = Normalization {
        value_mean: r.array()?,
        value_scale: r.array()?,
        gap_mean: r.array()?,
        gap_scale: r.array()?,
    };
    let mut model = ForecastModel::new(variant, num_vars, hidden, normalization, seed).map_err(|e| e.to_string())?;
    r.load_into(&mut model)?;
    Ok(model)
}

pub fn save_model<T: Real>(model: &ForecastModel<T>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<ForecastModel<T>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    model_from_bytes(&buf).map_err(|reason| Error::format(path, reason))
}
