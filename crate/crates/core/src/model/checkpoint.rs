//! The UDAC parameter checkpoint.
//!
//! Little-endian, no padding:
//!
//! ```text
//! "UDAC" | version u32 | flags u32 | input_dim u32 | hidden u32 | embed_dim u32 | num_classes u32
//! params: f32 x num_params            (block order of `Model`)
//! if flags bit 1 (training state):
//!   step u32
//!   velocity: f32 x num_params
//!   source bank: rows u32, f32 x rows*embed_dim
//!   target bank: rows u32, f32 x rows*embed_dim
//! ```
//!
//! Flag bit 0 records whether an adapter is present (`hidden` is 0 otherwise).

use std::fs;
use std::path::Path;

use super::{Model, ModelShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const UDAC_MAGIC: &[u8; 4] = b"UDAC";
pub const UDAC_VERSION: u32 = 1;
const FLAG_ADAPTER: u32 = 1;
const FLAG_TRAIN_STATE: u32 = 2;

/// Optimizer and memory state needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSnapshot {
    pub step: usize,
    pub velocity: Vec<f32>,
    pub source_bank: Matrix<f32>,
    pub target_bank: Matrix<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub train: Option<TrainSnapshot>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::shape(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let shape = ckpt.model.shape();
    let mut out = Vec::new();
    out.extend_from_slice(UDAC_MAGIC);
    out.extend_from_slice(&UDAC_VERSION.to_le_bytes());
    let mut flags = 0;
    if shape.hidden.is_some() {
        flags |= FLAG_ADAPTER;
    }
    if ckpt.train.is_some() {
        flags |= FLAG_TRAIN_STATE;
    }
    out.extend_from_slice(&flags.to_le_bytes());
    put_u32(&mut out, shape.input_dim)?;
    put_u32(&mut out, shape.hidden.unwrap_or(0))?;
    put_u32(&mut out, shape.embed_dim)?;
    put_u32(&mut out, shape.num_classes)?;
    put_f32s(&mut out, ckpt.model.params());
    if let Some(t) = &ckpt.train {
        if t.velocity.len() != ckpt.model.params().len() {
            return Err(Error::shape("velocity length does not match the parameters"));
        }
        for bank in [&t.source_bank, &t.target_bank] {
            if bank.dim() != shape.embed_dim {
                return Err(Error::shape("bank dimension does not match the embedding"));
            }
        }
        put_u32(&mut out, t.step)?;
        put_f32s(&mut out, &t.velocity);
        for bank in [&t.source_bank, &t.target_bank] {
            put_u32(&mut out, bank.rows())?;
            put_f32s(&mut out, bank.as_slice());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::format(self.bytes.len() as u64, format!("truncated {what}")))?;
        self.pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let end = n
            .checked_mul(4)
            .and_then(|b| b.checked_add(self.pos))
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} size overflows")))?;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.bytes.len() as u64, format!("truncated {what}")))?;
        let mut v = Vec::with_capacity(n);
        for (i, c) in b.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !x.is_finite() {
                return Err(Error::format((self.pos + 4 * i) as u64, format!("non-finite value in {what}")));
            }
            v.push(x);
        }
        self.pos = end;
        Ok(v)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != UDAC_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"UDAC\""));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != UDAC_VERSION as usize {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let flags = r.u32("flags")? as u32;
    if flags & !(FLAG_ADAPTER | FLAG_TRAIN_STATE) != 0 {
        return Err(Error::format(8, format!("unknown flag bits {flags:#x}")));
    }
    let input_dim = r.u32("input_dim")?;
    let hidden = r.u32("hidden")?;
    let embed_dim = r.u32("embed_dim")?;
    let num_classes = r.u32("num_classes")?;
    let hidden = if flags & FLAG_ADAPTER != 0 {
        Some(hidden)
    } else if hidden == 0 {
        None
    } else {
        return Err(Error::format(16, "hidden width set without the adapter flag"));
    };
    let shape = ModelShape::new(input_dim, hidden, embed_dim, num_classes)
        .map_err(|e| Error::format(12, e.to_string()))?;
    let params = r.f32s(shape.num_params(), "parameters")?;
    let model = Model::from_params(shape, params)?;
    let train = if flags & FLAG_TRAIN_STATE != 0 {
        let step = r.u32("step")?;
        let velocity = r.f32s(shape.num_params(), "velocity")?;
        let mut banks = Vec::with_capacity(2);
        for what in ["source bank", "target bank"] {
            let rows = r.u32(what)?;
            let data = r.f32s(rows * embed_dim, what)?;
            banks.push(Matrix::from_vec(rows, embed_dim, data)?);
        }
        let target_bank = banks.pop().unwrap_or_else(|| Matrix::zeros(0, embed_dim));
        let source_bank = banks.pop().unwrap_or_else(|| Matrix::zeros(0, embed_dim));
        Some(TrainSnapshot {
            step,
            velocity,
            source_bank,
            target_bank,
        })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after checkpoint"));
    }
    Ok(Checkpoint { model, train })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model<f32> {
        Model::init(ModelShape::new(3, Some(4), 2, 2).unwrap(), 1).unwrap()
    }

    #[test]
    fn round_trip_with_state() {
        let m = model();
        let n = m.params().len();
        let ckpt = Checkpoint {
            train: Some(TrainSnapshot {
                step: 17,
                velocity: (0..n).map(|i| i as f32 * 0.01).collect(),
                source_bank: Matrix::from_rows(&[[0.6f32, 0.8], [1.0, 0.0]]).unwrap(),
                target_bank: Matrix::from_rows(&[[0.0f32, 1.0]]).unwrap(),
            }),
            model: m,
        };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        assert_eq!(&bytes[..4], b"UDAC");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ckpt);
    }

    #[test]
    fn round_trip_head_only() {
        let m = Model::<f32>::init(ModelShape::head_only(3, 2).unwrap(), 2).unwrap();
        let ckpt = Checkpoint { model: m, train: None };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        assert_eq!(bytes.len(), 28 + 4 * (4 * 3 + 4));
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ckpt);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_checkpoint(&Checkpoint { model: model(), train: None }).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
