//! Weight container.
//!
//! ```text
//! "EPIW" | version u32 | spec text (u32 length + UTF-8) | channel order [u8; 4]
//! | adam lr, beta1, beta2, epsilon (f64) | step u64 | tensor count u32
//! | per tensor: name (u16 length + UTF-8), length u64, f64 values
//! | crc32 of all preceding bytes
//! ```
//!
//! All integers and reals are little-endian. Tensors appear in layout order,
//! followed by the running mean and variance of each batchnorm layer.

use std::io::{Read, Write};

use super::adam::AdamConfig;
use super::params::{build_model, BnSite, ModelParams};
use super::spec::ModelSpec;
use super::NnetError;
use crate::features::CHANNEL_ORDER;

pub const MAGIC: &[u8; 4] = b"EPIW";
pub const FORMAT_VERSION: u32 = 1;

fn tensors(model: &ModelParams) -> Vec<(String, &[f64])> {
    let mut out: Vec<(String, &[f64])> =
        model.layout.tensors().into_iter().map(|(name, r)| (name.to_string(), &model.values[r])).collect();
    for (site, stats) in BnSite::ALL.iter().zip(&model.running) {
        out.push((format!("{}.running_mean", site.name()), &stats.mean));
        out.push((format!("{}.running_var", site.name()), &stats.var));
    }
    out
}

pub fn save_weights<W: Write>(model: &ModelParams, mut sink: W) -> Result<(), NnetError> {
    let mut buf = Vec::with_capacity(64 + model.values.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let spec = model.spec.to_text();
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec.as_bytes());
    buf.extend_from_slice(&model.channel_order);
    let o = &model.optimizer;
    for v in [o.learning_rate, o.beta1, o.beta2, o.epsilon] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.step.to_le_bytes());
    let ts = tensors(model);
    buf.extend_from_slice(&(ts.len() as u32).to_le_bytes());
    for (name, values) in ts {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(NnetError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NnetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self, n: usize) -> Result<String, NnetError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NnetError::Format("invalid UTF-8".into()))
    }
}

pub fn load_weights<R: Read>(mut source: R) -> Result<ModelParams, NnetError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(if MAGIC.starts_with(&bytes[..bytes.len().min(4)]) && bytes.len() < 4 {
            NnetError::Truncated
        } else {
            NnetError::BadMagic
        });
    }
    if bytes.len() < 12 {
        return Err(NnetError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(NnetError::Version { found: version, expected: FORMAT_VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(NnetError::Checksum);
    }

    let mut r = Reader { buf: body, pos: 8 };
    let n = r.u32()? as usize;
    let spec = ModelSpec::from_text(&r.text(n)?)?;
    let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &tag != CHANNEL_ORDER {
        return Err(NnetError::ChannelOrder(String::from_utf8_lossy(&tag).into_owned()));
    }
    let optimizer = AdamConfig { learning_rate: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, epsilon: r.f64()? };
    let step = r.u64()?;

    let mut model = build_model(&spec, 0)?;
    model.optimizer = optimizer;
    model.step = step;
    let expected: Vec<(String, usize)> = tensors(&model).into_iter().map(|(n, v)| (n, v.len())).collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(NnetError::Format(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut stored = Vec::with_capacity(count);
    for (want_name, want_len) in &expected {
        let n = r.u16()? as usize;
        let name = r.text(n)?;
        let len = r.u64()? as usize;
        if &name != want_name || len != *want_len {
            return Err(NnetError::Format(format!(
                "tensor '{name}' ({len} values) where '{want_name}' ({want_len}) was expected"
            )));
        }
        let values: Vec<f64> = r
            .take(len.checked_mul(8).ok_or(NnetError::Truncated)?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        stored.push(values);
    }
    if r.pos != body.len() {
        return Err(NnetError::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let mut stored = stored.into_iter();
    for (_, range) in model.layout.tensors() {
        model.values[range].copy_from_slice(&stored.next().expect("counted"));
    }
    for stats in model.running.iter_mut() {
        stats.mean = stored.next().expect("counted");
        stats.var = stored.next().expect("counted");
    }
    model.check()?;
    Ok(model)
}

/// Like [`load_weights`], but refuses a file whose architecture differs from `expected`.
pub fn load_weights_expecting<R: Read>(source: R, expected: &ModelSpec) -> Result<ModelParams, NnetError> {
    let model = load_weights(source)?;
    if &model.spec != expected {
        return Err(NnetError::SpecMismatch { found: model.spec.to_text(), expected: expected.to_text() });
    }
    Ok(model)
}
