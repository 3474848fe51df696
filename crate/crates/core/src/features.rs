//! Sequence featurization: one-hot matrices and normalized k-mer spectra.
//!
//! Channel order is A, C, G, T everywhere (one-hot columns and k-mer digit
//! codes). The tag [`CHANNEL_ORDER`] travels with saved weights and feature
//! caches so that files produced under another order are refused.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dataio::EPRecord;

pub const CHANNEL_ORDER: &[u8; 4] = b"ACGT";
pub const DEFAULT_K: usize = 5;
/// 4^15 entries is the largest spectrum we allocate.
pub const MAX_K: usize = 15;

const CACHE_MAGIC: &[u8; 8] = b"EPIKMER1";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid nucleotide '{ch}' at position {pos}")]
    InvalidNucleotide { ch: char, pos: usize },
    #[error("k must be in 1..={MAX_K}, got {0}")]
    BadK(usize),
    #[error("feature cache: {0}")]
    Cache(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Denominator used to turn k-mer counts into frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KmerNorm {
    /// Divide by the number of valid windows; vectors sum to 1.
    #[default]
    ValidWindows,
    /// Divide by 4^k (compatibility mode; vectors do not sum to 1).
    AllKmers,
}

/// Channel code of a nucleotide, `None` for `N`.
#[inline]
fn channel(b: u8) -> Result<Option<usize>, u8> {
    match b {
        b'A' => Ok(Some(0)),
        b'C' => Ok(Some(1)),
        b'G' => Ok(Some(2)),
        b'T' => Ok(Some(3)),
        b'N' => Ok(None),
        other => Err(other),
    }
}

/// Row-major L x 4 one-hot matrix. `N` rows are all zero.
pub fn one_hot_encode(seq: &str) -> Result<Vec<f64>, FeatureError> {
    let mut out = vec![0.0; seq.len() * 4];
    for (pos, b) in seq.bytes().enumerate() {
        match channel(b) {
            Ok(Some(c)) => out[pos * 4 + c] = 1.0,
            Ok(None) => {}
            Err(ch) => return Err(FeatureError::InvalidNucleotide { ch: ch as char, pos }),
        }
    }
    Ok(out)
}

/// Base-4 code of a k-mer, leftmost base most significant. `None` when the
/// k-mer contains anything other than A/C/G/T.
pub fn kmer_index(kmer: &str) -> Option<usize> {
    if kmer.is_empty() || kmer.len() > MAX_K {
        return None;
    }
    kmer.bytes().try_fold(0usize, |acc, b| match channel(b) {
        Ok(Some(c)) => Some(acc * 4 + c),
        _ => None,
    })
}

/// Inverse of [`kmer_index`].
pub fn kmer_string(index: usize, k: usize) -> String {
    (0..k).rev().map(|shift| CHANNEL_ORDER[(index >> (2 * shift)) & 3] as char).collect()
}

pub fn kmer_vector(seq: &str, k: usize) -> Result<Vec<f64>, FeatureError> {
    kmer_vector_with(seq, k, KmerNorm::ValidWindows)
}

/// Sliding-window k-mer frequencies of length 4^k. Windows touching an `N`
/// are skipped. Sequences with no valid window give the zero vector.
pub fn kmer_vector_with(seq: &str, k: usize, norm: KmerNorm) -> Result<Vec<f64>, FeatureError> {
    if k == 0 || k > MAX_K {
        return Err(FeatureError::BadK(k));
    }
    let dim = 1usize << (2 * k);
    let mask = dim - 1;
    let mut counts = vec![0u32; dim];
    let mut code = 0usize;
    // length of the current run of valid bases
    let mut run = 0usize;
    let mut windows = 0usize;
    for (pos, b) in seq.bytes().enumerate() {
        match channel(b) {
            Ok(Some(c)) => {
                code = ((code << 2) | c) & mask;
                run += 1;
                if run >= k {
                    counts[code] += 1;
                    windows += 1;
                }
            }
            Ok(None) => run = 0,
            Err(ch) => return Err(FeatureError::InvalidNucleotide { ch: ch as char, pos }),
        }
    }
    if windows == 0 {
        return Ok(vec![0.0; dim]);
    }
    let denom = match norm {
        KmerNorm::ValidWindows => windows as f64,
        KmerNorm::AllKmers => dim as f64,
    };
    Ok(counts.into_iter().map(|c| c as f64 / denom).collect())
}

/// Model inputs for one EP pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// Enhancer one-hot, row-major `enhancer_len x 4`.
    pub enh_onehot: Vec<f64>,
    pub prom_onehot: Vec<f64>,
    pub enh_kmer: Vec<f64>,
    pub prom_kmer: Vec<f64>,
    pub k: usize,
}

impl FeatureBundle {
    pub fn enhancer_len(&self) -> usize {
        self.enh_onehot.len() / 4
    }

    pub fn promoter_len(&self) -> usize {
        self.prom_onehot.len() / 4
    }
}

pub fn featurize_pair(r: &EPRecord, k: usize) -> Result<FeatureBundle, FeatureError> {
    Ok(FeatureBundle {
        enh_onehot: one_hot_encode(&r.enhancer_seq)?,
        prom_onehot: one_hot_encode(&r.promoter_seq)?,
        enh_kmer: kmer_vector(&r.enhancer_seq, k)?,
        prom_kmer: kmer_vector(&r.promoter_seq, k)?,
        k,
    })
}

pub fn featurize_records(records: &[EPRecord], k: usize) -> Result<Vec<FeatureBundle>, FeatureError> {
    records.iter().map(|r| featurize_pair(r, k)).collect()
}

/// Writes per-record (enhancer, promoter) k-mer vectors as little-endian
/// f64 after a header: magic, k, dimension, channel-order tag, record count.
pub fn write_kmer_cache<W: Write>(bundles: &[FeatureBundle], k: usize, mut sink: W) -> Result<(), FeatureError> {
    let dim = 1usize << (2 * k);
    sink.write_all(CACHE_MAGIC)?;
    sink.write_all(&(k as u32).to_le_bytes())?;
    sink.write_all(&(dim as u64).to_le_bytes())?;
    sink.write_all(CHANNEL_ORDER)?;
    sink.write_all(&(bundles.len() as u64).to_le_bytes())?;
    for b in bundles {
        if b.k != k || b.enh_kmer.len() != dim || b.prom_kmer.len() != dim {
            return Err(FeatureError::Cache(format!("bundle does not match k={k}")));
        }
        for v in b.enh_kmer.iter().chain(&b.prom_kmer) {
            sink.write_all(&v.to_le_bytes())?;
        }
    }
    sink.flush()?;
    Ok(())
}

/// Reads a cache written by [`write_kmer_cache`]: returns k and the
/// (enhancer, promoter) vectors per record.
#[allow(clippy::type_complexity)]
pub fn read_kmer_cache<R: Read>(mut source: R) -> Result<(usize, Vec<(Vec<f64>, Vec<f64>)>), FeatureError> {
    let mut magic = [0u8; 8];
    source.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(FeatureError::Cache("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    source.read_exact(&mut u32b)?;
    let k = u32::from_le_bytes(u32b) as usize;
    if k == 0 || k > MAX_K {
        return Err(FeatureError::BadK(k));
    }
    source.read_exact(&mut u64b)?;
    let dim = u64::from_le_bytes(u64b) as usize;
    if dim != 1 << (2 * k) {
        return Err(FeatureError::Cache(format!("dimension {dim} does not match k={k}")));
    }
    let mut tag = [0u8; 4];
    source.read_exact(&mut tag)?;
    if &tag != CHANNEL_ORDER {
        return Err(FeatureError::Cache(format!(
            "channel order {} differs from {}",
            String::from_utf8_lossy(&tag),
            String::from_utf8_lossy(CHANNEL_ORDER)
        )));
    }
    source.read_exact(&mut u64b)?;
    let n = u64::from_le_bytes(u64b) as usize;
    let read_vec = |source: &mut R| -> Result<Vec<f64>, FeatureError> {
        let mut buf = vec![0u8; dim * 8];
        source.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let e = read_vec(&mut source)?;
        let p = read_vec(&mut source)?;
        out.push((e, p));
    }
    Ok((k, out))
}
