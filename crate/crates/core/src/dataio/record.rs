use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use super::id_hash;

/// Accepted sequence alphabet. `N` marks an unknown base.
pub const NUCLEOTIDES: [u8; 5] = *b"ACGTN";

/// Canonical chromosome label `Chr1..Chr23`, where `Chr23` is X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chromosome(u8);

impl Chromosome {
    pub const COUNT: u8 = 23;

    pub fn new(number: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&number).then_some(Self(number))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// All 23 labels in fold order.
    pub fn all() -> impl Iterator<Item = Chromosome> {
        (1..=Self::COUNT).map(Chromosome)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Chr{}", self.0)
    }
}

impl FromStr for Chromosome {
    type Err = String;

    /// Accepts `chr5`, `Chr5`, `CHR5` and `5`; `X` maps to `Chr23`.
    /// Y and mitochondrial labels are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let body = if trimmed.len() >= 3 && trimmed[..3].eq_ignore_ascii_case("chr") { &trimmed[3..] } else { trimmed };
        if body.eq_ignore_ascii_case("x") {
            return Ok(Chromosome(23));
        }
        body.parse::<u8>().ok().and_then(Chromosome::new).ok_or_else(|| format!("unknown chromosome label '{s}'"))
    }
}

/// One enhancer-promoter pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EPRecord {
    pub pair_id: String,
    pub cell_line: String,
    /// Pair chromosome, taken from the enhancer.
    pub chromosome: Chromosome,
    /// Promoter chromosome as read; must equal `chromosome` for a cis pair.
    pub promoter_chromosome: Chromosome,
    pub enhancer_seq: String,
    pub promoter_seq: String,
    /// 1 = interacting.
    pub label: u8,
    pub enhancer_span: Option<(u64, u64)>,
    pub promoter_span: Option<(u64, u64)>,
    /// Source pair id when this record is a near-duplicate clone.
    pub clone_of: Option<String>,
}

impl EPRecord {
    pub fn new(
        pair_id: impl Into<String>,
        cell_line: impl Into<String>,
        chromosome: Chromosome,
        enhancer_seq: impl Into<String>,
        promoter_seq: impl Into<String>,
        label: u8,
    ) -> Self {
        Self {
            pair_id: pair_id.into(),
            cell_line: cell_line.into(),
            chromosome,
            promoter_chromosome: chromosome,
            enhancer_seq: enhancer_seq.into(),
            promoter_seq: promoter_seq.into(),
            label,
            enhancer_span: None,
            promoter_span: None,
            clone_of: None,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// An ordered collection of EP pairs from one cell line with declared
/// sequence lengths. Construction does not validate; see
/// [`validate_dataset`](super::validate_dataset).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub cell_line: String,
    pub enhancer_len: usize,
    pub promoter_len: usize,
    pub records: Vec<EPRecord>,
}

impl Dataset {
    pub fn new(cell_line: impl Into<String>, enhancer_len: usize, promoter_len: usize, records: Vec<EPRecord>) -> Self {
        Self { cell_line: cell_line.into(), enhancer_len, promoter_len, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.records.iter().filter(|r| r.label == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.records.iter().filter(|r| r.label == 0).count()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn pair_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.pair_id.as_str())
    }

    /// Distinct chromosomes present, ascending.
    pub fn chromosomes(&self) -> Vec<Chromosome> {
        let mut seen: Vec<Chromosome> =
            self.records.iter().map(|r| r.chromosome).collect::<HashSet<_>>().into_iter().collect();
        seen.sort();
        seen
    }

    /// Hash of the ordered pair ids; manifests carry it to detect mismatched inputs.
    pub fn id_hash(&self) -> String {
        id_hash(self.pair_ids())
    }

    /// Same records restricted to a subset of indices, order preserved.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            cell_line: self.cell_line.clone(),
            enhancer_len: self.enhancer_len,
            promoter_len: self.promoter_len,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Central windows of the requested lengths. Sequences already at or below
    /// the target length are left untouched.
    pub fn center_crop(&self, enhancer_len: usize, promoter_len: usize) -> Dataset {
        fn crop(seq: &str, len: usize) -> String {
            if seq.len() <= len {
                return seq.to_string();
            }
            let start = (seq.len() - len) / 2;
            seq[start..start + len].to_string()
        }
        let enhancer_len = enhancer_len.min(self.enhancer_len);
        let promoter_len = promoter_len.min(self.promoter_len);
        Dataset {
            cell_line: self.cell_line.clone(),
            enhancer_len,
            promoter_len,
            records: self
                .records
                .iter()
                .map(|r| EPRecord {
                    enhancer_seq: crop(&r.enhancer_seq, enhancer_len),
                    promoter_seq: crop(&r.promoter_seq, promoter_len),
                    ..r.clone()
                })
                .collect(),
        }
    }
}
