//! Desk-scale synthetic EP-pair data.
//!
//! Positives carry a planted enhancer motif and a paired promoter motif. In
//! `Global` mode every chromosome shares one motif pair; in `ChromosomeLocal`
//! mode each chromosome has its own, so the signal cannot transfer across
//! chromosomes. Near-duplicates are mutated clones kept on the source
//! chromosome: a random split leaks them across partitions, LOCO never does.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::{Chromosome, Dataset, EPRecord};
use super::{DataError, Result};

const BASES: [u8; 4] = *b"ACGT";
/// Size of the enriched k-mer set used by `composition_bias`.
pub const COMPOSITION_KMERS: usize = 32;
pub const COMPOSITION_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifMode {
    Global,
    ChromosomeLocal,
}

impl FromStr for MotifMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(MotifMode::Global),
            "local" | "chromosome_local" | "chromosome-local" => Ok(MotifMode::ChromosomeLocal),
            other => Err(format!("unknown motif mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifPair {
    pub enhancer: String,
    pub promoter: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub cell_line: String,
    pub n_chromosomes: usize,
    pub pairs_per_chromosome: usize,
    pub positive_fraction: f64,
    pub enhancer_len: usize,
    pub promoter_len: usize,
    pub motif_mode: MotifMode,
    /// 0 disables motif planting.
    pub motif_length: usize,
    /// Times the motif is written into each positive sequence.
    pub motif_copies: usize,
    pub near_duplicate_fraction: f64,
    pub mutation_rate: f64,
    /// Fraction of each positive sequence overwritten with k-mers drawn
    /// from a fixed enriched set. Shifts the k-mer spectrum without any
    /// single localized motif.
    pub composition_bias: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            cell_line: "synthetic".into(),
            n_chromosomes: 4,
            pairs_per_chromosome: 500,
            positive_fraction: 0.5,
            enhancer_len: 300,
            promoter_len: 200,
            motif_mode: MotifMode::ChromosomeLocal,
            motif_length: 10,
            motif_copies: 1,
            near_duplicate_fraction: 0.3,
            mutation_rate: 0.01,
            composition_bias: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(DataError::InvalidConfig(m));
        if !(2..=Chromosome::COUNT as usize).contains(&self.n_chromosomes) {
            return fail(format!("n_chromosomes must be in 2..=23, got {}", self.n_chromosomes));
        }
        if self.pairs_per_chromosome == 0 {
            return fail("pairs_per_chromosome must be positive".into());
        }
        for (name, v) in [
            ("positive_fraction", self.positive_fraction),
            ("near_duplicate_fraction", self.near_duplicate_fraction),
            ("mutation_rate", self.mutation_rate),
            ("composition_bias", self.composition_bias),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must be in [0,1], got {v}"));
            }
        }
        if self.enhancer_len < self.motif_length || self.promoter_len < self.motif_length {
            return fail("sequence lengths must be at least motif_length".into());
        }
        if self.composition_bias > 0.0 && self.enhancer_len.min(self.promoter_len) < COMPOSITION_K {
            return fail(format!("composition_bias needs sequences of at least {COMPOSITION_K} bp"));
        }
        let (n_orig, n_dup) = self.split_counts();
        if n_dup > 0 && n_orig == 0 {
            return fail("near_duplicate_fraction leaves no original pair to clone".into());
        }
        Ok(())
    }

    fn split_counts(&self) -> (usize, usize) {
        let n_dup = (self.near_duplicate_fraction * self.pairs_per_chromosome as f64).round() as usize;
        let n_dup = n_dup.min(self.pairs_per_chromosome);
        (self.pairs_per_chromosome - n_dup, n_dup)
    }

    fn motif_count(&self) -> usize {
        match self.motif_mode {
            MotifMode::Global => 1,
            MotifMode::ChromosomeLocal => self.n_chromosomes,
        }
    }
}

fn random_bases(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| BASES[rng.gen_range(0..4)]).collect()
}

fn draw_motifs(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<MotifPair> {
    let mut motifs: Vec<MotifPair> = Vec::with_capacity(cfg.motif_count());
    while motifs.len() < cfg.motif_count() {
        let pair = MotifPair {
            enhancer: String::from_utf8(random_bases(rng, cfg.motif_length)).unwrap(),
            promoter: String::from_utf8(random_bases(rng, cfg.motif_length)).unwrap(),
        };
        if cfg.motif_length == 0 || !motifs.contains(&pair) {
            motifs.push(pair);
        }
    }
    motifs
}

/// Motif pairs planted by [`generate_synthetic`] for this config: one
/// entry in `Global` mode, otherwise one per chromosome (`Chr1` first).
pub fn planted_motifs(cfg: &SyntheticConfig) -> Result<Vec<MotifPair>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(draw_motifs(cfg, &mut rng))
}

fn overwrite(seq: &mut [u8], rng: &mut ChaCha8Rng, insert: &[u8]) {
    if insert.is_empty() || insert.len() > seq.len() {
        return;
    }
    let offset = rng.gen_range(0..=seq.len() - insert.len());
    seq[offset..offset + insert.len()].copy_from_slice(insert);
}

fn enrich(seq: &mut [u8], rng: &mut ChaCha8Rng, kmers: &[Vec<u8>], bias: f64) {
    if bias <= 0.0 {
        return;
    }
    let inserts = (bias * seq.len() as f64 / COMPOSITION_K as f64).round() as usize;
    for _ in 0..inserts {
        let kmer = &kmers[rng.gen_range(0..kmers.len())];
        overwrite(seq, rng, kmer);
    }
}

fn mutate(seq: &str, rng: &mut ChaCha8Rng, rate: f64) -> String {
    seq.bytes()
        .map(|b| {
            if rng.gen::<f64>() < rate {
                let code = BASES.iter().position(|&x| x == b).unwrap_or(0);
                BASES[(code + rng.gen_range(1..4)) % 4] as char
            } else {
                b as char
            }
        })
        .collect()
}

/// Deterministic synthetic dataset; identical configs give identical records.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motifs = draw_motifs(cfg, &mut rng);
    let enriched: Vec<Vec<u8>> = (0..COMPOSITION_KMERS).map(|_| random_bases(&mut rng, COMPOSITION_K)).collect();
    let (n_orig, n_dup) = cfg.split_counts();
    let n_pos = (cfg.positive_fraction * n_orig as f64).round() as usize;

    let mut records = Vec::with_capacity(cfg.n_chromosomes * cfg.pairs_per_chromosome);
    for c in 1..=cfg.n_chromosomes {
        let chromosome = Chromosome::new(c as u8).expect("validated chromosome count");
        let motif = match cfg.motif_mode {
            MotifMode::Global => &motifs[0],
            MotifMode::ChromosomeLocal => &motifs[c - 1],
        };
        let mut block = Vec::with_capacity(cfg.pairs_per_chromosome);
        for i in 0..n_orig {
            let positive = i < n_pos;
            let mut enhancer = random_bases(&mut rng, cfg.enhancer_len);
            let mut promoter = random_bases(&mut rng, cfg.promoter_len);
            if positive {
                enrich(&mut enhancer, &mut rng, &enriched, cfg.composition_bias);
                enrich(&mut promoter, &mut rng, &enriched, cfg.composition_bias);
                for _ in 0..cfg.motif_copies {
                    overwrite(&mut enhancer, &mut rng, motif.enhancer.as_bytes());
                    overwrite(&mut promoter, &mut rng, motif.promoter.as_bytes());
                }
            }
            block.push(EPRecord::new(
                format!("{}:{chromosome}:{i}", cfg.cell_line),
                cfg.cell_line.clone(),
                chromosome,
                String::from_utf8(enhancer).unwrap(),
                String::from_utf8(promoter).unwrap(),
                positive as u8,
            ));
        }
        for j in 0..n_dup {
            let source = &block[rng.gen_range(0..n_orig)];
            let mut clone = EPRecord::new(
                format!("{}:{chromosome}:d{j}", cfg.cell_line),
                cfg.cell_line.clone(),
                chromosome,
                mutate(&source.enhancer_seq, &mut rng, cfg.mutation_rate),
                mutate(&source.promoter_seq, &mut rng, cfg.mutation_rate),
                source.label,
            );
            clone.clone_of = Some(source.pair_id.clone());
            block.push(clone);
        }
        block.shuffle(&mut rng);
        records.extend(block);
    }
    Ok(Dataset::new(cfg.cell_line.clone(), cfg.enhancer_len, cfg.promoter_len, records))
}
