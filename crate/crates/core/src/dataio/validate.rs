use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::record::{Chromosome, Dataset};

/// Per-chromosome class counts plus every invariant violation found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub cell_line: String,
    /// (positives, negatives) per chromosome.
    pub per_chromosome: BTreeMap<Chromosome, (usize, usize)>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total(&self) -> usize {
        self.n_pos + self.n_neg
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cell_line\t{}", self.cell_line)?;
        writeln!(f, "chromosome\tinteracting\tnon_interacting")?;
        for (c, (pos, neg)) in &self.per_chromosome {
            writeln!(f, "{c}\t{pos}\t{neg}")?;
        }
        writeln!(f, "total\t{}\t{}", self.n_pos, self.n_neg)?;
        writeln!(f, "violations\t{}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Reports class counts and invariant violations. Never fails.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut per_chromosome: BTreeMap<Chromosome, (usize, usize)> = BTreeMap::new();
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let (mut n_pos, mut n_neg) = (0, 0);

    for (i, r) in d.records.iter().enumerate() {
        let row = i + 1;
        let counts = per_chromosome.entry(r.chromosome).or_default();
        match r.label {
            1 => {
                counts.0 += 1;
                n_pos += 1;
            }
            0 => {
                counts.1 += 1;
                n_neg += 1;
            }
            other => violations.push(format!("row {row} ({}): label {other} is not 0 or 1", r.pair_id)),
        }
        if !seen.insert(r.pair_id.as_str()) {
            violations.push(format!("row {row}: duplicate pair_id '{}'", r.pair_id));
        }
        if r.promoter_chromosome != r.chromosome {
            violations.push(format!(
                "row {row} ({}): cis-pair mismatch, enhancer on {} and promoter on {}",
                r.pair_id, r.chromosome, r.promoter_chromosome
            ));
        }
        for (what, seq, declared) in
            [("enhancer", &r.enhancer_seq, d.enhancer_len), ("promoter", &r.promoter_seq, d.promoter_len)]
        {
            if let Some(c) = seq.chars().find(|c| !matches!(c, 'A' | 'C' | 'G' | 'T' | 'N')) {
                violations.push(format!("row {row} ({}): invalid nucleotide '{c}' in {what}", r.pair_id));
            }
            if seq.len() != declared {
                violations.push(format!(
                    "row {row} ({}): {what} length {} differs from declared {declared}",
                    r.pair_id,
                    seq.len()
                ));
            }
        }
    }

    ValidationReport { cell_line: d.cell_line.clone(), per_chromosome, n_pos, n_neg, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::EPRecord;

    fn chr(n: u8) -> Chromosome {
        Chromosome::new(n).unwrap()
    }

    #[test]
    fn clean_dataset_counts_conserve() {
        let records = (0..10)
            .map(|i| EPRecord::new(format!("p{i}"), "x", chr(1 + (i % 3) as u8), "ACGT", "AC", (i % 2) as u8))
            .collect();
        let d = Dataset::new("x", 4, 2, records);
        let report = validate_dataset(&d);
        assert!(report.is_clean(), "{report}");
        let summed: usize = report.per_chromosome.values().map(|(p, n)| p + n).sum();
        assert_eq!(summed, d.len());
        assert_eq!(report.total(), 10);
        assert_eq!((report.n_pos, report.n_neg), (d.n_pos(), d.n_neg()));
    }

    #[test]
    fn cis_mismatch_and_other_violations_reported() {
        let mut r = EPRecord::new("a", "x", chr(2), "ACGT", "AC", 1);
        r.promoter_chromosome = chr(3);
        let dup = EPRecord::new("a", "x", chr(2), "ACGB", "ACG", 3);
        let report = validate_dataset(&Dataset::new("x", 4, 2, vec![r, dup]));
        assert!(!report.is_clean());
        let text = report.violations.join("\n");
        assert!(text.contains("cis-pair mismatch"));
        assert!(text.contains("duplicate pair_id"));
        assert!(text.contains("invalid nucleotide 'B'"));
        assert!(text.contains("promoter length 3"));
        assert!(text.contains("label 3"));
    }
}
