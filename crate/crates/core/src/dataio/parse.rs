use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use super::record::{Chromosome, Dataset, EPRecord};
use super::{DataError, Result, RowError, MAX_CONTENT_ERRORS};

/// Maps logical fields onto header names of a delimited table.
///
/// Required: chromosome, enhancer and promoter sequence, label. Every other
/// column is used only when the header contains it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub pair_id: String,
    pub cell_line: String,
    pub chromosome: String,
    pub promoter_chromosome: String,
    pub enhancer_seq: String,
    pub promoter_seq: String,
    pub label: String,
    pub enhancer_start: String,
    pub enhancer_end: String,
    pub promoter_start: String,
    pub promoter_end: String,
    pub clone_of: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            pair_id: "pair_id".into(),
            cell_line: "cell_line".into(),
            chromosome: "chromosome".into(),
            promoter_chromosome: "promoter_chromosome".into(),
            enhancer_seq: "enhancer_seq".into(),
            promoter_seq: "promoter_seq".into(),
            label: "label".into(),
            enhancer_start: "enhancer_start".into(),
            enhancer_end: "enhancer_end".into(),
            promoter_start: "promoter_start".into(),
            promoter_end: "promoter_end".into(),
            clone_of: "clone_of".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `field=header` overrides, comma separated, e.g.
    /// `chromosome=enhancer_chrom,label=interaction`.
    pub fn with_overrides(mut self, overrides: &str) -> std::result::Result<Self, String> {
        for item in overrides.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (field, header) =
                item.split_once('=').ok_or_else(|| format!("column override '{item}' is not field=header"))?;
            let slot = match field.trim() {
                "pair_id" => &mut self.pair_id,
                "cell_line" => &mut self.cell_line,
                "chromosome" => &mut self.chromosome,
                "promoter_chromosome" => &mut self.promoter_chromosome,
                "enhancer_seq" => &mut self.enhancer_seq,
                "promoter_seq" => &mut self.promoter_seq,
                "label" => &mut self.label,
                "enhancer_start" => &mut self.enhancer_start,
                "enhancer_end" => &mut self.enhancer_end,
                "promoter_start" => &mut self.promoter_start,
                "promoter_end" => &mut self.promoter_end,
                "clone_of" => &mut self.clone_of,
                other => return Err(format!("unknown column field '{other}'")),
            };
            *slot = header.trim().to_string();
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    /// Used for the dataset and for rows without a cell-line column.
    pub cell_line: String,
    /// Declared enhancer length; `None` takes it from the first row.
    pub enhancer_len: Option<usize>,
    pub promoter_len: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { cell_line: "unknown".into(), enhancer_len: Some(3000), promoter_len: Some(2000) }
    }
}

impl ParseOptions {
    pub fn inferred(cell_line: impl Into<String>) -> Self {
        Self { cell_line: cell_line.into(), enhancer_len: None, promoter_len: None }
    }
}

struct Columns {
    pair_id: Option<usize>,
    cell_line: Option<usize>,
    chromosome: usize,
    promoter_chromosome: Option<usize>,
    enhancer_seq: usize,
    promoter_seq: usize,
    label: usize,
    enhancer_span: Option<(usize, usize)>,
    promoter_span: Option<(usize, usize)>,
    clone_of: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self> {
        let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let optional = |name: &str| index.get(name).copied();
        let required = |name: &str| {
            optional(name)
                .ok_or_else(|| DataError::Structural { row: 0, message: format!("header has no column '{name}'") })
        };
        let span = |a: &str, b: &str| optional(a).zip(optional(b));
        Ok(Self {
            pair_id: optional(&map.pair_id),
            cell_line: optional(&map.cell_line),
            chromosome: required(&map.chromosome)?,
            promoter_chromosome: optional(&map.promoter_chromosome),
            enhancer_seq: required(&map.enhancer_seq)?,
            promoter_seq: required(&map.promoter_seq)?,
            label: required(&map.label)?,
            enhancer_span: span(&map.enhancer_start, &map.enhancer_end),
            promoter_span: span(&map.promoter_start, &map.promoter_end),
            clone_of: optional(&map.clone_of),
        })
    }
}

fn detect_delimiter(bytes: &[u8]) -> u8 {
    let first_line = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    if first_line.contains(&b'\t') {
        b'\t'
    } else {
        b','
    }
}

/// Uppercases a sequence and checks the alphabet. Returns the offending
/// character and its position on failure.
fn normalize_sequence(raw: &str) -> std::result::Result<String, (char, usize)> {
    let seq = raw.trim().to_ascii_uppercase();
    match seq.char_indices().find(|(_, c)| !matches!(c, 'A' | 'C' | 'G' | 'T' | 'N')) {
        Some((pos, c)) => Err((c, pos)),
        None => Ok(seq),
    }
}

fn parse_span(
    record: &csv::StringRecord,
    cols: Option<(usize, usize)>,
) -> std::result::Result<Option<(u64, u64)>, String> {
    let Some((a, b)) = cols else { return Ok(None) };
    let (start, end) = (record[a].trim(), record[b].trim());
    if start.is_empty() && end.is_empty() {
        return Ok(None);
    }
    let start: u64 = start.parse().map_err(|_| format!("bad coordinate '{start}'"))?;
    let end: u64 = end.parse().map_err(|_| format!("bad coordinate '{end}'"))?;
    if end < start {
        return Err(format!("coordinate end {end} before start {start}"));
    }
    Ok(Some((start, end)))
}

/// Reads a TSV or CSV table (header row, LF or CRLF) into a validated dataset.
///
/// Structural problems (column count, unreadable text, missing required
/// columns) abort immediately. Content problems are collected, up to
/// [`MAX_CONTENT_ERRORS`], and returned together.
pub fn parse_dataset<R: Read>(mut source: R, columns: &ColumnMap, opts: &ParseOptions) -> Result<Dataset> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(&bytes))
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes.as_slice());

    let headers =
        reader.headers().map_err(|e| DataError::Structural { row: 0, message: format!("unreadable header: {e}") })?;
    let cols = Columns::resolve(headers, columns)?;

    let mut enhancer_len = opts.enhancer_len;
    let mut promoter_len = opts.promoter_len;
    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut errors: Vec<RowError> = Vec::new();

    for (index, row) in reader.records().enumerate() {
        let row_number = index + 1;
        let record = row.map_err(|e| DataError::Structural {
            row: row_number,
            message: match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("malformed row: expected {expected_len} columns, found {len}")
                }
                _ => format!("malformed row: {e}"),
            },
        })?;

        let mut push = |message: String| errors.push(RowError { row: row_number, message });

        let chromosome = match record[cols.chromosome].parse::<Chromosome>() {
            Ok(c) => Some(c),
            Err(e) => {
                push(e);
                None
            }
        };
        let promoter_chromosome = match cols.promoter_chromosome.map(|i| record[i].trim()).filter(|s| !s.is_empty()) {
            Some(label) => match label.parse::<Chromosome>() {
                Ok(c) => Some(c),
                Err(e) => {
                    push(e);
                    None
                }
            },
            None => chromosome,
        };
        if let (Some(e), Some(p)) = (chromosome, promoter_chromosome) {
            if e != p {
                push(format!("cis-pair mismatch: enhancer on {e}, promoter on {p}"));
            }
        }

        let mut sequence = |col: usize, what: &str, declared: &mut Option<usize>| -> Option<String> {
            match normalize_sequence(&record[col]) {
                Ok(seq) => {
                    let expected = *declared.get_or_insert(seq.len());
                    if seq.len() != expected {
                        push(format!("{what} length {} differs from declared {expected}", seq.len()));
                        None
                    } else {
                        Some(seq)
                    }
                }
                Err((c, pos)) => {
                    push(format!("invalid nucleotide '{c}' in {what} position {pos}"));
                    None
                }
            }
        };
        let enhancer_seq = sequence(cols.enhancer_seq, "enhancer", &mut enhancer_len);
        let promoter_seq = sequence(cols.promoter_seq, "promoter", &mut promoter_len);

        let label = match record[cols.label].trim() {
            "0" => Some(0u8),
            "1" => Some(1u8),
            other => {
                push(format!("label '{other}' is not 0 or 1"));
                None
            }
        };

        let cell_line =
            cols.cell_line.map(|i| record[i].trim()).filter(|s| !s.is_empty()).unwrap_or(&opts.cell_line).to_string();
        let pair_id = cols
            .pair_id
            .map(|i| record[i].trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("{}:{}", opts.cell_line, index));
        if !seen_ids.insert(pair_id.clone()) {
            push(format!("duplicate pair_id '{pair_id}'"));
        }

        let enhancer_span = parse_span(&record, cols.enhancer_span).unwrap_or_else(|e| {
            push(e);
            None
        });
        let promoter_span = parse_span(&record, cols.promoter_span).unwrap_or_else(|e| {
            push(e);
            None
        });
        let clone_of = cols.clone_of.map(|i| record[i].trim().to_string()).filter(|s| !s.is_empty());

        if errors.len() >= MAX_CONTENT_ERRORS {
            errors.truncate(MAX_CONTENT_ERRORS);
            break;
        }
        if let (Some(chromosome), Some(promoter_chromosome), Some(enhancer_seq), Some(promoter_seq), Some(label)) =
            (chromosome, promoter_chromosome, enhancer_seq, promoter_seq, label)
        {
            records.push(EPRecord {
                pair_id,
                cell_line,
                chromosome,
                promoter_chromosome,
                enhancer_seq,
                promoter_seq,
                label,
                enhancer_span,
                promoter_span,
                clone_of,
            });
        }
    }

    if !errors.is_empty() {
        return Err(DataError::Content(errors));
    }
    Ok(Dataset::new(opts.cell_line.clone(), enhancer_len.unwrap_or(0), promoter_len.unwrap_or(0), records))
}

/// Writes the dataset as TSV with the default [`ColumnMap`] headers.
/// Coordinate columns appear only when some record carries them.
pub fn write_dataset<W: Write>(d: &Dataset, sink: W) -> Result<()> {
    let with_spans = d.records.iter().any(|r| r.enhancer_span.is_some() || r.promoter_span.is_some());
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(sink);
    let mut header = vec![
        "pair_id",
        "cell_line",
        "chromosome",
        "promoter_chromosome",
        "enhancer_seq",
        "promoter_seq",
        "label",
        "clone_of",
    ];
    if with_spans {
        header.extend(["enhancer_start", "enhancer_end", "promoter_start", "promoter_end"]);
    }
    let to_io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    writer.write_record(&header).map_err(to_io)?;
    for r in &d.records {
        let mut row = vec![
            r.pair_id.clone(),
            r.cell_line.clone(),
            r.chromosome.to_string(),
            r.promoter_chromosome.to_string(),
            r.enhancer_seq.clone(),
            r.promoter_seq.clone(),
            r.label.to_string(),
            r.clone_of.clone().unwrap_or_default(),
        ];
        if with_spans {
            for span in [r.enhancer_span, r.promoter_span] {
                match span {
                    Some((s, e)) => row.extend([s.to_string(), e.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
        }
        writer.write_record(&row).map_err(to_io)?;
    }
    writer.flush()?;
    Ok(())
}
