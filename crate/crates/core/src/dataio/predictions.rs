use std::io::{Read, Write};

use crate::evalstats::PredictionSet;

use super::{DataError, Result};

const HEADER: [&str; 5] = ["pair_id", "label", "score", "fold_id", "model_tag"];

/// CSV `pair_id,label,score,fold_id,model_tag`; scores carry 17 significant
/// digits so they read back bit-identically.
pub fn write_predictions<W: Write>(p: &PredictionSet, sink: W) -> Result<()> {
    p.check().map_err(|message| DataError::Predictions { line: 0, message })?;
    let to_io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(HEADER).map_err(to_io)?;
    for i in 0..p.len() {
        writer
            .write_record([
                p.pair_ids[i].as_str(),
                if p.labels[i] == 1 { "1" } else { "0" },
                &format!("{:.16e}", p.scores[i]),
                &p.fold_id,
                &p.model_tag,
            ])
            .map_err(to_io)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_predictions<R: Read>(source: R) -> Result<PredictionSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let bad = |line: usize, message: String| DataError::Predictions { line, message };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?;
    if headers.iter().map(str::trim).ne(HEADER) {
        return Err(bad(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut set = PredictionSet::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let label = match row[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(line, format!("label '{other}' outside {{0,1}}"))),
        };
        let score: f64 = row[2].trim().parse().map_err(|_| bad(line, format!("bad score '{}'", &row[2])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(line, format!("score {score} outside [0,1]")));
        }
        if i == 0 {
            set.fold_id = row[3].to_string();
            set.model_tag = row[4].to_string();
        } else if row[3] != set.fold_id || row[4] != set.model_tag {
            return Err(bad(line, "fold_id/model_tag differ from first row".into()));
        }
        set.pair_ids.push(row[0].to_string());
        set.labels.push(label);
        set.scores.push(score);
    }
    Ok(set)
}
