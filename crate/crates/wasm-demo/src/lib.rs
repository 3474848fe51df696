//! Browser demo: k-mer spectra, ROC curves with DeLong's test, and how a
//! random split leaks near-duplicate pairs that a LOCO split keeps apart.
//!
//! Each operation is a plain function returning JSON or an error message,
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use epiloco::dataio::{generate_synthetic, MotifMode, SyntheticConfig};
use epiloco::evalstats::{delong_test, roc_curve, PredictionSet};
use epiloco::features::{kmer_string, kmer_vector, MAX_K};
use epiloco::splits::{loco_folds, random_split, straddling_duplicates};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest synthetic dataset the leakage demo will build.
pub const MAX_DEMO_PAIRS: usize = 2000;

/// Most frequent k-mers of `seq`, ties broken alphabetically.
pub fn kmer_profile_json(seq: &str, k: usize, top: usize) -> Result<String, String> {
    if !(1..=MAX_K.min(8)).contains(&k) {
        return Err(format!("k must be between 1 and 8, got {k}"));
    }
    let seq: String = seq.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
    let v = kmer_vector(&seq, k).map_err(|e| e.to_string())?;
    let windows = seq.len().saturating_sub(k - 1);
    let valid = (0..windows).filter(|&i| !seq[i..i + k].contains('N')).count();
    let mut ranked: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|&(_, f)| f > 0.0).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let items: Vec<_> =
        ranked.iter().take(top).map(|&(i, f)| json!({ "kmer": kmer_string(i, k), "freq": f })).collect();
    Ok(json!({
        "k": k,
        "length": seq.len(),
        "valid_windows": valid,
        "distinct": ranked.len(),
        "top": items,
    })
    .to_string())
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{what}: '{s}' is not a number")))
        .collect()
}

fn prediction_set(labels: &[f64], scores: &[f64], tag: &str) -> Result<PredictionSet, String> {
    if labels.len() != scores.len() {
        return Err(format!("{} labels but {} scores for {tag}", labels.len(), scores.len()));
    }
    let mut p = PredictionSet::new("demo", tag);
    for (i, (&l, &s)) in labels.iter().zip(scores).enumerate() {
        let label = match l {
            0.0 => 0,
            1.0 => 1,
            other => return Err(format!("label {other} is not 0 or 1")),
        };
        p.push(format!("p{i}"), label, s);
    }
    p.check()?;
    Ok(p)
}

/// ROC corners and AUC for scores `a`; with a non-empty `b`, also its curve
/// and the paired DeLong test of `a` against `b`.
pub fn roc_json(labels: &str, scores_a: &str, scores_b: &str) -> Result<String, String> {
    let labels = parse_list(labels, "labels")?;
    let a = prediction_set(&labels, &parse_list(scores_a, "scores a")?, "a")?;
    let roc_a = roc_curve(&a).map_err(|e| e.to_string())?;
    let mut out = json!({ "auc_a": roc_a.auc, "points_a": roc_a.points });
    let b_scores = parse_list(scores_b, "scores b")?;
    if !b_scores.is_empty() {
        let b = prediction_set(&labels, &b_scores, "b")?;
        let roc_b = roc_curve(&b).map_err(|e| e.to_string())?;
        let d = delong_test(&a, &b).map_err(|e| e.to_string())?;
        out["auc_b"] = json!(roc_b.auc);
        out["points_b"] = json!(roc_b.points);
        out["delta_auc"] = json!(d.delta_auc);
        out["z"] = json!(d.z);
        out["p_value"] = json!(d.p_value);
    }
    Ok(out.to_string())
}

/// Builds a 4-chromosome synthetic dataset with near-duplicate clones and
/// counts clone/source pairs that land on opposite sides of a random 10%
/// holdout versus each LOCO fold.
pub fn leakage_json(seed: u64, duplicate_fraction: f64, pairs_per_chromosome: usize) -> Result<String, String> {
    if pairs_per_chromosome * 4 > MAX_DEMO_PAIRS {
        return Err(format!("at most {} pairs per chromosome", MAX_DEMO_PAIRS / 4));
    }
    let cfg = SyntheticConfig {
        n_chromosomes: 4,
        pairs_per_chromosome,
        near_duplicate_fraction: duplicate_fraction,
        motif_mode: MotifMode::ChromosomeLocal,
        enhancer_len: 60,
        promoter_len: 40,
        seed,
        ..SyntheticConfig::default()
    };
    let d = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
    let clones = d.records.iter().filter(|r| r.clone_of.is_some()).count();
    let rand = random_split(&d, 0.1, true, seed).map_err(|e| e.to_string())?;
    let loco: Vec<_> = loco_folds(&d)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|m| json!({ "fold_id": m.fold_id, "test": m.test_ids.len(), "straddling": straddling_duplicates(&d, m) }))
        .collect();
    Ok(json!({
        "records": d.len(),
        "clones": clones,
        "random": { "fold_id": rand.fold_id, "test": rand.test_ids.len(), "straddling": straddling_duplicates(&d, &rand) },
        "loco": loco,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn kmer_profile(seq: &str, k: usize, top: usize) -> Result<String, JsValue> {
    js(kmer_profile_json(seq, k, top))
}

#[wasm_bindgen]
pub fn roc(labels: &str, scores_a: &str, scores_b: &str) -> Result<String, JsValue> {
    js(roc_json(labels, scores_a, scores_b))
}

#[wasm_bindgen]
pub fn leakage(seed: u64, duplicate_fraction: f64, pairs_per_chromosome: usize) -> Result<String, JsValue> {
    js(leakage_json(seed, duplicate_fraction, pairs_per_chromosome))
}
