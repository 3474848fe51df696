use epiloco_wasm::{kmer_profile_json, leakage_json, roc_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn kmer_profile_of_worked_example() {
    let v = parse(kmer_profile_json("gctgcccacc", 5, 10).unwrap());
    assert_eq!(v["valid_windows"], 6);
    assert_eq!(v["distinct"], 6);
    let top = v["top"].as_array().unwrap();
    let kmers: Vec<&str> = top.iter().map(|t| t["kmer"].as_str().unwrap()).collect();
    assert_eq!(kmers, ["CCACC", "CCCAC", "CTGCC", "GCCCA", "GCTGC", "TGCCC"]);
    assert!(top.iter().all(|t| t["freq"].as_f64().unwrap() == 1.0 / 6.0));
}

#[test]
fn kmer_profile_skips_n_windows_and_rejects_bad_input() {
    let v = parse(kmer_profile_json("AAAANAAAA", 2, 1).unwrap());
    assert_eq!(v["valid_windows"], 6);
    assert_eq!(v["top"][0]["kmer"], "AA");
    assert!(kmer_profile_json("ACGU", 2, 3).is_err());
    assert!(kmer_profile_json("ACGT", 0, 3).is_err());
}

#[test]
fn roc_and_delong() {
    let v = parse(roc_json("1 1 0 0", "0.9 0.8 0.2 0.1", "").unwrap());
    assert_eq!(v["auc_a"], 1.0);
    assert_eq!(v["points_a"], serde_json::json!([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]));
    assert!(v.get("p_value").is_none());

    let v = parse(roc_json("1,1,1,0,0,0", "0.9,0.7,0.4,0.5,0.3,0.1", "0.9,0.7,0.4,0.5,0.3,0.1").unwrap());
    assert_eq!(v["p_value"], 1.0);
    assert_eq!(v["delta_auc"], 0.0);

    assert!(roc_json("1 0 2", "0.1 0.2 0.3", "").unwrap_err().contains("label"));
    assert!(roc_json("1 0", "0.1", "").is_err());
    assert!(roc_json("1 1", "0.1 0.2", "").is_err());
}

#[test]
fn leakage_only_in_random_split() {
    let v = parse(leakage_json(3, 0.3, 100).unwrap());
    assert_eq!(v["records"], 400);
    assert_eq!(v["clones"], 120);
    assert!(v["random"]["straddling"].as_u64().unwrap() > 0);
    let loco = v["loco"].as_array().unwrap();
    assert_eq!(loco.len(), 4);
    assert!(loco.iter().all(|f| f["straddling"] == 0));
    assert!(leakage_json(3, 0.3, 10_000).is_err());
}
