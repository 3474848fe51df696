use std::path::{Path, PathBuf};

use epiloco::cli::{run, Comparison, RunLedger, LEDGER_FILE};
use epiloco::dataio::{
    generate_synthetic, read_manifest, read_predictions, write_dataset, Chromosome, SyntheticConfig,
};
use serde_json::Value;
use tempfile::TempDir;

/// Small desk-profile config over one synthetic dataset.
fn setup(pairs: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("exp.conf");
    std::fs::write(
        &conf,
        format!(
            "profile = desk\nseed = 11\nepochs = 1\nmodel = mcnn\nk = 3\n\
             synth.cell_line = SYN\nsynth.chromosomes = 4\nsynth.pairs = {pairs}\nsynth.motif_copies = 3\n\
             dataset.SYN = data/SYN.tsv\n"
        ),
    )
    .unwrap();
    run(args(&["synth", "--config", conf.to_str().unwrap(), "--out", dir.path().join("data").to_str().unwrap()]))
        .unwrap();
    (dir, conf)
}

fn args(v: &[&str]) -> Vec<String> {
    std::iter::once("epiloco").chain(v.iter().copied()).map(String::from).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn loco_run_is_complete_pure_and_resumable() {
    let (dir, conf) = setup(24);
    let out = dir.path().join("loco");
    let first = run(args(&["loco-run", "--config", s(&conf), "--out", s(&out)])).unwrap();
    assert_eq!(first["trained"], 4);
    let ledger_path = out.join(LEDGER_FILE);
    let ledger = RunLedger::read(&ledger_path).unwrap();
    let folds: Vec<&str> = ledger.rows.iter().map(|r| r.fold_id.as_str()).collect();
    assert_eq!(folds, ["Chr1", "Chr2", "Chr3", "Chr4"]);
    assert!(ledger.rows.iter().all(|r| r.is_ok() && r.seed == 11 ^ (r.fold_id[3..].parse::<u64>().unwrap() - 1)));

    for r in &ledger.rows {
        let m =
            read_manifest(std::fs::File::open(out.join("SYN/folds").join(format!("{}.manifest", r.fold_id))).unwrap())
                .unwrap();
        assert_eq!(m.test_ids.len(), r.n_test);
        let preds = read_predictions(std::fs::File::open(out.join(&r.predictions)).unwrap()).unwrap();
        assert_eq!(preds.len(), r.n_test);
        let chrom: Chromosome = r.fold_id.parse().unwrap();
        assert!(preds.pair_ids.iter().all(|id| id.contains(&format!(":{chrom}:"))));
    }
    assert!(out.join("config.resolved").is_file());

    let before = std::fs::read(&ledger_path).unwrap();
    let again = run(args(&["loco-run", "--config", s(&conf), "--out", s(&out)])).unwrap();
    assert_eq!((again["trained"].as_u64(), again["reused"].as_u64()), (Some(0), Some(4)));
    assert_eq!(std::fs::read(&ledger_path).unwrap(), before);

    // A damaged prediction file is not trusted on resume.
    std::fs::write(out.join(&ledger.rows[2].predictions), "garbage").unwrap();
    let repaired = run(args(&["loco-run", "--config", s(&conf), "--out", s(&out)])).unwrap();
    assert_eq!(repaired["trained"], 1);

    let forced = run(args(&["loco-run", "--config", s(&conf), "--out", s(&out), "--force"])).unwrap();
    assert_eq!(forced["trained"], 4);
    let after = RunLedger::read(&ledger_path).unwrap();
    let aucs = |l: &RunLedger| l.rows.iter().map(|r| r.auc).collect::<Vec<_>>();
    assert_eq!(aucs(&after), aucs(&ledger));
}

#[test]
fn randsplit_kfold_and_holdout_sizes() {
    let (dir, conf) = setup(24);
    let out = dir.path().join("k3");
    let v = run(args(&["randsplit-run", "--config", s(&conf), "--out", s(&out), "--kfold", "3"])).unwrap();
    assert_eq!(v["folds"].as_array().unwrap().len(), 3);
    let ledger = RunLedger::read(&out.join(LEDGER_FILE)).unwrap();
    assert_eq!(ledger.rows.iter().map(|r| r.n_test).sum::<usize>(), 96);

    let out = dir.path().join("half");
    run(args(&[
        "randsplit-run",
        "--config",
        s(&conf),
        "--out",
        s(&out),
        "--test-fraction",
        "0.5",
        "--set",
        "record_cap=10",
    ]))
    .unwrap();
    let ledger = RunLedger::read(&out.join(LEDGER_FILE)).unwrap();
    assert_eq!(ledger.rows.len(), 1);
    assert_eq!(ledger.rows[0].fold_id, "rand-11-0");
    let preds = read_predictions(std::fs::File::open(out.join(&ledger.rows[0].predictions)).unwrap()).unwrap();
    assert_eq!(preds.len(), 5);
}

#[test]
fn compare_and_report() {
    let (dir, conf) = setup(24);
    let out = dir.path().join("both");
    run(args(&["loco-run", "--config", s(&conf), "--out", s(&out), "--model", "mcnn,mhybrid"])).unwrap();
    let ledger = out.join(LEDGER_FILE);
    assert_eq!(RunLedger::read(&ledger).unwrap().rows.len(), 8);

    let cmp = dir.path().join("self");
    let v = run(args(&["compare", s(&ledger), "--a-model", "mcnn", "--b-model", "mcnn", "--out", s(&cmp)])).unwrap();
    assert_eq!(v["folds"], 4);
    assert_eq!(v["significant"], 0);
    let c: Comparison = epiloco::cli::compare(&ledger, Some("mcnn"), &ledger, Some("mcnn")).unwrap();
    assert!(c.rows.iter().all(|r| r.delta_auc == 0.0 && r.p_value == 1.0));
    assert_eq!(c.medians[0].delta, 0.0);

    let c = epiloco::cli::compare(&ledger, Some("mhybrid"), &ledger, Some("mcnn")).unwrap();
    assert_eq!(c.rows.len(), 4);
    let text = c.to_csv();
    assert_eq!(text.lines().count(), 1 + 4 + 1);
    for (line, r) in text.lines().skip(1).zip(&c.rows) {
        assert!(line.ends_with(if r.p_value <= 0.1 { ",true" } else { ",false" }));
    }
    assert!(text.lines().last().unwrap().starts_with("SYN,median,mhybrid,mcnn,"));

    // Unqualified: the ledger holds two models.
    assert!(run(args(&["compare", s(&ledger), "--out", s(&cmp)])).is_err());

    let rep1 = dir.path().join("rep1");
    let rep2 = dir.path().join("rep2");
    run(args(&["report", s(&ledger), "--out", s(&rep1)])).unwrap();
    run(args(&["report", s(&ledger), "--out", s(&rep2)])).unwrap();
    for name in ["auc_table_mcnn.csv", "auc_table_mhybrid.csv", "box_stats.csv", "box_SYN.svg", "manifest.txt"] {
        assert_eq!(std::fs::read(rep1.join(name)).unwrap(), std::fs::read(rep2.join(name)).unwrap(), "{name}");
    }
    let stats = std::fs::read_to_string(rep1.join("box_stats.csv")).unwrap();
    assert!(stats.lines().skip(1).all(|l| l.split(',').nth(2) == Some("4")));
    let table = std::fs::read_to_string(rep1.join("auc_table_mcnn.csv")).unwrap();
    assert_eq!(
        table.lines().map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(),
        ["fold_id", "Chr1", "Chr2", "Chr3", "Chr4"]
    );
}

#[test]
fn compare_rejects_mismatched_folds() {
    let (dir, conf) = setup(24);
    let loco = dir.path().join("loco");
    let rand = dir.path().join("rand");
    run(args(&["loco-run", "--config", s(&conf), "--out", s(&loco)])).unwrap();
    run(args(&["randsplit-run", "--config", s(&conf), "--out", s(&rand)])).unwrap();
    let err = run(args(&["compare", s(&loco.join(LEDGER_FILE)), s(&rand.join(LEDGER_FILE)), "--out", s(dir.path())]))
        .unwrap_err();
    assert!(err.to_string().contains("fold sets differ"), "{err}");
}

#[test]
fn cross_cell_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut conf = String::from("profile = desk\nseed = 5\nepochs = 1\nmodel = mcnn\nk = 2\n");
    for (i, cell) in ["A", "B", "C"].iter().enumerate() {
        let d = generate_synthetic(&SyntheticConfig {
            cell_line: cell.to_string(),
            pairs_per_chromosome: 10,
            seed: i as u64,
            ..SyntheticConfig::default()
        })
        .unwrap();
        write_dataset(&d, std::fs::File::create(dir.path().join(format!("{cell}.tsv"))).unwrap()).unwrap();
        conf.push_str(&format!("dataset.{cell} = {cell}.tsv\n"));
    }
    let path = dir.path().join("cc.conf");
    std::fs::write(&path, &conf).unwrap();
    let out = dir.path().join("out");
    run(args(&["cross-cell", "--config", s(&path), "--out", s(&out)])).unwrap();
    let matrix = std::fs::read_to_string(out.join("cross-cell/matrix_mcnn.csv")).unwrap();
    let rows: Vec<Vec<&str>> = matrix.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["test\\train", "A", "B", "C"]);
    for (i, row) in rows.iter().enumerate().skip(1) {
        for (j, cell) in row.iter().enumerate().skip(1) {
            assert_eq!(*cell == "*", i == j);
        }
    }
    assert_eq!(matrix.matches('*').count(), 3);

    std::fs::write(&path, format!("{conf}dataset.D = A.tsv\n")).unwrap();
    let err = run(args(&["cross-cell", "--config", s(&path), "--out", s(&out)])).unwrap_err();
    assert!(err.to_string().contains("same file"), "{err}");
}

#[test]
fn single_step_commands_chain() {
    let (dir, conf) = setup(12);
    let data = dir.path().join("data/SYN.tsv");
    let splits = dir.path().join("splits");
    let v = run(args(&["split", "--config", s(&conf), "--input", s(&data), "--out", s(&splits), "--split", "loco"]))
        .unwrap();
    assert_eq!(v["folds"].as_array().unwrap().len(), 4);

    let model_dir = dir.path().join("model");
    let manifest = splits.join("Chr2.manifest");
    run(args(&[
        "train",
        "--config",
        s(&conf),
        "--input",
        s(&data),
        "--manifest",
        s(&manifest),
        "--out",
        s(&model_dir),
    ]))
    .unwrap();
    let pred_dir = dir.path().join("pred");
    let v = run(args(&[
        "predict",
        "--input",
        s(&data),
        "--manifest",
        s(&manifest),
        "--weights",
        s(&model_dir.join("model.weights")),
        "--out",
        s(&pred_dir),
    ]))
    .unwrap();
    assert_eq!(v["records"], 12);
    let e = run(args(&["evaluate", s(&pred_dir.join("predictions.csv"))])).unwrap();
    assert_eq!(e["evaluations"][0]["auc"], v["auc"]);
    assert_eq!(e["evaluations"][0]["fold_id"], "Chr2");

    let v = run(args(&["validate", "--input", s(&data)])).unwrap();
    assert_eq!(v["records"], 48);
    let ingested = dir.path().join("ingested");
    run(args(&["ingest", "--input", s(&data), "--cell-line", "SYN", "--out", s(&ingested)])).unwrap();
    assert_eq!(std::fs::read(ingested.join("SYN.tsv")).unwrap(), std::fs::read(&data).unwrap());
}

#[test]
fn failures_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    // Chr3 holds negatives only, so its fold has no AUC.
    let mut d = generate_synthetic(&SyntheticConfig {
        pairs_per_chromosome: 10,
        near_duplicate_fraction: 0.0,
        ..SyntheticConfig::default()
    })
    .unwrap();
    for r in d.records.iter_mut().filter(|r| r.chromosome.number() == 3) {
        r.label = 0;
    }
    let data = dir.path().join("skew.tsv");
    write_dataset(&d, std::fs::File::create(&data).unwrap()).unwrap();
    let out = dir.path().join("out");
    let a = args(&[
        "loco-run",
        "--profile",
        "desk",
        "--set",
        "epochs=1",
        "--model",
        "mcnn",
        "--set",
        &format!("dataset={}", s(&data)),
        "--out",
        s(&out),
    ]);
    let err = run(a.clone()).unwrap_err();
    let json: Value = err.to_json();
    assert_eq!(json["ok"], false);
    let errors = json["errors"].as_array().unwrap();
    assert_eq!(errors.len(), 1);
    assert!(errors[0]["message"].as_str().unwrap().contains("Chr3"));
    let ledger = RunLedger::read(&out.join(LEDGER_FILE)).unwrap();
    assert_eq!(ledger.rows.len(), 4);
    assert_eq!(ledger.rows.iter().filter(|r| !r.is_ok()).count(), 1);
    assert_eq!(epiloco::cli::main_with(a), 1);

    let missing = args(&["loco-run", "--set", "dataset.X=/nonexistent.tsv", "--out", s(&out)]);
    assert!(matches!(run(missing.clone()), Err(epiloco::cli::CliError::Config(m)) if m.contains("not found")));
    assert_eq!(epiloco::cli::main_with(missing), 1);
}
