//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line into the normal `cargo test` output; any FAIL
//! makes the binary exit nonzero.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use epiloco::cli::{self, RunLedger, LEDGER_FILE};
use epiloco::dataio::{
    parse_dataset, validate_dataset, Chromosome, ColumnMap, Dataset, EPRecord, ParseOptions, SyntheticConfig,
};
use epiloco::evalstats::{auc, delong_test, PredictionSet};
use epiloco::features::{featurize_pair, featurize_records, kmer_vector, FeatureBundle};
use epiloco::nnet::layers::{bce_loss, Mode};
use epiloco::nnet::{
    backward, build_model, forward, load_weights, save_weights, train, Activation, Arch, BnSite, ConvSpec, ModelParams,
    ModelSpec, PoolSpec, TrainConfig,
};
use epiloco::splits::loco_folds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize, n_rate: f64) -> String {
    (0..len).map(|_| if rng.gen::<f64>() < n_rate { 'N' } else { b"ACGT"[rng.gen_range(0..4)] as char }).collect()
}

fn bundles(spec: &ModelSpec, k: usize, n: usize, seed: u64) -> Vec<FeatureBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let r = EPRecord::new(
                format!("p{i}"),
                "acc",
                Chromosome::new(1).unwrap(),
                random_seq(&mut rng, spec.enhancer_len, 0.0),
                random_seq(&mut rng, spec.promoter_len, 0.0),
                (i % 2) as u8,
            );
            featurize_pair(&r, k).unwrap()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let spec = ModelSpec::paper(Arch::MHybrid);
    let params = build_model(&spec, 1).map_err(|e| e.to_string())?;
    let data = bundles(&spec, 5, 1, 1);
    let refs: Vec<&FeatureBundle> = data.iter().collect();
    let t =
        forward::<f64, _>(&params, &refs, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let sizes = [t.e_cnn(0).len(), t.p_cnn(0).len(), t.e_hybrid(0).len(), t.p_hybrid(0).len(), t.joint(0).len()];
    ensure(sizes == [1152, 768, 2176, 1792, 3968], || format!("sizes {sizes:?}"))?;
    let p = t.output(0);
    ensure(p > 0.0 && p < 1.0 && t.probs.len() == 1, || format!("output {p}"))?;
    Ok(format!("sizes {sizes:?}, p = {p:.4}"))
}

/// Mean binary cross-entropy and its gradient per logit, from the public loss kernel.
fn loss_and_dlogits(probs: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let b = probs.len() as f64;
    let terms: Vec<(f64, f64)> = probs.iter().zip(labels).map(|(&p, &y)| bce_loss(p, y, 1.0)).collect();
    (terms.iter().map(|t| t.0).sum::<f64>() / b, terms.iter().map(|t| t.1 / b).collect())
}

fn criterion_2() -> Outcome {
    let mut worst_all = 0.0f64;
    let mut checked = 0;
    for arch in [Arch::MCnn, Arch::MHybrid] {
        let spec = ModelSpec {
            arch,
            enhancer_len: 60,
            promoter_len: 40,
            conv1: ConvSpec { filters: 4, kernel: 5, stride: 2 },
            conv2: ConvSpec { filters: 6, kernel: 7, stride: 2 },
            pool: PoolSpec { size: 8, stride: 4 },
            dropout_rate: 0.5,
            kmer_dim: 16,
            activation: Activation::Relu,
        };
        let mut params = build_model(&spec, 41).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for site in BnSite::ALL {
            let l = params.bn_layout(site).clone();
            for i in l.gamma.start..l.beta.end {
                params.values[i] += rng.gen_range(-0.3..0.3);
            }
        }
        let data = bundles(&spec, 2, 4, 43);
        let refs: Vec<&FeatureBundle> = data.iter().collect();
        let labels = [1u8, 0, 1, 0];
        let loss = |p: &ModelParams| {
            let t = forward::<f64, _>(p, &refs, Mode::Train, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
            loss_and_dlogits(&t.probs, &labels).0
        };
        let t = forward::<f64, _>(&params, &refs, Mode::Train, &mut ChaCha8Rng::seed_from_u64(7))
            .map_err(|e| e.to_string())?;
        let (_, dl) = loss_and_dlogits(&t.probs, &labels);
        let g = backward(&params, &t, &refs, &dl).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..params.values.len() {
            let orig = params.values[i];
            params.values[i] = orig + h;
            let up = loss(&params);
            params.values[i] = orig - h;
            let down = loss(&params);
            params.values[i] = orig;
            let fd = (up - down) / (2.0 * h);
            // Floor keeps numerically-zero gradients from dividing FD rounding noise by ~0.
            let rel = (fd - g.values[i]).abs() / fd.abs().max(g.values[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        checked += params.values.len();
        ensure(worst < 1e-4, || format!("{arch}: max relative error {worst:e}"))?;
        worst_all = worst_all.max(worst);
    }
    Ok(format!("{checked} parameters, max relative error {worst_all:.2e}"))
}

fn kmer_oracle(seq: &str, k: usize) -> HashMap<String, f64> {
    let mut counts: HashMap<String, f64> = HashMap::new();
    let mut valid = 0.0;
    for i in 0..(seq.len() + 1).saturating_sub(k) {
        let w = &seq[i..i + k];
        if !w.contains('N') {
            *counts.entry(w.to_string()).or_default() += 1.0;
            valid += 1.0;
        }
    }
    counts.values_mut().for_each(|c| *c /= valid);
    counts
}

fn oracle_index(kmer: &str) -> usize {
    kmer.chars().fold(0, |acc, c| acc * 4 + "ACGT".find(c).unwrap())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let len = rng.gen_range(10..=3000);
        let n_rate = if case % 2 == 0 { 0.0 } else { rng.gen_range(0.0..0.2) };
        let seq = random_seq(&mut rng, len, n_rate);
        let k = [5, 1, 2, 3, 4, 6][case % 6];
        let v = kmer_vector(&seq, k).map_err(|e| e.to_string())?;
        let oracle = kmer_oracle(&seq, k);
        let mut expected = vec![0.0; 1 << (2 * k)];
        for (kmer, f) in &oracle {
            expected[oracle_index(kmer)] = *f;
        }
        for (a, b) in v.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
        let sum: f64 = v.iter().sum();
        if !oracle.is_empty() {
            ensure((sum - 1.0).abs() < 1e-12, || format!("case {case}: sum {sum}"))?;
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;

    let v = kmer_vector("GCTGCCCACC", 5).map_err(|e| e.to_string())?;
    let listed = ["GCTGC", "CTGCC", "TGCCC", "GCCCA", "CCCAC", "CCACC"];
    let nonzero: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    let mut want: Vec<usize> = listed.iter().map(|k| oracle_index(k)).collect();
    want.sort_unstable();
    ensure(nonzero == want, || format!("worked example nonzero {nonzero:?}"))?;
    ensure(want.iter().all(|&i| v[i] == 1.0 / 6.0), || "worked example frequencies".into())?;
    Ok(format!("1000 sequences, max deviation {worst:.1e}; worked example gives six 5-mers at 1/6"))
}

fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// Direct O(m n) structural components: (auc, V10, V01).
fn components(p: &PredictionSet) -> (f64, Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = (0..p.len()).filter(|&i| p.labels[i] == 1).map(|i| p.scores[i]).collect();
    let neg: Vec<f64> = (0..p.len()).filter(|&i| p.labels[i] == 0).map(|i| p.scores[i]).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let v10: Vec<f64> = pos.iter().map(|&x| neg.iter().map(|&y| psi(x, y)).sum::<f64>() / n).collect();
    let v01: Vec<f64> = neg.iter().map(|&y| pos.iter().map(|&x| psi(x, y)).sum::<f64>() / m).collect();
    (v10.iter().sum::<f64>() / m, v10, v01)
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_auc, mut worst_var) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let n = rng.gen_range(4..=200);
        let mut a = PredictionSet::new("f", "a");
        let mut b = PredictionSet::new("f", "b");
        let coarse = case % 3 == 0;
        for i in 0..n {
            let label = if i < 2 {
                1
            } else if i < 4 {
                0
            } else {
                rng.gen_range(0..2)
            };
            let mut draw = |shift: f64| {
                let s: f64 = (rng.gen::<f64>() + shift * label as f64).min(1.0);
                if coarse {
                    (s * 10.0).round() / 10.0
                } else {
                    s
                }
            };
            let (sa, sb) = (draw(0.3), draw(0.1));
            a.push(format!("x{i}"), label, sa);
            b.push(format!("x{i}"), label, sb);
        }
        let (auc_a, v10a, v01a) = components(&a);
        let (auc_b, v10b, v01b) = components(&b);
        let (m, nn) = (v10a.len() as f64, v01a.len() as f64);
        worst_auc = worst_auc.max((auc(&a).map_err(|e| e.to_string())? - auc_a).abs());
        worst_auc = worst_auc.max((auc(&b).map_err(|e| e.to_string())? - auc_b).abs());
        let d = delong_test(&a, &b).map_err(|e| e.to_string())?;
        let var_a = cov(&v10a, &v10a) / m + cov(&v01a, &v01a) / nn;
        let var_b = cov(&v10b, &v10b) / m + cov(&v01b, &v01b) / nn;
        let covariance = cov(&v10a, &v10b) / m + cov(&v01a, &v01b) / nn;
        for (x, y) in [(d.var_a, var_a), (d.var_b, var_b), (d.covariance, covariance)] {
            worst_var = worst_var.max((x - y).abs());
        }
        let same = delong_test(&a, &a).map_err(|e| e.to_string())?;
        ensure(same.p_value == 1.0, || format!("case {case}: identical inputs give p {}", same.p_value))?;
    }
    ensure(worst_auc <= 1e-12, || format!("AUC deviation {worst_auc:e}"))?;
    ensure(worst_var <= 1e-10, || format!("variance deviation {worst_var:e}"))?;
    Ok(format!("200 paired sets; AUC deviation {worst_auc:.1e}, (co)variance deviation {worst_var:.1e}; identical inputs p = 1"))
}

fn criterion_5() -> Outcome {
    for seed in 0..5u64 {
        let cfg = SyntheticConfig {
            n_chromosomes: 2 + seed as usize * 5,
            pairs_per_chromosome: 20,
            seed,
            ..SyntheticConfig::default()
        };
        let d = epiloco::dataio::generate_synthetic(&cfg).map_err(|e| e.to_string())?;
        check_loco(&d)?;
    }
    let skipped = match std::env::var_os("EPILOCO_GM12878") {
        None => true,
        Some(path) => {
            let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", Path::new(&path).display()))?;
            let d = parse_dataset(
                file,
                &ColumnMap::default(),
                &ParseOptions { cell_line: "GM12878".into(), ..ParseOptions::default() },
            )
            .map_err(|e| e.to_string())?;
            check_loco(&d)?;
            let folds = loco_folds(&d).map_err(|e| e.to_string())?;
            let chr1 = folds.iter().find(|f| f.fold_id == "Chr1").ok_or("no Chr1 fold")?;
            let got = (chr1.train_ids.len(), chr1.test_ids.len());
            ensure(got == (39539, 4774), || format!("GM12878 Chr1 fold is {got:?}"))?;
            false
        }
    };
    Ok(if skipped {
        "invariants hold on 5 synthetic datasets; GM12878 count check SKIPPED (EPILOCO_GM12878 not set)".into()
    } else {
        "invariants hold; GM12878 Chr1 fold has 39539 train / 4774 test pairs".into()
    })
}

fn check_loco(d: &Dataset) -> Result<(), String> {
    let folds = loco_folds(d).map_err(|e| e.to_string())?;
    let chrom: HashMap<&str, Chromosome> = d.records.iter().map(|r| (r.pair_id.as_str(), r.chromosome)).collect();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for f in &folds {
        for id in &f.test_ids {
            *seen.entry(id.as_str()).or_default() += 1;
            ensure(chrom[id.as_str()].to_string() == f.fold_id, || format!("{id} impure in {}", f.fold_id))?;
        }
        ensure(f.train_ids.len() + f.test_ids.len() == d.len(), || {
            format!("{} does not cover the dataset", f.fold_id)
        })?;
        ensure(f.train_ids.iter().all(|id| chrom[id.as_str()].to_string() != f.fold_id), || {
            "train side holds the left-out chromosome".into()
        })?;
    }
    ensure(seen.len() == d.len() && seen.values().all(|&c| c == 1), || "test sides overlap or miss records".into())
}

fn cli(args: &[&str]) -> Result<serde_json::Value, String> {
    cli::run(std::iter::once("epiloco").chain(args.iter().copied())).map_err(|e| e.to_string())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ledger_aucs(dir: &Path) -> Result<Vec<(String, String, f64)>, String> {
    let l = RunLedger::read(&dir.join(LEDGER_FILE)).map_err(|e| e.to_string())?;
    l.rows
        .iter()
        .map(|r| r.auc.map(|a| (r.model_tag.clone(), r.fold_id.clone(), a)).ok_or(format!("{} failed", r.fold_id)))
        .collect()
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = dir.path().join("leak.conf");
    std::fs::write(
        &conf,
        "profile = desk\nseed = 7\nmodel = mcnn\n\
         synth.cell_line = LEAK\nsynth.chromosomes = 4\nsynth.pairs = 500\nsynth.mode = local\n\
         synth.duplicates = 0.3\nsynth.motif_length = 10\nsynth.motif_copies = 5\n\
         dataset.LEAK = LEAK.tsv\n",
    )
    .map_err(|e| e.to_string())?;
    cli(&["synth", "--config", path(&conf), "--out", path(dir.path())])?;
    let rand_dir = dir.path().join("rand");
    let loco_dir = dir.path().join("loco");
    cli(&["randsplit-run", "--config", path(&conf), "--out", path(&rand_dir)])?;
    cli(&["loco-run", "--config", path(&conf), "--out", path(&loco_dir)])?;
    let rand = ledger_aucs(&rand_dir)?[0].2;
    let loco: Vec<f64> = ledger_aucs(&loco_dir)?.iter().map(|r| r.2).collect();
    let mean = loco.iter().sum::<f64>() / loco.len() as f64;
    let detail = format!(
        "RandSplit AUC {rand:.3}, LOCO AUCs [{}] mean {mean:.3}",
        loco.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(", ")
    );
    ensure(rand >= 0.85 && mean <= 0.60 && loco.len() == 4, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = dir.path().join("comp.conf");
    std::fs::write(
        &conf,
        "profile = desk\nseed = 3\nmodel = mcnn,mhybrid\n\
         synth.cell_line = COMP\nsynth.mode = global\nsynth.motif_length = 0\n\
         synth.composition_bias = 0.2\nsynth.duplicates = 0\n\
         dataset.COMP = COMP.tsv\n",
    )
    .map_err(|e| e.to_string())?;
    cli(&["synth", "--config", path(&conf), "--out", path(dir.path())])?;
    let out = dir.path().join("loco");
    cli(&["loco-run", "--config", path(&conf), "--out", path(&out)])?;
    let ledger = out.join(LEDGER_FILE);
    let c = cli::compare(&ledger, Some("mhybrid"), &ledger, Some("mcnn")).map_err(|e| e.to_string())?;
    let m = &c.medians[0];
    let detail = format!(
        "median LOCO AUC mhybrid {:.3} vs mcnn {:.3} (difference {:+.3}) over {} folds",
        m.auc_a,
        m.auc_b,
        m.delta,
        c.rows.len()
    );
    ensure(m.delta >= 0.05 && c.rows.len() == 4, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = dir.path().join("det.conf");
    std::fs::write(
        &conf,
        "profile = desk\nseed = 19\nepochs = 2\nmodel = mcnn,mhybrid\nprecision = check-64\n\
         synth.cell_line = DET\nsynth.pairs = 40\ndataset.DET = DET.tsv\n",
    )
    .map_err(|e| e.to_string())?;
    cli(&["synth", "--config", path(&conf), "--out", path(dir.path())])?;
    let runs = [dir.path().join("run1"), dir.path().join("run2")];
    for r in &runs {
        cli(&["loco-run", "--config", path(&conf), "--out", path(r)])?;
        cli(&["report", path(&r.join(LEDGER_FILE)), "--out", path(&r.join("report"))])?;
    }
    let ledger = RunLedger::read(&runs[0].join(LEDGER_FILE)).map_err(|e| e.to_string())?;
    let mut files: Vec<String> = ledger.rows.iter().flat_map(|r| [r.weights.clone(), r.predictions.clone()]).collect();
    for name in ["auc_table_mcnn.csv", "auc_table_mhybrid.csv", "box_stats.csv"] {
        files.push(format!("report/{name}"));
    }
    for f in &files {
        let a = std::fs::read(runs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(runs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    let bytes = std::fs::read(runs[0].join(&ledger.rows[0].weights)).map_err(|e| e.to_string())?;
    let model = load_weights(bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    save_weights(&model, &mut again).map_err(|e| e.to_string())?;
    ensure(again == bytes, || "weight save/load is not bit-identical".into())?;
    Ok(format!("{} files bit-identical across two runs; weights round-trip", files.len()))
}

fn criterion_9() -> Outcome {
    let (l, _) = bce_loss(0.5f64, 1, 1.0);
    ensure((l - std::f64::consts::LN_2).abs() <= 1e-12, || format!("bce(0.5, 1) = {l}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let records: Vec<EPRecord> = (0..20)
        .map(|i| {
            let mut enh = random_seq(&mut rng, 60, 0.0);
            let label = (i % 2) as u8;
            if label == 1 {
                enh.replace_range(25..35, "GGGGGGGGGG");
            }
            EPRecord::new(
                format!("t{i}"),
                "toy",
                Chromosome::new(1).unwrap(),
                enh,
                random_seq(&mut rng, 40, 0.0),
                label,
            )
        })
        .collect();
    let d = Dataset::new("toy", 60, 40, records);
    ensure(validate_dataset(&d).is_clean(), || "toy dataset invalid".into())?;
    let spec = ModelSpec {
        arch: Arch::MCnn,
        enhancer_len: 60,
        promoter_len: 40,
        conv1: ConvSpec { filters: 8, kernel: 5, stride: 2 },
        conv2: ConvSpec { filters: 8, kernel: 7, stride: 2 },
        pool: PoolSpec { size: 8, stride: 4 },
        dropout_rate: 0.0,
        kmer_dim: 16,
        activation: Activation::Relu,
    };
    let feats = featurize_records(&d.records, 2).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 30, batch_size: 10, learning_rate: 0.01, seed: 5, ..TrainConfig::default() };
    let out = train(build_model(&spec, 1).map_err(|e| e.to_string())?, &d, &feats, &cfg).map_err(|e| e.to_string())?;
    let first_below = out.history.iter().find(|e| e.mean_loss < 0.1).map(|e| e.epoch);
    let last = out.history.last().map_or(f64::NAN, |e| e.mean_loss);
    ensure(first_below.is_some(), || format!("loss after 30 epochs {last:.4}"))?;
    Ok(format!("bce(0.5, 1) = ln 2; toy loss below 0.1 at epoch {}, final {last:.4}", first_below.unwrap()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("architecture shapes", Duration::from_secs(1), criterion_1),
        ("gradient check", Duration::from_secs(60), criterion_2),
        ("k-mer oracle", Duration::from_secs(30), criterion_3),
        ("AUC/DeLong oracles", Duration::from_secs(60), criterion_4),
        ("LOCO invariants", Duration::from_secs(60), criterion_5),
        ("leakage demonstration", Duration::from_secs(600), criterion_6),
        ("hybrid advantage", Duration::from_secs(900), criterion_7),
        ("determinism and persistence", Duration::from_secs(300), criterion_8),
        ("loss sanity", Duration::from_secs(60), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let result = match result {
            Ok(d) if took > *budget => Err(format!("{d}; took {took:.1?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}) [{took:.1?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{took:.1?}]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
