//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use adcrnn::config::{Preset, RunConfig};
use adcrnn::manifest::load_manifest;
use adcrnn::report::{self, PredictionRow};
use adcrnn::runner::run_cv;
use adcrnn::synth::{write_corpus, SynthSpec};
use adcrnn_core::data::FeatureMatrix;
use adcrnn_core::diagnostics::{gradient_suite, GRAD_TOL};
use adcrnn_core::eval::{classification_metrics, ensemble};
use adcrnn_core::model::{blank_utterance, CrnnModel, ModelConfig};
use adcrnn_core::rng::substream;
use adcrnn_core::select::{anova_f, select_features};
use adcrnn_core::train::{kfold_split, sample_window};
use adcrnn_core::autodiff::Tape;
use adcrnn_core::data::Speaker;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let start = Instant::now();
    let r = f();
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match r {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("{} {name}: {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    pass
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn gradients() -> Result<Outcome, String> {
    let t = Instant::now();
    let cases = gradient_suite(11, 120, 200).map_err(|e| e.to_string())?;
    let worst = cases
        .iter()
        .max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err))
        .unwrap();
    let min_checked = cases.iter().map(|c| c.report.checked).min().unwrap();
    let bad: Vec<&str> = cases
        .iter()
        .filter(|c| !c.report.passes(GRAD_TOL) || c.report.checked < 100)
        .map(|c| c.name)
        .collect();
    let fast = within(t, Duration::from_secs(60));
    Ok(Outcome {
        pass: bad.is_empty() && fast,
        detail: format!(
            "{} cases, min coordinates {min_checked}, worst rel err {:.2e} ({}), failing {bad:?}",
            cases.len(),
            worst.report.max_rel_err,
            worst.name
        ),
    })
}

fn architecture() -> Result<Outcome, String> {
    let cfg = ModelConfig::full(128, 1024, 23);
    let trace = cfg.shape_trace().map_err(|e| e.to_string())?;
    let model = CrnnModel::new(cfg.clone(), &mut substream(0, "init", 0)).map_err(|e| e.to_string())?;
    let mut tape = Tape::new();
    let mut rng = substream(0, "dropout", 0);
    let utts = [blank_utterance(&cfg, Speaker::Investigator), blank_utterance(&cfg, Speaker::Participant)];
    let out = model
        .forward(&mut tape, &utts, &[0.5; 23], false, &mut rng)
        .map_err(|e| e.to_string())?;
    let logits = tape.shape(out.logits).to_vec();
    let ok = trace.length_trace == [1024, 256, 64, 16]
        && trace.channel_trace == [3, 32, 128, 512, 1024]
        && trace.trunk == [1047, 261, 65]
        && trace.cnn_out == 1024
        && trace.lstm_out == 1024
        && logits == [1, 2];
    Ok(Outcome {
        pass: ok,
        detail: format!(
            "lengths {:?}, channels {:?}, trunk {:?}, logits {logits:?}",
            trace.length_trace, trace.channel_trace, trace.trunk
        ),
    })
}

fn f_stat(values: &[f64], groups: &[usize], k: usize) -> f64 {
    let n = values.len() as f64;
    let grand = values.iter().sum::<f64>() / n;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0.0; k];
    for (&v, &g) in values.iter().zip(groups) {
        sums[g] += v;
        counts[g] += 1.0;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
    let ssb: f64 = (0..k).map(|g| counts[g] * (means[g] - grand).powi(2)).sum();
    let ssw: f64 = values.iter().zip(groups).map(|(v, &g)| (v - means[g]).powi(2)).sum();
    (ssb / (k as f64 - 1.0)) / (ssw / (n - k as f64))
}

fn anova() -> Result<Outcome, String> {
    let t = Instant::now();
    let mut rng = substream(2024, "anova-acceptance", 0);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 20 {
        let k = rng.gen_range(2..=4);
        let per = rng.gen_range(4..=9);
        let mut groups: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let shift = rng.gen_range(0.0..1.5);
        let values: Vec<f64> = groups
            .iter()
            .map(|&g| g as f64 * shift + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut split = vec![Vec::new(); k];
        for (&v, &g) in values.iter().zip(&groups) {
            split[g].push(v);
        }
        let refs: Vec<&[f64]> = split.iter().map(Vec::as_slice).collect();
        let (f, p) = anova_f(&refs).map_err(|e| e.to_string())?;
        if !(0.01..=0.5).contains(&p) {
            continue;
        }
        let mut hits = 0;
        for _ in 0..10_000 {
            groups.shuffle(&mut rng);
            if f_stat(&values, &groups, k) >= f * (1.0 - 1e-12) {
                hits += 1;
            }
        }
        worst = worst.max((p - hits as f64 / 10_000.0).abs());
        instances += 1;
    }

    let trials = 1000;
    let mut false_keeps = 0;
    let mut missed = 0;
    for trial in 0..trials {
        let mut r = substream(trial, "planted", 0);
        let labels: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                (0..100)
                    .map(|j| r.sample::<f64, _>(StandardNormal) + if j < 10 && l == 1 { 3.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let names = (0..100).map(|j| format!("c{j}")).collect();
        let m = FeatureMatrix::new(names, &rows).map_err(|e| e.to_string())?;
        let sel = select_features(&m, &labels, 0.05).map_err(|e| e.to_string())?;
        missed += (0..10).filter(|j| !sel.kept_indices.contains(j)).count();
        false_keeps += sel.kept_indices.iter().filter(|&&j| j >= 10).count();
    }
    let mean_false = false_keeps as f64 / trials as f64;
    let fast = within(t, Duration::from_secs(120));
    Ok(Outcome {
        pass: worst < 0.02 && missed == 0 && (mean_false - 4.5).abs() <= 0.35 && fast,
        detail: format!(
            "max |p - p_perm| {worst:.4} over 20 instances; planted: {missed} informative missed, {mean_false:.2} false keeps per trial"
        ),
    })
}

fn protocol() -> Result<Outcome, String> {
    let labels: Vec<bool> = (0..108).map(|i| i % 2 == 0).collect();
    let folds = kfold_split(108, 5, Some(&labels), 0).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = folds.iter().map(|f| f.val.len()).collect();
    let mut all: Vec<usize> = folds.iter().flat_map(|f| f.val.clone()).collect();
    all.sort_unstable();
    let partition = all == (0..108).collect::<Vec<_>>()
        && folds.iter().all(|f| f.train.len() + f.val.len() == 108 && f.train.iter().all(|i| !f.val.contains(i)));
    let mut rng = substream(0, "batching", 0);
    let mut counts = [0usize; 3];
    let draws = 10_000;
    for _ in 0..draws {
        let u = sample_window(&[7, 12, 25, 9], 5, &mut rng);
        if !(5..=7).contains(&u) {
            return Err(format!("window {u} outside [5, 7]"));
        }
        counts[u - 5] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let uniform = freqs.iter().all(|f| (f - 1.0 / 3.0).abs() <= 0.02);
    Ok(Outcome {
        pass: sizes == [22, 22, 22, 22, 20] && partition && uniform,
        detail: format!("validation sizes {sizes:?}, partition {partition}, window frequencies {freqs:.4?}"),
    })
}

fn experiment(dir: &Path, separation: f64) -> Result<(f64, f64, f64), String> {
    let spec = SynthSpec {
        n_dialogues: 108,
        acoustic_dim: 16,
        textual_dim: 32,
        pos_dim: 0,
        hc_dim: 8,
        separation,
        mmse_noise: 1.0,
        folds: 5,
        seed: 1,
    };
    let data = dir.join(format!("data_{separation}"));
    let manifest = write_corpus(&data, &spec).map_err(|e| e.to_string())?;
    let ds = load_manifest(&manifest).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig {
        seed: 1,
        use_hc: true,
        ..RunConfig::default()
    };
    cfg.model.preset = Preset::Toy;
    cfg.train.lr = 1e-3;
    cfg.train.epochs = 30;
    let r = run_cv(&ds, &cfg, &dir.join(format!("run_{separation}"))).map_err(|e| e.to_string())?;
    Ok((r.mean_accuracy, r.mean_rmse, r.mean_baseline_rmse))
}

fn end_to_end() -> Result<Outcome, String> {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (acc, rmse, base) = experiment(dir.path(), 3.0)?;
    let (acc0, _, _) = experiment(dir.path(), 0.0)?;
    let reduction = 1.0 - rmse / base;
    let fast = within(t, Duration::from_secs(15 * 60));
    Ok(Outcome {
        pass: acc >= 0.90 && reduction >= 0.30 && (0.35..=0.65).contains(&acc0) && fast,
        detail: format!(
            "separation 3: accuracy {acc:.4}, rmse {rmse:.4} vs mean-predictor {base:.4} ({:.1}% lower); separation 0: accuracy {acc0:.4}",
            100.0 * reduction
        ),
    })
}

fn kth(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    for _ in 0..k {
        let i = (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b });
        v.swap_remove(i);
    }
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn ensemble_metrics() -> Result<Outcome, String> {
    let mut rng = substream(77, "ensemble-acceptance", 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=9);
        let members: Vec<(bool, f64)> = (0..n)
            .map(|_| (rng.gen_bool(0.5), f64::from(rng.gen_range(0..=60u32)) / 2.0))
            .collect();
        let yes = members.iter().filter(|m| m.0).count();
        let scores: Vec<f64> = members.iter().map(|m| m.1).collect();
        let want_med = if n % 2 == 1 { kth(&scores, n / 2) } else { (kth(&scores, n / 2 - 1) + kth(&scores, n / 2)) / 2.0 };
        let (cls, med) = ensemble(&members).map_err(|e| e.to_string())?;
        if cls != (2 * yes >= n) || med != want_med {
            mismatches += 1;
        }
    }

    // Hand-counted confusion: tp 3, fp 1, tn 2, fn 2.
    let preds = [true, true, true, false, false, true, false, false];
    let truths = [true, true, true, true, true, false, false, false];
    let m = classification_metrics(&preds, &truths).map_err(|e| e.to_string())?;
    let hand = (m.accuracy - 5.0 / 8.0).abs() < 1e-12
        && (m.ad.precision - 0.75).abs() < 1e-12
        && (m.ad.recall - 0.6).abs() < 1e-12
        && (m.non_ad.precision - 0.5).abs() < 1e-12
        && (m.non_ad.recall - 2.0 / 3.0).abs() < 1e-12;

    // 24 AD + 24 non-AD: 17 AD caught, 22 non-AD kept.
    let rows: Vec<PredictionRow> = (0..48)
        .map(|i| {
            let ad = i < 24;
            let pred = if ad { i < 17 } else { i < 26 };
            PredictionRow {
                id: format!("t{i:02}"),
                fold: None,
                label_ad: Some(u8::from(ad)),
                label_mmse: Some(20),
                p_ad: f64::from(u8::from(pred)),
                pred_ad: u8::from(pred),
                pred_mmse: 20.0,
                members: 5,
            }
        })
        .collect();
    let (rep, _) = report::metrics("Ensembled Output", &rows).map_err(|e| e.to_string())?;
    let table = report::table_csv(&[rep]);
    let want = "model,class,precision,recall,f1,accuracy,rmse\n\
                Ensembled Output,non-AD,0.7586,0.9167,0.8302,0.8125,0.0000\n\
                Ensembled Output,AD,0.8947,0.7083,0.7907,0.8125,0.0000\n";
    Ok(Outcome {
        pass: mismatches == 0 && hand && table == want,
        detail: format!(
            "{mismatches} ensemble mismatches in 1000 sets, hand confusion {hand}, table layout {}",
            if table == want { "matches" } else { "differs" }
        ),
    })
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

fn determinism() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        n_dialogues: 12,
        acoustic_dim: 6,
        textual_dim: 8,
        pos_dim: 0,
        hc_dim: 4,
        folds: 3,
        seed: 42,
        ..SynthSpec::default()
    };
    let mut cfg = RunConfig {
        seed: 42,
        folds: 3,
        use_hc: true,
        ..RunConfig::default()
    };
    cfg.model.preset = Preset::Toy;
    cfg.train.epochs = 3;
    cfg.train.lr = 1e-3;
    let mut trees = Vec::new();
    for (run, threads) in [(0, 1), (1, 3)] {
        let data = dir.path().join(format!("data{run}"));
        let manifest = write_corpus(&data, &spec).map_err(|e| e.to_string())?;
        let ds = load_manifest(&manifest).map_err(|e| e.to_string())?;
        let out = dir.path().join(format!("run{run}"));
        run_cv(&ds, &RunConfig { threads, ..cfg.clone() }, &out).map_err(|e| e.to_string())?;
        trees.push((tree(&data.join("dialogues")), tree(&out)));
    }
    let files = trees[0].1.len();
    let ckpts = trees[0].1.iter().filter(|(n, _)| n.ends_with(".ckpt")).count();
    Ok(Outcome {
        pass: trees[0] == trees[1] && ckpts == 3,
        detail: format!(
            "{} data files and {files} run files ({ckpts} checkpoints) byte-identical: {}",
            trees[0].0.len(),
            trees[0] == trees[1]
        ),
    })
}

fn main() {
    let results = [
        check("gradient suite", gradients),
        check("architecture shapes", architecture),
        check("ANOVA oracle", anova),
        check("protocol", protocol),
        check("synthetic end-to-end", end_to_end),
        check("ensemble and metrics oracle", ensemble_metrics),
        check("determinism", determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
