//! Cross-validated training: fold assignment, per-fold ANOVA screening and
//! standardisation, training, checkpointing and pooled metrics.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use adcrnn_core::data::Dialogue;
use adcrnn_core::eval::regression_metrics;
use adcrnn_core::model::CrnnModel;
use adcrnn_core::rng::{substream, substream_seed, INIT};
use adcrnn_core::train::{evaluate, kfold_split, train, EpochLog, Fold, TrainError};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Sidecar};
use crate::config::{to_json, RunConfig};
use crate::error::{AppError, AppResult};
use crate::manifest::Dataset;
use crate::pipeline::{prepare_all, select_hc, standardize};
use crate::report::{self, MetricsReport, PredictionRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochJson {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_rmse: Option<f64>,
}

impl From<&EpochLog> for EpochJson {
    fn from(e: &EpochLog) -> Self {
        Self {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
            val_accuracy: e.val_accuracy,
            val_rmse: e.val_rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub best_epoch: usize,
    /// Hand-crafted columns kept by the screen (empty when HC is off).
    pub hc_kept: Vec<usize>,
    pub accuracy: f64,
    pub rmse: f64,
    /// RMSE of predicting the training-split mean MMSE for every dialogue.
    pub baseline_rmse: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldSummary>,
    pub mean_accuracy: f64,
    pub mean_rmse: f64,
    pub mean_baseline_rmse: f64,
    /// Metrics over the pooled validation predictions of every fold.
    pub pooled: MetricsReport,
}

struct FoldOutput {
    summary: FoldSummary,
    rows: Vec<PredictionRow>,
}

/// Folds from the manifest, or a fresh stratified split.
pub fn assign_folds(ds: &Dataset, cfg: &RunConfig) -> AppResult<Vec<Fold>> {
    let n = ds.dialogues.len();
    if let (Some(of), false) = (ds.fold_of(), cfg.resplit) {
        let k = of.iter().max().map_or(0, |m| m + 1);
        if k != cfg.folds {
            return Err(AppError::Usage(format!(
                "manifest assigns {k} folds but {} were requested; pass --folds {k} or --resplit",
                cfg.folds
            )));
        }
        return Ok((0..k)
            .map(|f| Fold {
                train: (0..n).filter(|&i| of[i] != f).collect(),
                val: (0..n).filter(|&i| of[i] == f).collect(),
            })
            .collect());
    }
    let labels: Vec<bool> = ds.dialogues.iter().map(|d| d.label_ad == Some(true)).collect();
    kfold_split(n, cfg.folds, Some(&labels), cfg.seed).map_err(|e| AppError::Usage(e.to_string()))
}

fn pick(ds: &[Dialogue], idx: &[usize]) -> Vec<Dialogue> {
    idx.iter().map(|&i| ds[i].clone()).collect()
}

fn run_fold(
    k: usize,
    fold: &Fold,
    ds: &Dataset,
    cfg: &RunConfig,
    once_mask: Option<&[bool]>,
    out_dir: &Path,
) -> AppResult<FoldOutput> {
    let train_raw = pick(&ds.dialogues, &fold.train);
    let val_raw = pick(&ds.dialogues, &fold.val);
    let mask: Option<Vec<bool>> = if cfg.use_hc && ds.manifest.hc_dim > 0 {
        Some(match once_mask {
            Some(m) => m.to_vec(),
            None => select_hc(&train_raw, cfg.alpha)?.mask(),
        })
    } else {
        None
    };
    let train_p = prepare_all(&train_raw, cfg.use_pos, mask.as_deref())?;
    let val_p = prepare_all(&val_raw, cfg.use_pos, mask.as_deref())?;
    let (stats, train_n, val_n) = standardize(&train_p, &val_p)?;
    let dims = train_n[0].dims();
    let model_cfg = cfg.model.build(dims.acoustic, dims.textual, dims.hc, cfg.modality, cfg.use_hc, cfg.use_pos);
    model_cfg.validate().map_err(|e| AppError::Usage(format!("model config: {e}")))?;
    let mut model = CrnnModel::new(model_cfg.clone(), &mut substream(cfg.seed, INIT, k as u64))?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = substream_seed(cfg.seed, "fold", k as u64);
    let ckpt = out_dir.join(format!("fold_{k}.ckpt"));
    let mut sidecar = Sidecar {
        format_version: checkpoint::VERSION,
        model: model_cfg,
        hc_mask: mask.clone(),
        norm_stats: stats,
        fold: Some(k),
        best_epoch: None,
    };
    let outcome = match train(&mut model, &train_n, &val_n, &tcfg) {
        Ok(o) => o,
        Err(e @ TrainError::Diverged { .. }) => {
            if let TrainError::Diverged { params, .. } = &e {
                if let Ok(m) = CrnnModel::from_params(sidecar.model.clone(), params) {
                    checkpoint::save(&ckpt, &m, &sidecar)?;
                }
            }
            return Err(AppError::Diverged(format!("fold {k}: {e}; last good weights in {}", ckpt.display())));
        }
        Err(e) => return Err(e.into()),
    };
    sidecar.best_epoch = Some(outcome.best_epoch);
    checkpoint::save(&ckpt, &model, &sidecar)?;
    let log: Vec<EpochJson> = outcome.log.iter().map(EpochJson::from).collect();
    let log_path = out_dir.join(format!("fold_{k}_epochs.json"));
    std::fs::write(&log_path, to_json(&log)).map_err(|e| AppError::io(&log_path, e))?;

    let summary = evaluate(&model, &val_n)?;
    let train_mean = train_n.iter().map(|d| f64::from(d.label_mmse.unwrap_or(0))).sum::<f64>() / train_n.len() as f64;
    let truths: Vec<f64> = val_n.iter().map(|d| f64::from(d.label_mmse.unwrap_or(0))).collect();
    let baseline_rmse = regression_metrics(&vec![train_mean; truths.len()], &truths)?.rmse;
    let rows = val_n
        .iter()
        .zip(&summary.predictions)
        .map(|(d, p)| PredictionRow {
            id: d.id.clone(),
            fold: Some(k),
            label_ad: d.label_ad.map(u8::from),
            label_mmse: d.label_mmse,
            p_ad: p.p_ad,
            pred_ad: u8::from(p.is_ad()),
            pred_mmse: p.mmse,
            members: 1,
        })
        .collect();
    Ok(FoldOutput {
        summary: FoldSummary {
            fold: k,
            n_train: train_n.len(),
            n_val: val_n.len(),
            best_epoch: outcome.best_epoch,
            hc_kept: mask
                .map(|m| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect())
                .unwrap_or_default(),
            accuracy: summary.accuracy,
            rmse: summary.rmse,
            baseline_rmse,
            checkpoint: PathBuf::from(format!("fold_{k}.ckpt")),
        },
        rows,
    })
}

/// Runs every fold, writing checkpoints, epoch logs, `cv_predictions.csv`,
/// `metrics.json` and `metrics.csv` into `out_dir`.
pub fn run_cv(ds: &Dataset, cfg: &RunConfig, out_dir: &Path) -> AppResult<CvReport> {
    cfg.validate()?;
    for d in &ds.dialogues {
        if d.label_ad.is_none() || d.label_mmse.is_none() {
            return Err(AppError::Data(format!("dialogue `{}` lacks AD or MMSE labels", d.id)));
        }
    }
    let folds = assign_folds(ds, cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| AppError::io(out_dir, e))?;
    let once_mask = if cfg.select_once && cfg.use_hc && ds.manifest.hc_dim > 0 {
        Some(select_hc(&ds.dialogues, cfg.alpha)?.mask())
    } else {
        None
    };

    let results: Vec<Mutex<Option<AppResult<FoldOutput>>>> = folds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        if k >= folds.len() {
            break;
        }
        let r = run_fold(k, &folds[k], ds, cfg, once_mask.as_deref(), out_dir);
        *results[k].lock().unwrap() = Some(r);
    };
    let threads = cfg.threads.min(folds.len());
    if threads <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let mut outputs = Vec::with_capacity(folds.len());
    for r in results {
        outputs.push(r.into_inner().unwrap().expect("every fold ran")?);
    }

    let mut rows: Vec<PredictionRow> = outputs.iter().flat_map(|o| o.rows.clone()).collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    report::write_predictions(&out_dir.join("cv_predictions.csv"), &rows)?;
    let mut per_fold = Vec::with_capacity(outputs.len());
    for o in &outputs {
        per_fold.push(report::metrics(&format!("fold_{}", o.summary.fold), &o.rows)?.0);
    }
    let (pooled, _) = report::metrics("cv", &rows)?;
    let k = outputs.len() as f64;
    let summaries: Vec<FoldSummary> = outputs.into_iter().map(|o| o.summary).collect();
    let cv = CvReport {
        mean_accuracy: summaries.iter().map(|s| s.accuracy).sum::<f64>() / k,
        mean_rmse: summaries.iter().map(|s| s.rmse).sum::<f64>() / k,
        mean_baseline_rmse: summaries.iter().map(|s| s.baseline_rmse).sum::<f64>() / k,
        folds: summaries,
        pooled: pooled.clone(),
    };
    let json = out_dir.join("metrics.json");
    std::fs::write(&json, to_json(&cv)).map_err(|e| AppError::io(&json, e))?;
    per_fold.push(pooled);
    let csv = out_dir.join("metrics.csv");
    std::fs::write(&csv, report::table_csv(&per_fold)).map_err(|e| AppError::io(&csv, e))?;
    Ok(cv)
}
