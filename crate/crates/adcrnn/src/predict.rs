//! Inference with one or more checkpoints and ensembling of prediction
//! tables.

use std::collections::BTreeMap;

use adcrnn_core::data::{normalize, Dialogue};
use adcrnn_core::eval::ensemble;

use crate::checkpoint::Bundle;
use crate::error::{AppError, AppResult};
use crate::pipeline::prepare;
use crate::report::PredictionRow;

/// One row per dialogue. Several bundles are combined by majority vote on
/// the class and the median MMSE; `p_ad` is the members' mean.
pub fn predict_rows(bundles: &[Bundle], dialogues: &[Dialogue]) -> AppResult<Vec<PredictionRow>> {
    if bundles.is_empty() {
        return Err(AppError::Usage("at least one checkpoint is required".into()));
    }
    dialogues
        .iter()
        .map(|d| {
            let mut members = Vec::with_capacity(bundles.len());
            let mut p_sum = 0.0;
            for b in bundles {
                let s = &b.sidecar;
                let p = prepare(d, s.model.use_pos, s.hc_mask.as_deref())?;
                let p = normalize(std::slice::from_ref(&p), &s.norm_stats)
                    .map_err(|e| AppError::Data(format!("dialogue `{}`: {e}", d.id)))?;
                let pred = b
                    .model
                    .predict(&p[0])
                    .map_err(|e| AppError::Data(format!("dialogue `{}`: {e}", d.id)))?;
                p_sum += pred.p_ad;
                members.push((pred.is_ad(), pred.mmse));
            }
            let (is_ad, mmse) = ensemble(&members)?;
            Ok(PredictionRow {
                id: d.id.clone(),
                fold: None,
                label_ad: d.label_ad.map(u8::from),
                label_mmse: d.label_mmse,
                p_ad: p_sum / bundles.len() as f64,
                pred_ad: u8::from(is_ad),
                pred_mmse: mmse,
                members: bundles.len(),
            })
        })
        .collect()
}

/// Combines prediction tables row by row on dialogue id. Every table must
/// cover the same ids; labels must agree where present.
pub fn ensemble_tables(tables: &[Vec<PredictionRow>]) -> AppResult<Vec<PredictionRow>> {
    let first = tables
        .first()
        .ok_or_else(|| AppError::Usage("at least one prediction table is required".into()))?;
    let mut by_id: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
    for (t, table) in tables.iter().enumerate() {
        if table.len() != first.len() {
            return Err(AppError::Data(format!(
                "table {t} has {} rows, table 0 has {}",
                table.len(),
                first.len()
            )));
        }
        for r in table {
            let e = by_id.entry(&r.id).or_default();
            if e.len() != t {
                return Err(AppError::Data(format!("id `{}` repeated or missing across tables", r.id)));
            }
            e.push(r);
        }
    }
    first
        .iter()
        .map(|r0| {
            let rows = &by_id[r0.id.as_str()];
            if rows.len() != tables.len() {
                return Err(AppError::Data(format!("id `{}` missing from some tables", r0.id)));
            }
            for r in rows {
                if r.label_ad != r0.label_ad || r.label_mmse != r0.label_mmse {
                    return Err(AppError::Data(format!("id `{}` carries conflicting labels", r0.id)));
                }
            }
            let members: Vec<(bool, f64)> = rows.iter().map(|r| (r.pred_ad == 1, r.pred_mmse)).collect();
            let (is_ad, mmse) = ensemble(&members)?;
            Ok(PredictionRow {
                id: r0.id.clone(),
                fold: None,
                label_ad: r0.label_ad,
                label_mmse: r0.label_mmse,
                p_ad: rows.iter().map(|r| r.p_ad).sum::<f64>() / rows.len() as f64,
                pred_ad: u8::from(is_ad),
                pred_mmse: mmse,
                members: rows.iter().map(|r| r.members).sum(),
            })
        })
        .collect()
}
