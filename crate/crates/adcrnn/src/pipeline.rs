//! Turning loaded dialogues into model inputs: POS handling, hand-crafted
//! column masking and standardisation.

use adcrnn_core::data::{normalize, Dialogue, FeatureMatrix, NormStats};
use adcrnn_core::select::{select_features, SelectionResult};

use crate::error::{AppError, AppResult};

/// Merges or drops POS histograms and keeps the masked HC columns (none when
/// `hc_mask` is absent).
pub fn prepare(d: &Dialogue, use_pos: bool, hc_mask: Option<&[bool]>) -> AppResult<Dialogue> {
    let mut d = if use_pos { d.clone().merge_pos() } else { d.clone().drop_pos() };
    d.hc = match hc_mask {
        Some(mask) => {
            if mask.len() != d.hc.len() {
                return Err(AppError::Data(format!(
                    "dialogue `{}`: HC mask covers {} columns, file has {}",
                    d.id,
                    mask.len(),
                    d.hc.len()
                )));
            }
            d.hc.iter().zip(mask).filter(|(_, &k)| k).map(|(&v, _)| v).collect()
        }
        None => Vec::new(),
    };
    Ok(d)
}

pub fn prepare_all(ds: &[Dialogue], use_pos: bool, hc_mask: Option<&[bool]>) -> AppResult<Vec<Dialogue>> {
    ds.iter().map(|d| prepare(d, use_pos, hc_mask)).collect()
}

/// ANOVA screen of the HC columns over labelled dialogues.
pub fn select_hc(ds: &[Dialogue], alpha: f64) -> AppResult<SelectionResult> {
    let labels = ds
        .iter()
        .map(|d| {
            d.label_ad
                .map(usize::from)
                .ok_or_else(|| AppError::Data(format!("dialogue `{}` has no AD label", d.id)))
        })
        .collect::<AppResult<Vec<_>>>()?;
    let m = FeatureMatrix::from_hc(ds)?;
    Ok(select_features(&m, &labels, alpha)?)
}

/// Fits statistics on `train` and applies them to both splits.
pub fn standardize(train: &[Dialogue], rest: &[Dialogue]) -> AppResult<(NormStats, Vec<Dialogue>, Vec<Dialogue>)> {
    let stats = NormStats::fit(train)?;
    let a = normalize(train, &stats)?;
    let b = normalize(rest, &stats)?;
    Ok((stats, a, b))
}
