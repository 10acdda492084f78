//! Dataset manifest: feature widths, dialogue files, optional fold
//! assignments and normalisation statistics.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use adcrnn_core::data::{Dialogue, FeatureDims, NormStats};
use serde::{Deserialize, Serialize};

use crate::config::serde_norm_opt;
use crate::error::{AppError, AppResult};
use crate::format::read_dialogue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub acoustic_dim: usize,
    pub textual_dim: usize,
    #[serde(default)]
    pub pos_dim: usize,
    pub hc_dim: usize,
    /// Feature files, relative to the manifest's directory unless absolute.
    pub dialogues: Vec<PathBuf>,
    /// Dialogue id → fold index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_norm_opt")]
    pub norm_stats: Option<NormStats>,
}

impl Manifest {
    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            acoustic: self.acoustic_dim,
            textual: self.textual_dim,
            pos: self.pos_dim,
            hc: self.hc_dim,
        }
    }
}

/// A manifest with every dialogue loaded and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub path: PathBuf,
    pub dialogues: Vec<Dialogue>,
}

impl Dataset {
    /// Fold index of every dialogue when the manifest assigns them.
    pub fn fold_of(&self) -> Option<Vec<usize>> {
        let folds = self.manifest.folds.as_ref()?;
        Some(self.dialogues.iter().map(|d| folds[&d.id]).collect())
    }
}

fn check_dims(d: &Dialogue, want: FeatureDims, source: &Path) -> AppResult<()> {
    let got = d.dims();
    for (what, g, w) in [
        ("acoustic", got.acoustic, want.acoustic),
        ("textual", got.textual, want.textual),
        ("POS", got.pos, want.pos),
        ("HC", got.hc, want.hc),
    ] {
        if g != w {
            return Err(AppError::Data(format!(
                "{}: {what} width {g} does not match manifest {what} dim {w}",
                source.display()
            )));
        }
    }
    Ok(())
}

/// Reads one feature file and checks it against the manifest widths.
pub fn load_dialogue(path: &Path, manifest: &Manifest) -> AppResult<Dialogue> {
    let d = read_dialogue(path)?;
    check_dims(&d, manifest.dims(), path)?;
    Ok(d)
}

pub fn load_manifest(path: &Path) -> AppResult<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    if manifest.dialogues.is_empty() {
        return Err(AppError::Data(format!("{}: empty dataset", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut dialogues = Vec::with_capacity(manifest.dialogues.len());
    for rel in &manifest.dialogues {
        let file = base.join(rel);
        let d = load_dialogue(&file, &manifest)?;
        if !seen.insert(d.id.clone()) {
            return Err(AppError::Data(format!(
                "{}: duplicate dialogue id `{}`",
                file.display(),
                d.id
            )));
        }
        dialogues.push(d);
    }
    if let Some(folds) = &manifest.folds {
        check_folds(folds, &seen, path)?;
    }
    if let Some(stats) = &manifest.norm_stats {
        let d = manifest.dims();
        let textual = [d.textual, d.textual + d.pos];
        if stats.acoustic.len() != d.acoustic || !textual.contains(&stats.textual.len()) || stats.hc.len() != d.hc {
            return Err(AppError::Data(format!(
                "{}: norm_stats widths do not match the manifest dims",
                path.display()
            )));
        }
    }
    Ok(Dataset {
        manifest,
        path: path.to_path_buf(),
        dialogues,
    })
}

fn check_folds(folds: &BTreeMap<String, usize>, ids: &HashSet<String>, path: &Path) -> AppResult<()> {
    let err = |msg: String| Err(AppError::Data(format!("{}: {msg}", path.display())));
    if let Some(id) = ids.iter().find(|id| !folds.contains_key(*id)) {
        return err(format!("dialogue `{id}` has no fold assignment"));
    }
    if let Some(id) = folds.keys().find(|id| !ids.contains(*id)) {
        return err(format!("fold assignment for unknown dialogue `{id}`"));
    }
    let k = folds.values().max().map_or(0, |m| m + 1);
    for f in 0..k {
        if !folds.values().any(|&v| v == f) {
            return err(format!("fold {f} of 0..{k} is empty"));
        }
    }
    if k < 2 {
        return err("fold assignments need at least two folds".into());
    }
    Ok(())
}

/// Writes `manifest.json` into `dir`.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> AppResult<PathBuf> {
    let path = dir.join("manifest.json");
    std::fs::write(&path, crate::config::to_json(manifest)).map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}
