//! Seeded synthetic corpus with a controllable class separation.
//!
//! Every feature stream is Gaussian noise (unit variance per utterance plus a
//! per-dialogue offset of standard deviation 0.5). AD dialogues sit
//! `separation / 2` along a random unit direction of each stream, non-AD
//! dialogues the same distance the other way, so the class means are
//! `separation` noise units apart. The hand-crafted vector carries the same
//! kind of shift.

use std::path::{Path, PathBuf};

use adcrnn_core::data::{Dialogue, Speaker, Utterance, MMSE_MAX};
use adcrnn_core::rng::{substream, StreamRng, DATA_GEN};
use adcrnn_core::train::kfold_split;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::format::write_dialogue;
use crate::manifest::{write_manifest, Manifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_dialogues: usize,
    pub acoustic_dim: usize,
    pub textual_dim: usize,
    pub pos_dim: usize,
    pub hc_dim: usize,
    pub separation: f64,
    /// Multiplies the MMSE spreads (4 for AD, 1.5 for non-AD).
    pub mmse_noise: f64,
    /// Fold assignments written into the manifest; 0 writes none.
    pub folds: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_dialogues: 108,
            acoustic_dim: 128,
            textual_dim: 1024,
            pos_dim: 0,
            hc_dim: 23,
            separation: 3.0,
            mmse_noise: 1.0,
            folds: 5,
            seed: 0,
        }
    }
}

pub const MIN_UTTERANCES: usize = 7;
pub const MAX_UTTERANCES: usize = 25;
const DIALOGUE_OFFSET_SD: f64 = 0.5;

impl SynthSpec {
    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::Usage(m));
        if self.n_dialogues < 2 {
            return bad(format!("need at least 2 dialogues, got {}", self.n_dialogues));
        }
        if self.acoustic_dim == 0 || self.textual_dim == 0 {
            return bad("acoustic and textual dims must be positive".into());
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be finite and >= 0", self.separation));
        }
        if !(self.mmse_noise >= 0.0 && self.mmse_noise.is_finite()) {
            return bad(format!("mmse noise {} must be finite and >= 0", self.mmse_noise));
        }
        if self.folds == 1 || self.folds > self.n_dialogues {
            return bad(format!("{} folds for {} dialogues", self.folds, self.n_dialogues));
        }
        Ok(())
    }
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn unit_direction(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn noisy(centre: &[f64], sd: f64, rng: &mut StreamRng) -> Vec<f64> {
    centre
        .iter()
        .map(|c| c + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn mmse(ad: bool, noise: f64, rng: &mut StreamRng) -> u8 {
    let (mean, sd) = if ad { (17.0, 4.0) } else { (28.0, 1.5) };
    let v = if noise == 0.0 {
        mean
    } else {
        Normal::new(mean, sd * noise).expect("finite").sample(rng)
    };
    v.round().clamp(0.0, f64::from(MMSE_MAX)) as u8
}

/// Generates the dialogues of `spec`, deterministically in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> AppResult<Vec<Dialogue>> {
    spec.validate()?;
    let mut rng = substream(spec.seed, DATA_GEN, 0);
    let dirs = [
        unit_direction(spec.acoustic_dim, &mut rng),
        unit_direction(spec.textual_dim, &mut rng),
        unit_direction(spec.hc_dim.max(1), &mut rng),
    ];
    let n = spec.n_dialogues;
    let mut labels: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    labels.shuffle(&mut rng);
    let width = n.saturating_sub(1).to_string().len().max(3);
    labels
        .iter()
        .enumerate()
        .map(|(i, &ad)| {
            let sign = if ad { 0.5 } else { -0.5 };
            let centre = |dir: &[f64], rng: &mut StreamRng| -> Vec<f64> {
                let base: Vec<f64> = dir.iter().map(|d| sign * spec.separation * d).collect();
                noisy(&base, DIALOGUE_OFFSET_SD, rng)
            };
            let ca = centre(&dirs[0], &mut rng);
            let ct = centre(&dirs[1], &mut rng);
            let hc_base: Vec<f64> = dirs[2][..spec.hc_dim].iter().map(|d| sign * spec.separation * d).collect();
            let hc = noisy(&hc_base, 1.0, &mut rng).into_iter().map(round6).collect();
            let count = rng.gen_range(MIN_UTTERANCES..=MAX_UTTERANCES);
            let first_inv = rng.gen_bool(0.5);
            let utterances = (0..count)
                .map(|j| {
                    let speaker = if (j % 2 == 0) == first_inv {
                        Speaker::Investigator
                    } else {
                        Speaker::Participant
                    };
                    let a = noisy(&ca, 1.0, &mut rng).into_iter().map(round6).collect();
                    let t = noisy(&ct, 1.0, &mut rng).into_iter().map(round6).collect();
                    let mut u = Utterance::new(speaker, a, t);
                    if spec.pos_dim > 0 {
                        let raw: Vec<f64> = (0..spec.pos_dim).map(|_| rng.sample::<f64, _>(StandardNormal).exp()).collect();
                        let total: f64 = raw.iter().sum();
                        u.pos = Some(raw.iter().map(|x| round6(x / total)).collect());
                    }
                    u
                })
                .collect();
            let score = mmse(ad, spec.mmse_noise, &mut rng);
            Ok(Dialogue::new(format!("syn_{i:0width$}"), utterances, hc, Some(ad), Some(score))?)
        })
        .collect()
}

/// Writes `dialogues/<id>.txt` files and `manifest.json` into `dir`.
pub fn write_corpus(dir: &Path, spec: &SynthSpec) -> AppResult<PathBuf> {
    let dialogues = generate(spec)?;
    let sub = dir.join("dialogues");
    std::fs::create_dir_all(&sub).map_err(|e| AppError::io(&sub, e))?;
    let mut files = Vec::with_capacity(dialogues.len());
    for d in &dialogues {
        let rel = PathBuf::from("dialogues").join(format!("{}.txt", d.id));
        let path = dir.join(&rel);
        std::fs::write(&path, write_dialogue(d)).map_err(|e| AppError::io(&path, e))?;
        files.push(rel);
    }
    let folds = if spec.folds >= 2 {
        let labels: Vec<bool> = dialogues.iter().map(|d| d.label_ad == Some(true)).collect();
        let split = kfold_split(dialogues.len(), spec.folds, Some(&labels), spec.seed)?;
        let mut map = std::collections::BTreeMap::new();
        for (k, f) in split.iter().enumerate() {
            for &i in &f.val {
                map.insert(dialogues[i].id.clone(), k);
            }
        }
        Some(map)
    } else {
        None
    };
    let manifest = Manifest {
        acoustic_dim: spec.acoustic_dim,
        textual_dim: spec.textual_dim,
        pos_dim: spec.pos_dim,
        hc_dim: spec.hc_dim,
        dialogues: files,
        folds,
        norm_stats: None,
    };
    write_manifest(dir, &manifest)
}
