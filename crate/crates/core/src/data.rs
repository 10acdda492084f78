//! Dialogue and utterance types, per-dimension standardisation and the
//! sample-by-feature matrix used for feature screening.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const MMSE_MAX: u8 = 30;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Speaker {
    Investigator,
    Participant,
}

impl Speaker {
    /// Row of the speaker embedding table.
    pub fn index(self) -> usize {
        match self {
            Speaker::Investigator => 0,
            Speaker::Participant => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Speaker::Investigator => "INV",
            Speaker::Participant => "PAR",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "INV" => Some(Speaker::Investigator),
            "PAR" => Some(Speaker::Participant),
            _ => None,
        }
    }
}

/// One aligned speech turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub acoustic: Vec<f64>,
    pub textual: Vec<f64>,
    /// Part-of-speech histogram, kept apart until [`Dialogue::merge_pos`].
    pub pos: Option<Vec<f64>>,
    pub duration_ms: Option<u64>,
}

impl Utterance {
    pub fn new(speaker: Speaker, acoustic: Vec<f64>, textual: Vec<f64>) -> Self {
        Self {
            speaker,
            acoustic,
            textual,
            pos: None,
            duration_ms: None,
        }
    }
}

/// Per-modality vector widths shared by every utterance of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureDims {
    pub acoustic: usize,
    pub textual: usize,
    /// 0 when the dataset carries no POS histograms.
    pub pos: usize,
    pub hc: usize,
}

/// An ordered conversation with its conversation-level hand-crafted vector
/// and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub hc: Vec<f64>,
    pub label_ad: Option<bool>,
    pub label_mmse: Option<u8>,
}

impl Dialogue {
    /// Validates the dialogue invariants: at least one utterance, MMSE within
    /// `[0, 30]` and uniform vector widths across utterances.
    pub fn new(
        id: String,
        utterances: Vec<Utterance>,
        hc: Vec<f64>,
        label_ad: Option<bool>,
        label_mmse: Option<u8>,
    ) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::Empty("dialogue utterances"));
        }
        if let Some(m) = label_mmse {
            if m > MMSE_MAX {
                return Err(Error::Range(alloc::format!(
                    "dialogue `{id}`: MMSE {m} outside [0, {MMSE_MAX}]"
                )));
            }
        }
        let first = &utterances[0];
        let pos_len = first.pos.as_ref().map(Vec::len);
        for (i, u) in utterances.iter().enumerate() {
            if u.acoustic.len() != first.acoustic.len()
                || u.textual.len() != first.textual.len()
                || u.pos.as_ref().map(Vec::len) != pos_len
            {
                return Err(Error::Shape(alloc::format!(
                    "dialogue `{id}`: utterance {i} widths differ from utterance 0"
                )));
            }
        }
        Ok(Self {
            id,
            utterances,
            hc,
            label_ad,
            label_mmse,
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn dims(&self) -> FeatureDims {
        let u = &self.utterances[0];
        FeatureDims {
            acoustic: u.acoustic.len(),
            textual: u.textual.len(),
            pos: u.pos.as_ref().map_or(0, Vec::len),
            hc: self.hc.len(),
        }
    }

    /// Appends each utterance's POS histogram to its textual vector
    /// (textual first) and clears the separate POS slot.
    pub fn merge_pos(mut self) -> Self {
        for u in &mut self.utterances {
            if let Some(pos) = u.pos.take() {
                u.textual.extend(pos);
            }
        }
        self
    }

    /// Drops POS histograms without merging them.
    pub fn drop_pos(mut self) -> Self {
        for u in &mut self.utterances {
            u.pos = None;
        }
        self
    }

    /// MMSE scaled to `[0, 1]`.
    pub fn mmse01(&self) -> Option<f64> {
        self.label_mmse.map(|m| f64::from(m) / f64::from(MMSE_MAX))
    }

    /// Contiguous sub-dialogue `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> &[Utterance] {
        &self.utterances[start..start + len]
    }
}

/// Mean and standard deviation per dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DimStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DimStats {
    /// Population statistics over `rows`; all rows must share one width.
    pub fn from_rows<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut sum = alloc::vec![0.0; width];
        let mut sq = alloc::vec![0.0; width];
        let mut n = 0usize;
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            if r.len() != width {
                return Err(Error::Shape(alloc::format!(
                    "row width {} != {width}",
                    r.len()
                )));
            }
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Ok(Self {
                mean: alloc::vec![0.0; width],
                std: alloc::vec![1.0; width],
            });
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let std = sq.iter().map(|q| libm::sqrt(q / n as f64)).collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.mean.len() {
            return Err(Error::Shape(alloc::format!(
                "normalisation stats cover {} dims, vector has {}",
                self.mean.len(),
                v.len()
            )));
        }
        for ((x, m), s) in v.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s.max(STD_FLOOR);
        }
        Ok(())
    }
}

/// Standardisation statistics for every feature stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormStats {
    pub acoustic: DimStats,
    pub textual: DimStats,
    pub hc: DimStats,
}

impl NormStats {
    /// Statistics over a training split: utterance-level for acoustic and
    /// textual streams, dialogue-level for the hand-crafted vector.
    pub fn fit(train: &[Dialogue]) -> Result<Self> {
        let first = train.first().ok_or(Error::Empty("training dialogues"))?;
        let d = first.dims();
        let utts = || train.iter().flat_map(|x| x.utterances.iter());
        Ok(Self {
            acoustic: DimStats::from_rows(d.acoustic, utts().map(|u| u.acoustic.as_slice()))?,
            textual: DimStats::from_rows(d.textual, utts().map(|u| u.textual.as_slice()))?,
            hc: DimStats::from_rows(d.hc, train.iter().map(|x| x.hc.as_slice()))?,
        })
    }
}

/// Applies `(x - mean) / max(std, 1e-8)` to every stream of every dialogue.
pub fn normalize(dialogues: &[Dialogue], stats: &NormStats) -> Result<Vec<Dialogue>> {
    dialogues
        .iter()
        .map(|d| {
            let mut d = d.clone();
            for u in &mut d.utterances {
                stats.acoustic.apply(&mut u.acoustic)?;
                stats.textual.apply(&mut u.textual)?;
            }
            stats.hc.apply(&mut d.hc)?;
            Ok(d)
        })
        .collect()
}

/// Samples as rows, named features as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Shape(alloc::format!(
                    "row {i} has {} values for {n_cols} named columns",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            names,
            n_rows: rows.len(),
            data,
        })
    }

    /// Dialogue-level matrix of hand-crafted features with generated names.
    pub fn from_hc(dialogues: &[Dialogue]) -> Result<Self> {
        let width = dialogues.first().map_or(0, |d| d.hc.len());
        let names = (0..width).map(|j| alloc::format!("hc_{j}")).collect();
        let rows: Vec<Vec<f64>> = dialogues.iter().map(|d| d.hc.clone()).collect();
        Self::new(names, &rows)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let c = self.n_cols();
        (0..self.n_rows).map(move |i| self.data[i * c + j])
    }
}
