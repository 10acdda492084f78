//! Classification/regression metrics, ensembling and MMSE severity buckets.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    /// AD predicted AD.
    pub tp: usize,
    /// non-AD predicted AD.
    pub fp: usize,
    /// non-AD predicted non-AD.
    pub tn: usize,
    /// AD predicted non-AD.
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(preds: &[bool], truths: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &t) in preds.iter().zip(truths) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Precision, recall and F1 of one class; ratios with an empty
/// denominator are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassScores {
    fn new(hit: usize, predicted: usize, actual: usize) -> Self {
        let precision = ratio(hit, predicted);
        let recall = ratio(hit, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub ad: ClassScores,
    pub non_ad: ClassScores,
    pub macro_f1: f64,
}

pub fn classification_metrics(preds: &[bool], truths: &[bool]) -> Result<ClassificationMetrics> {
    if preds.is_empty() {
        return Err(Error::Empty("classification predictions"));
    }
    if preds.len() != truths.len() {
        return Err(Error::Shape(alloc::format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let c = Confusion::from_pairs(preds, truths);
    let ad = ClassScores::new(c.tp, c.tp + c.fp, c.tp + c.fn_);
    let non_ad = ClassScores::new(c.tn, c.tn + c.fn_, c.tn + c.fp);
    Ok(ClassificationMetrics {
        confusion: c,
        accuracy: ratio(c.tp + c.tn, c.total()),
        ad,
        non_ad,
        macro_f1: 0.5 * (ad.f1 + non_ad.f1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    /// Coefficient of determination `1 - SS_res / SS_tot`; NaN for constant
    /// truths or fewer than two samples.
    pub r2: f64,
    /// Squared Pearson correlation; NaN when either side is constant.
    pub r2_pearson: f64,
}

pub fn regression_metrics(preds: &[f64], truths: &[f64]) -> Result<RegressionMetrics> {
    if preds.is_empty() {
        return Err(Error::Empty("regression predictions"));
    }
    if preds.len() != truths.len() {
        return Err(Error::Shape(alloc::format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let n = preds.len() as f64;
    let ss_res: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    let rmse = libm::sqrt(ss_res / n);
    let mt = truths.iter().sum::<f64>() / n;
    let mp = preds.iter().sum::<f64>() / n;
    let ss_tot: f64 = truths.iter().map(|t| (t - mt) * (t - mt)).sum();
    let ss_pred: f64 = preds.iter().map(|p| (p - mp) * (p - mp)).sum();
    let cov: f64 = preds.iter().zip(truths).map(|(p, t)| (p - mp) * (t - mt)).sum();
    let (r2, r2_pearson) = if preds.len() < 2 || ss_tot == 0.0 {
        (f64::NAN, f64::NAN)
    } else {
        let pearson = if ss_pred == 0.0 {
            f64::NAN
        } else {
            cov * cov / (ss_pred * ss_tot)
        };
        (1.0 - ss_res / ss_tot, pearson)
    };
    Ok(RegressionMetrics {
        rmse,
        r2,
        r2_pearson,
    })
}

/// Majority vote over member classifications; an even split counts as AD.
pub fn majority_vote(votes: &[bool]) -> Result<bool> {
    if votes.is_empty() {
        return Err(Error::Empty("ensemble members"));
    }
    let yes = votes.iter().filter(|&&v| v).count();
    Ok(2 * yes >= votes.len())
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Combines per-member `(is_ad, mmse)` outputs for one dialogue.
pub fn ensemble(members: &[(bool, f64)]) -> Result<(bool, f64)> {
    let votes: Vec<bool> = members.iter().map(|m| m.0).collect();
    let scores: Vec<f64> = members.iter().map(|m| m.1).collect();
    Ok((majority_vote(&votes)?, median(&scores)?))
}

/// Cognitive-impairment bucket of an MMSE score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityClass {
    Severe,
    Moderate,
    Mild,
    Normal,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 4] = [
        SeverityClass::Normal,
        SeverityClass::Mild,
        SeverityClass::Moderate,
        SeverityClass::Severe,
    ];

    /// Inclusive integer MMSE range.
    pub fn range(self) -> (u8, u8) {
        match self {
            SeverityClass::Normal => (24, 30),
            SeverityClass::Mild => (19, 23),
            SeverityClass::Moderate => (10, 18),
            SeverityClass::Severe => (0, 9),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityClass::Normal => "normal",
            SeverityClass::Mild => "mild",
            SeverityClass::Moderate => "moderate",
            SeverityClass::Severe => "severe",
        }
    }
}

/// Buckets an MMSE value after rounding half up to an integer.
pub fn severity_class(mmse: f64) -> Result<SeverityClass> {
    if !(0.0..=30.0).contains(&mmse) {
        return Err(Error::Range(alloc::format!("MMSE {mmse} outside [0, 30]")));
    }
    let score = libm::floor(mmse + 0.5) as u8;
    Ok(SeverityClass::ALL
        .into_iter()
        .find(|c| {
            let (lo, hi) = c.range();
            (lo..=hi).contains(&score)
        })
        .expect("buckets partition [0, 30]"))
}

/// Predicted-vs-true MMSE pairs with the share landing in the same bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityReport {
    /// `(prediction, truth)` pairs.
    pub points: Vec<(f64, f64)>,
    pub agreement: f64,
    /// Row = true class, column = predicted class, in [`SeverityClass::ALL`] order.
    pub confusion: [[usize; 4]; 4],
}

pub fn severity_report(preds: &[f64], truths: &[f64]) -> Result<SeverityReport> {
    if preds.is_empty() {
        return Err(Error::Empty("severity report input"));
    }
    if preds.len() != truths.len() {
        return Err(Error::Shape(alloc::format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let slot = |c: SeverityClass| SeverityClass::ALL.iter().position(|&x| x == c).unwrap();
    let mut confusion = [[0usize; 4]; 4];
    let mut same = 0;
    for (&p, &t) in preds.iter().zip(truths) {
        let (cp, ct) = (severity_class(p.clamp(0.0, 30.0))?, severity_class(t)?);
        confusion[slot(ct)][slot(cp)] += 1;
        if cp == ct {
            same += 1;
        }
    }
    Ok(SeverityReport {
        points: preds.iter().copied().zip(truths.iter().copied()).collect(),
        agreement: same as f64 / preds.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn all_correct() {
        let t = [true, false, true, false];
        let m = classification_metrics(&t, &t).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.ad.f1, 1.0);
        assert_eq!(m.non_ad.f1, 1.0);
    }

    #[test]
    fn table_layout_reproduction() {
        // 24 AD + 24 non-AD; 17 AD caught, 2 non-AD flagged.
        let mut truths = vec![true; 24];
        truths.extend(vec![false; 24]);
        let mut preds = vec![true; 17];
        preds.extend(vec![false; 7]);
        preds.extend(vec![true; 2]);
        preds.extend(vec![false; 22]);
        let m = classification_metrics(&preds, &truths).unwrap();
        assert!((m.non_ad.precision - 0.7586).abs() < 5e-5);
        assert!((m.non_ad.recall - 0.9167).abs() < 5e-5);
        assert!((m.non_ad.f1 - 0.8302).abs() < 5e-5);
        assert!((m.ad.precision - 0.8947).abs() < 5e-5);
        assert!((m.ad.recall - 0.7083).abs() < 5e-5);
        assert!((m.ad.f1 - 0.7907).abs() < 5e-5);
        assert_eq!(m.accuracy, 0.8125);
    }

    #[test]
    fn constant_ad_predictor() {
        let truths = [true, false, true, false];
        let m = classification_metrics(&[true; 4], &truths).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.ad.recall, 1.0);
        assert_eq!(m.non_ad.recall, 0.0);
        assert_eq!(m.non_ad.precision, 0.0);
        assert!(classification_metrics(&[], &[]).is_err());
    }

    #[test]
    fn regression_examples() {
        let r = regression_metrics(&[10.0, 20.0], &[12.0, 18.0]).unwrap();
        assert_eq!(r.rmse, 2.0);
        let r = regression_metrics(&[3.0, 7.0, 9.0], &[3.0, 7.0, 9.0]).unwrap();
        assert_eq!((r.rmse, r.r2), (0.0, 1.0));
        let r = regression_metrics(&[5.0, 5.0, 5.0], &[2.0, 5.0, 8.0]).unwrap();
        assert_eq!(r.r2, 0.0);
        assert!(r.r2_pearson.is_nan());
        let r = regression_metrics(&[1.0, 2.0], &[4.0, 4.0]).unwrap();
        assert!(r.r2.is_nan());
    }

    #[test]
    fn ensemble_examples() {
        let members = [(true, 20.0), (true, 22.0), (false, 25.0), (true, 27.0), (false, 30.0)];
        assert_eq!(ensemble(&members).unwrap(), (true, 25.0));
        assert!(majority_vote(&[true, false]).unwrap());
        assert!(!majority_vote(&[true, false, false]).unwrap());
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(ensemble(&[]).is_err());
    }

    #[test]
    fn severity_buckets() {
        assert_eq!(severity_class(30.0).unwrap(), SeverityClass::Normal);
        assert_eq!(severity_class(0.0).unwrap(), SeverityClass::Severe);
        assert_eq!(severity_class(23.5).unwrap(), SeverityClass::Normal);
        assert_eq!(severity_class(23.49).unwrap(), SeverityClass::Mild);
        assert_eq!(severity_class(18.5).unwrap(), SeverityClass::Mild);
        assert_eq!(severity_class(9.4).unwrap(), SeverityClass::Severe);
        assert!(severity_class(30.5).is_err());
        assert!(severity_class(-0.1).is_err());
    }

    #[test]
    fn severity_report_identity() {
        let v = [3.0, 12.0, 20.0, 29.0];
        let r = severity_report(&v, &v).unwrap();
        assert_eq!(r.agreement, 1.0);
        assert_eq!(r.confusion[0][0], 1);
    }
}
