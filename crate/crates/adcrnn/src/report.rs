//! Prediction tables, metrics tables and the severity scatter plot.

use std::fmt::Write as _;
use std::path::Path;

use adcrnn_core::eval::{
    classification_metrics, regression_metrics, severity_report, ClassScores, SeverityClass,
    SeverityReport,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// One row of a prediction CSV (`predict`, `ensemble`, `train`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub fold: Option<usize>,
    pub label_ad: Option<u8>,
    pub label_mmse: Option<u8>,
    pub p_ad: f64,
    pub pred_ad: u8,
    pub pred_mmse: f64,
    /// Models combined into this row.
    pub members: usize,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn predictions_to_string(rows: &[PredictionRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn read_predictions(path: &Path) -> AppResult<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<PredictionRow>, _>>()
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(AppError::Data(format!("{}: no prediction rows", path.display())));
    }
    Ok(rows)
}

/// One line of the per-class metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub rmse: f64,
}

/// Full metrics of one labelled prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub non_ad: ClassJson,
    pub ad: ClassJson,
    pub rmse: f64,
    /// Coefficient of determination; null when undefined.
    pub r2: Option<f64>,
    /// Squared Pearson correlation; null when undefined.
    pub r2_pearson: Option<f64>,
    pub severity_agreement: f64,
    /// Rows true class, columns predicted, order normal/mild/moderate/severe.
    pub severity_confusion: [[usize; 4]; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassJson {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<ClassScores> for ClassJson {
    fn from(c: ClassScores) -> Self {
        Self {
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Metrics over rows that all carry both labels.
pub fn metrics(model: &str, rows: &[PredictionRow]) -> AppResult<(MetricsReport, SeverityReport)> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut p_mmse = Vec::new();
    let mut t_mmse = Vec::new();
    for r in rows {
        let (Some(ad), Some(m)) = (r.label_ad, r.label_mmse) else {
            return Err(AppError::Data(format!("row `{}` lacks labels", r.id)));
        };
        preds.push(r.pred_ad == 1);
        truths.push(ad == 1);
        p_mmse.push(r.pred_mmse);
        t_mmse.push(f64::from(m));
    }
    let c = classification_metrics(&preds, &truths)?;
    let g = regression_metrics(&p_mmse, &t_mmse)?;
    let s = severity_report(&p_mmse, &t_mmse)?;
    Ok((
        MetricsReport {
            model: model.to_owned(),
            n: rows.len(),
            accuracy: c.accuracy,
            macro_f1: c.macro_f1,
            non_ad: c.non_ad.into(),
            ad: c.ad.into(),
            rmse: g.rmse,
            r2: finite(g.r2),
            r2_pearson: finite(g.r2_pearson),
            severity_agreement: s.agreement,
            severity_confusion: s.confusion,
        },
        s,
    ))
}

/// non-AD and AD rows of `m`, as laid out in the per-class results tables.
pub fn table_rows(m: &MetricsReport) -> [TableRow; 2] {
    let row = |class: &str, c: &ClassJson| TableRow {
        model: m.model.clone(),
        class: class.to_owned(),
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        accuracy: m.accuracy,
        rmse: m.rmse,
    };
    [row("non-AD", &m.non_ad), row("AD", &m.ad)]
}

/// CSV with header `model,class,precision,recall,f1,accuracy,rmse`, values
/// to four decimals.
pub fn table_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("model,class,precision,recall,f1,accuracy,rmse\n");
    for m in reports {
        for r in table_rows(m) {
            writeln!(
                out,
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
                r.model, r.class, r.precision, r.recall, r.f1, r.accuracy, r.rmse
            )
            .unwrap();
        }
    }
    out
}

/// Predicted-vs-true MMSE scatter over shaded severity bands, with the
/// identity line and the bucket agreement in the title.
pub fn severity_svg(r: &SeverityReport) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let scale = |v: f64| PAD + v / 30.0 * SIZE;
    let flip = |v: f64| PAD + SIZE - v / 30.0 * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    )
    .unwrap();
    let fills = ["#e8f5e9", "#fff8e1", "#ffe0b2", "#ffcdd2"];
    for (class, fill) in SeverityClass::ALL.iter().zip(fills) {
        let (lo, hi) = class.range();
        let (lo, hi) = (f64::from(lo) - 0.5, f64::from(hi) + 0.5);
        let (lo, hi) = (lo.max(0.0), hi.min(30.0));
        writeln!(
            s,
            r#"<rect class="band" data-class="{}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            class.name(),
            scale(lo),
            flip(hi),
            scale(hi) - scale(lo),
            flip(lo) - flip(hi),
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
        scale(0.0),
        flip(0.0),
        scale(30.0),
        flip(30.0)
    )
    .unwrap();
    for &(p, t) in &r.points {
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1565c0" fill-opacity="0.7"/>"##,
            scale(t.clamp(0.0, 30.0)),
            flip(p.clamp(0.0, 30.0))
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">true MMSE</text>"#,
        PAD + SIZE / 2.0,
        total - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 14 {:.2})">predicted MMSE</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="14">severity agreement {:.2}%</text>"#,
        PAD + SIZE / 2.0,
        100.0 * r.agreement
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, ad: u8, pred: u8, mmse: u8, pm: f64) -> PredictionRow {
        PredictionRow {
            id: id.into(),
            fold: None,
            label_ad: Some(ad),
            label_mmse: Some(mmse),
            p_ad: f64::from(pred),
            pred_ad: pred,
            pred_mmse: pm,
            members: 1,
        }
    }

    #[test]
    fn csv_round_trip_with_missing_labels() {
        let mut rows = vec![row("a", 1, 1, 20, 21.5), row("b", 0, 1, 29, 27.25)];
        rows[1].label_ad = None;
        rows[1].label_mmse = None;
        rows[1].fold = Some(3);
        let text = predictions_to_string(&rows);
        assert!(text.starts_with("id,fold,label_ad,label_mmse,p_ad,pred_ad,pred_mmse,members\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        std::fs::write(&p, &text).unwrap();
        assert_eq!(read_predictions(&p).unwrap(), rows);
    }

    #[test]
    fn table_layout() {
        let rows = [row("a", 1, 1, 20, 20.0), row("b", 0, 0, 28, 26.0)];
        let (m, _) = metrics("net", &rows).unwrap();
        let csv = table_csv(&[m]);
        assert_eq!(
            csv,
            "model,class,precision,recall,f1,accuracy,rmse\nnet,non-AD,1.0000,1.0000,1.0000,1.0000,1.4142\nnet,AD,1.0000,1.0000,1.0000,1.0000,1.4142\n"
        );
    }

    #[test]
    fn unlabeled_rows_rejected() {
        let mut r = row("a", 1, 1, 20, 20.0);
        r.label_mmse = None;
        assert!(metrics("m", &[r]).is_err());
    }
}
