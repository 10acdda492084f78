//! One-way ANOVA F-test screening of feature columns.

use alloc::vec::Vec;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

const CF_EPS: f64 = 1e-15;
const CF_MAX_ITER: usize = 500;
const TINY: f64 = 1e-300;

/// Outcome of screening every column of a [`FeatureMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Columns with `p <= alpha`, ascending.
    pub kept_indices: Vec<usize>,
    pub f_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub alpha: f64,
}

impl SelectionResult {
    /// Boolean mask over all columns.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = alloc::vec![false; self.p_values.len()];
        for &j in &self.kept_indices {
            m[j] = true;
        }
        m
    }
}

/// One-way ANOVA over `groups`, returning `(F, p)`.
///
/// Degenerate cases follow a fixed convention: zero within-group variance
/// with nonzero between-group variance gives `(+inf, 0)`, and zero
/// between-group variance gives `(0, 1)`.
pub fn anova_f(groups: &[&[f64]]) -> Result<(f64, f64)> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "ANOVA needs at least 2 groups, got {k}"
        )));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Empty("ANOVA group"));
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if n <= k {
        return Err(Error::InvalidArgument(alloc::format!(
            "ANOVA needs more observations ({n}) than groups ({k})"
        )));
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    // Rounding leaves residue of order eps^2 * sum(x^2) in both sums.
    let scale = groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let noise = 1e-24 * scale;
    let ssb_zero = ssb <= noise;
    let ssw_zero = ssw <= noise;
    if ssb_zero {
        return Ok((0.0, 1.0));
    }
    if ssw_zero {
        return Ok((f64::INFINITY, 0.0));
    }
    let df_b = (k - 1) as f64;
    let df_w = (n - k) as f64;
    let f = (ssb / df_b) / (ssw / df_w);
    Ok((f, f_survival(f, df_b, df_w)))
}

/// `P(X > f)` for `X ~ F(d1, d2)`.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = d2 / (d2 + d1 * f);
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Regularised incomplete beta `I_x(a, b)` by continued fraction (modified
/// Lentz), using the symmetry `I_x(a, b) = 1 - I_{1-x}(b, a)` where the
/// fraction converges slowly.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = libm::exp(a * libm::log(x) + b * libm::log(1.0 - x) - ln_beta(a, b));
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Groups the values of `column` by class label.
fn grouped(column: impl Iterator<Item = f64>, labels: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    let mut groups = alloc::vec![Vec::new(); n_classes];
    for (v, &l) in column.zip(labels) {
        groups[l].push(v);
    }
    groups
}

/// Screens every column of `m` with a one-way ANOVA across the classes in
/// `labels`, keeping columns whose p-value is at most `alpha`.
pub fn select_features(m: &FeatureMatrix, labels: &[usize], alpha: f64) -> Result<SelectionResult> {
    if labels.len() != m.n_rows() {
        return Err(Error::Shape(alloc::format!(
            "{} labels for {} rows",
            labels.len(),
            m.n_rows()
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "alpha {alpha} not in (0, 1]"
        )));
    }
    // Compact the label ids so absent ids do not form empty groups.
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "feature selection needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let dense: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("present"))
        .collect();
    let mut f_values = Vec::with_capacity(m.n_cols());
    let mut p_values = Vec::with_capacity(m.n_cols());
    for j in 0..m.n_cols() {
        let groups = grouped(m.column(j), &dense, classes.len());
        let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
        let (f, p) = anova_f(&refs)?;
        f_values.push(f);
        p_values.push(p);
    }
    let kept_indices = p_values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p <= alpha)
        .map(|(j, _)| j)
        .collect();
    Ok(SelectionResult {
        kept_indices,
        f_values,
        p_values,
        alpha,
    })
}

/// Keeps only the entries of `v` at `kept` indices.
pub fn apply_mask(v: &[f64], kept: &[usize]) -> Vec<f64> {
    kept.iter().map(|&j| v[j]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    #[test]
    fn textbook_two_groups() {
        let (f, p) = anova_f(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        assert!((f - 13.5).abs() < 1e-12);
        // scipy.stats.f_oneway reference value
        assert!((p - 0.021_311_641_128_756_72).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn identical_groups() {
        assert_eq!(anova_f(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]).unwrap(), (0.0, 1.0));
        assert_eq!(anova_f(&[&[4.0, 4.0], &[4.0, 4.0, 4.0]]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn zero_within_variance() {
        let (f, p) = anova_f(&[&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]]).unwrap();
        assert!(f.is_infinite() && f > 0.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn precondition_errors() {
        assert!(anova_f(&[&[1.0, 2.0]]).is_err());
        assert!(anova_f(&[&[1.0], &[]]).is_err());
        assert!(anova_f(&[&[1.0], &[2.0]]).is_err());
    }

    #[test]
    fn incomplete_beta_known_values() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a; I_0.5(a, a) = 0.5
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(2.5, 1.0, 0.4) - libm::pow(0.4, 2.5)).abs() < 1e-14);
        assert!((regularized_incomplete_beta(7.0, 7.0, 0.5) - 0.5).abs() < 1e-14);
    }

    fn matrix(cols: &[&[f64]]) -> FeatureMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let names = (0..cols.len()).map(|j| alloc::format!("f{j}")).collect::<Vec<String>>();
        FeatureMatrix::new(names, &rows).unwrap()
    }

    #[test]
    fn constant_column_excluded_and_alpha_one_keeps_all() {
        let m = matrix(&[&[1.0, 1.0, 1.0, 1.0], &[0.0, 0.1, 5.0, 5.2]]);
        let labels = [0, 0, 1, 1];
        let r = select_features(&m, &labels, 0.05).unwrap();
        assert_eq!(r.kept_indices, vec![1]);
        assert_eq!(r.p_values[0], 1.0);
        let all = select_features(&m, &labels, 1.0).unwrap();
        assert_eq!(all.kept_indices, vec![0, 1]);
        assert_eq!(all.mask(), vec![true, true]);
    }

    #[test]
    fn single_class_rejected() {
        let m = matrix(&[&[1.0, 2.0, 3.0]]);
        assert!(select_features(&m, &[4, 4, 4], 0.05).is_err());
        assert!(select_features(&m, &[0, 1], 0.05).is_err());
    }

    #[test]
    fn tie_at_alpha_is_kept() {
        let m = matrix(&[&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]);
        let labels = [0, 0, 0, 1, 1, 1];
        let p = select_features(&m, &labels, 0.5).unwrap().p_values[0];
        assert_eq!(select_features(&m, &labels, p).unwrap().kept_indices, vec![0]);
    }
}
