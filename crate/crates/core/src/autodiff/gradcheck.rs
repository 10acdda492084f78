//! Central finite-difference checks of tape gradients.
//!
//! The numeric side only evaluates forward values, so it stays independent of
//! every backward rule it is used to verify.

use alloc::vec::Vec;

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Denominator floor for the relative error; below it both gradients are
/// treated as zero-valued and the absolute difference is what is compared.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub leaf: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because `±h` straddled a ReLU, max or clamp
    /// switch, where the function is not differentiable along the probe.
    pub kinked: usize,
    /// Coordinates where a gradient magnitude reached [`REL_ERR_FLOOR`].
    pub above_floor: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Picks `n` distinct (leaf, coordinate) pairs uniformly over all scalar
/// entries; every entry when `n` is at least the entry count.
pub fn sample_coords<R: Rng + ?Sized>(sizes: &[usize], n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let pick = |flat: usize| {
        let mut rest = flat;
        for (leaf, &len) in sizes.iter().enumerate() {
            if rest < len {
                return (leaf, rest);
            }
            rest -= len;
        }
        unreachable!()
    };
    if n >= total {
        return (0..total).map(pick).collect();
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    while chosen.len() < n {
        let c = rng.gen_range(0..total);
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(pick).collect()
}

fn finish(
    analytic: &[Vec<f64>],
    coords: &[(usize, usize)],
    mut eval: impl FnMut(usize, usize, f64) -> Result<(f64, Vec<usize>)>,
    h: f64,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        checked: 0,
        kinked: 0,
        above_floor: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for &(leaf, coord) in coords {
        let (plus, pattern_plus) = eval(leaf, coord, h)?;
        let (minus, pattern_minus) = eval(leaf, coord, -h)?;
        if pattern_plus != pattern_minus {
            report.kinked += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[leaf][coord];
        let err = rel_err(a, numeric);
        report.checked += 1;
        if a.abs().max(numeric.abs()) >= REL_ERR_FLOOR {
            report.above_floor += 1;
        }
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst = Some(Mismatch {
                leaf,
                coord,
                analytic: a,
                numeric,
                rel_err: err,
            });
        }
    }
    Ok(report)
}

/// Checks gradients of `f` with respect to tracked input tensors.
pub fn check_inputs<F>(
    inputs: &[Tensor],
    coords: &[(usize, usize)],
    h: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.tracked_input(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .wrt(*v)
                .map_or_else(|| alloc::vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();
    let mut work: Vec<Tensor> = inputs.to_vec();
    finish(
        &analytic,
        coords,
        |leaf, coord, delta| {
            let orig = work[leaf].data()[coord];
            work[leaf].data_mut()[coord] = orig + delta;
            let mut tape = Tape::new();
            let vars: Vec<Var> = work.iter().map(|t| tape.input(t.clone())).collect();
            let out = f(&mut tape, &vars);
            work[leaf].data_mut()[coord] = orig;
            let out = out?;
            Ok((tape.value(out).item(), tape.branch_pattern()))
        },
        h,
    )
}

/// Checks gradients of `f` with respect to parameters in `store`.
/// Coordinates index `(param index, entry)`.
pub fn check_params<F>(
    store: &ParamStore,
    coords: &[(usize, usize)],
    h: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = grads
        .param_grads(store)
        .into_iter()
        .map(Tensor::into_data)
        .collect();
    let mut work = store.clone();
    finish(
        &analytic,
        coords,
        |leaf, coord, delta| {
            let id = ParamId(leaf);
            let orig = work.get(id).data()[coord];
            work.get_mut(id).data_mut()[coord] = orig + delta;
            let mut tape = Tape::new();
            let out = f(&mut tape, &work);
            work.get_mut(id).data_mut()[coord] = orig;
            let out = out?;
            Ok((tape.value(out).item(), tape.branch_pattern()))
        },
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_covers_all_when_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_coords(&[2, 3], 100, &mut rng);
        assert_eq!(c, alloc::vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 2)]);
        let c = sample_coords(&[50, 50], 10, &mut rng);
        assert_eq!(c.len(), 10);
    }

    #[test]
    fn relu_switch_is_skipped() {
        let x = Tensor::new(&[2], alloc::vec![0.0, 1.0]).unwrap();
        let r = check_inputs(&[x], &[(0, 0), (0, 1)], 1e-5, |t, v| {
            let y = t.relu(v[0]);
            Ok(t.sum(y))
        })
        .unwrap();
        assert_eq!((r.kinked, r.checked), (1, 1));
        assert!(r.max_rel_err < 1e-9);
    }

    #[test]
    fn agrees_on_quadratic() {
        let x = Tensor::new(&[3], alloc::vec![0.5, -1.0, 2.0]).unwrap();
        let ok = check_inputs(core::slice::from_ref(&x), &[(0, 0), (0, 1), (0, 2)], 1e-5, |t, v| {
            let y = t.mul(v[0], v[0])?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(ok.passes(1e-8));
        assert_eq!(ok.checked, 3);
    }
}
