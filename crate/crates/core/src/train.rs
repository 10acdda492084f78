//! Joint classification + regression training: variable-window batching,
//! summed cross-entropy and squared-error loss, Adam updates and stratified
//! k-fold splitting.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::data::{Dialogue, Utterance};
use crate::error::{Error, Result};
use crate::eval::{classification_metrics, regression_metrics};
use crate::model::{prediction_from, CrnnModel, Outputs, Prediction};
use crate::rng::{substream, BATCHING, DROPOUT, SPLIT};

/// Probability floor inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Lower end of the per-batch window length draw.
    pub min_window: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
            batch_size: 4,
            epochs: 300,
            min_window: 5,
            seed: 0,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(alloc::format!("learning rate {} must be finite and >= 0", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(alloc::format!("betas ({}, {}) not in [0, 1)", self.beta1, self.beta2));
        }
        if self.min_window == 0 || self.batch_size == 0 {
            return bad("min_window and batch_size must be at least 1".into());
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Fails without touching anything if a
/// gradient is non-finite, naming the offending tensor.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(alloc::format!(
            "{} gradients / {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.shape() != params.get(id).shape() {
            return Err(Error::Shape(alloc::format!(
                "gradient of `{}` has shape {:?}",
                params.name(id),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "gradient of `{}`",
                params.name(id)
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, f64::from(t));
    let c2 = 1.0 - libm::pow(cfg.beta2, f64::from(t));
    for (i, g) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.tensors_mut()[i].data_mut();
        for j in 0..g.len() {
            let gj = g.data()[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
        }
    }
    Ok(())
}

/// Window length for a batch whose shortest dialogue has `min(lengths)`
/// utterances: uniform over `[min(min_window, m), m]`.
pub fn sample_window<R: Rng + ?Sized>(lengths: &[usize], min_window: usize, rng: &mut R) -> usize {
    let m = lengths.iter().copied().min().unwrap_or(1).max(1);
    let lo = min_window.min(m).max(1);
    rng.gen_range(lo..=m)
}

/// Uniform random start offset of a `window`-long slice for each dialogue.
pub fn window_starts<R: Rng + ?Sized>(lengths: &[usize], window: usize, rng: &mut R) -> Vec<usize> {
    lengths
        .iter()
        .map(|&len| rng.gen_range(0..=len.saturating_sub(window)))
        .collect()
}

/// Cross-entropy of the softmax over `logits` against the AD label plus the
/// squared error of the scaled MMSE output, as a `1 × 1` node.
pub fn joint_loss(tape: &mut Tape, out: Outputs, label_ad: bool, mmse01_true: f64) -> Result<crate::autodiff::Var> {
    let probs = tape.softmax(out.logits, 1)?;
    let p_true = tape.slice(probs, 1, usize::from(label_ad), 1)?;
    let log_p = tape.log_clamped(p_true, LOG_FLOOR);
    let ce = tape.scale(log_p, -1.0);
    let target = tape.input(Tensor::new(&[1, 1], alloc::vec![mmse01_true])?);
    let diff = tape.sub(out.mmse01, target)?;
    let se = tape.mul(diff, diff)?;
    tape.add(ce, se)
}

/// [`joint_loss`] evaluated directly on head outputs.
pub fn joint_loss_value(logits: [f64; 2], label_ad: bool, mmse01_pred: f64, mmse01_true: f64) -> f64 {
    let mx = logits[0].max(logits[1]);
    let z = libm::exp(logits[0] - mx) + libm::exp(logits[1] - mx);
    let p = libm::exp(logits[usize::from(label_ad)] - mx) / z;
    let d = mmse01_pred - mmse01_true;
    -libm::log(p.max(LOG_FLOOR)) + d * d
}

/// A labelled slice of a dialogue ready for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub utterances: &'a [Utterance],
    pub hc: &'a [f64],
    pub label_ad: bool,
    pub mmse01: f64,
}

impl<'a> Sample<'a> {
    pub fn whole(d: &'a Dialogue) -> Result<Self> {
        Self::window(d, 0, d.len())
    }

    pub fn window(d: &'a Dialogue, start: usize, len: usize) -> Result<Self> {
        let (Some(label_ad), Some(mmse01)) = (d.label_ad, d.mmse01()) else {
            return Err(Error::InvalidArgument(alloc::format!(
                "dialogue `{}` lacks AD or MMSE labels",
                d.id
            )));
        };
        Ok(Self {
            utterances: d.window(start, len),
            hc: &d.hc,
            label_ad,
            mmse01,
        })
    }
}

/// Mean joint loss over `batch` and its gradient for every parameter.
pub fn batch_gradients<R: Rng + ?Sized>(
    model: &CrnnModel,
    batch: &[Sample<'_>],
    train: bool,
    rng: &mut R,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let mut grads: Vec<Tensor> = model
        .params()
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, s.utterances, s.hc, train, rng)?;
        let loss = joint_loss(&mut tape, out, s.label_ad, s.mmse01)?;
        total += tape.value(loss).item();
        tape.backward(loss)?.accumulate(&mut grads, scale);
    }
    Ok((total * scale, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Validation-fold sizes: `ceil(n / k)` for the first `k - 1` folds and the
/// remainder last, falling back to an even split when the remainder would
/// be empty.
pub fn fold_sizes(n: usize, folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(alloc::format!("{folds} folds; need at least 2")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(alloc::format!(
            "{n} items cannot fill {folds} folds"
        )));
    }
    let big = n.div_ceil(folds);
    if (folds - 1) * big < n {
        let mut sizes = alloc::vec![big; folds - 1];
        sizes.push(n - (folds - 1) * big);
        return Ok(sizes);
    }
    let base = n / folds;
    Ok((0..folds).map(|i| base + usize::from(i < n % folds)).collect())
}

/// Seeded k-fold partition of `0..n`. With labels, each class is shuffled
/// separately and the classes are interleaved before cutting, so every fold
/// is close to the overall class balance.
pub fn kfold_split(n: usize, folds: usize, labels: Option<&[bool]>, seed: u64) -> Result<Vec<Fold>> {
    let sizes = fold_sizes(n, folds)?;
    let mut rng = substream(seed, SPLIT, 0);
    let order: Vec<usize> = match labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::Shape(alloc::format!("{} labels for {n} items", l.len())));
            }
            let mut pos: Vec<usize> = (0..n).filter(|&i| l[i]).collect();
            let mut neg: Vec<usize> = (0..n).filter(|&i| !l[i]).collect();
            pos.shuffle(&mut rng);
            neg.shuffle(&mut rng);
            // Interleave proportionally: take from whichever class is behind
            // its share so far.
            let (np, nn) = (pos.len(), neg.len());
            let (mut ip, mut in_) = (0, 0);
            let mut order = Vec::with_capacity(n);
            while ip + in_ < n {
                let take_pos = in_ >= nn || (ip < np && ip * nn <= in_ * np);
                if take_pos {
                    order.push(pos[ip]);
                    ip += 1;
                } else {
                    order.push(neg[in_]);
                    in_ += 1;
                }
            }
            order
        }
        None => {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        }
    };
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for &size in &sizes {
        let mut val: Vec<usize> = order[start..start + size].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        train.sort_unstable();
        out.push(Fold { train, val });
        start += size;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// A loss or gradient went non-finite; `params` are the last good ones
    /// (best validation epoch so far, or the initial weights).
    Diverged {
        epoch: usize,
        reason: String,
        params: ParamStore,
    },
    Invalid(Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Diverged { epoch, reason, .. } => {
                write!(f, "training diverged in epoch {epoch}: {reason}")
            }
            TrainError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

/// Loss and metrics of whole-dialogue inference over a labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub loss: f64,
    pub accuracy: f64,
    pub rmse: f64,
    pub predictions: Vec<Prediction>,
}

pub fn evaluate(model: &CrnnModel, dialogues: &[Dialogue]) -> Result<EvalSummary> {
    if dialogues.is_empty() {
        return Err(Error::Empty("evaluation dialogues"));
    }
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(dialogues.len());
    let mut inference_rng = substream(0, DROPOUT, 0);
    for d in dialogues {
        let s = Sample::whole(d)?;
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, s.utterances, s.hc, false, &mut inference_rng)?;
        let logits = tape.value(out.logits).data();
        let m01 = tape.value(out.mmse01).item();
        loss += joint_loss_value([logits[0], logits[1]], s.label_ad, m01, s.mmse01);
        predictions.push(prediction_from(logits, m01));
    }
    let preds: Vec<bool> = predictions.iter().map(Prediction::is_ad).collect();
    let truths: Vec<bool> = dialogues.iter().map(|d| d.label_ad.unwrap_or(false)).collect();
    let p_mmse: Vec<f64> = predictions.iter().map(|p| p.mmse).collect();
    let t_mmse: Vec<f64> = dialogues
        .iter()
        .map(|d| f64::from(d.label_mmse.unwrap_or(0)))
        .collect();
    Ok(EvalSummary {
        loss: loss / dialogues.len() as f64,
        accuracy: classification_metrics(&preds, &truths)?.accuracy,
        rmse: regression_metrics(&p_mmse, &t_mmse)?.rmse,
        predictions,
    })
}

/// Trains `model` in place on `train_set`, scoring `val_set` after every
/// epoch, and leaves the parameters of the lowest-validation-loss epoch in
/// the model (the last epoch when `val_set` is empty).
pub fn train(
    model: &mut CrnnModel,
    train_set: &[Dialogue],
    val_set: &[Dialogue],
    cfg: &TrainConfig,
) -> core::result::Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training dialogues").into());
    }
    for d in train_set.iter().chain(val_set) {
        Sample::whole(d)?;
    }
    let mut batch_rng = substream(cfg.seed, BATCHING, 0);
    let mut dropout_rng = substream(cfg.seed, DROPOUT, 0);
    let mut state = AdamState::new(model.params());
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let diverged = |epoch: usize, reason: String, best: &Option<(f64, usize, ParamStore)>, cur: &ParamStore| {
        TrainError::Diverged {
            epoch,
            reason,
            params: best.as_ref().map_or_else(|| cur.clone(), |b| b.2.clone()),
        }
    };

    let initial = model.params().clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let lengths: Vec<usize> = chunk.iter().map(|&i| train_set[i].len()).collect();
            let window = sample_window(&lengths, cfg.min_window, &mut batch_rng);
            let starts = window_starts(&lengths, window, &mut batch_rng);
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .zip(&starts)
                .map(|(&i, &s)| Sample::window(&train_set[i], s, window))
                .collect::<Result<_>>()?;
            let (loss, grads) = batch_gradients(model, &batch, true, &mut dropout_rng)?;
            if !loss.is_finite() {
                let fallback = if epoch == 1 { &initial } else { model.params() };
                return Err(diverged(epoch, alloc::format!("loss {loss}"), &best, fallback));
            }
            if let Err(e) = adam_step(model.params_mut(), &grads, &mut state, cfg) {
                return Err(match e {
                    Error::NonFinite(what) => diverged(epoch, what, &best, &initial),
                    other => other.into(),
                });
            }
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let entry = if val_set.is_empty() {
            EpochLog {
                epoch,
                train_loss,
                val_loss: None,
                val_accuracy: None,
                val_rmse: None,
            }
        } else {
            let s = evaluate(model, val_set)?;
            if !s.loss.is_finite() {
                return Err(diverged(epoch, alloc::format!("validation loss {}", s.loss), &best, &initial));
            }
            if best.as_ref().is_none_or(|b| s.loss < b.0) {
                best = Some((s.loss, epoch, model.params().clone()));
            }
            EpochLog {
                epoch,
                train_loss,
                val_loss: Some(s.loss),
                val_accuracy: Some(s.accuracy),
                val_rmse: Some(s.rmse),
            }
        };
        log.push(entry);
    }
    let best_epoch = match best {
        Some((_, epoch, params)) => {
            model.params_mut().load_from(&params)?;
            epoch
        }
        None => cfg.epochs,
    };
    Ok(TrainOutcome { log, best_epoch })
}
