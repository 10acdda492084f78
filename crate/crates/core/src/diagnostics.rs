//! Finite-difference gradient checks over every tape primitive, the
//! composite layers and the whole (desk-scale) network.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::autodiff::gradcheck::{check_inputs, check_params, sample_coords, GradCheckReport};
use crate::autodiff::{
    lstm_layer, sdp_self_attention, se_block_gate, Dense, LstmLayer, ParamStore, SqueezeExcite,
    Tape, Tensor, Var,
};
use crate::data::{Speaker, Utterance};
use crate::error::Result;
use crate::model::{CrnnModel, ModelConfig};
use crate::rng::{substream, StreamRng, DROPOUT, INIT};
use crate::train::joint_loss;

/// Central-difference step.
pub const GRAD_H: f64 = 1e-5;
/// Largest accepted relative error.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCase {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut StreamRng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, data).expect("non-empty shape")
}

/// Reduces `y` to a scalar with fixed pseudo-random weights, so every output
/// entry contributes a distinct amount.
fn project(tape: &mut Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let mut rng = StreamRng::seed_from_u64(0x9e37_79b9 ^ shape.iter().product::<usize>() as u64);
    let w = tape.input(uniform(&shape, -1.0, 1.0, &mut rng));
    let yw = tape.mul(y, w)?;
    Ok(tape.sum(yw))
}

struct Runner {
    rng: StreamRng,
    per_case: usize,
    cases: Vec<GradCase>,
}

impl Runner {
    fn inputs<F>(&mut self, name: &'static str, inputs: Vec<Tensor>, mut f: F) -> Result<()>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    {
        let sizes: Vec<usize> = inputs.iter().map(Tensor::len).collect();
        let coords = sample_coords(&sizes, self.per_case, &mut self.rng);
        let report = check_inputs(&inputs, &coords, GRAD_H, |tape, v| {
            let y = f(tape, v)?;
            project(tape, y)
        })?;
        self.cases.push(GradCase { name, report });
        Ok(())
    }

    fn params<F>(&mut self, name: &'static str, store: &ParamStore, n: usize, mut f: F) -> Result<()>
    where
        F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
    {
        let sizes: Vec<usize> = store.tensors().iter().map(Tensor::len).collect();
        let coords = sample_coords(&sizes, n, &mut self.rng);
        let report = check_params(store, &coords, GRAD_H, |tape, s| {
            let y = f(tape, s)?;
            project(tape, y)
        })?;
        self.cases.push(GradCase { name, report });
        Ok(())
    }

    fn u(&mut self, shape: &[usize]) -> Tensor {
        uniform(shape, -1.0, 1.0, &mut self.rng)
    }
}

/// Desk-scale model with a random three-utterance dialogue, used for the
/// whole-network check.
pub fn network_fixture(seed: u64) -> Result<(CrnnModel, Vec<Utterance>, Vec<f64>)> {
    let mut init = substream(seed, INIT, 2);
    let mut rng = substream(seed, "gradcheck-net", 0);
    let model = CrnnModel::new(ModelConfig::toy(5, 7, 3), &mut init)?;
    let utts = (0..3)
        .map(|i| {
            let sp = if i % 2 == 0 { Speaker::Investigator } else { Speaker::Participant };
            let ac = uniform(&[5], -1.0, 1.0, &mut rng).into_data();
            let tx = uniform(&[7], -1.0, 1.0, &mut rng).into_data();
            Utterance::new(sp, ac, tx)
        })
        .collect();
    let hc = uniform(&[3], -1.0, 1.0, &mut rng).into_data();
    Ok((model, utts, hc))
}

/// Runs every gradient case with up to `per_case` sampled coordinates each.
/// The full network gets at least `network_coords`, spread over all of its
/// parameter tensors. Deterministic in `seed`.
pub fn gradient_suite(seed: u64, per_case: usize, network_coords: usize) -> Result<Vec<GradCase>> {
    let mut r = Runner {
        rng: substream(seed, "gradcheck", 0),
        per_case,
        cases: Vec::new(),
    };

    let (a, b) = (r.u(&[8, 12]), r.u(&[12, 10]));
    r.inputs("matmul", alloc::vec![a, b], |t, v| t.matmul(v[0], v[1]))?;
    let a = r.u(&[10, 12]);
    r.inputs("transpose", alloc::vec![a], |t, v| t.transpose(v[0]))?;
    let (a, b) = (r.u(&[10, 12]), r.u(&[1, 12]));
    r.inputs("add_broadcast", alloc::vec![a, b], |t, v| t.add(v[0], v[1]))?;
    let (a, b) = (r.u(&[10, 12]), r.u(&[10, 1]));
    r.inputs("sub_broadcast", alloc::vec![a, b], |t, v| t.sub(v[0], v[1]))?;
    let (a, b) = (r.u(&[10, 12]), r.u(&[10, 1]));
    r.inputs("mul_broadcast", alloc::vec![a, b], |t, v| t.mul(v[0], v[1]))?;
    let a = r.u(&[10, 12]);
    r.inputs("scale", alloc::vec![a], |t, v| Ok(t.scale(v[0], -2.5)))?;
    let (a, b) = (r.u(&[6, 10]), r.u(&[6, 12]));
    r.inputs("concat", alloc::vec![a, b], |t, v| t.concat(&[v[0], v[1]], 1))?;
    let a = r.u(&[10, 20]);
    r.inputs("slice", alloc::vec![a], |t, v| t.slice(v[0], 1, 4, 11))?;
    let a = r.u(&[10, 12]);
    r.inputs("reshape", alloc::vec![a], |t, v| {
        let y = t.reshape(v[0], &[8, 15])?;
        t.slice(y, 0, 1, 6)
    })?;
    let a = r.u(&[12, 12]);
    r.inputs("relu", alloc::vec![a], |t, v| Ok(t.relu(v[0])))?;
    let a = uniform(&[12, 12], -4.0, 4.0, &mut r.rng);
    r.inputs("sigmoid", alloc::vec![a], |t, v| Ok(t.sigmoid(v[0])))?;
    let a = uniform(&[12, 12], -2.0, 2.0, &mut r.rng);
    r.inputs("tanh", alloc::vec![a], |t, v| Ok(t.tanh(v[0])))?;
    let a = uniform(&[12, 12], 0.1, 2.0, &mut r.rng);
    r.inputs("log_clamped", alloc::vec![a], |t, v| Ok(t.log_clamped(v[0], 1e-12)))?;
    let a = uniform(&[10, 12], -3.0, 3.0, &mut r.rng);
    r.inputs("softmax_rows", alloc::vec![a], |t, v| t.softmax(v[0], 1))?;
    let a = uniform(&[10, 12], -3.0, 3.0, &mut r.rng);
    r.inputs("softmax_cols", alloc::vec![a], |t, v| t.softmax(v[0], 0))?;
    let a = r.u(&[12, 12]);
    r.inputs("dropout", alloc::vec![a], |t, v| {
        let mut rng = substream(seed, DROPOUT, 0);
        t.dropout(v[0], 0.3, true, &mut rng)
    })?;
    let (x, w, bias) = (r.u(&[3, 40]), r.u(&[5, 3, 5]), r.u(&[5]));
    r.inputs("conv1d", alloc::vec![x, w, bias], |t, v| t.conv1d(v[0], v[1], Some(v[2]), 1, 2))?;
    let (x, w) = (r.u(&[4, 32]), r.u(&[6, 4, 7]));
    r.inputs("conv1d_strided", alloc::vec![x, w], |t, v| t.conv1d(v[0], v[1], None, 4, 3))?;
    let a = r.u(&[12, 12]);
    r.inputs("max_rows", alloc::vec![a], |t, v| t.max(v[0], 0))?;
    let a = r.u(&[10, 12]);
    r.inputs("global_max_pool", alloc::vec![a], |t, v| t.global_max_pool(v[0]))?;
    let a = r.u(&[10, 12]);
    r.inputs("mean", alloc::vec![a], |t, v| t.mean(v[0], 1))?;
    let a = r.u(&[11, 11]);
    r.inputs("sum", alloc::vec![a], |t, v| {
        let s = t.sum(v[0]);
        let s2 = t.mul(s, s)?;
        t.reshape(s2, &[1])
    })?;
    let a = r.u(&[120, 1]);
    r.inputs("attention_scalar_sequence", alloc::vec![a], |t, v| sdp_self_attention(t, v[0]))?;
    let a = r.u(&[20, 6]);
    r.inputs("attention_vectors", alloc::vec![a], |t, v| sdp_self_attention(t, v[0]))?;

    let mut init = substream(seed, INIT, 1);
    let mut store = ParamStore::new();
    let dense = Dense::init(&mut store, "dense", 12, 10, true, &mut init)?;
    let x = r.u(&[1, 12]);
    r.params("dense", &store, per_case, |t, s| {
        let xv = t.input(x.clone());
        dense.forward(t, s, xv)
    })?;

    let mut store = ParamStore::new();
    let lstm = LstmLayer::init(&mut store, "lstm", 10, 4, true, &mut init)?;
    let x = r.u(&[12, 10]);
    r.params("bilstm_params", &store, per_case, |t, s| {
        let xv = t.input(x.clone());
        lstm_layer(t, s, xv, &lstm)
    })?;
    r.inputs("bilstm_inputs", alloc::vec![x.clone()], |t, v| lstm_layer(t, &store, v[0], &lstm))?;

    let mut store = ParamStore::new();
    let se = SqueezeExcite::init(&mut store, "se", 32, 4, &mut init)?;
    let u = uniform(&[32, 10], 0.0, 1.0, &mut r.rng);
    r.params("se_params", &store, per_case, |t, s| {
        let uv = t.input(u.clone());
        se_block_gate(t, s, uv, &se)
    })?;
    r.inputs("se_inputs", alloc::vec![u.clone()], |t, v| se_block_gate(t, &store, v[0], &se))?;

    let (model, utts, hc) = network_fixture(seed)?;
    let config = model.config().clone();
    let sizes: Vec<usize> = model.params().tensors().iter().map(Tensor::len).collect();
    // Spread the budget over every tensor; uniform sampling would land almost
    // entirely in the conv kernels.
    let each = network_coords.div_ceil(sizes.len());
    let mut coords = Vec::new();
    for (leaf, &len) in sizes.iter().enumerate() {
        for (_, c) in sample_coords(&[len], each, &mut r.rng) {
            coords.push((leaf, c));
        }
    }
    let report = check_params(model.params(), &coords, GRAD_H, |t, s| {
        let m = CrnnModel::from_params(config.clone(), s)?;
        let mut rng = substream(seed, DROPOUT, 0);
        let out = m.forward(t, &utts, &hc, false, &mut rng)?;
        joint_loss(t, out, true, 0.6)
    })?;
    r.cases.push(GradCase {
        name: "network_joint_loss",
        report,
    });
    Ok(r.cases)
}
