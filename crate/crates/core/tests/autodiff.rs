use adcrnn_core::autodiff::gradcheck::{check_inputs, check_params, sample_coords};
use adcrnn_core::autodiff::{
    conv_output_len, lstm_layer, sdp_self_attention, se_block_gate, se_excitation, LstmLayer,
    ParamStore, SqueezeExcite, Tape, Tensor,
};
use adcrnn_core::rng::substream;
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = substream(seed, "autodiff-test", 0);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn conv_length_formula() {
    assert_eq!(conv_output_len(1024, 15, 4, 7), Some(256));
    assert_eq!(conv_output_len(256, 15, 4, 7), Some(64));
    assert_eq!(conv_output_len(64, 15, 4, 7), Some(16));
    assert_eq!(conv_output_len(1024, 15, 1, 7), Some(1024));
    assert_eq!(conv_output_len(4, 15, 1, 0), None);
}

#[test]
fn attention_two_positions_by_hand() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new(&[2, 1], vec![0.0, 1.0]).unwrap());
    let y = sdp_self_attention(&mut tape, x).unwrap();
    // Row 0 scores [0, 0] -> weights [.5, .5] -> 0.5.
    // Row 1 scores [0, 1] -> weights [1, e] / (1 + e) -> e / (1 + e).
    let e = std::f64::consts::E;
    let out = tape.value(y).data();
    assert!((out[0] - 0.5).abs() < 1e-15);
    assert!((out[1] - e / (1.0 + e)).abs() < 1e-15);
}

#[test]
fn attention_matches_direct_evaluation() {
    let x = random(&[6, 3], 1);
    let mut tape = Tape::new();
    let v = tape.input(x.clone());
    let y = sdp_self_attention(&mut tape, v).unwrap();
    let d = x.data();
    for i in 0..6 {
        let scores: Vec<f64> = (0..6)
            .map(|j| (0..3).map(|k| d[i * 3 + k] * d[j * 3 + k]).sum::<f64>() / 3f64.sqrt())
            .collect();
        let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = w.iter().sum();
        for k in 0..3 {
            let expect: f64 = (0..6).map(|j| w[j] / z * d[j * 3 + k]).sum();
            assert!((tape.value(y).data()[i * 3 + k] - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn attention_on_zeros_is_zero() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(&[5, 1]));
    let y = sdp_self_attention(&mut tape, x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn bilstm_three_steps_every_weight() {
    let mut store = ParamStore::new();
    let mut rng = substream(2, "lstm-init", 0);
    let layer = LstmLayer::init(&mut store, "l", 3, 4, true, &mut rng).unwrap();
    let x = random(&[3, 3], 3);
    let sizes: Vec<usize> = store.tensors().iter().map(Tensor::len).collect();
    let coords = sample_coords(&sizes, usize::MAX, &mut rng);
    assert_eq!(coords.len(), store.numel());
    let w = random(&[3, 8], 4);
    let report = check_params(&store, &coords, 1e-5, |t, s| {
        let xv = t.input(x.clone());
        let y = lstm_layer(t, s, xv, &layer)?;
        let wv = t.input(w.clone());
        let yw = t.mul(y, wv)?;
        Ok(t.sum(yw))
    })
    .unwrap();
    assert_eq!(report.kinked, 0);
    assert!(report.passes(1e-5), "{report:?}");
}

#[test]
fn single_step_lstm_shape() {
    let mut store = ParamStore::new();
    let layer = LstmLayer::init(&mut store, "l", 5, 6, true, &mut substream(0, "i", 0)).unwrap();
    let mut tape = Tape::new();
    let x = tape.input(random(&[1, 5], 5));
    let y = lstm_layer(&mut tape, &store, x, &layer).unwrap();
    assert_eq!(tape.shape(y), &[1, 12]);
}

#[test]
fn se_block_c8_l4_gradients() {
    let mut store = ParamStore::new();
    let mut rng = substream(6, "se-init", 0);
    let se = SqueezeExcite::init(&mut store, "se", 8, 4, &mut rng).unwrap();
    let u = random(&[8, 4], 7);
    let w = random(&[8, 4], 8);
    let project = |t: &mut Tape, y| {
        let wv = t.input(w.clone());
        let yw = t.mul(y, wv)?;
        Ok(t.sum(yw))
    };
    let sizes: Vec<usize> = store.tensors().iter().map(Tensor::len).collect();
    let coords = sample_coords(&sizes, usize::MAX, &mut rng);
    let r = check_params(&store, &coords, 1e-5, |t, s| {
        let uv = t.input(u.clone());
        let y = se_block_gate(t, s, uv, &se)?;
        project(t, y)
    })
    .unwrap();
    assert!(r.passes(1e-5), "{r:?}");
    let coords = sample_coords(&[32], 32, &mut rng);
    let r = check_inputs(std::slice::from_ref(&u), &coords, 1e-5, |t, v| {
        let y = se_block_gate(t, &store, v[0], &se)?;
        project(t, y)
    })
    .unwrap();
    assert!(r.passes(1e-5), "{r:?}");
}

#[test]
fn se_gates_strictly_inside_unit_interval() {
    let mut store = ParamStore::new();
    let se = SqueezeExcite::init(&mut store, "se", 16, 16, &mut substream(9, "i", 0)).unwrap();
    let mut tape = Tape::new();
    let u = tape.input(random(&[16, 9], 10));
    let g = se_excitation(&mut tape, &store, u, &se).unwrap();
    assert!(tape.value(g).data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn relu_backward_values() {
    let mut tape = Tape::new();
    let x = tape.tracked_input(Tensor::new(&[2], vec![-1.0, 2.0]).unwrap());
    let y = tape.relu(x);
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn forward_backward_is_bit_reproducible() {
    let run = || {
        let mut tape = Tape::new();
        let mut rng = substream(12, "dropout", 0);
        let x = tape.tracked_input(random(&[4, 10], 11));
        let d = tape.dropout(x, 0.2, true, &mut rng).unwrap();
        let s = tape.softmax(d, 1).unwrap();
        let l = tape.log_clamped(s, 1e-12);
        let out = tape.sum(l);
        let g = tape.backward(out).unwrap();
        (tape.value(out).item().to_bits(), g.wrt(x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn shape_errors_are_reported() {
    let mut tape = Tape::new();
    let a = tape.input(Tensor::zeros(&[2, 3]));
    let b = tape.input(Tensor::zeros(&[2, 3]));
    assert!(tape.matmul(a, b).is_err());
    let w = tape.input(Tensor::zeros(&[4, 3, 3]));
    assert!(tape.conv1d(a, w, None, 1, 1).is_err());
    let w = tape.input(Tensor::zeros(&[4, 2, 3]));
    assert!(tape.conv1d(a, w, None, 0, 1).is_err());
    assert!(tape.dropout(a, 1.0, true, &mut substream(0, "d", 0)).is_err());
    assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-300.0f64..300.0, 1..40)) {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::row(&v));
        let s = tape.softmax(x, 1).unwrap();
        let total: f64 = tape.value(s).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_outputs_are_convex_combinations(v in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let n = v.len();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(&[n, 1], v.clone()).unwrap());
        let y = sdp_self_attention(&mut tape, x).unwrap();
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        for &o in tape.value(y).data() {
            prop_assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
        }
    }

    #[test]
    fn dropout_preserves_expectation(rate in 0.05f64..0.8, seed in any::<u64>()) {
        let n = 20_000;
        let mut tape = Tape::new();
        let x = tape.input(Tensor::filled(&[n], 1.5));
        let d = tape.dropout(x, rate, true, &mut substream(seed, "dropout", 0)).unwrap();
        let mean = tape.value(d).data().iter().sum::<f64>() / n as f64;
        // Mean of n scaled Bernoulli draws: sd = 1.5 sqrt(rate / ((1 - rate) n)).
        let sd = 1.5 * (rate / ((1.0 - rate) * n as f64)).sqrt();
        prop_assert!((mean - 1.5).abs() < 5.0 * sd);
        let inference = tape.dropout(x, rate, false, &mut substream(seed, "dropout", 0)).unwrap();
        prop_assert_eq!(inference, x);
    }
}
