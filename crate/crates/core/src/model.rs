//! The dialogue CRNN: per-modality attention over projected utterance
//! features, an SE-CNN utterance encoder, a bidirectional LSTM dialogue
//! encoder, hand-crafted feature fusion and twin classification/regression
//! heads.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{
    conv_output_len, lstm_layer, sdp_self_attention, se_block_gate, sigmoid, Dense, LstmLayer,
    ParamId, ParamStore, SqueezeExcite, Tape, Tensor, Var,
};
use crate::data::{Dialogue, Speaker, Utterance, MMSE_MAX};
use crate::error::{shape_err, Error, Result};

/// Which utterance streams feed the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Acoustic,
    Textual,
    Both,
}

impl Modality {
    pub fn uses_acoustic(self) -> bool {
        matches!(self, Modality::Acoustic | Modality::Both)
    }

    pub fn uses_textual(self) -> bool {
        matches!(self, Modality::Textual | Modality::Both)
    }

    pub fn streams(self) -> usize {
        match self {
            Modality::Both => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Acoustic => "acoustic",
            Modality::Textual => "textual",
            Modality::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "acoustic" => Some(Modality::Acoustic),
            "textual" => Some(Modality::Textual),
            "both" => Some(Modality::Both),
            _ => None,
        }
    }
}

/// Architecture hyper-parameters plus the input widths they are built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub acoustic_dim: usize,
    /// Textual width, including the POS histogram when `use_pos` is set.
    pub textual_dim: usize,
    pub hc_dim: usize,
    pub modality: Modality,
    pub use_hc: bool,
    pub use_pos: bool,
    /// Per-modality self-attention; off bypasses it for ablations.
    pub attention: bool,
    pub d_model: usize,
    pub kernel: usize,
    pub n_se_blocks: usize,
    /// Stem width followed by the width reached after each strided block.
    pub channel_schedule: Vec<usize>,
    pub stride: usize,
    /// Every `stride_every`-th SE block ends with a strided convolution.
    pub stride_every: usize,
    pub se_reduction: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub fc_reduction: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Full-size network: 1024-wide projections, kernel 15, six SE blocks
    /// widening 32 → 128 → 512 → 1024, three 512-unit bi-LSTM layers.
    pub fn full(acoustic_dim: usize, textual_dim: usize, hc_dim: usize) -> Self {
        Self {
            acoustic_dim,
            textual_dim,
            hc_dim,
            modality: Modality::Both,
            use_hc: hc_dim > 0,
            use_pos: false,
            attention: true,
            d_model: 1024,
            kernel: 15,
            n_se_blocks: 6,
            channel_schedule: alloc::vec![32, 128, 512, 1024],
            stride: 4,
            stride_every: 2,
            se_reduction: 16,
            lstm_layers: 3,
            lstm_hidden: 512,
            fc_reduction: 4,
            dropout: 0.2,
        }
    }

    /// Same topology at desk scale: 32-wide projections, channels
    /// 4 → 8 → 16 → 32 and 8 hidden units per LSTM direction. The FC trunk
    /// halves instead of quartering so its last layer keeps more than one unit.
    pub fn toy(acoustic_dim: usize, textual_dim: usize, hc_dim: usize) -> Self {
        Self {
            d_model: 32,
            channel_schedule: alloc::vec![4, 8, 16, 32],
            lstm_hidden: 8,
            fc_reduction: 2,
            ..Self::full(acoustic_dim, textual_dim, hc_dim)
        }
    }

    /// Same-length padding for odd kernels.
    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn input_channels(&self) -> usize {
        self.modality.streams() + 1
    }

    fn hc_width(&self) -> usize {
        if self.use_hc {
            self.hc_dim
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(alloc::format!("dropout {} not in [0, 1)", self.dropout));
        }
        let widest = match self.modality {
            Modality::Acoustic => self.acoustic_dim,
            Modality::Textual => self.textual_dim,
            Modality::Both => self.acoustic_dim.max(self.textual_dim),
        };
        if self.d_model < widest {
            return bad(alloc::format!(
                "d_model {} smaller than input width {widest}",
                self.d_model
            ));
        }
        if self.modality.uses_acoustic() && self.acoustic_dim == 0
            || self.modality.uses_textual() && self.textual_dim == 0
        {
            return bad(alloc::format!("{} modality has zero width", self.modality.name()));
        }
        if self.kernel == 0 || self.stride == 0 || self.stride_every == 0 {
            return bad("kernel, stride and stride_every must be positive".into());
        }
        if self.channel_schedule.len() != self.n_se_blocks / self.stride_every + 1 {
            return bad(alloc::format!(
                "{} SE blocks striding every {} need {} channel widths, got {}",
                self.n_se_blocks,
                self.stride_every,
                self.n_se_blocks / self.stride_every + 1,
                self.channel_schedule.len()
            ));
        }
        if self.channel_schedule.contains(&0) || self.lstm_layers == 0 || self.lstm_hidden == 0 {
            return bad("channel widths and LSTM sizes must be positive".into());
        }
        if self.fc_reduction == 0 {
            return bad("fc_reduction must be positive".into());
        }
        self.shape_trace().map(|_| ())
    }

    /// Static tensor shapes implied by the configuration.
    pub fn shape_trace(&self) -> Result<ShapeTrace> {
        if self.stride_every == 0 || self.channel_schedule.len() != self.n_se_blocks / self.stride_every + 1 {
            return Err(shape_err!(
                "channel schedule {:?} does not fit {} blocks",
                self.channel_schedule,
                self.n_se_blocks
            ));
        }
        let p = self.padding();
        let mut len = conv_output_len(self.d_model, self.kernel, 1, p)
            .ok_or_else(|| shape_err!("stem conv invalid for length {}", self.d_model))?;
        let mut length_trace = alloc::vec![self.d_model];
        let mut channel_trace = alloc::vec![self.input_channels(), self.channel_schedule[0]];
        let mut blocks = Vec::with_capacity(self.n_se_blocks);
        let mut channels = self.channel_schedule[0];
        for i in 1..=self.n_se_blocks {
            let strided = i % self.stride_every == 0;
            let (stride, out_ch) = if strided {
                (self.stride, self.channel_schedule[i / self.stride_every])
            } else {
                (1, channels)
            };
            let mid = conv_output_len(len, self.kernel, 1, p)
                .ok_or_else(|| shape_err!("block {i} first conv invalid at length {len}"))?;
            let out = conv_output_len(mid, self.kernel, stride, p)
                .ok_or_else(|| shape_err!("block {i} second conv invalid at length {mid}"))?;
            blocks.push(BlockShape {
                in_channels: channels,
                out_channels: out_ch,
                stride,
                in_len: len,
                out_len: out,
            });
            if strided {
                length_trace.push(out);
                channel_trace.push(out_ch);
            }
            channels = out_ch;
            len = out;
        }
        let cnn_out = channels;
        let lstm_out = 2 * self.lstm_hidden;
        let trunk_in = lstm_out + self.hc_width();
        let fc1 = trunk_in / self.fc_reduction;
        let fc2 = fc1 / self.fc_reduction;
        if fc2 == 0 {
            return Err(shape_err!(
                "FC trunk {trunk_in} -> {fc1} -> {fc2} collapses to zero width"
            ));
        }
        Ok(ShapeTrace {
            length_trace,
            channel_trace,
            blocks,
            cnn_out,
            lstm_out,
            trunk: [trunk_in, fc1, fc2],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
}

/// Shapes fixed by a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Utterance length before the CNN and after each strided block.
    pub length_trace: Vec<usize>,
    /// Input channels, stem width, then the width after each strided block.
    pub channel_trace: Vec<usize>,
    pub blocks: Vec<BlockShape>,
    pub cnn_out: usize,
    pub lstm_out: usize,
    /// Trunk input, first FC and second FC widths.
    pub trunk: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
}

impl Conv {
    fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        in_len: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        // He-uniform over the taps that can touch real input: on inputs
        // shorter than the kernel the rest only ever see padding.
        let fan_in = (c_in * kernel.min(in_len)) as f64;
        Ok(Self {
            weight: store.insert_uniform(
                &alloc::format!("{name}.weight"),
                &[c_out, c_in, kernel],
                libm::sqrt(6.0 / fan_in),
                rng,
            )?,
            bias: store.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[c_out]))?,
            stride,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, padding: usize) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv1d(x, w, Some(b), self.stride, padding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct SeBlock {
    conv1: Conv,
    se: SqueezeExcite,
    conv2: Conv,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    acoustic_proj: Option<Dense>,
    textual_proj: Option<Dense>,
    speaker: ParamId,
    stem: Conv,
    blocks: Vec<SeBlock>,
    lstm: Vec<LstmLayer>,
    fc1: Dense,
    fc2: Dense,
    cls_head: Dense,
    reg_head: Dense,
}

/// Forward outputs for one dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    /// `1 × 2` class logits, index 1 = AD.
    pub logits: Var,
    /// `1 × 1` sigmoid output, MMSE / 30.
    pub mmse01: Var,
}

/// Inference result for one dialogue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_ad: f64,
    pub p_non_ad: f64,
    pub mmse: f64,
}

impl Prediction {
    pub fn is_ad(&self) -> bool {
        self.p_ad >= 0.5
    }
}

/// A configured network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnnModel {
    config: ModelConfig,
    trace: ShapeTrace,
    params: ParamStore,
    layout: Layout,
}

impl CrnnModel {
    /// Builds the network with weights uniform in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let trace = config.shape_trace()?;
        let mut store = ParamStore::new();
        let c = &config;
        let acoustic_proj = if c.modality.uses_acoustic() {
            Some(Dense::init(&mut store, "proj.acoustic", c.acoustic_dim, c.d_model, true, rng)?)
        } else {
            None
        };
        let textual_proj = if c.modality.uses_textual() {
            Some(Dense::init(&mut store, "proj.textual", c.textual_dim, c.d_model, true, rng)?)
        } else {
            None
        };
        // One-hot(2) through a bias-free dense map is a 2-row lookup table.
        let speaker = store.insert_uniform(
            "speaker.embedding",
            &[2, c.d_model],
            core::f64::consts::FRAC_1_SQRT_2,
            rng,
        )?;
        let stem = Conv::init(
            &mut store,
            "cnn.stem",
            c.input_channels(),
            c.channel_schedule[0],
            c.kernel,
            c.d_model,
            1,
            rng,
        )?;
        let mut blocks = Vec::with_capacity(c.n_se_blocks);
        for (i, b) in trace.blocks.iter().enumerate() {
            let name = alloc::format!("cnn.block{}", i + 1);
            let conv1 = Conv::init(
                &mut store,
                &alloc::format!("{name}.conv1"),
                b.in_channels,
                b.in_channels,
                c.kernel,
                b.in_len,
                1,
                rng,
            )?;
            let se = SqueezeExcite::init(
                &mut store,
                &alloc::format!("{name}.se"),
                b.in_channels,
                c.se_reduction,
                rng,
            )?;
            let conv2 = Conv::init(
                &mut store,
                &alloc::format!("{name}.conv2"),
                b.in_channels,
                b.out_channels,
                c.kernel,
                b.in_len,
                b.stride,
                rng,
            )?;
            blocks.push(SeBlock { conv1, se, conv2 });
        }
        let mut lstm = Vec::with_capacity(c.lstm_layers);
        let mut width = trace.cnn_out;
        for l in 0..c.lstm_layers {
            let layer = LstmLayer::init(
                &mut store,
                &alloc::format!("lstm.layer{}", l + 1),
                width,
                c.lstm_hidden,
                true,
                rng,
            )?;
            width = layer.output_dim();
            lstm.push(layer);
        }
        let [t_in, t1, t2] = trace.trunk;
        let fc1 = Dense::init(&mut store, "fc1", t_in, t1, true, rng)?;
        let fc2 = Dense::init(&mut store, "fc2", t1, t2, true, rng)?;
        let cls_head = Dense::init(&mut store, "head.cls", t2, 2, true, rng)?;
        let reg_head = Dense::init(&mut store, "head.reg", t2, 1, true, rng)?;
        let layout = Layout {
            acoustic_proj,
            textual_proj,
            speaker,
            stem,
            blocks,
            lstm,
            fc1,
            fc2,
            cls_head,
            reg_head,
        };
        Ok(Self {
            config,
            trace,
            params: store,
            layout,
        })
    }

    /// Rebuilds a model from a configuration and previously saved weights.
    pub fn from_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut rng = crate::rng::substream(0, crate::rng::INIT, 0);
        let mut model = Self::new(config, &mut rng)?;
        model.params.load_from(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn trace(&self) -> &ShapeTrace {
        &self.trace
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Zeroes both output heads, weights and biases.
    pub fn zero_heads(&mut self) {
        for d in [self.layout.cls_head, self.layout.reg_head] {
            self.params.get_mut(d.weight).data_mut().fill(0.0);
            if let Some(b) = d.bias {
                self.params.get_mut(b).data_mut().fill(0.0);
            }
        }
    }

    /// Drops out raw features (training only), then maps each used modality
    /// and the speaker index to `1 × d_model` rows. The speaker row is last.
    pub fn project_inputs<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        utt: &Utterance,
        train: bool,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        let c = &self.config;
        let mut streams = Vec::with_capacity(3);
        for (proj, feats, want, what) in [
            (&self.layout.acoustic_proj, &utt.acoustic, c.acoustic_dim, "acoustic"),
            (&self.layout.textual_proj, &utt.textual, c.textual_dim, "textual"),
        ] {
            let Some(proj) = proj else { continue };
            if feats.len() != want {
                return Err(shape_err!("{what} features have width {}, model expects {want}", feats.len()));
            }
            let x = tape.input(Tensor::row(feats));
            let x = tape.dropout(x, c.dropout, train, rng)?;
            streams.push(proj.forward(tape, &self.params, x)?);
        }
        let table = tape.param(&self.params, self.layout.speaker);
        streams.push(tape.slice(table, 0, utt.speaker.index(), 1)?);
        Ok(streams)
    }

    /// Encodes one utterance from its projected streams (speaker last) into a
    /// `1 × cnn_out` row.
    pub fn encode_utterance(&self, tape: &mut Tape, streams: &[Var]) -> Result<Var> {
        let c = &self.config;
        if streams.len() != c.input_channels() {
            return Err(shape_err!(
                "{} streams for {} input channels",
                streams.len(),
                c.input_channels()
            ));
        }
        let (features, speaker) = streams.split_at(streams.len() - 1);
        let mut rows = Vec::with_capacity(streams.len());
        for &s in features {
            let attended = if c.attention {
                // Each projected vector is a length-d_model sequence of scalars.
                let col = tape.reshape(s, &[c.d_model, 1])?;
                let out = sdp_self_attention(tape, col)?;
                tape.reshape(out, &[1, c.d_model])?
            } else {
                s
            };
            rows.push(attended);
        }
        rows.push(speaker[0]);
        let x = tape.concat(&rows, 0)?;
        let p = c.padding();
        let mut h = self.layout.stem.forward(tape, &self.params, x, p)?;
        h = tape.relu(h);
        for (block, shape) in self.layout.blocks.iter().zip(&self.trace.blocks) {
            if tape.shape(h) != [shape.in_channels, shape.in_len] {
                return Err(shape_err!(
                    "block input {:?}, expected [{}, {}]",
                    tape.shape(h),
                    shape.in_channels,
                    shape.in_len
                ));
            }
            h = block.conv1.forward(tape, &self.params, h, p)?;
            h = tape.relu(h);
            h = se_block_gate(tape, &self.params, h, &block.se)?;
            h = block.conv2.forward(tape, &self.params, h, p)?;
            h = tape.relu(h);
            if tape.shape(h) != [shape.out_channels, shape.out_len] {
                return Err(shape_err!(
                    "block output {:?}, expected [{}, {}]",
                    tape.shape(h),
                    shape.out_channels,
                    shape.out_len
                ));
            }
        }
        let pooled = tape.global_max_pool(h)?;
        tape.reshape(pooled, &[1, self.trace.cnn_out])
    }

    /// Runs the bi-LSTM stack over `T × cnn_out` utterance embeddings, max-pools
    /// the last layer over time, appends the hand-crafted vector and applies
    /// the FC trunk and both heads.
    pub fn encode_dialogue(&self, tape: &mut Tape, utt_embs: Var, hc: &[f64]) -> Result<Outputs> {
        let mut h = utt_embs;
        for layer in &self.layout.lstm {
            h = lstm_layer(tape, &self.params, h, layer)?;
        }
        let pooled = tape.max(h, 0)?;
        let pooled = tape.reshape(pooled, &[1, self.trace.lstm_out])?;
        let fused = if self.config.use_hc && self.config.hc_dim > 0 {
            if hc.len() != self.config.hc_dim {
                return Err(shape_err!(
                    "hand-crafted vector has width {}, model expects {}",
                    hc.len(),
                    self.config.hc_dim
                ));
            }
            let hc = tape.input(Tensor::row(hc));
            tape.concat(&[pooled, hc], 1)?
        } else {
            pooled
        };
        let z = self.layout.fc1.forward(tape, &self.params, fused)?;
        let z = tape.relu(z);
        let z = self.layout.fc2.forward(tape, &self.params, z)?;
        let z = tape.relu(z);
        let logits = self.layout.cls_head.forward(tape, &self.params, z)?;
        let reg = self.layout.reg_head.forward(tape, &self.params, z)?;
        let mmse01 = tape.sigmoid(reg);
        Ok(Outputs { logits, mmse01 })
    }

    /// Full forward pass over `utterances` (any length ≥ 1).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        utterances: &[Utterance],
        hc: &[f64],
        train: bool,
        rng: &mut R,
    ) -> Result<Outputs> {
        if utterances.is_empty() {
            return Err(Error::Empty("dialogue window"));
        }
        let mut embs = Vec::with_capacity(utterances.len());
        for u in utterances {
            let streams = self.project_inputs(tape, u, train, rng)?;
            embs.push(self.encode_utterance(tape, &streams)?);
        }
        let embs = tape.concat(&embs, 0)?;
        self.encode_dialogue(tape, embs, hc)
    }

    /// Inference over every utterance of `d`.
    pub fn predict(&self, d: &Dialogue) -> Result<Prediction> {
        let mut tape = Tape::new();
        // Dropout is inactive at inference, so this stream is never drawn.
        let mut rng = crate::rng::substream(0, crate::rng::DROPOUT, 0);
        let out = self.forward(&mut tape, &d.utterances, &d.hc, false, &mut rng)?;
        Ok(prediction_from(
            tape.value(out.logits).data(),
            tape.value(out.mmse01).item(),
        ))
    }
}

/// Converts raw head outputs into probabilities and an MMSE score.
pub fn prediction_from(logits: &[f64], mmse01: f64) -> Prediction {
    let p_ad = sigmoid(logits[1] - logits[0]);
    Prediction {
        p_ad,
        p_non_ad: 1.0 - p_ad,
        mmse: f64::from(MMSE_MAX) * mmse01,
    }
}

/// Utterance with the speaker tag only, for shape-level tests and examples.
pub fn blank_utterance(config: &ModelConfig, speaker: Speaker) -> Utterance {
    Utterance::new(
        speaker,
        alloc::vec![0.0; config.acoustic_dim],
        alloc::vec![0.0; config.textual_dim],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use alloc::vec;

    #[test]
    fn full_size_shape_trace() {
        let t = ModelConfig::full(128, 1024, 23).shape_trace().unwrap();
        assert_eq!(t.length_trace, vec![1024, 256, 64, 16]);
        assert_eq!(t.channel_trace, vec![3, 32, 128, 512, 1024]);
        assert_eq!(t.trunk, [1047, 261, 65]);
        assert_eq!(t.cnn_out, 1024);
    }

    #[test]
    fn trunk_without_hc() {
        let mut c = ModelConfig::full(128, 1024, 23);
        c.use_hc = false;
        assert_eq!(c.shape_trace().unwrap().trunk, [1024, 256, 64]);
    }

    #[test]
    fn unimodal_has_two_input_channels() {
        let mut c = ModelConfig::full(128, 1024, 23);
        c.modality = Modality::Acoustic;
        assert_eq!(c.shape_trace().unwrap().channel_trace[0], 2);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = ModelConfig::toy(8, 8, 4);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(64, 8, 4);
        c.modality = Modality::Acoustic;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(8, 8, 4);
        c.channel_schedule.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_heads_give_even_odds_and_midpoint_mmse() {
        let cfg = ModelConfig::toy(6, 5, 3);
        let mut m = CrnnModel::new(cfg.clone(), &mut substream(1, "t", 0)).unwrap();
        m.zero_heads();
        let d = Dialogue::new(
            "x".into(),
            vec![blank_utterance(&cfg, Speaker::Participant)],
            vec![0.1, 0.2, 0.3],
            None,
            None,
        )
        .unwrap();
        let p = m.predict(&d).unwrap();
        assert_eq!(p.p_ad, 0.5);
        assert_eq!(p.mmse, 15.0);
    }

    #[test]
    fn projection_of_zero_is_bias() {
        let cfg = ModelConfig::toy(6, 5, 3);
        let m = CrnnModel::new(cfg.clone(), &mut substream(2, "t", 0)).unwrap();
        let mut tape = Tape::new();
        let u = blank_utterance(&cfg, Speaker::Investigator);
        let streams = m
            .project_inputs(&mut tape, &u, false, &mut substream(2, "d", 0))
            .unwrap();
        assert_eq!(streams.len(), 3);
        let bias = m.params().by_name("proj.acoustic.bias").unwrap();
        assert_eq!(tape.value(streams[0]).data(), bias.data());
        let table = m.params().by_name("speaker.embedding").unwrap();
        assert_eq!(tape.value(streams[2]).data(), &table.data()[..32]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = ModelConfig::toy(6, 5, 3);
        let m = CrnnModel::new(cfg, &mut substream(3, "t", 0)).unwrap();
        let u = Utterance::new(Speaker::Participant, vec![0.0; 7], vec![0.0; 5]);
        let d = Dialogue::new("x".into(), vec![u], vec![0.0; 3], None, None).unwrap();
        assert!(matches!(m.predict(&d), Err(Error::Shape(_))));
    }
}
