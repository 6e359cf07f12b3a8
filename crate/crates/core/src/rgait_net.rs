//! Next-frame silhouette reconstructor.
//!
//! A time-distributed convolutional encoder feeds two stacked convolutional
//! LSTMs. The decoder upsamples the final recurrent states and merges them
//! with skip connections from the encoder before a sigmoid output layer.
//!
//! | layer | input | resolution |
//! |-------|-------|------------|
//! | conv1 + bn, pool1 | frame | H |
//! | conv2 + bn, pool2, dropout | conv1 | H/2 |
//! | lstm1 gates | pool2, h1 | H/4 |
//! | pool3 | h1 | H/4 |
//! | lstm2 gates | pool3, h2 | H/8 |
//! | pool4 | h2 (last step) | H/8 |
//! | conv5 + bn | up(pool4), h2 | H/8 |
//! | conv6 + bn, dropout | up(conv5), h1 | H/4 |
//! | conv7, sigmoid | up(conv6), conv1 of last frame | H |

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{apply_bn_updates, BatchNorm2d, Conv2d, ParamStore, RmsProp, Session, Tensor, Var};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

pub const MODEL_VERSION: &str = "rgait-net-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructorArchitecture {
    pub input_height: usize,
    pub input_width: usize,
    pub encoder_channels: [usize; 2],
    pub lstm_channels: [usize; 2],
    pub decoder_channels: [usize; 2],
    pub output_kernel: usize,
    pub dropout: f32,
    /// Std of the Gaussian noise added to inputs while training.
    pub noise_std: f32,
    /// Longest context the model consumes; older frames are ignored.
    pub max_context: usize,
    pub reduced: bool,
}

impl ReconstructorArchitecture {
    pub fn full(input_height: usize, input_width: usize) -> Self {
        Self {
            input_height,
            input_width,
            encoder_channels: [32, 64],
            lstm_channels: [64, 64],
            decoder_channels: [64, 32],
            output_kernel: 3,
            dropout: 0.2,
            noise_std: 0.05,
            max_context: 10,
            reduced: false,
        }
    }

    pub fn reduced(input_height: usize, input_width: usize) -> Self {
        Self {
            encoder_channels: [8, 16],
            lstm_channels: [16, 16],
            decoder_channels: [16, 16],
            output_kernel: 5,
            reduced: true,
            ..Self::full(input_height, input_width)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.input_height, self.input_width);
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Config(format!("reconstructor input {h}x{w} must be a positive multiple of 16")));
        }
        let widths = self.encoder_channels.iter().chain(&self.lstm_channels).chain(&self.decoder_channels);
        if widths.copied().any(|c| c == 0) || self.output_kernel % 2 == 0 {
            return Err(Error::Config("channel widths must be positive and the output kernel odd".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.noise_std >= 0.0) || self.max_context == 0 {
            return Err(Error::Config("invalid dropout, noise or context length".into()));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> ArchitectureDescriptor {
        ArchitectureDescriptor {
            conv_layers: 7,
            pooling_layers: 4,
            time_distributed_pooling: true,
            recurrent_layers: 2,
            batch_norm_layers: 4,
            dropout: self.dropout,
            noise_std: self.noise_std,
            skip_connections: vec![
                "conv1 -> conv7".into(),
                "lstm1 -> conv6".into(),
                "lstm2 -> conv5".into(),
            ],
            reduced: self.reduced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub conv_layers: usize,
    pub pooling_layers: usize,
    pub time_distributed_pooling: bool,
    pub recurrent_layers: usize,
    pub batch_norm_layers: usize,
    pub dropout: f32,
    pub noise_std: f32,
    pub skip_connections: Vec<String>,
    pub reduced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct ConvLstm {
    gates: Conv2d,
    hidden: usize,
}

impl ConvLstm {
    fn new(store: &mut ParamStore, name: &str, cin: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let gates = Conv2d::new(store, name, cin + hidden, 4 * hidden, 3, rng);
        // forget gate starts open
        store.get_mut(gates.bias()).data[hidden..2 * hidden].fill(1.0);
        Self { gates, hidden }
    }

    fn step(&self, s: &mut Session<'_>, x: Var, state: (Var, Var)) -> (Var, Var) {
        let (h, c) = state;
        let joined = s.graph.concat_channels(&[x, h]);
        let z = self.gates.forward(s, joined);
        let n = self.hidden;
        let (zi, zf) = (s.graph.slice_channels(z, 0, n), s.graph.slice_channels(z, n, n));
        let (zo, zg) = (s.graph.slice_channels(z, 2 * n, n), s.graph.slice_channels(z, 3 * n, n));
        let (i, f, o) = (s.graph.sigmoid(zi), s.graph.sigmoid(zf), s.graph.sigmoid(zo));
        let g = s.graph.tanh(zg);
        let fc = s.graph.mul(f, c);
        let ig = s.graph.mul(i, g);
        let c = s.graph.add(fc, ig);
        let tc = s.graph.tanh(c);
        (s.graph.mul(o, tc), c)
    }

    fn zero_state(&self, s: &mut Session<'_>, n: usize, h: usize, w: usize) -> (Var, Var) {
        let h0 = s.input(Tensor::zeros(&[n, self.hidden, h, w]));
        let c0 = s.input(Tensor::zeros(&[n, self.hidden, h, w]));
        (h0, c0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RgaitNet {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    lstm1: ConvLstm,
    lstm2: ConvLstm,
    conv5: Conv2d,
    bn5: BatchNorm2d,
    conv6: Conv2d,
    bn6: BatchNorm2d,
    conv7: Conv2d,
}

impl RgaitNet {
    fn build(a: &ReconstructorArchitecture, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let [e1, e2] = a.encoder_channels;
        let [l1, l2] = a.lstm_channels;
        let [d1, d2] = a.decoder_channels;
        Self {
            conv1: Conv2d::new(store, "conv1", 1, e1, 3, rng),
            bn1: BatchNorm2d::new(store, "bn1", e1),
            conv2: Conv2d::new(store, "conv2", e1, e2, 3, rng),
            bn2: BatchNorm2d::new(store, "bn2", e2),
            lstm1: ConvLstm::new(store, "lstm1", e2, l1, rng),
            lstm2: ConvLstm::new(store, "lstm2", l1, l2, rng),
            conv5: Conv2d::new(store, "conv5", 2 * l2, d1, 3, rng),
            bn5: BatchNorm2d::new(store, "bn5", d1),
            conv6: Conv2d::new(store, "conv6", d1 + l1, d2, 3, rng),
            bn6: BatchNorm2d::new(store, "bn6", d2),
            conv7: Conv2d::new(store, "conv7", d2 + e1, 1, a.output_kernel, rng),
        }
    }

    /// `x` holds `t` steps of `n` frames, step-major: row `i * n + j` is
    /// step `i` of sample `j`. Returns next-frame probabilities `[n, 1, H, W]`.
    fn forward(&self, s: &mut Session<'_>, a: &ReconstructorArchitecture, x: Var, t: usize, n: usize) -> Var {
        let (h, w) = (a.input_height, a.input_width);
        let c1 = self.conv1.forward(s, x);
        let c1 = self.bn1.forward(s, c1);
        let a1 = s.graph.relu(c1);
        let p1 = s.graph.max_pool2(a1);
        let c2 = self.conv2.forward(s, p1);
        let c2 = self.bn2.forward(s, c2);
        let a2 = s.graph.relu(c2);
        let p2 = s.graph.max_pool2(a2);
        let enc = s.dropout(p2, a.dropout);

        let mut st1 = self.lstm1.zero_state(s, n, h / 4, w / 4);
        let mut st2 = self.lstm2.zero_state(s, n, h / 8, w / 8);
        for i in 0..t {
            let xi = s.graph.slice_batch(enc, i * n, n);
            st1 = self.lstm1.step(s, xi, st1);
            let p3 = s.graph.max_pool2(st1.0);
            st2 = self.lstm2.step(s, p3, st2);
        }
        let (h1, h2) = (st1.0, st2.0);

        let p4 = s.graph.max_pool2(h2);
        let u4 = s.graph.upsample(p4, 2);
        let m5 = s.graph.concat_channels(&[u4, h2]);
        let c5 = self.conv5.forward(s, m5);
        let c5 = self.bn5.forward(s, c5);
        let a5 = s.graph.relu(c5);

        let u5 = s.graph.upsample(a5, 2);
        let m6 = s.graph.concat_channels(&[u5, h1]);
        let c6 = self.conv6.forward(s, m6);
        let c6 = self.bn6.forward(s, c6);
        let a6 = s.graph.relu(c6);
        let a6 = s.dropout(a6, a.dropout);

        let u6 = s.graph.upsample(a6, 4);
        let last = s.graph.slice_batch(a1, (t - 1) * n, n);
        let m7 = s.graph.concat_channels(&[u6, last]);
        let c7 = self.conv7.forward(s, m7);
        s.graph.sigmoid(c7)
    }
}

/// Anything that can extend a silhouette sequence by one frame.
pub trait FramePredictor {
    fn predict_next(&self, context: &[SilhouetteFrame]) -> Result<SilhouetteFrame>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructorModel {
    pub architecture: ReconstructorArchitecture,
    net: RgaitNet,
    params: ParamStore,
    pub version: String,
}

impl ReconstructorModel {
    pub fn new(architecture: ReconstructorArchitecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let net = RgaitNet::build(&architecture, &mut params, &mut rng);
        Ok(Self {
            architecture,
            net,
            params,
            version: MODEL_VERSION.to_string(),
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn descriptor(&self) -> ArchitectureDescriptor {
        self.architecture.descriptor()
    }

    pub fn check_integrity(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Checkpoint(format!(
                "reconstructor version {:?} does not match {MODEL_VERSION:?}",
                self.version
            )));
        }
        let fresh = Self::new(self.architecture.clone(), 0)?;
        if !fresh.params.same_layout(&self.params) || fresh.net != self.net {
            return Err(Error::Checkpoint("reconstructor parameters do not match its architecture".into()));
        }
        Ok(())
    }

    fn check_frame(&self, f: &SilhouetteFrame) -> Result<()> {
        let (h, w) = (self.architecture.input_height, self.architecture.input_width);
        if f.dims() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected: format!("{h}x{w}"),
                found: format!("{}x{}", f.height(), f.width()),
            });
        }
        Ok(())
    }

    /// Real-valued prediction for the frame following `context`.
    pub fn predict_probabilities(&self, context: &[SilhouetteFrame]) -> Result<SilhouetteFrame> {
        if context.is_empty() {
            return Err(Error::InvalidInput("prediction needs at least one context frame".into()));
        }
        let context = &context[context.len().saturating_sub(self.architecture.max_context)..];
        let (h, w) = (self.architecture.input_height, self.architecture.input_width);
        let mut data = Vec::with_capacity(context.len() * h * w);
        for f in context {
            self.check_frame(f)?;
            data.extend_from_slice(f.pixels());
        }
        let mut s = Session::inference(&self.params);
        let x = s.input(Tensor::new(vec![context.len(), 1, h, w], data));
        let y = self.net.forward(&mut s, &self.architecture, x, context.len(), 1);
        SilhouetteFrame::new(h, w, s.graph.value(y).data.clone())
    }
}

impl FramePredictor for ReconstructorModel {
    fn predict_next(&self, context: &[SilhouetteFrame]) -> Result<SilhouetteFrame> {
        self.predict_probabilities(context)
    }
}

pub fn predict_next(model: &ReconstructorModel, context: &[SilhouetteFrame]) -> Result<SilhouetteFrame> {
    model.predict_probabilities(context)
}

/// Every `(k preceding frames, next frame)` window of a sequence.
pub fn training_pairs(seq: &SilhouetteSequence, k: usize) -> Result<Vec<(Vec<SilhouetteFrame>, SilhouetteFrame)>> {
    if k == 0 || seq.len() <= k {
        return Err(Error::InvalidInput(format!(
            "sequence of length {} has no windows of context {k}",
            seq.len()
        )));
    }
    let f = seq.frames();
    Ok((k..f.len()).map(|t| (f[t - k..t].to_vec(), f[t].clone())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructorTrainConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub lambda_rec: f64,
    pub lambda_dice: f64,
    pub context_min: usize,
    pub context_max: usize,
    pub batch_size: usize,
    /// Windows drawn per epoch; `None` uses one pass over all windows.
    pub windows_per_epoch: Option<usize>,
    /// Stop once the epoch loss moved less than this for `plateau_patience`
    /// consecutive epochs.
    pub plateau_epsilon: Option<f64>,
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for ReconstructorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 62,
            learning_rate: 1e-3,
            lambda_rec: losses::DEFAULT_LAMBDAS.0,
            lambda_dice: losses::DEFAULT_LAMBDAS.1,
            context_min: 5,
            context_max: 10,
            batch_size: 16,
            windows_per_epoch: None,
            plateau_epsilon: None,
            plateau_patience: 3,
            seed: 0,
        }
    }
}

impl ReconstructorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("epochs, batch size and learning rate must be positive".into()));
        }
        if self.context_min == 0 || self.context_min > self.context_max {
            return Err(Error::Config(format!(
                "context range [{}, {}] is empty",
                self.context_min, self.context_max
            )));
        }
        if self.windows_per_epoch == Some(0) || self.plateau_patience == 0 {
            return Err(Error::Config("windows per epoch and plateau patience must be positive".into()));
        }
        Ok(())
    }
}

/// Trains a reconstructor on clean sequences. The model's context limit is
/// taken from `config.context_max`.
pub fn train_reconstructor(
    sequences: &[SilhouetteSequence],
    mut architecture: ReconstructorArchitecture,
    config: &ReconstructorTrainConfig,
) -> Result<(ReconstructorModel, TrainLog)> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(Error::InvalidInput("reconstructor training corpus is empty".into()));
    }
    if let Some(short) = sequences.iter().find(|s| s.len() <= config.context_max) {
        return Err(Error::InvalidInput(format!(
            "sequence {}/{} has {} frames; training needs more than {}",
            short.subject_id,
            short.sequence_id,
            short.len(),
            config.context_max
        )));
    }
    architecture.max_context = config.context_max;
    let mut model = ReconstructorModel::new(architecture, config.seed)?;
    for s in sequences {
        s.frames().iter().try_for_each(|f| model.check_frame(f))?;
    }
    let a = model.architecture.clone();
    let (h, w) = (a.input_height, a.input_width);
    let hw = h * w;

    // windows[k - context_min] lists (sequence, target) pairs with target >= k
    let windows: Vec<Vec<(usize, usize)>> = (config.context_min..=config.context_max)
        .map(|k| {
            sequences
                .iter()
                .enumerate()
                .flat_map(|(si, s)| (k..s.len()).map(move |t| (si, t)))
                .collect()
        })
        .collect();
    let per_epoch = config.windows_per_epoch.unwrap_or(windows[0].len());
    let batches = per_epoch.div_ceil(config.batch_size);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let noise = Normal::new(0.0f32, a.noise_std.max(f32::MIN_POSITIVE)).expect("finite std");
    let mut opt = RmsProp::new(config.learning_rate);
    let mut log = TrainLog {
        epoch_losses: Vec::new(),
        stopped_early: false,
    };
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for _ in 0..batches {
            let k = rng.random_range(config.context_min..=config.context_max);
            let pool = &windows[k - config.context_min];
            let n = config.batch_size.min(pool.len());
            let picks: Vec<(usize, usize)> = index::sample(&mut rng, pool.len(), n).iter().map(|i| pool[i]).collect();
            let mut x = vec![0.0f32; k * n * hw];
            let mut y = Vec::with_capacity(n * hw);
            for (j, &(si, t)) in picks.iter().enumerate() {
                let f = sequences[si].frames();
                for i in 0..k {
                    x[(i * n + j) * hw..(i * n + j + 1) * hw].copy_from_slice(f[t - k + i].pixels());
                }
                y.extend_from_slice(f[t].pixels());
            }
            if a.noise_std > 0.0 {
                x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            let (loss, grads, bn) = {
                let mut s = Session::training(&model.params, &mut rng);
                let xv = s.input(Tensor::new(vec![k * n, 1, h, w], x));
                let pred = model.net.forward(&mut s, &a, xv, k, n);
                let loss = s.graph.recon_loss(pred, &y, config.lambda_rec, config.lambda_dice);
                let value = f64::from(s.graph.value(loss).data[0]);
                s.graph.backward(loss);
                (value, s.param_grads(), s.take_bn_updates())
            };
            opt.step(&mut model.params, &grads);
            apply_bn_updates(&mut model.params, bn);
            total += loss;
        }
        let epoch_loss = total / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::InvalidInput(format!("reconstructor loss diverged at epoch {}", epoch + 1)));
        }
        log.epoch_losses.push(epoch_loss);
        if let Some(eps) = config.plateau_epsilon {
            let l = &log.epoch_losses;
            let p = config.plateau_patience;
            if l.len() > p && l.windows(2).rev().take(p).all(|d| (d[1] - d[0]).abs() < eps) {
                log.stopped_early = epoch + 1 < config.epochs;
                break;
            }
        }
    }
    Ok((model, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Replaces every masked frame, in order, with the binarized prediction
/// from all frames before it (already repaired ones included).
pub fn reconstruct_sequence<P: FramePredictor + ?Sized>(
    predictor: &P,
    seq: &SilhouetteSequence,
) -> Result<SilhouetteSequence> {
    let mask = seq
        .mask()
        .ok_or_else(|| Error::InvalidInput("sequence has no occlusion mask".into()))?
        .to_vec();
    if mask.first() == Some(&true) {
        return Err(Error::InvalidInput("the first frame is occluded; nothing to predict from".into()));
    }
    let mut frames = seq.frames().to_vec();
    for i in 0..frames.len() {
        if mask[i] {
            frames[i] = predictor.predict_next(&frames[..i])?.binarized();
        }
    }
    seq.with_frames(frames)?.with_mask(vec![false; mask.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{generate_sequences, ToyWalkerSpec};
    use std::cell::RefCell;

    struct Recorder {
        calls: RefCell<Vec<usize>>,
    }

    impl FramePredictor for Recorder {
        fn predict_next(&self, context: &[SilhouetteFrame]) -> Result<SilhouetteFrame> {
            self.calls.borrow_mut().push(context.len());
            let (h, w) = context[0].dims();
            Ok(SilhouetteFrame::from_fn(h, w, |_, _| 0.7))
        }
    }

    fn seq(len: usize) -> SilhouetteSequence {
        let frames = (0..len)
            .map(|i| SilhouetteFrame::from_fn(4, 4, |y, _| f32::from(y == i % 4)))
            .collect();
        SilhouetteSequence::new(frames, "a", "b").unwrap()
    }

    #[test]
    fn descriptor_counts() {
        for a in [ReconstructorArchitecture::full(128, 96), ReconstructorArchitecture::reduced(32, 32)] {
            let d = a.descriptor();
            assert_eq!((d.conv_layers, d.pooling_layers), (7, 4));
            assert!(d.time_distributed_pooling);
            assert_eq!(d.reduced, a.reduced);
            assert_eq!((d.dropout, d.noise_std), (0.2, 0.05));
        }
        let m = ReconstructorModel::new(ReconstructorArchitecture::reduced(32, 32), 0).unwrap();
        let convs = m.params().entries.iter().filter(|e| e.tensor.shape.len() == 4).count();
        assert_eq!(convs, 7);
    }

    #[test]
    fn pair_counts() {
        assert_eq!(training_pairs(&seq(10), 5).unwrap().len(), 5);
        assert!(training_pairs(&seq(3), 5).is_err());
        let pairs = training_pairs(&seq(7), 5).unwrap();
        assert_eq!(pairs[1].0, seq(7).frames()[1..6].to_vec());
        assert_eq!(pairs[1].1, seq(7).frames()[6]);
    }

    #[test]
    fn repair_calls_once_per_masked_frame_with_full_prefix() {
        let s = seq(8).with_mask(vec![false, false, true, false, true, true, false, false]).unwrap();
        let rec = Recorder {
            calls: RefCell::new(Vec::new()),
        };
        let out = reconstruct_sequence(&rec, &s).unwrap();
        assert_eq!(*rec.calls.borrow(), vec![2, 4, 5]);
        assert_eq!(out.mask().unwrap(), &[false; 8]);
        for i in [2, 4, 5] {
            assert!(out.frames()[i].pixels().iter().all(|&v| v == 1.0));
        }
        for i in [0, 1, 3, 6, 7] {
            assert_eq!(out.frames()[i], s.frames()[i]);
        }
    }

    #[test]
    fn repair_preconditions() {
        let rec = Recorder {
            calls: RefCell::new(Vec::new()),
        };
        assert!(reconstruct_sequence(&rec, &seq(4)).is_err());
        let first = seq(4).with_mask(vec![true, false, false, false]).unwrap();
        assert!(reconstruct_sequence(&rec, &first).is_err());
        let none = seq(4).with_mask(vec![false; 4]).unwrap();
        assert_eq!(reconstruct_sequence(&rec, &none).unwrap().frames(), none.frames());
    }

    #[test]
    fn training_preconditions() {
        let arch = ReconstructorArchitecture::reduced(16, 16);
        let cfg = ReconstructorTrainConfig::default();
        assert!(train_reconstructor(&[], arch.clone(), &cfg).is_err());
        let short = SilhouetteSequence::new(vec![SilhouetteFrame::blank(16, 16); 3], "a", "b").unwrap();
        assert!(train_reconstructor(&[short], arch, &cfg).is_err());
    }

    #[test]
    fn prediction_is_a_probability_map_and_truncates_context() {
        let m = ReconstructorModel::new(ReconstructorArchitecture::reduced(16, 16), 1).unwrap();
        let frames: Vec<SilhouetteFrame> = (0..14)
            .map(|i| SilhouetteFrame::from_fn(16, 16, |y, x| f32::from((x + y + i) % 3 == 0)))
            .collect();
        let p = m.predict_probabilities(&frames).unwrap();
        assert!(p.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(p, m.predict_probabilities(&frames[4..]).unwrap());
        assert!(m.predict_probabilities(&[]).is_err());
        assert!(m.predict_probabilities(&[SilhouetteFrame::blank(8, 8)]).is_err());
    }

    #[test]
    fn short_training_reduces_loss_and_is_deterministic() {
        let spec = ToyWalkerSpec {
            identities: 2,
            sequences_per_identity: 2,
            gallery_per_identity: 2,
            height: 16,
            width: 16,
            ..Default::default()
        };
        let seqs: Vec<SilhouetteSequence> = generate_sequences(&spec).unwrap().into_iter().map(|s| s.0).collect();
        let cfg = ReconstructorTrainConfig {
            epochs: 6,
            batch_size: 8,
            windows_per_epoch: Some(32),
            seed: 5,
            ..Default::default()
        };
        let arch = ReconstructorArchitecture::reduced(16, 16);
        let (m, log) = train_reconstructor(&seqs, arch.clone(), &cfg).unwrap();
        assert_eq!(log.epoch_losses.len(), 6);
        assert!(log.epoch_losses[5] < log.epoch_losses[0], "{:?}", log.epoch_losses);
        let (again, log2) = train_reconstructor(&seqs, arch, &cfg).unwrap();
        assert_eq!(log, log2);
        assert_eq!(m, again);
        m.check_integrity().unwrap();
    }
}
