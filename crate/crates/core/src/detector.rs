//! Per-frame occlusion classifier.
//!
//! A VGG-style convolutional network with two output nodes. The node
//! outputs are exponentiated into strictly positive scores `(g_occ, g_clean)`
//! and normalized by their sum to obtain the class probabilities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses;
use crate::nn::{two_class_probabilities, Conv2d, Linear, ParamStore, RmsProp, Session, Tensor, Var};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

pub const MODEL_VERSION: &str = "detector-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorArchitecture {
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of each convolution block; every block ends in 2x2 pooling.
    pub block_channels: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    /// Widths of the hidden fully connected layers.
    pub hidden: Vec<usize>,
    /// True for narrowed variants of the 16-layer network.
    pub reduced: bool,
}

impl DetectorArchitecture {
    /// The 13-conv + 3-dense layout of VGG-16.
    pub fn vgg16(input_height: usize, input_width: usize) -> Self {
        Self {
            input_height,
            input_width,
            block_channels: vec![64, 128, 256, 512, 512],
            convs_per_block: vec![2, 2, 3, 3, 3],
            hidden: vec![4096, 4096],
            reduced: false,
        }
    }

    /// Narrow desk-scale variant.
    pub fn reduced(input_height: usize, input_width: usize) -> Self {
        Self {
            input_height,
            input_width,
            block_channels: vec![8, 16, 16],
            convs_per_block: vec![1, 1, 1],
            hidden: vec![32],
            reduced: true,
        }
    }

    pub fn weight_layers(&self) -> usize {
        self.convs_per_block.iter().sum::<usize>() + self.hidden.len() + 1
    }

    fn validate(&self) -> Result<()> {
        let f = 1 << self.block_channels.len();
        if self.block_channels.len() != self.convs_per_block.len() || self.block_channels.is_empty() {
            return Err(Error::Config("detector block lists must be non-empty and equally long".into()));
        }
        if self.input_height == 0 || self.input_width == 0 || self.input_height % f != 0 || self.input_width % f != 0 {
            return Err(Error::Config(format!(
                "detector input {}x{} must be a positive multiple of {f}",
                self.input_height, self.input_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectorNet {
    convs: Vec<Vec<Conv2d>>,
    dense: Vec<Linear>,
    head: Linear,
}

impl DetectorNet {
    fn build(arch: &DetectorArchitecture, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let mut cin = 1;
        let mut convs = Vec::new();
        for (b, (&cout, &n)) in arch.block_channels.iter().zip(&arch.convs_per_block).enumerate() {
            let mut block = Vec::new();
            for i in 0..n {
                block.push(Conv2d::new(store, &format!("block{b}.conv{i}"), cin, cout, 3, rng));
                cin = cout;
            }
            convs.push(block);
        }
        let f = 1 << arch.block_channels.len();
        let mut din = cin * (arch.input_height / f) * (arch.input_width / f);
        let mut dense = Vec::new();
        for (i, &h) in arch.hidden.iter().enumerate() {
            dense.push(Linear::new(store, &format!("fc{i}"), din, h, rng));
            din = h;
        }
        let head = Linear::new(store, "head", din, 2, rng);
        Self { convs, dense, head }
    }

    fn forward(&self, s: &mut Session<'_>, x: Var) -> Var {
        let mut h = x;
        for block in &self.convs {
            for conv in block {
                h = conv.forward(s, h);
                h = s.graph.relu(h);
            }
            h = s.graph.max_pool2(h);
        }
        let n = s.graph.value(h).shape[0];
        let d = s.graph.value(h).len() / n;
        h = s.graph.reshape(h, vec![n, d]);
        for fc in &self.dense {
            h = fc.forward(s, h);
            h = s.graph.relu(h);
        }
        self.head.forward(s, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub architecture: DetectorArchitecture,
    net: DetectorNet,
    params: ParamStore,
    pub version: String,
}

/// Normalizes two raw non-negative scores into `(p_occluded, p_clean)`.
pub fn probabilities_from_scores(g_occluded: f64, g_clean: f64) -> Result<(f64, f64)> {
    let ok = |g: f64| g.is_finite() && g >= 0.0;
    if !ok(g_occluded) || !ok(g_clean) || g_occluded + g_clean <= 0.0 {
        return Err(Error::DegenerateScores { g_occluded, g_clean });
    }
    let total = g_occluded + g_clean;
    Ok((g_occluded / total, g_clean / total))
}

impl DetectorModel {
    pub fn new(architecture: DetectorArchitecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let net = DetectorNet::build(&architecture, &mut params, &mut rng);
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

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Rejects checkpoints whose version or parameter layout does not match
    /// a freshly built network of the stored architecture.
    pub fn check_integrity(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Checkpoint(format!(
                "detector version {:?} does not match {MODEL_VERSION:?}",
                self.version
            )));
        }
        let fresh = Self::new(self.architecture.clone(), 0)?;
        if !fresh.params.same_layout(&self.params) || fresh.net != self.net {
            return Err(Error::Checkpoint("detector parameters do not match its architecture".into()));
        }
        Ok(())
    }

    fn batch(&self, frames: &[&SilhouetteFrame]) -> Result<Tensor> {
        let (h, w) = (self.architecture.input_height, self.architecture.input_width);
        let mut data = Vec::with_capacity(frames.len() * h * w);
        for f in frames {
            if f.dims() != (h, w) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{h}x{w}"),
                    found: format!("{}x{}", f.height(), f.width()),
                });
            }
            data.extend_from_slice(f.pixels());
        }
        Ok(Tensor::new(vec![frames.len(), 1, h, w], data))
    }

    /// Raw node outputs `[n, 2]` for a batch of frames.
    pub fn logits(&self, frames: &[&SilhouetteFrame]) -> Result<Vec<(f64, f64)>> {
        let x = self.batch(frames)?;
        let mut s = Session::inference(&self.params);
        let xv = s.input(x);
        let out = self.net.forward(&mut s, xv);
        Ok(s.graph
            .value(out)
            .data
            .chunks(2)
            .map(|z| (f64::from(z[0]), f64::from(z[1])))
            .collect())
    }

    /// Strictly positive scores `(g_occ, g_clean)`, scaled so the larger is 1.
    pub fn scores(&self, frame: &SilhouetteFrame) -> Result<(f64, f64)> {
        let (z0, z1) = self.logits(&[frame])?[0];
        let m = z0.max(z1);
        Ok(((z0 - m).exp(), (z1 - m).exp()))
    }

    pub fn class_probabilities(&self, frame: &SilhouetteFrame) -> Result<(f64, f64)> {
        let (g1, g2) = self.scores(frame)?;
        probabilities_from_scores(g1, g2)
    }
}

pub fn class_probabilities(model: &DetectorModel, frame: &SilhouetteFrame) -> Result<(f64, f64)> {
    model.class_probabilities(frame)
}

/// Occluded iff `p_occluded >= 0.5`.
pub fn is_occluded(p_occluded: f64) -> bool {
    p_occluded >= 0.5
}

pub fn detect_sequence(model: &DetectorModel, seq: &SilhouetteSequence) -> Result<Vec<bool>> {
    let frames: Vec<&SilhouetteFrame> = seq.frames().iter().collect();
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    Ok(model
        .logits(&frames)?
        .into_iter()
        .map(|(z0, z1)| is_occluded(two_class_probabilities(z0, z1).0))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorTrainConfig {
    pub max_epochs: usize,
    /// Training stops once the epoch loss changes by less than this.
    pub loss_saturation_epsilon: f64,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DetectorTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            loss_saturation_epsilon: 2e-4,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl DetectorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.loss_saturation_epsilon > 0.0) {
            return Err(Error::Config("loss_saturation_epsilon must be positive".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains a detector on labelled frames (`1` = occluded).
pub fn train_detector(
    frames: &[(SilhouetteFrame, u8)],
    architecture: DetectorArchitecture,
    config: &DetectorTrainConfig,
) -> Result<(DetectorModel, TrainLog)> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidInput("detector training needs at least 2 frames".into()));
    }
    let positives = frames.iter().filter(|f| f.1 == 1).count();
    if positives == 0 || positives == frames.len() {
        return Err(Error::InvalidInput("detector training set holds a single class".into()));
    }
    let mut model = DetectorModel::new(architecture, config.seed)?;
    model.batch(&frames.iter().map(|f| &f.0).collect::<Vec<_>>())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = RmsProp::new(config.learning_rate);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut log = TrainLog {
        epoch_losses: Vec::new(),
        stopped_early: false,
    };
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SilhouetteFrame> = chunk.iter().map(|&i| &frames[i].0).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| frames[i].1).collect();
            let x = model.batch(&batch)?;
            let grads = {
                let mut s = Session::training(&model.params, &mut rng);
                let xv = s.input(x);
                let logits = model.net.forward(&mut s, xv);
                let loss = s.graph.softmax_xent(logits, &labels);
                total += f64::from(s.graph.value(loss).data[0]) * chunk.len() as f64;
                s.graph.backward(loss);
                s.param_grads()
            };
            opt.step(&mut model.params, &grads);
        }
        let epoch_loss = total / frames.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::InvalidInput(format!("detector loss diverged at epoch {}", epoch + 1)));
        }
        log.epoch_losses.push(epoch_loss);
        if let [.., prev, last] = log.epoch_losses.as_slice() {
            if (last - prev).abs() < config.loss_saturation_epsilon {
                log.stopped_early = epoch + 1 < config.max_epochs;
                break;
            }
        }
    }
    Ok((model, log))
}

/// Mean detection loss of a model over labelled frames.
pub fn evaluate_loss(model: &DetectorModel, frames: &[(SilhouetteFrame, u8)]) -> Result<f64> {
    let refs: Vec<&SilhouetteFrame> = frames.iter().map(|f| &f.0).collect();
    let logits = model.logits(&refs)?;
    Ok(logits
        .iter()
        .zip(frames)
        .map(|(&(z0, z1), (_, y))| {
            let (p1, p2) = two_class_probabilities(z0, z1);
            losses::detection_loss(p1, p2, *y)
        })
        .sum::<f64>()
        / frames.len() as f64)
}

/// Counts with the occluded class as positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", actual.len()),
                found: format!("{} predictions", predicted.len()),
            });
        }
        let mut cm = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn confusion_metrics(cm: &ConfusionMatrix) -> ConfusionMetrics {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    ConfusionMetrics {
        precision: ratio(cm.tp, cm.tp + cm.fp),
        recall: ratio(cm.tp, cm.tp + cm.fn_),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}
