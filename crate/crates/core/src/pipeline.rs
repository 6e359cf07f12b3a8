//! Declarative pipeline configuration, checkpoint helpers and the stage
//! runner shared by the command line and the integration tests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Kind};
use crate::detector::{detect_sequence, train_detector, DetectorArchitecture, DetectorModel, DetectorTrainConfig};
use crate::error::{Error, Result};
use crate::eval::{cmc, robustness_study, run_sweep, CmcCurve, GalleryModel, MaskSource, RobustnessReport, SweepConfig};
use crate::features::PcaProjector;
use crate::manifest::{DatasetManifest, Role};
use crate::occlusion::DegreeBin;
use crate::recognizer::{GaitClassifier, RankedPrediction, DEFAULT_TREES};
use crate::rgait_net::{
    reconstruct_sequence, train_reconstructor, ReconstructorArchitecture, ReconstructorModel, ReconstructorTrainConfig,
};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};
use crate::toy::{generate_toy_dataset, ToyWalkerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub reduced: bool,
    pub train: DetectorTrainConfig,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            reduced: true,
            train: DetectorTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructorSection {
    pub reduced: bool,
    pub train: ReconstructorTrainConfig,
}

impl Default for ReconstructorSection {
    fn default() -> Self {
        Self {
            reduced: true,
            train: ReconstructorTrainConfig {
                windows_per_epoch: Some(256),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub n_trees: usize,
    pub cv_candidates: Vec<usize>,
    pub cv_splits: usize,
    pub train_frac: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            cv_candidates: vec![50, 100, 150, 200],
            cv_splits: 10,
            train_frac: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessSection {
    pub seeds: Vec<u64>,
    pub bin: DegreeBin,
    pub max_rank: usize,
}

impl Default for RobustnessSection {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4],
            bin: DegreeBin::From30To40,
            max_rank: 5,
        }
    }
}

/// Everything a run needs, as one JSON document. The top-level `seed`
/// drives every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Dataset manifest; relative paths resolve against the config file.
    pub manifest: Option<PathBuf>,
    /// Crop-and-resize target `(height, width)` applied when loading frames.
    pub frame_size: Option<(usize, usize)>,
    pub pca_variance: f64,
    pub toy: ToyWalkerSpec,
    pub detector: DetectorSection,
    pub reconstructor: ReconstructorSection,
    pub classifier: ClassifierSection,
    pub sweep: SweepConfig,
    pub robustness: RobustnessSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut c = Self {
            seed: 0,
            manifest: None,
            frame_size: None,
            pca_variance: 0.98,
            toy: ToyWalkerSpec::default(),
            detector: DetectorSection::default(),
            reconstructor: ReconstructorSection::default(),
            classifier: ClassifierSection::default(),
            sweep: SweepConfig::default(),
            robustness: RobustnessSection::default(),
        };
        c.apply_seed(0);
        c
    }
}

impl PipelineConfig {
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.toy.seed = seed;
        self.detector.train.seed = seed;
        self.reconstructor.train.seed = seed;
        self.sweep.seed = seed;
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.apply_seed(c.seed);
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a config file and resolves its manifest path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_json(&text)?;
        if let (Some(m), Some(dir)) = (&c.manifest, path.parent()) {
            if m.is_relative() {
                c.manifest = Some(dir.join(m));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.manifest {
            if !m.is_file() {
                return Err(Error::Config(format!("manifest {} does not exist", m.display())));
            }
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::Config("pca_variance must lie in (0, 1]".into()));
        }
        if self.classifier.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        self.toy.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.detector.train.validate()?;
        self.reconstructor.train.validate()?;
        Ok(())
    }

    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        let m = self
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset manifest configured".into()))?;
        DatasetManifest::load(m)
    }
}

pub fn save_detector(model: &DetectorModel, path: &Path) -> Result<()> {
    checkpoint::save(Kind::Detector, model, path)
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    let m: DetectorModel = checkpoint::load(Kind::Detector, path)?;
    m.check_integrity()?;
    Ok(m)
}

pub fn save_reconstructor(model: &ReconstructorModel, path: &Path) -> Result<()> {
    checkpoint::save(Kind::Reconstructor, model, path)
}

pub fn load_reconstructor(path: &Path) -> Result<ReconstructorModel> {
    let m: ReconstructorModel = checkpoint::load(Kind::Reconstructor, path)?;
    m.check_integrity()?;
    Ok(m)
}

pub fn load_pca(path: &Path) -> Result<PcaProjector> {
    checkpoint::load(Kind::Pca, path)
}

pub fn load_classifier(path: &Path) -> Result<GaitClassifier> {
    checkpoint::load(Kind::Classifier, path)
}

/// Frames of every detector-train entry, labelled by their masks.
pub fn detector_training_frames(
    manifest: &DatasetManifest,
    frame_size: Option<(usize, usize)>,
) -> Result<Vec<(SilhouetteFrame, u8)>> {
    let mut out = Vec::new();
    for seq in manifest.load_role(Role::DetectorTrain, frame_size)? {
        let mask = seq
            .mask()
            .ok_or_else(|| Error::InvalidInput(format!("detector-train entry {} has no labels", seq.sequence_id)))?
            .to_vec();
        out.extend(seq.into_frames().into_iter().zip(mask).map(|(f, m)| (f, u8::from(m))));
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("manifest holds no detector-train entries".into()));
    }
    Ok(out)
}

pub fn train_detector_stage(config: &PipelineConfig, frames: &[(SilhouetteFrame, u8)]) -> Result<(DetectorModel, crate::detector::TrainLog)> {
    let (h, w) = frames
        .first()
        .map(|f| f.0.dims())
        .ok_or_else(|| Error::InvalidInput("no detector frames".into()))?;
    let arch = if config.detector.reduced {
        DetectorArchitecture::reduced(h, w)
    } else {
        DetectorArchitecture::vgg16(h, w)
    };
    train_detector(frames, arch, &config.detector.train)
}

pub fn train_reconstructor_stage(
    config: &PipelineConfig,
    gallery: &[SilhouetteSequence],
    seed: u64,
) -> Result<(ReconstructorModel, crate::rgait_net::TrainLog)> {
    let (h, w) = gallery
        .first()
        .and_then(SilhouetteSequence::dims)
        .ok_or_else(|| Error::InvalidInput("reconstructor training corpus is empty".into()))?;
    let arch = if config.reconstructor.reduced {
        ReconstructorArchitecture::reduced(h, w)
    } else {
        ReconstructorArchitecture::full(h, w)
    };
    let train = ReconstructorTrainConfig {
        seed,
        ..config.reconstructor.train.clone()
    };
    train_reconstructor(gallery, arch, &train)
}

/// Repairs sequences using either their attached ground-truth masks or
/// masks predicted by `detector`.
pub fn repair_sequences(
    sequences: &[SilhouetteSequence],
    reconstructor: &ReconstructorModel,
    source: MaskSource,
    detector: Option<&DetectorModel>,
) -> Result<Vec<SilhouetteSequence>> {
    sequences
        .iter()
        .map(|seq| {
            let masked = match (source, detector) {
                (MaskSource::GroundTruth, _) => {
                    if seq.mask().is_none() {
                        return Err(Error::InvalidInput(format!(
                            "{}/{} has no ground-truth mask",
                            seq.subject_id, seq.sequence_id
                        )));
                    }
                    seq.clone()
                }
                (MaskSource::Detector, Some(d)) => {
                    let mut m = detect_sequence(d, seq)?;
                    if let Some(first) = m.first_mut() {
                        *first = false;
                    }
                    seq.clone().with_mask(m)?
                }
                (MaskSource::Detector, None) => {
                    return Err(Error::Config("mask source is the detector but no detector was given".into()))
                }
            };
            reconstruct_sequence(reconstructor, &masked)
        })
        .collect()
}

pub fn rank_all(gallery: &GalleryModel, probes: &[SilhouetteSequence]) -> Result<Vec<RankedPrediction>> {
    probes.iter().map(|p| gallery.rank(p)).collect()
}

/// Writes `<stem>.json` (pretty) and `<stem>.csv` into `dir`.
pub fn write_report<T: Serialize>(dir: &Path, stem: &str, report: &T, csv: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(report)? + "\n")?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    Ok(())
}

/// One line per prediction.
pub fn predictions_jsonl(preds: &[RankedPrediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Trains one reconstructor per seed and evaluates each on the same
/// occluded probes (ground-truth masks, fixed occlusion seed).
pub fn robustness_pipeline(
    config: &PipelineConfig,
    gallery: &[SilhouetteSequence],
    probes: &[SilhouetteSequence],
    gallery_model: &GalleryModel,
    allow_repeated_seeds: bool,
) -> Result<RobustnessReport> {
    let r = &config.robustness;
    let sweep = SweepConfig {
        bins: vec![r.bin],
        mask_source: MaskSource::GroundTruth,
        include_control: false,
        max_rank: r.max_rank,
        ..config.sweep.clone()
    };
    robustness_study(&r.seeds, allow_repeated_seeds, |seed| {
        let (model, _) = train_reconstructor_stage(config, gallery, seed)?;
        let report = run_sweep(gallery_model, probes, &model, None, &sweep)?;
        let row = &report.rows[0];
        if row.probes == 0 {
            return Err(Error::Infeasible(format!("every probe was skipped at {}", row.bin)));
        }
        Ok(row.cmc_reconstructed.clone())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub manifest: PathBuf,
    pub detector_epochs: usize,
    pub reconstructor_epochs: usize,
    pub pca_components: usize,
    pub clean_cmc: CmcCurve,
    pub report_files: Vec<String>,
}

/// Full run into `out`: toy data (unless a manifest is configured),
/// detector, reconstructor, gallery model, clean evaluation and sweep.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineSummary> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let manifest = match &config.manifest {
        Some(_) => config.load_manifest()?,
        None => generate_toy_dataset(&config.toy, &out.join("data"))?,
    };
    let manifest_path = manifest.base_dir.join("manifest.jsonl");
    let size = config.frame_size;
    let models = out.join("models");
    let reports = out.join("reports");

    let det_frames = detector_training_frames(&manifest, size)?;
    let (detector, det_log) = train_detector_stage(config, &det_frames)?;
    save_detector(&detector, &models.join("detector.json"))?;

    let gallery = manifest.load_role(Role::Gallery, size)?;
    let probes = manifest.load_role(Role::Probe, size)?;
    let (reconstructor, rec_log) = train_reconstructor_stage(config, &gallery, config.seed)?;
    save_reconstructor(&reconstructor, &models.join("reconstructor.json"))?;

    let gallery_model = GalleryModel::fit(&gallery, config.pca_variance, config.classifier.n_trees, config.seed)?;
    checkpoint::save(Kind::Pca, &gallery_model.pca, &models.join("pca.json"))?;
    checkpoint::save(Kind::Classifier, &gallery_model.classifier, &models.join("classifier.json"))?;

    let preds = rank_all(&gallery_model, &probes)?;
    let curve = cmc(&preds, config.sweep.max_rank)?;
    fs::create_dir_all(&reports)?;
    fs::write(reports.join("predictions.jsonl"), predictions_jsonl(&preds)?)?;
    write_report(&reports, "cmc", &curve, &curve.to_csv())?;

    let sweep = run_sweep(&gallery_model, &probes, &reconstructor, Some(&detector), &config.sweep)?;
    write_report(&reports, "sweep", &sweep, &sweep.to_csv())?;

    Ok(PipelineSummary {
        manifest: manifest_path,
        detector_epochs: det_log.epoch_losses.len(),
        reconstructor_epochs: rec_log.epoch_losses.len(),
        pca_components: gallery_model.pca.n_components(),
        clean_cmc: curve,
        report_files: ["predictions.jsonl", "cmc.json", "cmc.csv", "sweep.json", "sweep.csv"]
            .map(String::from)
            .to_vec(),
    })
}
