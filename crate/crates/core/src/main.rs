use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rgait_core::checkpoint::{self, Kind};
use rgait_core::detector::{confusion_metrics, detect_sequence, ConfusionMatrix};
use rgait_core::eval::{cmc, cross_validate, run_sweep, GalleryModel, MaskSource};
use rgait_core::features::{compute_gei, PcaProjector};
use rgait_core::manifest::{load_masks, save_masks, save_sequence, DatasetManifest, MaskRecord, Role};
use rgait_core::occlusion::{occlude_sequence, DegreeBin, OcclusionSpec};
use rgait_core::pipeline::{self, PipelineConfig};
use rgait_core::plot::plot_series;
use rgait_core::recognizer::{train_classifier, RankedPrediction};
use rgait_core::silhouette::SilhouetteSequence;
use rgait_core::toy::generate_toy_dataset;
use rgait_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rgait", version, about = "Occlusion-robust gait recognition from silhouette sequences")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "rgait-out")]
    out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    /// Also write PNG plots of curves.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskSourceArg {
    Detector,
    GroundTruth,
}

impl From<MaskSourceArg> for MaskSource {
    fn from(m: MaskSourceArg) -> Self {
        match m {
            MaskSourceArg::Detector => MaskSource::Detector,
            MaskSourceArg::GroundTruth => MaskSource::GroundTruth,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Gallery,
    Probe,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Gallery => Role::Gallery,
            RoleArg::Probe => Role::Probe,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic walker dataset and its manifest.
    GenToy,
    /// Blacken frames of one role at a given occlusion degree.
    Occlude {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Degree bin such as 20-30.
        #[arg(long)]
        bin: String,
        #[arg(long, default_value_t = 5)]
        n_initial_clean: usize,
        #[arg(long, value_enum, default_value = "probe")]
        role: RoleArg,
    },
    TrainDetector {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Predict per-frame occlusion masks.
    Detect {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        detector: PathBuf,
    },
    TrainReconstructor {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Replace occluded frames with predicted ones.
    Reconstruct {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        reconstructor: PathBuf,
        #[arg(long, value_enum)]
        mask_source: Option<MaskSourceArg>,
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Mask sidecar overriding the masks stored in the manifest.
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Write gait energy images.
    Gei {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
    },
    /// Fit the PCA projection on gallery GEIs.
    FitPca {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    TrainClassifier {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        pca: PathBuf,
        /// Also report stratified cross-validation over the configured tree counts.
        #[arg(long)]
        cross_validate: bool,
    },
    /// Rank probes against the gallery and report the CMC curve.
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        pca: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long, value_enum, default_value = "probe")]
        role: RoleArg,
    },
    /// Occlusion-degree sweep over the probes.
    Sweep {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        reconstructor: PathBuf,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long, value_enum)]
        mask_source: Option<MaskSourceArg>,
    },
    /// CMC curve from a predictions file.
    Cmc {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_rank: usize,
    },
    /// Train several reconstructors and report rank-wise mean and std.
    Robustness {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Accept the same seed more than once (the spread is then zero).
        #[arg(long)]
        allow_repeated_seeds: bool,
    },
    /// Every stage in order on the configured data.
    Pipeline,
}

struct Ctx {
    config: PipelineConfig,
    out: PathBuf,
    plot: bool,
}

impl Ctx {
    fn manifest(&self, arg: &Option<PathBuf>) -> Result<DatasetManifest> {
        match arg {
            Some(p) => DatasetManifest::load(p),
            None => self.config.load_manifest(),
        }
    }

    fn size(&self) -> Option<(usize, usize)> {
        self.config.frame_size
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn plot(&self, name: &str, series: &[Vec<f64>]) -> Result<()> {
        if self.plot {
            plot_series(series, &self.out.join(name))?;
        }
        Ok(())
    }
}

fn prepare_out(out: &Path, overwrite: bool) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(Error::Config(format!("{} exists and is not a directory", out.display())));
        }
        if !overwrite && fs::read_dir(out)?.next().is_some() {
            return Err(Error::Config(format!(
                "{} is not empty; pass --overwrite to write into it",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn gallery_model(ctx: &Ctx, manifest: &DatasetManifest) -> Result<GalleryModel> {
    let gallery = manifest.load_role(Role::Gallery, ctx.size())?;
    GalleryModel::fit(&gallery, ctx.config.pca_variance, ctx.config.classifier.n_trees, ctx.config.seed)
}

fn attach_masks(seqs: Vec<SilhouetteSequence>, path: &Path) -> Result<Vec<SilhouetteSequence>> {
    let records = load_masks(path)?;
    seqs.into_iter()
        .map(|s| {
            let r = records
                .iter()
                .find(|r| r.subject_id == s.subject_id && r.sequence_id == s.sequence_id)
                .ok_or_else(|| Error::InvalidInput(format!("no mask for {}/{}", s.subject_id, s.sequence_id)))?;
            let mask = r.mask.iter().map(|&v| v == 1).collect();
            s.without_mask().with_mask(mask)
        })
        .collect()
}

fn mask_record(seq: &SilhouetteSequence, mask: &[bool]) -> MaskRecord {
    MaskRecord {
        subject_id: seq.subject_id.clone(),
        sequence_id: seq.sequence_id.clone(),
        mask: mask.iter().map(|&b| u8::from(b)).collect(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.apply_seed(s);
    }
    config.validate()?;
    prepare_out(&cli.out, cli.overwrite)?;
    let ctx = Ctx {
        config,
        out: cli.out,
        plot: cli.plot,
    };
    let cfg = &ctx.config;

    match cli.command {
        Command::GenToy => {
            let m = generate_toy_dataset(&cfg.toy, &ctx.out)?;
            println!("wrote {} sequences to {}", m.entries.len(), ctx.out.display());
        }
        Command::Occlude {
            manifest,
            bin,
            n_initial_clean,
            role,
        } => {
            let m = ctx.manifest(&manifest)?;
            let bin: DegreeBin = bin.parse()?;
            let role = Role::from(role);
            let mut entries = Vec::new();
            let mut records = Vec::new();
            for (i, e) in m.entries.iter().enumerate() {
                let seq = rgait_core::manifest::load_sequence(e, &m.base_dir, ctx.size())?;
                if e.role != role {
                    entries.push(save_sequence(&seq, &ctx.out, e.role)?);
                    continue;
                }
                let spec = OcclusionSpec::for_bin(bin, n_initial_clean, cfg.seed.wrapping_add(i as u64));
                let occ = occlude_sequence(&seq.without_mask(), &spec)?;
                records.push(mask_record(&occ, occ.mask().expect("synthesis mask")));
                entries.push(save_sequence(&occ, &ctx.out, role)?);
            }
            DatasetManifest::new(entries, &ctx.out)?.save(ctx.out.join("manifest.jsonl"))?;
            save_masks(&records, &ctx.out.join("masks.jsonl"))?;
            println!("occluded {} sequences at {bin}", records.len());
        }
        Command::TrainDetector { manifest } => {
            let m = ctx.manifest(&manifest)?;
            let frames = pipeline::detector_training_frames(&m, ctx.size())?;
            let (model, log) = pipeline::train_detector_stage(cfg, &frames)?;
            pipeline::save_detector(&model, &ctx.out.join("detector.json"))?;
            ctx.write("detector_log.json", &serde_json::to_string_pretty(&log)?)?;
            ctx.plot("detector_loss.png", &[normalize_losses(&log.epoch_losses)])?;
            println!(
                "trained detector for {} epochs, final loss {:.6}",
                log.epoch_losses.len(),
                log.epoch_losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Detect { manifest, detector } => {
            let m = ctx.manifest(&manifest)?;
            let det = pipeline::load_detector(&detector)?;
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            let mut records = Vec::new();
            for e in &m.entries {
                let seq = rgait_core::manifest::load_sequence(e, &m.base_dir, ctx.size())?;
                let mask = detect_sequence(&det, &seq)?;
                if let Some(t) = seq.mask() {
                    truth.extend_from_slice(t);
                    pred.extend_from_slice(&mask);
                }
                records.push(mask_record(&seq, &mask));
            }
            save_masks(&records, &ctx.out.join("masks.jsonl"))?;
            if !truth.is_empty() {
                let cm = ConfusionMatrix::from_predictions(&pred, &truth)?;
                let metrics = confusion_metrics(&cm);
                let json = serde_json::json!({ "confusion": cm, "metrics": metrics });
                let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
                let csv = format!(
                    "tp,fp,tn,fn,precision,recall,accuracy\n{},{},{},{},{},{},{}\n",
                    cm.tp,
                    cm.fp,
                    cm.tn,
                    cm.fn_,
                    fmt(metrics.precision),
                    fmt(metrics.recall),
                    fmt(metrics.accuracy)
                );
                pipeline::write_report(&ctx.out, "detection", &json, &csv)?;
                println!("accuracy {}", fmt(metrics.accuracy));
            }
        }
        Command::TrainReconstructor { manifest } => {
            let m = ctx.manifest(&manifest)?;
            let gallery = m.load_role(Role::Gallery, ctx.size())?;
            let (model, log) = pipeline::train_reconstructor_stage(cfg, &gallery, cfg.seed)?;
            pipeline::save_reconstructor(&model, &ctx.out.join("reconstructor.json"))?;
            ctx.write("reconstructor_log.json", &serde_json::to_string_pretty(&log)?)?;
            ctx.plot("reconstructor_loss.png", &[normalize_losses(&log.epoch_losses)])?;
            println!("trained reconstructor for {} epochs", log.epoch_losses.len());
        }
        Command::Reconstruct {
            manifest,
            reconstructor,
            mask_source,
            detector,
            masks,
        } => {
            let source: MaskSource = mask_source
                .ok_or_else(|| Error::Config("reconstruct needs --mask-source detector or ground-truth".into()))?
                .into();
            let m = ctx.manifest(&manifest)?;
            let rec = pipeline::load_reconstructor(&reconstructor)?;
            let det = detector.as_deref().map(pipeline::load_detector).transpose()?;
            let mut entries = Vec::new();
            let mut repaired_count = 0;
            for e in &m.entries {
                let seq = rgait_core::manifest::load_sequence(e, &m.base_dir, ctx.size())?;
                let seq = match &masks {
                    Some(p) if e.role == Role::Probe => attach_masks(vec![seq], p)?.remove(0),
                    _ => seq,
                };
                if e.role != Role::Probe {
                    entries.push(save_sequence(&seq, &ctx.out, e.role)?);
                    continue;
                }
                let fixed = pipeline::repair_sequences(&[seq], &rec, source, det.as_ref())?.remove(0);
                entries.push(save_sequence(&fixed.without_mask(), &ctx.out, e.role)?);
                repaired_count += 1;
            }
            DatasetManifest::new(entries, &ctx.out)?.save(ctx.out.join("manifest.jsonl"))?;
            println!("reconstructed {repaired_count} probe sequences");
        }
        Command::Gei { manifest, role } => {
            let m = ctx.manifest(&manifest)?;
            let mut n = 0;
            for e in m.entries.iter().filter(|e| e.role != Role::DetectorTrain) {
                if role.is_some_and(|r| Role::from(r) != e.role) {
                    continue;
                }
                let seq = rgait_core::manifest::load_sequence(e, &m.base_dir, ctx.size())?;
                let gei = compute_gei(&seq)?;
                gei.save(&ctx.out.join("gei").join(format!("{}_{}.png", e.subject_id, e.sequence_id)))?;
                n += 1;
            }
            println!("wrote {n} GEIs");
        }
        Command::FitPca { manifest } => {
            let m = ctx.manifest(&manifest)?;
            let gallery = m.load_role(Role::Gallery, ctx.size())?;
            let geis: Vec<Vec<f64>> = gallery
                .iter()
                .map(|s| compute_gei(s).map(|g| g.pixels().to_vec()))
                .collect::<Result<_>>()?;
            let pca = PcaProjector::fit(&geis, cfg.pca_variance)?;
            checkpoint::save(Kind::Pca, &pca, &ctx.out.join("pca.json"))?;
            println!(
                "kept {} components ({:.4} of the variance)",
                pca.n_components(),
                pca.retained_variance
            );
        }
        Command::TrainClassifier {
            manifest,
            pca,
            cross_validate: cv,
        } => {
            let m = ctx.manifest(&manifest)?;
            let pca = pipeline::load_pca(&pca)?;
            let gallery = m.load_role(Role::Gallery, ctx.size())?;
            let features: Vec<Vec<f64>> = gallery
                .iter()
                .map(|s| pca.project(&compute_gei(s)?))
                .collect::<Result<_>>()?;
            let labels: Vec<String> = gallery.iter().map(|s| s.subject_id.clone()).collect();
            let clf = train_classifier(&features, &labels, cfg.classifier.n_trees, cfg.seed)?;
            checkpoint::save(Kind::Classifier, &clf, &ctx.out.join("classifier.json"))?;
            if cv {
                let c = &cfg.classifier;
                let report = cross_validate(&features, &labels, &c.cv_candidates, c.cv_splits, c.train_frac, cfg.seed)?;
                pipeline::write_report(&ctx.out, "cross_validation", &report, &report.to_csv())?;
            }
            println!("trained {} trees on {} classes", clf.n_trees(), clf.classes().len());
        }
        Command::Evaluate {
            manifest,
            pca,
            classifier,
            role,
        } => {
            let m = ctx.manifest(&manifest)?;
            let model = GalleryModel {
                pca: pipeline::load_pca(&pca)?,
                classifier: pipeline::load_classifier(&classifier)?,
            };
            let probes = m.load_role(role.into(), ctx.size())?;
            let preds = pipeline::rank_all(&model, &probes)?;
            ctx.write("predictions.jsonl", &pipeline::predictions_jsonl(&preds)?)?;
            let curve = cmc(&preds, cfg.sweep.max_rank)?;
            pipeline::write_report(&ctx.out, "cmc", &curve, &curve.to_csv())?;
            ctx.plot("cmc.png", &[curve.0.clone()])?;
            println!("rank-1 {:.4}", curve.0[0]);
        }
        Command::Sweep {
            manifest,
            reconstructor,
            detector,
            mask_source,
        } => {
            let m = ctx.manifest(&manifest)?;
            let rec = pipeline::load_reconstructor(&reconstructor)?;
            let det = detector.as_deref().map(pipeline::load_detector).transpose()?;
            let mut sweep = cfg.sweep.clone();
            if let Some(s) = mask_source {
                sweep.mask_source = s.into();
            }
            let probes: Vec<SilhouetteSequence> = m
                .load_role(Role::Probe, ctx.size())?
                .into_iter()
                .map(SilhouetteSequence::without_mask)
                .collect();
            let model = gallery_model(&ctx, &m)?;
            let report = run_sweep(&model, &probes, &rec, det.as_ref(), &sweep)?;
            pipeline::write_report(&ctx.out, "sweep", &report, &report.to_csv())?;
            let curves: Vec<Vec<f64>> = report
                .rows
                .iter()
                .filter(|r| !r.cmc_reconstructed.is_empty())
                .map(|r| r.cmc_reconstructed.clone())
                .collect();
            ctx.plot("sweep_cmc.png", &curves)?;
            print!("{}", report.to_csv());
        }
        Command::Cmc { predictions, max_rank } => {
            let text = fs::read_to_string(&predictions).map_err(|_| Error::MissingFile(predictions.clone()))?;
            let preds: Vec<RankedPrediction> = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str(l).map_err(|e| Error::Manifest {
                        line: i + 1,
                        reason: e.to_string(),
                    })
                })
                .collect::<Result<_>>()?;
            let curve = cmc(&preds, max_rank)?;
            pipeline::write_report(&ctx.out, "cmc", &curve, &curve.to_csv())?;
            ctx.plot("cmc.png", &[curve.0.clone()])?;
            print!("{}", curve.to_csv());
        }
        Command::Robustness {
            manifest,
            allow_repeated_seeds,
        } => {
            let m = ctx.manifest(&manifest)?;
            let gallery = m.load_role(Role::Gallery, ctx.size())?;
            let probes: Vec<SilhouetteSequence> = m
                .load_role(Role::Probe, ctx.size())?
                .into_iter()
                .map(SilhouetteSequence::without_mask)
                .collect();
            let model = gallery_model(&ctx, &m)?;
            let report = pipeline::robustness_pipeline(cfg, &gallery, &probes, &model, allow_repeated_seeds)?;
            pipeline::write_report(&ctx.out, "robustness", &report, &report.to_csv())?;
            ctx.plot("robustness.png", &report.runs)?;
            print!("{}", report.to_csv());
        }
        Command::Pipeline => {
            let summary = pipeline::run_pipeline(cfg, &ctx.out)?;
            let reports = ctx.out.join("reports");
            ctx.write("summary.json", &serde_json::to_string_pretty(&summary)?)?;
            if ctx.plot {
                plot_series(&[summary.clean_cmc.0.clone()], &reports.join("cmc.png"))?;
            }
            println!("rank-1 on clean probes {:.4}", summary.clean_cmc.0[0]);
        }
    }
    Ok(())
}

/// Rescales a loss curve into `[0, 1]` for plotting.
fn normalize_losses(losses: &[f64]) -> Vec<f64> {
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    losses.iter().map(|l| (l - lo) / span).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
