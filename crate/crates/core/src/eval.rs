//! Evaluation protocol: occlusion sweeps, CMC curves, stratified
//! cross-validation of the forest size, and multi-seed robustness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{detect_sequence, DetectorModel};
use crate::error::{Error, Result};
use crate::features::{compute_gei, PcaProjector};
use crate::losses::dice_coeff;
use crate::occlusion::{occlude_sequence, DegreeBin, OcclusionSpec};
use crate::recognizer::{rank_k_accuracy, train_classifier, GaitClassifier, RankedPrediction};
use crate::rgait_net::{reconstruct_sequence, FramePredictor};
use crate::silhouette::SilhouetteSequence;

/// Where the occlusion mask used for reconstruction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    Detector,
    GroundTruth,
}

impl FromStr for MaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detector" => Ok(Self::Detector),
            "ground-truth" => Ok(Self::GroundTruth),
            _ => Err(Error::Config(format!("unknown mask source {s:?}"))),
        }
    }
}

/// PCA projection plus forest fitted on gallery GEIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryModel {
    pub pca: PcaProjector,
    pub classifier: GaitClassifier,
}

impl GalleryModel {
    pub fn fit(gallery: &[SilhouetteSequence], variance_threshold: f64, n_trees: usize, seed: u64) -> Result<Self> {
        if gallery.is_empty() {
            return Err(Error::InvalidInput("gallery is empty".into()));
        }
        let geis: Vec<Vec<f64>> = gallery
            .iter()
            .map(|s| compute_gei(s).map(|g| g.pixels().to_vec()))
            .collect::<Result<_>>()?;
        let pca = PcaProjector::fit(&geis, variance_threshold)?;
        let features: Vec<Vec<f64>> = geis.iter().map(|g| pca.project_vec(g)).collect::<Result<_>>()?;
        let labels: Vec<String> = gallery.iter().map(|s| s.subject_id.clone()).collect();
        let classifier = train_classifier(&features, &labels, n_trees, seed)?;
        Ok(Self { pca, classifier })
    }

    /// Ranked identities for a sequence, labelled with its subject id.
    pub fn rank(&self, seq: &SilhouetteSequence) -> Result<RankedPrediction> {
        let gei = compute_gei(seq)?;
        let f = self.pca.project_vec(gei.pixels())?;
        let mut p = self.classifier.predict_ranked(&f)?;
        p.true_label = Some(seq.subject_id.clone());
        Ok(p)
    }
}

/// Accuracies at ranks `1..=R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve(pub Vec<f64>);

impl CmcCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,accuracy\n");
        for (r, a) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{},{a:.6}", r + 1);
        }
        out
    }
}

pub fn cmc(preds: &[RankedPrediction], max_rank: usize) -> Result<CmcCurve> {
    if max_rank < 1 {
        return Err(Error::InvalidInput("max rank must be at least 1".into()));
    }
    Ok(CmcCurve((1..=max_rank).map(|k| rank_k_accuracy(preds, k)).collect::<Result<_>>()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub bins: Vec<DegreeBin>,
    pub n_initial_clean: usize,
    pub seed: u64,
    pub mask_source: MaskSource,
    /// Adds an unoccluded reference row.
    pub include_control: bool,
    pub max_rank: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            bins: DegreeBin::ALL.to_vec(),
            n_initial_clean: 5,
            seed: 0,
            mask_source: MaskSource::GroundTruth,
            include_control: true,
            max_rank: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Bin label, or `control` for the unoccluded row.
    pub bin: String,
    pub n_initial_clean: usize,
    pub probes: usize,
    pub skipped: usize,
    pub rank1_reconstructed: Option<f64>,
    /// Rank-1 when the blackened frames are left in place.
    pub rank1_blank: Option<f64>,
    pub cmc_reconstructed: Vec<f64>,
    pub cmc_blank: Vec<f64>,
    /// Mean dice between reconstructed and original occluded frames.
    pub mean_dice: Option<f64>,
    /// Fraction of frames where the mask used agrees with the synthesis mask.
    pub mask_agreement: Option<f64>,
    /// Rank-1 after reconstruction, split by probe sequence id.
    pub rank1_by_sequence: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub mask_source: MaskSource,
    pub total_probes: usize,
    pub rows: Vec<SweepRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "bin,n_initial_clean,probes,skipped,rank1_reconstructed,rank1_blank,mean_dice,mask_agreement\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.bin,
                r.n_initial_clean,
                r.probes,
                r.skipped,
                opt(r.rank1_reconstructed),
                opt(r.rank1_blank),
                opt(r.mean_dice),
                opt(r.mask_agreement)
            );
        }
        out
    }

    pub fn row(&self, bin: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.bin == bin)
    }
}

fn per_sequence_rank1(preds: &[(String, RankedPrediction)]) -> Result<BTreeMap<String, f64>> {
    let mut groups: BTreeMap<String, Vec<RankedPrediction>> = BTreeMap::new();
    for (sid, p) in preds {
        groups.entry(sid.clone()).or_default().push(p.clone());
    }
    groups.into_iter().map(|(k, v)| Ok((k, rank_k_accuracy(&v, 1)?))).collect()
}

/// Occludes every probe at each requested bin, repairs it, and ranks both
/// the repaired and the blackened sequence against the gallery.
pub fn run_sweep(
    gallery: &GalleryModel,
    probes: &[SilhouetteSequence],
    predictor: &dyn FramePredictor,
    detector: Option<&DetectorModel>,
    config: &SweepConfig,
) -> Result<SweepReport> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("probe set is empty".into()));
    }
    if config.max_rank < 1 {
        return Err(Error::Config("max_rank must be at least 1".into()));
    }
    if config.mask_source == MaskSource::Detector && detector.is_none() {
        return Err(Error::Config("mask source is the detector but no detector was given".into()));
    }
    let mut rows = Vec::new();
    if config.include_control {
        let preds: Vec<RankedPrediction> = probes.iter().map(|p| gallery.rank(p)).collect::<Result<_>>()?;
        let curve = cmc(&preds, config.max_rank)?.0;
        let keyed: Vec<_> = probes.iter().map(|p| p.sequence_id.clone()).zip(preds).collect();
        rows.push(SweepRow {
            bin: "control".into(),
            n_initial_clean: config.n_initial_clean,
            probes: probes.len(),
            skipped: 0,
            rank1_reconstructed: Some(curve[0]),
            rank1_blank: Some(curve[0]),
            cmc_reconstructed: curve.clone(),
            cmc_blank: curve,
            mean_dice: None,
            mask_agreement: None,
            rank1_by_sequence: per_sequence_rank1(&keyed)?,
        });
    }
    for &bin in &config.bins {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(bin as u64);
        let mut recon_preds = Vec::new();
        let mut blank_preds = Vec::new();
        let mut dice = Vec::new();
        let (mut agree, mut frames_seen) = (0usize, 0usize);
        let mut skipped = 0;
        for probe in probes {
            let spec = OcclusionSpec::for_bin(bin, config.n_initial_clean, rng.random());
            let occluded = match occlude_sequence(probe, &spec) {
                Ok(s) => s,
                Err(Error::Infeasible(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let truth = occluded.mask().expect("synthesis attaches a mask").to_vec();
            let mask = match (config.mask_source, detector) {
                (MaskSource::Detector, Some(d)) => {
                    let mut m = detect_sequence(d, &occluded)?;
                    // the first frame seeds the recursion and is never replaced
                    m[0] = false;
                    m
                }
                _ => truth.clone(),
            };
            agree += mask.iter().zip(&truth).filter(|(a, b)| a == b).count();
            frames_seen += mask.len();
            let repaired = reconstruct_sequence(predictor, &occluded.clone().with_mask(mask)?)?;
            for (i, _) in truth.iter().enumerate().filter(|(_, &t)| t) {
                dice.push(dice_coeff(&repaired.frames()[i].to_f64(), &probe.frames()[i].to_f64())?);
            }
            recon_preds.push((probe.sequence_id.clone(), gallery.rank(&repaired)?));
            blank_preds.push(gallery.rank(&occluded)?);
        }
        let recon: Vec<RankedPrediction> = recon_preds.iter().map(|p| p.1.clone()).collect();
        let (cmc_r, cmc_b) = if recon.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            (cmc(&recon, config.max_rank)?.0, cmc(&blank_preds, config.max_rank)?.0)
        };
        rows.push(SweepRow {
            bin: bin.label().to_string(),
            n_initial_clean: config.n_initial_clean,
            probes: recon.len(),
            skipped,
            rank1_reconstructed: cmc_r.first().copied(),
            rank1_blank: cmc_b.first().copied(),
            cmc_reconstructed: cmc_r,
            cmc_blank: cmc_b,
            mean_dice: (!dice.is_empty()).then(|| dice.iter().sum::<f64>() / dice.len() as f64),
            mask_agreement: (frames_seen > 0).then(|| agree as f64 / frames_seen as f64),
            rank1_by_sequence: per_sequence_rank1(&recon_preds)?,
        });
    }
    Ok(SweepReport {
        seed: config.seed,
        mask_source: config.mask_source,
        total_probes: probes.len(),
        rows,
    })
}

/// Per-class shuffled split with `train_frac` of each class (rounded so the
/// overall test size is `round((1 - train_frac) * n)`) and at least one
/// sample on each side.
pub fn stratified_split(labels: &[String], train_frac: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction {train_frac} must lie in (0, 1)")));
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.as_str()).or_default().push(i);
    }
    if let Some((c, _)) = classes.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::InvalidInput(format!("class {c:?} has fewer than 2 samples")));
    }
    let mut groups: Vec<Vec<usize>> = classes.into_values().collect();
    groups.shuffle(rng);
    let test_frac = 1.0 - train_frac;
    let target = (test_frac * labels.len() as f64).round() as usize;
    let mut quota: Vec<usize> = groups
        .iter()
        .map(|g| ((test_frac * g.len() as f64).floor() as usize).clamp(1, g.len() - 1))
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let frac = |g: &Vec<usize>| test_frac * g.len() as f64 - (test_frac * g.len() as f64).floor();
    order.sort_by(|&a, &b| frac(&groups[b]).total_cmp(&frac(&groups[a])));
    let mut assigned: usize = quota.iter().sum();
    for &g in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if quota[g] + 1 < groups[g].len() {
            quota[g] += 1;
            assigned += 1;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (g, q) in groups.iter_mut().zip(quota) {
        g.shuffle(rng);
        test.extend_from_slice(&g[..q]);
        train.extend_from_slice(&g[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub n_trees: usize,
    pub split_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub train_frac: f64,
    pub n_splits: usize,
    pub candidates: Vec<CandidateResult>,
}

impl CrossValidationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_trees,mean_accuracy\n");
        for c in &self.candidates {
            let _ = writeln!(out, "{},{:.6}", c.n_trees, c.mean_accuracy);
        }
        out
    }
}

/// Mean rank-1 validation accuracy of each forest size over the same
/// `n_splits` stratified splits.
pub fn cross_validate(
    features: &[Vec<f64>],
    labels: &[String],
    candidates: &[usize],
    n_splits: usize,
    train_frac: f64,
    seed: u64,
) -> Result<CrossValidationReport> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", features.len()),
            found: format!("{} labels", labels.len()),
        });
    }
    if n_splits == 0 || candidates.is_empty() {
        return Err(Error::Config("need at least one split and one candidate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits: Vec<_> = (0..n_splits)
        .map(|_| stratified_split(labels, train_frac, &mut rng))
        .collect::<Result<_>>()?;
    let mut results = Vec::new();
    for &n_trees in candidates {
        let mut accs = Vec::new();
        for (i, (train, test)) in splits.iter().enumerate() {
            let tf: Vec<Vec<f64>> = train.iter().map(|&j| features[j].clone()).collect();
            let tl: Vec<String> = train.iter().map(|&j| labels[j].clone()).collect();
            let clf = train_classifier(&tf, &tl, n_trees, seed.wrapping_add(i as u64))?;
            let preds: Vec<RankedPrediction> = test
                .iter()
                .map(|&j| {
                    let mut p = clf.predict_ranked(&features[j])?;
                    p.true_label = Some(labels[j].clone());
                    Ok(p)
                })
                .collect::<Result<_>>()?;
            accs.push(rank_k_accuracy(&preds, 1)?);
        }
        results.push(CandidateResult {
            n_trees,
            mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
            split_accuracies: accs,
        });
    }
    Ok(CrossValidationReport {
        train_frac,
        n_splits,
        candidates: results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub seeds: Vec<u64>,
    /// CMC of each run, ranks `1..=R`.
    pub runs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Population standard deviation across runs.
    pub std: Vec<f64>,
}

impl RobustnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,mean_accuracy,std\n");
        for (r, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            let _ = writeln!(out, "{},{m:.6},{s:.6}", r + 1);
        }
        out
    }
}

/// Per-rank mean and population std of equally long accuracy curves.
pub fn summarize_runs(runs: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if runs.len() < 2 {
        return Err(Error::InvalidInput("robustness needs at least 2 runs".into()));
    }
    let r = runs[0].len();
    if runs.iter().any(|c| c.len() != r) {
        return Err(Error::InvalidInput("runs have different curve lengths".into()));
    }
    let m = runs.len() as f64;
    let mean: Vec<f64> = (0..r).map(|k| runs.iter().map(|c| c[k]).sum::<f64>() / m).collect();
    let std = (0..r)
        .map(|k| (runs.iter().map(|c| (c[k] - mean[k]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();
    Ok((mean, std))
}

/// Runs `evaluate` once per seed and aggregates the resulting curves.
/// Repeated seeds are rejected unless `allow_repeated_seeds` is set.
pub fn robustness_study(
    seeds: &[u64],
    allow_repeated_seeds: bool,
    mut evaluate: impl FnMut(u64) -> Result<Vec<f64>>,
) -> Result<RobustnessReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidInput("robustness needs at least 2 models".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if !allow_repeated_seeds && sorted.len() != seeds.len() {
        return Err(Error::InvalidInput("robustness seeds must be distinct".into()));
    }
    let runs: Vec<Vec<f64>> = seeds.iter().map(|&s| evaluate(s)).collect::<Result<_>>()?;
    let (mean, std) = summarize_runs(&runs)?;
    Ok(RobustnessReport {
        seeds: seeds.to_vec(),
        runs,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(ranking: &[&str], truth: &str) -> RankedPrediction {
        let n = ranking.len() as f64;
        let scores = ranking.iter().enumerate().map(|(i, l)| (l.to_string(), n - i as f64)).collect();
        RankedPrediction::from_scores(scores, Some(truth.to_string()))
    }

    #[test]
    fn hand_counted_cmc() {
        let preds = vec![
            pred(&["a", "b", "c", "d"], "a"),
            pred(&["a", "b", "c", "d"], "b"),
            pred(&["a", "b", "c", "d"], "d"),
        ];
        assert_eq!(cmc(&preds, 4).unwrap().0, vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(cmc(&preds, 0).is_err());
        let perfect = vec![pred(&["x", "y"], "x"); 3];
        assert_eq!(cmc(&perfect, 2).unwrap().0, vec![1.0, 1.0]);
    }

    #[test]
    fn split_sizes() {
        let labels: Vec<String> = (0..280).map(|i| format!("s{}", i % 20)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, test) = stratified_split(&labels, 0.75, &mut rng).unwrap();
        assert_eq!((train.len(), test.len()), (210, 70));
        for c in 0..20 {
            let name = format!("s{c}");
            assert!(test.iter().any(|&i| labels[i] == name));
            assert!(train.iter().any(|&i| labels[i] == name));
        }
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort_unstable();
        assert_eq!(all, (0..280).collect::<Vec<_>>());
        let lonely = vec!["a".to_string(), "a".into(), "b".into()];
        assert!(stratified_split(&lonely, 0.75, &mut rng).is_err());
    }

    #[test]
    fn robustness_std_and_errors() {
        let curves = [0.9, 0.8, 1.0, 0.7];
        let mut i = 0;
        let report = robustness_study(&[1, 2, 3, 4], false, |_| {
            i += 1;
            Ok(vec![curves[i - 1], 1.0])
        })
        .unwrap();
        // mean 0.85, deviations ±0.05, ±0.15: var = (0.0025*2 + 0.0225*2) / 4
        assert!((report.mean[0] - 0.85).abs() < 1e-12);
        assert!((report.std[0] - 0.0125f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.std[1], 0.0);
        assert!(robustness_study(&[1], false, |_| Ok(vec![1.0])).is_err());
        assert!(robustness_study(&[1, 1], false, |_| Ok(vec![1.0])).is_err());
        let same = robustness_study(&[7, 7, 7, 7], true, |s| Ok(vec![s as f64 / 10.0])).unwrap();
        assert!(same.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mask_source_parsing() {
        assert_eq!("detector".parse::<MaskSource>().unwrap(), MaskSource::Detector);
        assert_eq!("ground-truth".parse::<MaskSource>().unwrap(), MaskSource::GroundTruth);
        assert!("oracle".parse::<MaskSource>().is_err());
    }
}
