//! Acceptance suite. Runs every criterion in order and prints one
//! `PASS` / `FAIL` line each; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgait_core::detector::{is_occluded, train_detector, DetectorArchitecture, DetectorTrainConfig};
use rgait_core::eval::{cmc, run_sweep, summarize_runs, GalleryModel, MaskSource, SweepConfig, SweepReport};
use rgait_core::features::{compute_gei, PcaProjector};
use rgait_core::losses::{dice_coeff, detection_loss, rec_loss, total_loss, total_loss_with_grad};
use rgait_core::manifest::Role;
use rgait_core::occlusion::{occlude_sequence, DegreeBin, OcclusionSpec};
use rgait_core::pipeline::{robustness_pipeline, run_pipeline, train_reconstructor_stage, PipelineConfig};
use rgait_core::recognizer::RankedPrediction;
use rgait_core::silhouette::{SilhouetteFrame, SilhouetteSequence};
use rgait_core::toy::{detector_frames, generate_sequences, ToyWalkerSpec};
use rgait_core::Error;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn random_binary(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<f64> {
    (0..n).map(|_| f64::from(u8::from(rng.random_bool(density)))).collect()
}

fn loss_math() -> Outcome {
    let bce = |p: f64, g: f64| -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());

    let d = detection_loss(0.25, 0.75, 1);
    ensure!(close(d, -(0.25f64).ln(), 1e-6) && close(d, 1.3863, 1e-4), "detection loss {d}");

    let r = rec_loss(&[0.8, 0.1], &[1.0, 0.0]).map_err(|e| e.to_string())?;
    let r_oracle = (bce(0.8, 1.0) + bce(0.1, 0.0)) / 2.0;
    ensure!(close(r, r_oracle, 1e-6) && close(r, 0.1643, 1e-4), "rec loss {r}");

    let gt = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    let pred = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let dc = dice_coeff(&pred, &gt).map_err(|e| e.to_string())?;
    ensure!(close(dc, 2.0 * 2.0 / 6.0, 1e-6), "dice {dc}");

    let t = total_loss(&[0.8, 0.1], &[1.0, 0.0], 1.0, -1.0).map_err(|e| e.to_string())?;
    let t_oracle = r_oracle - 2.0 * 0.8 / (0.64 + 0.01 + 1.0);
    ensure!(close(t, t_oracle, 1e-6) && close(t, -0.8054, 1e-4), "total loss {t}");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..1000 {
        let a = loop {
            let density = rng.random_range(0.05..0.6);
            let a = random_binary(&mut rng, 256, density);
            if a.iter().any(|&v| v > 0.0) && a.iter().any(|&v| v == 0.0) {
                break a;
            }
        };
        let density = rng.random_range(0.0..1.0);
        let b = random_binary(&mut rng, 256, density);
        let disjoint: Vec<f64> = a
            .iter()
            .map(|&v| if v > 0.0 { 0.0 } else { f64::from(u8::from(rng.random_bool(0.5))) })
            .collect();
        let self_dice = dice_coeff(&a, &a).unwrap();
        ensure!(close(self_dice, 1.0, 1e-12), "trial {trial}: dice(a, a) = {self_dice}");
        let dj = dice_coeff(&a, &disjoint).unwrap();
        ensure!(dj == 0.0, "trial {trial}: disjoint dice {dj}");
        let (ab, ba) = (dice_coeff(&a, &b).unwrap(), dice_coeff(&b, &a).unwrap());
        ensure!(close(ab, ba, 1e-12), "trial {trial}: dice not symmetric {ab} vs {ba}");
    }
    Ok("hand examples within 1e-6; dice identities on 1000 random 16x16 pairs".into())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for case in 0..10 {
        let p: Vec<f64> = (0..64).map(|_| rng.random_range(0.02..0.98)).collect();
        let g = random_binary(&mut rng, 64, 0.4);
        let (_, grad) = total_loss_with_grad(&p, &g, 1.0, -1.0).unwrap();
        for i in 0..64 {
            let (mut up, mut down) = (p.clone(), p.clone());
            up[i] += h;
            down[i] -= h;
            let numeric =
                (total_loss(&up, &g, 1.0, -1.0).unwrap() - total_loss(&down, &g, 1.0, -1.0).unwrap()) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            ensure!(rel < 1e-4, "case {case} pixel {i}: analytic {} vs numeric {numeric}", grad[i]);
        }
    }
    Ok(format!("10 random 8x8 cases, worst relative error {worst:.2e}"))
}

fn synthesis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut feasible, mut infeasible) = (0, 0);
    for trial in 0..500 {
        let len = rng.random_range(1..=60);
        let (h, w) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let frames: Vec<SilhouetteFrame> = (0..len)
            .map(|_| SilhouetteFrame::from_fn(h, w, |_, _| f32::from(u8::from(rng.random_bool(0.5)))))
            .collect();
        let seq = SilhouetteSequence::new(frames, "s", "q").unwrap();
        let bin = DegreeBin::ALL[rng.random_range(0..5)];
        let n_clean = rng.random_range(0..=len.min(12));
        let spec = OcclusionSpec::for_bin(bin, n_clean, rng.random());
        let (lo, hi) = bin.range();
        match occlude_sequence(&seq, &spec) {
            Ok(occ) => {
                feasible += 1;
                let mask = occ.mask().unwrap();
                let m = mask.iter().filter(|&&b| b).count();
                let frac = m as f64 / len as f64;
                ensure!(frac >= lo - 1e-9 && frac < hi - 1e-9, "trial {trial}: fraction {frac} outside [{lo}, {hi})");
                ensure!(mask[..n_clean.min(len)].iter().all(|&b| !b), "trial {trial}: protected frame occluded");
                for (i, (a, b)) in seq.frames().iter().zip(occ.frames()).enumerate() {
                    if mask[i] {
                        ensure!(b.is_blank(), "trial {trial}: occluded frame {i} not blank");
                    } else {
                        let same = a.pixels().iter().zip(b.pixels()).all(|(x, y)| x.to_bits() == y.to_bits());
                        ensure!(same, "trial {trial}: clean frame {i} changed");
                    }
                }
                let again = occlude_sequence(&seq, &spec).unwrap();
                let bytes = |s: &SilhouetteSequence| serde_json::to_vec(s).unwrap();
                ensure!(bytes(&again) == bytes(&occ), "trial {trial}: seed did not reproduce output");
            }
            Err(Error::Infeasible(_)) => {
                infeasible += 1;
                let free = len.saturating_sub(n_clean);
                let possible = len > n_clean && (0..=free).any(|m| {
                    let f = m as f64 / len as f64;
                    f >= lo - 1e-9 && f < hi - 1e-9
                });
                ensure!(!possible, "trial {trial}: reported infeasible but a count fits");
            }
            Err(e) => return Err(format!("trial {trial}: unexpected error {e}")),
        }
    }
    Ok(format!("500 trials ({feasible} feasible, {infeasible} correctly infeasible)"))
}

fn low_rank(rng: &mut ChaCha8Rng, n: usize, d: usize, r: usize) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..r).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let b: Vec<Vec<f64>> = (0..r).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
    a.iter()
        .map(|ai| (0..d).map(|j| offset[j] + (0..r).map(|k| ai[k] * b[k][j]).sum::<f64>()).collect())
        .collect()
}

fn gei_pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_gei = 0.0f64;
    for _ in 0..50 {
        let (n, h, w) = (rng.random_range(1..=30), rng.random_range(4..=24), rng.random_range(4..=24));
        let frames: Vec<SilhouetteFrame> = (0..n)
            .map(|_| SilhouetteFrame::from_fn(h, w, |_, _| f32::from(u8::from(rng.random_bool(0.3)))))
            .collect();
        let seq = SilhouetteSequence::new(frames, "s", "q").unwrap();
        let gei = compute_gei(&seq).map_err(|e| e.to_string())?;
        for y in 0..h {
            for x in 0..w {
                let mut count = 0u32;
                for f in seq.frames() {
                    if f.get(y, x) == 1.0 {
                        count += 1;
                    }
                }
                let oracle = f64::from(count) / n as f64;
                worst_gei = worst_gei.max((gei.pixels()[y * w + x] - oracle).abs());
            }
        }
    }
    ensure!(worst_gei < 1e-12, "GEI differs from the averaging oracle by {worst_gei}");

    let mut checks = 0;
    for &(n, d, r) in &[(40usize, 12usize, 4usize), (20, 60, 5), (9, 9, 3)] {
        let data = low_rank(&mut rng, n, d, r);
        let scale: f64 = data.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        let full = PcaProjector::fit(&data, 1.0).map_err(|e| e.to_string())?;
        ensure!(full.n_components() == r, "rank {r} data gave {} components", full.n_components());
        let lambda_sum: f64 = full.eigenvalues.iter().sum();
        ensure!(
            close(lambda_sum, full.total_variance, 1e-6 * full.total_variance),
            "eigenvalue sum {lambda_sum} vs total variance {}",
            full.total_variance
        );
        ensure!(close(full.retained_variance, 1.0, 1e-6), "retained {}", full.retained_variance);
        for (i, bi) in full.basis.iter().enumerate() {
            for (j, bj) in full.basis.iter().enumerate() {
                let dot: f64 = bi.iter().zip(bj).map(|(a, b)| a * b).sum();
                ensure!(close(dot, f64::from(u8::from(i == j)), 1e-6), "basis not orthonormal ({i},{j}) = {dot}");
            }
        }
        let coords: Vec<Vec<f64>> = data.iter().map(|x| full.project_vec(x).unwrap()).collect();
        for k in 0..r {
            let var = coords.iter().map(|c| c[k] * c[k]).sum::<f64>() / (n - 1) as f64;
            ensure!(close(var, full.eigenvalues[k], 1e-6 * full.total_variance), "component {k} variance");
        }
        for (x, c) in data.iter().zip(&coords) {
            let back = full.reconstruct(c);
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure!(err < 1e-6 * scale.sqrt().max(1.0), "round trip error {err}");
        }

        let part = PcaProjector::fit(&data, 0.9).map_err(|e| e.to_string())?;
        let residual: f64 = data
            .iter()
            .map(|x| {
                let back = part.reconstruct(&part.project_vec(x).unwrap());
                x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / (n - 1) as f64;
        let share = residual / part.total_variance;
        ensure!(part.retained_variance >= 0.9 - 1e-12, "kept only {}", part.retained_variance);
        ensure!(
            close(share, 1.0 - part.retained_variance, 1e-6),
            "residual share {share} vs 1 - retained {}",
            1.0 - part.retained_variance
        );
        checks += 1;
    }
    let iso = vec![
        vec![1.0, 0.0, 0.0],
        vec![-1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, -1.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, -1.0],
    ];
    let p = PcaProjector::fit(&iso, 0.98).map_err(|e| e.to_string())?;
    ensure!(p.n_components() == 3, "isotropic data kept {} components", p.n_components());
    Ok(format!(
        "GEI max error {worst_gei:.1e} on 50 sequences; PCA identities on {checks} low-rank sets"
    ))
}

fn ranking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..1000 {
        let classes = rng.random_range(2..=10);
        let labels: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let probes = rng.random_range(1..=20);
        let preds: Vec<RankedPrediction> = (0..probes)
            .map(|_| {
                let scores = labels.iter().map(|l| (l.clone(), f64::from(rng.random_range(0..5u8)))).collect();
                RankedPrediction::from_scores(scores, Some(labels[rng.random_range(0..classes)].clone()))
            })
            .collect();
        let curve = cmc(&preds, classes).map_err(|e| e.to_string())?.0;
        ensure!(curve.windows(2).all(|w| w[0] <= w[1]), "set {set}: CMC not monotone {curve:?}");
        ensure!(curve[classes - 1] == 1.0, "set {set}: rank-{classes} accuracy {}", curve[classes - 1]);
        ensure!(curve.iter().all(|v| (0.0..=1.0).contains(v)), "set {set}: value out of range");
    }
    let ranked = |truth: &str| {
        let scores = ["a", "b", "c", "d"].iter().zip([4.0, 3.0, 2.0, 1.0]).map(|(l, s)| (l.to_string(), s)).collect();
        RankedPrediction::from_scores(scores, Some(truth.to_string()))
    };
    let hand = cmc(&[ranked("a"), ranked("b"), ranked("d")], 4).map_err(|e| e.to_string())?.0;
    ensure!(hand == vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0], "hand example gave {hand:?}");
    Ok("1000 random sets monotone and complete; hand CMC (1/3, 2/3, 2/3, 1) exact".into())
}

fn detector_toy() -> Outcome {
    let start = Instant::now();
    let frames = detector_frames(&ToyWalkerSpec::default(), 100, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [0u8, 1] {
        let mut class: Vec<_> = frames.iter().filter(|f| f.1 == label).cloned().collect();
        class.shuffle(&mut rng);
        test.extend(class.split_off(50));
        train.extend(class);
    }
    let cfg = DetectorTrainConfig {
        max_epochs: 20,
        seed: 6,
        ..Default::default()
    };
    let (model, log) = train_detector(&train, DetectorArchitecture::reduced(32, 32), &cfg).map_err(|e| e.to_string())?;
    let correct = test
        .iter()
        .filter(|(f, y)| is_occluded(model.class_probabilities(f).unwrap().0) == (*y == 1))
        .count();
    let acc = correct as f64 / test.len() as f64;
    let elapsed = start.elapsed();
    ensure!(log.epoch_losses.len() <= 20, "ran {} epochs", log.epoch_losses.len());
    ensure!(acc >= 0.95, "held-out accuracy {acc}");
    ensure!(elapsed <= Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "held-out accuracy {acc:.3} on {} frames after {} epochs in {:.1}s",
        test.len(),
        log.epoch_losses.len(),
        elapsed.as_secs_f64()
    ))
}

struct ToyStudy {
    config: PipelineConfig,
    gallery: Vec<SilhouetteSequence>,
    probes: Vec<SilhouetteSequence>,
    gallery_model: GalleryModel,
    sweep: SweepReport,
    epochs: usize,
    train_time: Duration,
}

fn toy_study() -> Result<ToyStudy, String> {
    let config = PipelineConfig::default();
    let seqs = generate_sequences(&config.toy).map_err(|e| e.to_string())?;
    let pick = |role| seqs.iter().filter(|s| s.1 == role).map(|s| s.0.clone()).collect::<Vec<_>>();
    let (gallery, probes) = (pick(Role::Gallery), pick(Role::Probe));
    let start = Instant::now();
    let (model, log) = train_reconstructor_stage(&config, &gallery, config.seed).map_err(|e| e.to_string())?;
    let train_time = start.elapsed();
    let gallery_model = GalleryModel::fit(&gallery, config.pca_variance, config.classifier.n_trees, config.seed)
        .map_err(|e| e.to_string())?;
    let sweep_cfg = SweepConfig {
        mask_source: MaskSource::GroundTruth,
        ..config.sweep.clone()
    };
    let sweep = run_sweep(&gallery_model, &probes, &model, None, &sweep_cfg).map_err(|e| e.to_string())?;
    Ok(ToyStudy {
        config,
        gallery,
        probes,
        gallery_model,
        sweep,
        epochs: log.epoch_losses.len(),
        train_time,
    })
}

fn reconstructor_toy(study: &ToyStudy) -> Outcome {
    let s = &study.sweep;
    let k = &study.config.reconstructor.train;
    ensure!(study.gallery.len() / 4 == 20, "expected 20 identities");
    ensure!((k.context_min, k.context_max) == (5, 10), "context range {:?}", (k.context_min, k.context_max));
    ensure!(study.epochs <= 62, "ran {} epochs", study.epochs);
    ensure!(study.train_time <= Duration::from_secs(20 * 60), "training took {:?}", study.train_time);
    let row = s.row("20-30%").ok_or("missing 20-30% row")?;
    let dice = row.mean_dice.ok_or("no occluded frames at 20-30%")?;
    ensure!(dice >= 0.85, "mean dice at 20-30% is {dice:.4}");
    let rank1: Vec<f64> = DegreeBin::ALL
        .iter()
        .map(|b| s.row(b.label()).and_then(|r| r.rank1_reconstructed).ok_or(format!("no rank-1 at {b}")))
        .collect::<Result<_, _>>()?;
    ensure!(rank1.windows(2).all(|w| w[0] >= w[1]), "rank-1 per bin not non-increasing: {rank1:?}");
    let fmt: Vec<String> = rank1.iter().map(|v| format!("{v:.3}")).collect();
    Ok(format!(
        "{} epochs in {:.0}s, dice@20-30% {dice:.3}, rank-1 by bin [{}]",
        study.epochs,
        study.train_time.as_secs_f64(),
        fmt.join(", ")
    ))
}

fn reconstruction_benefit(study: &ToyStudy) -> Outcome {
    let row = study.sweep.row("30-40%").ok_or("missing 30-40% row")?;
    let (r, b) = (row.rank1_reconstructed.ok_or("no probes")?, row.rank1_blank.ok_or("no probes")?);
    ensure!(r >= b, "reconstructed rank-1 {r} below blank-frame rank-1 {b}");
    Ok(format!("30-40%: rank-1 {r:.3} reconstructed vs {b:.3} with blank frames"))
}

fn robustness(study: &ToyStudy) -> Outcome {
    let hand = summarize_runs(&[vec![0.9], vec![0.8], vec![1.0], vec![0.7]]).map_err(|e| e.to_string())?;
    ensure!(close(hand.0[0], 0.85, 1e-12) && close(hand.1[0], 0.0125f64.sqrt(), 1e-12), "hand std {:?}", hand);

    let mut config = study.config.clone();
    config.reconstructor.train.epochs = 4;
    config.reconstructor.train.windows_per_epoch = Some(64);
    config.robustness.seeds = vec![11, 12, 13, 14];
    let report = robustness_pipeline(&config, &study.gallery, &study.probes, &study.gallery_model, false)
        .map_err(|e| e.to_string())?;
    ensure!(report.mean.len() == 5 && report.std.len() == 5, "expected ranks 1..5");
    for r in 0..5 {
        let vals: Vec<f64> = report.runs.iter().map(|c| c[r]).collect();
        let mean = vals.iter().sum::<f64>() / 4.0;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0).sqrt();
        ensure!(close(report.mean[r], mean, 1e-12) && close(report.std[r], std, 1e-12), "rank {} stats", r + 1);
        ensure!(report.std[r] >= 0.0, "negative std");
    }
    let mut dup = config.clone();
    dup.robustness.seeds = vec![7, 7];
    ensure!(
        robustness_pipeline(&dup, &study.gallery, &study.probes, &study.gallery_model, false).is_err(),
        "duplicate seeds accepted"
    );
    dup.robustness.seeds = vec![7, 7, 7, 7];
    let same = robustness_pipeline(&dup, &study.gallery, &study.probes, &study.gallery_model, true)
        .map_err(|e| e.to_string())?;
    ensure!(same.std.iter().all(|&s| s == 0.0), "forced-equal seeds gave std {:?}", same.std);
    let cells: Vec<String> = report.mean.iter().zip(&report.std).map(|(m, s)| format!("{m:.3}±{s:.3}")).collect();
    Ok(format!("M=4 rank 1-5 mean±std [{}]; equal seeds give zero std", cells.join(", ")))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let mut config = PipelineConfig::default();
    config.apply_seed(21);
    config.toy.identities = 6;
    config.toy.detector_frames_per_class = 40;
    config.detector.train.max_epochs = 8;
    config.reconstructor.train.epochs = 3;
    config.reconstructor.train.windows_per_epoch = Some(48);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_pipeline(&config, d.path()).map_err(|e| e.to_string())?;
    }
    let (a, b) = (read_tree(&dirs[0].path().join("reports")), read_tree(&dirs[1].path().join("reports")));
    let (ma, mb) = (read_tree(&dirs[0].path().join("models")), read_tree(&dirs[1].path().join("models")));
    ensure!(a.keys().any(|k| k.ends_with(".csv")) && a.keys().any(|k| k.ends_with(".json")), "missing reports");
    ensure!(a == b, "reports differ between runs");
    ensure!(ma == mb, "checkpoints differ between runs");
    Ok(format!("{} report files and {} checkpoints byte-identical across two runs", a.len(), ma.len()))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.1}s)"),
        Err(why) => println!("FAIL [{id:>2}] {name}: {why} ({secs:.1}s)"),
    }
    result.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run(1, "loss math", loss_math);
    ok &= run(2, "gradient check", gradient_check);
    ok &= run(3, "occlusion synthesis", synthesis);
    ok &= run(4, "GEI and PCA oracles", gei_pca);
    ok &= run(5, "ranking and CMC", ranking);
    ok &= run(6, "detector toy task", detector_toy);
    let start = Instant::now();
    let study = catch_unwind(toy_study).unwrap_or_else(|_| Err("toy study panicked".into()));
    let setup = start.elapsed().as_secs_f64();
    match &study {
        Ok(s) => {
            ok &= run(7, "reconstructor toy task", || reconstructor_toy(s));
            ok &= run(8, "reconstruction benefit", || reconstruction_benefit(s));
            ok &= run(9, "robustness study", || robustness(s));
        }
        Err(e) => {
            for (id, name) in [(7, "reconstructor toy task"), (8, "reconstruction benefit"), (9, "robustness study")] {
                println!("FAIL [{id:>2}] {name}: toy study failed after {setup:.1}s: {e}");
            }
            ok = false;
        }
    }
    ok &= run(10, "pipeline determinism", determinism);
    if !ok {
        std::process::exit(1);
    }
}
