use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgait_core::eval::{cmc, stratified_split};
use rgait_core::features::{compute_gei, PcaProjector};
use rgait_core::losses::dice_coeff;
use rgait_core::occlusion::{degree_bin, occlude_sequence, OcclusionSpec};
use rgait_core::recognizer::RankedPrediction;
use rgait_core::silhouette::{SilhouetteFrame, SilhouetteSequence};

fn binary(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], n)
}

fn sequence(max_len: usize) -> impl Strategy<Value = SilhouetteSequence> {
    (1..=max_len, 2usize..6, 2usize..6).prop_flat_map(|(len, h, w)| {
        proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0f32), Just(1.0)], h * w), len)
            .prop_map(move |fs| {
                let frames = fs.into_iter().map(|p| SilhouetteFrame::new(h, w, p).unwrap()).collect();
                SilhouetteSequence::new(frames, "s", "q").unwrap()
            })
    })
}

proptest! {
    #[test]
    fn dice_is_bounded_and_symmetric(a in binary(64), b in binary(64)) {
        let ab = dice_coeff(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - dice_coeff(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn occlusion_respects_bin_and_protection(seq in sequence(40), lo_i in 0usize..5, n_clean in 0usize..8, seed: u64) {
        let lo = lo_i as f64 / 10.0;
        let spec = OcclusionSpec::new(lo, lo + 0.1, n_clean, seed).unwrap();
        if let Ok(occ) = occlude_sequence(&seq, &spec) {
            let mask = occ.mask().unwrap();
            let m = mask.iter().filter(|&&x| x).count() as f64;
            let f = m / seq.len() as f64;
            prop_assert!(f >= lo - 1e-9 && f < lo + 0.1 - 1e-9);
            prop_assert!(mask[..n_clean.min(seq.len())].iter().all(|&x| !x));
            prop_assert_eq!(&seq.frames()[..n_clean.min(seq.len())], &occ.frames()[..n_clean.min(seq.len())]);
            if m > 0.0 {
                prop_assert!(degree_bin(mask).is_ok());
            }
        }
    }

    #[test]
    fn gei_lies_in_unit_interval(seq in sequence(20)) {
        let g = compute_gei(&seq).unwrap();
        prop_assert!(g.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pca_round_trips_training_data(
        rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 5), 3..12)
    ) {
        let p = PcaProjector::fit(&rows, 1.0).unwrap();
        for x in &rows {
            let back = p.reconstruct(&p.project_vec(x).unwrap());
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cmc_is_monotone(scores in proptest::collection::vec(proptest::collection::vec(0u8..4, 4), 1..15),
                       truths in proptest::collection::vec(0usize..4, 15)) {
        let labels = ["a", "b", "c", "d"];
        let preds: Vec<_> = scores.iter().zip(&truths).map(|(s, &t)| {
            let sc = labels.iter().zip(s).map(|(l, &v)| (l.to_string(), f64::from(v))).collect();
            RankedPrediction::from_scores(sc, Some(labels[t].to_string()))
        }).collect();
        let c = cmc(&preds, 4).unwrap().0;
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(c[3], 1.0);
    }

    #[test]
    fn stratified_split_partitions(counts in proptest::collection::vec(2usize..12, 1..10), seed: u64) {
        let labels: Vec<String> = counts.iter().enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(format!("c{c}"), n)).collect();
        let (train, test) = stratified_split(&labels, 0.75, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..counts.len() {
            let l = format!("c{c}");
            prop_assert!(train.iter().any(|&i| labels[i] == l));
            prop_assert!(test.iter().any(|&i| labels[i] == l));
        }
    }
}

#[test]
fn split_of_280_is_210_70() {
    let labels: Vec<String> = (0..280).map(|i| format!("s{}", i % 20)).collect();
    let (train, test) = stratified_split(&labels, 0.75, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!((train.len(), test.len()), (210, 70));
}
