//! Random-forest identification over projected GEI features.
//!
//! Each tree is a CART classifier grown to purity on a bootstrap sample,
//! considering `ceil(sqrt(d))` random features per split. Class scores are
//! the fraction of trees voting for each class.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TREES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    // First maximum, so ties go to the lowest class index.
    counts
        .iter()
        .enumerate()
        .fold((0, 0), |(bi, bc), (i, &c)| if c > bc { (i, c) } else { (bi, bc) })
        .0
}

impl TreeBuilder<'_> {
    fn build(&mut self, samples: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let mut counts = vec![0usize; self.n_classes];
        for &s in &samples {
            counts[self.y[s]] += 1;
        }
        let class = majority(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || samples.len() < 2 {
            self.nodes[id] = Node::Leaf { class };
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&samples, &counts) else {
            self.nodes[id] = Node::Leaf { class };
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.into_iter().partition(|&s| self.x[s][feature] <= threshold);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, samples: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let parent = gini(counts, samples.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let candidates = index::sample(&mut self.rng, d, self.max_features.min(d)).into_vec();
        let mut order: Vec<usize> = samples.to_vec();
        for feature in candidates {
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = counts.to_vec();
            let n = order.len();
            for i in 0..n - 1 {
                let c = self.y[order[i]];
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (self.x[order[i]][feature], self.x[order[i + 1]][feature]);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, ..)| gain > g) {
                    best = Some((gain, feature, a + (b - a) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Bagged ensemble of decision trees over a fixed, sorted label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitClassifier {
    trees: Vec<DecisionTree>,
    classes: Vec<String>,
    n_features: usize,
    pub seed: u64,
}

pub fn train_classifier(features: &[Vec<f64>], labels: &[String], n_trees: usize, seed: u64) -> Result<GaitClassifier> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty features and labels, got {} and {}",
            features.len(),
            labels.len()
        )));
    }
    if n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: format!("{d} features"),
            found: "ragged feature vectors".into(),
        });
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput("training data holds a single class".into()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class set"))
        .collect();
    let max_features = ((d as f64).sqrt().ceil() as usize).max(1);
    let n = features.len();
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = TreeBuilder {
                x: features,
                y: &y,
                n_classes: classes.len(),
                max_features,
                rng,
                nodes: Vec::new(),
            };
            b.build(bootstrap);
            DecisionTree { nodes: b.nodes }
        })
        .collect();
    Ok(GaitClassifier {
        trees,
        classes,
        n_features: d,
        seed,
    })
}

/// All trained classes ordered by descending vote share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub ranking: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<String>,
}

impl RankedPrediction {
    /// Orders arbitrary non-negative scores: descending score, then
    /// ascending label. Scores are normalized to sum to one.
    pub fn from_scores(mut scores: Vec<(String, f64)>, true_label: Option<String>) -> Self {
        let total: f64 = scores.iter().map(|s| s.1).sum();
        if total > 0.0 {
            scores.iter_mut().for_each(|s| s.1 /= total);
        }
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self {
            ranking: scores,
            true_label,
        }
    }

    pub fn top(&self) -> Option<&str> {
        self.ranking.first().map(|r| r.0.as_str())
    }

    /// 1-based rank of the true label, `None` if absent.
    pub fn rank_of_truth(&self) -> Option<usize> {
        let t = self.true_label.as_deref()?;
        self.ranking.iter().position(|r| r.0 == t).map(|p| p + 1)
    }
}

impl GaitClassifier {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn votes(&self, feature: &[f64]) -> Result<Vec<usize>> {
        if feature.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", self.n_features),
                found: format!("{} features", feature.len()),
            });
        }
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict(feature)] += 1;
        }
        Ok(votes)
    }

    pub fn predict_ranked(&self, feature: &[f64]) -> Result<RankedPrediction> {
        let votes = self.votes(feature)?;
        let n = self.trees.len() as f64;
        let scores = self
            .classes
            .iter()
            .zip(votes)
            .map(|(c, v)| (c.clone(), v as f64 / n))
            .collect();
        Ok(RankedPrediction::from_scores(scores, None))
    }
}

pub fn predict_ranked(clf: &GaitClassifier, feature: &[f64]) -> Result<RankedPrediction> {
    clf.predict_ranked(feature)
}

/// Fraction of predictions whose true label is within the top `k`.
pub fn rank_k_accuracy(preds: &[RankedPrediction], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("rank k must be at least 1".into()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    let mut hits = 0usize;
    for p in preds {
        if p.true_label.is_none() {
            return Err(Error::InvalidInput("prediction without a true label".into()));
        }
        if p.rank_of_truth().is_some_and(|r| r <= k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (label, centre) in [("a", (-3.0, 0.0)), ("b", (3.0, 1.0))] {
            for _ in 0..per_class {
                x.push(vec![centre.0 + noise.sample(&mut rng), centre.1 + noise.sample(&mut rng)]);
                y.push(label.to_string());
            }
        }
        (x, y)
    }

    fn ranked(labels: &[&str], truth: &str) -> RankedPrediction {
        let n = labels.len() as f64;
        RankedPrediction {
            ranking: labels.iter().enumerate().map(|(i, l)| (l.to_string(), (n - i as f64) / (n * (n + 1.0) / 2.0))).collect(),
            true_label: Some(truth.into()),
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (x, y) = blobs(50, 1);
        let clf = train_classifier(&x, &y, 25, 7).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(f, l)| clf.predict_ranked(f).unwrap().top() == Some(l.as_str()))
            .count();
        assert!(correct as f64 / x.len() as f64 >= 0.98);
    }

    #[test]
    fn single_tree_forest_and_single_class_error() {
        let (x, y) = blobs(10, 2);
        let clf = train_classifier(&x, &y, 1, 0).unwrap();
        let p = clf.predict_ranked(&x[0]).unwrap();
        assert_eq!(p.ranking[0].1, 1.0);
        let same = vec!["a".to_string(); x.len()];
        assert!(train_classifier(&x, &same, 10, 0).is_err());
        assert!(train_classifier(&[], &[], 10, 0).is_err());
        assert!(clf.predict_ranked(&[1.0]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = blobs(20, 3);
        assert_eq!(train_classifier(&x, &y, 10, 5).unwrap(), train_classifier(&x, &y, 10, 5).unwrap());
    }

    #[test]
    fn ties_break_by_label() {
        let p = RankedPrediction::from_scores(vec![("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.0)], None);
        let order: Vec<&str> = p.ranking.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        let unanimous = RankedPrediction::from_scores(vec![("z".into(), 7.0), ("a".into(), 0.0)], None);
        assert_eq!(unanimous.ranking[0], ("z".to_string(), 1.0));
    }

    #[test]
    fn rank_k_hand_count() {
        let preds = vec![
            ranked(&["a", "b", "c", "d"], "a"),
            ranked(&["a", "b", "c", "d"], "b"),
            ranked(&["a", "b", "c", "d"], "d"),
        ];
        assert!((rank_k_accuracy(&preds, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((rank_k_accuracy(&preds, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rank_k_accuracy(&preds, 4).unwrap(), 1.0);
        assert!(rank_k_accuracy(&preds, 0).is_err());
        let unlabelled = RankedPrediction {
            true_label: None,
            ..preds[0].clone()
        };
        assert!(rank_k_accuracy(&[unlabelled], 1).is_err());
    }
}
