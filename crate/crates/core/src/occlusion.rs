//! Synthetic frame-level occlusion: randomly chosen frames of a clean
//! sequence are blackened and recorded in the occlusion mask.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::silhouette::{SilhouetteFrame, SilhouetteSequence};

/// Requested occlusion degree `[degree_low, degree_high)` as a fraction of
/// the full sequence length, with the first `n_initial_clean` frames
/// protected from placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    pub degree_low: f64,
    pub degree_high: f64,
    pub n_initial_clean: usize,
    pub seed: u64,
}

impl OcclusionSpec {
    pub fn new(degree_low: f64, degree_high: f64, n_initial_clean: usize, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&degree_low) || !(degree_low < degree_high && degree_high <= 0.5) {
            return Err(Error::Config(format!(
                "occlusion degree range [{degree_low}, {degree_high}) must satisfy 0 <= low < high <= 0.5"
            )));
        }
        Ok(Self {
            degree_low,
            degree_high,
            n_initial_clean,
            seed,
        })
    }

    pub fn for_bin(bin: DegreeBin, n_initial_clean: usize, seed: u64) -> Self {
        let (lo, hi) = bin.range();
        Self::new(lo, hi, n_initial_clean, seed).expect("canonical bins are valid")
    }

    /// Occluded-frame counts `m` with `m / len` inside the requested range.
    pub fn admissible_counts(&self, len: usize) -> Vec<usize> {
        // Compare m / len against the bounds with a small slack so that
        // e.g. 0.4 * 20 is treated as exactly 8.
        const SLACK: f64 = 1e-9;
        (0..=len)
            .filter(|&m| {
                let f = m as f64 / len as f64;
                f >= self.degree_low - SLACK && f < self.degree_high - SLACK
            })
            .collect()
    }
}

/// Blackens a random subset of frames and marks them in the mask.
pub fn occlude_sequence(seq: &SilhouetteSequence, spec: &OcclusionSpec) -> Result<SilhouetteSequence> {
    if seq.mask().is_some() {
        return Err(Error::InvalidInput(
            "sequence already carries an occlusion mask".into(),
        ));
    }
    let len = seq.len();
    if len <= spec.n_initial_clean {
        return Err(Error::Infeasible(format!(
            "sequence of length {len} has no frames after {} protected frames",
            spec.n_initial_clean
        )));
    }
    let free = len - spec.n_initial_clean;
    let counts: Vec<usize> = spec
        .admissible_counts(len)
        .into_iter()
        .filter(|&m| m <= free)
        .collect();
    if counts.is_empty() {
        let need = spec.admissible_counts(len).first().copied();
        return Err(Error::Infeasible(match need {
            Some(m) => format!("need at least {m} occluded frames but only {free} positions are free"),
            None => format!(
                "no frame count of a length-{len} sequence lies in [{}, {})",
                spec.degree_low, spec.degree_high
            ),
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = counts[rng.random_range(0..counts.len())];
    let mut mask = vec![false; len];
    for i in index::sample(&mut rng, free, m) {
        mask[spec.n_initial_clean + i] = true;
    }
    let (h, w) = seq.dims().expect("non-empty sequence");
    let frames = seq
        .frames()
        .iter()
        .zip(&mask)
        .map(|(f, &occ)| if occ { SilhouetteFrame::blank(h, w) } else { f.clone() })
        .collect();
    SilhouetteSequence::new(frames, seq.subject_id.clone(), seq.sequence_id.clone())?.with_mask(mask)
}

/// The five occlusion-degree categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DegreeBin {
    #[serde(rename = "≤10%")]
    UpTo10,
    #[serde(rename = "10-20%")]
    From10To20,
    #[serde(rename = "20-30%")]
    From20To30,
    #[serde(rename = "30-40%")]
    From30To40,
    #[serde(rename = "40-50%")]
    From40To50,
}

impl DegreeBin {
    pub const ALL: [DegreeBin; 5] = [
        DegreeBin::UpTo10,
        DegreeBin::From10To20,
        DegreeBin::From20To30,
        DegreeBin::From30To40,
        DegreeBin::From40To50,
    ];

    fn index(self) -> usize {
        self as usize
    }

    /// Half-open synthesis range `[low, high)`.
    pub fn range(self) -> (f64, f64) {
        let i = self.index() as f64;
        (i / 10.0, (i + 1.0) / 10.0)
    }

    pub fn label(self) -> &'static str {
        match self {
            DegreeBin::UpTo10 => "≤10%",
            DegreeBin::From10To20 => "10-20%",
            DegreeBin::From20To30 => "20-30%",
            DegreeBin::From30To40 => "30-40%",
            DegreeBin::From40To50 => "40-50%",
        }
    }
}

impl fmt::Display for DegreeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DegreeBin {
    type Err = Error;

    /// Accepts `0-10`, `10-20`, ... with an optional `%`, or the labels.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().trim_end_matches('%');
        Ok(match key {
            "0-10" | "≤10" | "<=10" => DegreeBin::UpTo10,
            "10-20" => DegreeBin::From10To20,
            "20-30" => DegreeBin::From20To30,
            "30-40" => DegreeBin::From30To40,
            "40-50" => DegreeBin::From40To50,
            _ => return Err(Error::Config(format!("unknown occlusion bin {s:?}"))),
        })
    }
}

/// Classifies a mask by its occluded fraction using the closed-right bins
/// `[0, .1], (.1, .2], (.2, .3], (.3, .4], (.4, .5]`.
pub fn degree_bin(mask: &[bool]) -> Result<DegreeBin> {
    if mask.is_empty() {
        return Err(Error::InvalidInput("empty mask".into()));
    }
    let occluded = mask.iter().filter(|&&b| b).count();
    let len = mask.len();
    // occluded / len <= k / 10  <=>  10 * occluded <= k * len
    DegreeBin::ALL
        .iter()
        .enumerate()
        .find(|(k, _)| 10 * occluded <= (k + 1) * len)
        .map(|(_, &b)| b)
        .ok_or(Error::OutOfRange(occluded as f64 / len as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionReport {
    /// Indices whose frames differ between the two sequences.
    pub differing: Vec<usize>,
    /// Every differing frame is blank and masked, and every masked frame is blank.
    pub consistent: bool,
}

pub fn verify_occlusion(original: &SilhouetteSequence, occluded: &SilhouetteSequence) -> Result<OcclusionReport> {
    if original.len() != occluded.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} frames", original.len()),
            found: format!("{} frames", occluded.len()),
        });
    }
    if original.dims() != occluded.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", original.dims()),
            found: format!("{:?}", occluded.dims()),
        });
    }
    let mask = occluded.mask();
    let masked = |i: usize| mask.is_some_and(|m| m[i]);
    let differing: Vec<usize> = (0..original.len())
        .filter(|&i| original.frames()[i] != occluded.frames()[i])
        .collect();
    let consistent = differing
        .iter()
        .all(|&i| masked(i) && occluded.frames()[i].is_blank())
        && (0..occluded.len()).all(|i| !masked(i) || occluded.frames()[i].is_blank());
    Ok(OcclusionReport {
        differing,
        consistent,
    })
}
