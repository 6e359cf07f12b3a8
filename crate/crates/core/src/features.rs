//! Gait Energy Images and their PCA projection.

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::silhouette::SilhouetteSequence;

/// Pixel-wise mean of the binary silhouettes of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitEnergyImage {
    pub height: usize,
    pub width: usize,
    pixels: Vec<f64>,
    pub subject_id: String,
    pub sequence_id: String,
    /// Number of frames averaged.
    pub frame_count: usize,
}

impl GaitEnergyImage {
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Writes a 16-bit grayscale PNG and a JSON sidecar with the labels.
    /// Values are multiples of `1 / frame_count`, so the pair reloads exactly.
    pub fn save(&self, png: &Path) -> Result<()> {
        if let Some(dir) = png.parent() {
            fs::create_dir_all(dir)?;
        }
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                let v = self.pixels[y as usize * self.width + x as usize];
                Luma([(v * 65535.0).round() as u16])
            });
        img.save(png).map_err(|e| Error::Decode {
            path: png.to_path_buf(),
            reason: e.to_string(),
        })?;
        let meta = GeiMeta {
            subject_id: self.subject_id.clone(),
            sequence_id: self.sequence_id.clone(),
            height: self.height,
            width: self.width,
            frame_count: self.frame_count,
        };
        fs::write(png.with_extension("json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(png: &Path) -> Result<Self> {
        let meta_path = png.with_extension("json");
        let meta: GeiMeta = serde_json::from_str(
            &fs::read_to_string(&meta_path).map_err(|_| Error::MissingFile(meta_path.clone()))?,
        )?;
        if !png.exists() {
            return Err(Error::MissingFile(png.to_path_buf()));
        }
        let img = image::open(png)
            .map_err(|e| Error::Decode {
                path: png.to_path_buf(),
                reason: e.to_string(),
            })?
            .to_luma16();
        if (img.height() as usize, img.width() as usize) != (meta.height, meta.width) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", meta.height, meta.width),
                found: format!("{}x{}", img.height(), img.width()),
            });
        }
        let n = meta.frame_count.max(1) as f64;
        let pixels = img
            .pixels()
            .map(|p| (f64::from(p.0[0]) / 65535.0 * n).round() / n)
            .collect();
        Ok(Self {
            height: meta.height,
            width: meta.width,
            pixels,
            subject_id: meta.subject_id,
            sequence_id: meta.sequence_id,
            frame_count: meta.frame_count,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GeiMeta {
    subject_id: String,
    sequence_id: String,
    height: usize,
    width: usize,
    frame_count: usize,
}

pub fn compute_gei(seq: &SilhouetteSequence) -> Result<GaitEnergyImage> {
    let (h, w) = seq
        .dims()
        .ok_or_else(|| Error::InvalidInput("cannot compute a GEI of an empty sequence".into()))?;
    if let Some(i) = seq.frames().iter().position(|f| !f.is_binary()) {
        return Err(Error::InvalidInput(format!("frame {i} is not binary")));
    }
    let mut sum = vec![0.0f64; h * w];
    for f in seq.frames() {
        for (s, &p) in sum.iter_mut().zip(f.pixels()) {
            *s += f64::from(p);
        }
    }
    let n = seq.len() as f64;
    Ok(GaitEnergyImage {
        height: h,
        width: w,
        pixels: sum.into_iter().map(|s| s / n).collect(),
        subject_id: seq.subject_id.clone(),
        sequence_id: seq.sequence_id.clone(),
        frame_count: seq.len(),
    })
}

/// Mean and orthonormal principal directions retaining a target share of
/// the training variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    pub mean: Vec<f64>,
    /// Row-major `n_components x dim`.
    pub basis: Vec<Vec<f64>>,
    /// Sample variance (denominator `n - 1`) along each retained direction.
    pub eigenvalues: Vec<f64>,
    pub retained_variance: f64,
    pub total_variance: f64,
    pub dim: usize,
}

impl PcaProjector {
    pub fn fit(samples: &[Vec<f64>], variance_threshold: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("PCA needs at least 2 samples".into()));
        }
        if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "variance threshold {variance_threshold} must lie in (0, 1]"
            )));
        }
        let dim = samples[0].len();
        if dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("{dim} features per sample"),
                found: "ragged samples".into(),
            });
        }
        let n = samples.len();
        let mut mean = vec![0.0; dim];
        for s in samples {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
        let denom = (n - 1) as f64;
        let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;

        // Eigen-decompose the smaller of the Gram and covariance matrices.
        let mut pairs: Vec<(f64, Vec<f64>)> = if n <= dim {
            let gram = &centered * centered.transpose();
            let eig = SymmetricEigen::new(gram);
            (0..n)
                .filter(|&i| eig.eigenvalues[i] > 0.0)
                .map(|i| {
                    let lambda = eig.eigenvalues[i];
                    let u = eig.eigenvectors.column(i);
                    let v = centered.transpose() * u / lambda.sqrt();
                    (lambda / denom, v.iter().copied().collect())
                })
                .collect()
        } else {
            let cov = centered.transpose() * &centered / denom;
            let eig = SymmetricEigen::new(cov);
            (0..dim)
                .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
                .collect()
        };
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let lambda_max = pairs.first().map_or(0.0, |p| p.0);
        let rank_tol = lambda_max * 1e-10;
        pairs.retain(|p| p.0 > rank_tol);
        if pairs.is_empty() || total_variance <= 0.0 {
            return Err(Error::InvalidInput("PCA samples have zero variance".into()));
        }

        let mut keep = pairs.len();
        let mut cum = 0.0;
        for (k, (lambda, _)) in pairs.iter().enumerate() {
            cum += lambda;
            if cum / total_variance >= variance_threshold - 1e-12 {
                keep = k + 1;
                break;
            }
        }
        pairs.truncate(keep);

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(keep);
        for (_, v) in &pairs {
            let mut v = v.clone();
            // Two passes of modified Gram-Schmidt against the accepted vectors.
            for _ in 0..2 {
                for b in &basis {
                    let d = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
                let norm = dot(&v, &v).sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
            }
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            basis.push(v);
        }
        let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        Ok(Self {
            mean,
            retained_variance: eigenvalues.iter().sum::<f64>() / total_variance,
            basis,
            eigenvalues,
            total_variance,
            dim,
        })
    }

    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn project_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", self.dim),
                found: format!("{} features", x.len()),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.basis.iter().map(|b| dot(b, &centered)).collect())
    }

    pub fn project(&self, gei: &GaitEnergyImage) -> Result<Vec<f64>> {
        self.project_vec(gei.pixels())
    }

    /// Maps projected coordinates back into the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, b) in coords.iter().zip(&self.basis) {
            out.iter_mut().zip(b).for_each(|(o, v)| *o += c * v);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fit_pca(geis: &[GaitEnergyImage], variance_threshold: f64) -> Result<PcaProjector> {
    if let Some(first) = geis.first() {
        if let Some(bad) = geis.iter().find(|g| (g.height, g.width) != (first.height, first.width)) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", first.height, first.width),
                found: format!("{}x{}", bad.height, bad.width),
            });
        }
    }
    let samples: Vec<Vec<f64>> = geis.iter().map(|g| g.pixels.clone()).collect();
    PcaProjector::fit(&samples, variance_threshold)
}

pub fn project(proj: &PcaProjector, gei: &GaitEnergyImage) -> Result<Vec<f64>> {
    proj.project(gei)
}
