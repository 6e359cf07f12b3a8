//! Binary silhouette frames and sequences, plus the preprocessing applied
//! before any model sees them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grayscale silhouette image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteFrame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

/// Inclusive pixel bounds of the foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }
}

impl SilhouetteFrame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", height * width),
                found: format!("{} pixels", pixels.len()),
            });
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("frame contains non-finite pixels".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn blank(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0);
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0);
        let mut pixels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0.0)
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p >= 0.5).count()
    }

    /// Bounding box of pixels at or above 0.5, `None` for a blank frame.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) < 0.5 {
                    continue;
                }
                bb = Some(match bb {
                    None => BoundingBox {
                        top: y,
                        left: x,
                        bottom: y,
                        right: x,
                    },
                    Some(b) => BoundingBox {
                        top: b.top.min(y),
                        left: b.left.min(x),
                        bottom: b.bottom.max(y),
                        right: b.right.max(x),
                    },
                });
            }
        }
        bb
    }

    /// Thresholds every pixel at 0.5.
    pub fn binarized(&self) -> Self {
        validate_binary(self, 0.0).0
    }
}

/// Snaps every pixel to 0 or 1 (threshold 0.5, ties go to 1) and reports
/// the fraction of pixels that moved by more than `tolerance`.
pub fn validate_binary(frame: &SilhouetteFrame, tolerance: f32) -> (SilhouetteFrame, f64) {
    let mut moved = 0usize;
    let pixels = frame
        .pixels
        .iter()
        .map(|&p| {
            let q = if p >= 0.5 { 1.0 } else { 0.0 };
            if (q - p).abs() > tolerance {
                moved += 1;
            }
            q
        })
        .collect();
    let out = SilhouetteFrame {
        height: frame.height,
        width: frame.width,
        pixels,
    };
    (out, moved as f64 / frame.pixels.len() as f64)
}

/// Source index range covered by destination index `j` when resampling
/// `src` samples onto `dst` samples. Every source index is covered by at
/// least one destination index, which keeps foreground extremes in place.
fn footprint(j: usize, src: usize, dst: usize) -> (usize, usize) {
    let lo = j * src / dst;
    let hi = ((j + 1) * src / dst).max(lo + 1).min(src);
    (lo, hi)
}

/// Crops to the foreground bounding box, scales it (aspect preserved) to
/// the target height, or to the target width if that is the tighter fit,
/// and centres it horizontally. Blank frames map to blank frames.
pub fn normalize_frame(frame: &SilhouetteFrame, target: (usize, usize)) -> Result<SilhouetteFrame> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::InvalidInput(format!(
            "normalization target must be positive, got {th}x{tw}"
        )));
    }
    let Some(bb) = frame.bounding_box() else {
        return Ok(SilhouetteFrame::blank(th, tw));
    };
    let (bh, bw) = (bb.height(), bb.width());
    let (dh, dw) = if bw * th <= tw * bh {
        let dw = ((bw * th) as f64 / bh as f64).round().clamp(1.0, tw as f64) as usize;
        (th, dw)
    } else {
        let dh = ((bh * tw) as f64 / bw as f64).round().clamp(1.0, th as f64) as usize;
        (dh, tw)
    };
    let top = (th - dh) / 2;
    let left = (tw - dw) / 2;
    let mut out = SilhouetteFrame::blank(th, tw);
    for oy in 0..dh {
        let (y0, y1) = footprint(oy, bh, dh);
        for ox in 0..dw {
            let (x0, x1) = footprint(ox, bw, dw);
            let on = (y0..y1).any(|y| (x0..x1).any(|x| frame.get(bb.top + y, bb.left + x) >= 0.5));
            if on {
                out.pixels[(top + oy) * tw + left + ox] = 1.0;
            }
        }
    }
    Ok(out)
}

/// Ordered silhouettes of one walking sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSequence {
    frames: Vec<SilhouetteFrame>,
    pub subject_id: String,
    pub sequence_id: String,
    occlusion_mask: Option<Vec<bool>>,
}

impl SilhouetteSequence {
    pub fn new(
        frames: Vec<SilhouetteFrame>,
        subject_id: impl Into<String>,
        sequence_id: impl Into<String>,
    ) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().find(|f| f.dims() != first.dims()) {
                return Err(Error::DimensionMismatch {
                    expected: format!("{}x{}", first.height, first.width),
                    found: format!("{}x{}", bad.height, bad.width),
                });
            }
        }
        Ok(Self {
            frames,
            subject_id: subject_id.into(),
            sequence_id: sequence_id.into(),
            occlusion_mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.frames.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("mask of length {}", self.frames.len()),
                found: format!("mask of length {}", mask.len()),
            });
        }
        self.occlusion_mask = Some(mask);
        Ok(self)
    }

    pub fn without_mask(mut self) -> Self {
        self.occlusion_mask = None;
        self
    }

    pub fn frames(&self) -> &[SilhouetteFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<SilhouetteFrame> {
        self.frames
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.occlusion_mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(SilhouetteFrame::dims)
    }

    /// Same identity labels and mask, new frames of matching count.
    pub fn with_frames(&self, frames: Vec<SilhouetteFrame>) -> Result<Self> {
        let seq = Self::new(frames, self.subject_id.clone(), self.sequence_id.clone())?;
        match &self.occlusion_mask {
            Some(m) => seq.with_mask(m.clone()),
            None => Ok(seq),
        }
    }

    pub fn normalized(&self, target: (usize, usize)) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|f| normalize_frame(f, target))
            .collect::<Result<Vec<_>>>()?;
        self.with_frames(frames)
    }
}
