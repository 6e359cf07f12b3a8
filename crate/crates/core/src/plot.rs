//! Bare-bones raster line plots for `--plot`.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const W: u32 = 480;
const H: u32 = 320;
const MARGIN: u32 = 30;
const COLORS: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
            let (px, py) = (x + dx, y + dy);
            if (0..W as i64).contains(&px) && (0..H as i64).contains(&py) {
                img.put_pixel(px as u32, py as u32, c);
            }
        }
    }
}

/// Plots each series against its 1-based index on a `[0, 1]` y axis.
pub fn plot_series(series: &[Vec<f64>], path: &Path) -> Result<()> {
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let (left, right, top, bottom) = (MARGIN as i64, (W - MARGIN) as i64, MARGIN as i64, (H - MARGIN) as i64);
    let black = Rgb([0, 0, 0]);
    line(&mut img, (left, bottom), (right, bottom), black);
    line(&mut img, (left, top), (left, bottom), black);
    let grey = Rgb([210, 210, 210]);
    for q in 1..=4 {
        let y = bottom - (bottom - top) * q / 4;
        line(&mut img, (left + 2, y), (right, y), grey);
    }
    let px = |i: usize| left + if n > 1 { (right - left) * i as i64 / (n as i64 - 1) } else { (right - left) / 2 };
    let py = |v: f64| bottom - ((bottom - top) as f64 * v.clamp(0.0, 1.0)).round() as i64;
    for (s, ys) in series.iter().enumerate() {
        let c = Rgb(COLORS[s % COLORS.len()]);
        for (i, w) in ys.windows(2).enumerate() {
            line(&mut img, (px(i), py(w[0])), (px(i + 1), py(w[1])), c);
        }
        for (i, &v) in ys.iter().enumerate() {
            let (x, y) = (px(i), py(v));
            line(&mut img, (x - 2, y - 2), (x + 2, y + 2), c);
            line(&mut img, (x - 2, y + 2), (x + 2, y - 2), c);
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}
