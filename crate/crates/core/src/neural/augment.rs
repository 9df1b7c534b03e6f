//! Image augmentations that keep specimen scale intact. Nothing here shears,
//! crops or rescales, since apparent size carries the mass signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::Raster;

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AugmentPolicy {
    #[default]
    None,
    /// A uniformly drawn element of the 8-element dihedral group.
    Flips90,
    /// Rotation by a uniform angle, bilinear resampling.
    ContinuousRotation,
    /// Brightness and contrast jitter.
    PhotometricLite,
}

pub fn flip_horizontal(r: &Raster) -> Raster {
    let mut out = r.clone();
    for row in 0..r.height {
        for col in 0..r.width {
            out.set(row, col, r.get(row, r.width - 1 - col));
        }
    }
    out
}

/// Clockwise quarter turn of a square raster.
pub fn rot90(r: &Raster) -> Raster {
    let n = r.height;
    let mut out = r.clone();
    for row in 0..n {
        for col in 0..n {
            out.set(row, col, r.get(n - 1 - col, row));
        }
    }
    out
}

/// Dihedral element `k` in `0..8`: an optional horizontal flip followed by
/// `k % 4` quarter turns.
pub fn dihedral(r: &Raster, k: u8) -> Raster {
    let mut out = if k >= 4 { flip_horizontal(r) } else { r.clone() };
    for _ in 0..k % 4 {
        out = rot90(&out);
    }
    out
}

fn border_median(r: &Raster) -> u8 {
    let (h, w) = (r.height, r.width);
    let mut border: Vec<u8> = (0..w)
        .flat_map(|c| [r.get(0, c), r.get(h - 1, c)])
        .chain((1..h.saturating_sub(1)).flat_map(|row| [r.get(row, 0), r.get(row, w - 1)]))
        .collect();
    border.sort_unstable();
    border[border.len() / 2]
}

/// Rotation about the raster centre. Samples falling outside the source are
/// filled with the median border value so corners match the background.
pub fn rotate(r: &Raster, angle: f64) -> Raster {
    let fill = border_median(r);
    let n = r.height;
    let c = (n as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = r.clone();
    let max = (n - 1) as f64;
    for row in 0..n {
        for col in 0..n {
            let (y, x) = (row as f64 - c, col as f64 - c);
            // inverse map: rotate the output coordinate by -angle
            let sy = cos * y - sin * x + c;
            let sx = sin * y + cos * x + c;
            // tolerate rounding so exact quarter turns keep their edges
            let tol = 1e-9;
            let v = if sy < -tol || sx < -tol || sy > max + tol || sx > max + tol {
                fill as f64
            } else {
                let (sy, sx) = (sy.clamp(0.0, max), sx.clamp(0.0, max));
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(n - 1), (x0 + 1).min(n - 1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let p = |a, b| r.get(a, b) as f64;
                (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1))
            };
            out.set(row, col, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// `(p - mean) * contrast + mean + brightness`, clamped to 8 bits.
pub fn photometric(r: &Raster, brightness: f64, contrast: f64) -> Raster {
    let mean = r.pixels.iter().map(|&p| p as f64).sum::<f64>() / r.pixels.len() as f64;
    let mut out = r.clone();
    for p in out.pixels.iter_mut() {
        *p = ((*p as f64 - mean) * contrast + mean + brightness)
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn augment(r: &Raster, policy: AugmentPolicy, rng: &mut impl Rng) -> Result<Raster, NeuralError> {
    if !r.is_square() {
        return Err(NeuralError::NonSquareRaster {
            height: r.height,
            width: r.width,
        });
    }
    Ok(match policy {
        AugmentPolicy::None => r.clone(),
        AugmentPolicy::Flips90 => dihedral(r, rng.random_range(0..8)),
        AugmentPolicy::ContinuousRotation => rotate(r, rng.random_range(0.0..std::f64::consts::TAU)),
        AugmentPolicy::PhotometricLite => {
            let b = rng.random_range(-25.0..25.0);
            let c = rng.random_range(0.8..1.2);
            photometric(r, b, c)
        }
    })
}
