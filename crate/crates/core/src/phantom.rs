//! Synthetic test images: a smooth multi-blob base with a zero margin, an
//! additive circular lesion, and iid Gaussian degradation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BifsError, Result};
use crate::grid::ImageGrid;
use crate::rng::noise_rng;

/// Base image families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Sum of a few fixed compact smooth bumps, exactly zero within an
    /// 8-pixel border ring (image borders usually lie outside the tissue).
    SmoothBlobs,
    /// All zeros.
    Flat,
}

/// Width of the guaranteed-zero border ring of `SmoothBlobs` phantoms.
pub const BORDER_MARGIN: usize = 8;

// Bump table: fractional (row, col) position inside the usable interior,
// fractional radius of the largest circle that fits at that position, and
// amplitude. Positions are deliberately asymmetric.
const BUMPS: [(f64, f64, f64, f64); 4] = [
    (0.50, 0.52, 0.95, 0.55),
    (0.37, 0.40, 0.48, 0.40),
    (0.63, 0.58, 0.38, 0.32),
    (0.42, 0.67, 0.25, 0.28),
];

/// Deterministic base image; dimensions must be at least 32.
pub fn make_phantom(rows: usize, cols: usize, kind: PhantomKind) -> Result<ImageGrid> {
    if rows < 32 || cols < 32 {
        return Err(BifsError::Config(format!(
            "phantom dimensions {rows}x{cols} below the 32x32 minimum"
        )));
    }
    let mut img = ImageGrid::zeros(rows, cols)?;
    if kind == PhantomKind::Flat {
        return Ok(img);
    }
    let m = (BORDER_MARGIN + 1) as f64;
    let (h, w) = (rows as f64 - 2.0 * m, cols as f64 - 2.0 * m);
    for &(fr, fc, frad, amp) in &BUMPS {
        let cr = m + fr * h;
        let cc = m + fc * w;
        let max_rad = (cr - m).min(rows as f64 - m - cr).min(cc - m).min(cols as f64 - m - cc);
        let rad = frad * max_rad;
        for r in 0..rows {
            for c in 0..cols {
                let t = ((r as f64 - cr).hypot(c as f64 - cc)) / rad;
                if t < 1.0 {
                    // Compactly supported smooth bump, 1 at the center and
                    // exactly 0 from the rim outward.
                    let v = amp * (1.0 - 1.0 / (1.0 - t * t)).exp();
                    img.set(r, c, img.get(r, c) + v);
                }
            }
        }
    }
    Ok(img)
}

/// Circular additive lesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSpec {
    pub center_row: f64,
    pub center_col: f64,
    pub radius: f64,
    pub delta: f64,
}

impl DiskSpec {
    /// Whether a pixel lies inside the disk.
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dr = row as f64 - self.center_row;
        let dc = col as f64 - self.center_col;
        dr * dr + dc * dc <= self.radius * self.radius
    }
}

/// Add `delta` to every pixel within the disk. The disk must lie entirely
/// inside the image.
pub fn add_disk(img: &ImageGrid, disk: &DiskSpec) -> Result<ImageGrid> {
    if !(disk.radius > 0.0) || !disk.radius.is_finite() || !disk.delta.is_finite() {
        return Err(BifsError::Config(format!(
            "invalid disk radius {} or delta {}",
            disk.radius, disk.delta
        )));
    }
    let fits = disk.center_row - disk.radius >= 0.0
        && disk.center_col - disk.radius >= 0.0
        && disk.center_row + disk.radius <= (img.rows() - 1) as f64
        && disk.center_col + disk.radius <= (img.cols() - 1) as f64;
    if !fits {
        return Err(BifsError::Config(format!(
            "disk at ({}, {}) with radius {} leaves the {}x{} image",
            disk.center_row,
            disk.center_col,
            disk.radius,
            img.rows(),
            img.cols()
        )));
    }
    let mut out = img.clone();
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            if disk.contains(r, c) {
                out.set(r, c, out.get(r, c) + disk.delta);
            }
        }
    }
    Ok(out)
}

/// Add iid `N(0, sigma_noise^2)` to every pixel, drawn from the seeded noise
/// stream in row-major order.
pub fn add_noise(img: &ImageGrid, sigma_noise: f64, seed: u64) -> Result<ImageGrid> {
    if !(sigma_noise > 0.0) || !sigma_noise.is_finite() {
        return Err(BifsError::Config(format!(
            "noise sigma must be positive, got {sigma_noise}"
        )));
    }
    let mut rng = noise_rng(seed);
    let mut out = img.clone();
    for v in out.as_mut_slice() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma_noise * z;
    }
    Ok(out)
}
