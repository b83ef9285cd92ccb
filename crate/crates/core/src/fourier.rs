//! Forward/inverse 2-D FFT under the unitary convention, Cartesian/polar
//! conversions, and the conjugate-symmetry bookkeeping that lets sampled
//! spectra invert to genuinely real images.
//!
//! Conventions:
//! - both transform directions carry a `1/sqrt(rows*cols)` scale, so Parseval
//!   holds exactly and the Fourier-space noise relation `sigma = sigma_noise /
//!   sqrt(2)` needs no correction factor;
//! - spectra are centered (zero frequency at `(rows/2, cols/2)`);
//! - the phase of a zero-magnitude coefficient is defined as 0.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{BifsError, Result};
use crate::grid::{CartesianPoint, ImageGrid, PolarPoint, SiteIndex, SpectralGrid};

/// Planned 2-D transforms for one grid shape. Reuse this when transforming
/// many same-shaped grids (e.g. streaming posterior samples).
pub struct Fft2d {
    rows: usize,
    cols: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
}

/// Real image recovered from a spectrum, along with the largest absolute
/// imaginary component discarded when taking the real part.
pub struct RealInverse {
    pub image: ImageGrid,
    pub imag_residual: f64,
}

impl Fft2d {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            fwd_row: planner.plan_fft_forward(cols),
            fwd_col: planner.plan_fft_forward(rows),
            inv_row: planner.plan_fft_inverse(cols),
            inv_col: planner.plan_fft_inverse(rows),
        }
    }

    /// Unitary forward transform of a real image to a centered spectrum.
    pub fn forward(&self, image: &ImageGrid) -> Result<SpectralGrid> {
        self.check_shape(image.rows(), image.cols())?;
        let mut buf: Vec<Complex64> = image
            .as_slice()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform(&mut buf, true);
        let scale = 1.0 / ((self.rows * self.cols) as f64).sqrt();
        for v in &mut buf {
            *v *= scale;
        }
        let centered = shift2(&buf, self.rows, self.cols, fftshift_offsets(self.rows, self.cols));
        SpectralGrid::from_vec(self.rows, self.cols, centered)
    }

    /// Unitary inverse transform of a centered spectrum; returns the real part
    /// and reports the residual imaginary magnitude so callers can assert that
    /// Hermitian inputs produced a real image.
    pub fn inverse(&self, spec: &SpectralGrid) -> Result<RealInverse> {
        self.check_shape(spec.rows(), spec.cols())?;
        let mut buf = shift2(
            spec.as_slice(),
            self.rows,
            self.cols,
            ifftshift_offsets(self.rows, self.cols),
        );
        self.transform(&mut buf, false);
        let scale = 1.0 / ((self.rows * self.cols) as f64).sqrt();
        let mut residual: f64 = 0.0;
        let mut real = Vec::with_capacity(buf.len());
        for v in &buf {
            let s = v * scale;
            residual = residual.max(s.im.abs());
            real.push(s.re);
        }
        Ok(RealInverse {
            image: ImageGrid::from_vec(self.rows, self.cols, real)?,
            imag_residual: residual,
        })
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if rows != self.rows || cols != self.cols {
            return Err(BifsError::Data(format!(
                "grid is {}x{} but transform was planned for {}x{}",
                rows, cols, self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Row FFTs in place, then column FFTs via transpose/transpose-back.
    fn transform(&self, buf: &mut Vec<Complex64>, forward: bool) {
        let (row_fft, col_fft) = if forward {
            (&self.fwd_row, &self.fwd_col)
        } else {
            (&self.inv_row, &self.inv_col)
        };
        let mut scratch =
            vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
        for row in buf.chunks_exact_mut(self.cols) {
            row_fft.process_with_scratch(row, &mut scratch);
        }
        let mut transposed = transpose(buf, self.rows, self.cols);
        for col in transposed.chunks_exact_mut(self.rows) {
            col_fft.process_with_scratch(col, &mut scratch);
        }
        *buf = transpose(&transposed, self.cols, self.rows);
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Cyclic 2-D shift: `out[i][j] = in[(i + dr) % rows][(j + dc) % cols]`.
fn shift2<T: Copy + Default>(data: &[T], rows: usize, cols: usize, (dr, dc): (usize, usize)) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for i in 0..rows {
        let src_r = (i + dr) % rows;
        for j in 0..cols {
            let src_c = (j + dc) % cols;
            out[i * cols + j] = data[src_r * cols + src_c];
        }
    }
    out
}

fn fftshift_offsets(rows: usize, cols: usize) -> (usize, usize) {
    (rows - rows / 2, cols - cols / 2)
}

fn ifftshift_offsets(rows: usize, cols: usize) -> (usize, usize) {
    (rows / 2, cols / 2)
}

/// Unitary forward FFT of a real image; centered output.
pub fn forward_fft(image: &ImageGrid) -> Result<SpectralGrid> {
    Fft2d::new(image.rows(), image.cols()).forward(image)
}

/// Unitary inverse FFT of a centered spectrum; real part plus imaginary residual.
pub fn inverse_fft(spec: &SpectralGrid) -> Result<RealInverse> {
    Fft2d::new(spec.rows(), spec.cols()).inverse(spec)
}

/// Cartesian to polar. The phase is the full-quadrant arctangent in
/// `(-pi, pi]`; at the origin it is 0 by definition.
pub fn to_polar(p: CartesianPoint) -> PolarPoint {
    let rho = p.a.hypot(p.b);
    if rho == 0.0 {
        return PolarPoint::new(0.0, 0.0);
    }
    let mut theta = p.b.atan2(p.a);
    if theta == -std::f64::consts::PI {
        theta = std::f64::consts::PI;
    }
    PolarPoint::new(rho, theta)
}

/// Polar to Cartesian; rejects negative magnitudes.
pub fn to_cartesian(p: PolarPoint) -> Result<CartesianPoint> {
    if !(p.rho >= 0.0) {
        return Err(BifsError::Data(format!("negative magnitude {}", p.rho)));
    }
    Ok(CartesianPoint::new(p.rho * p.theta.cos(), p.rho * p.theta.sin()))
}

/// How a lattice site relates to the conjugate-symmetry structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    /// Carries one of a conjugate pair; sampled as a full complex coefficient.
    Free,
    /// Its own mirror; the coefficient must be real.
    SelfConjugate,
    /// The conjugate copy of a free site; never sampled directly.
    Mirrored,
}

/// Partition of the centered lattice into free, self-conjugate and mirrored
/// sites. Free and mirrored sites pair up one-to-one; the union of the three
/// sets is the whole lattice.
#[derive(Debug, Clone)]
pub struct SitePartition {
    rows: usize,
    cols: usize,
    pub free: Vec<SiteIndex>,
    pub self_conjugate: Vec<SiteIndex>,
    pub mirrored: Vec<SiteIndex>,
}

impl SitePartition {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The conjugate mirror of `site` (itself for self-conjugate sites).
    pub fn mirror(&self, site: SiteIndex) -> SiteIndex {
        SiteIndex::new(
            mirror_offset(site.k, self.rows),
            mirror_offset(site.l, self.cols),
        )
    }

    pub fn kind(&self, site: SiteIndex) -> SiteKind {
        classify(site, self.rows, self.cols)
    }

    /// Free and self-conjugate sites in row-major lattice order. This is the
    /// canonical storage order for chain containers and chain files.
    pub fn stored(&self) -> Vec<(SiteIndex, SiteKind)> {
        let mut out = Vec::with_capacity(self.free.len() + self.self_conjugate.len());
        let (cr, cc) = (self.rows / 2, self.cols / 2);
        for row in 0..self.rows {
            for col in 0..self.cols {
                let site = SiteIndex::new(row as i32 - cr as i32, col as i32 - cc as i32);
                match classify(site, self.rows, self.cols) {
                    SiteKind::Mirrored => {}
                    kind => out.push((site, kind)),
                }
            }
        }
        out
    }
}

/// Signed offset of the conjugate mirror along one dimension of length `n`.
/// The Nyquist offset of an even dimension mirrors onto itself.
fn mirror_offset(k: i32, n: usize) -> i32 {
    let lo = -((n / 2) as i32);
    if n % 2 == 0 && k == lo {
        k
    } else {
        -k
    }
}

fn classify(site: SiteIndex, rows: usize, cols: usize) -> SiteKind {
    let mirror = SiteIndex::new(mirror_offset(site.k, rows), mirror_offset(site.l, cols));
    if mirror == site {
        SiteKind::SelfConjugate
    } else if (site.k, site.l) < (mirror.k, mirror.l) {
        // Row-major order on offsets equals row-major order on array indices.
        SiteKind::Free
    } else {
        SiteKind::Mirrored
    }
}

/// Partition the `rows x cols` lattice by conjugate symmetry.
pub fn unique_sites(rows: usize, cols: usize) -> Result<SitePartition> {
    if rows < 2 || cols < 2 {
        return Err(BifsError::Data(format!(
            "lattice dimensions {}x{} below the 2x2 minimum",
            rows, cols
        )));
    }
    let (cr, cc) = (rows / 2, cols / 2);
    let mut free = Vec::new();
    let mut self_conjugate = Vec::new();
    let mut mirrored = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let site = SiteIndex::new(row as i32 - cr as i32, col as i32 - cc as i32);
            match classify(site, rows, cols) {
                SiteKind::Free => free.push(site),
                SiteKind::SelfConjugate => self_conjugate.push(site),
                SiteKind::Mirrored => mirrored.push(site),
            }
        }
    }
    Ok(SitePartition {
        rows,
        cols,
        free,
        self_conjugate,
        mirrored,
    })
}

/// Force exact Hermitian symmetry: each free coefficient is copied conjugated
/// into its mirror site and self-conjugate coefficients lose their imaginary
/// part. Free-site values are untouched, so the operation is idempotent.
pub fn enforce_hermitian(spec: &SpectralGrid) -> Result<SpectralGrid> {
    let partition = unique_sites(spec.rows(), spec.cols())?;
    let mut out = spec.clone();
    enforce_hermitian_in_place(&mut out, &partition);
    Ok(out)
}

pub(crate) fn enforce_hermitian_in_place(spec: &mut SpectralGrid, partition: &SitePartition) {
    for &site in &partition.self_conjugate {
        let idx = spec.index_of(site);
        spec.as_mut_slice()[idx].im = 0.0;
    }
    for &site in &partition.free {
        let v = spec.value(site);
        spec.set_value(partition.mirror(site), v.conj());
    }
    spec.hermitian = true;
}

/// Largest deviation from Hermitian symmetry, for diagnostics.
pub fn hermitian_residual(spec: &SpectralGrid) -> Result<f64> {
    let partition = unique_sites(spec.rows(), spec.cols())?;
    let mut worst: f64 = 0.0;
    for &site in &partition.self_conjugate {
        worst = worst.max(spec.value(site).im.abs());
    }
    for &site in &partition.free {
        let diff = spec.value(site).conj() - spec.value(partition.mirror(site));
        worst = worst.max(diff.norm());
    }
    Ok(worst)
}
