//! Image-space and Fourier-space grids plus the point types used to move
//! between Cartesian and polar representations of a complex coefficient.
//!
//! Spectra are stored centered: the zero-frequency coefficient lives at index
//! `(rows / 2, cols / 2)` and a lattice site is addressed by its signed offset
//! from that center.

pub use rustfft::num_complex::Complex64;

use crate::error::{BifsError, Result};

/// An M x N real-valued pixel field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// All-zero image. Dimensions must both be at least 2.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    /// Build from row-major data, rejecting wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(BifsError::Data(format!(
                "image data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(BifsError::Data("image contains non-finite values".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// (min, max) over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Mean squared difference against another grid of identical dimensions.
    pub fn mse(&self, other: &ImageGrid) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(BifsError::Data("MSE of mismatched grid dimensions".into()));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// An M x N complex field with zero frequency stored at the center index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
    /// Set only when Hermitian symmetry holds exactly (e.g. after
    /// [`crate::fourier::enforce_hermitian`]); `forward_fft` output satisfies
    /// it only up to roundoff and is therefore not flagged.
    pub hermitian: bool,
}

impl SpectralGrid {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
            hermitian: false,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(BifsError::Data(format!(
                "spectrum data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(BifsError::Data("spectrum contains non-finite values".into()));
        }
        Ok(Self {
            rows,
            cols,
            data,
            hermitian: false,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Index of the zero-frequency coefficient.
    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Whether `site` lies on this lattice.
    pub fn contains(&self, site: SiteIndex) -> bool {
        let (cr, cc) = self.center();
        let row = cr as i64 + site.k as i64;
        let col = cc as i64 + site.l as i64;
        row >= 0 && col >= 0 && (row as usize) < self.rows && (col as usize) < self.cols
    }

    /// Row-major array index of a site given by its offset from the center.
    ///
    /// Panics if the site is out of bounds; use [`Self::contains`] to check.
    pub fn index_of(&self, site: SiteIndex) -> usize {
        assert!(self.contains(site), "site {:?} out of bounds", site);
        let (cr, cc) = self.center();
        let row = (cr as i64 + site.k as i64) as usize;
        let col = (cc as i64 + site.l as i64) as usize;
        row * self.cols + col
    }

    pub fn value(&self, site: SiteIndex) -> Complex64 {
        self.data[self.index_of(site)]
    }

    pub fn set_value(&mut self, site: SiteIndex, v: Complex64) {
        let idx = self.index_of(site);
        self.data[idx] = v;
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 2 {
        return Err(BifsError::Data(format!(
            "grid dimensions {}x{} below the 2x2 minimum",
            rows, cols
        )));
    }
    Ok(())
}

/// A lattice site addressed by its signed frequency offset from the spectral
/// center, `(k, l)` in row/column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    pub k: i32,
    pub l: i32,
}

impl SiteIndex {
    pub fn new(k: i32, l: i32) -> Self {
        Self { k, l }
    }

    /// Euclidean distance from the zero-frequency origin.
    pub fn radius(&self) -> f64 {
        ((self.k as f64).powi(2) + (self.l as f64).powi(2)).sqrt()
    }

    pub fn is_origin(&self) -> bool {
        self.k == 0 && self.l == 0
    }
}

/// Real/imaginary pair of a complex coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint {
    pub a: f64,
    pub b: f64,
}

impl CartesianPoint {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

impl From<Complex64> for CartesianPoint {
    fn from(v: Complex64) -> Self {
        Self { a: v.re, b: v.im }
    }
}

impl From<CartesianPoint> for Complex64 {
    fn from(p: CartesianPoint) -> Self {
        Complex64::new(p.a, p.b)
    }
}

/// Magnitude/phase pair; `rho >= 0`, `theta` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub rho: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(rho: f64, theta: f64) -> Self {
        Self { rho, theta }
    }
}
