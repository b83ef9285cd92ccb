//! Image-space posterior products: streamed sample images, mean and quantile
//! maps, the MAP point-estimate baseline, and between-image change maps.

use rayon::prelude::*;

use crate::error::{BifsError, Result};
use crate::fourier::{
    enforce_hermitian_in_place, to_cartesian, unique_sites, Fft2d, SiteKind, SitePartition,
};
use crate::grid::{CartesianPoint, ImageGrid, PolarPoint, SpectralGrid};
use crate::likelihood::{log_likelihood, SiteObservation};
use crate::priors::{log_prior_magnitude, PriorField, TruncNormalParams};
use crate::sampler::{build_site_models, ChainField, SamplerConfig};

/// Streaming iterator over posterior image samples: for each retained state,
/// the per-site Cartesian samples are assembled into a spectrum, Hermitian
/// symmetry is enforced, and the inverse transform yields a real image.
pub struct SampleImages<'a> {
    field: &'a ChainField,
    partition: SitePartition,
    fft: Fft2d,
    next: usize,
    len: usize,
}

impl<'a> SampleImages<'a> {
    fn spectrum_at(&self, t: usize) -> SpectralGrid {
        let mut spec = SpectralGrid::zeros(self.field.rows, self.field.cols)
            .expect("dimensions validated at construction");
        for chain in &self.field.chains {
            let s = chain.samples[t];
            spec.set_value(chain.site, s.into());
        }
        enforce_hermitian_in_place(&mut spec, &self.partition);
        spec
    }
}

impl<'a> Iterator for SampleImages<'a> {
    type Item = ImageGrid;

    fn next(&mut self) -> Option<ImageGrid> {
        if self.next >= self.len {
            return None;
        }
        let spec = self.spectrum_at(self.next);
        self.next += 1;
        let inv = self
            .fft
            .inverse(&spec)
            .expect("spectrum shape matches the planned transform");
        Some(inv.image)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = self.len - self.next;
        (remaining, Some(remaining))
    }
}

impl<'a> ExactSizeIterator for SampleImages<'a> {}

/// Stream posterior image samples in retained order.
pub fn sample_images(field: &ChainField) -> Result<SampleImages<'_>> {
    let partition = field.validate_structure()?;
    Ok(SampleImages {
        field,
        partition,
        fft: Fft2d::new(field.rows, field.cols),
        next: 0,
        len: field.retained_len(),
    })
}

/// Posterior mean and per-pixel quantile maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: ImageGrid,
    /// `(level, map)` pairs, sorted ascending by level.
    pub quantiles: Vec<(f64, ImageGrid)>,
    pub sample_count: usize,
}

/// Default block height for the block-wise quantile pass.
pub const DEFAULT_BLOCK_ROWS: usize = 8;

/// Summarize a chain field: a streaming mean pass plus, when quantile levels
/// are requested, exact order statistics computed per pixel. Pixels are
/// materialized in horizontal blocks of `block_rows` rows to bound memory;
/// blocks are processed in parallel.
pub fn summarize(field: &ChainField, levels: &[f64], block_rows: usize) -> Result<PosteriorSummary> {
    let retained = field.retained_len();
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    for &q in &levels {
        if !(q > 0.0 && q < 1.0) {
            return Err(BifsError::Config(format!("quantile level {q} outside (0, 1)")));
        }
    }
    if !levels.is_empty() && retained < 100 {
        return Err(BifsError::Config(format!(
            "quantile maps need at least 100 retained samples, got {retained}"
        )));
    }
    if block_rows == 0 {
        return Err(BifsError::Config("block_rows must be positive".into()));
    }

    let (rows, cols) = (field.rows, field.cols);
    let mut acc = vec![0.0f64; rows * cols];
    for img in sample_images(field)? {
        for (a, v) in acc.iter_mut().zip(img.as_slice()) {
            *a += v;
        }
    }
    let inv_n = 1.0 / retained as f64;
    let mean = ImageGrid::from_vec(rows, cols, acc.iter().map(|v| v * inv_n).collect())?;

    let mut quantiles = Vec::new();
    if !levels.is_empty() {
        let block_starts: Vec<usize> = (0..rows).step_by(block_rows).collect();
        let per_block: Result<Vec<Vec<Vec<f64>>>> = block_starts
            .par_iter()
            .map(|&start| {
                let height = block_rows.min(rows - start);
                quantile_block(field, start, height, &levels)
            })
            .collect();
        let per_block = per_block?;
        let mut maps = vec![vec![0.0f64; rows * cols]; levels.len()];
        for (bi, &start) in block_starts.iter().enumerate() {
            let height = block_rows.min(rows - start);
            for (li, level_map) in per_block[bi].iter().enumerate() {
                maps[li][start * cols..(start + height) * cols].copy_from_slice(level_map);
            }
        }
        for (li, &q) in levels.iter().enumerate() {
            quantiles.push((q, ImageGrid::from_vec(rows, cols, std::mem::take(&mut maps[li]))?));
        }
    }

    Ok(PosteriorSummary {
        mean,
        quantiles,
        sample_count: retained,
    })
}

/// Per-pixel sample vectors for `height` rows starting at `start`, reduced to
/// one value per requested level via the lower empirical quantile.
fn quantile_block(
    field: &ChainField,
    start: usize,
    height: usize,
    levels: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let cols = field.cols;
    let retained = field.retained_len();
    let pixels = height * cols;
    let mut buf = vec![0.0f64; pixels * retained];
    for (t, img) in sample_images(field)?.enumerate() {
        let block = &img.as_slice()[start * cols..(start + height) * cols];
        for (p, &v) in block.iter().enumerate() {
            buf[p * retained + t] = v;
        }
    }
    let mut out = vec![vec![0.0f64; pixels]; levels.len()];
    for p in 0..pixels {
        let samples = &mut buf[p * retained..(p + 1) * retained];
        samples.sort_by(f64::total_cmp);
        for (li, &q) in levels.iter().enumerate() {
            let idx = ((q * retained as f64).ceil() as usize).clamp(1, retained) - 1;
            out[li][p] = samples[idx];
        }
    }
    Ok(out)
}

/// Per-pixel probability that the second image exceeds the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMap {
    pub values: ImageGrid,
    /// Number of paired states used (the smaller retained count when the
    /// inputs disagree).
    pub sample_count: usize,
}

/// Posterior change-probability map between two chain fields: the fraction of
/// paired states in which the second field's image exceeds the first's, per
/// pixel, using the strict inequality. Fields of unequal retained counts are
/// truncated to the shorter one.
pub fn change_probability_map(first: &ChainField, second: &ChainField) -> Result<ChangeMap> {
    if first.rows != second.rows || first.cols != second.cols {
        return Err(BifsError::Data(format!(
            "change map dimensions differ: {}x{} vs {}x{}",
            first.rows, first.cols, second.rows, second.cols
        )));
    }
    let t_use = first.retained_len().min(second.retained_len());
    if t_use == 0 {
        return Err(BifsError::Data("change map needs retained samples".into()));
    }
    let mut counts = vec![0u32; first.rows * first.cols];
    let stream_a = sample_images(first)?.take(t_use);
    let stream_b = sample_images(second)?.take(t_use);
    for (img_a, img_b) in stream_a.zip(stream_b) {
        for (i, (a, b)) in img_a.as_slice().iter().zip(img_b.as_slice()).enumerate() {
            if b - a > 0.0 {
                counts[i] += 1;
            }
        }
    }
    let values = ImageGrid::from_vec(
        first.rows,
        first.cols,
        counts.iter().map(|&c| c as f64 / t_use as f64).collect(),
    )?;
    Ok(ChangeMap {
        values,
        sample_count: t_use,
    })
}

/// MAP baseline reconstruction plus the number of sites where the optimizer
/// fell back to the observed value.
#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub image: ImageGrid,
    pub flagged_sites: usize,
}

/// Per-site posterior mode, assembled and inverted. Under the uniform phase
/// prior the posterior over the phase is maximized at the observed phase, so
/// the mode reduces to a 1-D bounded search over the magnitude at
/// `theta = psi`. Self-conjugate sites search over the signed real value.
pub fn map_estimate(observed: &SpectralGrid, priors: &PriorField, sigma: f64) -> Result<MapOutcome> {
    // The proposal scale is irrelevant here; build_site_models validates the
    // rest of the configuration surface.
    let cfg = SamplerConfig::default();
    let models = build_site_models(observed, priors, sigma, &cfg)?;
    let partition = unique_sites(observed.rows(), observed.cols())?;
    let mut spec = SpectralGrid::zeros(observed.rows(), observed.cols())?;
    let mut flagged = 0usize;
    for m in &models {
        let value: CartesianPoint = if m.fixed {
            m.obs_cart
        } else {
            match m.kind {
                SiteKind::Free => {
                    let objective = |rho: f64| {
                        log_likelihood(&m.obs, &PolarPoint::new(rho, m.obs.psi))
                            + log_prior_magnitude(rho, &m.prior)
                    };
                    let hi = search_upper_bound(&m.obs, &m.prior);
                    match golden_max(objective, 0.0, hi) {
                        Some(rho) => to_cartesian(PolarPoint::new(rho, m.obs.psi))?,
                        None => {
                            flagged += 1;
                            m.obs_cart
                        }
                    }
                }
                SiteKind::SelfConjugate => {
                    let objective = |x: f64| {
                        let d = m.obs_cart.a - x;
                        -0.5 * d * d / (m.obs.sigma * m.obs.sigma)
                            + log_prior_magnitude(x.abs(), &m.prior)
                    };
                    let hi = search_upper_bound(&m.obs, &m.prior);
                    // The symmetrized prior can make the target bimodal in the
                    // sign; search each half and keep the better mode.
                    let pos = golden_max(&objective, 0.0, hi);
                    let neg = golden_max(&objective, -hi, 0.0);
                    match (pos, neg) {
                        (Some(p), Some(n)) => {
                            let x = if objective(p) >= objective(n) { p } else { n };
                            CartesianPoint::new(x, 0.0)
                        }
                        (Some(p), None) => CartesianPoint::new(p, 0.0),
                        (None, Some(n)) => CartesianPoint::new(n, 0.0),
                        (None, None) => {
                            flagged += 1;
                            m.obs_cart
                        }
                    }
                }
                SiteKind::Mirrored => unreachable!("mirrored sites are never modeled"),
            }
        };
        spec.set_value(m.site, value.into());
    }
    enforce_hermitian_in_place(&mut spec, &partition);
    let inv = Fft2d::new(observed.rows(), observed.cols()).inverse(&spec)?;
    Ok(MapOutcome {
        image: inv.image,
        flagged_sites: flagged,
    })
}

fn search_upper_bound(obs: &SiteObservation, prior: &TruncNormalParams) -> f64 {
    (obs.r.max(prior.mu) + 10.0 * obs.sigma.max(prior.sigma)).max(1.0)
}

/// Golden-section maximization on `[lo, hi]`; deterministic fixed iteration
/// count, `None` if the objective is non-finite at the evaluation points.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..120 {
        if fc.is_nan() || fd.is_nan() {
            return None;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    if f(x).is_finite() {
        Some(x)
    } else {
        None
    }
}
