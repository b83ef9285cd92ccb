//! Joint likelihood of an observed magnitude/phase pair under complex
//! Gaussian noise, and estimation of the Fourier-space noise scale from a
//! flat image patch.

use crate::error::{BifsError, Result};
use crate::grid::{ImageGrid, PolarPoint};

/// Per-site observation: magnitude `r`, phase `psi`, and the Fourier-space
/// noise scale `sigma` (standard deviation of each Cartesian component).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteObservation {
    pub r: f64,
    pub psi: f64,
    pub sigma: f64,
}

impl SiteObservation {
    pub fn new(r: f64, psi: f64, sigma: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() || !psi.is_finite() {
            return Err(BifsError::Data(format!(
                "invalid observation (r={r}, psi={psi})"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(BifsError::Config(format!("noise sigma must be positive, got {sigma}")));
        }
        Ok(Self { r, psi, sigma })
    }
}

/// Log of `r / (2 pi sigma^2) * exp(-[r^2 + rho^2 - 2 rho r cos(psi - theta)]
/// / (2 sigma^2))`, the joint density of the observed polar pair given the
/// true one. The `ln r` factor is constant along a chain but kept so the
/// value is a genuine log density.
pub fn log_likelihood(obs: &SiteObservation, state: &PolarPoint) -> f64 {
    debug_assert!(state.rho >= 0.0);
    let s2 = obs.sigma * obs.sigma;
    let bracket =
        obs.r * obs.r + state.rho * state.rho - 2.0 * state.rho * obs.r * (obs.psi - state.theta).cos();
    obs.r.ln() - (2.0 * std::f64::consts::PI * s2).ln() - bracket / (2.0 * s2)
}

/// Rectangular image patch; `row`/`col` address the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Estimate the Fourier-space noise scale from a flat patch: the sample
/// standard deviation of the patch gives `sigma_noise`, and the per-component
/// spectral scale is `sigma_noise / sqrt(2)` under the unitary transform.
pub fn estimate_sigma(image: &ImageGrid, patch: &PatchRect) -> Result<f64> {
    if patch.height * patch.width < 25 {
        return Err(BifsError::Config(format!(
            "noise patch must cover at least 25 pixels, got {}x{}",
            patch.height, patch.width
        )));
    }
    if patch.row + patch.height > image.rows() || patch.col + patch.width > image.cols() {
        return Err(BifsError::Config(format!(
            "noise patch {}x{} at ({}, {}) exceeds the {}x{} image",
            patch.height,
            patch.width,
            patch.row,
            patch.col,
            image.rows(),
            image.cols()
        )));
    }
    let n = (patch.height * patch.width) as f64;
    let mut sum = 0.0;
    for r in patch.row..patch.row + patch.height {
        for c in patch.col..patch.col + patch.width {
            sum += image.get(r, c);
        }
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for r in patch.row..patch.row + patch.height {
        for c in patch.col..patch.col + patch.width {
            let d = image.get(r, c) - mean;
            ss += d * d;
        }
    }
    let sd = (ss / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(BifsError::Numeric(
            "noise patch has zero variance; cannot estimate sigma".into(),
        ));
    }
    Ok(sd / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{add_noise, make_phantom, PhantomKind};

    #[test]
    fn perfect_match_leaves_only_the_prefactor() {
        let obs = SiteObservation::new(1.0, 0.0, 1.0).unwrap();
        let v = log_likelihood(&obs, &PolarPoint::new(1.0, 0.0));
        assert!((v - (1.0 / (2.0 * std::f64::consts::PI)).ln()).abs() < 1e-14);
    }

    #[test]
    fn opposite_phase_costs_two() {
        let obs = SiteObservation::new(1.0, 0.0, 1.0).unwrap();
        let v = log_likelihood(&obs, &PolarPoint::new(1.0, std::f64::consts::PI));
        let expected = (1.0 / (2.0 * std::f64::consts::PI)).ln() - 2.0;
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn matches_cartesian_route() {
        // Same density reconstructed as bivariate normal in (a, b) times the
        // Jacobian r of the Cartesian-to-polar change of variables.
        let cases = [
            (2.0, 0.3, 1.5, 0.1, 0.5),
            (0.7, -2.0, 0.3, 2.9, 0.2),
            (1.0, 3.0, 2.0, -3.0, 1.3),
        ];
        for (r, psi, rho, theta, sigma) in cases {
            let obs = SiteObservation::new(r, psi, sigma).unwrap();
            let direct = log_likelihood(&obs, &PolarPoint::new(rho, theta));
            let (a, b) = (r * f64::cos(psi), r * f64::sin(psi));
            let (alpha, beta) = (rho * f64::cos(theta), rho * f64::sin(theta));
            let ln_norm = |x: f64, m: f64| {
                -0.5 * ((x - m) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            };
            let via_cartesian = ln_norm(a, alpha) + ln_norm(b, beta) + r.ln();
            assert!(
                (direct - via_cartesian).abs() <= 1e-12,
                "direct {direct} vs cartesian {via_cartesian}"
            );
        }
    }

    #[test]
    fn phase_rotation_invariance() {
        let obs = SiteObservation::new(1.4, 0.2, 0.7).unwrap();
        let state = PolarPoint::new(0.9, -0.5);
        let base = log_likelihood(&obs, &state);
        for delta in [0.3, -1.1, 2.0] {
            let rotated_obs = SiteObservation::new(1.4, 0.2 + delta, 0.7).unwrap();
            let rotated_state = PolarPoint::new(0.9, -0.5 + delta);
            assert!((log_likelihood(&rotated_obs, &rotated_state) - base).abs() < 1e-12);
        }
    }

    #[test]
    fn maximized_at_the_observation() {
        let obs = SiteObservation::new(1.7, 0.8, 0.4).unwrap();
        let best = log_likelihood(&obs, &PolarPoint::new(1.7, 0.8));
        for rho in [1.0, 1.5, 1.9, 2.5] {
            for theta in [0.0, 0.5, 1.0, -2.0] {
                if (rho, theta) != (1.7, 0.8) {
                    assert!(best >= log_likelihood(&obs, &PolarPoint::new(rho, theta)));
                }
            }
        }
    }

    #[test]
    fn sigma_estimate_recovers_simulated_noise() {
        let flat = make_phantom(64, 64, PhantomKind::Flat).unwrap();
        let noisy = add_noise(&flat, 0.1, 99).unwrap();
        let est = estimate_sigma(
            &noisy,
            &PatchRect { row: 4, col: 4, height: 30, width: 30 },
        )
        .unwrap();
        let expected = 0.1 / std::f64::consts::SQRT_2;
        assert!((est - expected).abs() / expected < 0.1, "est {est} vs {expected}");
    }

    #[test]
    fn sigma_estimate_alternating_patch_is_exact() {
        let mut img = ImageGrid::zeros(10, 10).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                img.set(r, c, if (r + c) % 2 == 0 { 0.0 } else { 2.0 });
            }
        }
        let patch = PatchRect { row: 0, col: 0, height: 6, width: 6 };
        // 36 values, half 0 and half 2: mean 1, sum of squares 36, sd = sqrt(36/35).
        let expected = (36.0f64 / 35.0).sqrt() / std::f64::consts::SQRT_2;
        let est = estimate_sigma(&img, &patch).unwrap();
        assert!((est - expected).abs() < 1e-14);
    }

    #[test]
    fn sigma_estimate_rejects_degenerate_patches() {
        let img = ImageGrid::zeros(32, 32).unwrap();
        let patch = PatchRect { row: 0, col: 0, height: 10, width: 10 };
        assert!(matches!(
            estimate_sigma(&img, &patch),
            Err(BifsError::Numeric(_))
        ));
        // Too small and out of bounds are config errors.
        let small = PatchRect { row: 0, col: 0, height: 4, width: 6 };
        assert!(matches!(estimate_sigma(&img, &small), Err(BifsError::Config(_))));
        let outside = PatchRect { row: 28, col: 0, height: 10, width: 10 };
        assert!(matches!(estimate_sigma(&img, &outside), Err(BifsError::Config(_))));
    }
}
