//! Independent reference implementations backing the test suites.
//!
//! Everything here is written straight from the model definitions with no
//! code shared with the library under test: the unnormalized single-site
//! posterior, its moments by 2-D trapezoid quadrature, and the quadratic
//! closed form of the Metropolis log acceptance ratio.

use std::f64::consts::PI;

/// One Fourier site's observation and prior parameters: observed magnitude
/// `r` and phase `psi`, noise scale `sigma`, and the truncated-normal prior
/// `TN(mu, sigma_k^2)` on the magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSetup {
    pub r: f64,
    pub psi: f64,
    pub sigma: f64,
    pub mu: f64,
    pub sigma_k: f64,
}

impl SiteSetup {
    /// Log of likelihood times prior, dropping state-independent constants.
    /// `-inf` outside the support.
    pub fn log_unnorm_posterior(&self, rho: f64, theta: f64) -> f64 {
        if rho < 0.0 || theta <= -PI || theta > PI {
            return f64::NEG_INFINITY;
        }
        let s2 = self.sigma * self.sigma;
        let loglik = -(self.r * self.r + rho * rho
            - 2.0 * rho * self.r * (self.psi - theta).cos())
            / (2.0 * s2);
        let z = (rho - self.mu) / self.sigma_k;
        loglik - 0.5 * z * z
    }

    /// Quadratic closed form of the Metropolis log acceptance ratio for a
    /// move from `(rho_cur, theta_cur)` to `(rho_prop, theta_prop)`:
    /// `Gamma (rho_cur^2 - rho_prop^2) + B(theta_prop) rho_prop
    ///  - B(theta_cur) rho_cur + ln(rho_cur / rho_prop)` with
    /// `Gamma = (sigma_k^2 + sigma^2) / (2 sigma_k^2 sigma^2)` and
    /// `B(theta) = (r / sigma^2) cos(psi - theta) + mu / sigma_k^2`.
    pub fn closed_form_log_acceptance(
        &self,
        rho_cur: f64,
        theta_cur: f64,
        rho_prop: f64,
        theta_prop: f64,
    ) -> f64 {
        let s2 = self.sigma * self.sigma;
        let sk2 = self.sigma_k * self.sigma_k;
        let gamma = (sk2 + s2) / (2.0 * sk2 * s2);
        let b = |theta: f64| (self.r / s2) * (self.psi - theta).cos() + self.mu / sk2;
        gamma * (rho_cur * rho_cur - rho_prop * rho_prop) + b(theta_prop) * rho_prop
            - b(theta_cur) * rho_cur
            + (rho_cur / rho_prop).ln()
    }
}

/// Posterior moments of the polar pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarMoments {
    pub mean_rho: f64,
    /// Circular mean: `atan2(E sin theta, E cos theta)`.
    pub circ_mean_theta: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// Trapezoid quadrature of the unnormalized posterior over
/// `[0, rho_max] x (-pi, pi]` on an `n_rho x n_theta` node grid.
pub fn quadrature_moments(
    setup: &SiteSetup,
    rho_max: f64,
    n_rho: usize,
    n_theta: usize,
) -> PolarMoments {
    assert!(n_rho >= 2 && n_theta >= 2);
    let h_rho = rho_max / (n_rho - 1) as f64;
    let h_theta = 2.0 * PI / (n_theta - 1) as f64;

    // Peak of the log density over the grid, for stable exponentiation.
    let mut log_max = f64::NEG_INFINITY;
    let node = |i: usize, j: usize| {
        let rho = i as f64 * h_rho;
        let mut theta = -PI + j as f64 * h_theta;
        if theta <= -PI {
            theta = -PI + 1e-12;
        }
        (rho, theta)
    };
    for i in 0..n_rho {
        for j in 0..n_theta {
            let (rho, theta) = node(i, j);
            log_max = log_max.max(setup.log_unnorm_posterior(rho, theta));
        }
    }

    let mut mass = 0.0;
    let mut sum_rho = 0.0;
    let mut sum_sin = 0.0;
    let mut sum_cos = 0.0;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for i in 0..n_rho {
        let w_i = if i == 0 || i == n_rho - 1 { 0.5 } else { 1.0 };
        for j in 0..n_theta {
            let w_j = if j == 0 || j == n_theta - 1 { 0.5 } else { 1.0 };
            let (rho, theta) = node(i, j);
            let w = w_i * w_j * (setup.log_unnorm_posterior(rho, theta) - log_max).exp();
            mass += w;
            sum_rho += w * rho;
            sum_sin += w * theta.sin();
            sum_cos += w * theta.cos();
            sum_a += w * rho * theta.cos();
            sum_b += w * rho * theta.sin();
        }
    }
    PolarMoments {
        mean_rho: sum_rho / mass,
        circ_mean_theta: (sum_sin / mass).atan2(sum_cos / mass),
        mean_a: sum_a / mass,
        mean_b: sum_b / mass,
    }
}

/// Absolute angular distance on the circle, in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
    }
    d
}
