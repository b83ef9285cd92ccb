//! Site-wise prior model: parameter functions over the Fourier lattice, the
//! truncated-normal magnitude prior and the uniform phase prior.

use crate::error::{BifsError, Result};
use crate::grid::SiteIndex;

/// Radially decaying parameter function `lambda / |nu|^d` with an explicit
/// value at the undefined origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFnSpec {
    pub lambda: f64,
    pub d: f64,
    /// Value returned at the zero-frequency site, where the reciprocal form
    /// is undefined.
    pub dc_value: f64,
}

impl ParamFnSpec {
    pub fn new(lambda: f64, d: f64, dc_value: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(BifsError::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !d.is_finite() {
            return Err(BifsError::Config("decay exponent d must be finite".into()));
        }
        if !(dc_value >= 0.0) || !dc_value.is_finite() {
            return Err(BifsError::Config(format!(
                "dc_value must be finite and nonnegative, got {dc_value}"
            )));
        }
        Ok(Self { lambda, d, dc_value })
    }
}

/// Evaluate `lambda / (k^2 + l^2)^(d/2)`; the origin takes `dc_value`.
pub fn eval_param_fn(spec: &ParamFnSpec, site: SiteIndex) -> f64 {
    if site.is_origin() {
        return spec.dc_value;
    }
    let sq = (site.k as f64).powi(2) + (site.l as f64).powi(2);
    spec.lambda / sq.powf(spec.d / 2.0)
}

/// Magnitude prior family: `rho ~ TN(c * sigma_nu, sigma_nu^2)` on `[0, inf)`
/// with `sigma_nu` given by a parameter function.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudePriorSpec {
    pub c: f64,
    pub sigma_fn: ParamFnSpec,
}

impl MagnitudePriorSpec {
    pub fn new(c: f64, sigma_fn: ParamFnSpec) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(BifsError::Config(format!("c must be positive, got {c}")));
        }
        Ok(Self { c, sigma_fn })
    }
}

/// Truncated-normal parameters with support `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl TruncNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(BifsError::Config(format!(
                "truncated normal needs finite mu and positive sigma, got ({mu}, {sigma})"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

/// Per-site prior parameters: `sigma = g(site)`, `mu = c * sigma`.
pub fn magnitude_prior_at(spec: &MagnitudePriorSpec, site: SiteIndex) -> Result<TruncNormalParams> {
    let sigma = eval_param_fn(&spec.sigma_fn, site);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(BifsError::Config(format!(
            "parameter function produced non-positive sigma {sigma} at ({}, {})",
            site.k, site.l
        )));
    }
    TruncNormalParams::new(spec.c * sigma, sigma)
}

/// Log density of the truncated normal at `rho`, normalizer included;
/// `-inf` below the support.
pub fn log_prior_magnitude(rho: f64, p: &TruncNormalParams) -> f64 {
    if rho < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (rho - p.mu) / p.sigma;
    -0.5 * z * z - p.sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_std_normal_cdf(p.mu / p.sigma)
}

/// Log density of the uniform phase prior on `(-pi, pi]`.
pub fn log_prior_phase(theta: f64) -> f64 {
    use std::f64::consts::PI;
    if theta > -PI && theta <= PI {
        -(2.0 * PI).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln Phi(x)` for the standard normal. Only ever called with `x >= 0` here
/// (mu and sigma are positive), where the erf route is accurate to ~1e-15.
fn ln_std_normal_cdf(x: f64) -> f64 {
    let phi = 0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2));
    phi.ln()
}

/// How the zero-frequency coefficient is treated during sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DcMode {
    /// Pin the DC coefficient to its observed value; it encodes the image
    /// mean, which the decaying prior does not model.
    FixObserved,
    /// Sample the DC coefficient with this prior sigma.
    Explicit(f64),
}

/// Full prior specification for a sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorField {
    pub magnitude: MagnitudePriorSpec,
    pub dc: DcMode,
}

impl PriorField {
    pub fn new(magnitude: MagnitudePriorSpec, dc: DcMode) -> Result<Self> {
        if let DcMode::Explicit(v) = dc {
            if !(v > 0.0) || !v.is_finite() {
                return Err(BifsError::Config(format!(
                    "explicit dc sigma must be positive, got {v}"
                )));
            }
        }
        Ok(Self { magnitude, dc })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lambda: f64, d: f64) -> ParamFnSpec {
        ParamFnSpec::new(lambda, d, lambda).unwrap()
    }

    #[test]
    fn param_fn_values() {
        assert!((eval_param_fn(&spec(1.0, 1.0), SiteIndex::new(3, 4)) - 0.2).abs() < 1e-15);
        assert_eq!(eval_param_fn(&spec(1.0, 0.0), SiteIndex::new(5, -2)), 1.0);
        assert!((eval_param_fn(&spec(2.0, 2.0), SiteIndex::new(1, 1)) - 1.0).abs() < 1e-15);
        // Origin takes the explicit value.
        let s = ParamFnSpec::new(1.0, 1.0, 0.125).unwrap();
        assert_eq!(eval_param_fn(&s, SiteIndex::new(0, 0)), 0.125);
    }

    #[test]
    fn param_fn_radial_symmetry_and_decay() {
        let s = spec(1.3, 1.7);
        let a = eval_param_fn(&s, SiteIndex::new(3, 4));
        let b = eval_param_fn(&s, SiteIndex::new(-4, 3));
        let c = eval_param_fn(&s, SiteIndex::new(5, 0));
        assert_eq!(a, b);
        assert_eq!(a, c);
        let near = eval_param_fn(&s, SiteIndex::new(1, 1));
        let far = eval_param_fn(&s, SiteIndex::new(10, 2));
        assert!(near > far);
    }

    #[test]
    fn prior_params_follow_c_rule() {
        let m = MagnitudePriorSpec::new(1.0, spec(1.0, 1.0)).unwrap();
        let p = magnitude_prior_at(&m, SiteIndex::new(0, 5)).unwrap();
        assert!((p.mu - 0.2).abs() < 1e-15 && (p.sigma - 0.2).abs() < 1e-15);

        let m = MagnitudePriorSpec::new(3.0, spec(1.0, 1.0)).unwrap();
        let p = magnitude_prior_at(&m, SiteIndex::new(3, 4)).unwrap();
        assert!((p.mu - 0.6).abs() < 1e-15 && (p.sigma - 0.2).abs() < 1e-15);

        let m = MagnitudePriorSpec::new(2.0, ParamFnSpec::new(1.0, 1.0, 0.4).unwrap()).unwrap();
        let p = magnitude_prior_at(&m, SiteIndex::new(0, 0)).unwrap();
        assert!((p.sigma - 0.4).abs() < 1e-15 && (p.mu - 0.8).abs() < 1e-15);
    }

    #[test]
    fn magnitude_log_density() {
        let p = TruncNormalParams::new(0.6, 0.2).unwrap();
        // Mode at mu for an interior mean.
        let at_mode = log_prior_magnitude(0.6, &p);
        for rho in [0.0, 0.3, 0.5, 0.7, 1.0, 2.0] {
            assert!(at_mode >= log_prior_magnitude(rho, &p));
        }
        assert_eq!(log_prior_magnitude(-1e-12, &p), f64::NEG_INFINITY);
        // Closed-form difference: the normalizer cancels.
        let diff = log_prior_magnitude(0.6, &p) - log_prior_magnitude(0.8, &p);
        assert!((diff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn magnitude_log_density_is_normalized() {
        // Trapezoid integral of exp(log density) over the support is 1.
        let p = TruncNormalParams::new(0.8, 0.5).unwrap();
        let n = 400_000;
        let hi = 8.0;
        let h = hi / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let rho = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * log_prior_magnitude(rho, &p).exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-9, "integral {total}");
    }

    #[test]
    fn phase_log_density() {
        use std::f64::consts::PI;
        let expected = -(2.0 * PI).ln();
        assert_eq!(log_prior_phase(0.0), expected);
        assert_eq!(log_prior_phase(PI), expected);
        assert_eq!(log_prior_phase(4.0), f64::NEG_INFINITY);
        assert_eq!(log_prior_phase(-PI), f64::NEG_INFINITY);
    }
}
