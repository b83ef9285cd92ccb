//! Per-site Metropolis-Hastings over the Fourier lattice.
//!
//! Each free site runs an independent random-walk chain: proposals are
//! symmetric Gaussian steps on the Cartesian pair, the acceptance ratio is
//! evaluated on the polar pair, and the change of coordinates contributes a
//! `rho_current / rho_proposed` Jacobian factor. Self-conjugate sites (center
//! and Nyquist lines on even dimensions) must stay real, so they run a 1-D
//! real-coefficient Metropolis chain with the magnitude prior applied to the
//! absolute value and the sign carried by the state.
//!
//! The acceptance log-ratio is always computed by direct evaluation of the
//! log likelihood, log priors and log Jacobian, never through a simplified
//! closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{BifsError, Result};
use crate::fourier::{to_cartesian, to_polar, unique_sites, SiteKind, SitePartition};
use crate::grid::{CartesianPoint, ImageGrid, PolarPoint, SiteIndex, SpectralGrid};
use crate::likelihood::{log_likelihood, SiteObservation};
use crate::priors::{
    eval_param_fn, log_prior_magnitude, log_prior_phase, magnitude_prior_at, DcMode, ParamFnSpec,
    PriorField, TruncNormalParams,
};
use crate::rng::{site_main_rng, site_pilot_rng};

/// Scale factor applied to the Gaussian-approximation posterior spread when
/// the proposal scale is left on `Auto`. Calibrated so that default runs land
/// near the 0.234 target rate.
pub const AUTO_PROPOSAL_FACTOR: f64 = 2.4;

/// Half-width of the acceptance-rate band used as the adaptation stopping
/// rule around `adapt_target`.
pub const ADAPT_RATE_BAND: f64 = 0.07;

/// Maximum number of pilot-adaptation rounds.
pub const MAX_ADAPT_ROUNDS: usize = 5;

/// Per-round multiplicative rescale factors are clipped to this range.
pub const ADAPT_RESCALE_CLIP: (f64, f64) = (1.0 / 3.0, 3.0);

/// Proposal step scale: one value everywhere, a parameter function over the
/// lattice, or an automatic per-site choice proportional to
/// `(sigma^-2 + sigma_nu^-2)^(-1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProposalScale {
    Scalar(f64),
    ParamFn(ParamFnSpec),
    Auto,
}

/// Chain schedule and adaptation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub proposal: ProposalScale,
    pub seed: u64,
    pub adapt: bool,
    pub adapt_target: f64,
    pub adapt_iters: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_iters: 20_000,
            burn_in: 2_000,
            thin: 10,
            proposal: ProposalScale::Auto,
            seed: 0,
            adapt: false,
            adapt_target: 0.234,
            adapt_iters: 1_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters <= self.burn_in {
            return Err(BifsError::Config(format!(
                "total_iters {} must exceed burn_in {}",
                self.total_iters, self.burn_in
            )));
        }
        if self.thin < 1 {
            return Err(BifsError::Config("thin must be at least 1".into()));
        }
        if (self.total_iters - self.burn_in) % self.thin != 0 {
            return Err(BifsError::Config(format!(
                "total_iters - burn_in = {} must be a multiple of thin {}",
                self.total_iters - self.burn_in,
                self.thin
            )));
        }
        if self.retained_len() == 0 {
            return Err(BifsError::Config("schedule retains no samples".into()));
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return Err(BifsError::Config(format!(
                "adapt_target must lie in (0, 1), got {}",
                self.adapt_target
            )));
        }
        if self.adapt_iters == 0 {
            return Err(BifsError::Config("adapt_iters must be positive".into()));
        }
        if let ProposalScale::Scalar(xi) = self.proposal {
            if !(xi > 0.0) || !xi.is_finite() {
                return Err(BifsError::Config(format!("proposal scale must be positive, got {xi}")));
            }
        }
        Ok(())
    }

    pub fn retained_len(&self) -> usize {
        (self.total_iters - self.burn_in) / self.thin
    }
}

/// Everything one site's chain needs: observation, prior, proposal scale.
#[derive(Debug, Clone)]
pub struct SiteModel {
    pub site: SiteIndex,
    pub kind: SiteKind,
    pub obs: SiteObservation,
    /// Raw observed coefficient (the polar pair in `obs` is derived from it).
    pub obs_cart: CartesianPoint,
    pub prior: TruncNormalParams,
    pub xi: f64,
    /// Pinned to the observed value; never sampled.
    pub fixed: bool,
}

/// Retained Cartesian samples and acceptance counts for one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteChain {
    pub site: SiteIndex,
    pub samples: Vec<CartesianPoint>,
    pub accept_count: u64,
    pub propose_count: u64,
    pub fixed: bool,
}

/// Chains for every free and self-conjugate site of a lattice, in row-major
/// site order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainField {
    pub rows: usize,
    pub cols: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: Vec<SiteChain>,
}

impl ChainField {
    pub fn retained_len(&self) -> usize {
        self.chains.first().map_or(0, |c| c.samples.len())
    }

    pub fn total_iters(&self) -> usize {
        self.chains.first().map_or(0, |c| c.propose_count as usize)
    }

    /// Check that the chain list matches the lattice partition exactly.
    pub fn validate_structure(&self) -> Result<SitePartition> {
        let partition = unique_sites(self.rows, self.cols)?;
        let stored = partition.stored();
        if stored.len() != self.chains.len() {
            return Err(BifsError::Data(format!(
                "chain field has {} chains but the {}x{} lattice stores {} sites",
                self.chains.len(),
                self.rows,
                self.cols,
                stored.len()
            )));
        }
        let retained = self.retained_len();
        for ((site, _), chain) in stored.iter().zip(&self.chains) {
            if *site != chain.site {
                return Err(BifsError::Data(format!(
                    "chain at ({}, {}) does not match expected site ({}, {})",
                    chain.site.k, chain.site.l, site.k, site.l
                )));
            }
            if chain.samples.len() != retained {
                return Err(BifsError::Data(format!(
                    "chain at ({}, {}) retains {} samples, expected {}",
                    chain.site.k,
                    chain.site.l,
                    chain.samples.len(),
                    retained
                )));
            }
        }
        Ok(partition)
    }
}

/// Symmetric Gaussian step on the Cartesian pair.
pub fn propose<R: Rng>(current: CartesianPoint, xi: f64, rng: &mut R) -> CartesianPoint {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    CartesianPoint::new(current.a + xi * z1, current.b + xi * z2)
}

/// Unnormalized log posterior of a polar state at one site.
fn log_target(m: &SiteModel, p: &PolarPoint) -> f64 {
    log_likelihood(&m.obs, p) + log_prior_magnitude(p.rho, &m.prior) + log_prior_phase(p.theta)
}

/// Log Jacobian ratio `ln(rho_current / rho_proposed)` with the conventions
/// that a zero current magnitude gives `-inf`, a zero proposed magnitude gives
/// `+inf`, and both zero contribute nothing.
fn log_jacobian_ratio(rho_current: f64, rho_proposed: f64) -> f64 {
    if rho_current == 0.0 && rho_proposed == 0.0 {
        0.0
    } else {
        rho_current.ln() - rho_proposed.ln()
    }
}

/// Log acceptance ratio of a proposed polar state against the current one:
/// log posterior difference plus the Cartesian-to-polar Jacobian correction.
/// The caller accepts when `ln u < min(0, value)`.
pub fn log_acceptance(proposed: &PolarPoint, current: &PolarPoint, m: &SiteModel) -> f64 {
    log_target(m, proposed) - log_target(m, current)
        + log_jacobian_ratio(current.rho, proposed.rho)
}

/// Log density of the real-coefficient target at a self-conjugate site: a
/// normal likelihood around the observed real value and the magnitude prior
/// folded symmetrically over the sign.
fn log_target_real(m: &SiteModel, x: f64) -> f64 {
    let s2 = m.obs.sigma * m.obs.sigma;
    let d = m.obs_cart.a - x;
    -0.5 * d * d / s2 - m.obs.sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        + log_prior_magnitude(x.abs(), &m.prior)
        - std::f64::consts::LN_2
}

enum ChainState {
    Polar {
        cart: CartesianPoint,
        polar: PolarPoint,
        lt: f64,
    },
    Real {
        x: f64,
        lt: f64,
    },
}

fn init_state(m: &SiteModel, init: PolarPoint) -> Result<ChainState> {
    match m.kind {
        SiteKind::Free => {
            if init.rho <= 0.0 {
                return Err(BifsError::Numeric(
                    "zero magnitude at chain initialization; the polar Jacobian is degenerate there"
                        .into(),
                ));
            }
            let lt = log_target(m, &init);
            if !lt.is_finite() {
                return Err(BifsError::Numeric(format!(
                    "non-finite log posterior {lt} at chain initialization"
                )));
            }
            let cart = to_cartesian(init)?;
            Ok(ChainState::Polar {
                cart,
                polar: init,
                lt,
            })
        }
        SiteKind::SelfConjugate => {
            let x = init.rho * init.theta.cos();
            let lt = log_target_real(m, x);
            if !lt.is_finite() {
                return Err(BifsError::Numeric(format!(
                    "non-finite log posterior {lt} at chain initialization"
                )));
            }
            Ok(ChainState::Real { x, lt })
        }
        SiteKind::Mirrored => Err(BifsError::Data(
            "mirrored sites are derived by conjugation, not sampled".into(),
        )),
    }
}

/// One Metropolis step; returns whether the proposal was accepted.
fn step<R: Rng>(m: &SiteModel, xi: f64, state: &mut ChainState, rng: &mut R) -> bool {
    match state {
        ChainState::Polar { cart, polar, lt } => {
            let prop_cart = propose(*cart, xi, rng);
            let prop_polar = to_polar(prop_cart);
            let prop_lt = log_target(m, &prop_polar);
            let log_a = prop_lt - *lt + log_jacobian_ratio(polar.rho, prop_polar.rho);
            let u: f64 = rng.random();
            if u.ln() < log_a.min(0.0) {
                // Algorithm keeps the polar state authoritative and maps the
                // accepted state back to Cartesian coordinates.
                *polar = prop_polar;
                *cart = to_cartesian(prop_polar).expect("accepted magnitude is nonnegative");
                *lt = prop_lt;
                true
            } else {
                false
            }
        }
        ChainState::Real { x, lt } => {
            let z: f64 = rng.sample(StandardNormal);
            let prop_x = *x + xi * z;
            let prop_lt = log_target_real(m, prop_x);
            let log_a = prop_lt - *lt;
            let u: f64 = rng.random();
            if u.ln() < log_a.min(0.0) {
                *x = prop_x;
                *lt = prop_lt;
                true
            } else {
                false
            }
        }
    }
}

fn state_cartesian(state: &ChainState) -> CartesianPoint {
    match state {
        ChainState::Polar { cart, .. } => *cart,
        ChainState::Real { x, .. } => CartesianPoint::new(*x, 0.0),
    }
}

/// Run one site's chain: `total_iters` Metropolis steps from `init`,
/// retaining every `thin`-th post-burn-in Cartesian state. Fixed sites yield
/// a degenerate chain pinned at the observed value.
pub fn run_site_chain<R: Rng>(
    m: &SiteModel,
    init: PolarPoint,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SiteChain> {
    cfg.validate()?;
    let retained = cfg.retained_len();
    if m.fixed {
        return Ok(SiteChain {
            site: m.site,
            samples: vec![m.obs_cart; retained],
            accept_count: 0,
            propose_count: cfg.total_iters as u64,
            fixed: true,
        });
    }
    let mut state = init_state(m, init)?;
    let mut samples = Vec::with_capacity(retained);
    let mut accept_count = 0u64;
    for t in 1..=cfg.total_iters {
        if step(m, m.xi, &mut state, rng) {
            accept_count += 1;
        }
        if t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            samples.push(state_cartesian(&state));
        }
    }
    Ok(SiteChain {
        site: m.site,
        samples,
        accept_count,
        propose_count: cfg.total_iters as u64,
        fixed: false,
    })
}

fn resolve_xi(
    proposal: &ProposalScale,
    site: SiteIndex,
    sigma: f64,
    prior_sigma: f64,
) -> Result<f64> {
    let xi = match proposal {
        ProposalScale::Scalar(x) => *x,
        ProposalScale::ParamFn(spec) => eval_param_fn(spec, site),
        ProposalScale::Auto => {
            AUTO_PROPOSAL_FACTOR
                / (1.0 / (sigma * sigma) + 1.0 / (prior_sigma * prior_sigma)).sqrt()
        }
    };
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(BifsError::Config(format!(
            "proposal scale resolved to {xi} at site ({}, {})",
            site.k, site.l
        )));
    }
    Ok(xi)
}

/// Assemble per-site models for every stored (free or self-conjugate) site of
/// an observed spectrum.
pub fn build_site_models(
    observed: &SpectralGrid,
    priors: &PriorField,
    sigma: f64,
    cfg: &SamplerConfig,
) -> Result<Vec<SiteModel>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(BifsError::Config(format!("noise sigma must be positive, got {sigma}")));
    }
    let partition = unique_sites(observed.rows(), observed.cols())?;
    let mut models = Vec::new();
    for (site, kind) in partition.stored() {
        let obs_cart = CartesianPoint::from(observed.value(site));
        let obs_polar = to_polar(obs_cart);
        let obs = SiteObservation::new(obs_polar.rho, obs_polar.theta, sigma)
            .map_err(|e| e.at_site(site))?;
        let (prior, fixed) = if site.is_origin() {
            match priors.dc {
                DcMode::FixObserved => (TruncNormalParams::new(0.0, 1.0)?, true),
                DcMode::Explicit(dc_sigma) => (
                    TruncNormalParams::new(priors.magnitude.c * dc_sigma, dc_sigma)
                        .map_err(|e| e.at_site(site))?,
                    false,
                ),
            }
        } else {
            (
                magnitude_prior_at(&priors.magnitude, site).map_err(|e| e.at_site(site))?,
                false,
            )
        };
        let xi = if fixed {
            1.0
        } else {
            resolve_xi(&cfg.proposal, site, sigma, prior.sigma).map_err(|e| e.at_site(site))?
        };
        models.push(SiteModel {
            site,
            kind,
            obs,
            obs_cart,
            prior,
            xi,
            fixed,
        });
    }
    Ok(models)
}

/// Sample every stored site of the observed spectrum in parallel. Chains are
/// initialized at the observed values; per-site RNG streams derived from
/// `(seed, site)` make the result independent of worker count and schedule.
pub fn run_field(
    observed: &SpectralGrid,
    priors: &PriorField,
    sigma: f64,
    cfg: &SamplerConfig,
) -> Result<ChainField> {
    run_field_with_xi(observed, priors, sigma, cfg, None)
}

/// Like [`run_field`] but with an optional per-site proposal-scale override in
/// stored-site order, as produced by [`adapt_proposals`].
pub fn run_field_with_xi(
    observed: &SpectralGrid,
    priors: &PriorField,
    sigma: f64,
    cfg: &SamplerConfig,
    xi_override: Option<&[f64]>,
) -> Result<ChainField> {
    cfg.validate()?;
    let mut models = build_site_models(observed, priors, sigma, cfg)?;
    if let Some(xis) = xi_override {
        if xis.len() != models.len() {
            return Err(BifsError::Config(format!(
                "proposal-scale override has {} entries for {} stored sites",
                xis.len(),
                models.len()
            )));
        }
        for (m, &xi) in models.iter_mut().zip(xis) {
            if !m.fixed {
                if !(xi > 0.0) || !xi.is_finite() {
                    return Err(BifsError::Config(format!(
                        "proposal-scale override {xi} at site ({}, {})",
                        m.site.k, m.site.l
                    )));
                }
                m.xi = xi;
            }
        }
    }
    let chains: Result<Vec<SiteChain>> = models
        .par_iter()
        .map(|m| {
            let mut rng = site_main_rng(cfg.seed, m.site);
            run_site_chain(m, to_polar(m.obs_cart), cfg, &mut rng)
                .map_err(|e| e.at_site(m.site))
        })
        .collect();
    Ok(ChainField {
        rows: observed.rows(),
        cols: observed.cols(),
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        seed: cfg.seed,
        chains: chains?,
    })
}

/// Acceptance-rate summary of one adaptation round, over non-fixed sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptRound {
    pub round: usize,
    pub mean_rate: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    pub frac_in_band: f64,
}

/// Result of pilot adaptation: per-site proposal scales in stored-site order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub xi: Vec<f64>,
    pub rounds: Vec<AdaptRound>,
    pub converged: bool,
}

/// Tune per-site proposal scales with short pilot chains: each round measures
/// acceptance rates over `adapt_iters` iterations and rescales every site's
/// scale by `rate / adapt_target` (clipped to [1/3, 3]) until all sites sit
/// within `adapt_target` +/- 0.07 or five rounds have run. Pilot samples are
/// discarded; only the scales survive. On non-convergence the best-measured
/// round's scales are returned with `converged = false`.
pub fn adapt_proposals(
    observed: &SpectralGrid,
    priors: &PriorField,
    sigma: f64,
    cfg: &SamplerConfig,
) -> Result<AdaptOutcome> {
    cfg.validate()?;
    if !cfg.adapt {
        return Err(BifsError::Config(
            "adapt_proposals called with adapt disabled".into(),
        ));
    }
    let models = build_site_models(observed, priors, sigma, cfg)?;
    let mut xi: Vec<f64> = models.iter().map(|m| m.xi).collect();
    let mut rounds = Vec::new();
    let mut snapshots: Vec<(Vec<f64>, f64)> = Vec::new();
    for round in 0..MAX_ADAPT_ROUNDS {
        let rates: Result<Vec<Option<f64>>> = models
            .par_iter()
            .zip(&xi)
            .map(|(m, &site_xi)| {
                if m.fixed {
                    return Ok(None);
                }
                let mut rng = site_pilot_rng(cfg.seed, m.site, round as u8);
                let mut state = init_state(m, to_polar(m.obs_cart)).map_err(|e| e.at_site(m.site))?;
                let mut accepts = 0u64;
                for _ in 0..cfg.adapt_iters {
                    if step(m, site_xi, &mut state, &mut rng) {
                        accepts += 1;
                    }
                }
                Ok(Some(accepts as f64 / cfg.adapt_iters as f64))
            })
            .collect();
        let rates = rates?;
        let observed_rates: Vec<f64> = rates.iter().flatten().copied().collect();
        let n = observed_rates.len().max(1) as f64;
        let in_band = observed_rates
            .iter()
            .filter(|r| (*r - cfg.adapt_target).abs() <= ADAPT_RATE_BAND)
            .count() as f64;
        let summary = AdaptRound {
            round,
            mean_rate: observed_rates.iter().sum::<f64>() / n,
            min_rate: observed_rates.iter().copied().fold(f64::INFINITY, f64::min),
            max_rate: observed_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            frac_in_band: in_band / n,
        };
        rounds.push(summary);
        snapshots.push((xi.clone(), summary.frac_in_band));
        if summary.frac_in_band == 1.0 {
            return Ok(AdaptOutcome {
                xi,
                rounds,
                converged: true,
            });
        }
        for (x, rate) in xi.iter_mut().zip(&rates) {
            if let Some(rate) = rate {
                let factor = (rate / cfg.adapt_target).clamp(ADAPT_RESCALE_CLIP.0, ADAPT_RESCALE_CLIP.1);
                *x *= factor;
            }
        }
    }
    // Not converged: hand back the scales from the best measured round.
    let best = snapshots
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(xi, _)| xi)
        .expect("at least one adaptation round ran");
    Ok(AdaptOutcome {
        xi: best,
        rounds,
        converged: false,
    })
}

/// Per-site acceptance rates laid out on the full centered lattice. Mirrored
/// sites take their source site's rate; fixed sites report 1.0 by convention.
pub fn acceptance_map(field: &ChainField) -> Result<ImageGrid> {
    let partition = field.validate_structure()?;
    let mut grid = ImageGrid::zeros(field.rows, field.cols)?;
    let (cr, cc) = (field.rows / 2, field.cols / 2);
    let set_at = |site: SiteIndex, value: f64, grid: &mut ImageGrid| {
        let row = (cr as i64 + site.k as i64) as usize;
        let col = (cc as i64 + site.l as i64) as usize;
        grid.set(row, col, value);
    };
    for chain in &field.chains {
        let rate = if chain.fixed {
            1.0
        } else {
            chain.accept_count as f64 / chain.propose_count as f64
        };
        set_at(chain.site, rate, &mut grid);
        let mirror = partition.mirror(chain.site);
        if mirror != chain.site {
            set_at(mirror, rate, &mut grid);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::forward_fft;
    use crate::phantom::add_noise;
    use crate::priors::MagnitudePriorSpec;

    fn test_model(r: f64, psi: f64, sigma: f64, mu: f64, sigma_k: f64, xi: f64) -> SiteModel {
        SiteModel {
            site: SiteIndex::new(1, 2),
            kind: SiteKind::Free,
            obs: SiteObservation::new(r, psi, sigma).unwrap(),
            obs_cart: to_cartesian(PolarPoint::new(r, psi)).unwrap(),
            prior: TruncNormalParams::new(mu, sigma_k).unwrap(),
            xi,
            fixed: false,
        }
    }

    fn default_priors() -> PriorField {
        PriorField::new(
            MagnitudePriorSpec::new(1.0, ParamFnSpec::new(1.0, 1.0, 1.0).unwrap()).unwrap(),
            DcMode::FixObserved,
        )
        .unwrap()
    }

    /// Small deterministic noisy grid for lattice-level tests (the phantom
    /// generator enforces a 32x32 minimum).
    fn small_noisy(rows: usize, cols: usize, seed: u64) -> crate::grid::ImageGrid {
        let data = (0..rows * cols)
            .map(|i| 0.01 * (i % cols) as f64 + 0.005 * (i / cols) as f64)
            .collect();
        let base = crate::grid::ImageGrid::from_vec(rows, cols, data).unwrap();
        add_noise(&base, 0.1, seed).unwrap()
    }

    #[test]
    fn propose_is_centered_and_deterministic() {
        let site = SiteIndex::new(4, -3);
        // Same stream, same draws, bit-identical.
        let mut r1 = site_main_rng(7, site);
        let mut r2 = site_main_rng(7, site);
        let p1 = propose(CartesianPoint::new(0.0, 0.0), 1.0, &mut r1);
        let p2 = propose(CartesianPoint::new(0.0, 0.0), 1.0, &mut r2);
        assert_eq!(p1.a.to_bits(), p2.a.to_bits());
        assert_eq!(p1.b.to_bits(), p2.b.to_bits());

        // Vanishing step keeps the current point.
        let mut rng = site_main_rng(1, site);
        let p = propose(CartesianPoint::new(3.0, -2.0), 1e-300, &mut rng);
        assert_eq!((p.a, p.b), (3.0, -2.0));

        // Empirical mean of many steps returns to the start.
        let mut rng = site_main_rng(4, site);
        let n = 100_000;
        let xi = 0.7;
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let p = propose(CartesianPoint::new(3.0, -2.0), xi, &mut rng);
            sa += p.a;
            sb += p.b;
        }
        let tol = 3.0 * xi / (n as f64).sqrt();
        assert!((sa / n as f64 - 3.0).abs() < tol);
        assert!((sb / n as f64 + 2.0).abs() < tol);
    }

    #[test]
    fn acceptance_of_identity_move_is_zero() {
        let m = test_model(1.2, 0.4, 0.3, 0.8, 0.5, 0.2);
        let p = PolarPoint::new(0.9, -0.7);
        assert_eq!(log_acceptance(&p, &p, &m), 0.0);
    }

    #[test]
    fn acceptance_is_antisymmetric() {
        let m = test_model(1.7, -1.1, 0.45, 0.3, 0.6, 0.2);
        let pairs = [
            (PolarPoint::new(0.5, 0.1), PolarPoint::new(1.9, -2.0)),
            (PolarPoint::new(2.4, 3.0), PolarPoint::new(0.01, -3.0)),
            (PolarPoint::new(1.0, 1.0), PolarPoint::new(1.0, -1.0)),
        ];
        for (x, y) in pairs {
            let fwd = log_acceptance(&y, &x, &m);
            let bwd = log_acceptance(&x, &y, &m);
            assert!((fwd + bwd).abs() < 1e-12, "fwd {fwd} bwd {bwd}");
        }
    }

    #[test]
    fn acceptance_matches_quadratic_closed_form() {
        use rand::Rng;
        let mut rng = site_main_rng(5, SiteIndex::new(0, 1));
        for _ in 0..200 {
            let r = 0.1 + 2.9 * rng.random::<f64>();
            let psi = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * rng.random::<f64>();
            let sigma = 0.1 + 0.9 * rng.random::<f64>();
            let sigma_k = 0.1 + 0.9 * rng.random::<f64>();
            let c = 0.5 + 2.5 * rng.random::<f64>();
            let m = test_model(r, psi, sigma, c * sigma_k, sigma_k, 0.2);
            let setup = bifs_oracle::SiteSetup {
                r,
                psi,
                sigma,
                mu: c * sigma_k,
                sigma_k,
            };
            let cur = PolarPoint::new(0.05 + 3.0 * rng.random::<f64>(), psi / 2.0);
            let prop = PolarPoint::new(0.05 + 3.0 * rng.random::<f64>(), -psi / 3.0);
            let direct = log_acceptance(&prop, &cur, &m);
            let closed =
                setup.closed_form_log_acceptance(cur.rho, cur.theta, prop.rho, prop.theta);
            assert!(
                (direct - closed).abs() <= 1e-10,
                "direct {direct} vs closed form {closed}"
            );
        }
    }

    #[test]
    fn fixed_site_yields_degenerate_chain() {
        let mut m = test_model(1.0, 0.3, 0.5, 0.0, 1.0, 0.2);
        m.fixed = true;
        let cfg = SamplerConfig {
            total_iters: 500,
            burn_in: 100,
            thin: 4,
            ..SamplerConfig::default()
        };
        let mut rng = site_main_rng(0, m.site);
        let chain = run_site_chain(&m, to_polar(m.obs_cart), &cfg, &mut rng).unwrap();
        assert_eq!(chain.samples.len(), cfg.retained_len());
        assert_eq!(chain.accept_count, 0);
        assert!(chain.samples.iter().all(|s| *s == m.obs_cart));
    }

    #[test]
    fn near_degenerate_likelihood_pins_the_chain_to_the_observation() {
        let sigma = 1e-3;
        let m = test_model(1.5, 0.8, sigma, 0.5, 0.5, 2.0 * sigma);
        let cfg = SamplerConfig {
            total_iters: 20_000,
            burn_in: 2_000,
            thin: 2,
            ..SamplerConfig::default()
        };
        let mut rng = site_main_rng(3, m.site);
        let chain = run_site_chain(&m, to_polar(m.obs_cart), &cfg, &mut rng).unwrap();
        let n = chain.samples.len() as f64;
        let mean_a = chain.samples.iter().map(|s| s.a).sum::<f64>() / n;
        let mean_b = chain.samples.iter().map(|s| s.b).sum::<f64>() / n;
        // Posterior spread is ~sigma here, so allow three of those.
        let expect = to_cartesian(PolarPoint::new(1.5, 0.8)).unwrap();
        assert!((mean_a - expect.a).abs() < 3.0 * sigma, "mean_a {mean_a}");
        assert!((mean_b - expect.b).abs() < 3.0 * sigma, "mean_b {mean_b}");
    }

    #[test]
    fn chain_marginals_stay_in_their_domains() {
        let m = test_model(0.8, -2.0, 0.4, 0.4, 0.4, 0.5);
        let cfg = SamplerConfig {
            total_iters: 5_000,
            burn_in: 1_000,
            thin: 2,
            ..SamplerConfig::default()
        };
        let mut rng = site_main_rng(9, m.site);
        let chain = run_site_chain(&m, to_polar(m.obs_cart), &cfg, &mut rng).unwrap();
        for s in &chain.samples {
            let p = to_polar(*s);
            assert!(p.rho >= 0.0);
            assert!(p.theta > -std::f64::consts::PI && p.theta <= std::f64::consts::PI);
        }
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = SamplerConfig::default();
        cfg.total_iters = 100;
        cfg.burn_in = 100;
        assert!(cfg.validate().is_err());
        cfg.burn_in = 20;
        cfg.thin = 7; // 80 not divisible by 7
        assert!(cfg.validate().is_err());
        cfg.thin = 8;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.retained_len(), 10);
    }

    #[test]
    fn field_covers_every_stored_site() {
        let noisy = small_noisy(8, 8, 4);
        let observed = forward_fft(&noisy).unwrap();
        let cfg = SamplerConfig {
            total_iters: 5_000,
            burn_in: 500,
            thin: 10,
            seed: 11,
            ..SamplerConfig::default()
        };
        let field = run_field(&observed, &default_priors(), 0.1 / std::f64::consts::SQRT_2, &cfg)
            .unwrap();
        let partition = field.validate_structure().unwrap();
        assert_eq!(
            field.chains.len(),
            partition.free.len() + partition.self_conjugate.len()
        );
        for chain in &field.chains {
            assert_eq!(chain.samples.len(), (5_000 - 500) / 10);
            assert!(chain.accept_count <= chain.propose_count);
            assert_eq!(chain.propose_count, 5_000);
        }
        // The DC chain is pinned under FixObserved.
        let dc = field
            .chains
            .iter()
            .find(|c| c.site.is_origin())
            .expect("dc chain present");
        assert!(dc.fixed);
        assert_eq!(dc.accept_count, 0);
    }

    #[test]
    fn oversized_steps_shrink_during_adaptation() {
        let noisy = small_noisy(16, 16, 21);
        let observed = forward_fft(&noisy).unwrap();
        let cfg = SamplerConfig {
            proposal: ProposalScale::Scalar(50.0),
            adapt: true,
            adapt_iters: 200,
            seed: 5,
            ..SamplerConfig::default()
        };
        let sigma = 0.05 / std::f64::consts::SQRT_2;
        let outcome = adapt_proposals(&observed, &default_priors(), sigma, &cfg).unwrap();
        // Rates start near zero, so scales shrink by the clip factor each round.
        assert!(outcome.rounds[0].mean_rate < 0.05);
        assert!(outcome.rounds.len() > 1);
        for w in outcome.rounds.windows(2) {
            assert!(w[1].mean_rate >= w[0].mean_rate);
        }
        let models = build_site_models(&observed, &default_priors(), sigma, &cfg).unwrap();
        for (m, &xi) in models.iter().zip(&outcome.xi) {
            if !m.fixed {
                assert!(xi < 50.0);
            }
        }
    }

    #[test]
    fn acceptance_map_contract() {
        let noisy = small_noisy(8, 8, 8);
        let observed = forward_fft(&noisy).unwrap();
        let cfg = SamplerConfig {
            total_iters: 2_000,
            burn_in: 500,
            thin: 5,
            seed: 2,
            ..SamplerConfig::default()
        };
        let field = run_field(&observed, &default_priors(), 0.07, &cfg).unwrap();
        let map = acceptance_map(&field).unwrap();
        for &v in map.as_slice() {
            assert!((0.0..=1.0).contains(&v));
        }
        // Fixed DC reports 1.0 by convention.
        assert_eq!(map.get(4, 4), 1.0);
        // Mirrored sites carry their source's rate.
        let partition = unique_sites(8, 8).unwrap();
        for &site in &partition.free {
            let mirror = partition.mirror(site);
            let (cr, cc) = (4i32, 4i32);
            let v = map.get((cr + site.k) as usize, (cc + site.l) as usize);
            let w = map.get((cr + mirror.k) as usize, (cc + mirror.l) as usize);
            assert_eq!(v, w);
        }

        // An all-accept chain maps to exactly 1.0.
        let mut synthetic = field.clone();
        for chain in &mut synthetic.chains {
            chain.accept_count = chain.propose_count;
            chain.fixed = false;
        }
        let map = acceptance_map(&synthetic).unwrap();
        assert!(map.as_slice().iter().all(|&v| v == 1.0));
    }
}
