//! Flat key=value run configuration with CLI-flag override precedence.
//!
//! Recognized keys: `lambda`, `d`, `c`, `dc_mode` (`fix_observed` or
//! `explicit:<value>`), `T`, `burn_in`, `thin`, `xi` or `xi_fn` (`lambda,d`),
//! `seed`, `adapt`, `adapt_target`, `adapt_iters`, `noise_sigma` or
//! `noise_patch` (`x,y,w,h` with x = column, y = row), `levels`
//! (comma-separated quantile levels). Unknown keys are rejected outright.

use std::fmt::Write as _;
use std::path::Path;

use bifs_core::error::{BifsError, Result};
use bifs_core::likelihood::PatchRect;
use bifs_core::priors::{DcMode, MagnitudePriorSpec, ParamFnSpec, PriorField};
use bifs_core::sampler::{ProposalScale, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DcModeCfg {
    FixObserved,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lambda: f64,
    pub d: f64,
    pub c: f64,
    pub dc_mode: DcModeCfg,
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub xi: Option<f64>,
    pub xi_fn: Option<(f64, f64)>,
    pub seed: u64,
    pub adapt: bool,
    pub adapt_target: f64,
    pub adapt_iters: usize,
    pub noise_sigma: Option<f64>,
    pub noise_patch: Option<PatchRect>,
    pub levels: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            d: 1.0,
            c: 1.0,
            dc_mode: DcModeCfg::FixObserved,
            total_iters: 20_000,
            burn_in: 2_000,
            thin: 10,
            xi: None,
            xi_fn: None,
            seed: 0,
            adapt: false,
            adapt_target: 0.234,
            adapt_iters: 1_000,
            noise_sigma: None,
            noise_patch: None,
            levels: vec![0.05, 0.5, 0.95],
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> BifsError {
    BifsError::Config(format!("key {key}: cannot parse {value:?} as {what}"))
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| bad(key, value, "a number"))
}

pub fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad(key, value, "a nonnegative integer"))
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| bad(key, value, "a nonnegative integer"))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

pub fn parse_levels(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect()
}

pub fn parse_dc_mode(value: &str) -> Result<DcModeCfg> {
    if value == "fix_observed" {
        return Ok(DcModeCfg::FixObserved);
    }
    if let Some(rest) = value.strip_prefix("explicit:") {
        return Ok(DcModeCfg::Explicit(parse_f64("dc_mode", rest)?));
    }
    Err(BifsError::Config(format!(
        "dc_mode must be fix_observed or explicit:<value>, got {value:?}"
    )))
}

pub fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 2 {
        return Err(bad(key, value, "two comma-separated numbers"));
    }
    Ok((parse_f64(key, parts[0].trim())?, parse_f64(key, parts[1].trim())?))
}

pub fn parse_patch(value: &str) -> Result<PatchRect> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 4 {
        return Err(bad("noise_patch", value, "x,y,w,h"));
    }
    let x = parse_usize("noise_patch", parts[0].trim())?;
    let y = parse_usize("noise_patch", parts[1].trim())?;
    let w = parse_usize("noise_patch", parts[2].trim())?;
    let h = parse_usize("noise_patch", parts[3].trim())?;
    Ok(PatchRect {
        row: y,
        col: x,
        height: h,
        width: w,
    })
}

impl RunConfig {
    /// Apply one key=value assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lambda" => self.lambda = parse_f64(key, value)?,
            "d" => self.d = parse_f64(key, value)?,
            "c" => self.c = parse_f64(key, value)?,
            "dc_mode" => self.dc_mode = parse_dc_mode(value)?,
            "T" => self.total_iters = parse_usize(key, value)?,
            "burn_in" => self.burn_in = parse_usize(key, value)?,
            "thin" => self.thin = parse_usize(key, value)?,
            "xi" => self.xi = Some(parse_f64(key, value)?),
            "xi_fn" => self.xi_fn = Some(parse_pair(key, value)?),
            "seed" => self.seed = parse_u64(key, value)?,
            "adapt" => self.adapt = parse_bool(key, value)?,
            "adapt_target" => self.adapt_target = parse_f64(key, value)?,
            "adapt_iters" => self.adapt_iters = parse_usize(key, value)?,
            "noise_sigma" => self.noise_sigma = Some(parse_f64(key, value)?),
            "noise_patch" => self.noise_patch = Some(parse_patch(value)?),
            "levels" => self.levels = parse_levels(key, value)?,
            _ => return Err(BifsError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parse a config file: one `key=value` per line, `#` comments allowed.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BifsError::Config(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Cross-key validation; run before any compute starts.
    pub fn validate(&self) -> Result<()> {
        if self.xi.is_some() && self.xi_fn.is_some() {
            return Err(BifsError::Config("xi and xi_fn are mutually exclusive".into()));
        }
        if self.noise_sigma.is_some() && self.noise_patch.is_some() {
            return Err(BifsError::Config(
                "noise_sigma and noise_patch are mutually exclusive".into(),
            ));
        }
        // Construct the core specs eagerly so bad values fail here.
        self.prior_field()?;
        self.sampler_config()?.validate()?;
        for &q in &self.levels {
            if !(q > 0.0 && q < 1.0) {
                return Err(BifsError::Config(format!("quantile level {q} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn prior_field(&self) -> Result<PriorField> {
        let dc_value = match self.dc_mode {
            DcModeCfg::Explicit(v) => v,
            // Unused when the DC coefficient is pinned; any positive value.
            DcModeCfg::FixObserved => self.lambda,
        };
        let sigma_fn = ParamFnSpec::new(self.lambda, self.d, dc_value)?;
        let magnitude = MagnitudePriorSpec::new(self.c, sigma_fn)?;
        let dc = match self.dc_mode {
            DcModeCfg::FixObserved => DcMode::FixObserved,
            DcModeCfg::Explicit(v) => DcMode::Explicit(v),
        };
        PriorField::new(magnitude, dc)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let proposal = match (self.xi, self.xi_fn) {
            (Some(xi), None) => ProposalScale::Scalar(xi),
            (None, Some((lambda, d))) => ProposalScale::ParamFn(ParamFnSpec::new(lambda, d, lambda)?),
            (None, None) => ProposalScale::Auto,
            (Some(_), Some(_)) => {
                return Err(BifsError::Config("xi and xi_fn are mutually exclusive".into()))
            }
        };
        Ok(SamplerConfig {
            total_iters: self.total_iters,
            burn_in: self.burn_in,
            thin: self.thin,
            proposal,
            seed: self.seed,
            adapt: self.adapt,
            adapt_target: self.adapt_target,
            adapt_iters: self.adapt_iters,
        })
    }

    /// Resolved key=value dump, sorted, for the per-run config echo.
    /// `resolved_sigma` records the noise scale actually used, whether given
    /// explicitly or estimated from a patch.
    pub fn echo(&self, resolved_sigma: Option<f64>) -> String {
        let mut lines: Vec<String> = Vec::new();
        lines.push(format!("T={}", self.total_iters));
        lines.push(format!("adapt={}", self.adapt));
        lines.push(format!("adapt_iters={}", self.adapt_iters));
        lines.push(format!("adapt_target={}", self.adapt_target));
        lines.push(format!("burn_in={}", self.burn_in));
        lines.push(format!("c={}", self.c));
        lines.push(format!("d={}", self.d));
        match self.dc_mode {
            DcModeCfg::FixObserved => lines.push("dc_mode=fix_observed".into()),
            DcModeCfg::Explicit(v) => lines.push(format!("dc_mode=explicit:{v}")),
        }
        lines.push(format!("lambda={}", self.lambda));
        let mut levels = String::new();
        for (i, q) in self.levels.iter().enumerate() {
            if i > 0 {
                levels.push(',');
            }
            let _ = write!(levels, "{q}");
        }
        lines.push(format!("levels={levels}"));
        if let Some(p) = &self.noise_patch {
            lines.push(format!("noise_patch={},{},{},{}", p.col, p.row, p.width, p.height));
        }
        if let Some(sigma) = resolved_sigma.or(self.noise_sigma) {
            lines.push(format!("noise_sigma={sigma}"));
        }
        lines.push(format!("seed={}", self.seed));
        lines.push(format!("thin={}", self.thin));
        match (self.xi, self.xi_fn) {
            (Some(xi), _) => lines.push(format!("xi={xi}")),
            (None, Some((l, d))) => lines.push(format!("xi_fn={l},{d}")),
            (None, None) => lines.push("xi=auto".into()),
        }
        lines.sort();
        let mut out = String::new();
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("lambdaa", "1.0").is_err());
        assert!(cfg.set("lambda", "2.5").is_ok());
        assert_eq!(cfg.lambda, 2.5);
    }

    #[test]
    fn exclusive_keys_are_enforced() {
        let mut cfg = RunConfig::default();
        cfg.set("xi", "0.5").unwrap();
        cfg.set("xi_fn", "1,1").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.set("noise_sigma", "0.1").unwrap();
        cfg.set("noise_patch", "0,0,30,30").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dc_mode_forms() {
        assert_eq!(parse_dc_mode("fix_observed").unwrap(), DcModeCfg::FixObserved);
        assert_eq!(parse_dc_mode("explicit:0.5").unwrap(), DcModeCfg::Explicit(0.5));
        assert!(parse_dc_mode("pin").is_err());
    }

    #[test]
    fn file_parsing_and_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nlambda = 2\nT=4000\nburn_in=400\nthin=4\nseed=9\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.total_iters, 4000);
        cfg.validate().unwrap();
        let echo = cfg.echo(Some(0.125));
        assert!(echo.contains("lambda=2\n"));
        assert!(echo.contains("noise_sigma=0.125\n"));
        assert!(echo.contains("xi=auto\n"));

        std::fs::write(&path, "bogus_line\n").unwrap();
        assert!(cfg.apply_file(&path).is_err());
    }

    #[test]
    fn patch_parsing_maps_xy_to_col_row() {
        let p = parse_patch("3,5,30,20").unwrap();
        assert_eq!(
            p,
            PatchRect { row: 5, col: 3, height: 20, width: 30 }
        );
    }
}
