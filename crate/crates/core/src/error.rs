//! Error type shared across the crate.

use crate::grid::SiteIndex;

/// Errors produced by grid validation, file I/O, configuration and sampling.
#[derive(Debug, thiserror::Error)]
pub enum BifsError {
    /// Invalid data: non-finite values, bad dimensions, structural mismatches.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration or parameter values.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents (bad magic, truncated payload).
    #[error("format error: {0}")]
    Format(String),

    /// Numerical failure: degenerate estimates, non-finite log densities.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A per-site failure, tagged with the lattice site it occurred at.
    #[error("site ({},{}): {source}", site.k, site.l)]
    Site {
        site: SiteIndex,
        #[source]
        source: Box<BifsError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BifsError {
    pub fn at_site(self, site: SiteIndex) -> Self {
        BifsError::Site {
            site,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, BifsError>;
