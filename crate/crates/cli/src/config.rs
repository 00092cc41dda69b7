//! Run configuration: a flat JSON file, overridden by command-line flags,
//! with `OUSTEIN_SEED` as the seed fallback.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use oustein_core::paths::{Path, MAX_LEVEL};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every key a config file may contain. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Functional name from the registry
    #[arg(long, visible_alias = "g", global = true)]
    pub functional: Option<String>,
    /// Path literal: `const:<real>`, `file:<json>`, or a JSON file name
    #[arg(long, global = true)]
    pub path: Option<String>,
    /// Semigroup time
    #[arg(long, global = true)]
    pub u: Option<f64>,
    /// Horizon of the finite-time identity
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Horizon of the integrated-generator identity
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Monte-Carlo sample count
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Brownian truncation level J
    #[arg(long, global = true)]
    pub level: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pair each draw with its negative
    #[arg(long, global = true)]
    pub antithetic: Option<bool>,
    /// Upper end of the u integral
    #[arg(long = "umax", global = true)]
    pub u_max: Option<f64>,
    #[arg(long, global = true)]
    pub panels: Option<usize>,
    /// Gauss–Legendre nodes per panel
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    /// Schauder series truncation level
    #[arg(long, global = true)]
    pub jtrunc: Option<u32>,
    /// Relative tolerance of residual checks
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Largest witness index
    #[arg(long, global = true)]
    pub kmax: Option<u64>,
    /// Worker threads for the estimators
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Output file; stdout when absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl RunConfig {
    /// `self` with every field set in `flags` replaced.
    pub fn overridden_by(mut self, flags: &RunConfig) -> RunConfig {
        overlay!(self, flags; functional, path, u, t, r, n, level, seed, antithetic, u_max,
            panels, nodes, jtrunc, rel_tol, kmax, threads, format, out);
        self
    }

    pub fn from_json(text: &str) -> Result<RunConfig, String> {
        serde_json::from_str(text).map_err(|e| format!("config file: {e}"))
    }

    pub fn validate(&self) -> Result<(), String> {
        fn check(ok: bool, msg: &str) -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(msg.to_owned())
            }
        }
        if let Some(n) = self.n {
            check((1..=100_000_000).contains(&n), "n must be in 1..=1e8")?;
        }
        if let Some(level) = self.level {
            check(level < MAX_LEVEL, "level too large")?;
        }
        if let Some(u) = self.u {
            check(u >= 0.0 && u.is_finite(), "u must be non-negative")?;
        }
        for (v, name) in [(self.t, "t"), (self.r, "r"), (self.u_max, "umax")] {
            if let Some(v) = v {
                check(
                    v > 0.0 && v.is_finite(),
                    &format!("{name} must be positive"),
                )?;
            }
        }
        if let Some(p) = self.panels {
            check((1..=4096).contains(&p), "panels must be in 1..=4096")?;
        }
        if let Some(p) = self.nodes {
            check((1..=64).contains(&p), "nodes must be in 1..=64")?;
        }
        if let Some(j) = self.jtrunc {
            check(j <= 16, "jtrunc must be at most 16")?;
        }
        if let Some(tol) = self.rel_tol {
            check(tol > 0.0 && tol < 1.0, "rel_tol must be in (0, 1)")?;
        }
        if let Some(k) = self.kmax {
            check((1..=1000).contains(&k), "kmax must be in 1..=1000")?;
        }
        if let Some(t) = self.threads {
            check(t >= 1, "threads must be positive")?;
        }
        Ok(())
    }
}

/// Parses `const:<real>`, `file:<json>` or a bare JSON file name.
pub fn parse_path(literal: &str) -> Result<Path, String> {
    if let Some(c) = literal.strip_prefix("const:") {
        let c: f64 = c
            .trim()
            .parse()
            .map_err(|_| format!("bad constant in path literal `{literal}`"))?;
        return Path::constant(c, 0).map_err(|e| e.to_string());
    }
    let file = literal.strip_prefix("file:").unwrap_or(literal);
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read path file `{file}`: {e}"))?;
    Path::from_json(&text).map_err(|e| format!("path file `{file}`: {e}"))
}
