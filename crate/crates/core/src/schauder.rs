//! Haar and Schauder functions and the Lévy–Ciesielski Brownian sampler.
//!
//! Indexing: `S_0(t) = t`; for `k ≥ 1` write `2^n ≤ k < 2^{n+1}`. Then `H_k`
//! is `+2^{n/2}` on the closed left half of the window
//! `[k/2^n - 1, (k+1)/2^n - 1]`, `-2^{n/2}` on the half-open right half, and
//! `S_k = ∫₀ᵗ H_k` is a hat of height `2^{-n/2-1}` over that window.
//!
//! A level-`J` sample uses the `2^{J+1}` coefficients `ξ_0, ξ_1, …` and is
//! exactly piecewise-linear on the level-`J+1` grid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::{grid_len, Path, MAX_LEVEL};
use crate::rng::NormalStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisIndex(pub usize);

impl BasisIndex {
    /// `(n, j)` with `k = 2^n + j`, `0 ≤ j < 2^n`; `None` for `k = 0`.
    pub fn dyadic(self) -> Option<(u32, usize)> {
        if self.0 == 0 {
            return None;
        }
        let n = usize::BITS - 1 - self.0.leading_zeros();
        Some((n, self.0 - (1usize << n)))
    }

    /// Support window `[a, b]` of `H_k` / `S_k`, `k ≥ 1`.
    pub fn window(self) -> Option<(f64, f64)> {
        self.dyadic().map(|(n, j)| {
            let width = 1.0 / (1u64 << n) as f64;
            (j as f64 * width, (j + 1) as f64 * width)
        })
    }
}

/// Number of Schauder functions in a level-`J` truncation.
pub fn coefficient_count(level: u32) -> usize {
    1usize << (level + 1)
}

pub fn haar(k: usize, u: f64) -> Result<f64> {
    let (n, _) = BasisIndex(k).dyadic().ok_or_else(|| {
        Error::InvalidArgument("H_0 is not defined; use schauder(0, t) = t".into())
    })?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("u = {u} outside [0, 1]")));
    }
    let (a, b) = BasisIndex(k).window().expect("k >= 1");
    let mid = 0.5 * (a + b);
    let height = 2f64.powf(n as f64 / 2.0);
    Ok(if a <= u && u <= mid {
        height
    } else if mid < u && u <= b {
        -height
    } else {
        0.0
    })
}

pub fn schauder(k: usize, t: f64) -> f64 {
    match BasisIndex(k).window() {
        None => t,
        Some((a, b)) => {
            if t <= a || t >= b {
                return 0.0;
            }
            let (n, _) = BasisIndex(k).dyadic().expect("k >= 1");
            let peak = 2f64.powf(-(n as f64) / 2.0 - 1.0);
            let mid = 0.5 * (a + b);
            peak * (1.0 - (t - mid).abs() / (mid - a))
        }
    }
}

/// `∫₀¹ S_k(t) dt`.
pub fn schauder_integral(k: usize) -> f64 {
    match BasisIndex(k).dyadic() {
        None => 0.5,
        // hat area: half-width 2^{-n-1}, height 2^{-n/2-1}
        Some((n, _)) => 2f64.powf(-1.5 * n as f64 - 2.0),
    }
}

/// `S_0, …, S_{2^{J+1}-1}` sampled on the level-`J+1` grid.
#[derive(Debug)]
pub struct SchauderTable {
    level: u32,
    functions: Vec<Path>,
}

impl SchauderTable {
    pub fn new(level: u32) -> Result<Self> {
        if level + 1 > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "Schauder level {level} too large"
            )));
        }
        let grid = level + 1;
        let functions = (0..coefficient_count(level))
            .map(|k| Path::from_fn(grid, |t| schauder(k, t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SchauderTable { level, functions })
    }

    /// Process-wide cached table; tables are immutable once built.
    pub fn shared(level: u32) -> Result<Arc<SchauderTable>> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<SchauderTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(table) = cache.lock().expect("table cache poisoned").get(&level) {
            return Ok(Arc::clone(table));
        }
        let table = Arc::new(SchauderTable::new(level)?);
        cache
            .lock()
            .expect("table cache poisoned")
            .insert(level, Arc::clone(&table));
        Ok(table)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, k: usize) -> &Path {
        &self.functions[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Path> {
        self.functions.iter()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrownianSample {
    pub path: Path,
    pub coefficients: Vec<f64>,
    pub seed: u64,
}

/// `Σ_k ξ_k S_k` on the level-`J+1` grid, built level by level: each new
/// level interpolates the midpoints and adds that level's hats at their peaks.
pub fn path_from_coefficients(level: u32, coefficients: &[f64]) -> Result<Path> {
    if coefficients.len() != coefficient_count(level) {
        return Err(Error::InvalidArgument(format!(
            "level {level} needs {} coefficients, got {}",
            coefficient_count(level),
            coefficients.len()
        )));
    }
    let mut values = Vec::with_capacity(grid_len(level + 1));
    fill_path(level, coefficients, &mut values);
    Path::new(level + 1, values)
}

pub(crate) fn fill_path(level: u32, coefficients: &[f64], values: &mut Vec<f64>) {
    values.clear();
    values.resize(grid_len(level + 1), 0.0);
    let last = values.len() - 1;
    values[last] = coefficients[0];
    for n in 0..=level {
        let cells = 1usize << n;
        let stride = (values.len() - 1) / cells;
        let half = stride / 2;
        let peak = 2f64.powf(-(n as f64) / 2.0 - 1.0);
        for j in 0..cells {
            let left = values[j * stride];
            let right = values[(j + 1) * stride];
            values[j * stride + half] = 0.5 * (left + right) + coefficients[cells + j] * peak;
        }
    }
}

/// One Brownian path keyed by `seed` (stream 0).
pub fn sample_brownian(level: u32, seed: u64) -> Result<BrownianSample> {
    let mut coefficients = vec![0.0; coefficient_count(level)];
    NormalStream::new(seed, 0).fill_normals(&mut coefficients);
    let path = path_from_coefficients(level, &coefficients)?;
    Ok(BrownianSample {
        path,
        coefficients,
        seed,
    })
}
