//! Monte-Carlo engine over Brownian draws.
//!
//! Draw `i` of a batch is the Schauder expansion whose coefficients come from
//! normal stream `(seed, i)`. Samples are processed in fixed-size chunks whose
//! moments are merged in a fixed binary tree, so the reported numbers are
//! bit-identical for any worker count.
//!
//! Two sources share the same draws: full paths, and the values of a few
//! linear statistics computed straight from the coefficients. The latter is
//! cached, which is what makes common random numbers across many quadrature
//! nodes and many base paths cheap.

use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{LinearStat, Stats, MAX_STATS};
use crate::paths::{Path, DEFAULT_LEVEL};
use crate::rng::NormalStream;
use crate::schauder::{coefficient_count, fill_path};

/// Samples per reduction chunk; even, so antithetic pairs never straddle.
const CHUNK: usize = 256;

const STATS_CACHE_CAPACITY: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MCSpec {
    /// Number of samples.
    pub n: usize,
    /// Schauder truncation level `J`; samples live on the level-`J+1` grid.
    pub level: u32,
    pub seed: u64,
    /// Reuse one draw stream for every `u` in a batch.
    pub crn: bool,
    /// Pair each draw `Z` with `-Z`; standard errors are then computed from
    /// the `n/2` pair means.
    pub antithetic: bool,
}

impl Default for MCSpec {
    fn default() -> Self {
        MCSpec {
            n: 10_000,
            level: DEFAULT_LEVEL,
            seed: 0,
            crn: true,
            antithetic: false,
        }
    }
}

impl MCSpec {
    pub fn new(n: usize, level: u32, seed: u64) -> Result<Self> {
        let spec = MCSpec {
            n,
            level,
            seed,
            ..Default::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        if self.antithetic && !self.n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "antithetic sampling needs an even sample count".into(),
            ));
        }
        if self.level + 1 > crate::paths::MAX_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "Brownian level {} too large",
                self.level
            )));
        }
        Ok(())
    }

    fn draws(&self) -> usize {
        if self.antithetic {
            self.n / 2
        } else {
            self.n
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn exact(value: f64, n: usize, seed: u64) -> Self {
        MCEstimate {
            mean: value,
            stderr: 0.0,
            n,
            seed,
        }
    }

    /// `|mean - target| ≤ k·stderr`, with a rounding allowance.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12 * (1.0 + target.abs())
    }
}

/// Count, mean and centred second moment (Welford / Chan).
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0.0 {
            return b;
        }
        if b.count == 0.0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        Moments {
            count,
            mean: a.mean + delta * (b.count / count),
            m2: a.m2 + b.m2 + delta * delta * (a.count * b.count / count),
        }
    }
}

fn tree_merge(mut level: Vec<Moments>) -> Moments {
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => Moments::merge(*a, *b),
                [a] => *a,
                _ => unreachable!(),
            })
            .collect();
    }
    level.pop().unwrap_or_default()
}

/// One Brownian draw as seen by an estimator.
#[derive(Clone, Copy, Debug)]
pub enum Draw<'a> {
    Stats(&'a Stats),
    Path(&'a Path),
}

impl Draw<'_> {
    pub fn stats(&self) -> &Stats {
        match self {
            Draw::Stats(s) => s,
            Draw::Path(_) => panic!("draw carries a path, not statistics"),
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            Draw::Path(p) => p,
            Draw::Stats(_) => panic!("draw carries statistics, not a path"),
        }
    }
}

/// Where draws come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Paths,
    Stats(&'a [LinearStat]),
}

/// Runs `fill` on every sample and returns one estimate per output slot.
pub fn estimate<F>(
    mc: &MCSpec,
    source: Source<'_>,
    width: usize,
    fill: F,
) -> Result<Vec<MCEstimate>>
where
    F: Fn(Draw<'_>, &mut [f64]) + Sync,
{
    mc.validate()?;
    let draws = mc.draws();
    let per_chunk = if mc.antithetic { CHUNK / 2 } else { CHUNK };
    let chunks = draws.div_ceil(per_chunk);
    let cached = match source {
        Source::Stats(stats) => Some(projected_stats(mc, stats)?),
        Source::Paths => None,
    };

    let chunk_moments: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut moments = vec![Moments::default(); width];
            let mut out = vec![0.0; width];
            let mut twin = vec![0.0; width];
            let mut coefficients = vec![0.0; coefficient_count(mc.level)];
            let mut values = Vec::new();
            let range = c * per_chunk..((c + 1) * per_chunk).min(draws);
            for d in range {
                match &cached {
                    Some(stats) => {
                        let s = &stats[d];
                        out.fill(0.0);
                        fill(Draw::Stats(s), &mut out);
                        if mc.antithetic {
                            let neg = s.map(|x| -x);
                            twin.fill(0.0);
                            fill(Draw::Stats(&neg), &mut twin);
                        }
                    }
                    None => {
                        NormalStream::new(mc.seed, d as u64).fill_normals(&mut coefficients);
                        fill_path(mc.level, &coefficients, &mut values);
                        let path = Path::from_trusted(mc.level + 1, std::mem::take(&mut values));
                        out.fill(0.0);
                        fill(Draw::Path(&path), &mut out);
                        if mc.antithetic {
                            let neg = path.scaled(-1.0);
                            twin.fill(0.0);
                            fill(Draw::Path(&neg), &mut twin);
                        }
                        values = path.into_values();
                    }
                }
                for (q, m) in moments.iter_mut().enumerate() {
                    if mc.antithetic {
                        m.push(0.5 * (out[q] + twin[q]));
                    } else {
                        m.push(out[q]);
                    }
                }
            }
            moments
        })
        .collect();

    Ok((0..width)
        .map(|q| {
            let total = tree_merge(chunk_moments.iter().map(|m| m[q]).collect());
            let stderr = if total.count > 1.0 {
                (total.m2 / (total.count - 1.0)).sqrt() / total.count.sqrt()
            } else {
                0.0
            };
            MCEstimate {
                mean: total.mean,
                stderr,
                n: mc.n,
                seed: mc.seed,
            }
        })
        .collect())
}

/// Single-output convenience wrapper around [`estimate`].
pub fn estimate_one<F>(mc: &MCSpec, source: Source<'_>, fill: F) -> Result<MCEstimate>
where
    F: Fn(Draw<'_>) -> f64 + Sync,
{
    Ok(estimate(mc, source, 1, |d, out| out[0] = fill(d))?[0])
}

#[derive(Clone, PartialEq, Eq)]
struct StatsKey {
    n: usize,
    level: u32,
    seed: u64,
    stats: Vec<LinearStat>,
}

type StatsCache = Mutex<Vec<(StatsKey, Arc<Vec<Stats>>)>>;

/// `ℓ(Z_d) = Σ_k ξ_k ℓ(S_k)` for every draw `d`, computed from the same
/// coefficient streams the path source uses.
fn projected_stats(mc: &MCSpec, stats: &[LinearStat]) -> Result<Arc<Vec<Stats>>> {
    if stats.is_empty() || stats.len() > MAX_STATS {
        return Err(Error::InvalidArgument("1..=4 statistics required".into()));
    }
    static CACHE: OnceLock<StatsCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = StatsKey {
        n: mc.draws(),
        level: mc.level,
        seed: mc.seed,
        stats: stats.to_vec(),
    };
    if let Some((_, hit)) = cache
        .lock()
        .expect("stats cache poisoned")
        .iter()
        .find(|(k, _)| *k == key)
    {
        return Ok(Arc::clone(hit));
    }

    let count = coefficient_count(mc.level);
    let weights: Vec<Vec<f64>> = stats
        .iter()
        .map(|s| {
            let mut w: Vec<f64> = (0..count).map(|k| s.on_schauder(k)).collect();
            while w.len() > 1 && w[w.len() - 1] == 0.0 {
                w.pop();
            }
            w
        })
        .collect();
    let needed = weights.iter().map(Vec::len).max().unwrap_or(1);

    let values: Vec<Stats> = (0..key.n)
        .into_par_iter()
        .map_init(
            || vec![0.0; needed],
            |xi, d| {
                NormalStream::new(mc.seed, d as u64).fill_normals(xi);
                let mut s = [0.0; MAX_STATS];
                for (slot, w) in s.iter_mut().zip(&weights) {
                    *slot = w.iter().zip(xi.iter()).map(|(a, b)| a * b).sum();
                }
                s
            },
        )
        .collect();
    let values = Arc::new(values);

    let mut guard = cache.lock().expect("stats cache poisoned");
    if guard.len() >= STATS_CACHE_CAPACITY {
        guard.remove(0);
    }
    guard.push((key, Arc::clone(&values)));
    Ok(values)
}
