//! The Ornstein–Uhlenbeck semigroup on path space,
//! `(T_u f)(w) = E f(w e^{-u} + σ(u) Z)` with `σ²(u) = 1 − e^{-2u}`,
//! its Monte-Carlo evaluation, and the small-`u` probes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{Cylinder, Functional, Stats, MAX_STATS};
use crate::mc::{estimate, Draw, MCEstimate, MCSpec, Source};
use crate::paths::Path;
use crate::quadrature::PushNode;
use crate::rng::derive_seed;

pub fn sigma(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "u = {u} must be non-negative"
        )));
    }
    Ok((-(-2.0 * u).exp_m1()).sqrt())
}

pub fn ou_push(w: &Path, u: f64, z: &Path) -> Result<Path> {
    let s = sigma(u)?;
    Ok(Path::affine((-u).exp(), w, s, z))
}

/// `e^{-u}·x + σ(u)·z` on statistic vectors.
pub(crate) fn push_stats(node: &PushNode, x: &Stats, z: &Stats, dim: usize) -> Stats {
    let mut out = [0.0; MAX_STATS];
    for i in 0..dim {
        out[i] = node.decay * x[i] + node.sigma * z[i];
    }
    out
}

/// How an estimator reaches a functional: through its statistics, or by
/// building every pushed path.
pub(crate) enum Route<'a> {
    Cylinder { f: &'a Cylinder, at_w: Stats },
    Paths { f: &'a dyn Functional, w: Path },
}

impl<'a> Route<'a> {
    pub fn new(f: &'a dyn Functional, w: &Path, mc: &MCSpec) -> Route<'a> {
        match f.cylinder() {
            Some(c) => Route::Cylinder {
                f: c,
                at_w: c.project(w),
            },
            None => Route::Paths {
                f,
                w: w.at_level(w.level().max(mc.level + 1)).into_owned(),
            },
        }
    }

    pub fn source(&self) -> Source<'a> {
        match self {
            Route::Cylinder { f, .. } => Source::Stats(f.stats()),
            Route::Paths { .. } => Source::Paths,
        }
    }

    /// `f(push(w, u, Z))` for the draw.
    pub fn value_at(&self, node: &PushNode, draw: Draw<'_>) -> f64 {
        match self {
            Route::Cylinder { f, at_w } => {
                f.profile(&push_stats(node, at_w, draw.stats(), f.dim()))
            }
            Route::Paths { f, w } => f.evaluate_affine(node.decay, w, node.sigma, draw.path()),
        }
    }

    /// `f(Z)` for the draw.
    pub fn value_of_draw(&self, draw: Draw<'_>) -> f64 {
        match self {
            Route::Cylinder { f, .. } => f.profile(draw.stats()),
            Route::Paths { f, .. } => f.evaluate(draw.path()),
        }
    }
}

/// Monte-Carlo `T_u f(w)`; exact at `u = 0`.
pub fn semigroup_apply(f: &dyn Functional, u: f64, w: &Path, mc: &MCSpec) -> Result<MCEstimate> {
    Ok(semigroup_batch(f, &[u], w, mc)?[0])
}

/// `T_u f(w)` for every `u` in `us`. With `mc.crn` every `u` sees the same
/// draws; otherwise each `u` gets its own derived seed.
pub fn semigroup_batch(
    f: &dyn Functional,
    us: &[f64],
    w: &Path,
    mc: &MCSpec,
) -> Result<Vec<MCEstimate>> {
    let nodes = us
        .iter()
        .map(|&u| sigma(u).map(|_| PushNode::at(u, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let route = Route::new(f, w, mc);
    let exact_at_zero = f.evaluate(w);
    let mut out = if mc.crn {
        estimate(mc, route.source(), nodes.len(), |draw, vals| {
            for (v, node) in vals.iter_mut().zip(&nodes) {
                *v = route.value_at(node, draw);
            }
        })?
    } else {
        let mut out = Vec::with_capacity(nodes.len());
        for (j, node) in nodes.iter().enumerate() {
            let spec = mc.with_seed(derive_seed(mc.seed, j as u64));
            out.push(
                estimate(&spec, route.source(), 1, |draw, vals| {
                    vals[0] = route.value_at(node, draw);
                })?[0],
            );
        }
        out
    };
    for (est, &u) in out.iter_mut().zip(us) {
        if u == 0.0 {
            *est = MCEstimate::exact(exact_at_zero, mc.n, mc.seed);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapEstimate {
    pub u: f64,
    /// `|T_u f(w) − f(w)|`
    pub gap: f64,
    pub stderr: f64,
}

/// `|T_u f(w) − f(w)|` along a decreasing list of `u`, CRN-coupled.
pub fn pointwise_gap(
    f: &dyn Functional,
    w: &Path,
    u_list: &[f64],
    mc: &MCSpec,
) -> Result<Vec<GapEstimate>> {
    if u_list.is_empty() {
        return Err(Error::InvalidArgument("empty u list".into()));
    }
    if u_list.iter().any(|&u| !(u >= 0.0)) || u_list.windows(2).any(|p| p[1] > p[0]) {
        return Err(Error::InvalidArgument(
            "u list must be non-negative and decreasing".into(),
        ));
    }
    let base = f.evaluate(w);
    let spec = MCSpec { crn: true, ..*mc };
    let est = semigroup_batch(f, u_list, w, &spec)?;
    Ok(est
        .iter()
        .zip(u_list)
        .map(|(e, &u)| GapEstimate {
            u,
            gap: (e.mean - base).abs(),
            stderr: e.stderr,
        })
        .collect())
}

/// `u_max · 2^{-j}` for `j = 0, 1, …` while the value is at least `u_min`.
pub fn geometric_grid(u_max: f64, u_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = u_max;
    while u >= u_min * (1.0 - 1e-12) {
        out.push(u);
        u *= 0.5;
    }
    out
}

/// `points` log-uniform values from `hi` down to `lo`, both included.
pub fn log_grid(hi: f64, lo: f64, points: usize) -> Result<Vec<f64>> {
    if !(hi > lo && lo > 0.0) || points < 2 {
        return Err(Error::InvalidArgument(
            "log grid needs hi > lo > 0 and at least two points".into(),
        ));
    }
    let step = (lo / hi).ln() / (points - 1) as f64;
    let mut out: Vec<f64> = (0..points).map(|j| hi * (step * j as f64).exp()).collect();
    out[points - 1] = lo;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RemainderPoint {
    pub u: f64,
    pub remainder: f64,
    pub stderr: f64,
    pub above_noise: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TaylorFit {
    /// Least-squares fit of `log R` against `log u`; `k1` is the largest
    /// `R(u) / ((1 + ‖w‖³) u^{3/2})` over the probe set.
    Slope {
        slope: f64,
        intercept: f64,
        k1: f64,
    },
    BelowNoiseFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorProbe {
    pub points: Vec<RemainderPoint>,
    pub fit: TaylorFit,
}

/// Second-order Taylor remainder of `T_u f(w)`:
/// `R(u) = |E[f(w+Δ) − f(w) − Df(w)[Δ] − ½D²f(w)[Δ,Δ]]|`,
/// `Δ = σ(u)Z − w(1 − e^{-u})`, estimated per sample with CRN.
pub fn taylor_remainder_probe(
    f: &dyn Functional,
    w: &Path,
    u_list: &[f64],
    mc: &MCSpec,
) -> Result<TaylorProbe> {
    if !f.has_derivatives() {
        return Err(Error::DerivativesUnavailable(f.name().to_owned()));
    }
    if u_list.len() < 2 || u_list.iter().any(|&u| !(u > 0.0)) {
        return Err(Error::InvalidArgument(
            "need at least two positive u values".into(),
        ));
    }
    let (lo, hi) = u_list.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &u| {
        (lo.min(u), hi.max(u))
    });
    if hi / lo < 100.0 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(
            "u list must span at least two decades".into(),
        ));
    }
    let nodes: Vec<PushNode> = u_list.iter().map(|&u| PushNode::at(u, 1.0)).collect();
    let route = Route::new(f, w, mc);
    let scale = 1.0 + f.evaluate(w).abs();

    let est = match &route {
        Route::Cylinder { f: c, at_w } => {
            let dim = c.dim();
            let base = c.profile(at_w);
            let grad = c.profile_grad(at_w);
            let hess = c.profile_hess(at_w);
            estimate(mc, route.source(), nodes.len(), |draw, vals| {
                for (v, node) in vals.iter_mut().zip(&nodes) {
                    let x = push_stats(node, at_w, draw.stats(), dim);
                    let mut lin = 0.0;
                    let mut quad = 0.0;
                    for i in 0..dim {
                        let di = x[i] - at_w[i];
                        lin += grad[i] * di;
                        for j in 0..dim {
                            quad += hess[i][j] * di * (x[j] - at_w[j]);
                        }
                    }
                    *v = c.profile(&x) - base - lin - 0.5 * quad;
                }
            })?
        }
        Route::Paths { f, w } => {
            let base = f.evaluate(w);
            estimate(mc, route.source(), nodes.len(), |draw, vals| {
                for (v, node) in vals.iter_mut().zip(&nodes) {
                    let pushed = Path::affine(node.decay, w, node.sigma, draw.path());
                    let delta = pushed.sub(w);
                    let lin = f.grad_dir(w, &delta).expect("checked has_derivatives");
                    let quad = f
                        .hess_dir(w, &delta, &delta)
                        .expect("checked has_derivatives");
                    *v = f.evaluate(&pushed) - base - lin - 0.5 * quad;
                }
            })?
        }
    };

    let points: Vec<RemainderPoint> = est
        .iter()
        .zip(u_list)
        .map(|(e, &u)| {
            let remainder = e.mean.abs();
            RemainderPoint {
                u,
                remainder,
                stderr: e.stderr,
                above_noise: remainder > 4.0 * e.stderr + 1e-12 * scale,
            }
        })
        .collect();

    let usable: Vec<&RemainderPoint> = points.iter().filter(|p| p.above_noise).collect();
    let fit = if usable.len() < 2 {
        TaylorFit::BelowNoiseFloor
    } else {
        let xs: Vec<f64> = usable.iter().map(|p| p.u.ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.remainder.ln()).collect();
        let (slope, intercept) = least_squares(&xs, &ys);
        let weight = 1.0 + w.sup_norm().powi(3);
        let k1 = points
            .iter()
            .map(|p| p.remainder / (weight * p.u.powf(1.5)))
            .fold(0.0, f64::max);
        TaylorFit::Slope {
            slope,
            intercept,
            k1,
        }
    };
    Ok(TaylorProbe { points, fit })
}

pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
