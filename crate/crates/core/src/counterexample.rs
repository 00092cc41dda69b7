//! The semigroup is not strongly continuous on the cubically weighted space:
//! for `f(w) = (1 + ‖w‖³) sin ‖w‖`, the witnesses `w_k ≡ kπ` and times
//! `u_k = −log(1 − 1/(2k)) → 0` keep `|T_{u_k} f(w_k) − f(w_k)| / (1 + ‖w_k‖³)`
//! away from zero, while `T_u f(w) → f(w)` at every fixed `w`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{counterexample_functional, Functional, NormSine};
use crate::mc::{estimate, MCEstimate, MCSpec, Source};
use crate::paths::Path;
use crate::rng::derive_seed;
use crate::semigroup::{pointwise_gap, semigroup_apply, sigma, GapEstimate};

/// Largest `k` the report accepts; beyond it the noise-free surrogate is
/// within `1e-3` of one.
pub const MAX_K: u64 = 1000;

/// Radius for the tail split of the smoothing term.
pub const TAIL_RADIUS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub k: u64,
    pub path: Path,
    pub u: f64,
}

/// `u_k = −log(1 − 1/(2k))`.
pub fn witness_time(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "witness index k must be at least 1".into(),
        ));
    }
    Ok(-(-0.5 / k as f64).ln_1p())
}

pub fn witness(k: u64, level: u32) -> Result<Witness> {
    let u = witness_time(k)?;
    Ok(Witness {
        k,
        path: Path::constant(k as f64 * PI, level)?,
        u,
    })
}

/// `|sin(e^{−u} kπ) − sin(kπ)|`.
pub fn deterministic_gap_at(k: u64, u: f64) -> f64 {
    let r = k as f64 * PI;
    (((-u).exp() * r).sin() - r.sin()).abs()
}

/// `|sin(e^{−u_k} kπ) − sin(kπ)|`, which is one for every `k`.
pub fn deterministic_gap(k: u64) -> Result<f64> {
    Ok(deterministic_gap_at(k, witness_time(k)?))
}

/// The gap ratio with `Z` forced to zero: `(1 + (kπ − π/2)³) / (1 + (kπ)³)`.
pub fn surrogate(k: u64) -> f64 {
    let r = k as f64 * PI;
    (1.0 + (r - FRAC_PI_2).powi(3)) / (1.0 + r.powi(3))
}

/// `|T_{u_k} f(w_k) − f(w_k)| / (1 + ‖w_k‖³)` by Monte Carlo.
pub fn gap_ratio(k: u64, mc: &MCSpec) -> Result<MCEstimate> {
    let w = witness(k, 0)?;
    let f = counterexample_functional();
    let est = semigroup_apply(&f, w.u, &w.path, mc)?;
    let weight = 1.0 + w.path.sup_norm().powi(3);
    Ok(MCEstimate {
        mean: (est.mean - f.evaluate(&w.path)).abs() / weight,
        stderr: est.stderr / weight,
        ..est
    })
}

/// Monte-Carlo moments of `‖Z‖` and the tail probability beyond
/// [`TAIL_RADIUS`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormMoments {
    pub m1: MCEstimate,
    pub m2: MCEstimate,
    pub m3: MCEstimate,
    pub tail_probability: MCEstimate,
}

pub fn norm_moments(mc: &MCSpec) -> Result<NormMoments> {
    let est = estimate(mc, Source::Paths, 4, |d, out| {
        let r = d.path().sup_norm();
        out.copy_from_slice(&[r, r * r, r * r * r, f64::from(u8::from(r > TAIL_RADIUS))]);
    })?;
    Ok(NormMoments {
        m1: est[0],
        m2: est[1],
        m3: est[2],
        tail_probability: est[3],
    })
}

/// The weighted cubic-difference term at norm `a` and time `u`: its closed
/// envelope (polynomial in `e^{−u}`, `σ(u)` and the moments of `‖Z‖`) and its
/// Monte-Carlo value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CubicTerm {
    pub u: f64,
    pub envelope: f64,
    pub mc_term: f64,
    pub stderr: f64,
}

pub fn cubic_envelope(a: f64, u: f64, m: [f64; 3]) -> Result<f64> {
    let s = sigma(u)?;
    let e = (-u).exp();
    let one_minus = -(-u).exp_m1();
    let body = a.powi(3) * one_minus * (2.0 * e * e + e + 1.0)
        + a * a * m[0] * s * (2.0 * e * e + 2.0)
        + a * s * s * m[1] * (2.0 * one_minus + 1.0)
        + 2.0 * s.powi(3) * m[2];
    Ok(body / (1.0 + a.powi(3)))
}

pub fn cubic_term(w: &Path, u: f64, moments: &NormMoments, mc: &MCSpec) -> Result<CubicTerm> {
    let s = sigma(u)?;
    let e = (-u).exp();
    let a = w.sup_norm();
    let weight = 1.0 + a.powi(3);
    let w = w.at_level(w.level().max(mc.level + 1)).into_owned();
    let est = estimate(mc, Source::Paths, 1, |d, out| {
        let r = Path::affine_sup_norm(e, &w, s, d.path());
        out[0] = (r.powi(3) - a.powi(3)) * r.sin() / weight;
    })?[0];
    let m = [moments.m1.mean, moments.m2.mean, moments.m3.mean];
    Ok(CubicTerm {
        u,
        envelope: cubic_envelope(a, u, m)?,
        mc_term: est.mean.abs(),
        stderr: est.stderr,
    })
}

/// `E|sin ‖push‖ − sin(e^{−u}‖w‖)|` split on `‖Z‖ ≤ R` and `‖Z‖ > R`.
/// On the inner event the difference is at most `σ(u) R`; on the outer one
/// at most `2 P(‖Z‖ > R)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothingTerm {
    pub u: f64,
    pub inner: f64,
    pub inner_bound: f64,
    pub outer: f64,
    pub outer_bound: f64,
    pub stderr: f64,
}

pub fn smoothing_term(w: &Path, u: f64, mc: &MCSpec) -> Result<SmoothingTerm> {
    let s = sigma(u)?;
    let e = (-u).exp();
    let centre = (e * w.sup_norm()).sin();
    let w = w.at_level(w.level().max(mc.level + 1)).into_owned();
    let est = estimate(mc, Source::Paths, 3, |d, out| {
        let z = d.path();
        let diff = (Path::affine_sup_norm(e, &w, s, z).sin() - centre).abs();
        let outside = z.sup_norm() > TAIL_RADIUS;
        out[0] = if outside { 0.0 } else { diff };
        out[1] = if outside { diff } else { 0.0 };
        out[2] = f64::from(u8::from(outside));
    })?;
    Ok(SmoothingTerm {
        u,
        inner: est[0].mean,
        inner_bound: s * TAIL_RADIUS,
        outer: est[1].mean,
        outer_bound: 2.0 * est[2].mean,
        stderr: est[0].stderr.max(est[1].stderr),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WitnessRow {
    pub k: u64,
    pub u_k: f64,
    pub deterministic_gap: f64,
    pub gap_ratio: f64,
    pub stderr: f64,
    pub surrogate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub witnesses: Vec<WitnessRow>,
    /// Base value of the pointwise probe, `‖w‖` of a constant path.
    pub pointwise_level: f64,
    pub pointwise: Vec<GapEstimate>,
    pub norm_moments: NormMoments,
    /// Cubic-difference term at `w_3`.
    pub cubic: Vec<CubicTerm>,
    /// Smoothing term at `w_3`.
    pub smoothing: Vec<SmoothingTerm>,
    pub checks: Vec<(String, bool)>,
    pub passed: bool,
}

/// Threshold the last pointwise gap must fall under.
pub const POINTWISE_EPS: f64 = 0.05;

/// Witness rows for every `k` (per-`k` derived seeds), the pointwise gap at
/// the constant path `π/2` along `u_small`, and the vanishing terms of the
/// lower-bound decomposition at `w_3` along `u_small`.
pub fn counterexample_report(
    k_list: &[u64],
    u_small: &[f64],
    mc: &MCSpec,
) -> Result<CounterexampleReport> {
    if k_list.is_empty() || u_small.is_empty() {
        return Err(Error::InvalidArgument(
            "k list and u list must be nonempty".into(),
        ));
    }
    if let Some(&k) = k_list.iter().find(|&&k| k == 0 || k > MAX_K) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={MAX_K}"
        )));
    }
    let mut witnesses = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let est = gap_ratio(k, &mc.with_seed(derive_seed(mc.seed, k)))?;
        witnesses.push(WitnessRow {
            k,
            u_k: witness_time(k)?,
            deterministic_gap: deterministic_gap(k)?,
            gap_ratio: est.mean,
            stderr: est.stderr,
            surrogate: surrogate(k),
        });
    }

    let base = Path::constant(FRAC_PI_2, 0)?;
    let pointwise = pointwise_gap(&counterexample_functional(), &base, u_small, mc)?;

    let moments = norm_moments(mc)?;
    let w3 = witness(3, 0)?.path;
    let cubic = u_small
        .iter()
        .map(|&u| cubic_term(&w3, u, &moments, mc))
        .collect::<Result<Vec<_>>>()?;
    let smoothing = u_small
        .iter()
        .map(|&u| smoothing_term(&w3, u, mc))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    checks.push((
        "deterministic_gap_is_one".to_owned(),
        witnesses
            .iter()
            .all(|r| (r.deterministic_gap - 1.0).abs() <= 1e-12),
    ));
    let first = witnesses.iter().min_by_key(|r| r.k).expect("nonempty");
    let last = witnesses.iter().max_by_key(|r| r.k).expect("nonempty");
    checks.push((
        "gap_ratio_does_not_decay".to_owned(),
        last.gap_ratio >= first.gap_ratio - 4.0 * (first.stderr + last.stderr),
    ));
    let final_gap = pointwise.last().expect("nonempty");
    checks.push((
        "pointwise_gap_vanishes".to_owned(),
        final_gap.gap <= POINTWISE_EPS,
    ));
    checks.push((
        "cubic_term_within_envelope".to_owned(),
        cubic
            .iter()
            .all(|c| c.mc_term <= c.envelope + 4.0 * c.stderr),
    ));
    checks.push((
        "smoothing_inner_within_bound".to_owned(),
        smoothing
            .iter()
            .all(|s| s.inner <= s.inner_bound + 4.0 * s.stderr),
    ));
    let passed = checks.iter().all(|(_, ok)| *ok);
    Ok(CounterexampleReport {
        witnesses,
        pointwise_level: base.sup_norm(),
        pointwise,
        norm_moments: moments,
        cubic,
        smoothing,
        checks,
        passed,
    })
}

/// Evaluation of the counterexample functional along its witnesses,
/// `f(w_k)`, which vanishes up to rounding of `sin(kπ)`.
pub fn witness_value(k: u64) -> Result<f64> {
    Ok(NormSine::of_norm(witness(k, 0)?.path.sup_norm()))
}
