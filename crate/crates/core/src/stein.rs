//! The Stein operator of the OU semigroup,
//! `𝒜f(w) = −Df(w)[w] + Σ_k D²f(w)[S_k, S_k]`,
//! the solution `φ(g) = −∫₀^∞ T_u g du` of `𝒜f = g`, and checks of the
//! identities connecting them.
//!
//! Derivatives of `φ(g)` and of `∫₀^t T_u g du` are always taken by moving
//! the derivative inside the integral, `D^k φ(g)(w) = −∫ e^{−ku} E D^k g(push)`,
//! and every integrand at every node is evaluated on one shared draw stream.

use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::functionals::{Cylinder, Functional, GrowthConstants, Stats, MAX_STATS};
use crate::mc::{estimate, Draw, MCEstimate, MCSpec, Source};
use crate::paths::Path;
use crate::quadrature::{PushNode, QuadratureSpec};
use crate::rng::{derive_seed, NormalStream};
use crate::schauder::{sample_brownian, SchauderTable};
use crate::semigroup::{push_stats, Route};

/// Default series truncation `J`: the operator sums `2^{J+1}` Schauder terms.
pub const DEFAULT_JTRUNC: u32 = 8;

/// Upper bounds on `E‖Z‖^p` for `p = 1, 2, 3` from Doob's maximal inequality.
pub fn norm_moment_bounds() -> [f64; 3] {
    let abs3 = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    [2.0, 4.0, 3.375 * abs3]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteinReport {
    pub check: String,
    pub functional: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub residual: Option<f64>,
    pub stderr: f64,
    /// Bound on the neglected `∫_{u_max}^∞` part; `None` when the declared
    /// constants do not allow one.
    pub tail_bound: Option<f64>,
    /// Bound on the neglected Schauder terms `k ≥ 2^{J+1}`.
    pub series_tail: Option<f64>,
    pub truncation_level: Option<u32>,
    pub scale: f64,
    /// `rel_tol · scale`, plus the series tail when there is one.
    pub tolerance: f64,
    pub passed: bool,
    pub n: usize,
    pub seed: u64,
}

struct ReportParts<'a> {
    check: &'a str,
    functional: &'a str,
    value: f64,
    reference: Option<f64>,
    residual: Option<MCEstimate>,
    stderr: f64,
    tail_bound: Option<f64>,
    series_tail: Option<f64>,
    truncation_level: Option<u32>,
    scale: f64,
    rel_tol: f64,
    mc: MCSpec,
}

impl SteinReport {
    fn finish(p: ReportParts<'_>) -> SteinReport {
        let tolerance = p.rel_tol * p.scale + p.series_tail.unwrap_or(0.0);
        let stderr = p.residual.map_or(p.stderr, |r| r.stderr);
        let residual_ok = p
            .residual
            .is_none_or(|r| r.mean.abs() <= tolerance + 4.0 * r.stderr);
        let tail_ok = p.tail_bound.is_some_and(|t| t <= p.rel_tol * p.scale);
        SteinReport {
            check: p.check.to_owned(),
            functional: p.functional.to_owned(),
            value: p.value,
            reference: p.reference,
            residual: p.residual.map(|r| r.mean),
            stderr,
            tail_bound: p.tail_bound,
            series_tail: p.series_tail,
            truncation_level: p.truncation_level,
            scale: p.scale,
            tolerance,
            passed: residual_ok && tail_ok && p.value.is_finite(),
            n: p.mc.n,
            seed: p.mc.seed,
        }
    }
}

fn require_derivatives(f: &dyn Functional) -> Result<()> {
    if f.has_derivatives() {
        Ok(())
    } else {
        Err(Error::OperatorInapplicable(f.name().to_owned()))
    }
}

fn require_centered(g: &dyn Functional) -> Result<()> {
    match g.constants().mean_under_z {
        Some(m) if m.abs() <= 1e-12 => Ok(()),
        Some(m) => Err(Error::NotCentered {
            name: g.name().to_owned(),
            reason: format!("declared E g(Z) = {m}"),
        }),
        None => Err(Error::NotCentered {
            name: g.name().to_owned(),
            reason: "E g(Z) is not declared".into(),
        }),
    }
}

fn dot(a: &Stats, b: &Stats, dim: usize) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

fn pair(h: &[Stats; MAX_STATS], a: &Stats, b: &Stats, dim: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            total += h[i][j] * a[i] * b[j];
        }
    }
    total
}

/// Precomputed pieces of the series operator for a cylinder functional.
struct SeriesParts {
    gram: [Stats; MAX_STATS],
    /// `sqrt(t_i t_j)` with `t_i` the truncation tail of statistic `i`.
    tail: [Stats; MAX_STATS],
    dim: usize,
}

impl SeriesParts {
    fn new(c: &Cylinder, jtrunc: u32) -> SeriesParts {
        let t: Vec<f64> = c.stats().iter().map(|s| s.schauder_tail(jtrunc)).collect();
        let mut tail = [[0.0; MAX_STATS]; MAX_STATS];
        for i in 0..c.dim() {
            for j in 0..c.dim() {
                tail[i][j] = (t[i] * t[j]).sqrt();
            }
        }
        SeriesParts {
            gram: c.schauder_gram(jtrunc),
            tail,
            dim: c.dim(),
        }
    }

    /// `Σ_k D²f[S_k, S_k]` and its truncation-tail bound for Hessian `h`.
    fn second_order(&self, h: &[Stats; MAX_STATS]) -> (f64, f64) {
        let (mut series, mut tail) = (0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                series += h[i][j] * self.gram[i][j];
                tail += h[i][j].abs() * self.tail[i][j];
            }
        }
        (series, tail)
    }

    /// `(−Df(p)[w], Σ_k D²f(p)[S_k, S_k], tail)` where `p` has statistics
    /// `x` and `w` has statistics `xw`.
    fn terms(&self, c: &Cylinder, x: &Stats, xw: &Stats) -> (f64, f64, f64) {
        if let Some((_, d1, d2)) = c.univariate_jet(x[0]) {
            return (
                -d1 * xw[0],
                d2 * self.gram[0][0],
                d2.abs() * self.tail[0][0],
            );
        }
        let (_, g, h) = c.jet(x);
        let (series, tail) = self.second_order(&h);
        (-dot(&g, xw, self.dim), series, tail)
    }

    /// `𝒜f` at a path whose statistics are `x`.
    fn generator(&self, c: &Cylinder, x: &Stats) -> (f64, f64) {
        let (drift, series, tail) = self.terms(c, x, x);
        (drift + series, tail)
    }
}

/// `Σ_k D²f(w)[S_k, S_k]` on the generic path route.
fn series_generic(f: &dyn Functional, w: &Path, table: &SchauderTable) -> f64 {
    table
        .iter()
        .map(|s| f.hess_dir(w, s, s).unwrap_or(f64::NAN))
        .sum()
}

fn generator_generic(f: &dyn Functional, w: &Path, table: &SchauderTable) -> f64 {
    -f.grad_dir(w, w).unwrap_or(f64::NAN) + series_generic(f, w, table)
}

/// `𝒜f(w)` with the Schauder series truncated after `2^{J+1}` terms.
pub fn stein_operator_series(f: &dyn Functional, w: &Path, jtrunc: u32) -> Result<f64> {
    require_derivatives(f)?;
    let value = match f.cylinder() {
        Some(c) => SeriesParts::new(c, jtrunc).generator(c, &c.project(w)).0,
        None => generator_generic(f, w, &*SchauderTable::shared(jtrunc)?),
    };
    ensure_finite("Stein operator", value)
}

/// Bound on the Schauder terms `k ≥ 2^{J+1}` dropped by
/// [`stein_operator_series`]; `None` off the cylinder route.
pub fn series_tail_bound(f: &dyn Functional, w: &Path, jtrunc: u32) -> Option<f64> {
    let c = f.cylinder()?;
    Some(SeriesParts::new(c, jtrunc).generator(c, &c.project(w)).1)
}

/// `𝒜f(w) = −Df(w)[w] + E D²f(w)[Z, Z]` by Monte Carlo.
pub fn stein_operator_mc(f: &dyn Functional, w: &Path, mc: &MCSpec) -> Result<MCEstimate> {
    require_derivatives(f)?;
    let est = match f.cylinder() {
        Some(c) => {
            let x = c.project(w);
            let drift = -dot(&c.profile_grad(&x), &x, c.dim());
            let h = c.profile_hess(&x);
            estimate(mc, Source::Stats(c.stats()), 1, |d, out| {
                out[0] = drift + pair(&h, d.stats(), d.stats(), c.dim());
            })?[0]
        }
        None => {
            let drift = -f.grad_dir(w, w)?;
            estimate(mc, Source::Paths, 1, |d, out| {
                let z = d.path();
                out[0] = drift + f.hess_dir(w, z, z).unwrap_or(f64::NAN);
            })?[0]
        }
    };
    ensure_finite("Stein operator estimate", est.mean)?;
    Ok(est)
}

/// Closed-form `φ(g)(w)` for the centred library functionals.
pub fn known_solution(g: &dyn Functional, w: &Path) -> Option<f64> {
    match g.name() {
        "terminal_linear" => Some(-w.terminal()),
        "terminal_square" => Some(-(w.terminal().powi(2) - 1.0) / 2.0),
        "integral_square" => Some(-(w.integral().powi(2) - 1.0 / 3.0) / 2.0),
        _ => None,
    }
}

/// Bound on `|∫_{u_max}^∞ T_u g(w) du|` for centred `g` with a declared
/// `C_g`: with the same `Z` on both sides,
/// `|T_u g(w)| ≤ C_g E(1 + ‖push‖² + ‖Z‖²)‖push − Z‖` and
/// `‖push − Z‖ ≤ e^{−u}(‖w‖ + ‖Z‖)`.
pub fn solution_tail_bound(c: &GrowthConstants, w: &Path, u_max: f64) -> Option<f64> {
    let cg = c.lipschitz?;
    let a = w.sup_norm();
    let [m1, m2, m3] = norm_moment_bounds();
    let envelope = a * (1.0 + a * a) + (1.0 + 3.0 * a * a) * m1 + 4.0 * a * m2 + 2.0 * m3;
    Some(cg * envelope * (-u_max).exp())
}

/// Bound on the part of `𝒜φ(g)(w)` lost by cutting the `u` integrals at
/// `u_max`, from the first- and second-derivative components of `‖g‖_M`.
fn residual_tail_bound(c: &GrowthConstants, w: &Path, u_max: f64) -> Option<f64> {
    let m = c.m_components?;
    let a = w.sup_norm();
    let [m1, m2, _] = norm_moment_bounds();
    let first = m[1] * a * (1.0 + a * a + 2.0 * a * m1 + m2) * (-u_max).exp();
    let second = 0.5 * m[2] * (1.0 + a + m1) * m2 * (-2.0 * u_max).exp();
    Some(first + second)
}

fn crn(quad: &QuadratureSpec) -> MCSpec {
    MCSpec {
        crn: true,
        ..quad.mc
    }
}

/// `φ(g)(w) = −∫₀^{u_max} T_u g(w) du` by composite Gauss–Legendre with one
/// shared draw stream. Each `T_u g(w)` is estimated as
/// `E[g(push) − g(Z)]`, which is unbiased because `E g(Z) = 0`.
pub fn stein_solution(g: &dyn Functional, w: &Path, quad: &QuadratureSpec) -> Result<SteinReport> {
    require_centered(g)?;
    let nodes = quad.push_nodes(quad.u_max)?;
    let mc = crn(quad);
    let route = Route::new(g, w, &mc);
    let est = estimate(&mc, route.source(), 1, |d, out| {
        let base = route.value_of_draw(d);
        out[0] = -nodes
            .iter()
            .map(|node| node.weight * (route.value_at(node, d) - base))
            .sum::<f64>();
    })?[0];
    ensure_finite("Stein solution", est.mean)?;
    let reference = known_solution(g, w);
    let residual = reference.map(|r| MCEstimate {
        mean: est.mean - r,
        ..est
    });
    Ok(SteinReport::finish(ReportParts {
        check: "stein_solution",
        functional: g.name(),
        value: est.mean,
        reference,
        residual,
        stderr: est.stderr,
        tail_bound: solution_tail_bound(&g.constants(), w, quad.u_max),
        series_tail: None,
        truncation_level: None,
        scale: 1.0 + reference.unwrap_or(est.mean).abs(),
        rel_tol: quad.rel_tol,
        mc,
    }))
}

/// `w ↦ φ(g)(w)` as a functional, so finite differences can be taken through
/// the whole estimator.
#[derive(Debug)]
pub struct SolutionFunctional<'a> {
    pub g: &'a dyn Functional,
    pub quad: QuadratureSpec,
}

impl Functional for SolutionFunctional<'_> {
    fn name(&self) -> &str {
        "stein_solution"
    }

    fn evaluate(&self, w: &Path) -> f64 {
        stein_solution(self.g, w, &self.quad).map_or(f64::NAN, |r| r.value)
    }

    fn constants(&self) -> GrowthConstants {
        GrowthConstants::default()
    }
}

/// `D^k φ(g)(w)[h, …, h] = −∫₀^{u_max} e^{−ku} E D^k g(push)[h, …, h] du`.
pub fn stein_solution_derivative(
    g: &dyn Functional,
    w: &Path,
    h: &Path,
    order: u32,
    quad: &QuadratureSpec,
) -> Result<MCEstimate> {
    require_centered(g)?;
    if !g.has_derivatives() {
        return Err(Error::DerivativesUnavailable(g.name().to_owned()));
    }
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidArgument(format!(
            "derivative order {order} not in 1..=2"
        )));
    }
    let nodes = quad.push_nodes(quad.u_max)?;
    let mc = crn(quad);
    let k = order as i32;
    let est = match g.cylinder() {
        Some(c) => {
            let (xw, xh, dim) = (c.project(w), c.project(h), c.dim());
            estimate(&mc, Source::Stats(c.stats()), 1, |d, out| {
                out[0] = -nodes
                    .iter()
                    .map(|node| {
                        let x = push_stats(node, &xw, d.stats(), dim);
                        let v = if order == 1 {
                            dot(&c.profile_grad(&x), &xh, dim)
                        } else {
                            pair(&c.profile_hess(&x), &xh, &xh, dim)
                        };
                        node.weight * node.decay.powi(k) * v
                    })
                    .sum::<f64>();
            })?[0]
        }
        None => {
            let w = w.at_level(w.level().max(mc.level + 1)).into_owned();
            estimate(&mc, Source::Paths, 1, |d, out| {
                out[0] = -nodes
                    .iter()
                    .map(|node| {
                        let p = Path::affine(node.decay, &w, node.sigma, d.path());
                        let v = if order == 1 {
                            g.grad_dir(&p, h)
                        } else {
                            g.hess_dir(&p, h, h)
                        };
                        node.weight * node.decay.powi(k) * v.unwrap_or(f64::NAN)
                    })
                    .sum::<f64>();
            })?[0]
        }
    };
    ensure_finite("Stein solution derivative", est.mean)?;
    Ok(est)
}

/// Per-draw integrands shared by the identity checks. Each returns
/// `(−Df(p)[w], Σ_k D²f(p)[S_k, S_k], series tail)` at the pushed path `p`.
#[allow(clippy::large_enum_variant)]
enum Derivs<'a> {
    Cylinder {
        c: &'a Cylinder,
        xw: Stats,
        series: SeriesParts,
    },
    Paths {
        f: &'a dyn Functional,
        w: Path,
        table: std::sync::Arc<SchauderTable>,
    },
}

impl<'a> Derivs<'a> {
    fn new(f: &'a dyn Functional, w: &Path, mc: &MCSpec, jtrunc: u32) -> Result<Derivs<'a>> {
        require_derivatives(f)?;
        Ok(match f.cylinder() {
            Some(c) => Derivs::Cylinder {
                c,
                xw: c.project(w),
                series: SeriesParts::new(c, jtrunc),
            },
            None => Derivs::Paths {
                f,
                w: w.at_level(w.level().max(mc.level + 1)).into_owned(),
                table: SchauderTable::shared(jtrunc)?,
            },
        })
    }

    fn source(&self) -> Source<'a> {
        match self {
            Derivs::Cylinder { c, .. } => Source::Stats(c.stats()),
            Derivs::Paths { .. } => Source::Paths,
        }
    }

    fn has_series_tail(&self) -> bool {
        matches!(self, Derivs::Cylinder { .. })
    }

    fn value(&self, node: &PushNode, d: Draw<'_>) -> f64 {
        match self {
            Derivs::Cylinder { c, xw, series } => {
                c.profile(&push_stats(node, xw, d.stats(), series.dim))
            }
            Derivs::Paths { f, w, .. } => f.evaluate_affine(node.decay, w, node.sigma, d.path()),
        }
    }

    /// Terms of `𝒜` applied to a smoothed functional at `w`:
    /// `(−Df(p)[w], Σ_k D²f(p)[S_k, S_k], tail)` with `p` the pushed path.
    fn pushed_terms(&self, node: &PushNode, d: Draw<'_>) -> (f64, f64, f64) {
        match self {
            Derivs::Cylinder { c, xw, series } => {
                series.terms(c, &push_stats(node, xw, d.stats(), series.dim), xw)
            }
            Derivs::Paths { f, w, table } => {
                let p = Path::affine(node.decay, w, node.sigma, d.path());
                let drift = -f.grad_dir(&p, w).unwrap_or(f64::NAN);
                (drift, series_generic(*f, &p, table), 0.0)
            }
        }
    }

    /// `(𝒜f(p), tail)` at the pushed path `p`.
    fn generator_at_push(&self, node: &PushNode, d: Draw<'_>) -> (f64, f64) {
        match self {
            Derivs::Cylinder { c, xw, series } => {
                series.generator(c, &push_stats(node, xw, d.stats(), series.dim))
            }
            Derivs::Paths { f, w, table } => {
                let p = Path::affine(node.decay, w, node.sigma, d.path());
                (generator_generic(*f, &p, table), 0.0)
            }
        }
    }
}

/// Checks `T_t g(w) − g(w) = 𝒜(∫₀^t T_u g du)(w)` draw by draw.
pub fn lemma3_check(
    g: &dyn Functional,
    w: &Path,
    t: f64,
    quad: &QuadratureSpec,
    jtrunc: u32,
) -> Result<SteinReport> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    let mc = crn(quad);
    let derivs = Derivs::new(g, w, &mc, jtrunc)?;
    let nodes = quad.push_nodes(t)?;
    let end = PushNode::at(t, 1.0);
    let gw = g.evaluate(w);
    let est = estimate(&mc, derivs.source(), 4, |d, out| {
        let lhs = derivs.value(&end, d) - gw;
        let (mut rhs, mut tail) = (0.0, 0.0);
        for node in &nodes {
            let (drift, series, t2) = derivs.pushed_terms(node, d);
            let d2 = node.decay * node.decay;
            rhs += node.weight * (node.decay * drift + d2 * series);
            tail += node.weight * d2 * t2;
        }
        out.copy_from_slice(&[lhs, rhs, lhs - rhs, tail]);
    })?;
    ensure_finite("Lemma-3 residual", est[2].mean)?;
    Ok(SteinReport::finish(ReportParts {
        check: "lemma3",
        functional: g.name(),
        value: est[1].mean,
        reference: Some(est[0].mean),
        residual: Some(est[2]),
        stderr: est[2].stderr,
        tail_bound: Some(0.0),
        series_tail: derivs.has_series_tail().then_some(est[3].mean),
        truncation_level: Some(jtrunc),
        scale: 1.0 + gw.abs(),
        rel_tol: quad.rel_tol,
        mc,
    }))
}

/// Checks `T_r f(w) − f(w) = ∫₀^r T_s 𝒜f(w) ds` draw by draw, with the
/// series in `𝒜` truncated at [`DEFAULT_JTRUNC`].
pub fn ftc_check(
    f: &dyn Functional,
    w: &Path,
    r: f64,
    quad: &QuadratureSpec,
) -> Result<SteinReport> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r = {r} must be positive")));
    }
    let mc = crn(quad);
    let derivs = Derivs::new(f, w, &mc, DEFAULT_JTRUNC)?;
    let nodes = quad.push_nodes(r)?;
    let end = PushNode::at(r, 1.0);
    let fw = f.evaluate(w);
    let est = estimate(&mc, derivs.source(), 4, |d, out| {
        let lhs = derivs.value(&end, d) - fw;
        let (mut rhs, mut tail) = (0.0, 0.0);
        for node in &nodes {
            let (a, t2) = derivs.generator_at_push(node, d);
            rhs += node.weight * a;
            tail += node.weight * t2;
        }
        out.copy_from_slice(&[lhs, rhs, lhs - rhs, tail]);
    })?;
    ensure_finite("FTC residual", est[2].mean)?;
    Ok(SteinReport::finish(ReportParts {
        check: "ftc",
        functional: f.name(),
        value: est[1].mean,
        reference: Some(est[0].mean),
        residual: Some(est[2]),
        stderr: est[2].stderr,
        tail_bound: Some(0.0),
        series_tail: derivs.has_series_tail().then_some(est[3].mean),
        truncation_level: Some(DEFAULT_JTRUNC),
        scale: 1.0 + fw.abs(),
        rel_tol: quad.rel_tol,
        mc,
    }))
}

/// `𝒜φ(g)(w) − g(w)` with the derivatives of `φ(g)` taken inside the
/// `u` integral.
pub fn stein_residual(
    g: &dyn Functional,
    w: &Path,
    quad: &QuadratureSpec,
    jtrunc: u32,
) -> Result<SteinReport> {
    require_centered(g)?;
    let mc = crn(quad);
    let derivs = Derivs::new(g, w, &mc, jtrunc)?;
    let nodes = quad.push_nodes(quad.u_max)?;
    let gw = g.evaluate(w);
    let est = estimate(&mc, derivs.source(), 3, |d, out| {
        let (mut value, mut tail) = (0.0, 0.0);
        for node in &nodes {
            let (drift, series, t2) = derivs.pushed_terms(node, d);
            let d2 = node.decay * node.decay;
            // −Dφ[w] = −∫ e^{−u} E(−Dg[w]) and D²φ = −∫ e^{−2u} E D²g
            value -= node.weight * (node.decay * drift + d2 * series);
            tail += node.weight * d2 * t2;
        }
        out.copy_from_slice(&[value, value - gw, tail]);
    })?;
    ensure_finite("Stein residual", est[1].mean)?;
    Ok(SteinReport::finish(ReportParts {
        check: "stein_residual",
        functional: g.name(),
        value: est[0].mean,
        reference: Some(gw),
        residual: Some(est[1]),
        stderr: est[1].stderr,
        tail_bound: residual_tail_bound(&g.constants(), w, quad.u_max),
        series_tail: derivs.has_series_tail().then_some(est[2].mean),
        truncation_level: Some(jtrunc),
        scale: 1.0 + gw.abs(),
        rel_tol: quad.rel_tol,
        mc,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthRow {
    pub norm: f64,
    /// `∫₀^{u_max} |T_u g(w)| du`
    pub integral: f64,
    /// `integral / (1 + ‖w‖³)`
    pub ratio: f64,
    /// Sum of the per-node standard errors, scaled like `ratio`.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub functional: String,
    pub rows: Vec<GrowthRow>,
    pub max_ratio: f64,
    /// Ratios do not increase with `‖w‖` beyond four standard errors.
    pub non_increasing: bool,
    pub n: usize,
    pub seed: u64,
}

/// `∫₀^{u_max} |T_u g(w)| du / (1 + ‖w‖³)` for each path, rows sorted by norm.
pub fn growth_probe(
    g: &dyn Functional,
    w_set: &[Path],
    quad: &QuadratureSpec,
) -> Result<GrowthReport> {
    require_centered(g)?;
    if w_set.is_empty() {
        return Err(Error::InvalidArgument("empty path set".into()));
    }
    let nodes = quad.push_nodes(quad.u_max)?;
    let mc = crn(quad);
    let mut rows = Vec::with_capacity(w_set.len());
    for w in w_set {
        let route = Route::new(g, w, &mc);
        let est = estimate(&mc, route.source(), nodes.len(), |d, out| {
            let base = route.value_of_draw(d);
            for (slot, node) in out.iter_mut().zip(&nodes) {
                *slot = route.value_at(node, d) - base;
            }
        })?;
        let integral: f64 = est
            .iter()
            .zip(&nodes)
            .map(|(e, n)| n.weight * e.mean.abs())
            .sum();
        let spread: f64 = est
            .iter()
            .zip(&nodes)
            .map(|(e, n)| n.weight * e.stderr)
            .sum();
        let norm = w.sup_norm();
        let weight = 1.0 + norm.powi(3);
        rows.push(GrowthRow {
            norm,
            integral: ensure_finite("growth integral", integral)?,
            ratio: integral / weight,
            stderr: spread / weight,
        });
    }
    rows.sort_by(|a, b| a.norm.total_cmp(&b.norm));
    let non_increasing = rows
        .windows(2)
        .all(|p| p[1].ratio <= p[0].ratio + 4.0 * (p[0].stderr + p[1].stderr));
    Ok(GrowthReport {
        functional: g.name().to_owned(),
        max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
        rows,
        non_increasing,
        n: mc.n,
        seed: mc.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub functional: String,
    pub c_g: f64,
    /// Largest `|g(w) − g(x)| / ((1 + ‖w‖² + ‖x‖²)‖w − x‖)` seen.
    pub worst_ratio: f64,
    pub pairs: usize,
    pub seed: u64,
    pub passed: bool,
    /// The pair attaining `worst_ratio`.
    pub witness: Option<(Path, Path)>,
}

const PROBE_LEVEL: u32 = 6;

/// Probe path `i` of a pair set: Brownian, scaled Brownian, or constant.
fn probe_path(seed: u64, i: u64) -> Result<Path> {
    let mut rng = NormalStream::new(seed, i);
    let kind = (rng.uniform() * 3.0) as u32;
    let magnitude = 10f64.powf(4.0 * rng.uniform() - 2.0);
    match kind {
        0 => Ok(sample_brownian(PROBE_LEVEL - 1, derive_seed(seed, i))?.path),
        1 => Ok(sample_brownian(PROBE_LEVEL - 1, derive_seed(seed, i))?
            .path
            .scaled(magnitude)),
        _ => Path::constant(magnitude * rng.normal().signum(), PROBE_LEVEL),
    }
}

/// Samples `n_pairs` pairs and compares the Lipschitz-type ratio with the
/// declared `C_g`. Pair 0 is a path with itself.
pub fn lipschitz_probe(g: &dyn Functional, n_pairs: usize, seed: u64) -> Result<LipschitzReport> {
    let c_g = g.constants().lipschitz.ok_or_else(|| {
        Error::InvalidArgument(format!("`{}` declares no Lipschitz constant", g.name()))
    })?;
    let mut worst = 0.0f64;
    let mut witness = None;
    for i in 0..n_pairs as u64 {
        let w = probe_path(seed, 2 * i)?;
        let x = if i == 0 {
            w.clone()
        } else {
            probe_path(seed, 2 * i + 1)?
        };
        let lhs = (g.evaluate(&w) - g.evaluate(&x)).abs();
        let dist = w.sub(&x).sup_norm();
        let weight = 1.0 + w.sup_norm().powi(2) + x.sup_norm().powi(2);
        let ratio = match (lhs, dist) {
            (0.0, _) => 0.0,
            (_, 0.0) => f64::INFINITY,
            (l, d) => l / (weight * d),
        };
        if ratio > worst || witness.is_none() {
            worst = worst.max(ratio);
            witness = Some((w, x));
        }
    }
    Ok(LipschitzReport {
        functional: g.name().to_owned(),
        c_g,
        worst_ratio: worst,
        pairs: n_pairs,
        seed,
        passed: worst <= c_g * (1.0 + 1e-12),
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{
        counterexample_functional, fd_grad, integral_square, terminal_cube, terminal_linear,
        terminal_square, FDSpec, Pathwise,
    };

    fn quad(n: usize) -> QuadratureSpec {
        QuadratureSpec::default().with_mc(MCSpec::new(n, 8, 11).unwrap())
    }

    fn small_quad(n: usize) -> QuadratureSpec {
        QuadratureSpec {
            panels: 8,
            nodes_per_panel: 4,
            ..QuadratureSpec::default().with_mc(MCSpec::new(n, 5, 3).unwrap())
        }
    }

    fn paths() -> Vec<Path> {
        vec![
            Path::zero(4),
            Path::constant(2.0, 3).unwrap(),
            Path::from_fn(6, |t| (4.0 * t).sin() - 0.3).unwrap(),
            Path::from_fn(5, |t| 1.0 - 2.0 * t * t).unwrap(),
        ]
    }

    #[test]
    fn series_examples() {
        let half_square = terminal_square().scaled(-0.5);
        let neg_half_int = integral_square().scaled(-0.5);
        for w in paths() {
            let a = w.terminal();
            for j in [0, 3, 8] {
                let v = stein_operator_series(&half_square, &w, j).unwrap();
                assert!((v - (a * a - 1.0)).abs() < 1e-12);
            }
            let v = stein_operator_series(&terminal_linear(), &w, 5).unwrap();
            assert!((v + a).abs() < 1e-15);
            let i = w.integral();
            let v = stein_operator_series(&neg_half_int, &w, 8).unwrap();
            let partial: f64 = (0..512)
                .map(|k| crate::schauder::schauder_integral(k).powi(2))
                .sum();
            assert!((v - (i * i - partial)).abs() < 1e-12);
            assert!((v - (i * i - 1.0 / 3.0)).abs() <= 0.25f64.powi(8));
            let tail = series_tail_bound(&neg_half_int, &w, 8).unwrap();
            assert!((v - tail - (i * i - 1.0 / 3.0)).abs() < 1e-12);
        }
        assert!(matches!(
            stein_operator_series(&counterexample_functional(), &Path::zero(2), 3),
            Err(Error::OperatorInapplicable(_))
        ));
    }

    #[test]
    fn series_routes_agree() {
        for f in [terminal_square(), integral_square(), terminal_cube()] {
            for w in paths() {
                let a = stein_operator_series(&f, &w, 5).unwrap();
                let b = stein_operator_series(&Pathwise(&f), &w, 5).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} {b}");
            }
        }
    }

    #[test]
    fn series_is_linear() {
        let (f, g) = (terminal_cube(), integral_square());
        let combo = Cylinder::combine(0.7, &f, -2.5, &g);
        for w in paths() {
            let lhs = stein_operator_series(&combo, &w, 6).unwrap();
            let rhs = 0.7 * stein_operator_series(&f, &w, 6).unwrap()
                - 2.5 * stein_operator_series(&g, &w, 6).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn mc_operator_matches_series() {
        let mc = MCSpec::new(20_000, 8, 5).unwrap();
        let w = Path::from_fn(5, |t| t - 0.5).unwrap();
        let est = stein_operator_mc(&terminal_linear(), &w, &mc).unwrap();
        assert_eq!(est.mean, -w.terminal());
        assert_eq!(est.stderr, 0.0);
        for f in [
            terminal_square().scaled(-0.5),
            integral_square(),
            terminal_cube(),
        ] {
            for w in paths() {
                let est = stein_operator_mc(&f, &w, &mc).unwrap();
                let series = stein_operator_series(&f, &w, 8).unwrap();
                let tail = series_tail_bound(&f, &w, 8).unwrap();
                assert!(
                    est.within(series, 4.0) || (est.mean - series).abs() <= 4.0 * est.stderr + tail
                );
            }
        }
        let small = MCSpec::new(200, 4, 5).unwrap();
        let f = terminal_square();
        let a = stein_operator_mc(&f, &w, &small).unwrap();
        let b = stein_operator_mc(&Pathwise(&f), &w, &small).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
    }

    #[test]
    fn generator_kills_stationary_law() {
        let mc = MCSpec::new(50_000, 8, 21).unwrap();
        for f in [
            terminal_square(),
            integral_square(),
            terminal_cube(),
            terminal_linear(),
        ] {
            let series = SeriesParts::new(&f, 8);
            let est = estimate(&mc, Source::Stats(f.stats()), 1, |d, out| {
                out[0] = series.generator(&f, d.stats()).0;
            })
            .unwrap()[0];
            assert!(est.within(0.0, 4.0), "{}: {est:?}", f.name());
        }
    }

    #[test]
    fn solution_closed_forms() {
        let q = quad(20_000);
        for g in [terminal_linear(), terminal_square(), integral_square()] {
            for w in paths() {
                let r = stein_solution(&g, &w, &q).unwrap();
                assert!(r.passed, "{r:?}");
                assert!(r.tail_bound.unwrap() < 1e-5);
            }
        }
    }

    #[test]
    fn solution_rejects_uncentred() {
        let q = small_quad(10);
        let shifted =
            Cylinder::combine(1.0, &terminal_square(), 1.0, &terminal_linear().scaled(0.0));
        assert!(stein_solution(&shifted, &Path::zero(2), &q).is_ok());
        let raw = Cylinder::new(
            "square_raw",
            vec![crate::functionals::LinearStat::Terminal],
            &[(1.0, &[2])],
            GrowthConstants {
                mean_under_z: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            stein_solution(&raw, &Path::zero(2), &q),
            Err(Error::NotCentered { .. })
        ));
        assert!(matches!(
            stein_solution(&counterexample_functional(), &Path::zero(2), &q),
            Err(Error::NotCentered { .. })
        ));
    }

    #[test]
    fn solution_routes_agree() {
        let q = small_quad(64);
        let w = Path::from_fn(3, |t| 0.5 + t).unwrap();
        for g in [terminal_square(), integral_square()] {
            let a = stein_solution(&g, &w, &q).unwrap();
            let b = stein_solution(&Pathwise(&g), &w, &q).unwrap();
            assert!((a.value - b.value).abs() < 1e-10);
        }
    }

    #[test]
    fn refining_quadrature_is_stable() {
        let q = quad(5000);
        let fine = QuadratureSpec { panels: 128, ..q };
        let w = Path::constant(1.3, 2).unwrap();
        for g in [terminal_linear(), terminal_square(), integral_square()] {
            let a = stein_solution(&g, &w, &q).unwrap();
            let b = stein_solution(&g, &w, &fine).unwrap();
            assert!((a.value - b.value).abs() <= a.stderr + a.tail_bound.unwrap() + 1e-12);
        }
    }

    #[test]
    fn derivative_examples() {
        let q = quad(10_000);
        let w = Path::from_fn(4, |t| 2.0 * t - 0.4).unwrap();
        let h = Path::from_fn(4, |t| t * t).unwrap();
        let d = stein_solution_derivative(&terminal_linear(), &w, &h, 1, &q).unwrap();
        assert!((d.mean + 1.0).abs() < 1e-8);
        let ones = Path::constant(1.0, 2).unwrap();
        let d = stein_solution_derivative(&terminal_square(), &w, &ones, 2, &q).unwrap();
        assert!((d.mean + 1.0).abs() < 1e-8);
        assert!(stein_solution_derivative(&terminal_square(), &w, &ones, 3, &q).is_err());

        // two routes to one derivative
        let q = quad(4000);
        for g in [terminal_square(), integral_square()] {
            let exact = stein_solution_derivative(&g, &w, &h, 1, &q).unwrap();
            let solution = SolutionFunctional { g: &g, quad: q };
            let fd = fd_grad(&solution, &w, &h, FDSpec::default()).unwrap();
            assert!(
                (fd - exact.mean).abs() <= 1e-3 * (1.0 + exact.mean.abs()),
                "{fd} {exact:?}"
            );
        }
    }

    #[test]
    fn lemma3_closed_form() {
        let q = quad(20_000);
        for t in [1e-3, 0.1, 1.0, 5.0] {
            for w in paths() {
                let r = lemma3_check(&terminal_square(), &w, t, &q, 8).unwrap();
                let a = w.terminal();
                let exact = ((-2.0 * t).exp() - 1.0) * (a * a - 1.0);
                assert!((r.reference.unwrap() - exact).abs() < 4.0 * 0.02 * (1.0 + exact.abs()));
                assert!(r.passed, "t={t}: {r:?}");
                let r = lemma3_check(&integral_square(), &w, t, &q, 8).unwrap();
                assert!(r.passed, "{r:?}");
            }
        }
        assert!(lemma3_check(&terminal_square(), &Path::zero(1), 0.0, &q, 8).is_err());
    }

    #[test]
    fn lemma3_routes_agree() {
        let q = small_quad(32);
        let w = Path::from_fn(3, |t| t - 0.2).unwrap();
        let f = integral_square();
        let a = lemma3_check(&f, &w, 0.5, &q, 3).unwrap();
        let b = lemma3_check(&Pathwise(&f), &w, 0.5, &q, 3).unwrap();
        assert!((a.residual.unwrap() - b.residual.unwrap()).abs() < 1e-10);
        assert!(b.series_tail.is_none());
    }

    #[test]
    fn ftc_closed_forms() {
        let q = quad(20_000);
        let f = terminal_square().scaled(-0.5);
        for r in [1e-3, 0.1, 1.0] {
            for w in paths() {
                let rep = ftc_check(&f, &w, r, &q).unwrap();
                assert!(rep.passed, "{rep:?}");
                let a = w.terminal();
                let exact = -((-2.0 * r).exp() - 1.0) * (a * a - 1.0) / 2.0;
                assert!((rep.value - exact).abs() <= 4.0 * rep.stderr + 0.02 * (1.0 + exact.abs()));
                let rep = ftc_check(&terminal_linear(), &w, r, &q).unwrap();
                assert!((rep.value + (1.0 - (-r).exp()) * a).abs() < 0.02 * (1.0 + a.abs()));
                assert!(rep.passed);
            }
        }
    }

    #[test]
    fn residual_examples() {
        let q = quad(20_000);
        let r =
            stein_residual(&terminal_square(), &Path::constant(2.0, 2).unwrap(), &q, 8).unwrap();
        assert!((r.value - 3.0).abs() < 0.06 && r.passed, "{r:?}");
        for g in [terminal_linear(), terminal_square(), integral_square()] {
            for w in paths() {
                let r = stein_residual(&g, &w, &q, 8).unwrap();
                assert!(r.passed, "{r:?}");
            }
        }
        let r =
            stein_residual(&terminal_linear(), &Path::constant(3.0, 1).unwrap(), &q, 8).unwrap();
        assert!(r.residual.unwrap().abs() < 1e-6);
    }

    #[test]
    fn growth_closed_forms() {
        let mut q = quad(20_000);
        q.mc = q.mc.with_antithetic(true);
        let ws: Vec<Path> = [0.0, 1.0, 10.0]
            .iter()
            .map(|&c| Path::constant(c, 2).unwrap())
            .collect();
        let rep = growth_probe(&terminal_square(), &ws, &q).unwrap();
        assert!(
            (rep.rows[0].ratio - 0.5).abs() < 4.0 * rep.rows[0].stderr,
            "{:?}",
            rep.rows
        );
        let env = 99.0 / (2.0 * 1001.0);
        assert!((rep.rows[2].ratio - env).abs() < 0.02 * env);
        let rep = growth_probe(&terminal_linear(), &ws, &q).unwrap();
        for row in &rep.rows[1..] {
            let c = row.norm;
            assert!((row.ratio - c / (1.0 + c.powi(3))).abs() < 1e-6);
        }
        assert!(!rep.non_increasing, "c/(1+c³) rises from c = 0 to c = 1");
        let rep = growth_probe(&terminal_linear(), &ws[1..], &q).unwrap();
        assert!(rep.non_increasing);
    }

    #[test]
    fn lipschitz_examples() {
        for g in [
            terminal_linear(),
            terminal_square(),
            integral_square(),
            terminal_cube(),
        ] {
            let rep = lipschitz_probe(&g, 10_000, 8).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.worst_ratio > 0.0);
        }
        let rep = lipschitz_probe(&terminal_linear(), 1, 8).unwrap();
        assert_eq!(rep.worst_ratio, 0.0);
        assert!(lipschitz_probe(&counterexample_functional(), 10, 1).is_err());
    }

    #[test]
    fn lipschitz_detects_violation() {
        let steep = terminal_cube().scaled(10.0);
        let rep = lipschitz_probe(&steep.renamed("steep"), 2000, 8);
        // the scaled cube declares 15, which does hold
        assert!(rep.unwrap().passed);
        let wrong = Cylinder::new(
            "cube_understated",
            vec![crate::functionals::LinearStat::Terminal],
            &[(1.0, &[3])],
            GrowthConstants {
                lipschitz: Some(0.1),
                ..Default::default()
            },
        )
        .unwrap();
        let rep = lipschitz_probe(&wrong, 2000, 8).unwrap();
        assert!(!rep.passed);
        let (w, x) = rep.witness.unwrap();
        let ratio = (wrong.evaluate(&w) - wrong.evaluate(&x)).abs()
            / ((1.0 + w.sup_norm().powi(2) + x.sup_norm().powi(2)) * w.sub(&x).sup_norm());
        assert_eq!(ratio, rep.worst_ratio);
    }
}
