//! Functionals on path space and a finite-difference derivative engine.
//!
//! The library functionals except the counterexample are *cylinder*
//! functionals: polynomials in a few continuous linear statistics of the path
//! (`w(1)`, `∫w`). For these, evaluation and exact Fréchet derivatives reduce
//! to polynomial calculus in the statistics, and the Monte-Carlo engines never
//! need to materialise a pushed path.

use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::paths::Path;
use crate::schauder::{schauder, schauder_integral};

pub const MAX_STATS: usize = 4;

/// Statistic values of one path, padded to `MAX_STATS`.
pub type Stats = [f64; MAX_STATS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LinearStat {
    /// `w ↦ w(1)`
    Terminal,
    /// `w ↦ ∫₀¹ w(t) dt`
    Integral,
}

impl LinearStat {
    pub fn apply(self, w: &Path) -> f64 {
        match self {
            LinearStat::Terminal => w.terminal(),
            LinearStat::Integral => w.integral(),
        }
    }

    /// Value on the Schauder function `S_k`.
    pub fn on_schauder(self, k: usize) -> f64 {
        match self {
            LinearStat::Terminal => schauder(k, 1.0),
            LinearStat::Integral => schauder_integral(k),
        }
    }

    /// `Σ_{k ≥ 2^{J+1}} ℓ(S_k)²`, the part of `E ℓ(Z)²` missed by a level-`J`
    /// truncation.
    pub fn schauder_tail(self, level: u32) -> f64 {
        match self {
            LinearStat::Terminal => 0.0,
            LinearStat::Integral => 0.25f64.powi(level as i32) / 48.0,
        }
    }
}

/// Declared growth constants of a functional.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GrowthConstants {
    /// Upper bound on `sup |f(w)| / (1 + ‖w‖³)`.
    pub l_bound: f64,
    /// Upper bounds on the four suprema making up `‖f‖_M`; the last one is
    /// the Lipschitz constant of `D²f` measured against `‖h‖`.
    pub m_components: Option<[f64; 4]>,
    /// `C_g` with `|g(w) - g(x)| ≤ C_g (1 + ‖w‖² + ‖x‖²) ‖w - x‖`.
    pub lipschitz: Option<f64>,
    /// `E f(Z)` for Brownian `Z`, when known exactly.
    pub mean_under_z: Option<f64>,
}

pub trait Functional: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn evaluate(&self, w: &Path) -> f64;

    /// `Df(w)[h]`.
    fn grad_dir(&self, _w: &Path, _h: &Path) -> Result<f64> {
        Err(Error::DerivativesUnavailable(self.name().to_owned()))
    }

    /// `D²f(w)[h1, h2]`.
    fn hess_dir(&self, _w: &Path, _h1: &Path, _h2: &Path) -> Result<f64> {
        Err(Error::DerivativesUnavailable(self.name().to_owned()))
    }

    fn has_derivatives(&self) -> bool {
        false
    }

    fn constants(&self) -> GrowthConstants;

    fn cylinder(&self) -> Option<&Cylinder> {
        None
    }

    /// `f(a·w + b·z)`.
    fn evaluate_affine(&self, a: f64, w: &Path, b: f64, z: &Path) -> f64 {
        self.evaluate(&Path::affine(a, w, b, z))
    }
}

impl<F: Functional + ?Sized> Functional for &F {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn evaluate(&self, w: &Path) -> f64 {
        (**self).evaluate(w)
    }
    fn grad_dir(&self, w: &Path, h: &Path) -> Result<f64> {
        (**self).grad_dir(w, h)
    }
    fn hess_dir(&self, w: &Path, h1: &Path, h2: &Path) -> Result<f64> {
        (**self).hess_dir(w, h1, h2)
    }
    fn has_derivatives(&self) -> bool {
        (**self).has_derivatives()
    }
    fn constants(&self) -> GrowthConstants {
        (**self).constants()
    }
    fn cylinder(&self) -> Option<&Cylinder> {
        (**self).cylinder()
    }
    fn evaluate_affine(&self, a: f64, w: &Path, b: f64, z: &Path) -> f64 {
        (**self).evaluate_affine(a, w, b, z)
    }
}

/// Hides the cylinder structure of the wrapped functional, forcing every
/// estimator onto its generic full-path route.
#[derive(Debug)]
pub struct Pathwise<F>(pub F);

impl<F: Functional> Functional for Pathwise<F> {
    fn name(&self) -> &str {
        self.0.name()
    }
    fn evaluate(&self, w: &Path) -> f64 {
        self.0.evaluate(w)
    }
    fn grad_dir(&self, w: &Path, h: &Path) -> Result<f64> {
        self.0.grad_dir(w, h)
    }
    fn hess_dir(&self, w: &Path, h1: &Path, h2: &Path) -> Result<f64> {
        self.0.hess_dir(w, h1, h2)
    }
    fn has_derivatives(&self) -> bool {
        self.0.has_derivatives()
    }
    fn constants(&self) -> GrowthConstants {
        self.0.constants()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Monomial {
    coef: f64,
    powers: [u32; MAX_STATS],
}

/// `f(w) = P(ℓ_1(w), …, ℓ_m(w))` with `P` a polynomial and `ℓ_i` linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    name: String,
    stats: Vec<LinearStat>,
    terms: Vec<Monomial>,
    /// Dense coefficients `c_p` of `Σ c_p x^p` when there is one statistic.
    univariate: Option<Vec<f64>>,
    constants: GrowthConstants,
}

fn dense_coefficients(dim: usize, terms: &[Monomial]) -> Option<Vec<f64>> {
    if dim != 1 {
        return None;
    }
    let degree = terms.iter().map(|t| t.powers[0]).max().unwrap_or(0) as usize;
    let mut c = vec![0.0; degree + 1];
    for t in terms {
        c[t.powers[0] as usize] += t.coef;
    }
    Some(c)
}

impl Cylinder {
    fn assemble(
        name: String,
        stats: Vec<LinearStat>,
        terms: Vec<Monomial>,
        constants: GrowthConstants,
    ) -> Cylinder {
        Cylinder {
            univariate: dense_coefficients(stats.len(), &terms),
            name,
            stats,
            terms,
            constants,
        }
    }

    /// `terms` are `(coefficient, powers)` with one power per statistic.
    pub fn new(
        name: impl Into<String>,
        stats: Vec<LinearStat>,
        terms: &[(f64, &[u32])],
        constants: GrowthConstants,
    ) -> Result<Self> {
        if stats.is_empty() || stats.len() > MAX_STATS {
            return Err(Error::InvalidArgument(format!(
                "cylinder functionals need 1..={MAX_STATS} statistics"
            )));
        }
        let mut monomials = Vec::with_capacity(terms.len());
        for (coef, powers) in terms {
            if powers.len() != stats.len() {
                return Err(Error::InvalidArgument(
                    "one power per statistic required".into(),
                ));
            }
            let mut p = [0; MAX_STATS];
            p[..powers.len()].copy_from_slice(powers);
            monomials.push(Monomial {
                coef: *coef,
                powers: p,
            });
        }
        Ok(Cylinder::assemble(name.into(), stats, monomials, constants))
    }

    pub fn stats(&self) -> &[LinearStat] {
        &self.stats
    }

    pub fn dim(&self) -> usize {
        self.stats.len()
    }

    pub fn project(&self, w: &Path) -> Stats {
        let mut x = [0.0; MAX_STATS];
        for (slot, stat) in x.iter_mut().zip(&self.stats) {
            *slot = stat.apply(w);
        }
        x
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.powers.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Partial derivative of the polynomial with respect to the listed
    /// statistic indices (repeats allowed), evaluated at `x`.
    #[cfg(test)]
    fn partial(&self, x: &Stats, wrt: &[usize]) -> f64 {
        let m = self.dim();
        let mut total = 0.0;
        'terms: for term in &self.terms {
            let mut powers = term.powers;
            let mut coef = term.coef;
            for &i in wrt {
                if powers[i] == 0 {
                    continue 'terms;
                }
                coef *= powers[i] as f64;
                powers[i] -= 1;
            }
            let mut v = coef;
            for i in 0..m {
                v *= x[i].powi(powers[i] as i32);
            }
            total += v;
        }
        total
    }

    pub fn profile(&self, x: &Stats) -> f64 {
        if let Some(c) = &self.univariate {
            return c.iter().rev().fold(0.0, |acc, &a| acc * x[0] + a);
        }
        let m = self.dim();
        self.terms
            .iter()
            .map(|t| {
                let mut v = t.coef;
                for i in 0..m {
                    v *= x[i].powi(t.powers[i] as i32);
                }
                v
            })
            .sum()
    }

    /// `(p(x), p'(x), p''(x))` by Horner when there is a single statistic.
    #[inline]
    pub fn univariate_jet(&self, x: f64) -> Option<(f64, f64, f64)> {
        let c = self.univariate.as_ref()?;
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &a in c.iter().rev() {
            d2 = d2 * x + 2.0 * d1;
            d1 = d1 * x + v;
            v = v * x + a;
        }
        Some((v, d1, d2))
    }

    /// Value, gradient and Hessian of the polynomial at `x` in one pass.
    pub fn jet(&self, x: &Stats) -> (f64, Stats, [Stats; MAX_STATS]) {
        let mut grad = [0.0; MAX_STATS];
        let mut hess = [[0.0; MAX_STATS]; MAX_STATS];
        if let Some((v, d1, d2)) = self.univariate_jet(x[0]) {
            grad[0] = d1;
            hess[0][0] = d2;
            return (v, grad, hess);
        }
        let m = self.dim();
        let mut value = 0.0;
        for t in &self.terms {
            // x^p, p x^{p-1}, p(p-1) x^{p-2} per statistic
            let mut f0 = [1.0; MAX_STATS];
            let mut f1 = [0.0; MAX_STATS];
            let mut f2 = [0.0; MAX_STATS];
            for i in 0..m {
                let p = t.powers[i] as i32;
                f0[i] = x[i].powi(p);
                if p >= 1 {
                    f1[i] = p as f64 * x[i].powi(p - 1);
                }
                if p >= 2 {
                    f2[i] = (p * (p - 1)) as f64 * x[i].powi(p - 2);
                }
            }
            let product = |skip_a: usize, skip_b: usize| -> f64 {
                (0..m)
                    .filter(|&j| j != skip_a && j != skip_b)
                    .map(|j| f0[j])
                    .product()
            };
            value += t.coef * product(usize::MAX, usize::MAX);
            for i in 0..m {
                if f1[i] == 0.0 && f2[i] == 0.0 {
                    continue;
                }
                let rest = t.coef * product(i, usize::MAX);
                grad[i] += f1[i] * rest;
                hess[i][i] += f2[i] * rest;
                for j in 0..i {
                    let v = t.coef * f1[i] * f1[j] * product(i, j);
                    hess[i][j] += v;
                    hess[j][i] += v;
                }
            }
        }
        (value, grad, hess)
    }

    pub fn profile_grad(&self, x: &Stats) -> Stats {
        self.jet(x).1
    }

    pub fn profile_hess(&self, x: &Stats) -> [Stats; MAX_STATS] {
        self.jet(x).2
    }

    /// `Σ_k ℓ_i(S_k) ℓ_j(S_k)` over the first `2^{J+1}` Schauder functions.
    pub fn schauder_gram(&self, level: u32) -> [Stats; MAX_STATS] {
        let mut gram = [[0.0; MAX_STATS]; MAX_STATS];
        let m = self.dim();
        for k in 0..crate::schauder::coefficient_count(level) {
            let mut v = [0.0; MAX_STATS];
            for (slot, stat) in v.iter_mut().zip(&self.stats) {
                *slot = stat.on_schauder(k);
            }
            for i in 0..m {
                for j in 0..m {
                    gram[i][j] += v[i] * v[j];
                }
            }
        }
        gram
    }

    pub fn scaled(&self, a: f64) -> Cylinder {
        Cylinder::combine(a, self, 0.0, self)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Cylinder {
        self.name = name.into();
        self
    }

    /// `a·f + b·g` on the union of the two statistic sets.
    pub fn combine(a: f64, f: &Cylinder, b: f64, g: &Cylinder) -> Cylinder {
        let mut stats = f.stats.clone();
        for s in &g.stats {
            if !stats.contains(s) {
                stats.push(*s);
            }
        }
        assert!(
            stats.len() <= MAX_STATS,
            "too many statistics in combination"
        );
        let remap = |src: &Cylinder, scale: f64, out: &mut Vec<Monomial>| {
            for t in &src.terms {
                let mut powers = [0; MAX_STATS];
                for (i, s) in src.stats.iter().enumerate() {
                    let target = stats.iter().position(|x| x == s).expect("stat present");
                    powers[target] += t.powers[i];
                }
                out.push(Monomial {
                    coef: scale * t.coef,
                    powers,
                });
            }
        };
        let mut terms = Vec::new();
        if a != 0.0 {
            remap(f, a, &mut terms);
        }
        if b != 0.0 {
            remap(g, b, &mut terms);
        }
        let cf = &f.constants;
        let cg = &g.constants;
        let lin = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(x), Some(y)) => Some(a.abs() * x + b.abs() * y),
            _ => None,
        };
        let constants = GrowthConstants {
            l_bound: a.abs() * cf.l_bound + b.abs() * cg.l_bound,
            m_components: match (cf.m_components, cg.m_components) {
                (Some(x), Some(y)) => {
                    Some(std::array::from_fn(|i| a.abs() * x[i] + b.abs() * y[i]))
                }
                _ => None,
            },
            lipschitz: lin(cf.lipschitz, cg.lipschitz),
            mean_under_z: match (cf.mean_under_z, cg.mean_under_z) {
                (Some(x), Some(y)) => Some(a * x + b * y),
                _ => None,
            },
        };
        Cylinder::assemble(
            format!("{a}*{}+{b}*{}", f.name, g.name),
            stats,
            terms,
            constants,
        )
    }
}

impl Functional for Cylinder {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, w: &Path) -> f64 {
        self.profile(&self.project(w))
    }

    fn grad_dir(&self, w: &Path, h: &Path) -> Result<f64> {
        let g = self.profile_grad(&self.project(w));
        let dh = self.project(h);
        Ok((0..self.dim()).map(|i| g[i] * dh[i]).sum())
    }

    fn hess_dir(&self, w: &Path, h1: &Path, h2: &Path) -> Result<f64> {
        let hess = self.profile_hess(&self.project(w));
        let (a, b) = (self.project(h1), self.project(h2));
        // summed over i ≤ j so that swapping h1 and h2 is exact
        let mut total = 0.0;
        for i in 0..self.dim() {
            total += hess[i][i] * (a[i] * b[i]);
            for j in i + 1..self.dim() {
                total += 0.5 * (hess[i][j] + hess[j][i]) * (a[i] * b[j] + a[j] * b[i]);
            }
        }
        Ok(total)
    }

    fn has_derivatives(&self) -> bool {
        true
    }

    fn constants(&self) -> GrowthConstants {
        self.constants.clone()
    }

    fn cylinder(&self) -> Option<&Cylinder> {
        Some(self)
    }
}

/// `g(w) = w(1)² − 1`.
pub fn terminal_square() -> Cylinder {
    Cylinder::new(
        "terminal_square",
        vec![LinearStat::Terminal],
        &[(1.0, &[2]), (-1.0, &[0])],
        GrowthConstants {
            l_bound: 1.0,
            m_components: Some([1.0, 1.0, 2.0, 0.0]),
            lipschitz: Some(1.0),
            mean_under_z: Some(0.0),
        },
    )
    .expect("valid literal")
}

/// `g(w) = w(1)`.
pub fn terminal_linear() -> Cylinder {
    Cylinder::new(
        "terminal_linear",
        vec![LinearStat::Terminal],
        &[(1.0, &[1])],
        GrowthConstants {
            l_bound: 1.0,
            m_components: Some([1.0, 1.0, 0.0, 0.0]),
            lipschitz: Some(1.0),
            mean_under_z: Some(0.0),
        },
    )
    .expect("valid literal")
}

/// `g(w) = (∫w)² − 1/3`; `E(∫Z)² = ∫∫ min(s,t) ds dt = 1/3`.
pub fn integral_square() -> Cylinder {
    Cylinder::new(
        "integral_square",
        vec![LinearStat::Integral],
        &[(1.0, &[2]), (-1.0 / 3.0, &[0])],
        GrowthConstants {
            l_bound: 1.0,
            m_components: Some([1.0, 1.0, 2.0, 0.0]),
            lipschitz: Some(1.0),
            mean_under_z: Some(0.0),
        },
    )
    .expect("valid literal")
}

/// `f(w) = w(1)³`, the cubic probe for Taylor remainders.
pub fn terminal_cube() -> Cylinder {
    Cylinder::new(
        "terminal_cube",
        vec![LinearStat::Terminal],
        &[(1.0, &[3])],
        GrowthConstants {
            l_bound: 1.0,
            m_components: Some([1.0, 3.0, 6.0, 6.0]),
            // |a³ − b³| = |a − b|(a² + ab + b²) ≤ 1.5 (a² + b²) |a − b|
            lipschitz: Some(1.5),
            mean_under_z: Some(0.0),
        },
    )
    .expect("valid literal")
}

/// `f(w) = (1 + ‖w‖³) sin ‖w‖`. Evaluation only.
#[derive(Clone, Debug, Default)]
pub struct NormSine;

pub fn counterexample_functional() -> NormSine {
    NormSine
}

impl NormSine {
    pub fn of_norm(r: f64) -> f64 {
        (1.0 + r * r * r) * r.sin()
    }
}

impl Functional for NormSine {
    fn name(&self) -> &str {
        "counterexample_sin"
    }

    fn evaluate(&self, w: &Path) -> f64 {
        NormSine::of_norm(w.sup_norm())
    }

    fn constants(&self) -> GrowthConstants {
        GrowthConstants {
            l_bound: 1.0,
            ..Default::default()
        }
    }

    fn evaluate_affine(&self, a: f64, w: &Path, b: f64, z: &Path) -> f64 {
        NormSine::of_norm(Path::affine_sup_norm(a, w, b, z))
    }
}

pub const REGISTRY: [&str; 5] = [
    "terminal_square",
    "terminal_linear",
    "integral_square",
    "counterexample_sin",
    "terminal_cube",
];

pub fn by_name(name: &str) -> Result<Arc<dyn Functional>> {
    Ok(match name {
        "terminal_square" => Arc::new(terminal_square()),
        "terminal_linear" => Arc::new(terminal_linear()),
        "integral_square" => Arc::new(integral_square()),
        "counterexample_sin" => Arc::new(counterexample_functional()),
        "terminal_cube" => Arc::new(terminal_cube()),
        _ => {
            return Err(Error::UnknownFunctional {
                name: name.to_owned(),
                known: REGISTRY.to_vec(),
            })
        }
    })
}

/// Relative finite-difference steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FDSpec {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for FDSpec {
    fn default() -> Self {
        FDSpec {
            eps1: 1e-5,
            eps2: 1e-4,
        }
    }
}

impl FDSpec {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        for eps in [eps1, eps2] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "finite-difference step {eps} outside (0, 1)"
                )));
            }
        }
        Ok(FDSpec { eps1, eps2 })
    }
}

fn fd_step(rel: f64, w: &Path, h: &Path) -> Result<f64> {
    if h.sup_norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "finite-difference direction must be nonzero".into(),
        ));
    }
    Ok(rel * w.sup_norm().max(1.0) / h.sup_norm())
}

/// Central difference for `Df(w)[h]`.
pub fn fd_grad(f: &dyn Functional, w: &Path, h: &Path, spec: FDSpec) -> Result<f64> {
    let eps = fd_step(spec.eps1, w, h)?;
    let plus = f.evaluate_affine(1.0, w, eps, h);
    let minus = f.evaluate_affine(1.0, w, -eps, h);
    Ok((plus - minus) / (2.0 * eps))
}

/// Second central difference for `D²f(w)[h, h]`.
pub fn fd_hess(f: &dyn Functional, w: &Path, h: &Path, spec: FDSpec) -> Result<f64> {
    let eps = fd_step(spec.eps2, w, h)?;
    let plus = f.evaluate_affine(1.0, w, eps, h);
    let minus = f.evaluate_affine(1.0, w, -eps, h);
    Ok((plus - 2.0 * f.evaluate(w) + minus) / (eps * eps))
}
