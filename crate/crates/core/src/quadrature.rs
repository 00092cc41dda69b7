//! Composite Gauss–Legendre rules on finite intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::MCSpec;

/// Nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "quadrature order must be positive".into(),
            ));
        }
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Newton on P_n from the Tricomi initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Ok(GaussLegendre { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(node, weight)` pairs of the composite rule on `[a, b]`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let width = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let left = a + p as f64 * width;
            let centre = left + 0.5 * width;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((centre + 0.5 * width * x, 0.5 * width * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.composite(a, b, panels)
            .into_iter()
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

pub const MIN_PANELS: usize = 4;

/// Settings for `∫₀^{u_max} du` integrals of Monte-Carlo integrands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub u_max: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Shared by every node: one draw stream for the whole integral.
    pub mc: MCSpec,
    /// Relative tolerance for residual checks, applied to `1 + |reference|`.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            u_max: 20.0,
            panels: 64,
            nodes_per_panel: 8,
            mc: MCSpec::default(),
            rel_tol: 0.02,
        }
    }
}

/// Quadrature node with the OU push coefficients precomputed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PushNode {
    pub weight: f64,
    /// `e^{-u}`
    pub decay: f64,
    /// `σ(u)`
    pub sigma: f64,
}

impl PushNode {
    pub fn at(u: f64, weight: f64) -> PushNode {
        PushNode {
            weight,
            decay: (-u).exp(),
            sigma: (-(-2.0 * u).exp_m1()).sqrt(),
        }
    }
}

impl QuadratureSpec {
    pub fn with_mc(mut self, mc: MCSpec) -> Self {
        self.mc = mc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "u_max = {} must be positive and finite",
                self.u_max
            )));
        }
        if self.panels == 0 || self.nodes_per_panel == 0 {
            return Err(Error::InvalidArgument(
                "panels and nodes_per_panel must be positive".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("rel_tol must be positive".into()));
        }
        self.mc.validate()
    }

    /// Panels for `[0, upper]`: `panels` scaled by `upper / u_max`, at
    /// least [`MIN_PANELS`] and at most `panels`.
    pub fn panels_for(&self, upper: f64) -> usize {
        let scaled = (self.panels as f64 * upper / self.u_max).ceil() as usize;
        scaled.clamp(MIN_PANELS.min(self.panels), self.panels)
    }

    pub(crate) fn push_nodes(&self, upper: f64) -> Result<Vec<PushNode>> {
        self.validate()?;
        let rule = GaussLegendre::new(self.nodes_per_panel)?;
        Ok(rule
            .composite(0.0, upper, self.panels_for(upper))
            .into_iter()
            .map(|(u, w)| PushNode::at(u, w))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panels_scale_with_interval() {
        let q = QuadratureSpec::default();
        assert_eq!(q.panels_for(q.u_max), 64);
        assert_eq!(q.panels_for(1.0), 4);
        assert_eq!(q.panels_for(5.0), 16);
        assert_eq!(q.panels_for(100.0), 64);
        let one = QuadratureSpec { panels: 1, ..q };
        assert_eq!(one.panels_for(0.1), 1);
    }

    #[test]
    fn known_nodes() {
        let g2 = GaussLegendre::new(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((g2.nodes()[0] + r).abs() < 1e-15 && (g2.nodes()[1] - r).abs() < 1e-15);
        assert!((g2.weights()[0] - 1.0).abs() < 1e-15);

        let g3 = GaussLegendre::new(3).unwrap();
        assert!(g3.nodes()[1].abs() < 1e-15);
        assert!((g3.weights()[1] - 8.0 / 9.0).abs() < 1e-14);
        assert!((g3.nodes()[2] - 0.6f64.sqrt()).abs() < 1e-15);

        assert!(GaussLegendre::new(0).is_err());
    }

    #[test]
    fn exact_for_polynomials() {
        for order in 1..=12usize {
            let rule = GaussLegendre::new(order).unwrap();
            assert!((rule.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for p in 0..(2 * order) as i32 {
                let exact = if p % 2 == 0 {
                    2.0 / (p + 1) as f64
                } else {
                    0.0
                };
                let got = rule.integrate(-1.0, 1.0, 1, |x| x.powi(p));
                assert!((got - exact).abs() < 1e-13, "order {order} power {p}");
            }
        }
    }

    #[test]
    fn exponential_decay_integrals() {
        let rule = GaussLegendre::new(8).unwrap();
        let got = rule.integrate(0.0, 20.0, 64, |u| (-2.0 * u).exp());
        assert!((got - 0.5 * (1.0 - (-40f64).exp())).abs() < 1e-14);
        let got = rule.integrate(0.0, 20.0, 64, |u| (-u).exp());
        assert!((got - (1.0 - (-20f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        let bad = QuadratureSpec {
            u_max: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec {
            panels: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
