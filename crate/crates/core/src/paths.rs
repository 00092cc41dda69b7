//! Continuous piecewise-linear paths on a dyadic grid of `[0, 1]`.
//!
//! A level-`J` path stores `2^J + 1` node values `w(i / 2^J)` and is linear
//! between nodes, so its supremum norm is attained at a node and is computed
//! exactly. Every partial sum of the Schauder expansion of Brownian motion is
//! a path of this kind.

use std::borrow::Cow;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default working level: 1025 grid points.
pub const DEFAULT_LEVEL: u32 = 10;

/// Levels above this would need more than 2^24 grid values.
pub const MAX_LEVEL: u32 = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath", into = "RawPath")]
pub struct Path {
    level: u32,
    values: Vec<f64>,
    sup: f64,
}

/// Wire form: `{"level": J, "values": [...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    level: u32,
    values: Vec<f64>,
}

impl TryFrom<RawPath> for Path {
    type Error = Error;

    fn try_from(raw: RawPath) -> Result<Self> {
        Path::new(raw.level, raw.values)
    }
}

impl From<Path> for RawPath {
    fn from(path: Path) -> Self {
        RawPath {
            level: path.level,
            values: path.values,
        }
    }
}

pub fn grid_len(level: u32) -> usize {
    (1usize << level) + 1
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "level {level} exceeds the maximum {MAX_LEVEL}"
        )));
    }
    Ok(())
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

impl Path {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        check_level(level)?;
        let expected = grid_len(level);
        if values.len() != expected {
            return Err(Error::GridLength {
                level,
                expected,
                got: values.len(),
            });
        }
        for &v in &values {
            ensure_finite("path value", v)?;
        }
        let sup = max_abs(&values);
        Ok(Path { level, values, sup })
    }

    /// Constructor for values produced by arithmetic on already valid paths.
    pub(crate) fn from_trusted(level: u32, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid_len(level));
        let sup = max_abs(&values);
        Path { level, values, sup }
    }

    pub fn zero(level: u32) -> Self {
        Path::from_trusted(level, vec![0.0; grid_len(level)])
    }

    pub fn constant(c: f64, level: u32) -> Result<Self> {
        ensure_finite("constant path", c)?;
        check_level(level)?;
        Ok(Path::from_trusted(level, vec![c; grid_len(level)]))
    }

    /// Samples `f` at the grid nodes and interpolates linearly in between.
    pub fn from_fn(level: u32, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_level(level)?;
        let values = (0..grid_len(level)).map(|i| f(node(level, i))).collect();
        Path::new(level, values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// `w(1)`.
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `∫₀¹ w(t) dt` by the trapezoid rule, exact for piecewise-linear paths.
    pub fn integral(&self) -> f64 {
        let n = self.values.len() - 1;
        let inner: f64 = self.values[1..n].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[n])) / n as f64
    }

    /// Linear interpolation at `t ∈ [0, 1]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let cells = (self.values.len() - 1) as f64;
        let x = t * cells;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Same function on the finer level-`target` grid.
    pub fn refine(&self, target: u32) -> Result<Path> {
        if target < self.level {
            return Err(Error::Coarsening {
                from: self.level,
                to: target,
            });
        }
        check_level(target)?;
        if target == self.level {
            return Ok(self.clone());
        }
        let ratio = 1usize << (target - self.level);
        let mut out = Vec::with_capacity(grid_len(target));
        for pair in self.values.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for j in 0..ratio {
                out.push(a + (b - a) * (j as f64 / ratio as f64));
            }
        }
        out.push(self.terminal());
        Ok(Path {
            level: target,
            values: out,
            sup: self.sup,
        })
    }

    pub(crate) fn at_level(&self, level: u32) -> Cow<'_, Path> {
        if self.level == level {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(
                self.refine(level)
                    .expect("callers only ever request a finer level"),
            )
        }
    }

    /// `a·w + b·z` on the finer of the two grids.
    pub fn affine(a: f64, w: &Path, b: f64, z: &Path) -> Path {
        let level = w.level.max(z.level);
        let (w, z) = (w.at_level(level), z.at_level(level));
        let values = w
            .values
            .iter()
            .zip(&z.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Path::from_trusted(level, values)
    }

    /// `‖a·w + b·z‖` without materialising the combination.
    pub fn affine_sup_norm(a: f64, w: &Path, b: f64, z: &Path) -> f64 {
        let level = w.level.max(z.level);
        let (w, z) = (w.at_level(level), z.at_level(level));
        w.values
            .iter()
            .zip(&z.values)
            .fold(0.0, |acc, (x, y)| acc.max((a * x + b * y).abs()))
    }

    pub fn scaled(&self, a: f64) -> Path {
        Path::from_trusted(self.level, self.values.iter().map(|v| a * v).collect())
    }

    pub fn sub(&self, other: &Path) -> Path {
        Path::affine(1.0, self, -1.0, other)
    }

    pub fn add(&self, other: &Path) -> Path {
        Path::affine(1.0, self, 1.0, other)
    }

    /// Writes `t,w` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,w")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", node(self.level, i), v)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Path> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Grid node `i / 2^level`.
pub fn node(level: u32, i: usize) -> f64 {
    i as f64 / (1u64 << level) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn hat_s1(t: f64) -> f64 {
        if t <= 0.5 {
            t
        } else {
            1.0 - t
        }
    }

    #[test]
    fn constant_paths() {
        let zero = Path::constant(0.0, 3).unwrap();
        assert_eq!(zero.len(), 9);
        assert_eq!(zero.sup_norm(), 0.0);

        let pi = Path::constant(PI, 0).unwrap();
        assert_eq!(pi.values(), &[PI, PI]);
        assert_eq!(pi.sup_norm(), PI);

        let w5 = Path::constant(5.0 * PI, 4).unwrap();
        assert_eq!(w5.sup_norm(), 5.0 * PI);
        assert_eq!(Path::constant(-3.0 * PI, 2).unwrap().sup_norm(), 3.0 * PI);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Path::constant(f64::NAN, 2).is_err());
        assert!(Path::constant(f64::INFINITY, 2).is_err());
        assert!(matches!(
            Path::new(2, vec![0.0; 4]),
            Err(Error::GridLength { expected: 5, .. })
        ));
        assert!(Path::new(1, vec![0.0, f64::NAN, 1.0]).is_err());
        let w = Path::zero(3);
        assert!(matches!(w.refine(2), Err(Error::Coarsening { .. })));
    }

    #[test]
    fn s1_has_half_sup_norm() {
        let s1 = Path::from_fn(1, hat_s1).unwrap();
        assert_eq!(s1.sup_norm(), 0.5);
        let fine = s1.refine(3).unwrap();
        for (i, v) in fine.values().iter().enumerate() {
            assert_eq!(*v, hat_s1(node(3, i)));
        }
        assert_eq!(fine.sup_norm(), 0.5);
    }

    #[test]
    fn affine_examples() {
        let w = Path::from_fn(3, |t| t * t).unwrap();
        let z = Path::from_fn(2, |t| 1.0 - t).unwrap();
        assert_eq!(Path::affine(1.0, &w, 0.0, &z).values(), w.values());
        assert_eq!(Path::affine(0.0, &w, 0.0, &z).sup_norm(), 0.0);

        let u = std::f64::consts::LN_2;
        let sigma = (1.0 - (-2.0 * u).exp()).sqrt();
        let pushed = Path::affine(
            (-u).exp(),
            &Path::constant(PI, 4).unwrap(),
            sigma,
            &Path::zero(4),
        );
        for v in pushed.values() {
            assert!((v - PI / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn integral_and_interpolation() {
        let ramp = Path::from_fn(0, |t| t).unwrap();
        assert_eq!(ramp.integral(), 0.5);
        assert_eq!(ramp.value_at(0.25), 0.25);
        assert_eq!(Path::constant(2.0, 5).unwrap().integral(), 2.0);
        let s1 = Path::from_fn(1, hat_s1).unwrap();
        assert_eq!(s1.integral(), 0.25);
        assert_eq!(s1.value_at(0.75), 0.25);
    }

    #[test]
    fn json_and_csv() {
        let w = Path::from_fn(2, |t| 3.0 * t - 1.0).unwrap();
        let text = w.to_json().unwrap();
        assert_eq!(text, r#"{"level":2,"values":[-1.0,-0.25,0.5,1.25,2.0]}"#);
        assert_eq!(Path::from_json(&text).unwrap(), w);
        assert!(Path::from_json(r#"{"level":2,"values":[1.0]}"#).is_err());
        assert!(Path::from_json(r#"{"level":0,"values":[1.0,2.0],"x":1}"#).is_err());

        let mut buf = Vec::new();
        Path::from_fn(1, |t| t)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,w\n0,0\n0.5,0.5\n1,1\n");
    }

    fn arb_path() -> impl Strategy<Value = Path> {
        (0u32..6).prop_flat_map(|level| {
            prop::collection::vec(-1e3f64..1e3, grid_len(level))
                .prop_map(move |v| Path::new(level, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn affine_triangle_inequality(a in -10f64..10.0, b in -10f64..10.0, w in arb_path(), z in arb_path()) {
            let c = Path::affine(a, &w, b, &z);
            let bound = a.abs() * w.sup_norm() + b.abs() * z.sup_norm();
            prop_assert!(c.sup_norm() <= bound + 1e-12 * (1.0 + bound));
            prop_assert_eq!(c.sup_norm(), Path::affine_sup_norm(a, &w, b, &z));
        }

        #[test]
        fn refine_preserves_function(w in arb_path(), extra in 0u32..4) {
            let fine = w.refine(w.level() + extra).unwrap();
            prop_assert_eq!(fine.sup_norm(), w.sup_norm());
            prop_assert_eq!(w.refine(w.level()).unwrap(), w.clone());
            let ratio = 1usize << extra;
            for (i, v) in w.values().iter().enumerate() {
                prop_assert_eq!(fine.values()[i * ratio], *v);
            }
            prop_assert!((fine.integral() - w.integral()).abs() <= 1e-9 * (1.0 + w.sup_norm()));
        }
    }
}
