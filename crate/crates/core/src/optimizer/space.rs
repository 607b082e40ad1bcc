use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::HyperParams;

/// A tunable hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "d")]
    Dim,
    #[serde(rename = "L")]
    Window,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "lambda")]
    LearningRate,
    #[serde(rename = "N")]
    Negatives,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::Dim,
        Param::Window,
        Param::Alpha,
        Param::LearningRate,
        Param::Negatives,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Param::Dim => "d",
            Param::Window => "L",
            Param::Alpha => "alpha",
            Param::LearningRate => "lambda",
            Param::Negatives => "N",
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Param::Dim | Param::Window | Param::Negatives)
    }

    pub fn get(self, hp: &HyperParams) -> f64 {
        match self {
            Param::Dim => hp.dim as f64,
            Param::Window => hp.window as f64,
            Param::Alpha => hp.alpha,
            Param::LearningRate => hp.learning_rate,
            Param::Negatives => hp.negatives as f64,
        }
    }

    /// Sets the parameter, rounding integer parameters to the nearest
    /// integer of at least 1.
    pub fn set(self, hp: &mut HyperParams, value: f64) {
        let int = || value.round().max(1.0) as usize;
        match self {
            Param::Dim => hp.dim = int(),
            Param::Window => hp.window = int(),
            Param::Alpha => hp.alpha = value,
            Param::LearningRate => hp.learning_rate = value,
            Param::Negatives => hp.negatives = int(),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" | "dim" => Ok(Param::Dim),
            "L" | "window" => Ok(Param::Window),
            "alpha" => Ok(Param::Alpha),
            "lambda" | "lr" | "learning_rate" => Ok(Param::LearningRate),
            "N" | "negatives" => Ok(Param::Negatives),
            other => Err(Error::InvalidArgument(format!(
                "unknown parameter {other:?}; expected one of d, L, alpha, lambda, N"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub param: Param,
    pub lower: f64,
    pub upper: f64,
    pub transform: Transform,
}

impl Dimension {
    pub fn new(param: Param, lower: f64, upper: f64, transform: Transform) -> Self {
        Dimension {
            param,
            lower,
            upper,
            transform,
        }
    }

    fn forward(&self, v: f64) -> f64 {
        match self.transform {
            Transform::Linear => v,
            Transform::Log => v.ln(),
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        let (a, b) = (self.forward(self.lower), self.forward(self.upper));
        if b == a {
            return 0.0;
        }
        ((self.forward(v) - a) / (b - a)).clamp(0.0, 1.0)
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (a, b) = (self.forward(self.lower), self.forward(self.upper));
        let x = a + u * (b - a);
        let v = match self.transform {
            Transform::Linear => x,
            Transform::Log => x.exp(),
        };
        let v = v.clamp(self.lower, self.upper);
        if self.param.is_integer() {
            v.round().clamp(self.lower.ceil(), self.upper.floor())
        } else {
            v
        }
    }
}

/// Box-bounded search space over the tunable parameters. The model type is
/// not a dimension; each model gets its own search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn unconstrained() -> Self {
        SearchSpace {
            dims: vec![
                Dimension::new(Param::Dim, 10.0, 500.0, Transform::Linear),
                Dimension::new(Param::Window, 1.0, 200.0, Transform::Linear),
                Dimension::new(Param::Alpha, -1.0, 1.0, Transform::Linear),
                Dimension::new(Param::LearningRate, 0.001, 0.1, Transform::Log),
                Dimension::new(Param::Negatives, 1.0, 200.0, Transform::Linear),
            ],
        }
    }

    /// Tighter bounds used under a runtime budget.
    pub fn constrained() -> Self {
        SearchSpace {
            dims: vec![
                Dimension::new(Param::Dim, 10.0, 200.0, Transform::Linear),
                Dimension::new(Param::Window, 1.0, 40.0, Transform::Linear),
                Dimension::new(Param::Alpha, -1.0, 1.0, Transform::Linear),
                Dimension::new(Param::LearningRate, 0.001, 0.1, Transform::Log),
                Dimension::new(Param::Negatives, 1.0, 40.0, Transform::Linear),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "unconstrained" => Ok(Self::unconstrained()),
            "constrained" => Ok(Self::constrained()),
            other => Err(Error::InvalidArgument(format!(
                "unknown space preset {other:?}; expected unconstrained or constrained"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidArgument("search space has no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if self.dims[..i].iter().any(|o| o.param == d.param) {
                return Err(Error::InvalidArgument(format!("parameter {} listed twice", d.param)));
            }
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower <= d.upper) {
                return Err(Error::InvalidArgument(format!(
                    "bad bounds [{}, {}] for {}",
                    d.lower, d.upper, d.param
                )));
            }
            if d.transform == Transform::Log && d.lower <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "log transform on {} needs lower > 0",
                    d.param
                )));
            }
            if d.param.is_integer() && (d.lower.ceil() > d.upper.floor() || d.lower < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "integer parameter {} needs an integer >= 1 inside its bounds",
                    d.param
                )));
            }
            if d.param == Param::Alpha && (d.lower < -1.0 || d.upper > 1.0) {
                return Err(Error::InvalidArgument("alpha bounds must lie in [-1, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dimension(&self, param: Param) -> Option<&Dimension> {
        self.dims.iter().find(|d| d.param == param)
    }

    /// Unit-cube coordinates of `hp`, clamped to the bounds.
    pub fn to_unit(&self, hp: &HyperParams) -> Vec<f64> {
        self.dims.iter().map(|d| d.to_unit(d.param.get(hp))).collect()
    }

    /// Hyperparameters for a unit-cube point. Parameters outside the space
    /// keep their values from `base`; integer parameters are rounded.
    pub fn from_unit(&self, u: &[f64], base: &HyperParams) -> HyperParams {
        let mut hp = *base;
        for (d, &x) in self.dims.iter().zip(u) {
            d.param.set(&mut hp, d.from_unit(x));
        }
        hp
    }

    /// Projects a unit point onto the values that can actually be
    /// evaluated, so integer dimensions land on grid points.
    pub fn snap(&self, u: &[f64], base: &HyperParams) -> Vec<f64> {
        self.to_unit(&self.from_unit(u, base))
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        self.dims.iter().all(|d| {
            let v = d.param.get(hp);
            v >= d.lower && v <= d.upper && (!d.param.is_integer() || v.fract() == 0.0)
        })
    }

    /// Unit-space neighbours of `u` at grid distance `radius`: integer
    /// dimensions move by `radius` steps, continuous ones by `radius *
    /// continuous_step`. Out-of-bounds moves are dropped.
    pub fn neighbours(&self, hp: &HyperParams, radius: usize, continuous_step: f64) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for d in &self.dims {
            for sign in [-1.0, 1.0] {
                let mut next = *hp;
                if d.param.is_integer() {
                    let v = d.param.get(hp) + sign * radius as f64;
                    if v < d.lower.ceil() || v > d.upper.floor() {
                        continue;
                    }
                    d.param.set(&mut next, v);
                } else {
                    let u = d.to_unit(d.param.get(hp)) + sign * radius as f64 * continuous_step;
                    if !(0.0..=1.0).contains(&u) {
                        continue;
                    }
                    d.param.set(&mut next, d.from_unit(u));
                }
                out.push(next);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_bounds() {
        let s = SearchSpace::unconstrained();
        assert_eq!(s.dimension(Param::Dim).map(|d| (d.lower, d.upper)), Some((10.0, 500.0)));
        assert_eq!(s.dimension(Param::Negatives).map(|d| d.upper), Some(200.0));
        let c = SearchSpace::constrained();
        assert_eq!(c.dimension(Param::Window).map(|d| d.upper), Some(40.0));
        assert_eq!(
            c.dimension(Param::LearningRate).map(|d| d.transform),
            Some(Transform::Log)
        );
        s.validate().unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn unit_roundtrip_and_rounding() {
        let s = SearchSpace::constrained();
        let base = HyperParams::default();
        let hp = s.from_unit(&[0.5, 0.5, 0.5, 0.5, 0.5], &base);
        assert_eq!(hp.dim, 105);
        assert_eq!(hp.window, 21);
        assert_eq!(hp.alpha, 0.0);
        // log midpoint of [0.001, 0.1]
        assert!((hp.learning_rate - 0.01).abs() < 1e-12);
        assert!(s.contains(&hp));
        let back = s.from_unit(&s.to_unit(&hp), &base);
        assert_eq!(back, hp);
        assert_eq!(s.from_unit(&[1.0; 5], &base).dim, 200);
        assert_eq!(s.from_unit(&[0.0; 5], &base).negatives, 1);
        assert_eq!(s.from_unit(&[-3.0, 7.0, 0.0, 0.0, 0.0], &base).window, 40);
    }

    #[test]
    fn neighbours_step_integer_dims() {
        let s = SearchSpace::constrained();
        let hp = HyperParams {
            dim: 10,
            window: 40,
            ..Default::default()
        };
        let n = s.neighbours(&hp, 1, 0.01);
        assert!(n.iter().any(|h| h.dim == 11));
        assert!(!n.iter().any(|h| h.dim == 9));
        assert!(!n.iter().any(|h| h.window == 41));
        assert!(n.iter().all(|h| s.contains(h)));
    }

    #[test]
    fn validation_rejects_bad_spaces() {
        let mut s = SearchSpace::constrained();
        s.dims[0].lower = 300.0;
        assert!(s.validate().is_err());
        let s = SearchSpace {
            dims: vec![Dimension::new(Param::LearningRate, 0.0, 0.1, Transform::Log)],
        };
        assert!(s.validate().is_err());
        assert!("zeta".parse::<Param>().is_err());
        assert_eq!("lambda".parse::<Param>().unwrap(), Param::LearningRate);
    }
}
