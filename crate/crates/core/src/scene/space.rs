use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box-constrained parameter class Θ with a per-component grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: Vec<f64>,
}

impl ParameterSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, step: Vec<f64>) -> Result<Self> {
        let s = ParameterSpace { lower, upper, step };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.lower.len();
        if j == 0 || self.upper.len() != j || self.step.len() != j {
            return Err(Error::Invariant(
                "parameter_space: lower, upper and step must be nonempty and of equal length"
                    .into(),
            ));
        }
        for k in 0..j {
            let (lo, hi, st) = (self.lower[k], self.upper[k], self.step[k]);
            if !(lo.is_finite() && hi.is_finite() && st.is_finite()) {
                return Err(Error::Invariant(format!(
                    "parameter_space: component {k} must be finite"
                )));
            }
            if lo >= hi {
                return Err(Error::Invariant(format!(
                    "parameter_space: component {k} needs lower < upper"
                )));
            }
            if st <= 0.0 {
                return Err(Error::Invariant(format!(
                    "parameter_space: component {k} needs step > 0"
                )));
            }
            if st > hi - lo {
                return Err(Error::Invariant(format!(
                    "parameter_space: component {k} grid has fewer than 2 points"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        self.check(values).is_ok()
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "θ has {} components, parameter space has {}",
                values.len(),
                self.dim()
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v >= self.lower[k] && *v <= self.upper[k]) {
                return Err(Error::OutOfBounds {
                    component: k,
                    value: *v,
                    lower: self.lower[k],
                    upper: self.upper[k],
                });
            }
        }
        Ok(())
    }

    /// Clamps `values` into the box `[lower + margin, upper − margin]`.
    pub fn project(&self, values: &mut [f64], margin: f64) {
        for (k, v) in values.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k] + margin, self.upper[k] - margin);
        }
    }
}

/// A point θ of a parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    values: Vec<f64>,
    space: ParameterSpace,
}

impl ParameterPoint {
    pub fn new(values: Vec<f64>, space: ParameterSpace) -> Result<Self> {
        space.check(&values)?;
        Ok(ParameterPoint { values, space })
    }

    /// Builds a point without the bounds check; callers consuming it still check.
    pub fn new_unchecked(values: Vec<f64>, space: ParameterSpace) -> Self {
        ParameterPoint { values, space }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn check_bounds(&self) -> Result<()> {
        self.space.check(&self.values)
    }

    /// θ + Δ, required to stay inside the space.
    pub fn shifted(&self, delta: &[f64]) -> Result<ParameterPoint> {
        if delta.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "Δ has {} components, θ has {}",
                delta.len(),
                self.dim()
            )));
        }
        let values = self.values.iter().zip(delta).map(|(a, b)| a + b).collect();
        ParameterPoint::new(values, self.space.clone())
    }
}
