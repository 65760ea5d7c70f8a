//! Angles stored as an integer multiple of `β` plus a small residual.

use serde::{Deserialize, Serialize};

/// An angle `base + m·β + r` with `|r| ≤ β/2`.
///
/// Stepping by `±β` only touches `m`, so residuals of order `σ` survive long
/// runs of `±β` steps without being absorbed into a large float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredAngle {
    pub m: i64,
    pub r: f64,
    pub base: f64,
}

impl AnchoredAngle {
    pub fn new(base: f64) -> Self {
        Self { m: 0, r: 0.0, base }
    }

    /// Decomposes an absolute angle against `base` and step `beta`.
    pub fn from_value(value: f64, base: f64, beta: f64) -> Self {
        Self {
            m: 0,
            r: value - base,
            base,
        }
        .normalized(beta)
    }

    /// Collapsed value (loses the residual's relative precision).
    pub fn value(&self, beta: f64) -> f64 {
        self.base + self.m as f64 * beta + self.r
    }

    /// Adds `sign·β + residual`, keeping `|r| ≤ β/2`.
    pub fn step(&self, sign: i8, residual: f64, beta: f64) -> Self {
        Self {
            m: self.m + sign as i64,
            r: self.r + residual,
            base: self.base,
        }
        .normalized(beta)
    }

    fn normalized(mut self, beta: f64) -> Self {
        if self.r.abs() > 0.5 * beta {
            let k = (self.r / beta).round();
            self.m += k as i64;
            self.r -= k * beta;
        }
        self
    }
}
