//! Multi-scale cubic B-spline kernels.
//!
//! Level `j` places a tensor-product cubic B-spline on the lattice
//! `2^{-j} ℤ³` (millimeters), so its correlation length is about
//! `4 · 2^{-j}` mm; negative levels are coarse.

use std::sync::Arc;

use super::{Isotropic, Location, ScalarKernel};
use crate::{Error, Point3, Result};

/// Centered uniform cubic B-spline with support `[-2, 2]`.
pub fn b3(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let r = 2.0 - a;
        r * r * r / 6.0
    } else {
        0.0
    }
}

/// `Σ_k b3(u − k) b3(v − k)` over the integers where both factors can be
/// non-zero.
fn axis_sum(u: f64, v: f64) -> f64 {
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    if hi - lo >= 4.0 {
        return 0.0;
    }
    let first = (hi - 2.0).ceil() as i64;
    let last = (lo + 2.0).floor() as i64;
    (first..=last).map(|k| b3(u - k as f64) * b3(v - k as f64)).sum()
}

/// Single-level kernel `k_j(x,x′) = Σ_k 2^{2−j} ψ(2^j x − k) ψ(2^j x′ − k)`
/// with `ψ(x) = b3(x₁) b3(x₂) b3(x₃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSplineLevel {
    pub level: i32,
}

impl BSplineLevel {
    pub fn new(level: i32) -> Self {
        Self { level }
    }

    pub fn eval_points(&self, x: &Point3, y: &Point3) -> f64 {
        let s = 2f64.powi(self.level);
        // the lattice sum factorizes over axes
        let mut prod = 2f64.powi(2 - self.level);
        for a in 0..3 {
            let g = axis_sum(s * x[a], s * y[a]);
            if g == 0.0 {
                return 0.0;
            }
            prod *= g;
        }
        prod
    }
}

impl ScalarKernel for BSplineLevel {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.eval_points(&x.point, &y.point)
    }
}

/// `Σ_{j=j_lo}^{j_hi} s_j k_j(x,x′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleBSpline {
    pub j_lo: i32,
    pub j_hi: i32,
    pub scales: Vec<f64>,
}

impl MultiscaleBSpline {
    pub fn new(j_lo: i32, j_hi: i32, scales: Vec<f64>) -> Result<Self> {
        if j_lo > j_hi {
            return Err(Error::InvalidInput(format!("level range {j_lo}..={j_hi} is empty")));
        }
        let levels = (j_hi - j_lo + 1) as usize;
        if scales.len() != levels {
            return Err(Error::InvalidInput(format!("{} scales given for {levels} levels", scales.len())));
        }
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!("level scale must be positive, got {s}")));
        }
        Ok(Self { j_lo, j_hi, scales })
    }
}

impl ScalarKernel for MultiscaleBSpline {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        (self.j_lo..=self.j_hi)
            .zip(&self.scales)
            .map(|(j, s)| s * BSplineLevel::new(j).eval_points(&x.point, &y.point))
            .sum()
    }
}

/// Isotropic multi-scale kernel `I · Σ_j s_j k_j`.
pub fn multiscale_bspline(j_lo: i32, j_hi: i32, scales: Vec<f64>) -> Result<Isotropic> {
    Ok(Isotropic(Arc::new(MultiscaleBSpline::new(j_lo, j_hi, scales)?)))
}
