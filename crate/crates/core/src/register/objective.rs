//! The registration energy `E(α) = η‖α‖² + σ⁻² Σ ρ(‖CP(yᵢ) − yᵢ‖)` with
//! `yᵢ = xᵢ + ũ(α, xᵢ)`.

use nalgebra::DVector;

use crate::lowrank::LowRankGp;
use crate::mesh::Surface;
use crate::{Error, Point3, Result, Vec3};

/// Huber loss: `x²/2` inside `δ`, `δ(|x| − δ/2)` outside.
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a < delta {
        0.5 * a * a
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// `ρ′(d)/d`.
fn huber_weight(d: f64, delta: f64) -> f64 {
    if d < delta {
        1.0
    } else {
        delta / d
    }
}

/// One annealing stage's objective.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub model: &'a LowRankGp,
    pub target: &'a Surface,
    pub eta: f64,
    pub sigma: f64,
    pub huber_delta: f64,
    pub active: &'a [bool],
}

impl<'a> Objective<'a> {
    /// Warped positions of all reference vertices.
    pub fn positions(&self, alpha: &DVector<f64>) -> Result<Vec<Point3>> {
        let u = self.model.field(alpha)?;
        Ok(self.model.reference_mesh().vertices().iter().enumerate().map(|(i, x)| x + u.fixed_rows::<3>(3 * i)).collect())
    }

    /// Closest target points of the active vertices (`None` elsewhere).
    pub fn correspondences(&self, alpha: &DVector<f64>) -> Result<Vec<Option<Point3>>> {
        let y = self.positions(alpha)?;
        let idx: Vec<usize> = (0..y.len()).collect();
        crate::parallel_map(&idx, |&i| {
            if self.active[i] {
                self.target.closest_point(&y[i]).map(|sp| Some(sp.point))
            } else {
                Ok(None)
            }
        })
        .into_iter()
        .collect()
    }

    /// Value and gradient, re-finding closest points at `alpha`.
    pub fn evaluate(&self, alpha: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let cps = self.correspondences(alpha)?;
        self.evaluate_with(alpha, &cps)
    }

    /// Value and gradient with the given correspondences held fixed.
    pub fn evaluate_with(&self, alpha: &DVector<f64>, correspondences: &[Option<Point3>]) -> Result<(f64, DVector<f64>)> {
        let n = self.model.vertex_count();
        if self.active.len() != n || correspondences.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.active.len().min(correspondences.len()) });
        }
        if !self.active.iter().any(|&a| a) {
            return Err(Error::InvalidInput("registration objective has no active vertices".into()));
        }
        let y = self.positions(alpha)?;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        let mut data = 0.0;
        let mut g_field = DVector::<f64>::zeros(3 * n);
        for i in 0..n {
            let (true, Some(c)) = (self.active[i], correspondences[i]) else { continue };
            let r: Vec3 = y[i] - c;
            let d = r.norm();
            data += huber(d, self.huber_delta);
            g_field.fixed_rows_mut::<3>(3 * i).copy_from(&(r * (huber_weight(d, self.huber_delta) * inv_var)));
        }
        let value = self.eta * alpha.norm_squared() + inv_var * data;
        let grad = alpha * (2.0 * self.eta) + self.model.scaled_basis().tr_mul(&g_field);
        Ok((value, grad))
    }
}

/// Active-vertex mask for the fit `ũ(α, ·)`: vertices within `threshold`
/// of the target whose closest point is not on the target boundary.
pub fn filter_outliers(model: &LowRankGp, alpha: &DVector<f64>, target: &Surface, threshold: f64) -> Result<Vec<bool>> {
    let u = model.field(alpha)?;
    let verts = model.reference_mesh().vertices();
    let idx: Vec<usize> = (0..verts.len()).collect();
    crate::parallel_map(&idx, |&i| {
        let y = verts[i] + u.fixed_rows::<3>(3 * i);
        target.closest_point(&y).map(|sp| sp.distance <= threshold && !sp.on_boundary)
    })
    .into_iter()
    .collect()
}
