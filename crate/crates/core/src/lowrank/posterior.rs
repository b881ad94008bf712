use nalgebra::{DMatrix, DVector};

use super::{reorthonormalize_with_basis, LowRankGp};
use crate::kernels::Location;
use crate::{Error, Point3, Result, Vec3};

/// Noisy observation `û = u(l_R) + ε`, `ε ~ N(0, σ² I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkObservation {
    pub reference_point: Point3,
    pub deformation: Vec3,
    /// Standard deviation in millimeters.
    pub sigma: f64,
}

impl LandmarkObservation {
    pub fn new(reference_point: Point3, deformation: Vec3, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("observation noise must be positive, got {sigma}")));
        }
        Ok(Self { reference_point, deformation, sigma })
    }
}

impl LowRankGp {
    /// Gaussian process conditioned on the observations, computed in
    /// coefficient space and returned in Karhunen-Loève form.
    pub fn posterior(&self, observations: &[LandmarkObservation]) -> Result<LowRankGp> {
        if observations.is_empty() {
            return Ok(self.clone());
        }
        let r = self.rank();
        let mut precision = DMatrix::<f64>::identity(r, r);
        let mut rhs = DVector::<f64>::zeros(r);
        for obs in observations {
            if !(obs.sigma > 0.0) {
                return Err(Error::InvalidInput(format!("observation noise must be positive, got {}", obs.sigma)));
            }
            let site = self.site_of(&Location::free(obs.reference_point))?;
            let a = self.design_rows(&site);
            let w = 1.0 / (obs.sigma * obs.sigma);
            precision += a.tr_mul(&a) * w;
            rhs += a.tr_mul(&(obs.deformation - self.mean_at(&site))) * w;
        }
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("posterior precision is not positive definite".into()))?;
        let coeff = chol.solve(&rhs);
        let cov = chol.inverse();
        let mean = self.mean() + self.scaled_basis() * &coeff;

        // D P⁻¹ D with D = diag(√λ), rotated back into the prior basis.
        let d = self.variances().map(f64::sqrt);
        let mut core = cov;
        for i in 0..r {
            for j in 0..r {
                core[(i, j)] *= d[i] * d[j];
            }
        }
        let (basis, variances) = reorthonormalize_with_basis(self.basis(), core);
        LowRankGp::new(self.reference().clone(), mean, basis, variances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{build_low_rank, LowRankOptions, RankSelection};
    use crate::kernels::{squared_exponential, Kernel, VertexField};
    use crate::mesh::Surface;
    use crate::synthetic;
    use std::sync::Arc;

    fn model() -> LowRankGp {
        let s = Arc::new(Surface::new(synthetic::icosphere(20.0, 2)));
        let k = Kernel::scalar(squared_exponential(4.0, 15.0).unwrap()).into_matrix();
        let opts = LowRankOptions { rank: RankSelection::Fixed(40), ..Default::default() };
        build_low_rank(k.as_ref(), &VertexField::zeros(s), &opts).unwrap().0
    }

    #[test]
    fn uninformative_observation_keeps_mean() {
        let gp = model();
        let p = gp.reference_mesh().vertices()[7];
        let post = gp.posterior(&[LandmarkObservation::new(p, Vec3::zeros(), 1e6).unwrap()]).unwrap();
        assert!((post.mean() - gp.mean()).amax() <= 1e-3);
    }

    #[test]
    fn tight_observations_are_interpolated() {
        let gp = model();
        let mesh = gp.reference_mesh();
        let obs: Vec<_> = [(0, Vec3::new(1.0, 0.0, 0.0)), (50, Vec3::new(0.0, -1.0, 0.5)), (120, Vec3::new(0.3, 0.3, 0.3))]
            .iter()
            .map(|&(v, u)| LandmarkObservation::new(mesh.vertices()[v], u, 1e-4).unwrap())
            .collect();
        let post = gp.posterior(&obs).unwrap();
        let zero = DVector::zeros(post.rank());
        for o in &obs {
            let got = post.evaluate(&zero, &Location::free(o.reference_point)).unwrap();
            assert!((got - o.deformation).norm() <= 1e-2, "{got} vs {}", o.deformation);
        }
        for v in 0..mesh.vertex_count() {
            assert!(post.variance_trace(v) <= gp.variance_trace(v) + 1e-9);
        }
    }

    #[test]
    fn no_observations_is_identity() {
        let gp = model();
        let post = gp.posterior(&[]).unwrap();
        assert_eq!(post.variances(), gp.variances());
    }

    #[test]
    fn bad_noise_rejected() {
        assert!(LandmarkObservation::new(Point3::origin(), Vec3::zeros(), 0.0).is_err());
    }
}
