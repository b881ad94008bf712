//! A smooth prior cannot open a closed mouth from a few landmarks; adding
//! the covariance of an open and a closed example fixes that.

use std::sync::Arc;

use gpmm::kernels::{sample_covariance_kernel, squared_exponential, Kernel, VertexField};
use gpmm::lowrank::{build_low_rank, LandmarkObservation, LowRankGp, LowRankOptions, RankSelection};
use gpmm::mesh::Surface;
use gpmm::{synthetic, Point3, Vec3};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (mesh, lower) = synthetic::jaw(21, 4, 2.0, 0.5);
    let surface = Arc::new(Surface::new(mesh.clone()));
    let field = |f: &dyn Fn(&Point3, bool) -> Vec3| {
        VertexField::new(surface.clone(), mesh.vertices().iter().zip(&lower).map(|(p, &l)| f(p, l)).collect())
    };
    let open = field(&|p, l| if l { Vec3::new(0.0, -8.0 - 0.2 * p.y.abs(), -2.0) } else { Vec3::zeros() })?;
    let closed = field(&|_, l| if l { Vec3::new(0.0, 0.25, 0.0) } else { Vec3::new(0.0, -0.25, 0.0) })?;

    let (mean, expression) = sample_covariance_kernel(&[open.clone(), closed])?;
    let smooth = Kernel::scalar(squared_exponential(1.0, 10.0)?);
    let augmented = Kernel::matrix(expression).add(&Kernel::Matrix(smooth.clone().into_matrix()))?;
    let opts = LowRankOptions { rank: RankSelection::Variance { fraction: 1.0, max_rank: None }, ..Default::default() };
    let priors = [
        ("smooth", build_low_rank(smooth.into_matrix().as_ref(), &VertexField::zeros(surface.clone()), &opts)?.0),
        ("smooth + expression", build_low_rank(augmented.into_matrix().as_ref(), &mean, &opts)?.0),
    ];

    // two landmarks on each lip
    let ids = [26, 36, 110, 120];
    let obs: Vec<LandmarkObservation> = ids
        .iter()
        .map(|&i| LandmarkObservation::new(mesh.vertices()[i], open.values()[i], 0.01))
        .collect::<gpmm::Result<_>>()?;
    for (name, prior) in &priors {
        let post: LowRankGp = prior.posterior(&obs)?;
        let fit = post.deformation_field(&DVector::zeros(post.rank()))?;
        let err = fit.iter().zip(open.values()).map(|(a, b)| (a - b).norm()).sum::<f64>() / fit.len() as f64;
        println!("{name:<20} rank {:>3}: mean error to the open mouth {err:.4} mm", prior.rank());
    }
    Ok(())
}
