//! Conditioning a prior on a few landmark displacements.

use std::sync::Arc;

use gpmm::kernels::{multiscale_bspline, VertexField};
use gpmm::lowrank::{build_low_rank, LandmarkObservation, LowRankOptions, RankSelection};
use gpmm::mesh::Surface;
use gpmm::{synthetic, Vec3};
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let surface = Arc::new(Surface::new(synthetic::icosphere(30.0, 2)));
    let mesh = surface.mesh();
    let kernel = multiscale_bspline(-6, -4, vec![16.0, 8.0, 2.0])?;
    let opts = LowRankOptions { rank: RankSelection::Fixed(60), ..Default::default() };
    let (prior, _) = build_low_rank(&kernel, &VertexField::zeros(surface.clone()), &opts)?;

    // pull the north pole up and pinch two points on the equator
    let pinned = [(0, Vec3::new(0.0, 0.0, 4.0)), (20, Vec3::new(-2.0, 0.0, 0.0)), (45, Vec3::new(0.0, 2.0, 0.0))];
    let obs: Vec<LandmarkObservation> = pinned
        .iter()
        .map(|&(i, u)| LandmarkObservation::new(mesh.vertices()[i], u, 0.1))
        .collect::<gpmm::Result<_>>()?;
    let post = prior.posterior(&obs)?;
    let mean = DVector::zeros(post.rank());

    println!("vertex  observed             posterior mean        variance prior -> posterior");
    for &(i, u) in &pinned {
        let fit = post.evaluate_vertex(&mean, i)?;
        println!(
            "{i:>6}  [{:5.2} {:5.2} {:5.2}]  [{:5.2} {:5.2} {:5.2}]  {:8.3} -> {:.4}",
            u.x,
            u.y,
            u.z,
            fit.x,
            fit.y,
            fit.z,
            prior.variance_trace(i),
            post.variance_trace(i)
        );
    }
    let far = mesh.vertices().iter().enumerate().min_by(|a, b| a.1.z.total_cmp(&b.1.z)).unwrap().0;
    println!(
        "south pole {far}: variance {:.3} -> {:.3}, displacement {:.3} mm",
        prior.variance_trace(far),
        post.variance_trace(far),
        post.evaluate_vertex(&mean, far)?.norm()
    );
    Ok(())
}
