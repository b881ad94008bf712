//! Registers a prior to a shape drawn from itself, with and without a hole
//! in the target.

use std::sync::Arc;

use gpmm::kernels::{multiscale_bspline, VertexField};
use gpmm::lowrank::{build_low_rank, farthest_point_sampling, LowRankOptions, RankSelection};
use gpmm::mesh::{LandmarkSet, Surface, TriangleMesh};
use gpmm::register::{register, RegistrationConfig};
use gpmm::synthetic;

fn landmarks(mesh: &TriangleMesh, ids: &[usize]) -> LandmarkSet {
    LandmarkSet::from_pairs(ids.iter().map(|&i| (format!("lm{i}"), mesh.vertices()[i]))).unwrap()
}

fn mean_distance(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
    a.vertices().iter().zip(b.vertices()).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.vertex_count() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = synthetic::bumpy_sphere(50.0, 0.08, 3);
    let surface = Arc::new(Surface::new(reference.clone()));
    let kernel = multiscale_bspline(-6, -4, vec![1.0, 0.5, 0.125])?;
    let opts = LowRankOptions { nystrom_points: Some(300), rank: RankSelection::Fixed(60), ..Default::default() };
    let (prior, _) = build_low_rank(&kernel, &VertexField::zeros(surface), &opts)?;

    let target = prior.warp(&prior.sample(7))?;
    let ids = farthest_point_sampling(reference.vertices(), 10);
    let (lr, lt) = (landmarks(&reference, &ids), landmarks(&target, &ids));
    println!("{} vertices, mean deformation {:.2} mm", reference.vertex_count(), mean_distance(&reference, &target));

    let cfg = RegistrationConfig::default();
    let fit = register(&prior, &target, &lr, &lt, &cfg)?;
    for s in &fit.stages {
        println!(
            "  eta {:<7.0e} objective {:>10.3} -> {:<10.3} {:>3} iterations, {} active",
            s.eta, s.initial_objective, s.final_objective, s.iterations, s.active_vertices
        );
    }
    println!("full target: vertex error {:.3} mm", mean_distance(&fit.mesh, &target));

    let axis = nalgebra::Vector3::new(0.3, 0.5, 0.8).normalize();
    let holed = synthetic::compact(&target.retain_triangles(|_, t| {
        t.iter().all(|&v| target.vertices()[v].coords.dot(&axis) < 35.0)
    }));
    let fit = register(&prior, &holed, &lr, &lt, &cfg)?;
    let inactive = fit.active.iter().filter(|a| !**a).count();
    println!(
        "target with a hole: vertex error {:.3} mm, {inactive} vertices ignored as outliers",
        mean_distance(&fit.mesh, &target)
    );
    Ok(())
}
