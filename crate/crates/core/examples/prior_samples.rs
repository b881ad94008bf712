//! Low-rank approximation of a B-spline deformation prior and random
//! shapes drawn from it.
//!
//! `cargo run --example prior_samples -- [out_dir]` also writes the samples
//! as PLY files.

use std::sync::Arc;

use gpmm::kernels::{multiscale_bspline, VertexField};
use gpmm::lowrank::{build_low_rank, LowRankOptions, RankSelection};
use gpmm::mesh::Surface;
use gpmm::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let surface = Arc::new(Surface::new(synthetic::icosphere(50.0, 3)));
    let kernel = multiscale_bspline(-6, -4, vec![2.0, 1.0, 0.25])?;

    for m in [50, 150, 400] {
        let opts = LowRankOptions {
            nystrom_points: Some(m),
            rank: RankSelection::Variance { fraction: 0.99, max_rank: None },
            ..Default::default()
        };
        let (_, report) = build_low_rank(&kernel, &VertexField::zeros(surface.clone()), &opts)?;
        println!("m = {m:>3}: rank {:>3} keeps {:.4} of the variance", report.rank, report.retained_variance);
    }

    let opts = LowRankOptions { nystrom_points: Some(300), rank: RankSelection::Fixed(60), ..Default::default() };
    let (gp, _) = build_low_rank(&kernel, &VertexField::zeros(surface.clone()), &opts)?;
    let top: Vec<String> = gp.variances().iter().take(5).map(|v| format!("{v:.1}")).collect();
    println!("leading variances: {}", top.join(", "));

    for seed in 0..4 {
        let shape = gp.warp(&gp.sample(seed))?;
        let moved: f64 = shape.vertices().iter().zip(surface.mesh().vertices()).map(|(a, b)| (a - b).norm()).sum::<f64>()
            / shape.vertex_count() as f64;
        println!("sample {seed}: mean displacement {moved:.2} mm");
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            shape.save(format!("{dir}/sample_{seed}.ply"))?;
        }
    }
    Ok(())
}
