//! Shape, color and expression models from a handful of "registered"
//! meshes, some with patches of missing color.

use std::sync::Arc;

use gpmm::kernels::{multiscale_bspline, VertexField};
use gpmm::lowrank::{build_low_rank, LowRankOptions, RankSelection};
use gpmm::mesh::{Surface, TriangleMesh};
use gpmm::modelbuild::{
    build_color_model, build_expression_model, build_shape_model, default_color_prior, ColorSample, MorphableModel,
};
use gpmm::synthetic;
use nalgebra::DVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = synthetic::icosphere(40.0, 3);
    let surface = Arc::new(Surface::new(reference.clone()));
    let kernel = multiscale_bspline(-6, -4, vec![1.0, 0.5, 0.125])?;
    let opts = LowRankOptions { nystrom_points: Some(200), rank: RankSelection::Fixed(40), ..Default::default() };
    let (generator, _) = build_low_rank(&kernel, &VertexField::zeros(surface.clone()), &opts)?;

    // eight identities, each with a neutral and a "smiling" scan
    let neutrals: Vec<TriangleMesh> = (0..8).map(|s| generator.warp(&generator.sample(s))).collect::<Result<_, _>>()?;
    let smiles: Vec<TriangleMesh> = (0..8)
        .map(|s| generator.warp(&(generator.sample(s) + generator.sample(100 + s % 2) * 0.4)))
        .collect::<Result<_, _>>()?;

    let shape = build_shape_model(&neutrals, surface.clone())?;
    println!("shape model: rank {}, leading variance {:.2}", shape.rank(), shape.variances()[0]);

    let pairs: Vec<(&TriangleMesh, &TriangleMesh)> = neutrals.iter().zip(&smiles).collect();
    let expression = build_expression_model(&pairs, surface.clone())?;
    println!("expression model: rank {}", expression.rank());

    // skin tones vary per identity; the top of every other scan was not captured
    let colors: Vec<ColorSample> = (0..8)
        .map(|s| {
            let tone = 0.4 + 0.05 * s as f64;
            let c = reference.vertices().iter().map(|p| [tone + p.x / 400.0, tone * 0.8, tone * 0.7]).collect();
            let mask = reference.vertices().iter().map(|p| s % 2 == 0 || p.z < 25.0).collect();
            ColorSample::new(c, mask)
        })
        .collect::<Result<_, _>>()?;
    let color_opts = LowRankOptions { nystrom_points: Some(200), rank: RankSelection::Fixed(12), ..Default::default() };
    let (color, report, mean) = build_color_model(colors, surface, Arc::new(default_color_prior()), &color_opts)?;
    println!(
        "color model: rank {}, {:.4} of the variance, {} vertices never observed",
        color.rank(),
        report.retained_variance,
        mean.fallback.iter().filter(|f| **f).count()
    );

    let model = MorphableModel::assemble(shape, color, expression)?;
    let bytes = model.to_bytes()?;
    println!("model container: {} bytes", bytes.len());
    let zeros = |gp: &gpmm::lowrank::LowRankGp| DVector::<f64>::zeros(gp.rank());
    let mut smile = zeros(&model.expression);
    smile[0] = 2.0;
    let face = model.instance(&model.shape.sample(5), &zeros(&model.color), &smile)?;
    let c = face.colors().unwrap()[0];
    println!("instance: {} vertices, first color [{:.3} {:.3} {:.3}]", face.vertex_count(), c[0], c[1], c[2]);
    Ok(())
}
