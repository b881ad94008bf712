//! Building kernels from parts and checking that their Gram matrices stay
//! positive semi-definite.

use std::path::Path;
use std::sync::Arc;

use gpmm::kernels::{
    eigen_extremes, matrix_gram, mirror_symmetrize, MultiscaleBSpline, squared_exponential, Kernel,
    Location,
};
use gpmm::kernels::config::KernelSpec;
use gpmm::mesh::Surface;
use gpmm::synthetic;

fn report(name: &str, kernel: &Kernel, points: &[Location]) {
    let gram = matrix_gram(kernel.clone().into_matrix().as_ref(), points);
    let (min, max) = eigen_extremes(&gram);
    println!("{name:<28} {}x{} Gram, eigenvalues in [{min:+.2e}, {max:.3e}]", gram.nrows(), gram.ncols());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let surface = Arc::new(Surface::new(synthetic::icosphere(40.0, 2)));
    let mesh = surface.mesh();
    let points: Vec<Location> = (0..mesh.vertex_count()).step_by(3).map(|i| Location::vertex(mesh, i)).collect();

    let bspline = Kernel::scalar(MultiscaleBSpline::new(-6, -4, vec![16.0, 8.0, 2.0])?);
    let smooth = Kernel::scalar(squared_exponential(4.0, 15.0)?);
    report("multiscale B-spline", &bspline, &points);
    report("squared exponential", &smooth, &points);
    report("sum", &bspline.add(&smooth)?, &points);
    report("product", &bspline.multiply(&smooth)?, &points);
    report("scaled by 0.25", &bspline.scale(0.25)?, &points);
    report("mirror symmetric", &Kernel::matrix(mirror_symmetrize(&bspline)?), &points);

    if let Err(e) = bspline.scale(-1.0) {
        println!("negative scale rejected: {e}");
    }

    // the same tree as a kernel file
    let spec = KernelSpec::from_json(
        r#"{"type": "add", "terms": [
              {"type": "mirror_symmetric",
               "child": {"type": "bspline_multiscale", "j_lo": -6, "j_hi": -4, "scales": [16, 8, 2]}},
              {"type": "scale", "factor": 0.5,
               "kernel": {"type": "squared_exponential", "scaling": 4, "sigma": 15}}]}"#,
        "inline",
    )?;
    let built = spec.build(&surface, Path::new("."))?;
    report("from JSON", &built.kernel, &points);
    Ok(())
}
