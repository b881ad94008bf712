//! The L-BFGS minimizer on its own: Rosenbrock and a badly scaled quadratic.

use gpmm::optimize::{minimize, OptimizerConfig};
use nalgebra::DVector;

fn rosenbrock(x: &DVector<f64>) -> (f64, DVector<f64>) {
    let mut f = 0.0;
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() - 1 {
        let (a, b) = (1.0 - x[i], x[i + 1] - x[i] * x[i]);
        f += a * a + 100.0 * b * b;
        g[i] += -2.0 * a - 400.0 * x[i] * b;
        g[i + 1] += 200.0 * b;
    }
    (f, g)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = OptimizerConfig { max_iterations: 2000, gradient_tolerance: 1e-8, ..Default::default() };
    for n in [2, 10, 50] {
        let start = DVector::from_fn(n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 });
        let m = minimize(rosenbrock, start, &cfg)?;
        println!(
            "rosenbrock n={n:<3} f = {:.2e} after {} iterations, {} evaluations ({:?})",
            m.value, m.iterations, m.evaluations, m.stop
        );
    }

    let scales = DVector::from_fn(30, |i, _| 10f64.powf(i as f64 / 29.0 * 4.0));
    let quad = |x: &DVector<f64>| (0.5 * x.dot(&scales.component_mul(x)), scales.component_mul(x));
    let m = minimize(quad, DVector::from_element(30, 1.0), &cfg)?;
    println!("quadratic, condition 1e4: f = {:.2e} after {} iterations ({:?})", m.value, m.iterations, m.stop);
    Ok(())
}
