//! Gaussian process morphable models for non-rigid face registration.
//!
//! A deformation prior over a reference surface is described by a mean field
//! and a 3×3 matrix-valued kernel ([`kernels`]). The prior is approximated by
//! a truncated Karhunen-Loève expansion ([`lowrank`]), which turns
//! registration into a finite-dimensional MAP problem solved with L-BFGS
//! ([`optimize`], [`register`]). Registered meshes are then turned into shape,
//! color and expression models ([`modelbuild`]).
//!
//! The runnable programs under `examples/` walk through each stage; the
//! `gpmm` binary wraps the batch pipeline in [`pipeline`].

pub mod error;
pub mod kernels;
pub mod lowrank;
pub mod mesh;
pub mod modelbuild;
pub mod optimize;
pub mod pipeline;
pub mod register;
pub mod synthetic;

pub use error::{Error, Result};

/// A point in millimeters.
pub type Point3 = nalgebra::Point3<f64>;
/// A displacement in millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
/// RGB color with channels in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Maps `f` over `items` on the available cores, preserving order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    parallel_map_jobs(jobs, items, f)
}

/// [`parallel_map`] with an explicit worker count.
pub fn parallel_map_jobs<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}
