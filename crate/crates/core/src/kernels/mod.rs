//! Scalar and 3×3 matrix-valued covariance functions over the reference
//! surface, and the combinators used to assemble a face prior from them.
//!
//! Kernels are evaluated at [`Location`]s: a point in space, optionally tagged
//! with its barycentric position on the reference mesh. Kernels built from
//! per-vertex data (indicator maps, sample covariances) need that position
//! and project untagged points onto the reference surface themselves.

mod bspline;
mod combinators;
pub mod config;
mod face;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use bspline::{b3, multiscale_bspline, BSplineLevel, MultiscaleBSpline};
pub use combinators::{Isotropic, MatrixScaled, MatrixSum, Modulated, Outer, Product, Scaled, Sum, Zero};
pub use face::{
    face_prior_kernel, mirror_symmetrize, sample_covariance_kernel, spatially_varying,
    squared_exponential, FacePrior, IndicatorMap, MirrorSymmetric, SampleCovariance, SpatiallyVarying,
    SquaredExponential, VertexField,
};

use crate::mesh::{Surface, SurfacePoint, TriangleMesh};
use crate::{Error, Mat3, Point3, Result};

/// Barycentric position on the reference mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
}

impl Site {
    pub fn vertex(i: usize) -> Self {
        Self { vertices: [i, i, i], weights: [1.0, 0.0, 0.0] }
    }

    pub fn from_surface_point(mesh: &TriangleMesh, sp: &SurfacePoint) -> Self {
        Self { vertices: mesh.triangles()[sp.triangle], weights: sp.barycentric }
    }

    /// Vertex carrying the largest weight; first one on ties.
    pub fn dominant_vertex(&self) -> usize {
        let mut k = 0;
        for j in 1..3 {
            if self.weights[j] > self.weights[k] {
                k = j;
            }
        }
        self.vertices[k]
    }
}

/// Kernel argument: a point, plus its reference-surface site when known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub point: Point3,
    pub site: Option<Site>,
}

impl Location {
    pub fn free(point: Point3) -> Self {
        Self { point, site: None }
    }

    pub fn vertex(mesh: &TriangleMesh, i: usize) -> Self {
        Self { point: mesh.vertices()[i], site: Some(Site::vertex(i)) }
    }

    pub fn on_surface(mesh: &TriangleMesh, sp: &SurfacePoint) -> Self {
        Self { point: sp.point, site: Some(Site::from_surface_point(mesh, sp)) }
    }

    /// Projects `point` onto `surface` and tags the result.
    pub fn project(surface: &Surface, point: &Point3) -> Result<Self> {
        let sp = surface.closest_point(point)?;
        Ok(Self::on_surface(surface.mesh(), &sp))
    }

    /// `(x₁, x₂, x₃) ↦ (−x₁, x₂, x₃)`; the mirrored point loses its site.
    pub fn mirrored(&self) -> Self {
        Self::free(Point3::new(-self.point.x, self.point.y, self.point.z))
    }
}

/// Symmetric positive semi-definite function `Ω × Ω → ℝ`.
pub trait ScalarKernel: Send + Sync + fmt::Debug {
    fn eval(&self, x: &Location, y: &Location) -> f64;
}

/// Matrix-valued covariance `Ω × Ω → ℝ^{3×3}` with `K(x,y) = K(y,x)ᵀ`.
pub trait MatrixKernel: Send + Sync + fmt::Debug {
    fn eval(&self, x: &Location, y: &Location) -> Mat3;

    /// The scalar kernel `k` when this kernel is `k · I`.
    fn scalar_part(&self) -> Option<Arc<dyn ScalarKernel>> {
        None
    }
}

/// A kernel of either kind, for kind-checked composition.
#[derive(Debug, Clone)]
pub enum Kernel {
    Scalar(Arc<dyn ScalarKernel>),
    Matrix(Arc<dyn MatrixKernel>),
}

impl Kernel {
    pub fn scalar(k: impl ScalarKernel + 'static) -> Self {
        Kernel::Scalar(Arc::new(k))
    }

    pub fn matrix(k: impl MatrixKernel + 'static) -> Self {
        Kernel::Matrix(Arc::new(k))
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Kernel::Scalar(_))
    }

    /// `g + h`; both operands must be of the same kind.
    pub fn add(&self, other: &Kernel) -> Result<Kernel> {
        match (self, other) {
            (Kernel::Scalar(a), Kernel::Scalar(b)) => Ok(Kernel::scalar(Sum(a.clone(), b.clone()))),
            (Kernel::Matrix(a), Kernel::Matrix(b)) => Ok(Kernel::matrix(MatrixSum(a.clone(), b.clone()))),
            _ => Err(Error::KernelKind("cannot add a scalar kernel to a matrix kernel".into())),
        }
    }

    /// `α g` for `α ≥ 0`.
    pub fn scale(&self, alpha: f64) -> Result<Kernel> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!("kernel scale must be a non-negative number, got {alpha}")));
        }
        Ok(match self {
            Kernel::Scalar(k) => Kernel::scalar(Scaled(alpha, k.clone())),
            Kernel::Matrix(k) => Kernel::matrix(MatrixScaled(alpha, k.clone())),
        })
    }

    /// Pointwise product. Scalar × scalar and matrix × scalar are defined;
    /// matrix × matrix is not.
    pub fn multiply(&self, other: &Kernel) -> Result<Kernel> {
        match (self, other) {
            (Kernel::Scalar(a), Kernel::Scalar(b)) => Ok(Kernel::scalar(Product(a.clone(), b.clone()))),
            (Kernel::Matrix(m), Kernel::Scalar(s)) | (Kernel::Scalar(s), Kernel::Matrix(m)) => {
                Ok(Kernel::matrix(Modulated(m.clone(), s.clone())))
            }
            (Kernel::Matrix(_), Kernel::Matrix(_)) => {
                Err(Error::KernelKind("product of two matrix kernels is not defined".into()))
            }
        }
    }

    /// Matrix form; scalar kernels become `k · I`.
    pub fn into_matrix(self) -> Arc<dyn MatrixKernel> {
        match self {
            Kernel::Scalar(k) => Arc::new(Isotropic(k)),
            Kernel::Matrix(k) => k,
        }
    }

    /// Scalar form; isotropic matrix kernels yield their scalar part.
    pub fn as_scalar(&self) -> Option<Arc<dyn ScalarKernel>> {
        match self {
            Kernel::Scalar(k) => Some(k.clone()),
            Kernel::Matrix(k) => k.scalar_part(),
        }
    }
}

/// `k(x,x′) = f(x) f(x′)` for an arbitrary real function `f`.
pub fn outer(f: impl Fn(&Location) -> f64 + Send + Sync + 'static) -> Kernel {
    Kernel::scalar(Outer::new(f))
}

/// `n × n` Gram matrix.
pub fn scalar_gram(k: &dyn ScalarKernel, points: &[Location]) -> DMatrix<f64> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k.eval(&points[i], &points[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `3n × 3n` Gram matrix, block `(i, j)` = `K(xᵢ, xⱼ)`.
pub fn matrix_gram(k: &dyn MatrixKernel, points: &[Location]) -> DMatrix<f64> {
    let n = points.len();
    let mut g = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in i..n {
            let b = k.eval(&points[i], &points[j]);
            for r in 0..3 {
                for c in 0..3 {
                    g[(3 * i + r, 3 * j + c)] = b[(r, c)];
                    g[(3 * j + c, 3 * i + r)] = b[(r, c)];
                }
            }
        }
    }
    g
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes(gram: &DMatrix<f64>) -> (f64, f64) {
    let e = gram.clone().symmetric_eigenvalues();
    let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// PSD test used throughout: `min eig ≥ −tol · max eig`.
pub fn is_psd(gram: &DMatrix<f64>, tol: f64) -> bool {
    let (min, max) = eigen_extremes(gram);
    min >= -tol * max.max(0.0)
}
