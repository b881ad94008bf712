//! Statistical models built from registered meshes: shape and expression
//! PCA, the missing-data color model, and landmark accuracy reports.

mod color;
mod evaluation;

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub use color::{
    build_color_model, color_mean_missing, default_color_prior, ColorCovariance, ColorMean, ColorSample,
};
pub use evaluation::{evaluate_landmark_sets, evaluate_landmarks, LandmarkReport, RegionMap, RegionStats};

use crate::lowrank::{container, flatten, LowRankGp};
use crate::mesh::{Surface, TriangleMesh};
use crate::{Error, Result, Rgb, Vec3};

/// PCA model of flattened fields: mean, and eigenpairs of the sample
/// covariance with `1/(N−1)` normalization. Rank is `min(N − 1, 3n)`.
pub fn pca_model(reference: Arc<Surface>, samples: &[DVector<f64>]) -> Result<LowRankGp> {
    let n = samples.len();
    let dim = 3 * reference.mesh().vertex_count();
    if n == 0 {
        return Err(Error::InvalidInput("PCA needs at least one sample".into()));
    }
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: s.len() });
        }
    }
    let mean = samples.iter().fold(DVector::zeros(dim), |acc, s| acc + s) / n as f64;
    if n == 1 {
        return LowRankGp::new(reference, mean, DMatrix::zeros(dim, 0), DVector::zeros(0));
    }
    let mut centered = DMatrix::zeros(dim, n);
    for (j, s) in samples.iter().enumerate() {
        centered.set_column(j, &(s - &mean));
    }
    let rank = (n - 1).min(dim);
    let mut basis = DMatrix::zeros(dim, rank);
    let mut variances = DVector::zeros(rank);
    if n <= dim {
        // eigenpairs of the small Gram XᵀX give the left singular vectors
        let (values, vectors) = crate::lowrank::sorted_eigen(centered.tr_mul(&centered));
        let floor = crate::lowrank::EIGEN_FLOOR * values[0].max(0.0);
        for k in 0..rank {
            let s2 = values[k];
            if s2 > floor && s2 > 0.0 {
                basis.set_column(k, &(&centered * vectors.column(k) / s2.sqrt()));
                variances[k] = s2 / (n - 1) as f64;
            }
        }
    } else {
        let (values, vectors) = crate::lowrank::sorted_eigen(&centered * centered.transpose());
        let floor = crate::lowrank::EIGEN_FLOOR * values[0].max(0.0);
        for k in 0..rank {
            if values[k] > floor && values[k] > 0.0 {
                basis.set_column(k, &vectors.column(k));
                variances[k] = values[k] / (n - 1) as f64;
            }
        }
    }
    // zero-variance modes still need orthonormal directions
    complete_orthonormal(&mut basis, &variances);
    LowRankGp::new(reference, mean, basis, variances)
}

fn complete_orthonormal(basis: &mut DMatrix<f64>, variances: &DVector<f64>) {
    let dim = basis.nrows();
    let mut next_axis = 0;
    for k in 0..basis.ncols() {
        if variances[k] > 0.0 {
            continue;
        }
        while next_axis < dim {
            let mut v = DVector::zeros(dim);
            v[next_axis] = 1.0;
            next_axis += 1;
            for j in 0..basis.ncols() {
                if j != k && (variances[j] > 0.0 || j < k) {
                    let c = basis.column(j).dot(&v);
                    v.axpy(-c, &basis.column(j).into_owned(), 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-6 {
                basis.set_column(k, &(v / norm));
                break;
            }
        }
    }
}

fn check_topology(reference: &TriangleMesh, mesh: &TriangleMesh, what: &str) -> Result<()> {
    if !mesh.same_topology(reference) {
        return Err(Error::InvalidMesh(format!("{what}: topology differs from the reference")));
    }
    Ok(())
}

fn deformation(reference: &TriangleMesh, mesh: &TriangleMesh) -> DVector<f64> {
    let d: Vec<Vec3> = mesh.vertices().iter().zip(reference.vertices()).map(|(p, r)| p - r).collect();
    flatten(&d)
}

/// PCA shape model over deformations from the reference. The model mean is
/// the average deformation, so `reference + mean` is the vertex-wise
/// average shape.
pub fn build_shape_model(registered: &[TriangleMesh], reference: Arc<Surface>) -> Result<LowRankGp> {
    let r = reference.mesh();
    let samples = registered
        .iter()
        .enumerate()
        .map(|(i, m)| check_topology(r, m, &format!("registration {i}")).map(|_| deformation(r, m)))
        .collect::<Result<Vec<_>>>()?;
    pca_model(reference, &samples)
}

/// PCA over `expression − neutral` differences, one pair per expression
/// scan. A single pair gives a rank-0 model whose mean is that difference.
pub fn build_expression_model(pairs: &[(&TriangleMesh, &TriangleMesh)], reference: Arc<Surface>) -> Result<LowRankGp> {
    let r = reference.mesh();
    let samples = pairs
        .iter()
        .enumerate()
        .map(|(i, (neutral, expression))| {
            check_topology(r, neutral, &format!("neutral of pair {i}"))?;
            check_topology(r, expression, &format!("expression of pair {i}"))?;
            Ok(deformation(neutral, expression))
        })
        .collect::<Result<Vec<_>>>()?;
    pca_model(reference, &samples)
}

/// Shape, color and expression models over one reference.
#[derive(Debug, Clone)]
pub struct MorphableModel {
    pub shape: LowRankGp,
    pub color: LowRankGp,
    pub expression: LowRankGp,
}

impl MorphableModel {
    pub fn assemble(shape: LowRankGp, color: LowRankGp, expression: LowRankGp) -> Result<Self> {
        let r = shape.reference_mesh();
        for (name, m) in [("color", &color), ("expression", &expression)] {
            if !m.reference_mesh().same_topology(r) {
                return Err(Error::InvalidInput(format!("{name} model uses a different reference topology")));
            }
        }
        Ok(Self { shape, color, expression })
    }

    pub fn reference(&self) -> &TriangleMesh {
        self.shape.reference_mesh()
    }

    /// `reference + shape(α_s) + expression(α_e)`, colored by `color(α_c)`
    /// clamped to `[0, 1]`.
    pub fn instance(&self, shape: &DVector<f64>, color: &DVector<f64>, expression: &DVector<f64>) -> Result<TriangleMesh> {
        let u = self.shape.field(shape)? + self.expression.field(expression)?;
        let mesh = self.shape.warp_field(&u)?;
        let c = self.color.field(color)?;
        let colors: Vec<Rgb> =
            (0..mesh.vertex_count()).map(|i| [0, 1, 2].map(|k| c[3 * i + k].clamp(0.0, 1.0))).collect();
        mesh.with_colors(Some(colors))
    }

    pub fn mean_instance(&self) -> Result<TriangleMesh> {
        self.instance(
            &DVector::zeros(self.shape.rank()),
            &DVector::zeros(self.color.rank()),
            &DVector::zeros(self.expression.rank()),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        container::encode(
            container::MODEL_TYPE,
            &[("shape", &self.shape), ("color", &self.color), ("expression", &self.expression)],
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (kind, models) = container::load(path)?;
        if kind != container::MODEL_TYPE {
            return Err(Error::parse(path.display().to_string(), format!("expected a morphable model, found {kind}")));
        }
        let mut it = models.into_iter().map(|(_, m)| m);
        let (s, c, e) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
        Self::assemble(s, c, e)
    }
}

#[cfg(test)]
mod tests;
