//! JSON kernel expression trees.
//!
//! ```json
//! {"type": "add", "terms": [
//!   {"type": "mirror_symmetric", "child":
//!     {"type": "bspline_multiscale", "j_lo": -6, "j_hi": -3, "scales": [8, 4, 2, 1]}},
//!   {"type": "sample_covariance", "prototype_paths": ["open.ply", "closed.ply"]}
//! ]}
//! ```
//!
//! Relative paths resolve against the directory of the configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    mirror_symmetrize, multiscale_bspline, sample_covariance_kernel, spatially_varying, squared_exponential,
    BSplineLevel, IndicatorMap, Kernel, ScalarKernel, Scaled, VertexField,
};
use crate::mesh::{Surface, TriangleMesh};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    BsplineLevel { level: i32 },
    BsplineMultiscale { j_lo: i32, j_hi: i32, scales: Vec<f64> },
    /// Levels without an entry in the indicator map file are active everywhere.
    SpatiallyVarying { levels: Vec<LevelSpec>, indicator_map_path: PathBuf },
    MirrorSymmetric { child: Box<KernelSpec> },
    SampleCovariance { prototype_paths: Vec<PathBuf> },
    SquaredExponential { scaling: f64, sigma: f64 },
    /// Scalar terms mixed with matrix terms enter as `k · I`.
    Add { terms: Vec<KernelSpec> },
    Scale { factor: f64, kernel: Box<KernelSpec> },
    Multiply { factors: Vec<KernelSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub level: i32,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// On-disk indicator map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorMapFile {
    pub level: i32,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum IndicatorMaps {
    One(IndicatorMapFile),
    Many(Vec<IndicatorMapFile>),
}

/// A kernel tree resolved against a reference surface, with the mean
/// contributed by its sample-covariance nodes.
#[derive(Debug, Clone)]
pub struct BuiltKernel {
    pub kernel: Kernel,
    pub mean: VertexField,
}

impl KernelSpec {
    pub fn from_json(text: &str, ctx: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Resolves file references relative to `base_dir`.
    pub fn build(&self, reference: &Arc<Surface>, base_dir: &Path) -> Result<BuiltKernel> {
        let mut mean = vec![Vec3::zeros(); reference.mesh().vertex_count()];
        let kernel = self.build_node(reference, base_dir, &mut mean)?;
        Ok(BuiltKernel { kernel, mean: VertexField::new(reference.clone(), mean)? })
    }

    fn build_node(&self, reference: &Arc<Surface>, base: &Path, mean: &mut [Vec3]) -> Result<Kernel> {
        Ok(match self {
            KernelSpec::BsplineLevel { level } => Kernel::scalar(BSplineLevel::new(*level)),
            KernelSpec::BsplineMultiscale { j_lo, j_hi, scales } => {
                Kernel::matrix(multiscale_bspline(*j_lo, *j_hi, scales.clone())?)
            }
            KernelSpec::SpatiallyVarying { levels, indicator_map_path } => {
                let path = base.join(indicator_map_path);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let maps = match serde_json::from_str(&text)
                    .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
                {
                    IndicatorMaps::One(m) => vec![m],
                    IndicatorMaps::Many(v) => v,
                };
                let mut out: Vec<(Arc<dyn ScalarKernel>, IndicatorMap)> = Vec::new();
                for l in levels {
                    if !(l.scale > 0.0 && l.scale.is_finite()) {
                        return Err(Error::InvalidInput(format!("level {} has non-positive scale", l.level)));
                    }
                    let chi = match maps.iter().find(|m| m.level == l.level) {
                        Some(m) => IndicatorMap::new(l.level, reference.clone(), m.weights.clone())?,
                        None => IndicatorMap::constant(l.level, reference.clone(), 1.0),
                    };
                    out.push((Arc::new(Scaled(l.scale, Arc::new(BSplineLevel::new(l.level)))), chi));
                }
                Kernel::matrix(spatially_varying(out)?)
            }
            KernelSpec::MirrorSymmetric { child } => {
                let child = child.build_node(reference, base, mean)?;
                Kernel::matrix(mirror_symmetrize(&child)?)
            }
            KernelSpec::SampleCovariance { prototype_paths } => {
                let fields = prototype_paths
                    .iter()
                    .map(|p| prototype_field(reference, &base.join(p)))
                    .collect::<Result<Vec<_>>>()?;
                let (mu, k) = sample_covariance_kernel(&fields)?;
                for (m, v) in mean.iter_mut().zip(mu.values()) {
                    *m += v;
                }
                Kernel::matrix(k)
            }
            KernelSpec::SquaredExponential { scaling, sigma } => Kernel::scalar(squared_exponential(*scaling, *sigma)?),
            KernelSpec::Add { terms } => {
                let mut it = terms.iter();
                let first = it.next().ok_or_else(|| Error::InvalidInput("add node without terms".into()))?;
                let mut acc = first.build_node(reference, base, mean)?;
                for t in it {
                    let term = t.build_node(reference, base, mean)?;
                    acc = if acc.is_scalar() == term.is_scalar() {
                        acc.add(&term)?
                    } else {
                        Kernel::Matrix(acc.into_matrix()).add(&Kernel::Matrix(term.into_matrix()))?
                    };
                }
                acc
            }
            KernelSpec::Scale { factor, kernel } => kernel.build_node(reference, base, mean)?.scale(*factor)?,
            KernelSpec::Multiply { factors } => {
                let mut it = factors.iter();
                let first = it.next().ok_or_else(|| Error::InvalidInput("multiply node without factors".into()))?;
                let mut acc = first.build_node(reference, base, mean)?;
                for f in it {
                    acc = acc.multiply(&f.build_node(reference, base, mean)?)?;
                }
                acc
            }
        })
    }
}

/// Deformation `prototype − reference`, per vertex.
pub fn prototype_field(reference: &Arc<Surface>, path: &Path) -> Result<VertexField> {
    let mesh = TriangleMesh::load(path)?;
    if !mesh.same_topology(reference.mesh()) {
        return Err(Error::InvalidMesh(format!("{}: topology differs from the reference", path.display())));
    }
    let values = mesh.vertices().iter().zip(reference.mesh().vertices()).map(|(p, r)| p - r).collect();
    VertexField::new(reference.clone(), values)
}
