//! Color model from per-vertex colors with unreliable entries.

use std::sync::Arc;

use crate::kernels::{squared_exponential, Location, MatrixKernel, ScalarKernel, SquaredExponential, VertexField};
use crate::lowrank::{build_low_rank, IndefinitePolicy, LowRankGp, LowRankOptions, LowRankReport};
use crate::mesh::Surface;
use crate::{Error, Mat3, Result, Rgb, Vec3};

/// Per-vertex colors of one registered scan with reliability flags `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorSample {
    pub colors: Vec<Rgb>,
    pub mask: Vec<bool>,
}

impl ColorSample {
    pub fn new(colors: Vec<Rgb>, mask: Vec<bool>) -> Result<Self> {
        if colors.len() != mask.len() {
            return Err(Error::DimensionMismatch { expected: colors.len(), actual: mask.len() });
        }
        Ok(Self { colors, mask })
    }

    pub fn complete(colors: Vec<Rgb>) -> Self {
        let mask = vec![true; colors.len()];
        Self { colors, mask }
    }

    fn color(&self, v: usize) -> Vec3 {
        Vec3::from(self.colors[v])
    }
}

/// Masked mean colors. `fallback[v]` marks vertices without any visible
/// sample, which take the reference color instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMean {
    pub mean: Vec<Rgb>,
    pub fallback: Vec<bool>,
}

fn check_samples(samples: &[ColorSample], n: usize) -> Result<()> {
    for s in samples {
        if s.colors.len() != n || s.mask.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: s.colors.len().min(s.mask.len()) });
        }
    }
    Ok(())
}

/// `μ(x) = Σ zᵢ uᵢ(x) / Σ zᵢ`.
pub fn color_mean_missing(samples: &[ColorSample], reference_colors: &[Rgb]) -> Result<ColorMean> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("color mean needs at least one sample".into()));
    }
    let n = reference_colors.len();
    check_samples(samples, n)?;
    let mut mean = Vec::with_capacity(n);
    let mut fallback = Vec::with_capacity(n);
    for v in 0..n {
        let mut sum = Vec3::zeros();
        let mut count = 0usize;
        for s in samples {
            if s.mask[v] {
                sum += s.color(v);
                count += 1;
            }
        }
        if count == 0 {
            mean.push(reference_colors[v]);
            fallback.push(true);
        } else {
            let m = sum / count as f64;
            mean.push([m.x, m.y, m.z]);
            fallback.push(false);
        }
    }
    Ok(ColorMean { mean, fallback })
}

/// `k(x,x′) = 1/(n−1) Σᵢ [zᵢ(x) zᵢ(x′) cᵢ(x,x′) + (1 − zᵢ(x) zᵢ(x′)) k_cs(x,x′) I]`
/// with `cᵢ(x,x′) = (uᵢ(x) − μ(x)) (uᵢ(x′) − μ(x′))ᵀ`.
///
/// Off-vertex arguments use the vertex with the largest barycentric weight.
#[derive(Debug, Clone)]
pub struct ColorCovariance {
    surface: Arc<Surface>,
    samples: Arc<Vec<ColorSample>>,
    mean: Vec<Vec3>,
    prior: Arc<dyn ScalarKernel>,
}

impl ColorCovariance {
    pub fn new(surface: Arc<Surface>, samples: Vec<ColorSample>, mean: &[Rgb], prior: Arc<dyn ScalarKernel>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!("color covariance needs 2 samples, got {}", samples.len())));
        }
        let n = surface.mesh().vertex_count();
        if mean.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: mean.len() });
        }
        check_samples(&samples, n)?;
        Ok(Self { surface, samples: Arc::new(samples), mean: mean.iter().map(|c| Vec3::from(*c)).collect(), prior })
    }

    fn vertex(&self, loc: &Location) -> usize {
        match loc.site {
            Some(s) => s.dominant_vertex(),
            None => {
                let sp = self.surface.closest_point(&loc.point).expect("reference has triangles");
                crate::kernels::Site::from_surface_point(self.surface.mesh(), &sp).dominant_vertex()
            }
        }
    }
}

impl MatrixKernel for ColorCovariance {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        let (a, b) = (self.vertex(x), self.vertex(y));
        let prior = self.prior.eval(x, y);
        let mut k = Mat3::zeros();
        for s in self.samples.iter() {
            if s.mask[a] && s.mask[b] {
                k += (s.color(a) - self.mean[a]) * (s.color(b) - self.mean[b]).transpose();
            } else {
                k += Mat3::identity() * prior;
            }
        }
        k / (self.samples.len() - 1) as f64
    }
}

/// `1.0e-4 · exp(−|x − x′|² / 10²)`.
pub fn default_color_prior() -> SquaredExponential {
    squared_exponential(1.0e-4, 10.0).expect("constants are positive")
}

/// Low-rank color model of the masked mean and covariance. The covariance
/// is not positive semi-definite in general; negative eigenvalues of its
/// Gram matrix are clamped to zero.
pub fn build_color_model(
    samples: Vec<ColorSample>,
    reference: Arc<Surface>,
    prior: Arc<dyn ScalarKernel>,
    opts: &LowRankOptions,
) -> Result<(LowRankGp, LowRankReport, ColorMean)> {
    let mesh = reference.mesh();
    let reference_colors: Vec<Rgb> = match mesh.colors() {
        Some(c) => c.to_vec(),
        None => vec![[0.5; 3]; mesh.vertex_count()],
    };
    let mean = color_mean_missing(&samples, &reference_colors)?;
    let kernel = ColorCovariance::new(reference.clone(), samples, &mean.mean, prior)?;
    let field = VertexField::new(reference, mean.mean.iter().map(|c| Vec3::from(*c)).collect())?;
    let opts = LowRankOptions { indefinite: IndefinitePolicy::Clamp, ..*opts };
    let (gp, report) = build_low_rank(&kernel, &field, &opts)?;
    Ok((gp, report, mean))
}
