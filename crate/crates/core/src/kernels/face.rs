//! Kernels specific to face priors: spatially varying levels, mirror
//! symmetry, and the sample covariance of expression prototypes.

use std::sync::Arc;

use super::{Isotropic, Kernel, Location, MatrixKernel, MatrixSum, ScalarKernel, Site};
use crate::mesh::Surface;
use crate::{Error, Mat3, Result, Vec3};

fn site_on(surface: &Surface, loc: &Location) -> Site {
    match loc.site {
        Some(s) => s,
        None => {
            let sp = surface
                .closest_point(&loc.point)
                .expect("reference surface of a per-vertex field has triangles");
            Site::from_surface_point(surface.mesh(), &sp)
        }
    }
}

/// Per-vertex 3-vector field on the reference, interpolated barycentrically.
#[derive(Debug, Clone)]
pub struct VertexField {
    surface: Arc<Surface>,
    values: Vec<Vec3>,
}

impl VertexField {
    pub fn new(surface: Arc<Surface>, values: Vec<Vec3>) -> Result<Self> {
        let n = surface.mesh().vertex_count();
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: values.len() });
        }
        Ok(Self { surface, values })
    }

    pub fn zeros(surface: Arc<Surface>) -> Self {
        let n = surface.mesh().vertex_count();
        Self { surface, values: vec![Vec3::zeros(); n] }
    }

    pub fn surface(&self) -> &Arc<Surface> {
        &self.surface
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn value_at(&self, loc: &Location) -> Vec3 {
        let s = site_on(&self.surface, loc);
        self.values[s.vertices[0]] * s.weights[0]
            + self.values[s.vertices[1]] * s.weights[1]
            + self.values[s.vertices[2]] * s.weights[2]
    }
}

/// Smooth weight `χ^j: Γ_R → [0, 1]` for one B-spline level.
#[derive(Debug, Clone)]
pub struct IndicatorMap {
    pub level: i32,
    surface: Arc<Surface>,
    weights: Vec<f64>,
}

impl IndicatorMap {
    /// Weights are clamped to `[0, 1]`.
    pub fn new(level: i32, surface: Arc<Surface>, weights: Vec<f64>) -> Result<Self> {
        let n = surface.mesh().vertex_count();
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput(format!("indicator map for level {level} has non-finite weights")));
        }
        let weights = weights.into_iter().map(|w| w.clamp(0.0, 1.0)).collect();
        Ok(Self { level, surface, weights })
    }

    pub fn constant(level: i32, surface: Arc<Surface>, value: f64) -> Self {
        let n = surface.mesh().vertex_count();
        Self { level, surface, weights: vec![value.clamp(0.0, 1.0); n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn value_at(&self, loc: &Location) -> f64 {
        let s = site_on(&self.surface, loc);
        let v = (0..3).map(|k| self.weights[s.vertices[k]] * s.weights[k]).sum::<f64>();
        v.clamp(0.0, 1.0)
    }
}

/// `Σ_j χ^j(x) χ^j(x′) k_j(x,x′)`.
#[derive(Debug, Clone)]
pub struct SpatiallyVarying {
    levels: Vec<(Arc<dyn ScalarKernel>, IndicatorMap)>,
}

impl ScalarKernel for SpatiallyVarying {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.levels
            .iter()
            .map(|(k, chi)| {
                let cx = chi.value_at(x);
                if cx == 0.0 {
                    return 0.0;
                }
                let cy = chi.value_at(y);
                if cy == 0.0 {
                    return 0.0;
                }
                cx * cy * k.eval(x, y)
            })
            .sum()
    }
}

/// Isotropic spatially varying multi-scale kernel.
pub fn spatially_varying(levels: Vec<(Arc<dyn ScalarKernel>, IndicatorMap)>) -> Result<Isotropic> {
    if levels.is_empty() {
        return Err(Error::InvalidInput("spatially varying kernel needs at least one level".into()));
    }
    Ok(Isotropic(Arc::new(SpatiallyVarying { levels })))
}

/// `I k(x,x′) + Ī k(x, x̄′)` with `Ī = diag(−1, 1, 1)` and `x̄′` the mirror
/// image of `x′` in the plane `x₁ = 0`.
///
/// Block symmetry and positive semi-definiteness require the child to be
/// invariant under mirroring both arguments.
#[derive(Debug, Clone)]
pub struct MirrorSymmetric {
    child: Arc<dyn ScalarKernel>,
}

impl MatrixKernel for MirrorSymmetric {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        let direct = self.child.eval(x, y);
        let mirrored = self.child.eval(x, &y.mirrored());
        Mat3::from_diagonal(&Vec3::new(direct - mirrored, direct + mirrored, direct + mirrored))
    }
}

/// Accepts a scalar kernel or an isotropic matrix kernel.
pub fn mirror_symmetrize(kernel: &Kernel) -> Result<MirrorSymmetric> {
    let child = kernel
        .as_scalar()
        .ok_or_else(|| Error::KernelKind("mirror symmetry needs a scalar or isotropic kernel".into()))?;
    Ok(MirrorSymmetric { child })
}

/// Empirical covariance of deformation prototypes,
/// `1/(n−1) Σ (uᵢ(x) − μ(x)) (uᵢ(x′) − μ(x′))ᵀ`.
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    centered: Vec<VertexField>,
}

impl SampleCovariance {
    pub fn surface(&self) -> &Arc<Surface> {
        self.centered[0].surface()
    }

    pub fn sample_count(&self) -> usize {
        self.centered.len()
    }
}

impl MatrixKernel for SampleCovariance {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        let surface = self.surface();
        let (sx, sy) = (site_on(surface, x), site_on(surface, y));
        let (lx, ly) = (Location { site: Some(sx), ..*x }, Location { site: Some(sy), ..*y });
        let mut k = Mat3::zeros();
        for c in &self.centered {
            k += c.value_at(&lx) * c.value_at(&ly).transpose();
        }
        k / (self.centered.len() - 1) as f64
    }
}

/// Mean field and empirical covariance kernel of `n ≥ 2` prototypes.
pub fn sample_covariance_kernel(prototypes: &[VertexField]) -> Result<(VertexField, SampleCovariance)> {
    if prototypes.len() < 2 {
        return Err(Error::InvalidInput(format!("sample covariance needs 2 prototypes, got {}", prototypes.len())));
    }
    let surface = prototypes[0].surface().clone();
    let n_vert = prototypes[0].values().len();
    for p in prototypes {
        if p.values().len() != n_vert {
            return Err(Error::DimensionMismatch { expected: n_vert, actual: p.values().len() });
        }
    }
    let n = prototypes.len() as f64;
    let mean: Vec<Vec3> =
        (0..n_vert).map(|v| prototypes.iter().fold(Vec3::zeros(), |a, p| a + p.values()[v]) / n).collect();
    let centered = prototypes
        .iter()
        .map(|p| VertexField {
            surface: surface.clone(),
            values: p.values().iter().zip(&mean).map(|(u, m)| u - m).collect(),
        })
        .collect();
    Ok((VertexField { surface, values: mean }, SampleCovariance { centered }))
}

/// `scaling · exp(−|x − x′|² / σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponential {
    pub scaling: f64,
    pub sigma: f64,
}

impl ScalarKernel for SquaredExponential {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.scaling * (-(x.point - y.point).norm_squared() / (self.sigma * self.sigma)).exp()
    }
}

pub fn squared_exponential(scaling: f64, sigma: f64) -> Result<SquaredExponential> {
    if !(scaling > 0.0 && sigma > 0.0 && scaling.is_finite() && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "squared exponential needs positive parameters, got scaling={scaling} sigma={sigma}"
        )));
    }
    Ok(SquaredExponential { scaling, sigma })
}

/// Combined face prior: mean and kernel.
#[derive(Debug, Clone)]
pub struct FacePrior {
    pub mean: VertexField,
    pub kernel: Arc<dyn MatrixKernel>,
}

/// Symmetrizes the spatially varying kernel and adds the expression
/// covariance: `k_expr = k_sm + k_sym(k_svms)`, mean `μ_sm`.
pub fn face_prior_kernel(svms: &Kernel, expression: (&VertexField, &SampleCovariance)) -> Result<FacePrior> {
    let (mean, k_sm) = expression;
    let (a, b) = (mean.surface().mesh(), k_sm.surface().mesh());
    if !a.same_topology(b) {
        return Err(Error::InvalidInput("expression mean and covariance live on different reference meshes".into()));
    }
    let sym: Arc<dyn MatrixKernel> = Arc::new(mirror_symmetrize(svms)?);
    let kernel = Arc::new(MatrixSum(Arc::new(k_sm.clone()), sym));
    Ok(FacePrior { mean: mean.clone(), kernel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{is_psd, matrix_gram, BSplineLevel};
    use crate::synthetic;
    use crate::Point3;
    use rand::{Rng, SeedableRng};

    fn sphere() -> Arc<Surface> {
        Arc::new(Surface::new(synthetic::icosphere(30.0, 2)))
    }

    fn random_sites(surface: &Surface, n: usize, seed: u64) -> Vec<Location> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mesh = surface.mesh();
        (0..n)
            .map(|_| {
                let t = rng.random_range(0..mesh.triangle_count());
                let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                let w = [1.0 - u - v, u, v];
                let tri = mesh.triangles()[t];
                let p = (0..3).fold(Vec3::zeros(), |a, k| a + mesh.vertices()[tri[k]].coords * w[k]);
                Location { point: Point3::from(p), site: Some(Site { vertices: tri, weights: w }) }
            })
            .collect()
    }

    #[test]
    fn unit_indicators_reduce_to_multiscale() {
        let s = sphere();
        let levels: Vec<(Arc<dyn ScalarKernel>, IndicatorMap)> = (-5..=-3)
            .map(|j| (Arc::new(BSplineLevel::new(j)) as Arc<dyn ScalarKernel>, IndicatorMap::constant(j, s.clone(), 1.0)))
            .collect();
        let sv = spatially_varying(levels).unwrap();
        let ms = crate::kernels::multiscale_bspline(-5, -3, vec![1.0; 3]).unwrap();
        let pts = random_sites(&s, 20, 1);
        assert!((matrix_gram(&sv, &pts) - matrix_gram(&ms, &pts)).amax() < 1e-12);
    }

    #[test]
    fn zero_indicator_silences_level() {
        let s = sphere();
        let mut w = vec![1.0; s.mesh().vertex_count()];
        w[0] = 0.0;
        let chi = IndicatorMap::new(-3, s.clone(), w).unwrap();
        let sv = SpatiallyVarying { levels: vec![(Arc::new(BSplineLevel::new(-3)), chi)] };
        let x = Location::vertex(s.mesh(), 0);
        for y in random_sites(&s, 10, 2) {
            assert_eq!(sv.eval(&x, &y), 0.0);
        }
        assert!(spatially_varying(vec![]).is_err());
    }

    #[test]
    fn spatially_varying_psd_under_random_maps() {
        let s = sphere();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let levels: Vec<(Arc<dyn ScalarKernel>, IndicatorMap)> = (-5..=-3)
            .map(|j| {
                let w = (0..s.mesh().vertex_count()).map(|_| rng.random::<f64>()).collect();
                (Arc::new(BSplineLevel::new(j)) as Arc<dyn ScalarKernel>, IndicatorMap::new(j, s.clone(), w).unwrap())
            })
            .collect();
        let sv = spatially_varying(levels).unwrap();
        for seed in 0..3 {
            assert!(is_psd(&matrix_gram(&sv, &random_sites(&s, 50, seed)), 1e-8));
        }
    }

    #[test]
    fn mirror_of_constant_kernel() {
        #[derive(Debug)]
        struct One;
        impl ScalarKernel for One {
            fn eval(&self, _: &Location, _: &Location) -> f64 {
                1.0
            }
        }
        let m = mirror_symmetrize(&Kernel::scalar(One)).unwrap();
        let pts = crate::kernels::tests::random_points(5, 3, 10.0);
        for p in &pts {
            assert_eq!(m.eval(&pts[0], p), Mat3::from_diagonal(&Vec3::new(0.0, 2.0, 2.0)));
        }
    }

    #[test]
    fn mirror_on_symmetry_plane() {
        let k = squared_exponential(1.0, 20.0).unwrap();
        let m = mirror_symmetrize(&Kernel::scalar(k)).unwrap();
        let x = Location::free(Point3::new(3.0, 1.0, -2.0));
        let y = Location::free(Point3::new(0.0, 4.0, 5.0));
        let kv = k.eval(&x, &y);
        let expected = Mat3::from_diagonal(&Vec3::new(0.0, 2.0 * kv, 2.0 * kv));
        assert!((m.eval(&x, &y) - expected).amax() < 1e-15);
    }

    #[test]
    fn mirror_equivariance_and_psd() {
        let k = Kernel::scalar(squared_exponential(2.0, 15.0).unwrap());
        let m = mirror_symmetrize(&k).unwrap();
        let bar = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        let pts = crate::kernels::tests::random_points(50, 8, 25.0);
        for w in pts.windows(2) {
            let (xb, yb) = (w[0].mirrored(), w[1].mirrored());
            let lhs = bar * m.eval(&xb, &yb) * bar;
            assert!((lhs - m.eval(&w[0], &w[1])).amax() <= 1e-12);
            assert!((m.eval(&w[0], &w[1]) - m.eval(&w[1], &w[0]).transpose()).amax() <= 1e-15);
        }
        assert!(is_psd(&matrix_gram(&m, &pts), 1e-8));
    }

    fn prototypes(s: &Arc<Surface>, n: usize, seed: u64) -> Vec<VertexField> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = (0..s.mesh().vertex_count())
                    .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                VertexField::new(s.clone(), v).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_prototypes_give_zero_kernel() {
        let s = sphere();
        let p = prototypes(&s, 1, 4).pop().unwrap();
        let (mean, k) = sample_covariance_kernel(&[p.clone(), p.clone(), p.clone()]).unwrap();
        assert_eq!(mean.values(), p.values());
        for a in random_sites(&s, 5, 5) {
            assert_eq!(k.eval(&a, &a), Mat3::zeros());
        }
    }

    #[test]
    fn gram_at_vertices_matches_outer_products_and_rank() {
        let s = sphere();
        let protos = prototypes(&s, 4, 6);
        let (_, k) = sample_covariance_kernel(&protos).unwrap();
        let verts: Vec<usize> = (0..25).collect();
        let locs: Vec<Location> = verts.iter().map(|&v| Location::vertex(s.mesh(), v)).collect();
        let g = matrix_gram(&k, &locs);
        // brute force: stack centered samples
        let n = protos.len();
        let mut oracle = nalgebra::DMatrix::<f64>::zeros(75, 75);
        for i in 0..n {
            let mut col = nalgebra::DVector::<f64>::zeros(75);
            for (r, &v) in verts.iter().enumerate() {
                let mean: Vec3 = protos.iter().map(|p| p.values()[v]).sum::<Vec3>() / n as f64;
                let d = protos[i].values()[v] - mean;
                for a in 0..3 {
                    col[3 * r + a] = d[a];
                }
            }
            oracle += &col * col.transpose() / (n - 1) as f64;
        }
        assert!((&g - &oracle).amax() < 1e-12);
        let sv = g.singular_values();
        assert!(sv.iter().filter(|v| **v > 1e-10 * sv.max()).count() <= n - 1);
    }

    #[test]
    fn sample_covariance_errors() {
        let s = sphere();
        let p = prototypes(&s, 1, 7);
        assert!(sample_covariance_kernel(&p).is_err());
        let small = Arc::new(Surface::new(synthetic::tetrahedron()));
        assert!(VertexField::new(small, vec![Vec3::zeros(); 3]).is_err());
    }

    #[test]
    fn squared_exponential_values() {
        let k = squared_exponential(1.0e-4, 10.0).unwrap();
        let x = Location::free(Point3::origin());
        assert_eq!(k.eval(&x, &x), 1.0e-4);
        let y = Location::free(Point3::new(0.0, 10.0, 0.0));
        assert!((k.eval(&x, &y) - 1.0e-4 * (-1f64).exp()).abs() < 1e-20);
        let mut last = f64::INFINITY;
        for d in 0..50 {
            let v = k.eval(&x, &Location::free(Point3::new(d as f64, 0.0, 0.0)));
            assert!(v < last);
            last = v;
        }
        assert!(squared_exponential(0.0, 1.0).is_err());
        assert!(squared_exponential(1.0, -1.0).is_err());
    }

    #[test]
    fn face_prior_composition() {
        let s = sphere();
        let svms = Kernel::Matrix(Arc::new(crate::kernels::multiscale_bspline(-5, -4, vec![2.0, 1.0]).unwrap()));
        let zeros = vec![VertexField::zeros(s.clone()); 3];
        let (mean, k_sm) = sample_covariance_kernel(&zeros).unwrap();
        let prior = face_prior_kernel(&svms, (&mean, &k_sm)).unwrap();
        assert!(prior.mean.values().iter().all(|v| *v == Vec3::zeros()));
        let sym = mirror_symmetrize(&svms).unwrap();
        let pts = random_sites(&s, 30, 9);
        assert_eq!(matrix_gram(prior.kernel.as_ref(), &pts), matrix_gram(&sym, &pts));

        let protos = prototypes(&s, 3, 10);
        let (mean, k_sm) = sample_covariance_kernel(&protos).unwrap();
        let prior = face_prior_kernel(&svms, (&mean, &k_sm)).unwrap();
        let g = matrix_gram(prior.kernel.as_ref(), &pts);
        assert!((&g - (matrix_gram(&k_sm, &pts) + matrix_gram(&sym, &pts))).amax() < 1e-12);
        assert!(is_psd(&g, 1e-8));

        let other = Arc::new(Surface::new(synthetic::icosphere(30.0, 1)));
        let (m2, _) = sample_covariance_kernel(&vec![VertexField::zeros(other); 2]).unwrap();
        assert!(face_prior_kernel(&svms, (&m2, &k_sm)).is_err());
    }
}
