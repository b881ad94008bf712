//! Truncated Karhunen-Loève models `ũ(α,x) = μ(x) + Σ αᵢ √λᵢ φᵢ(x)` over a
//! reference mesh, built from a kernel with the Nyström method.

pub mod container;
mod posterior;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3xX};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use posterior::LandmarkObservation;

use crate::kernels::{Location, MatrixKernel, Site, VertexField};
use crate::mesh::{Surface, TriangleMesh};
use crate::{Error, Mat3, Point3, Result, Vec3};

/// Low-rank Gaussian process over per-vertex 3-vector fields.
///
/// `basis` holds one orthonormal column per mode, laid out vertex-major
/// (`[φ(v₀).x, φ(v₀).y, φ(v₀).z, φ(v₁).x, …]`).
#[derive(Debug, Clone)]
pub struct LowRankGp {
    reference: Arc<Surface>,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    variances: DVector<f64>,
    scaled: DMatrix<f64>,
}

impl LowRankGp {
    pub fn new(reference: Arc<Surface>, mean: DVector<f64>, basis: DMatrix<f64>, variances: DVector<f64>) -> Result<Self> {
        let dim = 3 * reference.mesh().vertex_count();
        if mean.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: mean.len() });
        }
        if basis.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: basis.nrows() });
        }
        if basis.ncols() != variances.len() {
            return Err(Error::DimensionMismatch { expected: basis.ncols(), actual: variances.len() });
        }
        if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("variances must be finite and non-negative".into()));
        }
        if variances.as_slice().windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("variances must be sorted in descending order".into()));
        }
        let mut scaled = basis.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= variances[j].sqrt();
        }
        Ok(Self { reference, mean, basis, variances, scaled })
    }

    /// Rank-0 model with the given mean.
    pub fn constant(reference: Arc<Surface>, mean: &[Vec3]) -> Result<Self> {
        let dim = 3 * mean.len();
        Self::new(reference, flatten(mean), DMatrix::zeros(dim, 0), DVector::zeros(0))
    }

    pub fn reference(&self) -> &Arc<Surface> {
        &self.reference
    }

    pub fn reference_mesh(&self) -> &TriangleMesh {
        self.reference.mesh()
    }

    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 3
    }

    /// Flattened mean field.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    /// `φᵢ √λᵢ` as columns.
    pub fn scaled_basis(&self) -> &DMatrix<f64> {
        &self.scaled
    }

    fn check(&self, alpha: &DVector<f64>) -> Result<()> {
        if alpha.len() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), actual: alpha.len() });
        }
        Ok(())
    }

    /// Site of `loc`, projecting onto the reference when untagged.
    pub fn site_of(&self, loc: &Location) -> Result<Site> {
        match loc.site {
            Some(s) => Ok(s),
            None => Ok(Location::project(&self.reference, &loc.point)?.site.expect("projection sets the site")),
        }
    }

    /// `3 × r` rows of the scaled basis interpolated at `site`.
    pub fn design_rows(&self, site: &Site) -> Matrix3xX<f64> {
        let mut a = Matrix3xX::zeros(self.rank());
        for k in 0..3 {
            if site.weights[k] != 0.0 {
                a += self.scaled.rows(3 * site.vertices[k], 3) * site.weights[k];
            }
        }
        a
    }

    pub fn mean_at(&self, site: &Site) -> Vec3 {
        (0..3).fold(Vec3::zeros(), |acc, k| acc + self.mean.fixed_rows::<3>(3 * site.vertices[k]) * site.weights[k])
    }

    /// `ũ(α, x)`.
    pub fn evaluate(&self, alpha: &DVector<f64>, loc: &Location) -> Result<Vec3> {
        self.check(alpha)?;
        let site = self.site_of(loc)?;
        Ok(self.mean_at(&site) + self.design_rows(&site) * alpha)
    }

    pub fn evaluate_vertex(&self, alpha: &DVector<f64>, vertex: usize) -> Result<Vec3> {
        self.check(alpha)?;
        let rows = 3 * vertex;
        Ok(self.mean.fixed_rows::<3>(rows) + self.scaled.rows(rows, 3) * alpha)
    }

    /// Flattened field `μ + Φ√Λ α` at every vertex.
    pub fn field(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(alpha)?;
        Ok(&self.mean + &self.scaled * alpha)
    }

    pub fn deformation_field(&self, alpha: &DVector<f64>) -> Result<Vec<Vec3>> {
        Ok(unflatten(&self.field(alpha)?))
    }

    /// Reference mesh moved by `ũ(α, ·)`.
    pub fn warp(&self, alpha: &DVector<f64>) -> Result<TriangleMesh> {
        let u = self.field(alpha)?;
        self.warp_field(&u)
    }

    /// Reference mesh moved by a flattened field.
    pub fn warp_field(&self, field: &DVector<f64>) -> Result<TriangleMesh> {
        let mesh = self.reference.mesh();
        let verts =
            mesh.vertices().iter().enumerate().map(|(i, p)| p + field.fixed_rows::<3>(3 * i).into_owned()).collect();
        mesh.with_vertices(verts)
    }

    /// `r` independent standard-normal coefficients, reproducible per seed.
    pub fn sample(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_iterator(self.rank(), (0..self.rank()).map(|_| StandardNormal.sample(&mut rng)))
    }

    /// Coefficients whose field is closest to `field` in the least-squares
    /// sense; zero-variance modes get zero.
    pub fn project(&self, field: &DVector<f64>) -> Result<DVector<f64>> {
        if field.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), actual: field.len() });
        }
        let c = self.basis.tr_mul(&(field - &self.mean));
        Ok(DVector::from_iterator(
            self.rank(),
            c.iter().zip(self.variances.iter()).map(|(c, l)| if *l > 0.0 { c / l.sqrt() } else { 0.0 }),
        ))
    }

    /// `Cov[u(vᵢ), u(vⱼ)] = Σ λₖ φₖ(vᵢ) φₖ(vⱼ)ᵀ`.
    pub fn covariance(&self, i: usize, j: usize) -> Mat3 {
        let a = self.scaled.rows(3 * i, 3);
        let b = self.scaled.rows(3 * j, 3);
        let m = a * b.transpose();
        Mat3::from_iterator(m.iter().cloned())
    }

    /// Trace of the pointwise covariance.
    pub fn variance_trace(&self, vertex: usize) -> f64 {
        self.scaled.rows(3 * vertex, 3).norm_squared()
    }

    /// Same basis and variances, different mean.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        Self::new(self.reference.clone(), mean, self.basis.clone(), self.variances.clone())
    }
}

/// `log p(α)` up to a constant: `−‖α‖²`.
pub fn log_prior(alpha: &DVector<f64>) -> f64 {
    -alpha.norm_squared()
}

pub fn flatten(field: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(3 * field.len(), field.iter().flat_map(|v| [v.x, v.y, v.z]))
}

pub fn unflatten(field: &DVector<f64>) -> Vec<Vec3> {
    (0..field.len() / 3).map(|i| field.fixed_rows::<3>(3 * i).into_owned()).collect()
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSelection {
    Fixed(usize),
    /// Smallest rank whose share of the Gram spectrum reaches `fraction`,
    /// capped by `max_rank`.
    Variance { fraction: f64, max_rank: Option<usize> },
}

impl Default for RankSelection {
    fn default() -> Self {
        RankSelection::Variance { fraction: 0.99, max_rank: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Farthest-point sampling started at vertex 0.
    #[default]
    FarthestPoint,
    Uniform { seed: u64 },
}

/// What to do when the Gram matrix has eigenvalues below `−1e-8 λ_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndefinitePolicy {
    #[default]
    Reject,
    /// Treat them as zero.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LowRankOptions {
    /// Nyström sample size; `None` uses every vertex.
    pub nystrom_points: Option<usize>,
    pub rank: RankSelection,
    pub sampling: Sampling,
    pub indefinite: IndefinitePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankReport {
    pub nystrom_points: usize,
    pub rank: usize,
    /// Kept share of the sample Gram spectrum.
    pub retained_variance: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Relative eigenvalue floor below which modes count as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Tolerance of the positive semi-definiteness check.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Nyström approximation of `(mean, kernel)` on the reference vertices.
pub fn build_low_rank(
    kernel: &dyn MatrixKernel,
    mean: &VertexField,
    opts: &LowRankOptions,
) -> Result<(LowRankGp, LowRankReport)> {
    let surface = mean.surface().clone();
    let mesh = surface.mesh();
    let n = mesh.vertex_count();
    let m = opts.nystrom_points.unwrap_or(n);
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!("Nyström sample size {m} must be in 1..={n}")));
    }
    let samples = match opts.sampling {
        Sampling::FarthestPoint => farthest_point_sampling(mesh.vertices(), m),
        Sampling::Uniform { seed } => uniform_sampling(n, m, seed),
    };
    let locs: Vec<Location> = (0..n).map(|i| Location::vertex(mesh, i)).collect();
    let sample_locs: Vec<Location> = samples.iter().map(|&i| locs[i]).collect();

    let gram = crate::kernels::matrix_gram(kernel, &sample_locs);
    let (values, vectors) = sorted_eigen(gram);
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOLERANCE * max && opts.indefinite == IndefinitePolicy::Reject {
        return Err(Error::Indefinite { min, max });
    }
    let clamped: Vec<f64> = values.iter().map(|&v| if v < EIGEN_FLOOR * max || max == 0.0 { 0.0 } else { v }).collect();
    let total: f64 = clamped.iter().sum();

    let rank = match opts.rank {
        RankSelection::Fixed(r) => {
            if r > 3 * m {
                return Err(Error::InvalidInput(format!("rank {r} exceeds 3m = {}", 3 * m)));
            }
            r
        }
        RankSelection::Variance { fraction, max_rank } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::InvalidInput(format!("variance fraction {fraction} must be in (0, 1]")));
            }
            let mut r = 0;
            let mut acc = 0.0;
            while r < clamped.len() && total > 0.0 && acc < fraction * total {
                acc += clamped[r];
                r += 1;
            }
            max_rank.map_or(r, |cap| r.min(cap))
        }
    };
    let kept: f64 = clamped[..rank].iter().sum();
    let retained = if total > 0.0 { kept / total } else { 1.0 };

    // Nyström extension E = K(·, S) U Λ⁻¹, exact at the samples.
    let mut ext = DMatrix::zeros(3 * n, rank);
    let is_sample = {
        let mut s = vec![usize::MAX; n];
        for (k, &v) in samples.iter().enumerate() {
            s[v] = k;
        }
        s
    };
    let active: Vec<usize> = (0..rank).filter(|&j| clamped[j] > 0.0).collect();
    let mut weights = DMatrix::zeros(3 * m, active.len());
    for (c, &j) in active.iter().enumerate() {
        weights.set_column(c, &(vectors.column(j) / clamped[j]));
    }
    let rows_for = |v: usize| -> DMatrix<f64> {
        let mut krow = DMatrix::zeros(3, 3 * m);
        for (k, s) in sample_locs.iter().enumerate() {
            let b = kernel.eval(&locs[v], s);
            krow.fixed_view_mut::<3, 3>(0, 3 * k).copy_from(&b);
        }
        krow * &weights
    };
    let non_samples: Vec<usize> = (0..n).filter(|&v| is_sample[v] == usize::MAX).collect();
    let blocks = crate::parallel_map(&non_samples, |&v| rows_for(v));
    for (&v, block) in non_samples.iter().zip(blocks) {
        for (c, &j) in active.iter().enumerate() {
            for a in 0..3 {
                ext[(3 * v + a, j)] = block[(a, c)];
            }
        }
    }
    for (k, &v) in samples.iter().enumerate() {
        for j in 0..rank {
            for a in 0..3 {
                ext[(3 * v + a, j)] = vectors[(3 * k + a, j)];
            }
        }
    }

    // with every vertex sampled the extension is the eigenbasis itself
    let (basis, variances) = if m == n {
        (ext, DVector::from_column_slice(&clamped[..rank]))
    } else {
        reorthonormalize(ext, &clamped[..rank])
    };
    let gp = LowRankGp::new(surface, flatten(mean.values()), basis, variances)?;
    let report = LowRankReport { nystrom_points: m, rank, retained_variance: retained, min_eigenvalue: min, max_eigenvalue: max };
    log::info!("low-rank model: m = {m}, rank = {rank}, retained variance {retained:.6}");
    Ok((gp, report))
}

/// `E Λ Eᵀ = Q W Λ′ Wᵀ Qᵀ` with `E = QR` and `RΛRᵀ = WΛ′Wᵀ`.
pub(crate) fn reorthonormalize(e: DMatrix<f64>, lambda: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let r = lambda.len();
    if r == 0 {
        return (DMatrix::zeros(e.nrows(), 0), DVector::zeros(0));
    }
    let qr = e.qr();
    let (q, rm) = (qr.q(), qr.r());
    let mut core = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            core[(i, j)] = (0..r).map(|k| rm[(i, k)] * lambda[k] * rm[(j, k)]).sum();
        }
    }
    reorthonormalize_with_basis(&q, core)
}

/// `B V` and `Λ′` from `core = V Λ′ Vᵀ`.
pub(crate) fn reorthonormalize_with_basis(basis: &DMatrix<f64>, core: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let r = core.nrows();
    let (vals, v) = sorted_eigen(core);
    let max = vals.first().copied().unwrap_or(0.0).max(0.0);
    let vals = DVector::from_iterator(r, vals.iter().map(|&x| if x < EIGEN_FLOOR * max || max == 0.0 { 0.0 } else { x }));
    (basis * v, vals)
}

/// Eigenpairs in descending order, each vector signed so that its largest
/// entry (first on ties) is positive.
pub(crate) fn sorted_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let mut big = 0;
        for k in 1..n {
            if v[k].abs() > v[big].abs() {
                big = k;
            }
        }
        if n > 0 && v[big] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(c, &v);
        values.push(eig.eigenvalues[i]);
    }
    (values, vectors)
}

/// Greedy farthest-point sample of `m` indices starting from index 0.
pub fn farthest_point_sampling(points: &[Point3], m: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(m);
    if points.is_empty() || m == 0 {
        return chosen;
    }
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..m.min(points.len()) {
        chosen.push(next);
        let p = points[next];
        for (d, q) in dist.iter_mut().zip(points) {
            *d = d.min((q - p).norm_squared());
        }
        next = 0;
        for i in 1..points.len() {
            if dist[i] > dist[next] {
                next = i;
            }
        }
    }
    chosen
}

fn uniform_sampling(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    picked
}
