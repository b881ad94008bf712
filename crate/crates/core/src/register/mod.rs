//! Annealed MAP registration of a low-rank prior to a target surface.
//!
//! The prior is first conditioned on landmark correspondences. Each stage of
//! the annealing schedule then discards outliers, optionally conditions on
//! line correspondences, and minimizes [`Objective`] with L-BFGS starting
//! from the previous stage's fit.

mod objective;

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use objective::{filter_outliers, huber, Objective};

use crate::kernels::Location;
use crate::lowrank::{LandmarkObservation, LowRankGp};
use crate::mesh::{LandmarkSet, Polyline3, Surface, TriangleMesh};
use crate::optimize::{minimize, OptimizerConfig, StopReason};
use crate::{Error, Point3, Result, Rgb};

/// A reference polyline on the reference surface and its target counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinePair {
    pub reference: Vec<[f64; 3]>,
    pub target: Vec<[f64; 3]>,
}

impl LinePair {
    pub fn polylines(&self) -> Result<(Polyline3, Polyline3)> {
        let conv = |v: &[[f64; 3]]| Polyline3::new(v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect());
        Ok((conv(&self.reference)?, conv(&self.target)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Prior weights η, strictly decreasing.
    pub annealing_schedule: Vec<f64>,
    /// Scale of the surface residuals in mm. Only `η σ²` matters for the
    /// minimizer; 1 leaves η as the sole weight.
    pub sigma: f64,
    pub huber_delta: f64,
    pub outlier_distance_threshold: f64,
    pub landmark_noise: f64,
    /// Defaults to `landmark_noise`.
    pub line_noise: Option<f64>,
    pub lines: Vec<LinePair>,
    pub optimizer: OptimizerConfig,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            annealing_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            sigma: 1.0,
            huber_delta: 1.0,
            outlier_distance_threshold: 5.0,
            landmark_noise: 1.0,
            line_noise: None,
            lines: Vec::new(),
            optimizer: OptimizerConfig { max_iterations: 150, gradient_tolerance: 1e-4, ..Default::default() },
        }
    }
}

impl RegistrationConfig {
    pub fn from_json(text: &str, ctx: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::parse(ctx, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.annealing_schedule;
        if s.is_empty() || s.iter().any(|e| !(*e > 0.0 && e.is_finite())) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput(format!("annealing schedule must be positive and strictly decreasing: {s:?}")));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("huber_delta", self.huber_delta),
            ("outlier_distance_threshold", self.outlier_distance_threshold),
            ("landmark_noise", self.landmark_noise),
            ("line_noise", self.line_noise()),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        for l in &self.lines {
            l.polylines()?;
        }
        self.optimizer.validate()
    }

    pub fn line_noise(&self) -> f64 {
        self.line_noise.unwrap_or(self.landmark_noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub eta: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub active_vertices: usize,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Coefficients of the final fit in the final-stage model.
    pub coefficients: DVector<f64>,
    /// The same fit expressed in the prior's coefficients.
    pub prior_coefficients: DVector<f64>,
    /// Reference topology, registered positions, colors taken from the
    /// target when it has them.
    pub mesh: TriangleMesh,
    /// Distance of each registered vertex to the target surface.
    pub residuals: Vec<f64>,
    pub active: Vec<bool>,
    pub stages: Vec<StageReport>,
    /// Reference landmarks carried along by the deformation.
    pub landmarks: LandmarkSet,
}

impl RegistrationResult {
    /// JSON report: coefficients, stage objectives and residual statistics.
    pub fn report(&self) -> serde_json::Value {
        let mut sorted = self.residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len().max(1) as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let rms = (sorted.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
        let median = if sorted.is_empty() { 0.0 } else { sorted[sorted.len() / 2] };
        json!({
            "coefficients": self.prior_coefficients.as_slice(),
            "stages": self.stages,
            "active_vertex_count": self.active.iter().filter(|a| **a).count(),
            "vertex_count": self.active.len(),
            "residuals": {
                "mean": mean,
                "rms": rms,
                "median": median,
                "max": sorted.last().copied().unwrap_or(0.0),
            },
        })
    }
}

/// Observations pinning the matched reference landmarks to their targets.
pub fn landmark_observations(reference: &LandmarkSet, target: &LandmarkSet, noise: f64) -> Result<Vec<LandmarkObservation>> {
    let matched = reference.matched(target);
    if matched.is_empty() {
        let mut names: Vec<String> = reference.entries().iter().map(|l| l.name.clone()).collect();
        names.extend(target.entries().iter().map(|l| l.name.clone()));
        return Err(Error::UnmatchedLandmarks(names));
    }
    matched.into_iter().map(|(_, r, t)| LandmarkObservation::new(r, t - r, noise)).collect()
}

/// Conditions `model` on the line correspondences found from the fit `α`:
/// every reference polyline vertex is pulled towards the closest point of
/// its target polyline.
pub fn line_posterior(model: &LowRankGp, alpha: &DVector<f64>, lines: &[(Polyline3, Polyline3)], noise: f64) -> Result<LowRankGp> {
    let mut obs = Vec::new();
    for (reference, target) in lines {
        for p in reference.points() {
            let current = p + model.evaluate(alpha, &Location::free(*p))?;
            let c = target.closest_point(&current);
            obs.push(LandmarkObservation::new(*p, c - p, noise)?);
        }
    }
    model.posterior(&obs)
}

/// Registers `prior` to `target` over the annealing schedule. The target must already be
/// rigidly aligned with the reference.
pub fn register(
    prior: &LowRankGp,
    target: &TriangleMesh,
    reference_landmarks: &LandmarkSet,
    target_landmarks: &LandmarkSet,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::InvalidMesh("target mesh has no triangles".into()));
    }
    let surface = Arc::new(Surface::new(target.clone()));
    let observations = landmark_observations(reference_landmarks, target_landmarks, cfg.landmark_noise)?;
    let landmark_model = prior.posterior(&observations)?;
    let lines = cfg.lines.iter().map(LinePair::polylines).collect::<Result<Vec<_>>>()?;

    let mut field = landmark_model.mean().clone();
    let mut stages = Vec::with_capacity(cfg.annealing_schedule.len());
    let mut model = landmark_model.clone();
    let mut alpha = DVector::zeros(model.rank());
    let mut active = Vec::new();
    for (stage, &eta) in cfg.annealing_schedule.iter().enumerate() {
        let wrap = |e: Error| Error::Stage { stage, source: Box::new(e) };
        model = if lines.is_empty() {
            landmark_model.clone()
        } else {
            let a = landmark_model.project(&field).map_err(wrap)?;
            line_posterior(&landmark_model, &a, &lines, cfg.line_noise()).map_err(wrap)?
        };
        alpha = model.project(&field).map_err(wrap)?;
        active = filter_outliers(&model, &alpha, &surface, cfg.outlier_distance_threshold).map_err(wrap)?;
        let count = active.iter().filter(|a| **a).count();
        if count == 0 {
            return Err(wrap(Error::InvalidInput("every vertex was rejected as an outlier".into())));
        }
        let objective =
            Objective { model: &model, target: &surface, eta, sigma: cfg.sigma, huber_delta: cfg.huber_delta, active: &active };
        let mut failure = None;
        let result = minimize(
            |a| match objective.evaluate(a) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NAN, DVector::from_element(a.len(), f64::NAN))
                }
            },
            alpha.clone(),
            &cfg.optimizer,
        );
        if let Some(e) = failure {
            return Err(wrap(e));
        }
        let min = result.map_err(wrap)?;
        log::info!(
            "stage {stage}: eta {eta:e}, {count} active, E {:.6e} -> {:.6e} in {} iterations ({:?})",
            min.history[0],
            min.value,
            min.iterations,
            min.stop
        );
        stages.push(StageReport {
            eta,
            initial_objective: min.history[0],
            final_objective: min.value,
            iterations: min.iterations,
            evaluations: min.evaluations,
            stop: min.stop,
            active_vertices: count,
        });
        alpha = min.x;
        field = model.field(&alpha)?;
    }

    let warped = prior.warp_field(&field)?;
    let projections =
        crate::parallel_map(warped.vertices(), |p| surface.closest_point(p)).into_iter().collect::<Result<Vec<_>>>()?;
    let residuals = projections.iter().map(|sp| sp.distance).collect();
    let colors = target.colors().map(|c| {
        projections
            .iter()
            .map(|sp| {
                let t = target.triangles()[sp.triangle];
                let mut rgb: Rgb = [0.0; 3];
                for k in 0..3 {
                    for ch in 0..3 {
                        rgb[ch] += sp.barycentric[k] * c[t[k]][ch];
                    }
                }
                rgb
            })
            .collect()
    });
    let mesh = warped.with_colors(colors)?;
    let landmarks = {
        let zero = DVector::zeros(model.rank());
        let fitted = model.with_mean(field.clone())?;
        let mut out = Vec::new();
        for l in reference_landmarks.entries() {
            out.push((l.name.clone(), l.point + fitted.evaluate(&zero, &Location::free(l.point))?));
        }
        LandmarkSet::from_pairs(out)?
    };
    Ok(RegistrationResult {
        prior_coefficients: prior.project(&field)?,
        coefficients: alpha,
        mesh,
        residuals,
        active,
        stages,
        landmarks,
    })
}
