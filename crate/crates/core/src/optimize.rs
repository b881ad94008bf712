//! L-BFGS with a strong-Wolfe line search, and finite-difference gradient
//! checks.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖∞` falls to this value.
    pub gradient_tolerance: f64,
    /// Stop when one step decreases `f` by less than this fraction of `max(|f|, 1)`.
    pub value_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            value_tolerance: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.memory > 0
            && self.max_iterations > 0
            && self.max_line_search > 0
            && self.gradient_tolerance > 0.0
            && self.value_tolerance >= 0.0
            && 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid optimizer configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ValueTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Objective value after each accepted iteration, starting with `f(x₀)`.
    pub history: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::GradientTolerance | StopReason::ValueTolerance)
    }
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(&DVector<f64>) -> (f64, DVector<f64>)> Counted<F> {
    fn eval(&mut self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluations += 1;
        (self.f)(x)
    }
}

fn finite(f: f64, g: &DVector<f64>) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Minimizes `f`, which returns the value and gradient at a point.
///
/// A non-finite value or gradient at `x0`, or one that persists through
/// repeated step halving, aborts with [`Error::Optimizer`].
pub fn minimize<F>(f: F, x0: DVector<f64>, cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    cfg.validate()?;
    let mut f = Counted { f, evaluations: 0 };
    let mut x = x0;
    let (mut fx, mut g) = f.eval(&x);
    if g.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: g.len() });
    }
    if !finite(fx, &g) {
        return Err(Error::Optimizer { iterations: 0, reason: format!("non-finite objective at start (value {fx})") });
    }
    let mut history = vec![fx];
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    if g.amax() <= cfg.gradient_tolerance {
        stop = StopReason::GradientTolerance;
    } else {
        while iterations < cfg.max_iterations {
            let mut d = two_loop(&g, &s_hist, &y_hist);
            if g.dot(&d) >= 0.0 {
                s_hist.clear();
                y_hist.clear();
                d = -&g;
            }
            let a0 = if s_hist.is_empty() { (1.0 / d.amax()).min(1.0) } else { 1.0 };
            let step = match line_search(&mut f, &x, fx, &g, &d, a0, cfg, iterations)? {
                Some(step) => step,
                None if !s_hist.is_empty() => {
                    s_hist.clear();
                    y_hist.clear();
                    continue;
                }
                None => {
                    stop = StopReason::LineSearchFailed;
                    break;
                }
            };
            let (x_new, f_new, g_new) = step;
            iterations += 1;
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                if s_hist.len() == cfg.memory {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(y);
            }
            let decrease = fx - f_new;
            x = x_new;
            fx = f_new;
            g = g_new;
            history.push(fx);
            if g.amax() <= cfg.gradient_tolerance {
                stop = StopReason::GradientTolerance;
                break;
            }
            if decrease <= cfg.value_tolerance * fx.abs().max(1.0) {
                stop = StopReason::ValueTolerance;
                break;
            }
        }
    }
    log::debug!("L-BFGS stopped after {iterations} iterations ({stop:?}), f = {fx:.6e}, |g|inf = {:.3e}", g.amax());
    Ok(Minimum { x, value: fx, gradient: g, iterations, evaluations: f.evaluations, stop, history })
}

fn two_loop(g: &DVector<f64>, s: &[DVector<f64>], y: &[DVector<f64>]) -> DVector<f64> {
    let mut q = g.clone();
    let mut alpha = vec![0.0; s.len()];
    for i in (0..s.len()).rev() {
        let rho = 1.0 / y[i].dot(&s[i]);
        alpha[i] = rho * s[i].dot(&q);
        q.axpy(-alpha[i], &y[i], 1.0);
    }
    if let (Some(sl), Some(yl)) = (s.last(), y.last()) {
        q *= sl.dot(yl) / yl.dot(yl);
    }
    for i in 0..s.len() {
        let rho = 1.0 / y[i].dot(&s[i]);
        let beta = rho * y[i].dot(&q);
        q.axpy(alpha[i] - beta, &s[i], 1.0);
    }
    -q
}

type Step = (DVector<f64>, f64, DVector<f64>);

struct Trial {
    a: f64,
    f: f64,
    dphi: f64,
    x: DVector<f64>,
    g: DVector<f64>,
}

/// Strong-Wolfe search along `d`. `Ok(None)` when no acceptable step exists.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut Counted<F>,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    d: &DVector<f64>,
    a_init: f64,
    cfg: &OptimizerConfig,
    iteration: usize,
) -> Result<Option<Step>>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let dphi0 = g0.dot(d);
    let armijo = |a: f64, fa: f64| fa <= f0 + cfg.c1 * a * dphi0;
    let curvature = |dphi: f64| dphi.abs() <= -cfg.c2 * dphi0;

    // Evaluates at `a`, halving towards `lo` while the objective is not finite.
    let mut probe = |a: f64, lo: f64| -> Result<Trial> {
        let mut a = a;
        for _ in 0..60 {
            let xa = x + d * a;
            let (fa, ga) = f.eval(&xa);
            if finite(fa, &ga) {
                return Ok(Trial { a, f: fa, dphi: ga.dot(d), x: xa, g: ga });
            }
            a = lo + 0.5 * (a - lo);
        }
        Err(Error::Optimizer { iterations: iteration, reason: "objective stayed non-finite while backtracking".into() })
    };
    let accept = |t: Trial| -> Option<Step> {
        debug_assert!(t.f <= f0 + cfg.c1 * t.a * dphi0 && t.dphi.abs() <= -cfg.c2 * dphi0);
        Some((t.x, t.f, t.g))
    };

    let mut prev = Trial { a: 0.0, f: f0, dphi: dphi0, x: x.clone(), g: g0.clone() };
    let mut a = a_init;
    for i in 0..cfg.max_line_search {
        let t = probe(a, prev.a)?;
        if !armijo(t.a, t.f) || (i > 0 && t.f >= prev.f) {
            return zoom(probe, prev, t, f0, dphi0, cfg, &armijo, &curvature).map(|o| o.and_then(accept));
        }
        if curvature(t.dphi) {
            return Ok(accept(t));
        }
        if t.dphi >= 0.0 {
            return zoom(probe, t, prev, f0, dphi0, cfg, &armijo, &curvature).map(|o| o.and_then(accept));
        }
        a = 2.0 * t.a;
        prev = t;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom(
    mut probe: impl FnMut(f64, f64) -> Result<Trial>,
    mut lo: Trial,
    mut hi: Trial,
    _f0: f64,
    _dphi0: f64,
    cfg: &OptimizerConfig,
    armijo: &impl Fn(f64, f64) -> bool,
    curvature: &impl Fn(f64) -> bool,
) -> Result<Option<Trial>> {
    for _ in 0..cfg.max_line_search {
        let width = hi.a - lo.a;
        if width.abs() <= 1e-16 * lo.a.abs().max(1e-16) {
            break;
        }
        let (left, right) = if width > 0.0 { (lo.a, hi.a) } else { (hi.a, lo.a) };
        let margin = 0.1 * width.abs();
        let mut a = cubic_min(&lo, &hi);
        if !(a.is_finite() && a >= left + margin && a <= right - margin) {
            a = 0.5 * (lo.a + hi.a);
        }
        let t = probe(a, lo.a)?;
        if !armijo(t.a, t.f) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(t.dphi) {
                return Ok(Some(t));
            }
            if t.dphi * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    Ok(None)
}

fn cubic_min(p: &Trial, q: &Trial) -> f64 {
    let d1 = p.dphi + q.dphi - 3.0 * (p.f - q.f) / (p.a - q.a);
    let disc = d1 * d1 - p.dphi * q.dphi;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (q.a - p.a).signum() * disc.sqrt();
    q.a - (q.a - p.a) * (q.dphi + d2 - d1) / (q.dphi - p.dphi + 2.0 * d2)
}

/// Largest per-component relative error between the analytic gradient and
/// central differences with the given step.
pub fn check_gradient<F>(mut f: F, x: &DVector<f64>, step: f64) -> f64
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, g) = f(x);
    let fd = DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            (f(&xp).0 - f(&xm).0) / (2.0 * step)
        }),
    );
    let floor = (1e-6 * fd.amax()).max(1e-12);
    g.iter().zip(fd.iter()).map(|(a, n)| (a - n).abs() / n.abs().max(floor)).fold(0.0, f64::max)
}
