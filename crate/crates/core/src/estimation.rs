//! Maximum likelihood by BFGS on an unconstrained reparameterization.
//!
//! Layout of the unconstrained vector follows [`ParamSet::to_vec`]:
//! `logit π₁ (T), logit π₀ (T), g(δ₁) (T), g(δ₀) (T), h(τ) (2T)` with
//! `g = ln` (normal margins) or `logit` (beta margins) and `h = logit|τ|`
//! for sign-fixed Clayton rotations, `atanh τ` for BVN and Frank.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::copula::CopulaFamily;
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, Likelihood, ModelSpec, ParamSet};
use crate::linalg::Matrix;
use crate::margins::MarginKind;
use crate::math::{atanh, exp, expit, ln, logit, sqrt, tanh};
use crate::quadrature::{gauss_legendre_01, DEFAULT_NQ};

/// Largest |τ| reachable through the transform.
pub const TAU_CAP: f64 = 0.999;

/// Gradient max-norm required, together with a negligible objective change,
/// to stop before `grad_tol` is reached.
pub const STALL_GRAD_TOL: f64 = 1e-6;

/// Gradient max-norm under which a failed line search still counts as
/// converged.
pub const LOOSE_GRAD_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Outer quadrature size.
    pub nq: usize,
    /// Inner quadrature size; defaults to `nq`.
    pub nq_inner: Option<usize>,
    pub max_iter: usize,
    /// Relative central-difference step on the unconstrained scale.
    pub grad_step: f64,
    /// Gradient max-norm tolerance.
    pub grad_tol: f64,
    /// Relative objective-change tolerance.
    pub obj_tol: f64,
    pub start: Option<ParamSet>,
    /// Compute the Hessian and standard errors at the optimum.
    pub hessian: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nq: DEFAULT_NQ,
            nq_inner: None,
            max_iter: 500,
            grad_step: 1e-5,
            grad_tol: 1e-8,
            obj_tol: 1e-10,
            start: None,
            hessian: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    ObjectiveStalled,
    LineSearchFailed,
    MaxIterations,
    EvaluationFailed,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gradient tolerance",
            Termination::ObjectiveStalled => "objective change tolerance",
            Termination::LineSearchFailed => "line search failed",
            Termination::MaxIterations => "iteration limit",
            Termination::EvaluationFailed => "likelihood evaluation failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub estimates: ParamSet,
    /// Standard errors in [`ParamSet::to_vec`] order; `None` when the
    /// Hessian is not positive definite.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub evaluations: usize,
    /// Hessian of −log L on the unconstrained scale; empty when not requested.
    pub hessian: Matrix,
    pub hessian_pd: bool,
    pub grad_norm: f64,
    /// Some |τ̂| sits on [`TAU_CAP`].
    pub tau_at_cap: bool,
    pub start_neg_loglik: f64,
}

impl FitResult {
    pub fn se(&self, index: usize) -> Option<f64> {
        self.std_errors.as_ref().map(|s| s[index])
    }
}

fn tau_sign_fixed(f: CopulaFamily) -> Option<f64> {
    f.tau_sign()
}

pub fn to_unconstrained(params: &ParamSet, spec: &ModelSpec) -> Result<Vec<f64>> {
    params.validate(spec)?;
    let t = spec.n_tests();
    let mut z = Vec::with_capacity(6 * t);
    for &p in params.pi1.iter().chain(&params.pi0) {
        z.push(logit(p));
    }
    for &d in params.delta1.iter().chain(&params.delta0) {
        z.push(match spec.margin() {
            MarginKind::NormalLogit => ln(d),
            MarginKind::BetaIdentity => logit(d),
        });
    }
    for (c, &tau) in params.tau.iter().enumerate() {
        let fam = spec.family(c);
        let v = match tau_sign_fixed(fam) {
            Some(_) => {
                if tau == 0.0 {
                    return Err(Error::domain("tau", tau, "nonzero for a rotated Clayton copula"));
                }
                logit(tau.abs())
            }
            None => atanh(tau),
        };
        z.push(v);
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("parameter", f64::NAN, "interior of its domain"));
    }
    Ok(z)
}

pub fn from_unconstrained(z: &[f64], spec: &ModelSpec) -> Result<ParamSet> {
    let t = spec.n_tests();
    if z.len() != 6 * t {
        return Err(Error::Model(alloc::format!(
            "expected {} unconstrained values, got {}",
            6 * t,
            z.len()
        )));
    }
    // keep probabilities representable so the margins never see 0 or 1
    let prob = |x: f64| expit(x).clamp(1e-15, 1.0 - 1e-15);
    let mut v = Vec::with_capacity(6 * t);
    for &x in &z[..2 * t] {
        v.push(prob(x));
    }
    for &x in &z[2 * t..4 * t] {
        v.push(match spec.margin() {
            MarginKind::NormalLogit => exp(x).clamp(1e-300, 1e300),
            MarginKind::BetaIdentity => prob(x),
        });
    }
    for (c, &x) in z[4 * t..].iter().enumerate() {
        let tau = match tau_sign_fixed(spec.family(c)) {
            Some(s) => s * expit(x).min(TAU_CAP),
            None => tanh(x).clamp(-TAU_CAP, TAU_CAP),
        };
        v.push(tau);
    }
    ParamSet::from_slice(t, &v)
}

/// Diagonal of ∂(reported)/∂(unconstrained), ignoring the τ cap.
fn jacobian_diag(z: &[f64], spec: &ModelSpec) -> Vec<f64> {
    let t = spec.n_tests();
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let e = expit(x);
            if i < 2 * t {
                e * (1.0 - e)
            } else if i < 4 * t {
                match spec.margin() {
                    MarginKind::NormalLogit => exp(x),
                    MarginKind::BetaIdentity => e * (1.0 - e),
                }
            } else {
                match tau_sign_fixed(spec.family(i - 4 * t)) {
                    Some(s) => s * e * (1.0 - e),
                    None => {
                        let th = tanh(x);
                        1.0 - th * th
                    }
                }
            }
        })
        .collect()
}

/// Column of the likelihood touched by unconstrained coordinate `i`.
fn column_of(i: usize, t: usize) -> usize {
    if i < 4 * t {
        // π₁, π₀, δ₁, δ₀ blocks each span T columns
        let block = i / t;
        let test = i % t;
        if block % 2 == 0 {
            test
        } else {
            t + test
        }
    } else {
        i - 4 * t
    }
}

/// Pooled proportions, δ = 0.5 (normal) or 0.05 (beta), τ = ±0.3.
pub fn default_start(d: &Dataset, spec: &ModelSpec) -> Result<ParamSet> {
    let t = spec.n_tests();
    if d.n_tests() != t {
        return Err(Error::Model("dataset and model disagree on T".into()));
    }
    let mut pi1 = vec![0.0; t];
    let mut pi0 = vec![0.0; t];
    for (k, p) in pi1.iter_mut().enumerate() {
        let (y, n) = d.studies().iter().fold((0u64, 0u64), |(a, b), s| {
            let c = s.tests()[k];
            (a + c.tp, b + c.n_diseased)
        });
        *p = pooled(y, n);
    }
    for (k, p) in pi0.iter_mut().enumerate() {
        let (y, n) = d.studies().iter().fold((0u64, 0u64), |(a, b), s| {
            let c = s.tests()[k];
            (a + c.tn, b + c.n_nondiseased)
        });
        *p = pooled(y, n);
    }
    let delta = match spec.margin() {
        MarginKind::NormalLogit => 0.5,
        MarginKind::BetaIdentity => 0.05,
    };
    let tau = spec
        .families()
        .iter()
        .map(|f| 0.3 * f.tau_sign().unwrap_or(1.0))
        .collect();
    ParamSet::new(pi1, pi0, vec![delta; t], vec![delta; t], tau)
}

fn pooled(y: u64, n: u64) -> f64 {
    if n == 0 {
        0.5
    } else {
        (y as f64 / n as f64).clamp(0.01, 0.99)
    }
}

/// −log L as a function of the unconstrained vector, with cached columns.
pub struct Objective<'a> {
    lik: Likelihood<'a>,
    spec: &'a ModelSpec,
    step: f64,
    evaluations: usize,
}

/// Objective value with the per-column terms it was assembled from.
#[derive(Clone)]
pub struct Point {
    pub z: Vec<f64>,
    pub f: f64,
    cols: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    pub fn new(lik: Likelihood<'a>, spec: &'a ModelSpec, step: f64) -> Self {
        Objective {
            lik,
            spec,
            step,
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn point(&mut self, z: &[f64]) -> Result<Point> {
        self.evaluations += 1;
        let params = from_unconstrained(z, self.spec)?;
        let cols = self.lik.all_columns(&params)?;
        let f = self.lik.combine(&cols)?;
        Ok(Point {
            z: z.to_vec(),
            f,
            cols,
        })
    }

    fn step_for(&self, x: f64) -> f64 {
        self.step * x.abs().max(1.0)
    }

    /// f at `base` with coordinate `i` shifted by `h`, reusing cached columns.
    fn shifted(&mut self, base: &Point, i: usize, h: f64, scratch: &mut Vec<Vec<f64>>) -> Result<f64> {
        self.evaluations += 1;
        let t = self.spec.n_tests();
        let c = column_of(i, t);
        let mut z = base.z.clone();
        z[i] += h;
        let params = from_unconstrained(&z, self.spec)?;
        let col = self.lik.column_for(&params, c)?;
        scratch.clone_from(&base.cols);
        scratch[c] = col;
        self.lik.combine(scratch)
    }

    /// Central-difference gradient at `p`.
    pub fn gradient(&mut self, p: &Point) -> Result<Vec<f64>> {
        let mut scratch = Vec::new();
        let n = p.z.len();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let h = self.step_for(p.z[i]);
            let fp = self.shifted(p, i, h, &mut scratch)?;
            let fm = self.shifted(p, i, -h, &mut scratch)?;
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Hessian by central differences of the gradient, symmetrized.
    pub fn hessian(&mut self, p: &Point) -> Result<Matrix> {
        let n = p.z.len();
        let mut h = Matrix::zeros(n, n);
        for j in 0..n {
            let s = self.step_for(p.z[j]);
            let mut zp = p.z.clone();
            zp[j] += s;
            let pp = self.point(&zp)?;
            let gp = self.gradient(&pp)?;
            let mut zm = p.z.clone();
            zm[j] -= s;
            let pm = self.point(&zm)?;
            let gm = self.gradient(&pm)?;
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * s);
            }
        }
        Ok(h.symmetrized())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `spec` to `d` by maximum likelihood.
///
/// Fails only when the likelihood cannot be evaluated at the start point;
/// non-convergence is reported through [`FitResult::converged`].
pub fn fit(d: &Dataset, spec: &ModelSpec, cfg: &FitConfig) -> Result<FitResult> {
    if d.n_tests() != spec.n_tests() {
        return Err(Error::Model(alloc::format!(
            "dataset has {} tests, model has {}",
            d.n_tests(),
            spec.n_tests()
        )));
    }
    let outer = gauss_legendre_01(cfg.nq)?;
    let inner = gauss_legendre_01(cfg.nq_inner.unwrap_or(cfg.nq))?;
    let lik = Likelihood::new(d.studies(), spec, &outer, &inner)?;
    let mut obj = Objective::new(lik, spec, cfg.grad_step);
    let start = match &cfg.start {
        Some(s) => s.clone(),
        None => default_start(d, spec)?,
    };
    let z0 = to_unconstrained(&start, spec)?;
    let p0 = obj.point(&z0)?;
    let start_f = p0.f;
    let g0 = obj.gradient(&p0)?;
    let run = bfgs(&mut obj, p0, g0, cfg);
    finish(&mut obj, spec, run, start_f, cfg.hessian)
}

struct Run {
    best: Point,
    grad: Vec<f64>,
    iterations: usize,
    termination: Termination,
}

fn bfgs(obj: &mut Objective<'_>, p0: Point, g0: Vec<f64>, cfg: &FitConfig) -> Run {
    const ARMIJO_C: f64 = 1e-4;
    const MAX_STEP: f64 = 4.0;
    let n = p0.z.len();
    let mut x = p0;
    let mut g = g0;
    let mut hinv = Matrix::identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let termination = loop {
        if max_abs(&g) <= cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= cfg.max_iter {
            break Termination::MaxIterations;
        }
        iterations += 1;
        let mut dir: Vec<f64> = hinv.mul_vec(&g).iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hinv = Matrix::identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let longest = max_abs(&dir);
        if longest > MAX_STEP {
            let s = MAX_STEP / longest;
            dir.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let z: Vec<f64> = x.z.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            if let Ok(p) = obj.point(&z) {
                if p.f <= x.f + ARMIJO_C * alpha * slope {
                    accepted = Some(p);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            if !fresh {
                // retry along steepest descent before giving up
                hinv = Matrix::identity(n);
                fresh = true;
                continue;
            }
            break Termination::LineSearchFailed;
        };
        let g_next = match obj.gradient(&next) {
            Ok(v) => v,
            Err(_) => break Termination::EvaluationFailed,
        };
        let s: Vec<f64> = next.z.iter().zip(&x.z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * sqrt(dot(&s, &s) * dot(&y, &y)) {
            if fresh {
                // scale the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                hinv = Matrix::identity(n);
                for i in 0..n {
                    hinv[(i, i)] = scale;
                }
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        let df = x.f - next.f;
        x = next;
        g = g_next;
        if df <= cfg.obj_tol * x.f.abs().max(1.0) && max_abs(&g) <= STALL_GRAD_TOL {
            break Termination::ObjectiveStalled;
        }
    };
    Run {
        best: x,
        grad: g,
        iterations,
        termination,
    }
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy = h.mul_vec(y);
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

fn finish(
    obj: &mut Objective<'_>,
    spec: &ModelSpec,
    run: Run,
    start_f: f64,
    want_hessian: bool,
) -> Result<FitResult> {
    let grad_norm = max_abs(&run.grad);
    let converged = match run.termination {
        Termination::GradientTolerance | Termination::ObjectiveStalled => true,
        Termination::LineSearchFailed => grad_norm <= LOOSE_GRAD_TOL,
        Termination::MaxIterations | Termination::EvaluationFailed => false,
    };
    let estimates = from_unconstrained(&run.best.z, spec)?;
    let n = run.best.z.len();
    let hessian = if want_hessian {
        obj.hessian(&run.best)
            .unwrap_or_else(|_| Matrix::from_row_major(n, n, vec![f64::NAN; n * n]))
    } else {
        Matrix::zeros(0, 0)
    };
    let chol = if want_hessian { hessian.cholesky() } else { None };
    let std_errors = chol.as_ref().map(|c| {
        let cov = c.inverse();
        let jac = jacobian_diag(&run.best.z, spec);
        (0..n).map(|i| jac[i].abs() * sqrt(cov[(i, i)].max(0.0))).collect()
    });
    let tau_at_cap = estimates.tau.iter().any(|t| t.abs() >= TAU_CAP - 1e-12);
    Ok(FitResult {
        spec: spec.clone(),
        estimates,
        std_errors,
        loglik: -run.best.f,
        converged,
        termination: run.termination,
        iterations: run.iterations,
        evaluations: obj.evaluations(),
        hessian,
        hessian_pd: chol.is_some(),
        grad_norm,
        tau_at_cap,
        start_neg_loglik: start_f,
    })
}

/// One entry of a model-selection grid.
#[derive(Debug, Clone)]
pub struct GridEntry {
    /// Position in the input spec list.
    pub index: usize,
    pub spec: ModelSpec,
    pub outcome: core::result::Result<FitResult, String>,
}

impl GridEntry {
    pub fn loglik(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.loglik)
    }
}

/// Orders grid entries by log-likelihood (descending), then fewer
/// iterations, then input order; failed fits go last.
pub fn rank_grid(entries: &mut [GridEntry]) {
    entries.sort_by(|a, b| {
        let key = |e: &GridEntry| match &e.outcome {
            Ok(r) if r.loglik.is_finite() => (0, -r.loglik, r.iterations),
            _ => (1, 0.0, 0),
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.cmp(&kb.2))
            .then(a.index.cmp(&b.index))
    });
}

/// Fits every spec and ranks the results.
pub fn fit_grid(d: &Dataset, specs: &[ModelSpec], cfg: &FitConfig) -> Result<Vec<GridEntry>> {
    if specs.is_empty() {
        return Err(Error::Model("empty model grid".into()));
    }
    let mut out: Vec<GridEntry> = specs
        .iter()
        .enumerate()
        .map(|(index, spec)| {
            let mut c = cfg.clone();
            // a start tailored to one spec need not be valid for another
            if c.start.as_ref().is_some_and(|s| s.validate(spec).is_err()) {
                c.start = None;
            }
            GridEntry {
                index,
                spec: spec.clone(),
                outcome: fit(d, spec, &c).map_err(|e| alloc::format!("{e}")),
            }
        })
        .collect();
    rank_grid(&mut out);
    Ok(out)
}
