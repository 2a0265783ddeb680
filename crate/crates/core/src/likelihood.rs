//! Study records, model specification, and the one-factor copula likelihood.
//!
//! Latent variables are indexed by a column `c` in `0..2T`: columns `0..T`
//! are the sensitivities of tests `1..T`, columns `T..2T` the specificities.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Open01};

use crate::copula::{CopulaFamily, CopulaParam};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::margins::{binom_ln_pmf, MarginKind, MarginSpec};
use crate::math::{exp, ln, ln_choose, logit, norm_quantile, sin, softplus, sqrt, PI};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TestCounts {
    pub tp: u64,
    pub n_diseased: u64,
    pub tn: u64,
    pub n_nondiseased: u64,
}

impl TestCounts {
    pub fn new(tp: u64, n_diseased: u64, tn: u64, n_nondiseased: u64) -> Self {
        TestCounts {
            tp,
            n_diseased,
            tn,
            n_nondiseased,
        }
    }

    pub fn fn_count(&self) -> u64 {
        self.n_diseased.saturating_sub(self.tp)
    }

    pub fn fp_count(&self) -> u64 {
        self.n_nondiseased.saturating_sub(self.tn)
    }
}

/// One study: a 2×2 table per test, all sharing the gold-standard totals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StudyRecord {
    tests: Vec<TestCounts>,
}

impl StudyRecord {
    pub fn new(tests: Vec<TestCounts>) -> Result<Self> {
        let Some(first) = tests.first() else {
            return Err(Error::Dataset("study has no tests".to_string()));
        };
        for (t, c) in tests.iter().enumerate() {
            if c.tp > c.n_diseased {
                return Err(Error::Dataset(format!(
                    "test {}: tp = {} exceeds n_diseased = {}",
                    t + 1,
                    c.tp,
                    c.n_diseased
                )));
            }
            if c.tn > c.n_nondiseased {
                return Err(Error::Dataset(format!(
                    "test {}: tn = {} exceeds n_nondiseased = {}",
                    t + 1,
                    c.tn,
                    c.n_nondiseased
                )));
            }
            if c.n_diseased != first.n_diseased || c.n_nondiseased != first.n_nondiseased {
                return Err(Error::Dataset(format!(
                    "tests 1 and {} disagree on the gold-standard totals ({}/{} vs {}/{}); \
                     the gold standard must be the same for all tests",
                    t + 1,
                    first.n_diseased,
                    first.n_nondiseased,
                    c.n_diseased,
                    c.n_nondiseased
                )));
            }
        }
        Ok(StudyRecord { tests })
    }

    pub fn tests(&self) -> &[TestCounts] {
        &self.tests
    }

    pub fn n_tests(&self) -> usize {
        self.tests.len()
    }

    pub fn n_diseased(&self) -> u64 {
        self.tests[0].n_diseased
    }

    pub fn n_nondiseased(&self) -> u64 {
        self.tests[0].n_nondiseased
    }

    /// (successes, trials) of latent column `c`.
    pub fn column(&self, c: usize) -> (u64, u64) {
        let t = self.tests.len();
        if c < t {
            (self.tests[c].tp, self.tests[c].n_diseased)
        } else {
            let x = &self.tests[c - t];
            (x.tn, x.n_nondiseased)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    studies: Vec<StudyRecord>,
}

impl Dataset {
    /// Studies labelled `1..=N`.
    pub fn new(studies: Vec<StudyRecord>) -> Result<Self> {
        let ids = (1..=studies.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, studies)
    }

    pub fn with_ids(ids: Vec<String>, studies: Vec<StudyRecord>) -> Result<Self> {
        let Some(first) = studies.first() else {
            return Err(Error::Dataset("no studies".to_string()));
        };
        if ids.len() != studies.len() {
            return Err(Error::Dataset("study id count does not match study count".to_string()));
        }
        let t = first.n_tests();
        for (id, s) in ids.iter().zip(&studies) {
            if s.n_tests() != t {
                return Err(Error::Dataset(format!(
                    "study {id} has {} tests, expected {t}",
                    s.n_tests()
                )));
            }
        }
        Ok(Dataset { ids, studies })
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_tests(&self) -> usize {
        self.studies[0].n_tests()
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }
}

/// Copula specifications of the standard model grid.
pub const STANDARD_COPULAS: [&str; 5] = ["bvn", "frank", "cln0-90", "cln0-270", "cln180-270"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    margin: MarginKind,
    families: Vec<CopulaFamily>,
}

impl ModelSpec {
    /// `families` holds 2T linking copulas: sensitivities first, then specificities.
    pub fn new(margin: MarginKind, families: Vec<CopulaFamily>) -> Result<Self> {
        if families.is_empty() || families.len() % 2 != 0 {
            return Err(Error::Model(format!(
                "need 2T linking copulas, got {}",
                families.len()
            )));
        }
        Ok(ModelSpec { margin, families })
    }

    pub fn uniform(margin: MarginKind, family: CopulaFamily, n_tests: usize) -> Self {
        ModelSpec {
            margin,
            families: vec![family; 2 * n_tests],
        }
    }

    /// Family `sens` for every sensitivity, `spec` for every specificity.
    pub fn split(margin: MarginKind, sens: CopulaFamily, spec: CopulaFamily, n_tests: usize) -> Self {
        let mut families = vec![sens; n_tests];
        families.extend(core::iter::repeat_n(spec, n_tests));
        ModelSpec { margin, families }
    }

    /// Parses `bvn`, `frank`, `cln<a>-<b>` (e.g. `cln0-270`), any single family
    /// name, or an explicit comma-separated list of 2T family names.
    pub fn parse(margin: MarginKind, text: &str, n_tests: usize) -> Result<Self> {
        let text = text.trim();
        if text.contains(',') {
            let families = text
                .split(',')
                .map(|s| s.parse::<CopulaFamily>())
                .collect::<Result<Vec<_>>>()?;
            if families.len() != 2 * n_tests {
                return Err(Error::Model(format!(
                    "copula list has {} entries, expected {}",
                    families.len(),
                    2 * n_tests
                )));
            }
            return Self::new(margin, families);
        }
        let lower = text.to_ascii_lowercase();
        if let Some((a, b)) = lower.split_once('-') {
            let sens = clayton_rotation(a)?;
            let spec = clayton_rotation(&format!("cln{b}"))?;
            return Ok(Self::split(margin, sens, spec, n_tests));
        }
        Ok(Self::uniform(margin, lower.parse()?, n_tests))
    }

    pub fn margin(&self) -> MarginKind {
        self.margin
    }

    pub fn families(&self) -> &[CopulaFamily] {
        &self.families
    }

    pub fn family(&self, c: usize) -> CopulaFamily {
        self.families[c]
    }

    pub fn n_tests(&self) -> usize {
        self.families.len() / 2
    }

    /// Short copula label: `bvn`, `frank`, `cln0-270`, or the full list.
    pub fn copula_label(&self) -> String {
        let t = self.n_tests();
        let sens = self.families[0];
        let spec = self.families[t];
        let split = self.families[..t].iter().all(|&f| f == sens)
            && self.families[t..].iter().all(|&f| f == spec);
        let is_cln = |f: CopulaFamily| !matches!(f, CopulaFamily::Bvn | CopulaFamily::Frank);
        if split && sens == spec && !is_cln(sens) {
            return sens.name().to_string();
        }
        if split && is_cln(sens) && is_cln(spec) {
            return format!("{}-{}", sens.name(), &spec.name()[3..]);
        }
        let names: Vec<&str> = self.families.iter().map(|f| f.name()).collect();
        names.join(",")
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.copula_label(), self.margin)
    }

    /// The five copula specifications under both margins.
    pub fn standard_grid(n_tests: usize) -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for margin in [MarginKind::NormalLogit, MarginKind::BetaIdentity] {
            for name in STANDARD_COPULAS {
                out.push(Self::parse(margin, name, n_tests).expect("standard copula names parse"));
            }
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn clayton_rotation(s: &str) -> Result<CopulaFamily> {
    let fam: CopulaFamily = s.parse()?;
    match fam {
        CopulaFamily::Bvn | CopulaFamily::Frank => Err(Error::Model(format!(
            "`{s}`: only Clayton rotations can be paired with `-`"
        ))),
        f => Ok(f),
    }
}

/// Meta-analytic parameters. Dependence is stored as Kendall's τ, one per
/// column in the order (sensitivity 1..T, specificity 1..T).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub pi1: Vec<f64>,
    pub pi0: Vec<f64>,
    pub delta1: Vec<f64>,
    pub delta0: Vec<f64>,
    pub tau: Vec<f64>,
}

impl ParamSet {
    pub fn new(
        pi1: Vec<f64>,
        pi0: Vec<f64>,
        delta1: Vec<f64>,
        delta0: Vec<f64>,
        tau: Vec<f64>,
    ) -> Result<Self> {
        let t = pi1.len();
        if t == 0 || pi0.len() != t || delta1.len() != t || delta0.len() != t || tau.len() != 2 * t {
            return Err(Error::Model(
                "parameter vectors must have lengths T, T, T, T, 2T".to_string(),
            ));
        }
        Ok(ParamSet {
            pi1,
            pi0,
            delta1,
            delta0,
            tau,
        })
    }

    pub fn n_tests(&self) -> usize {
        self.pi1.len()
    }

    pub fn pi(&self, c: usize) -> f64 {
        let t = self.n_tests();
        if c < t {
            self.pi1[c]
        } else {
            self.pi0[c - t]
        }
    }

    pub fn delta(&self, c: usize) -> f64 {
        let t = self.n_tests();
        if c < t {
            self.delta1[c]
        } else {
            self.delta0[c - t]
        }
    }

    pub fn margin(&self, c: usize, kind: MarginKind) -> Result<MarginSpec> {
        MarginSpec::new(kind, self.pi(c), self.delta(c))
    }

    /// Native copula parameter of column `c`; τ = 0 gives independence.
    pub fn copula(&self, c: usize, spec: &ModelSpec) -> Result<CopulaParam> {
        CopulaParam::from_tau(spec.family(c), self.tau[c])
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let t = self.n_tests();
        if spec.n_tests() != t || self.pi0.len() != t || self.tau.len() != 2 * t {
            return Err(Error::Model(format!(
                "parameters are for {t} tests, model has {}",
                spec.n_tests()
            )));
        }
        for c in 0..2 * t {
            self.margin(c, spec.margin())?;
            let tau = self.tau[c];
            if !(tau.abs() < 1.0) {
                return Err(Error::domain("tau", tau, "|tau| < 1"));
            }
            if !spec.family(c).admits_tau(tau) {
                return Err(Error::domain("tau", tau, "sign compatible with the linking copula"));
            }
        }
        Ok(())
    }

    /// Flattened as (π₁, π₀, δ₁, δ₀, τ).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6 * self.n_tests());
        for part in [&self.pi1, &self.pi0, &self.delta1, &self.delta0, &self.tau] {
            v.extend_from_slice(part);
        }
        v
    }

    pub fn from_slice(n_tests: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 6 * n_tests {
            return Err(Error::Model(format!(
                "expected {} parameters, got {}",
                6 * n_tests,
                v.len()
            )));
        }
        let t = n_tests;
        Self::new(
            v[..t].to_vec(),
            v[t..2 * t].to_vec(),
            v[2 * t..3 * t].to_vec(),
            v[3 * t..4 * t].to_vec(),
            v[4 * t..].to_vec(),
        )
    }

    /// Labels matching [`to_vec`](Self::to_vec): `pi11`, `pi01`, `delta11`, `tau01`, …
    pub fn names(n_tests: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(6 * n_tests);
        let label = |name: &str, k: u8, t: usize| {
            if n_tests < 10 {
                format!("{name}{k}{t}")
            } else {
                format!("{name}{k}_{t}")
            }
        };
        for (name, k) in [("pi", 1), ("pi", 0), ("delta", 1), ("delta", 0)] {
            for t in 1..=n_tests {
                out.push(label(name, k, t));
            }
        }
        for k in [1, 0] {
            for t in 1..=n_tests {
                out.push(label("tau", k, t));
            }
        }
        out
    }
}

/// Column-wise evaluator of the log-likelihood over a set of studies.
///
/// For column `c`, study `i` and outer node `q₁` the cached term is
/// `ln Σ_{q₂} w_{q₂} g(y; n, x(c, q₁, q₂))`; the study log-pmf is the
/// log-sum-exp over `q₁` of `ln w_{q₁}` plus the column terms.
pub struct Likelihood<'a> {
    studies: &'a [StudyRecord],
    spec: &'a ModelSpec,
    outer: &'a QuadratureRule,
    inner: &'a QuadratureRule,
    ln_w_outer: Vec<f64>,
    ln_w_inner: Vec<f64>,
}

impl<'a> Likelihood<'a> {
    pub fn new(
        studies: &'a [StudyRecord],
        spec: &'a ModelSpec,
        outer: &'a QuadratureRule,
        inner: &'a QuadratureRule,
    ) -> Result<Self> {
        if let Some(s) = studies.iter().find(|s| s.n_tests() != spec.n_tests()) {
            return Err(Error::Model(format!(
                "study has {} tests, model has {}",
                s.n_tests(),
                spec.n_tests()
            )));
        }
        Ok(Likelihood {
            studies,
            spec,
            outer,
            inner,
            ln_w_outer: outer.weights().iter().map(|&w| ln(w)).collect(),
            ln_w_inner: inner.weights().iter().map(|&w| ln(w)).collect(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn n_columns(&self) -> usize {
        2 * self.spec.n_tests()
    }

    pub fn neg_log_lik(&self, params: &ParamSet) -> Result<f64> {
        let cols = self.all_columns(params)?;
        self.combine(&cols)
    }

    pub fn study_ln_pmfs(&self, params: &ParamSet) -> Result<Vec<f64>> {
        let cols = self.all_columns(params)?;
        (0..self.studies.len())
            .map(|i| self.checked_study(&cols, i))
            .collect()
    }

    pub(crate) fn all_columns(&self, params: &ParamSet) -> Result<Vec<Vec<f64>>> {
        params.validate(self.spec)?;
        (0..self.n_columns())
            .map(|c| self.column_for(params, c))
            .collect()
    }

    pub(crate) fn column_for(&self, params: &ParamSet, c: usize) -> Result<Vec<f64>> {
        let copula = params.copula(c, self.spec)?;
        let margin = params.margin(c, self.spec.margin())?;
        self.column_terms(c, &copula, &margin)
    }

    /// Cached terms of column `c`, laid out as `[study * nq_outer + q₁]`.
    pub(crate) fn column_terms(
        &self,
        c: usize,
        copula: &CopulaParam,
        margin: &MarginSpec,
    ) -> Result<Vec<f64>> {
        let nqo = self.outer.len();
        let nqi = self.inner.len();
        let counts: Vec<(f64, f64, f64)> = self
            .studies
            .iter()
            .map(|s| {
                let (y, n) = s.column(c);
                (y as f64, (n - y) as f64, ln_choose(n, y))
            })
            .collect();
        let mut out = vec![0.0; self.studies.len() * nqo];
        let mut lx = vec![0.0; nqi];
        let mut lxc = vec![0.0; nqi];
        let mut terms = vec![0.0; nqi];
        let independent = copula.theta() == 0.0;
        for q1 in 0..nqo {
            if !independent || q1 == 0 {
                let v = self.outer.nodes()[q1];
                for q2 in 0..nqi {
                    let u = copula.ccdf_inv_interior(self.inner.nodes()[q2], v);
                    let (a, b) = margin.ln_prob_pair(u);
                    if a.is_nan() || b.is_nan() || a > 0.0 || b > 0.0 {
                        return Err(Error::Evaluation {
                            margin: c,
                            outer: q1,
                            inner: q2,
                        });
                    }
                    lx[q2] = a;
                    lxc[q2] = b;
                }
            }
            for (i, &(ys, fs, lc)) in counts.iter().enumerate() {
                let mut hi = f64::NEG_INFINITY;
                for q2 in 0..nqi {
                    let mut t = self.ln_w_inner[q2];
                    if ys > 0.0 {
                        t += ys * lx[q2];
                    }
                    if fs > 0.0 {
                        t += fs * lxc[q2];
                    }
                    terms[q2] = t;
                    hi = hi.max(t);
                }
                let mut s = 0.0;
                for &t in &terms {
                    s += exp(t - hi);
                }
                out[i * nqo + q1] = lc + hi + ln(s);
            }
        }
        Ok(out)
    }

    /// −Σᵢ ln pmfᵢ from cached columns.
    pub(crate) fn combine(&self, cols: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.studies.len() {
            total -= self.checked_study(cols, i)?;
        }
        Ok(total)
    }

    fn checked_study(&self, cols: &[Vec<f64>], i: usize) -> Result<f64> {
        let lp = self.study_from_columns(cols, i);
        if lp.is_finite() && lp <= 1e-12 {
            Ok(lp.min(0.0))
        } else {
            Err(Error::StudyPmf {
                study: i,
                value: exp(lp),
            })
        }
    }

    fn study_from_columns(&self, cols: &[Vec<f64>], i: usize) -> f64 {
        let nqo = self.outer.len();
        let base = i * nqo;
        let mut hi = f64::NEG_INFINITY;
        let mut acc = vec![0.0; nqo];
        for (q1, a) in acc.iter_mut().enumerate() {
            let mut s = self.ln_w_outer[q1];
            for col in cols {
                s += col[base + q1];
            }
            *a = s;
            hi = hi.max(s);
        }
        if !hi.is_finite() {
            return hi;
        }
        let s: f64 = acc.iter().map(|&a| exp(a - hi)).sum();
        hi + ln(s)
    }
}

/// ln of the joint pmf of one study.
pub fn ln_study_pmf(
    s: &StudyRecord,
    spec: &ModelSpec,
    params: &ParamSet,
    outer: &QuadratureRule,
    inner: &QuadratureRule,
) -> Result<f64> {
    let lik = Likelihood::new(core::slice::from_ref(s), spec, outer, inner)?;
    Ok(lik.study_ln_pmfs(params)?[0])
}

/// Joint pmf of one study by the dependent Gauss-Legendre double sum.
pub fn study_pmf(
    s: &StudyRecord,
    spec: &ModelSpec,
    params: &ParamSet,
    outer: &QuadratureRule,
    inner: &QuadratureRule,
) -> Result<f64> {
    ln_study_pmf(s, spec, params, outer, inner).map(exp)
}

pub fn neg_log_lik(
    d: &Dataset,
    spec: &ModelSpec,
    params: &ParamSet,
    outer: &QuadratureRule,
    inner: &QuadratureRule,
) -> Result<f64> {
    Likelihood::new(d.studies(), spec, outer, inner)?.neg_log_lik(params)
}

/// Monte-Carlo estimate of the study pmf and its standard error.
pub fn mc_pmf_oracle(
    s: &StudyRecord,
    spec: &ModelSpec,
    params: &ParamSet,
    ndraws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    params.validate(spec)?;
    if spec.n_tests() != s.n_tests() {
        return Err(Error::Model("study and model disagree on T".to_string()));
    }
    let cols = 2 * spec.n_tests();
    let copulas = (0..cols)
        .map(|c| params.copula(c, spec))
        .collect::<Result<Vec<_>>>()?;
    let margins = (0..cols)
        .map(|c| params.margin(c, spec.margin()))
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<(u64, u64)> = (0..cols).map(|c| s.column(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..ndraws {
        let v: f64 = Open01.sample(&mut rng);
        let mut lp = 0.0;
        for c in 0..cols {
            let w: f64 = Open01.sample(&mut rng);
            let u = copulas[c].ccdf_inv(w, v)?;
            let x = margins[c].prob_from_u(u)?;
            let (y, n) = counts[c];
            lp += binom_ln_pmf(y, n, x)?;
        }
        let p = exp(lp);
        sum += p;
        sum_sq += p * p;
    }
    let n = ndraws as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok((mean, sqrt(var / n)))
}

/// The study pmf through the additive normal representation
/// `z = θ w + √(1−θ²) ε`, valid for normal margins with BVN linking copulas.
/// Uses the same node sets mapped through Φ⁻¹.
pub fn glmm_pmf_bvn(
    s: &StudyRecord,
    spec: &ModelSpec,
    params: &ParamSet,
    outer: &QuadratureRule,
    inner: &QuadratureRule,
) -> Result<f64> {
    if spec.margin() != MarginKind::NormalLogit
        || spec.families().iter().any(|&f| f != CopulaFamily::Bvn)
    {
        return Err(Error::Model(
            "the normal representation needs normal margins and BVN linking copulas".to_string(),
        ));
    }
    params.validate(spec)?;
    let cols = 2 * spec.n_tests();
    let w_nodes: Vec<f64> = outer.nodes().iter().map(|&u| norm_quantile(u)).collect();
    let e_nodes: Vec<f64> = inner.nodes().iter().map(|&u| norm_quantile(u)).collect();
    let mut outer_terms = Vec::with_capacity(outer.len());
    for (q1, &w) in w_nodes.iter().enumerate() {
        let mut acc = ln(outer.weights()[q1]);
        for c in 0..cols {
            let load = sin(0.5 * PI * params.tau[c]);
            let resid = sqrt(1.0 - load * load);
            let (mu, sd) = (logit(params.pi(c)), params.delta(c));
            let (y, n) = s.column(c);
            let (ys, fs) = (y as f64, (n - y) as f64);
            let terms: Vec<f64> = e_nodes
                .iter()
                .zip(inner.weights())
                .map(|(&e, &wt)| {
                    let eta = mu + sd * (load * w + resid * e);
                    ln(wt) - ys * softplus(-eta) - fs * softplus(eta)
                })
                .collect();
            acc += ln_choose(n, y) + log_sum_exp(&terms);
        }
        outer_terms.push(acc);
    }
    Ok(exp(log_sum_exp(&outer_terms)))
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() {
        return hi;
    }
    hi + ln(xs.iter().map(|&x| exp(x - hi)).sum::<f64>())
}

/// Correlation matrix of the 2T latent normals under BVN linking copulas:
/// unit diagonal, off-diagonal entries θᵢθⱼ with θ = sin(πτ/2).
pub fn implied_correlation_matrix(params: &ParamSet) -> Matrix {
    let load: Vec<f64> = params.tau.iter().map(|&t| sin(0.5 * PI * t)).collect();
    let n = load.len();
    let mut m = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, j)] = load[i] * load[j];
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_01;
    use approx::assert_relative_eq;

    fn study(tp: &[u64], tn: &[u64], n1: u64, n0: u64) -> StudyRecord {
        StudyRecord::new(
            tp.iter()
                .zip(tn)
                .map(|(&a, &b)| TestCounts::new(a, n1, b, n0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn record_invariants() {
        assert!(StudyRecord::new(vec![TestCounts::new(5, 4, 1, 2)]).is_err());
        assert!(StudyRecord::new(vec![TestCounts::new(1, 4, 3, 2)]).is_err());
        let err = StudyRecord::new(vec![TestCounts::new(1, 40, 1, 2), TestCounts::new(1, 39, 1, 2)]);
        assert!(matches!(err, Err(Error::Dataset(m)) if m.contains("same for all tests")));
        assert!(matches!(Dataset::new(vec![]), Err(Error::Dataset(m)) if m == "no studies"));
    }

    #[test]
    fn spec_shorthand() {
        let s = ModelSpec::parse(MarginKind::NormalLogit, "cln0-270", 2).unwrap();
        assert_eq!(
            s.families(),
            &[
                CopulaFamily::Clayton0,
                CopulaFamily::Clayton0,
                CopulaFamily::Clayton270,
                CopulaFamily::Clayton270
            ]
        );
        assert_eq!(s.label(), "cln0-270/normal");
        let b = ModelSpec::parse(MarginKind::BetaIdentity, "bvn", 3).unwrap();
        assert_eq!(b.label(), "bvn/beta");
        let l = ModelSpec::parse(MarginKind::NormalLogit, "frank,cln0,bvn,cln90", 2).unwrap();
        assert_eq!(l.copula_label(), "frank,cln0,bvn,cln90");
        assert!(ModelSpec::parse(MarginKind::NormalLogit, "bvn,frank", 2).is_err());
        assert!(ModelSpec::parse(MarginKind::NormalLogit, "bvn-270", 2).is_err());
        assert_eq!(ModelSpec::standard_grid(2).len(), 10);
    }

    #[test]
    fn independence_factorizes() {
        let outer = gauss_legendre_01(15).unwrap();
        let inner = gauss_legendre_01(20).unwrap();
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "bvn", 2).unwrap();
        let p = ParamSet::new(
            vec![0.8, 0.6],
            vec![0.7, 0.9],
            vec![1.0, 0.5],
            vec![0.8, 1.2],
            vec![0.0; 4],
        )
        .unwrap();
        let s = study(&[30, 25], &[60, 70], 40, 80);
        let got = study_pmf(&s, &spec, &p, &outer, &inner).unwrap();
        let mut want = 1.0;
        for c in 0..4 {
            let m = p.margin(c, MarginKind::NormalLogit).unwrap();
            let (y, n) = s.column(c);
            want *= inner.integrate(|u| binom_ln_pmf(y, n, m.prob_from_u(u).unwrap()).unwrap().exp());
        }
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }

    #[test]
    fn names_follow_layout() {
        let n = ParamSet::names(2);
        assert_eq!(
            n,
            [
                "pi11", "pi12", "pi01", "pi02", "delta11", "delta12", "delta01", "delta02", "tau11",
                "tau12", "tau01", "tau02"
            ]
        );
    }

    #[test]
    fn empty_counts_give_unit_pmf() {
        let outer = gauss_legendre_01(5).unwrap();
        let spec = ModelSpec::parse(MarginKind::BetaIdentity, "cln0-270", 1).unwrap();
        let p = ParamSet::new(vec![0.8], vec![0.7], vec![0.1], vec![0.2], vec![0.5, -0.3]).unwrap();
        let s = study(&[0], &[0], 0, 0);
        assert_relative_eq!(study_pmf(&s, &spec, &p, &outer, &outer).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(mc_pmf_oracle(&s, &spec, &p, 10_000, 1).unwrap(), (1.0, 0.0));
    }
}
