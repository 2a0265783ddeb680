//! Synthetic meta-analyses from the one-factor model or a 4-d D-vine, and
//! replicate-level summaries of repeated fits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Binomial, Distribution, Gamma, Open01};

use crate::copula::{CopulaFamily, CopulaParam};
use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig};
use crate::likelihood::{Dataset, ModelSpec, ParamSet, StudyRecord, TestCounts};
use crate::math::{round, sqrt};

/// Shifted gamma study sizes, `n = round(lag + Gamma(shape, rate))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDist {
    pub shape: f64,
    /// Rate; the mean of the gamma part is `shape / rate`.
    pub rate: f64,
    pub lag: f64,
}

impl Default for SizeDist {
    fn default() -> Self {
        SizeDist {
            shape: 1.2,
            rate: 0.01,
            lag: 30.0,
        }
    }
}

/// One pair-copula edge given by family and Kendall's τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub family: CopulaFamily,
    pub tau: f64,
}

impl Edge {
    pub fn new(family: CopulaFamily, tau: f64) -> Self {
        Edge { family, tau }
    }

    fn param(&self) -> Result<CopulaParam> {
        CopulaParam::from_tau(self.family, self.tau)
    }
}

/// D-vine on the path `U11 – U01 – U12 – U02`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DVineConfig {
    /// (U11,U01), (U01,U12), (U12,U02).
    pub level1: [Edge; 3],
    /// (U11,U12 | U01), (U01,U02 | U12).
    pub level2: [Edge; 2],
    /// (U11,U02 | U01,U12).
    pub level3: Edge,
}

/// Dependence used to draw the latent uniforms of a study.
#[derive(Debug, Clone, PartialEq)]
pub enum Dependence {
    /// Linking copulas of the design spec with the truth τ.
    OneFactor,
    /// A 4-d D-vine (T = 2); truth τ values are then not targets.
    DVine(DVineConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n_studies: usize,
    pub spec: ModelSpec,
    pub truth: ParamSet,
    pub prevalence: f64,
    pub size_dist: SizeDist,
    pub dependence: Dependence,
    pub replicates: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(n_studies: usize, spec: ModelSpec, truth: ParamSet) -> Self {
        SimDesign {
            n_studies,
            spec,
            truth,
            prevalence: 0.4,
            size_dist: SizeDist::default(),
            dependence: Dependence::OneFactor,
            replicates: 100,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_studies == 0 {
            return Err(Error::Model("design needs at least one study".into()));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::domain("prevalence", self.prevalence, "0 < p < 1"));
        }
        let s = self.size_dist;
        if !(s.shape > 0.0 && s.shape.is_finite()) {
            return Err(Error::domain("gamma shape", s.shape, "positive"));
        }
        if !(s.rate > 0.0 && s.rate.is_finite()) {
            return Err(Error::domain("gamma rate", s.rate, "positive"));
        }
        if !(s.lag >= 0.0 && s.lag.is_finite()) {
            return Err(Error::domain("size lag", s.lag, "nonnegative"));
        }
        match &self.dependence {
            Dependence::OneFactor => self.truth.validate(&self.spec),
            Dependence::DVine(v) => {
                if self.spec.n_tests() != 2 {
                    return Err(Error::Model("the D-vine design has T = 2".into()));
                }
                for e in v.level1.iter().chain(&v.level2).chain(core::iter::once(&v.level3)) {
                    e.param()?;
                }
                // margins must still be valid
                for c in 0..4 {
                    self.truth.margin(c, self.spec.margin())?;
                }
                Ok(())
            }
        }
    }

    /// Truth for each reported parameter; NaN where the design has no
    /// one-factor counterpart.
    pub fn truth_vector(&self) -> Vec<f64> {
        let mut v = self.truth.to_vec();
        if let Dependence::DVine(_) = self.dependence {
            let t = self.truth.n_tests();
            v[4 * t..].iter_mut().for_each(|x| *x = f64::NAN);
        }
        v
    }
}

/// Generator for replicate `replicate` of a study seeded by `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn open01<R: RngCore>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// One draw of the 2T latent uniforms given linking copulas.
pub fn sample_one_factor_copula<R: RngCore>(copulas: &[CopulaParam], rng: &mut R) -> Vec<f64> {
    sample_with_factor(copulas, rng).1
}

/// Like [`sample_one_factor_copula`], also returning the factor value.
pub fn sample_with_factor<R: RngCore>(copulas: &[CopulaParam], rng: &mut R) -> (f64, Vec<f64>) {
    let v = open01(rng);
    let u = copulas
        .iter()
        .map(|c| {
            let w = open01(rng);
            c.ccdf_inv_interior(w, v)
        })
        .collect();
    (v, u)
}

/// Linking copulas from Kendall's τ; errors on sign-incompatible pairs.
pub fn linking_copulas(families: &[CopulaFamily], taus: &[f64]) -> Result<Vec<CopulaParam>> {
    if families.len() != taus.len() {
        return Err(Error::Model("one tau per family is required".into()));
    }
    families
        .iter()
        .zip(taus)
        .map(|(&f, &t)| CopulaParam::from_tau(f, t))
        .collect()
}

/// Pair copulas of a D-vine, resolved once per design.
#[derive(Debug, Clone, Copy)]
pub struct DVine {
    c12: CopulaParam,
    c23: CopulaParam,
    c34: CopulaParam,
    c13_2: CopulaParam,
    c24_3: CopulaParam,
    c14_23: CopulaParam,
}

/// `C_{1|2}(u | v)` for a copula `C(u, v)`.
fn h_first(c: &CopulaParam, u: f64, given_v: f64) -> f64 {
    transposed(c).ccdf_interior(u, given_v)
}

fn transposed(c: &CopulaParam) -> CopulaParam {
    CopulaParam::new(c.family().transposed(), c.theta()).unwrap_or(*c)
}

impl DVine {
    pub fn new(cfg: &DVineConfig) -> Result<Self> {
        Ok(DVine {
            c12: cfg.level1[0].param()?,
            c23: cfg.level1[1].param()?,
            c34: cfg.level1[2].param()?,
            c13_2: cfg.level2[0].param()?,
            c24_3: cfg.level2[1].param()?,
            c14_23: cfg.level3.param()?,
        })
    }

    /// Sample in path order (x1, x2, x3, x4) by inverting the Rosenblatt
    /// transform along the vine.
    pub fn sample_path<R: RngCore>(&self, rng: &mut R) -> [f64; 4] {
        let w: [f64; 4] = [open01(rng), open01(rng), open01(rng), open01(rng)];
        let x1 = w[0];
        let x2 = self.c12.ccdf_inv_interior(w[1], x1);
        let f1_2 = h_first(&self.c12, x1, x2);
        let f3_2 = self.c13_2.ccdf_inv_interior(w[2], f1_2);
        let x3 = self.c23.ccdf_inv_interior(f3_2, x2);
        let f1_23 = h_first(&self.c13_2, f1_2, f3_2);
        let f2_3 = h_first(&self.c23, x2, x3);
        let f4_23 = self.c14_23.ccdf_inv_interior(w[3], f1_23);
        let f4_3 = self.c24_3.ccdf_inv_interior(f4_23, f2_3);
        let x4 = self.c34.ccdf_inv_interior(f4_3, x3);
        [x1, x2, x3, x4]
    }

    /// Sample in column order (U11, U12, U01, U02).
    pub fn sample_columns<R: RngCore>(&self, rng: &mut R) -> [f64; 4] {
        let [u11, u01, u12, u02] = self.sample_path(rng);
        [u11, u12, u01, u02]
    }
}

/// One D-vine draw in path order (U11, U01, U12, U02).
pub fn sample_dvine4<R: RngCore>(cfg: &DVineConfig, rng: &mut R) -> Result<[f64; 4]> {
    Ok(DVine::new(cfg)?.sample_path(rng))
}

enum Sampler {
    OneFactor(Vec<CopulaParam>),
    DVine(DVine),
}

/// Simulates one dataset; the same design and generator state always
/// give the same data.
pub fn simulate_dataset<R: RngCore>(design: &SimDesign, rng: &mut R) -> Result<Dataset> {
    design.validate()?;
    let spec = &design.spec;
    let t = spec.n_tests();
    let margins = (0..2 * t)
        .map(|c| design.truth.margin(c, spec.margin()))
        .collect::<Result<Vec<_>>>()?;
    let sampler = match &design.dependence {
        Dependence::OneFactor => Sampler::OneFactor(linking_copulas(spec.families(), &design.truth.tau)?),
        Dependence::DVine(cfg) => Sampler::DVine(DVine::new(cfg)?),
    };
    let sd = design.size_dist;
    let gamma = Gamma::new(sd.shape, 1.0 / sd.rate)
        .map_err(|e| Error::Model(format!("study size distribution: {e}")))?;
    let mut studies = Vec::with_capacity(design.n_studies);
    for _ in 0..design.n_studies {
        let u = match &sampler {
            Sampler::OneFactor(c) => sample_one_factor_copula(c, rng),
            Sampler::DVine(v) => v.sample_columns(rng).to_vec(),
        };
        let x = u
            .iter()
            .zip(&margins)
            .map(|(&u, m)| m.prob_from_u(u))
            .collect::<Result<Vec<_>>>()?;
        let n = round(sd.lag + gamma.sample(rng)) as u64;
        let n1 = binomial(n, design.prevalence, rng)?;
        let n0 = n - n1;
        let tests = (0..t)
            .map(|k| -> Result<TestCounts> {
                let tp = binomial(n1, x[k], rng)?;
                let tn = binomial(n0, x[t + k], rng)?;
                Ok(TestCounts::new(tp, n1, tn, n0))
            })
            .collect::<Result<Vec<_>>>()?;
        studies.push(StudyRecord::new(tests)?);
    }
    Dataset::new(studies)
}

fn binomial<R: RngCore>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if n == 0 {
        return Ok(0);
    }
    let d = Binomial::new(n, p).map_err(|e| Error::Model(format!("binomial draw: {e}")))?;
    Ok(d.sample(rng))
}

/// Dataset of replicate `r` of a design.
pub fn simulate_replicate(design: &SimDesign, r: u64) -> Result<Dataset> {
    simulate_dataset(design, &mut replicate_rng(design.seed, r))
}

/// Fit of one spec to one replicate, reduced to what the summary needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub estimates: Option<Vec<f64>>,
    pub std_errors: Option<Vec<f64>>,
    pub converged: bool,
    pub tau_at_cap: bool,
    pub error: Option<String>,
}

/// Simulates replicate `r` and fits every spec to it.
pub fn run_replicate(
    design: &SimDesign,
    specs: &[ModelSpec],
    cfg: &FitConfig,
    r: u64,
) -> Vec<ReplicateOutcome> {
    let failed = |msg: String| ReplicateOutcome {
        replicate: r,
        estimates: None,
        std_errors: None,
        converged: false,
        tau_at_cap: false,
        error: Some(msg),
    };
    let data = match simulate_replicate(design, r) {
        Ok(d) => d,
        Err(e) => return specs.iter().map(|_| failed(format!("{e}"))).collect(),
    };
    specs
        .iter()
        .map(|spec| match fit(&data, spec, cfg) {
            Ok(res) => ReplicateOutcome {
                replicate: r,
                estimates: Some(res.estimates.to_vec()),
                std_errors: res.std_errors.clone(),
                converged: res.converged,
                tau_at_cap: res.tau_at_cap,
                error: None,
            },
            Err(e) => failed(format!("{e}")),
        })
        .collect()
}

/// Per-parameter summary on the ×100 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub sqrt_mean_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimStudyReport {
    pub spec: ModelSpec,
    pub params: Vec<ParamSummary>,
    pub replicates: usize,
    pub converged: usize,
    /// Converged replicates that also produced standard errors.
    pub with_std_errors: usize,
    pub failures: Vec<(u64, String)>,
}

impl SimStudyReport {
    pub fn convergence_rate(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.converged as f64 / self.replicates as f64
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Bias, SD, RMSE and √(mean SE²) over converged replicates, in
/// replicate order. SD uses the replicate count as divisor, so
/// RMSE² = bias² + SD² exactly up to rounding.
pub fn summarize(spec: &ModelSpec, truth: &[f64], outcomes: &[ReplicateOutcome]) -> SimStudyReport {
    let names = ParamSet::names(spec.n_tests());
    let mut ok: Vec<&ReplicateOutcome> = outcomes
        .iter()
        .filter(|o| o.converged && o.estimates.is_some())
        .collect();
    ok.sort_by_key(|o| o.replicate);
    let m = ok.len() as f64;
    let with_se: Vec<&Vec<f64>> = ok.iter().filter_map(|o| o.std_errors.as_ref()).collect();
    let params = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let est: Vec<f64> = ok.iter().map(|o| o.estimates.as_ref().unwrap()[i]).collect();
            let mean = est.iter().sum::<f64>() / m;
            let bias = mean - truth[i];
            let var = est.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / m;
            let mse = bias * bias + var;
            let mean_v = with_se.iter().map(|s| s[i] * s[i]).sum::<f64>() / with_se.len() as f64;
            ParamSummary {
                name,
                truth: truth[i],
                bias: 100.0 * bias,
                sd: 100.0 * sqrt(var),
                rmse: 100.0 * sqrt(mse),
                sqrt_mean_var: 100.0 * sqrt(mean_v),
            }
        })
        .collect();
    let mut failures: Vec<(u64, String)> = outcomes
        .iter()
        .filter(|o| !o.converged)
        .map(|o| {
            let msg = o.error.clone().unwrap_or_else(|| "did not converge".into());
            (o.replicate, msg)
        })
        .collect();
    failures.sort_by_key(|f| f.0);
    SimStudyReport {
        spec: spec.clone(),
        params,
        replicates: outcomes.len(),
        converged: ok.len(),
        with_std_errors: with_se.len(),
        failures,
    }
}

/// Sequential simulation study: one report per fitted spec.
pub fn run_sim_study(design: &SimDesign, specs: &[ModelSpec], cfg: &FitConfig) -> Result<Vec<SimStudyReport>> {
    if design.replicates < 2 {
        return Err(Error::Model("a simulation study needs at least 2 replicates".into()));
    }
    design.validate()?;
    check_specs(design, specs)?;
    let mut per_spec: Vec<Vec<ReplicateOutcome>> = vec![Vec::with_capacity(design.replicates); specs.len()];
    for r in 0..design.replicates as u64 {
        for (k, o) in run_replicate(design, specs, cfg, r).into_iter().enumerate() {
            per_spec[k].push(o);
        }
    }
    let truth = design.truth_vector();
    Ok(specs
        .iter()
        .zip(&per_spec)
        .map(|(s, o)| summarize(s, &truth, o))
        .collect())
}

/// Fitted specs must match the design's T.
pub fn check_specs(design: &SimDesign, specs: &[ModelSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Model("no specs to fit".into()));
    }
    if specs.iter().any(|s| s.n_tests() != design.spec.n_tests()) {
        return Err(Error::Model("fitted specs must have the design's number of tests".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::MarginKind;

    fn design() -> SimDesign {
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "cln0-270", 2).unwrap();
        let truth = ParamSet::new(
            vec![0.8, 0.7],
            vec![0.7, 0.8],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![0.6, 0.7, -0.3, -0.4],
        )
        .unwrap();
        SimDesign::new(40, spec, truth)
    }

    #[test]
    fn replay_is_deterministic() {
        let d = design();
        let a = simulate_replicate(&d, 7).unwrap();
        let b = simulate_replicate(&d, 7).unwrap();
        let c = simulate_replicate(&d, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn study_sizes_respect_lag() {
        let d = design();
        let data = simulate_replicate(&d, 0).unwrap();
        for s in data.studies() {
            assert!(s.n_diseased() + s.n_nondiseased() >= 30);
        }
    }

    #[test]
    fn summary_identity() {
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "bvn", 1).unwrap();
        let truth = [0.5, 0.5, 1.0, 1.0, 0.2, -0.2];
        let outcomes: Vec<ReplicateOutcome> = (0..5)
            .map(|r| ReplicateOutcome {
                replicate: r,
                estimates: Some(truth.iter().map(|t| t + 0.01 * (r as f64 - 1.0)).collect()),
                std_errors: Some(vec![0.1; 6]),
                converged: r != 4,
                tau_at_cap: false,
                error: None,
            })
            .collect();
        let rep = summarize(&spec, &truth, &outcomes);
        assert_eq!(rep.converged, 4);
        assert_eq!(rep.failures.len(), 1);
        for p in &rep.params {
            assert!((p.rmse * p.rmse - p.bias * p.bias - p.sd * p.sd).abs() < 1e-9);
            assert!((p.bias - 0.5).abs() < 1e-9);
            assert!((p.sqrt_mean_var - 10.0).abs() < 1e-9);
        }
    }
}
