use fcmm_core::estimation::{
    default_start, fit, fit_grid, from_unconstrained, to_unconstrained, FitConfig, Objective,
};
use fcmm_core::likelihood::{glmm_pmf_bvn, Dataset, Likelihood, ModelSpec, ParamSet, StudyRecord, TestCounts};
use fcmm_core::margins::MarginKind;
use fcmm_core::quadrature::gauss_legendre_01;
use fcmm_core::simulation::{simulate_replicate, SimDesign};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn three_test_design() -> SimDesign {
    let spec = ModelSpec::parse(MarginKind::NormalLogit, "cln0-270", 3).unwrap();
    let truth = ParamSet::new(
        vec![0.8, 0.7, 0.8],
        vec![0.7, 0.8, 0.7],
        vec![1.0; 3],
        vec![1.0; 3],
        vec![0.6, 0.7, 0.5, -0.3, -0.4, -0.2],
    )
    .unwrap();
    SimDesign::new(50, spec, truth)
}

fn two_test_design(copulas: &str, tau: [f64; 4]) -> SimDesign {
    let spec = ModelSpec::parse(MarginKind::NormalLogit, copulas, 2).unwrap();
    let truth = ParamSet::new(vec![0.8, 0.7], vec![0.7, 0.8], vec![1.0; 2], vec![1.0; 2], tau.to_vec()).unwrap();
    SimDesign::new(50, spec, truth)
}

fn all_specs(t: usize) -> Vec<ModelSpec> {
    ModelSpec::standard_grid(t)
}

fn arb_params(spec: ModelSpec) -> impl Strategy<Value = ParamSet> {
    let t = spec.n_tests();
    let beta = spec.margin() == MarginKind::BetaIdentity;
    (
        prop::collection::vec(0.02..0.98f64, 2 * t),
        prop::collection::vec(0.02..0.9f64, 2 * t),
        prop::collection::vec(0.01..0.95f64, 2 * t),
        prop::collection::vec(any::<bool>(), 2 * t),
    )
        .prop_map(move |(pi, d, tau, neg)| {
            let delta: Vec<f64> = d.iter().map(|x| if beta { *x } else { 3.0 * x }).collect();
            let tau: Vec<f64> = tau
                .iter()
                .zip(&neg)
                .enumerate()
                .map(|(c, (a, n))| match spec.family(c).tau_sign() {
                    Some(s) => s * a,
                    None => {
                        if *n {
                            -a
                        } else {
                            *a
                        }
                    }
                })
                .collect();
            ParamSet::new(
                pi[..t].to_vec(),
                pi[t..].to_vec(),
                delta[..t].to_vec(),
                delta[t..].to_vec(),
                tau,
            )
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unconstrained_round_trip(
        (spec, p) in (0usize..10).prop_flat_map(|i| {
            let spec = all_specs(2)[i].clone();
            (Just(spec.clone()), arb_params(spec))
        })
    ) {
        let z = to_unconstrained(&p, &spec).unwrap();
        let back = from_unconstrained(&z, &spec).unwrap();
        for (a, b) in back.to_vec().iter().zip(p.to_vec()) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn clayton90_slot_maps_half_to_zero() {
    let spec = ModelSpec::new(
        MarginKind::NormalLogit,
        vec![fcmm_core::copula::CopulaFamily::Clayton0, fcmm_core::copula::CopulaFamily::Clayton90],
    )
    .unwrap();
    let p = ParamSet::new(vec![0.5], vec![0.7], vec![1.0], vec![1.0], vec![0.4, -0.5]).unwrap();
    let z = to_unconstrained(&p, &spec).unwrap();
    assert_eq!(z[0], 0.0);
    assert!(z[5].abs() < 1e-15);
}

#[test]
fn gradient_matches_richardson() {
    let d = simulate_replicate(&two_test_design("cln0-270", [0.5, 0.6, -0.3, -0.2]), 3).unwrap();
    let outer = gauss_legendre_01(25).unwrap();
    for spec in [
        ModelSpec::parse(MarginKind::NormalLogit, "cln0-270", 2).unwrap(),
        ModelSpec::parse(MarginKind::BetaIdentity, "frank", 2).unwrap(),
    ] {
        let lik = Likelihood::new(d.studies(), &spec, &outer, &outer).unwrap();
        let mut obj = Objective::new(lik, &spec, 1e-5);
        let start = default_start(&d, &spec).unwrap();
        let mut z = to_unconstrained(&start, &spec).unwrap();
        for (i, v) in z.iter_mut().enumerate() {
            *v += 0.1 * ((i as f64) * 0.7).sin();
        }
        let p = obj.point(&z).unwrap();
        let g = obj.gradient(&p).unwrap();
        let mut f = |zz: &[f64]| obj.point(zz).unwrap().f;
        for i in 0..z.len() {
            let cd = |h: f64, f: &mut dyn FnMut(&[f64]) -> f64| {
                let mut a = z.clone();
                a[i] += h;
                let mut b = z.clone();
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            };
            let h = 1e-3;
            let rich = (4.0 * cd(h / 2.0, &mut f) - cd(h, &mut f)) / 3.0;
            let rel = (g[i] - rich).abs() / rich.abs().max(1.0);
            assert!(rel < 1e-4, "{} coord {i}: {} vs {}", spec.label(), g[i], rich);
        }
    }
}

#[test]
fn three_test_design_recovers_sensitivity() {
    let design = three_test_design();
    let cfg = FitConfig::default();
    let reps = 8;
    let mut sum = 0.0;
    for r in 0..reps {
        let d = simulate_replicate(&design, r).unwrap();
        let res = fit(&d, &design.spec, &cfg).unwrap();
        assert!(res.converged, "replicate {r}: {:?}", res.termination);
        assert!(res.loglik >= -res.start_neg_loglik);
        let se = res.std_errors.as_ref().expect("positive definite Hessian");
        for (c, tau) in res.estimates.tau.iter().enumerate() {
            if tau.abs() < 0.95 {
                let s = se[4 * 3 + c];
                assert!(s.is_finite() && s > 0.0);
            }
        }
        sum += res.estimates.pi1[0];
    }
    let mean = sum / reps as f64;
    assert!((mean - 0.8).abs() < 0.03, "mean pi11 {mean}");
}

#[test]
fn refit_at_previous_optimum() {
    let design = two_test_design("cln0-270", [0.6, 0.7, -0.3, -0.4]);
    let d = simulate_replicate(&design, 11).unwrap();
    let first = fit(&d, &design.spec, &FitConfig::default()).unwrap();
    let mut second = design.clone();
    second.truth = first.estimates.clone();
    second.seed = 99;
    let d2 = simulate_replicate(&second, 0).unwrap();
    let cfg = FitConfig {
        start: Some(first.estimates.clone()),
        ..FitConfig::default()
    };
    let refit = fit(&d2, &design.spec, &cfg).unwrap();
    assert!(refit.converged);
    assert!(refit.iterations <= cfg.max_iter);
    assert!(refit.grad_norm < 1e-6, "grad {}", refit.grad_norm);
}

#[test]
fn minimal_dataset_never_panics() {
    let studies = vec![
        StudyRecord::new(vec![TestCounts::new(3, 4, 5, 6), TestCounts::new(4, 4, 2, 6)]).unwrap(),
        StudyRecord::new(vec![TestCounts::new(0, 2, 9, 9), TestCounts::new(2, 2, 9, 9)]).unwrap(),
    ];
    let d = Dataset::new(studies).unwrap();
    for spec in all_specs(2) {
        let cfg = FitConfig {
            max_iter: 200,
            ..FitConfig::default()
        };
        let r = fit(&d, &spec, &cfg).unwrap();
        assert!(r.estimates.to_vec().iter().all(|v| v.is_finite()));
        assert!(r.loglik.is_finite());
    }
}

#[test]
fn single_spec_grid_is_the_fit() {
    let design = two_test_design("bvn", [0.4, 0.3, -0.2, -0.3]);
    let d = simulate_replicate(&design, 1).unwrap();
    let cfg = FitConfig::default();
    let one = fit(&d, &design.spec, &cfg).unwrap();
    let grid = fit_grid(&d, std::slice::from_ref(&design.spec), &cfg).unwrap();
    assert_eq!(grid.len(), 1);
    assert_eq!(grid[0].outcome.as_ref().unwrap(), &one);
}

#[test]
fn grid_is_sorted_and_complete() {
    let design = two_test_design("cln0-270", [0.6, 0.7, -0.3, -0.4]);
    let d = simulate_replicate(&design, 5).unwrap();
    let cfg = FitConfig {
        hessian: false,
        ..FitConfig::default()
    };
    let specs = all_specs(2);
    let grid = fit_grid(&d, &specs, &cfg).unwrap();
    assert_eq!(grid.len(), specs.len());
    let ll: Vec<f64> = grid.iter().filter_map(|e| e.loglik()).collect();
    assert!(ll.windows(2).all(|w| w[0] >= w[1]));
    let mut idx: Vec<usize> = grid.iter().map(|e| e.index).collect();
    idx.sort();
    assert_eq!(idx, (0..specs.len()).collect::<Vec<_>>());
}

#[test]
fn selection_consistency() {
    let design = two_test_design("cln0-270", [0.6, 0.7, -0.3, -0.4]);
    let cfg = FitConfig {
        hessian: false,
        ..FitConfig::default()
    };
    let specs: Vec<ModelSpec> = all_specs(2)
        .into_iter()
        .filter(|s| s.margin() == MarginKind::NormalLogit)
        .collect();
    assert_eq!(specs.len(), 5);
    let reps = 100;
    let mut wins = 0;
    for r in 0..reps {
        let d = simulate_replicate(&design, r).unwrap();
        let grid = fit_grid(&d, &specs, &cfg).unwrap();
        if grid[0].spec == design.spec {
            wins += 1;
        }
    }
    assert!(wins * 100 >= 60 * reps, "truth spec selected in {wins} of {reps}");
}

/// −log L through the additive normal representation, as a function of
/// (logit π, ln σ, atanh θ).
fn glmm_objective(d: &Dataset, spec: &ModelSpec, phi: &[f64]) -> f64 {
    let t = spec.n_tests();
    let expit = |x: f64| 1.0 / (1.0 + (-x).exp());
    let pi: Vec<f64> = phi[..2 * t].iter().map(|x| expit(*x)).collect();
    let sigma: Vec<f64> = phi[2 * t..4 * t].iter().map(|x| x.exp()).collect();
    let tau: Vec<f64> = phi[4 * t..]
        .iter()
        .map(|x| 2.0 / std::f64::consts::PI * x.tanh().asin())
        .collect();
    let p = ParamSet::new(
        pi[..t].to_vec(),
        pi[t..].to_vec(),
        sigma[..t].to_vec(),
        sigma[t..].to_vec(),
        tau,
    )
    .unwrap();
    let rule = gauss_legendre_01(25).unwrap();
    -d.studies()
        .iter()
        .map(|s| glmm_pmf_bvn(s, spec, &p, &rule, &rule).unwrap().ln())
        .sum::<f64>()
}

#[test]
fn standard_errors_agree_with_glmm_parameterization() {
    let design = two_test_design("bvn", [0.5, 0.4, -0.3, -0.2]);
    let d = simulate_replicate(&design, 2).unwrap();
    let spec = &design.spec;
    let res = fit(&d, spec, &FitConfig::default()).unwrap();
    let se = res.std_errors.clone().unwrap();
    let est = &res.estimates;
    let t = 2;
    let mut phi = Vec::new();
    for c in 0..2 * t {
        let p = est.pi(c);
        phi.push((p / (1.0 - p)).ln());
    }
    for c in 0..2 * t {
        phi.push(est.delta(c).ln());
    }
    let thetas: Vec<f64> = est
        .tau
        .iter()
        .map(|tau| (std::f64::consts::PI * tau / 2.0).sin())
        .collect();
    for th in &thetas {
        phi.push(th.atanh());
    }
    let n = phi.len();
    let h = 1e-4;
    let f = |v: &[f64]| glmm_objective(&d, spec, v);
    let f0 = f(&phi);
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let val = if i == j {
                let mut a = phi.clone();
                a[i] += h;
                let mut b = phi.clone();
                b[i] -= h;
                (f(&a) - 2.0 * f0 + f(&b)) / (h * h)
            } else {
                let shift = |si: f64, sj: f64| {
                    let mut a = phi.clone();
                    a[i] += si * h;
                    a[j] += sj * h;
                    f(&a)
                };
                (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0)) / (4.0 * h * h)
            };
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    let cov = hess.try_inverse().unwrap();
    for i in 0..n {
        let jac = if i < 2 * t {
            let p = est.pi(i);
            p * (1.0 - p)
        } else if i < 4 * t {
            est.delta(i - 2 * t)
        } else {
            let th = thetas[i - 4 * t];
            2.0 / std::f64::consts::PI / (1.0 - th * th).sqrt() * (1.0 - th * th)
        };
        let oracle = jac.abs() * cov[(i, i)].sqrt();
        let rel = (se[i] - oracle).abs() / oracle;
        assert!(rel < 0.10, "param {i}: {} vs {}", se[i], oracle);
    }
}

#[test]
fn beta_margin_fit_converges() {
    let mut design = two_test_design("cln0-270", [0.6, 0.7, -0.3, -0.4]);
    design.spec = ModelSpec::parse(MarginKind::BetaIdentity, "cln0-270", 2).unwrap();
    design.truth.delta1 = vec![0.1, 0.1];
    design.truth.delta0 = vec![0.1, 0.1];
    let d = simulate_replicate(&design, 4).unwrap();
    let res = fit(&d, &design.spec, &FitConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.std_errors.is_some());
    assert!((res.estimates.pi1[0] - 0.8).abs() < 0.1);
}
