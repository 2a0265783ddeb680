use fcmm_core::margins::{binom_pmf, MarginKind, MarginSpec};
use fcmm_core::quadrature::gauss_legendre_01;
use proptest::prelude::*;

#[test]
fn prob_from_u_strictly_increasing() {
    for kind in [MarginKind::NormalLogit, MarginKind::BetaIdentity] {
        for &(pi, delta) in &[(0.7, 0.5), (0.05, 0.3), (0.99, 0.02), (0.6, 2.5)] {
            let Ok(m) = MarginSpec::new(kind, pi, delta) else {
                continue;
            };
            let mut prev = 0.0;
            for i in 1..=1000 {
                let u = i as f64 / 1001.0;
                let x = m.prob_from_u(u).unwrap();
                assert!(x > prev && x < 1.0, "{kind} pi={pi} delta={delta} u={u}");
                prev = x;
            }
        }
    }
}

#[test]
fn beta_margin_mean_is_pi() {
    // mean of x = ∫ F⁻¹(u) du; substitute u = I_x(a, b) and integrate x·f(x) instead
    let m = MarginSpec::new(MarginKind::BetaIdentity, 0.8, 0.1).unwrap();
    let rule = gauss_legendre_01(200).unwrap();
    let mean = rule.integrate(|x| x * m.latent_density(x));
    assert!((mean - 0.8).abs() < 1e-6, "{mean}");
    // the direct u-space integral converges slowly at the endpoints but still agrees
    let direct = rule.integrate(|u| m.prob_from_u(u).unwrap());
    assert!((direct - 0.8).abs() < 1e-6, "{direct}");
}

#[test]
fn normal_margin_median_exact_mean_not() {
    let m = MarginSpec::new(MarginKind::NormalLogit, 0.8, 1.0).unwrap();
    assert_eq!(m.prob_from_u(0.5).unwrap(), 0.8);
    let rule = gauss_legendre_01(100).unwrap();
    let mean = rule.integrate(|u| m.prob_from_u(u).unwrap());
    assert!(mean < 0.79);
}

#[test]
fn binomial_sums_to_one() {
    for n in 0..=200u64 {
        for &p in &[1e-6, 0.03, 0.5, 0.77, 1.0 - 1e-9] {
            let s: f64 = (0..=n).map(|y| binom_pmf(y, n, p).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12, "n={n} p={p}: {s}");
        }
    }
}

#[test]
fn binomial_log_space_matches_direct_power() {
    let direct = 0.9f64.powi(10);
    assert!((binom_pmf(0, 10, 0.1).unwrap() - direct).abs() < 1e-15);
    assert!((direct - 0.34868).abs() < 1e-5);
}

#[test]
fn polynomial_exactness() {
    for &nq in &[2usize, 5, 10, 25] {
        let rule = gauss_legendre_01(nq).unwrap();
        for deg in 0..=(2 * nq - 1) as i32 {
            let got = rule.integrate(|x| x.powi(deg));
            let want = 1.0 / (deg as f64 + 1.0);
            assert!(
                (got - want).abs() < 1e-14,
                "nq={nq} deg={deg}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn rules_are_symmetric_and_interior() {
    for nq in 1..=200 {
        let rule = gauss_legendre_01(nq).unwrap();
        let (x, w) = (rule.nodes(), rule.weights());
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-13, "nq={nq}: {total}");
        for i in 0..nq {
            assert!(x[i] > 0.0 && x[i] < 1.0 && w[i] > 0.0);
            if i > 0 {
                assert!(x[i] > x[i - 1]);
            }
            let j = nq - 1 - i;
            assert!((x[i] + x[j] - 1.0).abs() < 1e-15);
            assert_eq!(w[i], w[j]);
        }
    }
}

proptest! {
    #[test]
    fn prob_from_u_stays_interior(pi in 0.01f64..0.99, delta in 0.01f64..0.99, u in 1e-9f64..(1.0 - 1e-9)) {
        for kind in [MarginKind::NormalLogit, MarginKind::BetaIdentity] {
            let m = MarginSpec::new(kind, pi, delta).unwrap();
            let x = m.prob_from_u(u).unwrap();
            prop_assert!(x > 0.0 && x < 1.0);
        }
    }
}
