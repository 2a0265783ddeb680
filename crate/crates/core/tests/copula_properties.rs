use approx::assert_relative_eq;
use fcmm_core::copula::{tau_from_theta, theta_from_tau, CopulaFamily, CopulaParam};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn representative(f: CopulaFamily, tau: f64) -> CopulaParam {
    let signed = f.tau_sign().unwrap_or(1.0) * tau;
    CopulaParam::from_tau(f, signed).unwrap()
}

/// Adaptive Simpson quadrature, independent of the crate's Gauss-Kronrod code.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth > 50 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 0)
}

fn frank_tau_oracle(theta: f64) -> f64 {
    let integrand = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let d = simpson(&integrand, 0.0, theta, 1e-15);
    1.0 - 4.0 / theta + 4.0 / (theta * theta) * d
}

#[test]
fn densities_integrate_to_one() {
    let n = 200;
    for f in CopulaFamily::ALL {
        let c = representative(f, 0.5);
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                let v = (j as f64 + 0.5) / n as f64;
                total += c.density(u, v);
            }
        }
        total /= (n * n) as f64;
        assert!((total - 1.0).abs() < 0.01, "{f}: {total}");
    }
}

#[test]
fn clayton_cdf_matches_integrated_density() {
    let c = CopulaParam::new(CopulaFamily::Clayton0, 2.0).unwrap();
    // C(u, v) = ∫₀ᵘ C_{2|1}(v | s) ds
    let integral = simpson(
        &|s: f64| c.ccdf(0.5, s.max(1e-300)).unwrap(),
        1e-14,
        0.5,
        1e-12,
    );
    assert_relative_eq!(integral, 7f64.powf(-0.5), max_relative = 1e-8);
    assert_relative_eq!(
        c.cdf(0.5, 0.5),
        0.377_964_473_009_227_2,
        max_relative = 1e-12
    );
}

#[test]
fn ccdf_is_the_derivative_of_the_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for f in CopulaFamily::ALL {
        for &tau in &[0.2, 0.5, 0.8] {
            let c = representative(f, tau);
            for _ in 0..40 {
                let u: f64 = rng.gen_range(0.02..0.98);
                let v: f64 = rng.gen_range(0.02..0.98);
                let fd = (c.cdf(u + h, v) - c.cdf(u - h, v)) / (2.0 * h);
                let h_val = c.ccdf(v, u).unwrap();
                assert!(
                    (fd - h_val).abs() < 1e-6,
                    "{f} tau={tau} u={u} v={v}: {fd} vs {h_val}"
                );
            }
        }
    }
}

#[test]
fn ccdf_inverse_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for f in CopulaFamily::ALL {
        for _ in 0..100 {
            let tau: f64 = rng.gen_range(0.01..0.95);
            let c = representative(f, tau);
            let q: f64 = rng.gen_range(0.0005..0.9995);
            let u: f64 = rng.gen_range(0.0005..0.9995);
            let v = c.ccdf_inv(q, u).unwrap();
            let back = c.ccdf(v, u).unwrap();
            assert!(
                (back - q).abs() < 1e-10,
                "{f} tau={tau} q={q} u={u}: {back}"
            );
        }
    }
    let bvn0 = CopulaParam::new(CopulaFamily::Bvn, 0.0).unwrap();
    assert_relative_eq!(
        bvn0.ccdf_inv(0.37, 0.8).unwrap(),
        0.37,
        max_relative = 1e-15
    );
    let cln = CopulaParam::new(CopulaFamily::Clayton0, 2.0).unwrap();
    assert_relative_eq!(
        cln.ccdf_inv(8.0 * 7f64.powf(-1.5), 0.5).unwrap(),
        0.5,
        max_relative = 1e-12
    );
}

#[test]
fn ccdf_is_nondecreasing_in_v() {
    for f in CopulaFamily::ALL {
        let c = representative(f, 0.7);
        for &u in &[0.05, 0.5, 0.95] {
            let mut prev = 0.0;
            for i in 0..=400 {
                let v = i as f64 / 400.0;
                let h = c.ccdf(v, u).unwrap();
                assert!(h >= prev - 1e-14, "{f}");
                prev = h;
            }
            assert_eq!(prev, 1.0);
        }
    }
}

#[test]
fn tau_theta_round_trip() {
    for f in CopulaFamily::ALL {
        for k in 1..=9 {
            let tau = f.tau_sign().unwrap_or(if k % 2 == 0 { -1.0 } else { 1.0 }) * k as f64 / 10.0;
            let c = theta_from_tau(f, tau).unwrap();
            assert!((tau_from_theta(&c) - tau).abs() < 1e-10, "{f} {tau}");
        }
    }
    let frank = theta_from_tau(CopulaFamily::Frank, 0.6).unwrap();
    assert!((frank_tau_oracle(frank.theta()) - 0.6).abs() < 1e-10);
    assert_relative_eq!(
        theta_from_tau(CopulaFamily::Bvn, 1.0 / 3.0)
            .unwrap()
            .theta(),
        0.5,
        max_relative = 1e-14
    );
}

#[test]
fn frank_tau_matches_numeric_integral() {
    for &theta in &[0.05, 0.3, 1.0, 5.0, 12.0, 40.0, -5.0] {
        let c = CopulaParam::new(CopulaFamily::Frank, theta).unwrap();
        let oracle = frank_tau_oracle(theta.abs()).copysign(theta);
        assert!(
            (c.tau() - oracle).abs() < 1e-10,
            "theta={theta}: {} vs {oracle}",
            c.tau()
        );
    }
}

#[test]
fn rotations_share_tau_magnitude() {
    for &theta in &[0.3, 2.0, 9.0] {
        let t0 = CopulaParam::new(CopulaFamily::Clayton0, theta)
            .unwrap()
            .tau();
        let t180 = CopulaParam::new(CopulaFamily::Clayton180, theta)
            .unwrap()
            .tau();
        let t270 = CopulaParam::new(CopulaFamily::Clayton270, theta)
            .unwrap()
            .tau();
        let t90 = CopulaParam::new(CopulaFamily::Clayton90, theta)
            .unwrap()
            .tau();
        assert_eq!(t0, t180);
        assert_eq!(t270, -t0);
        assert_eq!(t90, -t0);
    }
}

#[test]
fn transposed_family_swaps_arguments() {
    for f in CopulaFamily::ALL {
        let c = representative(f, 0.6);
        let ct = CopulaParam::new(f.transposed(), c.theta()).unwrap();
        for &(u, v) in &[(0.2, 0.7), (0.9, 0.4), (0.33, 0.35)] {
            assert_relative_eq!(c.cdf(u, v), ct.cdf(v, u), epsilon = 1e-13);
            assert_relative_eq!(c.density(u, v), ct.density(v, u), max_relative = 1e-11);
        }
    }
}

fn any_family() -> impl Strategy<Value = CopulaFamily> {
    prop::sample::select(CopulaFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cdf_and_density_are_well_formed(f in any_family(), tau in 0.01f64..0.95, u in 0.0001f64..0.9999, v in 0.0001f64..0.9999) {
        let c = representative(f, tau);
        let d = c.density(u, v);
        prop_assert!(d >= 0.0 && d.is_finite());
        let cv = c.cdf(u, v);
        prop_assert!((0.0..=1.0).contains(&cv));
        // Fréchet bounds
        prop_assert!(cv <= u.min(v) + 1e-15);
        prop_assert!(cv >= (u + v - 1.0).max(0.0) - 1e-15);
        prop_assert_eq!(c.cdf(u, 1.0), u);
        prop_assert_eq!(c.cdf(1.0, v), v);
        prop_assert_eq!(c.cdf(0.0, v), 0.0);
    }
}
