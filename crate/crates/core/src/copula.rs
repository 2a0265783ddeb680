//! Bivariate linking copulas: BVN, Frank and Clayton with its 90°, 180° and
//! 270° rotations.
//!
//! Conditional functions follow one convention throughout the crate:
//! [`CopulaParam::ccdf`] is the cdf of the *second* argument given the
//! *first*, `C_{2|1}(v | u) = ∂C(u, v)/∂u`. Callers pass the conditioning
//! variable (the latent factor in the likelihood) as `given_u`.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{
    asin, bvn_cdf, exp, exp_m1, find_root, integrate, ln, ln_1p, log_add_exp, norm_cdf,
    norm_quantile, sin, softplus, sqrt, PI,
};

/// Interior clamp applied to density and conditional-cdf arguments.
pub const UNIT_CLAMP: f64 = 1e-12;

/// Frank parameters below this magnitude use the series expansion of tau.
const FRANK_SERIES_LIMIT: f64 = 0.1;

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CopulaFamily {
    Bvn,
    Frank,
    Clayton0,
    Clayton90,
    Clayton180,
    Clayton270,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 6] = [
        CopulaFamily::Bvn,
        CopulaFamily::Frank,
        CopulaFamily::Clayton0,
        CopulaFamily::Clayton90,
        CopulaFamily::Clayton180,
        CopulaFamily::Clayton270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Bvn => "bvn",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Clayton0 => "cln0",
            CopulaFamily::Clayton90 => "cln90",
            CopulaFamily::Clayton180 => "cln180",
            CopulaFamily::Clayton270 => "cln270",
        }
    }

    /// Sign forced on Kendall's tau, or `None` when both signs are allowed.
    pub fn tau_sign(self) -> Option<f64> {
        match self {
            CopulaFamily::Bvn | CopulaFamily::Frank => None,
            CopulaFamily::Clayton0 | CopulaFamily::Clayton180 => Some(1.0),
            CopulaFamily::Clayton90 | CopulaFamily::Clayton270 => Some(-1.0),
        }
    }

    /// Whether `tau` can be represented by this family. Zero is admitted
    /// everywhere as the independence limit.
    pub fn admits_tau(self, tau: f64) -> bool {
        if !(tau.abs() < 1.0) {
            return false;
        }
        match self.tau_sign() {
            None => true,
            Some(s) => tau * s >= 0.0,
        }
    }

    /// Family of the copula with its arguments swapped, `C^T(u, v) = C(v, u)`.
    pub fn transposed(self) -> Self {
        match self {
            CopulaFamily::Clayton90 => CopulaFamily::Clayton270,
            CopulaFamily::Clayton270 => CopulaFamily::Clayton90,
            f => f,
        }
    }

    /// Clayton rotation carrying the opposite sign of dependence: 0° pairs
    /// with 270° and 180° with 90°. Sign-free families map to themselves.
    pub fn sign_partner(self) -> Self {
        match self {
            CopulaFamily::Clayton0 => CopulaFamily::Clayton270,
            CopulaFamily::Clayton270 => CopulaFamily::Clayton0,
            CopulaFamily::Clayton180 => CopulaFamily::Clayton90,
            CopulaFamily::Clayton90 => CopulaFamily::Clayton180,
            f => f,
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let fam = match lower.as_str() {
            "bvn" | "normal" | "gaussian" => CopulaFamily::Bvn,
            "frank" => CopulaFamily::Frank,
            "cln0" | "clayton" | "clayton0" => CopulaFamily::Clayton0,
            "cln90" | "clayton90" => CopulaFamily::Clayton90,
            "cln180" | "clayton180" => CopulaFamily::Clayton180,
            "cln270" | "clayton270" => CopulaFamily::Clayton270,
            _ => return Err(Error::Model(alloc::format!("unknown copula family '{s}'"))),
        };
        Ok(fam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaParam {
    family: CopulaFamily,
    theta: f64,
}

#[derive(Debug, Clone, Copy)]
enum Base {
    Indep,
    Bvn(f64),
    Frank(f64),
    Clayton(f64),
}

#[derive(Debug, Clone, Copy)]
enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl CopulaParam {
    /// Builds a copula from its native parameter. `theta = 0` is accepted for
    /// every family and means independence.
    pub fn new(family: CopulaFamily, theta: f64) -> Result<Self> {
        let ok = match family {
            CopulaFamily::Bvn => theta.abs() < 1.0,
            CopulaFamily::Frank => theta.is_finite(),
            _ => theta >= 0.0 && theta.is_finite(),
        };
        if !ok {
            let expected = match family {
                CopulaFamily::Bvn => "|theta| < 1",
                CopulaFamily::Frank => "finite theta",
                _ => "theta >= 0",
            };
            return Err(Error::domain("copula theta", theta, expected));
        }
        Ok(Self { family, theta })
    }

    pub fn independence(family: CopulaFamily) -> Self {
        Self { family, theta: 0.0 }
    }

    /// Inverts the Kendall-tau relation of `family`.
    pub fn from_tau(family: CopulaFamily, tau: f64) -> Result<Self> {
        theta_from_tau(family, tau)
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tau(&self) -> f64 {
        tau_from_theta(self)
    }

    fn resolve(&self) -> (Base, Rotation) {
        let t = self.theta;
        if t == 0.0 {
            return (Base::Indep, Rotation::R0);
        }
        match self.family {
            CopulaFamily::Bvn => (Base::Bvn(t), Rotation::R0),
            // Frank with a negative parameter is the 270° rotation of |theta|.
            CopulaFamily::Frank if t < 0.0 => (Base::Frank(-t), Rotation::R270),
            CopulaFamily::Frank => (Base::Frank(t), Rotation::R0),
            CopulaFamily::Clayton0 => (Base::Clayton(t), Rotation::R0),
            CopulaFamily::Clayton90 => (Base::Clayton(t), Rotation::R90),
            CopulaFamily::Clayton180 => (Base::Clayton(t), Rotation::R180),
            CopulaFamily::Clayton270 => (Base::Clayton(t), Rotation::R270),
        }
    }

    /// Joint cdf C(u, v).
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        let (base, rot) = self.resolve();
        let c = match rot {
            Rotation::R0 => base.cdf(u, v),
            Rotation::R90 => v - base.cdf(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + base.cdf(1.0 - u, 1.0 - v),
            Rotation::R270 => u - base.cdf(u, 1.0 - v),
        };
        c.clamp(0.0, u.min(v))
    }

    /// Copula density c(u, v); arguments are clamped to the open unit square.
    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.ln_density(u, v).map(exp).unwrap_or(0.0)
    }

    fn ln_density(&self, u: f64, v: f64) -> Option<f64> {
        if u.is_nan() || v.is_nan() {
            return None;
        }
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let (base, rot) = self.resolve();
        let (a, b) = match rot {
            Rotation::R0 => (u, v),
            Rotation::R90 => (1.0 - u, v),
            Rotation::R180 => (1.0 - u, 1.0 - v),
            Rotation::R270 => (u, 1.0 - v),
        };
        Some(base.ln_density(a, b))
    }

    /// Conditional cdf of the second argument given the first,
    /// `C_{2|1}(v | given_u)`.
    pub fn ccdf(&self, v: f64, given_u: f64) -> Result<f64> {
        check_open("conditioning value", given_u)?;
        if v <= 0.0 {
            return Ok(0.0);
        }
        if v >= 1.0 {
            return Ok(1.0);
        }
        Ok(self.ccdf_interior(clamp_unit(v), clamp_unit(given_u)))
    }

    pub(crate) fn ccdf_interior(&self, v: f64, u: f64) -> f64 {
        let (base, rot) = self.resolve();
        let h = match rot {
            Rotation::R0 => base.h(v, u),
            Rotation::R90 => base.h(v, 1.0 - u),
            Rotation::R180 => 1.0 - base.h(1.0 - v, 1.0 - u),
            Rotation::R270 => 1.0 - base.h(1.0 - v, u),
        };
        h.clamp(0.0, 1.0)
    }

    /// Inverse of [`ccdf`](Self::ccdf) in its first argument: the `v` with
    /// `C_{2|1}(v | given_u) = q`.
    pub fn ccdf_inv(&self, q: f64, given_u: f64) -> Result<f64> {
        check_open("conditioning value", given_u)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain("probability", q, "0 <= q <= 1"));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        if q == 1.0 {
            return Ok(1.0);
        }
        Ok(self.ccdf_inv_interior(q, given_u))
    }

    /// Unchecked inverse used on quadrature grids; both inputs must lie in
    /// (0, 1). The result is clamped to the interior.
    #[inline]
    pub(crate) fn ccdf_inv_interior(&self, q: f64, u: f64) -> f64 {
        let (q, u) = (clamp_unit(q), clamp_unit(u));
        let (base, rot) = self.resolve();
        let v = match rot {
            Rotation::R0 => base.h_inv(q, u),
            Rotation::R90 => base.h_inv(q, 1.0 - u),
            Rotation::R180 => 1.0 - base.h_inv(1.0 - q, 1.0 - u),
            Rotation::R270 => 1.0 - base.h_inv(1.0 - q, u),
        };
        clamp_unit(v)
    }
}

fn check_open(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(what, x, "0 < value < 1"))
    }
}

impl Base {
    fn cdf(self, u: f64, v: f64) -> f64 {
        match self {
            Base::Indep => u * v,
            Base::Bvn(r) => bvn_cdf(norm_quantile(u), norm_quantile(v), r),
            Base::Frank(t) => -ln_1p(exp_m1(-t * u) * exp_m1(-t * v) / exp_m1(-t)) / t,
            Base::Clayton(t) => exp(-clayton_lse(-t * ln(u), -t * ln(v)) / t),
        }
    }

    fn ln_density(self, u: f64, v: f64) -> f64 {
        match self {
            Base::Indep => 0.0,
            Base::Bvn(r) => {
                let (x, y) = (norm_quantile(u), norm_quantile(v));
                let s = 1.0 - r * r;
                -(r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * s) - 0.5 * ln(s)
            }
            Base::Frank(t) => {
                let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
                // c = θ(1-e^{-θ}) e^{-θ(u+v)} / D², with D factored by e^{-θ·lo}
                let bracket = -exp_m1(-t * hi) - exp(-t * (hi - lo)) * exp_m1(-t * (1.0 - hi));
                ln(t) + ln(-exp_m1(-t)) - t * (hi - lo) - 2.0 * ln(bracket)
            }
            Base::Clayton(t) => {
                let (a, b) = (-t * ln(u), -t * ln(v));
                ln_1p(t) + (1.0 + 1.0 / t) * (a + b) - (2.0 + 1.0 / t) * clayton_lse(a, b)
            }
        }
    }

    /// C_{2|1}(v | u) of the unrotated copula.
    fn h(self, v: f64, u: f64) -> f64 {
        match self {
            Base::Indep => v,
            Base::Bvn(r) => norm_cdf((norm_quantile(v) - r * norm_quantile(u)) / sqrt(1.0 - r * r)),
            Base::Frank(t) => frank_h(t, v, u),
            Base::Clayton(t) => {
                let a = -t * ln(u);
                let b = -t * ln(v);
                exp((1.0 + 1.0 / t) * (a - clayton_lse(a, b)))
            }
        }
    }

    fn h_inv(self, q: f64, u: f64) -> f64 {
        match self {
            Base::Indep => q,
            Base::Bvn(r) => norm_cdf(r * norm_quantile(u) + sqrt(1.0 - r * r) * norm_quantile(q)),
            Base::Frank(t) => {
                let (lq, lq1) = (ln(q), ln_1p(-q));
                let num = log_add_exp(lq1 - t * u, lq - t);
                let den = log_add_exp(lq, lq1 - t * u);
                -(num - den) / t
            }
            Base::Clayton(t) => {
                let a = -t * ln(u);
                let big_a = exp_m1(-(t / (1.0 + t)) * ln(q));
                exp(-softplus(ln(big_a) + a) / t)
            }
        }
    }
}

/// ln(eᵃ + eᵇ − 1) for a, b ≥ 0.
#[inline]
fn clayton_lse(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ln(exp(a - m) + exp(b - m) - exp(-m))
}

/// Frank h-function for θ > 0, arranged so every exponential has a
/// nonpositive argument.
fn frank_h(t: f64, v: f64, u: f64) -> f64 {
    let one_minus_y = -exp_m1(-t * v);
    if v >= u {
        let r_minus_s = -exp(-t * (v - u)) * exp_m1(-t * (1.0 - v));
        one_minus_y / (one_minus_y + r_minus_s)
    } else {
        let one_minus_x = -exp_m1(-t * u);
        let r = exp(-t * (u - v));
        let r_minus_s = -r * exp_m1(-t * (1.0 - u));
        one_minus_y * r / (one_minus_x + r_minus_s)
    }
}

/// Kendall's tau of a linking copula.
pub fn tau_from_theta(p: &CopulaParam) -> f64 {
    let t = p.theta;
    match p.family {
        CopulaFamily::Bvn => 2.0 / PI * asin(t),
        CopulaFamily::Frank => frank_tau(t),
        CopulaFamily::Clayton0 | CopulaFamily::Clayton180 => t / (t + 2.0),
        CopulaFamily::Clayton90 | CopulaFamily::Clayton270 => -t / (t + 2.0),
    }
}

/// ∫₀^θ t/(eᵗ−1) dt for θ > 0.
pub fn debye_integral(theta: f64) -> f64 {
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / exp_m1(t) };
    let tol = 1e-14 * theta.min(1.0) * theta.min(1.0);
    integrate(&f, 0.0, theta, tol)
}

fn frank_tau(theta: f64) -> f64 {
    let t = theta.abs();
    if t == 0.0 {
        return 0.0;
    }
    let tau = if t < FRANK_SERIES_LIMIT {
        let t2 = t * t;
        t * (1.0 / 9.0 - t2 * (1.0 / 900.0 - t2 * (1.0 / 52_920.0 - t2 / 2_721_600.0)))
    } else {
        1.0 - 4.0 / t + 4.0 / (t * t) * debye_integral(t)
    };
    tau.copysign(theta)
}

/// Native parameter of `family` with Kendall's tau equal to `tau`.
pub fn theta_from_tau(family: CopulaFamily, tau: f64) -> Result<CopulaParam> {
    if !(tau.abs() < 1.0) {
        return Err(Error::domain("kendall tau", tau, "|tau| < 1"));
    }
    if !family.admits_tau(tau) {
        return Err(Error::domain(
            "kendall tau",
            tau,
            "sign compatible with the copula family",
        ));
    }
    let theta = match family {
        CopulaFamily::Bvn => sin(PI * tau / 2.0),
        CopulaFamily::Frank => frank_theta(tau)?,
        _ => {
            let a = tau.abs();
            2.0 * a / (1.0 - a)
        }
    };
    CopulaParam::new(family, theta)
}

fn frank_theta(tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let target = tau.abs();
    let mut hi = 700.0;
    while frank_tau(hi) < target {
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::domain(
                "kendall tau",
                tau,
                "Frank |tau| below 1 - 4e-7",
            ));
        }
    }
    let lo = if target < 1e-3 { 0.0 } else { 1e-5 };
    let theta = find_root(|t| frank_tau(t) - target, lo, hi, 1e-15 * hi.min(10.0))
        .ok_or(Error::domain("kendall tau", tau, "Frank root bracket"))?;
    Ok(theta.copysign(tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::powf;
    use approx::assert_relative_eq;

    fn p(f: CopulaFamily, theta: f64) -> CopulaParam {
        CopulaParam::new(f, theta).unwrap()
    }

    #[test]
    fn independence_and_boundaries() {
        let c = p(CopulaFamily::Bvn, 0.0);
        assert_relative_eq!(c.cdf(0.3, 0.7), 0.21, max_relative = 1e-15);
        for f in CopulaFamily::ALL {
            let c = CopulaParam::from_tau(f, f.tau_sign().unwrap_or(1.0) * 0.4).unwrap();
            assert_eq!(c.cdf(1.0, 0.4), 0.4);
            assert_eq!(c.cdf(0.4, 1.0), 0.4);
            assert_eq!(c.cdf(0.0, 0.4), 0.0);
        }
    }

    #[test]
    fn clayton_closed_forms() {
        let c = p(CopulaFamily::Clayton0, 2.0);
        assert_relative_eq!(c.cdf(0.5, 0.5), powf(7.0, -0.5), max_relative = 1e-14);
        let h = c.ccdf(0.5, 0.5).unwrap();
        assert_relative_eq!(h, 8.0 * powf(7.0, -1.5), max_relative = 1e-14);
        assert_relative_eq!(c.ccdf_inv(h, 0.5).unwrap(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(c.tau(), 0.5);
    }

    #[test]
    fn bvn_density_at_median() {
        let c = p(CopulaFamily::Bvn, 0.5);
        assert_relative_eq!(c.density(0.5, 0.5), 1.0 / sqrt(0.75), max_relative = 1e-14);
        assert_relative_eq!(c.ccdf(0.5, 0.5).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(c.tau(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn frank_small_theta_is_near_independence() {
        let c = p(CopulaFamily::Frank, 1e-9);
        assert_relative_eq!(c.density(0.2, 0.9), 1.0, epsilon = 1e-8);
        assert_relative_eq!(c.ccdf(0.4, 0.7).unwrap(), 0.4, epsilon = 1e-8);
        assert_relative_eq!(c.ccdf_inv(0.3, 0.6).unwrap(), 0.3, epsilon = 1e-7);
    }

    #[test]
    fn frank_negative_matches_direct_formula() {
        // Direct Frank density valid for any sign of theta.
        let direct = |t: f64, u: f64, v: f64| {
            let num = -t * exp_m1(-t) * exp(-t * (u + v));
            let den = exp_m1(-t) + exp_m1(-t * u) * exp_m1(-t * v);
            num / (den * den)
        };
        for &t in &[-8.0, -0.7, 0.7, 8.0] {
            let c = p(CopulaFamily::Frank, t);
            for &(u, v) in &[(0.1, 0.2), (0.5, 0.9), (0.77, 0.31)] {
                assert_relative_eq!(c.density(u, v), direct(t, u, v), max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn sign_mismatch_is_a_domain_error() {
        assert!(theta_from_tau(CopulaFamily::Clayton0, -0.2).is_err());
        assert!(theta_from_tau(CopulaFamily::Clayton270, 0.2).is_err());
        assert!(theta_from_tau(CopulaFamily::Bvn, 1.0).is_err());
        assert_relative_eq!(
            theta_from_tau(CopulaFamily::Clayton90, -0.5)
                .unwrap()
                .theta(),
            2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn conditioning_on_the_boundary_is_rejected() {
        let c = p(CopulaFamily::Clayton0, 1.0);
        assert!(c.ccdf(0.5, 0.0).is_err());
        assert!(c.ccdf(0.5, 1.0).is_err());
        assert!(c.ccdf_inv(0.5, 1.0).is_err());
        assert_eq!(c.ccdf(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(c.ccdf(1.0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn extreme_parameters_stay_finite() {
        for f in CopulaFamily::ALL {
            let c = CopulaParam::from_tau(f, f.tau_sign().unwrap_or(-1.0) * 0.995).unwrap();
            for &u in &[1e-10, 0.01, 0.5, 0.99, 1.0 - 1e-10] {
                for &q in &[1e-10, 0.2, 0.5, 0.8, 1.0 - 1e-10] {
                    let v = c.ccdf_inv(q, u).unwrap();
                    assert!(v > 0.0 && v < 1.0, "{f} u={u} q={q} v={v}");
                    assert!(c.density(u, q).is_finite());
                }
            }
        }
    }

    #[test]
    fn family_names_parse() {
        for f in CopulaFamily::ALL {
            assert_eq!(f.name().parse::<CopulaFamily>().unwrap(), f);
        }
        assert!("gumbel".parse::<CopulaFamily>().is_err());
    }
}
