//! Within-test dependence, quantile-regression SROC curves and predictive
//! contours.
//!
//! The pair copula of a test is written `C(u₀, u₁)` with the specificity
//! uniform first.

use alloc::vec::Vec;
use core::fmt;

use crate::copula::{CopulaFamily, CopulaParam};
use crate::error::{Error, Result};
use crate::likelihood::{ModelSpec, ParamSet};
use crate::linalg::Matrix;
use crate::margins::MarginSpec;
use crate::math::{asin, sin, PI};

pub const DEFAULT_GRID: usize = 201;
pub const GRID_LO: f64 = 0.005;
pub const GRID_HI: f64 = 0.995;

/// Kendall's τ between the latent sensitivity and specificity of one test
/// implied by the factor structure.
pub fn within_test_tau(tau_1t: f64, tau_0t: f64) -> f64 {
    let rho = sin(0.5 * PI * tau_1t) * sin(0.5 * PI * tau_0t);
    2.0 / PI * asin(rho.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Sensitivity quantile given specificity.
    X1OnX0,
    /// Specificity quantile given sensitivity.
    X0OnX1,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::X1OnX0, Direction::X0OnX1];

    pub fn name(self) -> &'static str {
        match self {
            Direction::X1OnX0 => "x1_on_x0",
            Direction::X0OnX1 => "x0_on_x1",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrocPoint {
    /// Specificity.
    pub x0: f64,
    /// Sensitivity.
    pub x1: f64,
    /// `x0` on the latent scale of its margin.
    pub z0: f64,
    pub z1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrocCurve {
    pub test: usize,
    pub quantile_q: f64,
    pub direction: Direction,
    pub family: CopulaFamily,
    pub tau_pair: f64,
    /// Ordered by the conditioning coordinate.
    pub points: Vec<SrocPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub test: usize,
    /// Latent-scale specificity coordinates.
    pub grid_x0: Vec<f64>,
    pub grid_x1: Vec<f64>,
    /// `density[(i, j)]` at `(grid_x0[i], grid_x1[j])`.
    pub density: Matrix,
}

fn interior_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Model("an SROC grid needs at least 2 points".into()));
    }
    let step = (GRID_HI - GRID_LO) / (n - 1) as f64;
    Ok((0..n).map(|i| GRID_LO + step * i as f64).collect())
}

fn pair_param(family: CopulaFamily, tau_pair: f64) -> Result<CopulaParam> {
    if !family.admits_tau(tau_pair) {
        return Err(Error::domain("pair tau", tau_pair, "sign compatible with the pair family"));
    }
    CopulaParam::from_tau(family, tau_pair)
}

/// Default pair family of test `t`: its sensitivity family when that can
/// carry `tau_pair`, else its specificity family, else the sign partner of
/// the sensitivity family.
pub fn default_pair_family(spec: &ModelSpec, t: usize, tau_pair: f64) -> CopulaFamily {
    let sens = spec.family(t);
    let spec_f = spec.family(spec.n_tests() + t);
    if sens.admits_tau(tau_pair) {
        sens
    } else if spec_f.admits_tau(tau_pair) {
        spec_f
    } else {
        sens.sign_partner()
    }
}

/// Quantile-regression curve of one margin on the other at level `q`.
pub fn quantile_curve(
    test: usize,
    m1: &MarginSpec,
    m0: &MarginSpec,
    family: CopulaFamily,
    tau_pair: f64,
    q: f64,
    direction: Direction,
    grid_size: usize,
) -> Result<SrocCurve> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain("quantile", q, "0 < q < 1"));
    }
    let c = pair_param(family, tau_pair)?;
    let ct = CopulaParam::new(family.transposed(), c.theta())?;
    let grid = interior_grid(grid_size)?;
    let mut points = Vec::with_capacity(grid.len());
    for &g in &grid {
        let (u0, u1) = match direction {
            Direction::X1OnX0 => (g, c.ccdf_inv(q, g)?),
            Direction::X0OnX1 => (ct.ccdf_inv(q, g)?, g),
        };
        let x0 = m0.prob_from_u(u0)?;
        let x1 = m1.prob_from_u(u1)?;
        points.push(SrocPoint {
            x0,
            x1,
            z0: m0.to_latent(x0),
            z1: m1.to_latent(x1),
        });
    }
    Ok(SrocCurve {
        test,
        quantile_q: q,
        direction,
        family,
        tau_pair,
        points,
    })
}

/// Density of the latent (specificity, sensitivity) pair over the box of
/// central 99% marginal ranges.
pub fn density_contour(
    test: usize,
    m1: &MarginSpec,
    m0: &MarginSpec,
    family: CopulaFamily,
    tau_pair: f64,
    grid_size: usize,
) -> Result<ContourGrid> {
    let c = pair_param(family, tau_pair)?;
    let axis = |m: &MarginSpec| -> Result<Vec<f64>> {
        let lo = m.latent_quantile(GRID_LO);
        let hi = m.latent_quantile(GRID_HI);
        let n = grid_size.max(2);
        if !(hi > lo) {
            return Err(Error::Model("degenerate margin for the contour grid".into()));
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    };
    let grid_x0 = axis(m0)?;
    let grid_x1 = axis(m1)?;
    let col1: Vec<(f64, f64)> = grid_x1.iter().map(|&z| (m1.latent_cdf(z), m1.latent_density(z))).collect();
    let mut density = Matrix::zeros(grid_x0.len(), grid_x1.len());
    for (i, &z0) in grid_x0.iter().enumerate() {
        let u0 = m0.latent_cdf(z0);
        let f0 = m0.latent_density(z0);
        for (j, &(u1, f1)) in col1.iter().enumerate() {
            let d = c.density(u0, u1) * f0 * f1;
            density[(i, j)] = if d.is_finite() { d.max(0.0) } else { 0.0 };
        }
    }
    Ok(ContourGrid {
        test,
        grid_x0,
        grid_x1,
        density,
    })
}

/// Everything plotted for one test of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSroc {
    pub test: usize,
    pub family: CopulaFamily,
    pub tau_pair: f64,
    pub curves: Vec<SrocCurve>,
    pub contour: ContourGrid,
}

/// Curves at each quantile in both directions plus the contour, for every
/// test. `pair_family` overrides [`default_pair_family`].
pub fn sroc_for_fit(
    spec: &ModelSpec,
    params: &ParamSet,
    quantiles: &[f64],
    pair_family: Option<CopulaFamily>,
    grid_size: usize,
) -> Result<Vec<TestSroc>> {
    params.validate(spec)?;
    let t_n = spec.n_tests();
    (0..t_n)
        .map(|t| {
            let tau_pair = within_test_tau(params.tau[t], params.tau[t_n + t]);
            let family = pair_family.unwrap_or_else(|| default_pair_family(spec, t, tau_pair));
            let m1 = params.margin(t, spec.margin())?;
            let m0 = params.margin(t_n + t, spec.margin())?;
            let mut curves = Vec::with_capacity(2 * quantiles.len());
            for &q in quantiles {
                for dir in Direction::BOTH {
                    curves.push(quantile_curve(t, &m1, &m0, family, tau_pair, q, dir, grid_size)?);
                }
            }
            let contour = density_contour(t, &m1, &m0, family, tau_pair, grid_size)?;
            Ok(TestSroc {
                test: t,
                family,
                tau_pair,
                curves,
                contour,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::MarginKind;
    use approx::assert_relative_eq;

    #[test]
    fn within_test_examples() {
        assert_eq!(within_test_tau(0.7, 0.0), 0.0);
        assert_relative_eq!(within_test_tau(1.0 / 3.0, 1.0 / 3.0), 2.0 / PI * asin(0.25), epsilon = 1e-14);
        assert_relative_eq!(within_test_tau(1.0 / 3.0, 1.0 / 3.0), 0.16087, epsilon = 1e-5);
        assert!(within_test_tau(0.716, -0.213) < 0.0);
    }

    #[test]
    fn independence_median_is_flat() {
        let m1 = MarginSpec::new(MarginKind::NormalLogit, 0.8, 1.0).unwrap();
        let m0 = MarginSpec::new(MarginKind::NormalLogit, 0.7, 0.8).unwrap();
        let c = quantile_curve(0, &m1, &m0, CopulaFamily::Frank, 0.0, 0.5, Direction::X1OnX0, 21).unwrap();
        for p in &c.points {
            assert_relative_eq!(p.x1, 0.8, epsilon = 1e-12);
        }
    }

    #[test]
    fn sign_incompatible_pair_rejected() {
        let m = MarginSpec::new(MarginKind::NormalLogit, 0.8, 1.0).unwrap();
        assert!(quantile_curve(0, &m, &m, CopulaFamily::Clayton0, -0.2, 0.5, Direction::X1OnX0, 11).is_err());
        assert!(density_contour(0, &m, &m, CopulaFamily::Clayton90, 0.2, 11).is_err());
    }

    #[test]
    fn pair_family_fallbacks() {
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "cln0-270", 1).unwrap();
        assert_eq!(default_pair_family(&spec, 0, 0.2), CopulaFamily::Clayton0);
        assert_eq!(default_pair_family(&spec, 0, -0.2), CopulaFamily::Clayton270);
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "cln0-180", 1).unwrap();
        assert_eq!(default_pair_family(&spec, 0, -0.2), CopulaFamily::Clayton270);
        let spec = ModelSpec::parse(MarginKind::NormalLogit, "bvn", 1).unwrap();
        assert_eq!(default_pair_family(&spec, 0, -0.2), CopulaFamily::Bvn);
    }
}
