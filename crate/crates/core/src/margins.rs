//! Random-effect margins mapping copula-scale uniforms to study-level probabilities.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{
    beta_pdf, beta_quantile_pair, exp, expit, ln, ln_beta, ln_choose, logit, norm_cdf, norm_pdf,
    norm_quantile, reg_inc_beta, softplus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginKind {
    /// Normal random effect on the logit scale; δ is the standard deviation.
    NormalLogit,
    /// Beta random effect on the probability scale; δ is the dispersion γ ∈ (0,1).
    BetaIdentity,
}

impl MarginKind {
    pub fn name(self) -> &'static str {
        match self {
            MarginKind::NormalLogit => "normal",
            MarginKind::BetaIdentity => "beta",
        }
    }

    pub fn delta_in_domain(self, delta: f64) -> bool {
        match self {
            MarginKind::NormalLogit => delta > 0.0 && delta.is_finite(),
            MarginKind::BetaIdentity => delta > 0.0 && delta < 1.0,
        }
    }
}

impl fmt::Display for MarginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MarginKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "normal-logit" | "normallogit" | "logit" => Ok(MarginKind::NormalLogit),
            "beta" | "beta-identity" | "betaidentity" => Ok(MarginKind::BetaIdentity),
            other => Err(Error::Model(alloc::format!(
                "unknown margin kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    kind: MarginKind,
    pi: f64,
    delta: f64,
    // beta shapes, unused for the normal margin
    a: f64,
    b: f64,
}

impl MarginSpec {
    pub fn new(kind: MarginKind, pi: f64, delta: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::domain("pi", pi, "(0, 1)"));
        }
        if !kind.delta_in_domain(delta) {
            let expected = match kind {
                MarginKind::NormalLogit => "(0, inf)",
                MarginKind::BetaIdentity => "(0, 1)",
            };
            return Err(Error::domain("delta", delta, expected));
        }
        let (a, b) = match kind {
            MarginKind::NormalLogit => (f64::NAN, f64::NAN),
            MarginKind::BetaIdentity => {
                let s = (1.0 - delta) / delta;
                (pi * s, (1.0 - pi) * s)
            }
        };
        Ok(MarginSpec {
            kind,
            pi,
            delta,
            a,
            b,
        })
    }

    pub fn kind(&self) -> MarginKind {
        self.kind
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Beta shape parameters (α, β); `None` for the normal margin.
    pub fn beta_shapes(&self) -> Option<(f64, f64)> {
        match self.kind {
            MarginKind::BetaIdentity => Some((self.a, self.b)),
            MarginKind::NormalLogit => None,
        }
    }

    /// Study-level probability x = l⁻¹(F⁻¹(u)).
    pub fn prob_from_u(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain("u", u, "(0, 1)"));
        }
        Ok(self
            .prob_pair(u)
            .0
            .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// (x, 1 − x) with the complement computed without cancellation.
    pub(crate) fn prob_pair(&self, u: f64) -> (f64, f64) {
        match self.kind {
            MarginKind::NormalLogit => {
                let z = self.latent_quantile(u);
                (expit(z), expit(-z))
            }
            MarginKind::BetaIdentity => beta_quantile_pair(u, self.a, self.b),
        }
    }

    /// (ln x, ln(1 − x)) at copula value u.
    pub(crate) fn ln_prob_pair(&self, u: f64) -> (f64, f64) {
        match self.kind {
            MarginKind::NormalLogit => {
                let z = self.latent_quantile(u);
                (-softplus(-z), -softplus(z))
            }
            MarginKind::BetaIdentity => {
                let (x, xc) = beta_quantile_pair(u, self.a, self.b);
                // leading term I_x(a, b) ≈ xᵃ / (a B(a, b)) where x underflows
                let lx = if x > 0.0 {
                    ln(x)
                } else {
                    (ln(u) + ln(self.a) + ln_beta(self.a, self.b)) / self.a
                };
                let lxc = if xc > 0.0 {
                    ln(xc)
                } else {
                    (ln(1.0 - u) + ln(self.b) + ln_beta(self.a, self.b)) / self.b
                };
                (lx, lxc)
            }
        }
    }

    /// Maps a probability to the scale the random effect lives on.
    pub fn to_latent(&self, x: f64) -> f64 {
        match self.kind {
            MarginKind::NormalLogit => logit(x),
            MarginKind::BetaIdentity => x,
        }
    }

    pub fn from_latent(&self, z: f64) -> f64 {
        match self.kind {
            MarginKind::NormalLogit => expit(z),
            MarginKind::BetaIdentity => z,
        }
    }

    /// F⁻¹(u) on the latent scale.
    pub fn latent_quantile(&self, u: f64) -> f64 {
        match self.kind {
            MarginKind::NormalLogit => logit(self.pi) + self.delta * norm_quantile(u),
            MarginKind::BetaIdentity => beta_quantile_pair(u, self.a, self.b).0,
        }
    }

    pub fn latent_cdf(&self, z: f64) -> f64 {
        match self.kind {
            MarginKind::NormalLogit => norm_cdf((z - logit(self.pi)) / self.delta),
            MarginKind::BetaIdentity => reg_inc_beta(z.clamp(0.0, 1.0), self.a, self.b),
        }
    }

    pub fn latent_density(&self, z: f64) -> f64 {
        match self.kind {
            MarginKind::NormalLogit => norm_pdf((z - logit(self.pi)) / self.delta) / self.delta,
            MarginKind::BetaIdentity => beta_pdf(z, self.a, self.b),
        }
    }
}

/// ln of the binomial pmf; `prob` may be 0 or 1.
pub fn binom_ln_pmf(y: u64, n: u64, prob: f64) -> Result<f64> {
    if y > n {
        return Err(Error::domain("y", y as f64, "[0, n]"));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::domain("prob", prob, "[0, 1]"));
    }
    let (ys, fs) = (y as f64, (n - y) as f64);
    let lp = if y == 0 { 0.0 } else { ys * ln(prob) };
    let lq = if y == n { 0.0 } else { fs * ln(1.0 - prob) };
    Ok(ln_choose(n, y) + lp + lq)
}

pub fn binom_pmf(y: u64, n: u64, prob: f64) -> Result<f64> {
    binom_ln_pmf(y, n, prob).map(exp)
}
