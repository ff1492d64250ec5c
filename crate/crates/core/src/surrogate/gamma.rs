use serde::{Deserialize, Serialize};

use super::LOG_FLOOR;
use crate::dist::SKEW_FALLBACK;
use crate::special::{gamma_pq, ln_gamma_stirling_remainder, norm_cdf, norm_logpdf, norm_sf, LN_SQRT_2PI};

pub const SKEW_CLAMP: f64 = 1.95;

/// `Y = shift + X` (or `shift - X` when reflected) with `X ~ Gamma(shape, scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGammaParams {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
    pub reflected: bool,
}

/// A univariate surrogate marginal: a shifted gamma, or a normal when the
/// skewness is negligible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkewMarginal {
    Gamma(ShiftedGammaParams),
    Normal { mean: f64, sd: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub marginal: SkewMarginal,
    /// `|omega|` exceeded the clamp and was reduced.
    pub clamped: bool,
}

pub fn clamp_skew(omega: f64) -> (f64, bool) {
    if omega.abs() > SKEW_CLAMP {
        (SKEW_CLAMP.copysign(omega), true)
    } else {
        (omega, false)
    }
}

/// Moment-matched shifted gamma for mean `mu`, variance `var`, skewness `omega`.
pub fn fit_shifted_gamma(mu: f64, var: f64, omega: f64) -> SkewMarginal {
    let sd = var.sqrt();
    if omega.abs() < SKEW_FALLBACK {
        SkewMarginal::Normal { mean: mu, sd }
    } else {
        let a = omega.abs();
        SkewMarginal::Gamma(ShiftedGammaParams {
            shape: 4.0 / (a * a),
            scale: sd * a / 2.0,
            shift: mu - omega.signum() * 2.0 * sd / a,
            reflected: omega < 0.0,
        })
    }
}

/// Clamps the skewness, then fits.
pub fn fit_marginal(mu: f64, var: f64, omega: f64) -> GammaFit {
    let (omega, clamped) = clamp_skew(omega);
    GammaFit {
        marginal: fit_shifted_gamma(mu, var, omega),
        clamped,
    }
}

/// `ln(1 + w) - w` without cancellation near zero.
fn log1pmx(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        let w2 = w * w;
        w2 * (-0.5 + w * (1.0 / 3.0 + w * (-0.25 + w * 0.2)))
    } else {
        w.ln_1p() - w
    }
}

impl ShiftedGammaParams {
    pub fn mean(&self) -> f64 {
        self.shift + self.sign() * self.shape * self.scale
    }

    pub fn var(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn skew(&self) -> f64 {
        self.sign() * 2.0 / self.shape.sqrt()
    }

    fn sign(&self) -> f64 {
        if self.reflected {
            -1.0
        } else {
            1.0
        }
    }

    /// Distance into the support, `x > 0` inside.
    fn offset(&self, y: f64) -> f64 {
        self.sign() * (y - self.shift)
    }

    /// Written around the mode scale `k s` so that large shapes keep full
    /// precision.
    pub fn logpdf(&self, y: f64) -> f64 {
        let x = self.offset(y);
        if !(x > 0.0) || !x.is_finite() {
            return LOG_FLOOR;
        }
        let k = self.shape;
        let w = (x - k * self.scale) / (k * self.scale);
        let l = k * log1pmx(w) + 0.5 * k.ln() - LN_SQRT_2PI - ln_gamma_stirling_remainder(k) - x.ln();
        l.max(LOG_FLOOR)
    }

    /// `(P(Y <= y), P(Y > y))`.
    pub fn cdf_pair(&self, y: f64) -> (f64, f64) {
        let x = self.offset(y);
        let (p, q) = gamma_pq(self.shape, x.max(0.0) / self.scale);
        if self.reflected {
            (q, p)
        } else {
            (p, q)
        }
    }
}

impl SkewMarginal {
    pub fn logpdf(&self, y: f64) -> f64 {
        match self {
            SkewMarginal::Gamma(g) => g.logpdf(y),
            SkewMarginal::Normal { mean, sd } => (norm_logpdf((y - mean) / sd) - sd.ln()).max(LOG_FLOOR),
        }
    }

    pub fn cdf_pair(&self, y: f64) -> (f64, f64) {
        match self {
            SkewMarginal::Gamma(g) => g.cdf_pair(y),
            SkewMarginal::Normal { mean, sd } => {
                let z = (y - mean) / sd;
                (norm_cdf(z), norm_sf(z))
            }
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.cdf_pair(y).0
    }

    /// Signed skewness of the fitted marginal.
    pub fn skew(&self) -> f64 {
        match self {
            SkewMarginal::Gamma(g) => g.skew(),
            SkewMarginal::Normal { .. } => 0.0,
        }
    }

    /// Interval holding all but a negligible fraction of the mass.
    pub fn bulk(&self) -> (f64, f64) {
        match self {
            SkewMarginal::Gamma(g) => {
                let sd = g.var().sqrt();
                let (lo, hi) = (g.shift, g.mean() + g.sign() * 40.0 * sd);
                if g.reflected {
                    (hi, lo)
                } else {
                    (lo, hi)
                }
            }
            SkewMarginal::Normal { mean, sd } => (mean - 12.0 * sd, mean + 12.0 * sd),
        }
    }
}
