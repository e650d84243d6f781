//! Jump-diffusion market models: jump densities, the expected relative jump
//! (compensator), Lévy characteristic exponents, and the analytic truncation
//! bounds for the jump integral.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default density/tail threshold for the jump-integral truncation.
pub const DEFAULT_EPSILON: f64 = 3.72e-40;

const SQRT_2PI: f64 = 2.506628274631000502415765284811;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Merton,
    Kou,
    PureDiffusion,
}

/// The jump size law attached to a [`JumpModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    /// Log-normal jumps: Y ~ N(mu_j, sigma_j^2).
    Merton { mu_j: f64, sigma_j: f64 },
    /// Double-exponential jumps: up-rate alpha1 (> 1), down-rate alpha2 (> 0),
    /// up-jump probability p.
    Kou { p: f64, alpha1: f64, alpha2: f64 },
    /// No jump component (lambda must be zero).
    None,
}

/// Full market/model parameter record. Rates are per year, sigma per
/// sqrt(year). Immutable once validated; all methods are pure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpModel {
    pub r: f64,
    pub q: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub law: JumpLaw,
}

impl JumpModel {
    pub fn merton(r: f64, q: f64, sigma: f64, lambda: f64, mu_j: f64, sigma_j: f64) -> Result<Self> {
        let m = JumpModel {
            r,
            q,
            sigma,
            lambda,
            law: JumpLaw::Merton { mu_j, sigma_j },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn kou(r: f64, q: f64, sigma: f64, lambda: f64, p: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        let m = JumpModel {
            r,
            q,
            sigma,
            lambda,
            law: JumpLaw::Kou { p, alpha1, alpha2 },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn pure_diffusion(r: f64, q: f64, sigma: f64) -> Result<Self> {
        let m = JumpModel {
            r,
            q,
            sigma,
            lambda: 0.0,
            law: JumpLaw::None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        match self.law {
            JumpLaw::Merton { .. } => ModelKind::Merton,
            JumpLaw::Kou { .. } => ModelKind::Kou,
            JumpLaw::None => ModelKind::PureDiffusion,
        }
    }

    /// Checks every model invariant; constructors call this.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("q", self.q),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} must be finite, got {v}")));
            }
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "sigma must be > 0 (martingale argument requires it), got {}",
                self.sigma
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidModel(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match self.law {
            JumpLaw::None => {
                if self.lambda != 0.0 {
                    return Err(Error::InvalidModel(
                        "lambda must be 0 for a pure-diffusion model".into(),
                    ));
                }
            }
            JumpLaw::Merton { mu_j, sigma_j } => {
                if self.lambda == 0.0 {
                    return Err(Error::InvalidModel(
                        "lambda = 0 requires the pure-diffusion kind".into(),
                    ));
                }
                if !mu_j.is_finite() || !sigma_j.is_finite() || sigma_j <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "Merton law requires finite mu_j and sigma_j > 0, got mu_j={mu_j}, sigma_j={sigma_j}"
                    )));
                }
            }
            JumpLaw::Kou { p, alpha1, alpha2 } => {
                if self.lambda == 0.0 {
                    return Err(Error::InvalidModel(
                        "lambda = 0 requires the pure-diffusion kind".into(),
                    ));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!("Kou p must lie in [0,1], got {p}")));
                }
                if alpha1 <= 1.0 {
                    return Err(Error::DivergentCompensator(format!(
                        "Kou alpha1 must be > 1 for E[e^Y] to exist, got {alpha1}"
                    )));
                }
                if alpha2 <= 0.0 {
                    return Err(Error::InvalidModel(format!("Kou alpha2 must be > 0, got {alpha2}")));
                }
            }
        }
        Ok(())
    }

    /// Jump-size density f(y). Errors for pure-diffusion models.
    pub fn jump_density(&self, y: f64) -> Result<f64> {
        match self.law {
            JumpLaw::Merton { mu_j, sigma_j } => {
                let z = (y - mu_j) / sigma_j;
                Ok((-0.5 * z * z).exp() / (SQRT_2PI * sigma_j))
            }
            JumpLaw::Kou { p, alpha1, alpha2 } => {
                if y >= 0.0 {
                    Ok(p * alpha1 * (-alpha1 * y).exp())
                } else {
                    Ok((1.0 - p) * alpha2 * (alpha2 * y).exp())
                }
            }
            JumpLaw::None => Err(Error::InvalidModel(
                "pure-diffusion model has no jump density".into(),
            )),
        }
    }

    /// Expected relative price change due to a jump, eta = E[e^Y - 1].
    pub fn eta(&self) -> f64 {
        match self.law {
            JumpLaw::Merton { mu_j, sigma_j } => (mu_j + 0.5 * sigma_j * sigma_j).exp() - 1.0,
            JumpLaw::Kou { p, alpha1, alpha2 } => {
                p * alpha1 / (alpha1 - 1.0) + (1.0 - p) * alpha2 / (alpha2 + 1.0) - 1.0
            }
            JumpLaw::None => 0.0,
        }
    }

    /// Risk-neutral drift gamma_c = r - q - sigma^2/2 - lambda*eta, chosen so
    /// that the discounted price process is a martingale (psi(-i) = r - q).
    pub fn gamma_c(&self) -> f64 {
        self.r - self.q - 0.5 * self.sigma * self.sigma - self.lambda * self.eta()
    }

    /// Lévy exponent psi(z) with E[e^{iz L_t}] = e^{t psi(z)}.
    ///
    /// psi(z) = -sigma^2 z^2/2 + i z gamma_c + lambda (E[e^{izY}] - 1); the
    /// normalization satisfies psi(0) = 0 and psi(-i) = r - q.
    pub fn characteristic_exponent(&self, z: Complex64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let jump_cf_m1 = match self.law {
            JumpLaw::Merton { mu_j, sigma_j } => {
                (i * z * mu_j - 0.5 * sigma_j * sigma_j * z * z).exp() - 1.0
            }
            JumpLaw::Kou { p, alpha1, alpha2 } => {
                p * alpha1 / (alpha1 - i * z) + (1.0 - p) * alpha2 / (alpha2 + i * z) - 1.0
            }
            JumpLaw::None => Complex64::new(0.0, 0.0),
        };
        -0.5 * self.sigma * self.sigma * z * z + i * z * self.gamma_c() + self.lambda * jump_cf_m1
    }

    /// Bounded interval [y_lo, y_hi] outside of which the jump density (and
    /// the associated tail integrals) fall below `epsilon`.
    pub fn truncation_bounds(&self, epsilon: f64) -> Result<TruncationInterval> {
        if !(epsilon > 0.0) {
            return Err(Error::InfeasibleThreshold(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        let (y_lo, y_hi) = match self.law {
            JumpLaw::Merton { mu_j, sigma_j } => {
                let arg = epsilon * sigma_j * SQRT_2PI / 2.0;
                if arg >= 1.0 {
                    return Err(Error::InfeasibleThreshold(format!(
                        "epsilon = {epsilon} too large: log argument {arg} >= 1"
                    )));
                }
                let y_hi = (-2.0 * sigma_j * sigma_j * arg.ln()).sqrt() + mu_j;
                (-y_hi, y_hi)
            }
            JumpLaw::Kou { p, alpha1, alpha2 } => {
                // The tail bound derivation needs alpha2 > 1 for the lower
                // side to converge; alpha2 in (0, 1] yields a wrong-signed
                // bound and is rejected.
                let y_hi = if p > 0.0 {
                    (epsilon / p).ln() / (1.0 - alpha1)
                } else {
                    0.0_f64
                };
                let y_lo = if p < 1.0 {
                    -((epsilon / (1.0 - p)).ln()) / (1.0 - alpha2)
                } else {
                    0.0_f64
                };
                (y_lo, y_hi)
            }
            JumpLaw::None => {
                return Err(Error::InvalidModel(
                    "pure-diffusion model has no jump integral to truncate".into(),
                ))
            }
        };
        if !(y_lo < 0.0 && y_hi > 0.0) {
            return Err(Error::InfeasibleThreshold(format!(
                "epsilon = {epsilon} yields a degenerate or wrong-signed interval [{y_lo}, {y_hi}]"
            )));
        }
        Ok(TruncationInterval { y_lo, y_hi, epsilon })
    }
}

/// Truncated computational range of the jump integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationInterval {
    pub y_lo: f64,
    pub y_hi: f64,
    /// Threshold used to derive the bounds (kept for reporting).
    pub epsilon: f64,
}

impl TruncationInterval {
    pub fn width(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.y_lo == self.y_hi
    }
}
