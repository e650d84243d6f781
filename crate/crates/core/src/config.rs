//! Serde-facing configuration records shared by the CLI and the experiment
//! descriptors. Flat optional fields here; validated domain types behind
//! [`ModelConfig::build`] / [`ContractConfig::build`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{JumpModel, ModelKind};
use crate::stepper::{ContractSpec, ExerciseStyle, OptionSide};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    pub r: f64,
    #[serde(default)]
    pub q: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub mu_j: Option<f64>,
    #[serde(default)]
    pub sigma_j: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub alpha1: Option<f64>,
    #[serde(default)]
    pub alpha2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindConfig {
    Merton,
    Kou,
    Diffusion,
}

impl ModelConfig {
    pub fn build(&self) -> Result<JumpModel> {
        match self.kind {
            ModelKindConfig::Merton => {
                let mu_j = self
                    .mu_j
                    .ok_or_else(|| Error::InvalidConfig("model.mu_j is required for merton".into()))?;
                let sigma_j = self.sigma_j.ok_or_else(|| {
                    Error::InvalidConfig("model.sigma_j is required for merton".into())
                })?;
                JumpModel::merton(self.r, self.q, self.sigma, self.lambda, mu_j, sigma_j)
                    .map_err(|e| Error::InvalidConfig(format!("model: {e}")))
            }
            ModelKindConfig::Kou => {
                let p = self
                    .p
                    .ok_or_else(|| Error::InvalidConfig("model.p is required for kou".into()))?;
                let alpha1 = self
                    .alpha1
                    .ok_or_else(|| Error::InvalidConfig("model.alpha1 is required for kou".into()))?;
                let alpha2 = self
                    .alpha2
                    .ok_or_else(|| Error::InvalidConfig("model.alpha2 is required for kou".into()))?;
                JumpModel::kou(self.r, self.q, self.sigma, self.lambda, p, alpha1, alpha2)
                    .map_err(|e| Error::InvalidConfig(format!("model: {e}")))
            }
            ModelKindConfig::Diffusion => {
                if self.lambda != 0.0 {
                    return Err(Error::InvalidConfig(
                        "model.lambda must be 0 for a diffusion model".into(),
                    ));
                }
                JumpModel::pure_diffusion(self.r, self.q, self.sigma)
                    .map_err(|e| Error::InvalidConfig(format!("model: {e}")))
            }
        }
    }

    pub fn from_model(m: &JumpModel) -> Self {
        let mut c = ModelConfig {
            kind: match m.kind() {
                ModelKind::Merton => ModelKindConfig::Merton,
                ModelKind::Kou => ModelKindConfig::Kou,
                ModelKind::PureDiffusion => ModelKindConfig::Diffusion,
            },
            r: m.r,
            q: m.q,
            sigma: m.sigma,
            lambda: m.lambda,
            mu_j: None,
            sigma_j: None,
            p: None,
            alpha1: None,
            alpha2: None,
        };
        match m.law {
            crate::models::JumpLaw::Merton { mu_j, sigma_j } => {
                c.mu_j = Some(mu_j);
                c.sigma_j = Some(sigma_j);
            }
            crate::models::JumpLaw::Kou { p, alpha1, alpha2 } => {
                c.p = Some(p);
                c.alpha1 = Some(alpha1);
                c.alpha2 = Some(alpha2);
            }
            crate::models::JumpLaw::None => {}
        }
        c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContractConfig {
    pub strike: f64,
    pub maturity: f64,
    pub side: OptionSide,
    pub exercise: ExerciseStyle,
}

impl ContractConfig {
    pub fn build(&self) -> Result<ContractSpec> {
        ContractSpec::new(self.strike, self.maturity, self.side, self.exercise)
            .map_err(|e| Error::InvalidConfig(format!("contract: {e}")))
    }
}

fn default_n() -> usize {
    600
}

fn default_epsilon() -> f64 {
    crate::models::DEFAULT_EPSILON
}

fn default_quad_tol() -> f64 {
    crate::collocation::DEFAULT_QUAD_TOL
}

fn default_fst_size() -> usize {
    1 << 14
}

fn default_fst_steps() -> usize {
    2048
}

fn default_n_eval() -> usize {
    1950
}

/// Numerical knobs for a pricing run. `x_min`/`x_max` default to
/// log K -/+ 10; `m0` defaults to max(n/2, 64).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NumericsConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub m0: Option<usize>,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_fst_size")]
    pub fst_size: usize,
    #[serde(default = "default_fst_steps")]
    pub fst_steps: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            n: default_n(),
            m0: None,
            x_min: None,
            x_max: None,
            epsilon: default_epsilon(),
            quad_tol: default_quad_tol(),
            fst_size: default_fst_size(),
            fst_steps: default_fst_steps(),
            n_eval: default_n_eval(),
        }
    }
}

impl NumericsConfig {
    pub fn m0_or_default(&self) -> usize {
        self.m0.unwrap_or_else(|| (self.n / 2).max(64))
    }

    pub fn domain_for(&self, strike_log: f64) -> (f64, f64) {
        (
            self.x_min.unwrap_or(strike_log - 10.0),
            self.x_max.unwrap_or(strike_log + 10.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidConfig(format!(
                "numerics.n must be >= 4, got {}",
                self.n
            )));
        }
        if let Some(m0) = self.m0 {
            if m0 < 2 {
                return Err(Error::InvalidConfig(format!(
                    "numerics.m0 must be >= 2, got {m0}"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "numerics.epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.quad_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "numerics.quad_tol must be > 0, got {}",
                self.quad_tol
            )));
        }
        if self.n_eval < 2 {
            return Err(Error::InvalidConfig(format!(
                "numerics.n_eval must be >= 2, got {}",
                self.n_eval
            )));
        }
        if let (Some(lo), Some(hi)) = (self.x_min, self.x_max) {
            if !(lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "numerics domain [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<String>,
}

/// One pricing run: model, contract, numerics, output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub contract: ContractConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.build()?;
        self.contract.build()?;
        self.numerics.validate()?;
        Ok(())
    }
}
