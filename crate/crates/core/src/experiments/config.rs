//! Flat TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::{CovarianceModel, Family};
use crate::embedding::PaddingSchedule;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, McOptions, MlmcOptions, ProblemSpec, Qoi, SConvention, SmoothingRule, SmoothingScope};
use crate::fem::{Forcing, Preconditioner, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Exponential,
    Matern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiKind {
    Point,
    L2norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKind {
    Off,
    HalfSpectrum,
    Adaptive,
}

/// All experiment parameters. Every key is optional in the file; missing
/// keys take the values of [`ExperimentConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub covariance: CovarianceKind,
    pub sigma2: f64,
    pub lambda: f64,
    /// Matérn smoothness.
    pub nu: f64,
    /// Norm exponent of the exponential kernel.
    pub p_norm: f64,
    /// Padding factors tried when an embedding is not positive definite.
    pub padding_factors: Vec<f64>,

    /// Coarsest mesh width, a negative power of two.
    pub h0: f64,
    pub max_level: usize,
    /// Finest level of the first MLMC allocation round.
    pub initial_level: usize,

    pub qoi: QoiKind,
    pub x_star: [f64; 2],
    /// Constant right-hand side `f`.
    pub forcing: f64,

    pub estimator: EstimatorKind,
    pub smoothing: SmoothingKind,
    /// Constant ratio for adaptive smoothing.
    pub c_ratio: f64,
    pub s_convention: SConvention,
    pub smoothing_scope: SmoothingScope,
    /// Weak order used for Richardson extrapolation.
    pub alpha: f64,
    pub c_tilde_ratio: f64,
    /// Mesh width of the plain MC estimator; defaults to the finest level.
    pub mc_h: Option<f64>,

    pub eps_list: Vec<f64>,
    pub seed: u64,
    pub pilot_samples: u64,
    /// Samples per level for `rates`.
    pub rate_samples: u64,
    /// Samples per grid for `smoothing-error`.
    pub smoothing_samples: u64,
    /// Divisors `a` with `k = s / a` for `smoothing-error`; `inf` means `k = 0`.
    pub k_divisors: Vec<f64>,
    /// Grid of `sample-field`; defaults to `1 / h0`.
    pub field_m: Option<usize>,
    /// Fraction of the spectrum dropped by `sample-field`.
    pub field_k_fraction: f64,

    pub solver_tol: f64,
    pub solver_max_iter_factor: usize,
    pub preconditioner: Preconditioner,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Exponential,
            sigma2: 1.0,
            lambda: 0.3,
            nu: 1.5,
            p_norm: 1.0,
            padding_factors: PaddingSchedule::default().factors,
            h0: 0.25,
            max_level: 4,
            initial_level: 2,
            qoi: QoiKind::Point,
            x_star: [7.0 / 15.0, 7.0 / 15.0],
            forcing: 1.0,
            estimator: EstimatorKind::Mlmc,
            smoothing: SmoothingKind::Off,
            c_ratio: 1.0,
            s_convention: SConvention::Fine,
            smoothing_scope: SmoothingScope::BelowFinest,
            alpha: 1.0,
            c_tilde_ratio: 1.0,
            mc_h: None,
            eps_list: vec![1e-2],
            seed: 0,
            pilot_samples: 100,
            rate_samples: 2000,
            smoothing_samples: 500,
            k_divisors: vec![2.0],
            field_m: None,
            field_k_fraction: 0.5,
            solver_tol: 1e-10,
            solver_max_iter_factor: 10,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

/// `1 / h` when `h` is a negative power of two (or 1).
fn inverse_power_of_two(name: &str, h: f64) -> Result<usize> {
    let m = (1.0 / h).round();
    if !(h > 0.0 && h <= 1.0) || m > (1u64 << 20) as f64 || (1.0 / m - h).abs() > 0.0 || !(m as usize).is_power_of_two() {
        return Err(Error::Config(format!("{name} = {h} is not a power of two 2^-j")));
    }
    Ok(m as usize)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.model()?;
        self.m0()?;
        if let Some(h) = self.mc_h {
            inverse_power_of_two("mc_h", h)?;
        }
        if self.x_star.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return bad(format!("x_star = {:?} must lie in (0, 1)^2", self.x_star));
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("eps_list must hold positive values".into());
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("eps_list must be strictly decreasing, got {:?}", self.eps_list));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) || self.solver_max_iter_factor == 0 {
            return bad("solver_tol must lie in (0, 1) and solver_max_iter_factor be positive".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer".into());
        }
        if !(self.alpha > 0.0) || !(self.c_ratio > 0.0) || !(self.c_tilde_ratio > 0.0) {
            return bad("alpha, c_ratio and c_tilde_ratio must be positive".into());
        }
        if self.pilot_samples < 2 || self.rate_samples < 2 || self.smoothing_samples < 2 {
            return bad("sample counts must be at least 2".into());
        }
        if self.k_divisors.iter().any(|a| !(*a >= 1.0)) {
            return bad(format!("k_divisors must be >= 1, got {:?}", self.k_divisors));
        }
        if !(0.0..1.0).contains(&self.field_k_fraction) {
            return bad("field_k_fraction must lie in [0, 1)".into());
        }
        if self.field_m == Some(0) {
            return bad("field_m must be positive".into());
        }
        if !self.forcing.is_finite() {
            return bad("forcing must be finite".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<CovarianceModel> {
        let family = match self.covariance {
            CovarianceKind::Exponential => Family::SeparableExponential { p_norm: self.p_norm },
            CovarianceKind::Matern => Family::Matern { nu: self.nu },
        };
        CovarianceModel::new(family, self.sigma2, self.lambda).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cells per axis on level 0.
    pub fn m0(&self) -> Result<usize> {
        inverse_power_of_two("h0", self.h0)
    }

    pub fn qoi_value(&self) -> Qoi {
        match self.qoi {
            QoiKind::Point => Qoi::Point {
                x: self.x_star[0],
                y: self.x_star[1],
            },
            QoiKind::L2norm => Qoi::L2Norm,
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let mut spec = ProblemSpec::new(self.model()?, self.qoi_value());
        spec.forcing = if self.forcing == 0.0 {
            Forcing::Zero
        } else {
            Forcing::Constant(self.forcing)
        };
        spec.solver = SolverOptions {
            tol: self.solver_tol,
            max_iter_factor: self.solver_max_iter_factor,
            preconditioner: self.preconditioner,
        };
        spec.padding = PaddingSchedule {
            factors: self.padding_factors.clone(),
        };
        Ok(spec)
    }

    pub fn smoothing_rule(&self) -> SmoothingRule {
        match self.smoothing {
            SmoothingKind::Off => SmoothingRule::Off,
            SmoothingKind::HalfSpectrum => SmoothingRule::HalfSpectrum,
            SmoothingKind::Adaptive => SmoothingRule::Adaptive { c_ratio: self.c_ratio },
        }
    }

    /// MLMC options for the configured estimator; `MlmcCes` with smoothing
    /// `off` falls back to half-spectrum truncation.
    pub fn mlmc_options(&self) -> Result<MlmcOptions> {
        let smoothing = match (self.estimator, self.smoothing_rule()) {
            (EstimatorKind::Mlmc, _) => SmoothingRule::Off,
            (_, SmoothingRule::Off) => SmoothingRule::HalfSpectrum,
            (_, rule) => rule,
        };
        Ok(MlmcOptions {
            m0: self.m0()?,
            max_level: self.max_level,
            initial_level: self.initial_level,
            pilot: self.pilot_samples,
            smoothing,
            convention: self.s_convention,
            scope: self.smoothing_scope,
            alpha: self.alpha,
            c_tilde_ratio: self.c_tilde_ratio,
            ..MlmcOptions::default()
        })
    }

    pub fn mc_options(&self, eps: f64) -> Result<McOptions> {
        let m = match self.mc_h {
            Some(h) => inverse_power_of_two("mc_h", h)?,
            None => self.m0()? << self.max_level,
        };
        Ok(McOptions {
            m,
            n: None,
            eps: Some(eps),
            pilot: self.pilot_samples,
            rates: None,
            alpha: self.alpha,
        })
    }
}
