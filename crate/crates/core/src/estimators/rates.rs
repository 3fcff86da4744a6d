//! Richardson bias estimates and log-log rate fits.

use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// `|E[Q_h - Q]|` from the mean difference `E[Q_h - Q_2h]` (or against a
/// smoothed extrapolant, with `c_tilde_ratio = C~_alpha / C_alpha`; pass 1
/// for the unsmoothed form).
pub fn richardson_bias(mean_diff: f64, alpha: f64, c_tilde_ratio: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Argument(format!("alpha must be positive, got {alpha}")));
    }
    let denom = 1.0 - c_tilde_ratio * 2f64.powf(alpha);
    if denom.abs() < 0.1 {
        return Err(Error::IllConditioned(format!(
            "Richardson denominator {denom} for alpha = {alpha}, ratio = {c_tilde_ratio}"
        )));
    }
    Ok(mean_diff.abs() / denom.abs())
}

/// Per-level input to [`fit_rates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRateData {
    pub h: f64,
    pub mean_abs_y: f64,
    pub var_y: f64,
    pub cost: f64,
}

/// Fitted `|E Y| ~ C_alpha h^alpha`, `V ~ C_beta h^beta`,
/// `cost ~ C_gamma h^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
}

fn fit_one(what: &str, h: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (&h, &v) in h.iter().zip(v) {
        if v > 0.0 && v.is_finite() && h > 0.0 {
            lx.push(h.ln());
            ly.push(v.ln());
        } else {
            log::warn!("{what}: excluding non-positive value {v} at h = {h}");
        }
    }
    if lx.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{what}: only {} usable levels, need at least 3",
            lx.len()
        )));
    }
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok((slope, intercept.exp()))
}

pub fn fit_rates(data: &[LevelRateData]) -> Result<RateFit> {
    let h: Vec<f64> = data.iter().map(|d| d.h).collect();
    let col = |f: fn(&LevelRateData) -> f64| data.iter().map(f).collect::<Vec<f64>>();
    let (alpha, c_alpha) = fit_one("mean", &h, &col(|d| d.mean_abs_y))?;
    let (beta, c_beta) = fit_one("variance", &h, &col(|d| d.var_y))?;
    let (g, c_gamma) = fit_one("cost", &h, &col(|d| d.cost))?;
    Ok(RateFit {
        alpha,
        beta,
        gamma: -g,
        c_alpha,
        c_beta,
        c_gamma,
    })
}
