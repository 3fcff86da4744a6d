//! Choice of the number of dropped eigenvalues per level, coarsest mesh
//! bounds, and calibration of the error constants.

use serde::{Deserialize, Serialize};

use super::{run_samples, Coupling, LevelPlan, Study};
use crate::covariance::{CovarianceModel, Family};
use crate::error::{Error, Result};
use crate::stats::RunningStats;

/// How many eigenvalues each smoothed level drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SmoothingRule {
    Off,
    /// `k = s / 2`.
    HalfSpectrum,
    /// Balance discretisation and smoothing error with the given constant
    /// ratio (see [`choose_k_ell`]).
    Adaptive { c_ratio: f64 },
}

/// Which embedding size enters the smoothing term of the level-`l` bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SConvention {
    /// The level's own (fine) grid.
    #[default]
    Fine,
    /// The next coarser grid; the resulting fraction `k / s` is applied to
    /// the fine embedding.
    Coarse,
}

/// Root in `(0, s - 1)` of `k (s - k)^(-(1 + nu) / 2) = rhs`, if any.
pub(crate) fn solve_matern_k(s: f64, nu: f64, rhs: f64) -> Option<f64> {
    let g = |k: f64| k * (s - k).powf(-0.5 * (1.0 + nu)) - rhs;
    let (mut lo, mut hi) = (0.0, s - 1.0);
    if !(hi > 0.0) || g(hi) < 0.0 {
        return None;
    }
    // g is increasing on (0, s); bisect well below the 0.5 needed for rounding.
    while hi - lo > 1e-10 * s.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Unrounded `k` for embedding size `s`, with `mj = h^-1 + J`.
fn k_continuous(model: &CovarianceModel, s: f64, mj: f64, h: f64, alpha: f64, c_ratio: f64) -> Option<f64> {
    match model.family() {
        Family::SeparableExponential { .. } => {
            Some(s.powf(-(alpha - 3.0) / 2.0) / (c_ratio + s.powf(-(alpha - 1.0) / 2.0)))
        }
        Family::Matern { nu } => solve_matern_k(s, nu, c_ratio * h.powf(alpha) * mj),
    }
}

/// Number of eigenvalues to drop on `plan`'s level.
///
/// Exponential kernels use the closed form
/// `k = s^(-(alpha-3)/2) / (c_ratio + s^(-(alpha-1)/2))` with
/// `c_ratio = C_s / (2 C_alpha)`. Matérn kernels solve
/// `(s - k)^(-(1+nu)/2) k = c_ratio h^alpha (h^-1 + J)` with
/// `c_ratio = C_alpha / (2 C_s)`; when no root exists no smoothing is applied.
pub fn choose_k_ell(model: &CovarianceModel, plan: &LevelPlan, alpha: f64, c_ratio: f64, convention: SConvention) -> usize {
    let s = plan.op.size() as f64;
    let m = plan.grid.m()[0] as f64;
    let j = plan.op.padding()[0] as f64;
    let h = 1.0 / m;
    let k = match convention {
        SConvention::Fine => k_continuous(model, s, m + j, h, alpha, c_ratio),
        SConvention::Coarse => {
            let sc = s / 4.0;
            k_continuous(model, sc, (m + j) / 2.0, 2.0 * h, alpha, c_ratio).map(|k| k / sc * s)
        }
    };
    match k {
        Some(k) if k.is_finite() => (k.round().max(0.0) as usize).min(plan.op.size() - 1),
        _ => {
            log::warn!(
                "no admissible truncation index on level {} (m = {}); smoothing disabled there",
                plan.ell,
                plan.grid.m()[0]
            );
            0
        }
    }
}

/// Applies a smoothing rule on one level.
pub(crate) fn k_for_rule(
    model: &CovarianceModel,
    plan: &LevelPlan,
    rule: SmoothingRule,
    alpha: f64,
    convention: SConvention,
) -> usize {
    match rule {
        SmoothingRule::Off => 0,
        SmoothingRule::HalfSpectrum => plan.op.size() / 2,
        SmoothingRule::Adaptive { c_ratio } => choose_k_ell(model, plan, alpha, c_ratio, convention),
    }
}

/// Largest `2^-j`, `j >= 0`, not exceeding the kernel's correlation scale:
/// `lambda` for exponential kernels, `sqrt(8 nu) lambda` for Matérn.
pub fn coarsest_level_bound(model: &CovarianceModel) -> f64 {
    let bound = match model.family() {
        Family::SeparableExponential { .. } => model.lambda(),
        Family::Matern { nu } => (8.0 * nu).sqrt() * model.lambda(),
    };
    let mut h = 1.0;
    while h > bound {
        h *= 0.5;
    }
    h
}

/// Error constants estimated from a pilot on one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// `C_alpha` in `|E[Q_h - Q]| = C_alpha h^alpha`.
    pub c_alpha: f64,
    /// `C_s` in the smoothing-error bound.
    pub c_s: f64,
    /// `C~_alpha / C_alpha` for the Richardson extrapolant.
    pub c_tilde_ratio: f64,
    /// Constant ratio for [`choose_k_ell`].
    pub c_ratio: f64,
}

/// Estimates the constants from `n` samples on the `m x m` grid (paired with
/// `m / 2`), smoothing with `k = s / 2`.
pub fn calibrate_constants(study: &Study, m: usize, alpha: f64, n: u64, seed: u64) -> Result<Calibration> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::Argument(format!("calibration grid must be even, got m = {m}")));
    }
    let m0 = m / 2;
    let plan = study.level_plan(m0, 1)?;
    let k = plan.op.size() / 2;
    let plan = plan.with_truncation(k)?;
    let spec = study.spec();
    let plain = run_samples(spec, &plan, Coupling::PLAIN, seed, 1, 0..n)?;
    let finest = run_samples(spec, &plan, Coupling::FINEST, seed, 1, 0..n)?;
    let smooth_fine = run_samples(spec, &plan.clone().fine_only(), Coupling::SMOOTHED, seed, 1, 0..n)?;

    let (mut d, mut dt, mut e) = (RunningStats::default(), RunningStats::default(), RunningStats::default());
    for ((p, f), sf) in plain.iter().zip(&finest).zip(&smooth_fine) {
        d.push(p.y());
        dt.push(f.y());
        e.push((p.q_fine - sf.q_fine).abs());
    }
    let h = 1.0 / m as f64;
    let two_a = 2f64.powf(alpha);
    let c_alpha = d.mean().abs() / (h.powf(alpha) * (two_a - 1.0));
    let s = plan.op.size() as f64;
    let kf = k as f64;
    let decay = match study.spec().model.family() {
        Family::SeparableExponential { .. } => (s - kf).powi(-1),
        Family::Matern { nu } => (s - kf).powf(-0.5 * (1.0 + nu)),
    };
    let c_s = e.mean() / (s.powf(-0.5) * decay * kf);
    let rho = if d.mean() != 0.0 { dt.mean() / d.mean() } else { 1.0 };
    let c_tilde_ratio = (1.0 - rho * (1.0 - two_a)) / two_a;
    let c_ratio = match study.spec().model.family() {
        Family::SeparableExponential { .. } => c_s / (2.0 * c_alpha),
        Family::Matern { .. } => c_alpha / (2.0 * c_s),
    };
    if !(c_alpha > 0.0 && c_s > 0.0 && c_ratio.is_finite()) {
        return Err(Error::Degenerate(format!(
            "calibration gave C_alpha = {c_alpha}, C_s = {c_s}; increase the pilot size"
        )));
    }
    Ok(Calibration {
        c_alpha,
        c_s,
        c_tilde_ratio,
        c_ratio,
    })
}
