//! Single-level and multilevel drivers.

use serde::{Deserialize, Serialize};

use super::smoothing::{coarsest_level_bound, k_for_rule, SConvention, SmoothingRule};
use super::{rates::richardson_bias, run_samples, Coupling, EstimatorKind, LevelPlan, LevelStats, MlmcReport, Study};
use crate::error::{Error, Result};
use crate::stats::RunningStats;

/// Largest grid resolution an estimator will pick on its own.
const MAX_AUTO_M: usize = 1 << 12;

fn extend(study: &Study, plan: &LevelPlan, coupling: Coupling, seed: u64, stream: u32, stats: &mut LevelStats, upto: u64) -> Result<()> {
    let from = stats.n();
    if upto > from {
        for s in run_samples(study.spec(), plan, coupling, seed, stream, from..upto)? {
            stats.push(&s);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Grid resolution, or the smallest admissible one when `rates` is set.
    pub m: usize,
    /// Fixed sample count; overrides `eps`-driven allocation.
    pub n: Option<u64>,
    pub eps: Option<f64>,
    pub pilot: u64,
    /// Calibrated `(alpha, C_alpha)` used to pick `h` from `eps`.
    pub rates: Option<(f64, f64)>,
    /// Convergence order used for the Richardson bias estimate.
    pub alpha: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            m: 32,
            n: None,
            eps: None,
            pilot: 100,
            rates: None,
            alpha: 1.0,
        }
    }
}

/// Plain Monte Carlo on one grid. The bias is estimated from a second pass
/// pairing every sample with the solve on the grid of twice the mesh width;
/// that pass is reported as extra work.
pub fn mc_estimate(study: &Study, opts: &McOptions, seed: u64) -> Result<MlmcReport> {
    let mut m = opts.m;
    if let (Some(eps), Some((alpha, c_alpha))) = (opts.eps, opts.rates) {
        let bound = (eps / (2f64.sqrt() * c_alpha)).powf(1.0 / alpha);
        m = m.next_power_of_two();
        while 1.0 / m as f64 >= bound {
            m *= 2;
            if m > MAX_AUTO_M {
                return Err(Error::Config(format!("eps = {eps} needs a grid finer than {MAX_AUTO_M}")));
            }
        }
    }
    let plan = study.level_plan(m, 0)?;
    let mut stats = LevelStats::new(0, m, 0);
    let target = match (opts.n, opts.eps) {
        (Some(n), _) => n,
        (None, Some(eps)) => {
            extend(study, &plan, Coupling::PLAIN, seed, 0, &mut stats, opts.pilot.max(2))?;
            let v = stats.q.variance();
            if v == 0.0 {
                return Err(Error::Degenerate("pilot variance is zero".into()));
            }
            let n = (2.0 * v / (eps * eps)).ceil();
            stats.n_optimal = n;
            (n as u64).max(opts.pilot)
        }
        (None, None) => return Err(Error::Argument("MC needs either a sample count or a tolerance".into())),
    };
    extend(study, &plan, Coupling::PLAIN, seed, 0, &mut stats, target)?;

    let mut extra_work = 0.0;
    let bias = if m % 2 == 0 {
        let paired = study.level_plan(m / 2, 1)?;
        let mut diff = RunningStats::default();
        for s in run_samples(study.spec(), &paired, Coupling::PLAIN, seed, 0, 0..stats.n())? {
            diff.push(s.y());
            extra_work += s.work;
        }
        richardson_bias(diff.mean(), opts.alpha, 1.0)?
    } else {
        log::warn!("odd grid m = {m}: no bias estimate");
        f64::NAN
    };
    Ok(MlmcReport::assemble(EstimatorKind::Mc, opts.eps, vec![stats], bias, extra_work))
}

/// Where smoothing applies in the multilevel estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingScope {
    /// Every level below the finest.
    #[default]
    BelowFinest,
    /// Only levels whose mesh is coarser than the correlation-scale bound
    /// of [`coarsest_level_bound`].
    UpToBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmcOptions {
    /// Cells per axis on level 0.
    pub m0: usize,
    pub max_level: usize,
    /// Finest level of the first allocation round.
    pub initial_level: usize,
    pub pilot: u64,
    pub smoothing: SmoothingRule,
    pub convention: SConvention,
    pub scope: SmoothingScope,
    /// Weak convergence order for the Richardson bias and [`super::choose_k_ell`].
    pub alpha: f64,
    /// `C~_alpha / C_alpha` for the smoothed Richardson extrapolant.
    pub c_tilde_ratio: f64,
    /// Allocation rounds per finest level before giving up on re-estimates.
    pub max_rounds: usize,
}

impl Default for MlmcOptions {
    fn default() -> Self {
        Self {
            m0: 4,
            max_level: 6,
            initial_level: 2,
            pilot: 100,
            smoothing: SmoothingRule::Off,
            convention: SConvention::Fine,
            scope: SmoothingScope::BelowFinest,
            alpha: 1.0,
            c_tilde_ratio: 1.0,
            max_rounds: 10,
        }
    }
}

impl MlmcOptions {
    pub fn kind(&self) -> EstimatorKind {
        match self.smoothing {
            SmoothingRule::Off => EstimatorKind::Mlmc,
            _ => EstimatorKind::MlmcCes,
        }
    }
}

fn build_plan(study: &Study, opts: &MlmcOptions, ell: usize) -> Result<LevelPlan> {
    let plan = study.level_plan(opts.m0, ell)?;
    let in_scope = match opts.scope {
        SmoothingScope::BelowFinest => true,
        SmoothingScope::UpToBound => plan.h() > coarsest_level_bound(&study.spec().model),
    };
    let k = if in_scope {
        k_for_rule(&study.spec().model, &plan, opts.smoothing, opts.alpha, opts.convention)
    } else {
        0
    };
    plan.with_truncation(k)
}

fn coupling_for(plan: &LevelPlan, finest: usize) -> Coupling {
    if plan.k_trunc == 0 {
        Coupling::PLAIN
    } else if plan.ell < finest {
        Coupling::SMOOTHED
    } else {
        Coupling::FINEST
    }
}

/// Adaptive MLMC (or MLMC-CES when `opts.smoothing` is not `Off`) to RMSE `eps`.
///
/// Each finest level `L` is handled in rounds: pilot every level, allocate
/// `N_l` optimally from the current variance and cost estimates, draw the
/// missing samples, and repeat until no level needs more. The bias is then
/// estimated from the finest correction; if it is too large a level is added.
/// A non-converged report is returned when `max_level` is exhausted.
pub fn mlmc_estimate(study: &Study, opts: &MlmcOptions, eps: f64, seed: u64) -> Result<MlmcReport> {
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let mut finest = opts.initial_level.min(opts.max_level);
    let mut plans = (0..=finest).map(|l| build_plan(study, opts, l)).collect::<Result<Vec<_>>>()?;
    let mut stats: Vec<LevelStats> = plans.iter().map(|p| LevelStats::new(p.ell, p.grid.m()[0], p.k_trunc)).collect();
    let mut extra_work = 0.0;
    let pilot = opts.pilot.max(2);
    loop {
        for (p, st) in plans.iter().zip(stats.iter_mut()) {
            extend(study, p, coupling_for(p, finest), seed, p.ell as u32, st, pilot)?;
        }
        for _ in 0..opts.max_rounds.max(1) {
            let vc: Vec<(f64, f64)> = stats.iter().map(|s| (s.y.variance(), s.cost_work())).collect();
            let sum: f64 = vc.iter().map(|(v, c)| (v * c).sqrt()).sum();
            let mut target = vec![0u64; stats.len()];
            for (l, &(v, c)) in vc.iter().enumerate() {
                let n_opt = 2.0 / (eps * eps) * sum * (v / c).sqrt();
                stats[l].n_optimal = n_opt;
                target[l] = (n_opt.ceil() as u64).max(stats[l].n());
            }
            for l in (0..target.len() - 1).rev() {
                target[l] = target[l].max(target[l + 1]);
            }
            if target.iter().zip(&stats).all(|(t, s)| *t <= s.n()) {
                break;
            }
            for ((p, st), &t) in plans.iter().zip(stats.iter_mut()).zip(&target) {
                extend(study, p, coupling_for(p, finest), seed, p.ell as u32, st, t)?;
            }
        }
        let bias = if finest == 0 {
            0.0
        } else {
            let ratio = if plans[finest].k_trunc > 0 { opts.c_tilde_ratio } else { 1.0 };
            richardson_bias(stats[finest].y.mean(), opts.alpha, ratio)?
        };
        let report = MlmcReport::assemble(opts.kind(), Some(eps), stats.clone(), bias, extra_work);
        if bias * bias <= 0.5 * eps * eps || finest >= opts.max_level {
            if !report.converged {
                log::warn!("MLMC stopped at level {finest} with bias {bias:e} for eps {eps:e}");
            }
            return Ok(report);
        }
        // The old finest level switches from a full to a smoothed fine field.
        if plans[finest].k_trunc > 0 {
            extra_work += stats[finest].work_sum;
            let p = &plans[finest];
            stats[finest] = LevelStats::new(p.ell, p.grid.m()[0], p.k_trunc);
        }
        finest += 1;
        let p = build_plan(study, opts, finest)?;
        stats.push(LevelStats::new(p.ell, p.grid.m()[0], p.k_trunc));
        plans.push(p);
    }
}

/// Draws `n` samples on each `(plan, coupling)` pair, with streams keyed by
/// the plan's level.
pub fn sample_fixed(study: &Study, plans: &[(LevelPlan, Coupling)], n: u64, seed: u64) -> Result<Vec<LevelStats>> {
    plans
        .iter()
        .map(|(p, c)| {
            let mut st = LevelStats::new(p.ell, p.grid.m()[0], p.k_trunc);
            extend(study, p, *c, seed, p.ell as u32, &mut st, n)?;
            Ok(st)
        })
        .collect()
}
