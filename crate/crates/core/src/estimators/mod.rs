//! Monte Carlo and multilevel Monte Carlo estimators for the Darcy
//! quantities of interest, with optional spectral-truncation smoothing.
//!
//! Level `l` uses the grid with `m0 * 2^l` cells per axis. The field on a
//! level is sampled once on that level's grid; the coarse field is the
//! restriction of the same embedding sample.
//!
//! Per-sample results are computed in parallel but accumulated in sample
//! order, so every statistic is independent of the worker count.

mod mlmc;
mod rates;
pub(crate) mod smoothing;

pub use mlmc::{mc_estimate, mlmc_estimate, sample_fixed, McOptions, MlmcOptions, SmoothingScope};
pub use rates::{fit_rates, richardson_bias, LevelRateData, RateFit};
pub use smoothing::{calibrate_constants, choose_k_ell, coarsest_level_bound, Calibration, SConvention, SmoothingRule};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::embedding::{EmbeddingOperator, GridSpec, PaddingSchedule, SampleWorkspace};
use crate::error::{Error, Result};
use crate::fem::{assemble_and_solve, qoi_l2norm, qoi_point, DarcyProblem, Forcing, SolverOptions};
use crate::rng::rng_stream;
use crate::stats::RunningStats;

/// Scalar functional of the PDE solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Qoi {
    Point { x: f64, y: f64 },
    L2Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mc,
    Mlmc,
    MlmcCes,
}

/// Everything that defines one random PDE problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub model: CovarianceModel,
    pub qoi: Qoi,
    pub forcing: Forcing,
    pub solver: SolverOptions,
    pub padding: PaddingSchedule,
}

impl ProblemSpec {
    pub fn new(model: CovarianceModel, qoi: Qoi) -> Self {
        Self {
            model,
            qoi,
            forcing: Forcing::Constant(1.0),
            solver: SolverOptions::default(),
            padding: PaddingSchedule::default(),
        }
    }
}

/// A problem together with a cache of embedding operators by resolution.
pub struct Study {
    spec: ProblemSpec,
    ops: Mutex<HashMap<usize, Arc<EmbeddingOperator>>>,
}

impl Study {
    pub fn new(spec: ProblemSpec) -> Self {
        Self {
            spec,
            ops: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// Untruncated embedding on the `m x m` grid.
    pub fn operator(&self, m: usize) -> Result<Arc<EmbeddingOperator>> {
        if let Some(op) = self.ops.lock().expect("cache lock").get(&m) {
            return Ok(op.clone());
        }
        let grid = GridSpec::square(2, m)?;
        let op = Arc::new(EmbeddingOperator::build_with_schedule(&grid, &self.spec.model, &self.spec.padding)?);
        self.ops.lock().expect("cache lock").insert(m, op.clone());
        Ok(op)
    }

    /// Plan for level `ell` above a coarsest grid with `m0` cells per axis.
    pub fn level_plan(&self, m0: usize, ell: usize) -> Result<LevelPlan> {
        let m = m0 << ell;
        let op = self.operator(m)?;
        let coarse = if ell > 0 { Some(GridSpec::square(2, m / 2)?) } else { None };
        Ok(LevelPlan {
            ell,
            grid: op.grid().clone(),
            coarse,
            smoothed: op.clone(),
            op,
            k_trunc: 0,
        })
    }
}

/// Sampling setup of one level.
#[derive(Debug, Clone)]
pub struct LevelPlan {
    pub ell: usize,
    pub grid: GridSpec,
    /// Level `ell - 1` grid; absent on level 0.
    pub coarse: Option<GridSpec>,
    /// Untruncated operator on `grid`.
    pub op: Arc<EmbeddingOperator>,
    /// Operator with the `k_trunc` smallest eigenvalues dropped.
    pub smoothed: Arc<EmbeddingOperator>,
    pub k_trunc: usize,
}

impl LevelPlan {
    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn with_truncation(mut self, k: usize) -> Result<Self> {
        self.smoothed = Arc::new(self.op.truncate(k)?);
        self.k_trunc = k;
        Ok(self)
    }

    /// The plan without the coarse grid (a single-level MC plan).
    pub fn fine_only(mut self) -> Self {
        self.coarse = None;
        self
    }
}

/// Which spectrum feeds the fine and the coarse solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Coupling {
    pub fine_smoothed: bool,
    pub coarse_smoothed: bool,
}

impl Coupling {
    pub const PLAIN: Coupling = Coupling {
        fine_smoothed: false,
        coarse_smoothed: false,
    };
    pub const SMOOTHED: Coupling = Coupling {
        fine_smoothed: true,
        coarse_smoothed: true,
    };
    /// Full fine field, smoothed coarse field.
    pub const FINEST: Coupling = Coupling {
        fine_smoothed: false,
        coarse_smoothed: true,
    };
}

/// One coupled draw on a level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledSample {
    pub q_fine: f64,
    pub q_coarse: Option<f64>,
    /// Deterministic operation count.
    pub work: f64,
    pub seconds: f64,
}

impl CoupledSample {
    pub fn y(&self) -> f64 {
        self.q_fine - self.q_coarse.unwrap_or(0.0)
    }
}

fn evaluate(qoi: Qoi, sol: &crate::fem::FeSolution) -> Result<f64> {
    match qoi {
        Qoi::Point { x, y } => qoi_point(sol, [x, y]),
        Qoi::L2Norm => Ok(qoi_l2norm(sol)),
    }
}

fn solve_qoi(spec: &ProblemSpec, z: crate::embedding::FieldSample) -> Result<(f64, f64)> {
    let problem = DarcyProblem::new(z, spec.forcing)?;
    let sol = assemble_and_solve(&problem, &spec.solver)?;
    Ok((evaluate(spec.qoi, &sol)?, sol.work))
}

/// Draws one embedding sample from `xi`, extracts the fine and (if the plan
/// has one) coarse fields, and solves on both.
pub fn coupled_sample(
    spec: &ProblemSpec,
    plan: &LevelPlan,
    coupling: Coupling,
    xi: &[f64],
    ws: &mut SampleWorkspace,
) -> Result<CoupledSample> {
    let start = Instant::now();
    let pick = |smoothed: bool| if smoothed { &plan.smoothed } else { &plan.op };
    let fine_op = pick(coupling.fine_smoothed);
    let u_fine = fine_op.sample_with(xi, ws)?;
    let mut work = fine_op.sample_work();
    let (q_fine, w) = solve_qoi(spec, fine_op.restrict(&u_fine, &plan.grid)?)?;
    work += w;
    let q_coarse = match &plan.coarse {
        None => None,
        Some(cg) => {
            let coarse_op = pick(coupling.coarse_smoothed);
            let z = if coupling.coarse_smoothed == coupling.fine_smoothed || plan.k_trunc == 0 {
                coarse_op.restrict(&u_fine, cg)?
            } else {
                let u = coarse_op.sample_with(xi, ws)?;
                work += coarse_op.sample_work();
                coarse_op.restrict(&u, cg)?
            };
            let (q, w) = solve_qoi(spec, z)?;
            work += w;
            Some(q)
        }
    };
    Ok(CoupledSample {
        q_fine,
        q_coarse,
        work,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs samples `range` of a level with streams `(seed, stream_level, i)`,
/// in parallel, returning them in index order.
pub fn run_samples(
    spec: &ProblemSpec,
    plan: &LevelPlan,
    coupling: Coupling,
    seed: u64,
    stream_level: u32,
    range: std::ops::Range<u64>,
) -> Result<Vec<CoupledSample>> {
    let s = plan.op.size();
    range
        .into_par_iter()
        .map_init(SampleWorkspace::default, |ws, i| {
            let xi = rng_stream(seed, stream_level, i).take(s);
            coupled_sample(spec, plan, coupling, &xi, ws).map_err(|e| Error::Sample {
                level: plan.ell,
                sample: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Statistics of one level of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub ell: usize,
    pub m: usize,
    pub k_trunc: usize,
    /// Level correction `Y` (equal to `Q` on level 0).
    pub y: RunningStats,
    /// Fine-grid QoI alone.
    pub q: RunningStats,
    pub work_sum: f64,
    pub seconds_sum: f64,
    /// Optimal sample count before rounding, from the last allocation.
    pub n_optimal: f64,
}

impl LevelStats {
    pub fn new(ell: usize, m: usize, k_trunc: usize) -> Self {
        Self {
            ell,
            m,
            k_trunc,
            y: RunningStats::default(),
            q: RunningStats::default(),
            work_sum: 0.0,
            seconds_sum: 0.0,
            n_optimal: 0.0,
        }
    }

    pub fn push(&mut self, s: &CoupledSample) {
        self.y.push(s.y());
        self.q.push(s.q_fine);
        self.work_sum += s.work;
        self.seconds_sum += s.seconds;
    }

    pub fn n(&self) -> u64 {
        self.y.count()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Mean model cost (operation count) per sample.
    pub fn cost_work(&self) -> f64 {
        self.work_sum / self.n().max(1) as f64
    }

    /// Mean wall-clock seconds per sample.
    pub fn cost_seconds(&self) -> f64 {
        self.seconds_sum / self.n().max(1) as f64
    }
}

/// Result of an MC or MLMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcReport {
    pub kind: EstimatorKind,
    pub eps: Option<f64>,
    pub estimate: f64,
    pub levels: Vec<LevelStats>,
    /// Richardson estimate of `|E[Q_h - Q]|` on the finest grid.
    pub bias_estimate: f64,
    /// `sqrt(sum V_l / N_l)`.
    pub sampling_error: f64,
    /// `sum N_l * cost_l` in operation counts.
    pub total_work: f64,
    pub total_seconds: f64,
    /// Work spent on samples that were later discarded or only used for
    /// diagnostics.
    pub extra_work: f64,
    pub converged: bool,
}

impl MlmcReport {
    fn assemble(kind: EstimatorKind, eps: Option<f64>, levels: Vec<LevelStats>, bias: f64, extra_work: f64) -> Self {
        let estimate = levels.iter().map(|l| l.y.mean()).sum();
        let var: f64 = levels.iter().map(|l| l.y.variance() / l.n().max(1) as f64).sum();
        let converged = eps.is_none_or(|e| var <= 0.5 * e * e * (1.0 + 1e-12) && bias * bias <= 0.5 * e * e);
        Self {
            kind,
            eps,
            estimate,
            total_work: levels.iter().map(|l| l.work_sum).sum(),
            total_seconds: levels.iter().map(|l| l.seconds_sum).sum(),
            levels,
            bias_estimate: bias,
            sampling_error: var.sqrt(),
            extra_work,
            converged,
        }
    }

    /// Finest level index `L`.
    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    /// Turns a non-converged report into an error.
    pub fn check(&self) -> Result<()> {
        match (self.converged, self.eps) {
            (false, Some(eps)) => Err(Error::MaxLevelReached {
                max_level: self.finest(),
                bias: self.bias_estimate,
                target: eps / 2f64.sqrt(),
            }),
            _ => Ok(()),
        }
    }
}
