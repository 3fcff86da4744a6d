//! Experiment drivers behind the command-line tool. Each command reads an
//! [`ExperimentConfig`], runs deterministically from its seed, and writes one
//! CSV file (two for `rates`) into an output directory.

mod config;

pub use config::{CovarianceKind, ExperimentConfig, QoiKind, SmoothingKind};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::embedding::{EmbeddingOperator, GridSpec};
use crate::error::{Error, Result};
use crate::estimators::smoothing::k_for_rule;
use crate::estimators::{
    fit_rates, mc_estimate, mlmc_estimate, run_samples, sample_fixed, Coupling, EstimatorKind, LevelRateData, LevelStats,
    MlmcReport, RateFit, SmoothingRule, Study,
};
use crate::rng::rng_stream;
use crate::stats::RunningStats;

/// Where and how results are written.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Include wall-clock columns. Off for byte-reproducible output.
    pub timing: bool,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct CsvOut {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    fn create(cfg: &ExperimentConfig, opts: &RunOptions, name: &str, command: &str, header: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
        let path = opts.out_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(
            buf,
            "# oscfield {} command={} config_sha256={}",
            env!("CARGO_PKG_VERSION"),
            command,
            cfg.hash()
        )
        .map_err(|e| Error::io(&path, e))?;
        let mut out = Self {
            w: csv::Writer::from_writer(buf),
            path,
        };
        out.row(header.iter().map(|s| s.to_string()))?;
        Ok(out)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| self.csv_err(e))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.path)
    }

    fn csv_err(&self, e: csv::Error) -> Error {
        Error::io(&self.path, std::io::Error::other(e))
    }
}

fn columns<'a>(base: &[&'a str], timed: &[&'a str], timing: bool) -> Vec<&'a str> {
    let mut v = base.to_vec();
    if timing {
        v.extend_from_slice(timed);
    }
    v
}

/// One field sample and its truncated counterpart from the same `xi`.
pub fn cmd_sample_field(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    let spec = cfg.problem()?;
    let m = match cfg.field_m {
        Some(m) => m,
        None => cfg.m0()?,
    };
    let grid = GridSpec::square(2, m)?;
    let op = EmbeddingOperator::build_with_schedule(&grid, &spec.model, &spec.padding)?;
    let s = op.size();
    let k = (cfg.field_k_fraction * s as f64).floor() as usize;
    let xi = rng_stream(cfg.seed, 0, 0).take(s);
    let z = op.sample_field(&xi)?;
    let zs = op.truncate(k)?.sample_field(&xi)?;
    log::info!("sample-field: m = {m}, s = {s}, k = {k}");

    let mut out = CsvOut::create(cfg, opts, "field.csv", "sample-field", &["x", "y", "z", "z_smoothed"])?;
    for (i, (a, b)) in z.values.iter().zip(&zs.values).enumerate() {
        let c = grid.node_coords(i);
        out.row([fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(*a), fmt_f64(*b)])?;
    }
    out.finish()
}

/// Per-level statistics of the plain and the smoothed hierarchy, with rate fits.
#[derive(Debug, Clone)]
pub struct RatesResult {
    pub plain: Vec<LevelStats>,
    pub smoothed: Vec<LevelStats>,
    pub fit_plain: Option<RateFit>,
    pub fit_smoothed: Option<RateFit>,
    /// `gamma` fitted to wall-clock cost, plain hierarchy.
    pub gamma_seconds: Option<f64>,
    pub paths: Vec<PathBuf>,
}

fn fit_levels(levels: &[LevelStats], seconds: bool) -> Option<RateFit> {
    let data: Vec<LevelRateData> = levels
        .iter()
        .filter(|l| l.ell > 0)
        .map(|l| LevelRateData {
            h: l.h(),
            mean_abs_y: l.y.mean().abs(),
            var_y: l.y.variance(),
            cost: if seconds { l.cost_seconds() } else { l.cost_work() },
        })
        .collect();
    match fit_rates(&data) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("rate fit failed: {e}");
            None
        }
    }
}

/// Rule for the smoothed hierarchy in `rates`: the configured one, or half
/// the spectrum when smoothing is off.
fn rates_rule(cfg: &ExperimentConfig) -> SmoothingRule {
    match cfg.smoothing_rule() {
        SmoothingRule::Off => SmoothingRule::HalfSpectrum,
        r => r,
    }
}

pub fn run_rates(cfg: &ExperimentConfig) -> Result<RatesResult> {
    let study = Study::new(cfg.problem()?);
    let m0 = cfg.m0()?;
    let rule = rates_rule(cfg);
    let mut plain_plans = Vec::new();
    let mut smooth_plans = Vec::new();
    for ell in 0..=cfg.max_level {
        let plan = study.level_plan(m0, ell)?;
        let k = if ell > 0 {
            k_for_rule(&study.spec().model, &plan, rule, cfg.alpha, cfg.s_convention)
        } else {
            0
        };
        smooth_plans.push((plan.clone().with_truncation(k)?, if k > 0 { Coupling::FINEST } else { Coupling::PLAIN }));
        plain_plans.push((plan, Coupling::PLAIN));
    }
    let plain = sample_fixed(&study, &plain_plans, cfg.rate_samples, cfg.seed)?;
    let smoothed = sample_fixed(&study, &smooth_plans, cfg.rate_samples, cfg.seed)?;
    Ok(RatesResult {
        fit_plain: fit_levels(&plain, false),
        fit_smoothed: fit_levels(&smoothed, false),
        gamma_seconds: fit_levels(&plain, true).map(|f| f.gamma),
        plain,
        smoothed,
        paths: Vec::new(),
    })
}

/// Writes `rates.csv` (one row per hierarchy and level) and `rates_fit.csv`.
pub fn cmd_rates(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RatesResult> {
    let mut res = run_rates(cfg)?;
    let header = columns(
        &["smoothing", "level", "m", "h", "k", "n", "mean_y", "abs_mean_y", "var_y", "mean_q", "var_q", "cost_work"],
        &["cost_seconds"],
        opts.timing,
    );
    let mut out = CsvOut::create(cfg, opts, "rates.csv", "rates", &header)?;
    for (label, levels) in [("off", &res.plain), ("on", &res.smoothed)] {
        for l in levels {
            let mut row = vec![
                label.to_string(),
                l.ell.to_string(),
                l.m.to_string(),
                fmt_f64(l.h()),
                l.k_trunc.to_string(),
                l.n().to_string(),
                fmt_f64(l.y.mean()),
                fmt_f64(l.y.mean().abs()),
                fmt_f64(l.y.variance()),
                fmt_f64(l.q.mean()),
                fmt_f64(l.q.variance()),
                fmt_f64(l.cost_work()),
            ];
            if opts.timing {
                row.push(fmt_f64(l.cost_seconds()));
            }
            out.row(row)?;
        }
    }
    res.paths.push(out.finish()?);

    let header = ["smoothing", "cost", "alpha", "beta", "gamma", "c_alpha", "c_beta", "c_gamma"];
    let mut out = CsvOut::create(cfg, opts, "rates_fit.csv", "rates", &header)?;
    let mut fits = vec![("off", "work", fit_levels(&res.plain, false)), ("on", "work", fit_levels(&res.smoothed, false))];
    if opts.timing {
        fits.push(("off", "seconds", fit_levels(&res.plain, true)));
        fits.push(("on", "seconds", fit_levels(&res.smoothed, true)));
    }
    for (label, cost, fit) in fits {
        let v = fit.map_or([f64::NAN; 6], |f| [f.alpha, f.beta, f.gamma, f.c_alpha, f.c_beta, f.c_gamma]);
        out.row([label.to_string(), cost.to_string()].into_iter().chain(v.iter().map(|x| fmt_f64(*x))))?;
    }
    res.paths.push(out.finish()?);
    Ok(res)
}

/// Outcome of one tolerance in `estimate`.
#[derive(Debug)]
pub struct EstimateRun {
    pub eps: f64,
    pub report: Result<MlmcReport>,
    /// `sqrt(bias^2 + sampling_error^2) / |reference|`, the reference being
    /// the estimate at the tightest successful tolerance.
    pub relative_rmse: f64,
}

pub fn run_estimate(cfg: &ExperimentConfig) -> Result<Vec<EstimateRun>> {
    let study = Study::new(cfg.problem()?);
    let mut runs = Vec::new();
    for &eps in &cfg.eps_list {
        let report = match cfg.estimator {
            EstimatorKind::Mc => mc_estimate(&study, &cfg.mc_options(eps)?, cfg.seed),
            _ => mlmc_estimate(&study, &cfg.mlmc_options()?, eps, cfg.seed),
        };
        match &report {
            Ok(r) => log::info!(
                "eps = {eps:e}: estimate {:.6} with {} levels, work {:e}",
                r.estimate,
                r.levels.len(),
                r.total_work
            ),
            Err(e) => log::error!("eps = {eps:e} failed: {e}"),
        }
        runs.push(EstimateRun {
            eps,
            report,
            relative_rmse: f64::NAN,
        });
    }
    let reference = runs.iter().rev().find_map(|r| r.report.as_ref().ok()).map(|r| r.estimate);
    if let Some(q) = reference {
        for run in &mut runs {
            if let Ok(r) = &run.report {
                run.relative_rmse = r.bias_estimate.hypot(r.sampling_error) / q.abs();
            }
        }
    }
    Ok(runs)
}

fn kind_label(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Mc => "mc",
        EstimatorKind::Mlmc => "mlmc",
        EstimatorKind::MlmcCes => "mlmc_ces",
    }
}

/// Writes `estimate.csv`: one `level` row per level and one `summary` row per
/// tolerance. A failed tolerance gets a summary row carrying the error.
pub fn cmd_estimate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Vec<EstimateRun>, PathBuf)> {
    let runs = run_estimate(cfg)?;
    let header = columns(
        &[
            "row", "eps", "estimator", "level", "m", "k", "n", "n_optimal", "mean_y", "var_y", "cost_work", "estimate",
            "bias", "sampling_error", "total_work", "extra_work", "relative_rmse", "converged", "status",
        ],
        &["cost_seconds", "total_seconds"],
        opts.timing,
    );
    let mut out = CsvOut::create(cfg, opts, "estimate.csv", "estimate", &header)?;
    let label = kind_label(cfg.estimator);
    let blank = || String::new();
    for run in &runs {
        match &run.report {
            Ok(r) => {
                for l in &r.levels {
                    let mut row = vec![
                        "level".to_string(),
                        fmt_f64(run.eps),
                        label.to_string(),
                        l.ell.to_string(),
                        l.m.to_string(),
                        l.k_trunc.to_string(),
                        l.n().to_string(),
                        fmt_f64(l.n_optimal),
                        fmt_f64(l.y.mean()),
                        fmt_f64(l.y.variance()),
                        fmt_f64(l.cost_work()),
                    ];
                    row.extend(std::iter::repeat_with(blank).take(8));
                    if opts.timing {
                        row.push(fmt_f64(l.cost_seconds()));
                        row.push(blank());
                    }
                    out.row(row)?;
                }
                let status = match r.check() {
                    Ok(()) => "ok".to_string(),
                    Err(e) => e.to_string(),
                };
                let mut row = vec!["summary".to_string(), fmt_f64(run.eps), label.to_string()];
                row.extend(std::iter::repeat_with(blank).take(8));
                row.extend([
                    fmt_f64(r.estimate),
                    fmt_f64(r.bias_estimate),
                    fmt_f64(r.sampling_error),
                    fmt_f64(r.total_work),
                    fmt_f64(r.extra_work),
                    fmt_f64(run.relative_rmse),
                    r.converged.to_string(),
                    status,
                ]);
                if opts.timing {
                    row.push(blank());
                    row.push(fmt_f64(r.total_seconds));
                }
                out.row(row)?;
            }
            Err(e) => {
                let mut row = vec!["summary".to_string(), fmt_f64(run.eps), label.to_string()];
                row.extend(std::iter::repeat_with(blank).take(14));
                row.extend(["false".to_string(), format!("error: {e}")]);
                if opts.timing {
                    row.extend([blank(), blank()]);
                }
                out.row(row)?;
            }
        }
    }
    Ok((runs, out.finish()?))
}

/// Paired full versus truncated QoI on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingErrorRow {
    pub level: usize,
    pub m: usize,
    pub s: usize,
    /// Divisor `a` with `k = s / a`.
    pub divisor: f64,
    pub k: usize,
    /// `Q - Q~` over the samples.
    pub diff: RunningStats,
    pub abs_diff: RunningStats,
}

impl SmoothingErrorRow {
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }
}

pub fn run_smoothing_error(cfg: &ExperimentConfig) -> Result<Vec<SmoothingErrorRow>> {
    let study = Study::new(cfg.problem()?);
    let m0 = cfg.m0()?;
    let mut rows = Vec::new();
    for ell in 0..=cfg.max_level {
        let plan = study.level_plan(m0, ell)?.fine_only();
        let s = plan.op.size();
        let full = run_samples(study.spec(), &plan, Coupling::PLAIN, cfg.seed, ell as u32, 0..cfg.smoothing_samples)?;
        for &a in &cfg.k_divisors {
            let k = if a.is_finite() { (s as f64 / a).floor() as usize } else { 0 };
            let kplan = plan.clone().with_truncation(k)?;
            let smooth = run_samples(study.spec(), &kplan, Coupling::SMOOTHED, cfg.seed, ell as u32, 0..cfg.smoothing_samples)?;
            let mut diff = RunningStats::default();
            let mut abs_diff = RunningStats::default();
            for (f, g) in full.iter().zip(&smooth) {
                diff.push(f.q_fine - g.q_fine);
                abs_diff.push((f.q_fine - g.q_fine).abs());
            }
            rows.push(SmoothingErrorRow {
                level: ell,
                m: plan.grid.m()[0],
                s,
                divisor: a,
                k,
                diff,
                abs_diff,
            });
        }
    }
    Ok(rows)
}

/// Writes `smoothing_error.csv`, one row per grid and divisor.
pub fn cmd_smoothing_error(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Vec<SmoothingErrorRow>, PathBuf)> {
    let rows = run_smoothing_error(cfg)?;
    let header = ["level", "m", "h", "s", "a", "k", "n", "mean_abs_diff", "mean_diff", "var_diff"];
    let mut out = CsvOut::create(cfg, opts, "smoothing_error.csv", "smoothing-error", &header)?;
    for r in &rows {
        out.row([
            r.level.to_string(),
            r.m.to_string(),
            fmt_f64(r.h()),
            r.s.to_string(),
            fmt_f64(r.divisor),
            r.k.to_string(),
            r.diff.count().to_string(),
            fmt_f64(r.abs_diff.mean()),
            fmt_f64(r.diff.mean()),
            fmt_f64(r.diff.variance()),
        ])?;
    }
    Ok((rows, out.finish()?))
}

/// Reads a CSV written by this module, skipping the leading comment line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
