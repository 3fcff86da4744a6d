//! Circulant embedding of the grid covariance matrix and exact or smoothed
//! field sampling.
//!
//! The covariance of a stationary field on an equispaced tensor grid is
//! (block) Toeplitz. Mirroring each axis, optionally after padding it with
//! `J_i` extra layers evaluated from the smooth periodic extension of the
//! kernel, gives a (block) circulant matrix `S` of size
//! `s = prod_i 2 (m_i + J_i)` that is diagonalised by the d-dimensional DFT.
//! With the unitary DFT `F`, `S = G diag(lambda) G^T` where `G = Re F + Im F`,
//! so `u = G diag(sqrt(lambda)) xi` has covariance `S` and its leading
//! `(m_1 + 1) x ... x (m_d + 1)` block is a sample of the field on the grid.
//!
//! Smoothing zeroes the `k` smallest eigenvalues before sampling.

mod dump;
mod fft;

pub use dump::SpectrumDump;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::covariance::{periodic_eval, CovarianceModel, PeriodisationParams};
use crate::error::{Error, Result};
use crate::rng::rng_stream;
use fft::NdFft;

/// Largest embedding size accepted, in entries.
pub const MAX_EMBEDDING_SIZE: usize = 1 << 30;

/// Uniform tensor grid on `[0, 1]^d` with `m_i + 1` nodes along axis `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridSpec {
    m: Vec<usize>,
}

impl GridSpec {
    pub fn new(m: &[usize]) -> Result<Self> {
        if m.is_empty() || m.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "grid dimension must be 1 or 2, got {}",
                m.len()
            )));
        }
        if m.iter().any(|&v| v == 0) {
            return Err(Error::InvalidParameter(format!("grid resolutions must be >= 1, got {m:?}")));
        }
        Ok(Self { m: m.to_vec() })
    }

    /// `d`-dimensional grid with resolution `m` along every axis.
    pub fn square(d: usize, m: usize) -> Result<Self> {
        Self::new(&vec![m; d])
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[usize] {
        &self.m
    }

    /// Mesh width along the first axis.
    pub fn h(&self) -> f64 {
        1.0 / self.m[0] as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.m.iter().map(|m| m + 1).product()
    }

    /// Coordinates of node `index` in lexicographic order (first axis fastest).
    pub fn node_coords(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        self.m
            .iter()
            .map(|&m| {
                let k = rem % (m + 1);
                rem /= m + 1;
                k as f64 / m as f64
            })
            .collect()
    }

    /// True when every node of `self` is also a node of `fine`.
    pub fn is_nested_in(&self, fine: &GridSpec) -> bool {
        self.dim() == fine.dim() && self.m.iter().zip(&fine.m).all(|(c, f)| f % c == 0)
    }

    /// The grid refined by `factor` along every axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            m: self.m.iter().map(|m| m * factor).collect(),
        }
    }
}

/// Field values at the nodes of a grid, lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl FieldSample {
    /// A constant field.
    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; grid.num_nodes()],
            grid: grid.clone(),
        }
    }

    /// Maximum absolute difference to another field on the same grid.
    pub fn sup_distance(&self, other: &FieldSample) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Sizes `2 (m_i + J_i)` of the embedding along each axis.
pub fn embedding_dims(grid: &GridSpec, padding: &[usize]) -> Result<Vec<usize>> {
    if padding.len() != grid.dim() {
        return Err(Error::Argument(format!(
            "padding has {} entries for a {}-dimensional grid",
            padding.len(),
            grid.dim()
        )));
    }
    let dims: Vec<usize> = grid
        .m()
        .iter()
        .zip(padding)
        .map(|(&m, &j)| m.checked_add(j).and_then(|v| v.checked_mul(2)))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Config("embedding size overflows".into()))?;
    let s = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .filter(|&s| s <= MAX_EMBEDDING_SIZE)
        .ok_or_else(|| Error::Config(format!("embedding of dims {dims:?} exceeds {MAX_EMBEDDING_SIZE} entries")))?;
    debug_assert!(s > 0);
    Ok(dims)
}

/// First row of the (padded) embedding matrix `S`.
///
/// Entry `q` holds the covariance at the wrapped displacement
/// `(min(q_i, n_i - q_i) / m_i)_i`. Without padding the kernel itself is used;
/// with padding, its smooth `2 ell`-periodic extension with `ell = 1 + J/m`.
pub fn build_first_row(grid: &GridSpec, model: &CovarianceModel, padding: &[usize]) -> Result<Vec<f64>> {
    let dims = embedding_dims(grid, padding)?;
    let periodisation = if padding.iter().all(|&j| j == 0) {
        None
    } else {
        let (j0, m0) = (padding[0], grid.m()[0]);
        if grid.m().iter().zip(padding).any(|(&m, &j)| j * m0 != j0 * m) {
            return Err(Error::Config(format!(
                "padding {padding:?} must keep J_i / m_i equal across axes (grid {:?})",
                grid.m()
            )));
        }
        Some(PeriodisationParams::from_padding(j0, m0)?)
    };
    let s: usize = dims.iter().product();
    let d = grid.dim();
    let mut row = Vec::with_capacity(s);
    let mut disp = vec![0.0; d];
    for q in 0..s {
        let mut rem = q;
        for i in 0..d {
            let n = dims[i];
            let qi = rem % n;
            rem /= n;
            disp[i] = qi.min(n - qi) as f64 / grid.m()[i] as f64;
        }
        let v = match &periodisation {
            None => model.eval_unchecked(&disp),
            Some(p) => periodic_eval(model, p, &disp),
        };
        row.push(v);
    }
    Ok(row)
}

/// Eigenvalues `sqrt(s) F row` of the circulant matrix with first row `row`.
///
/// Fails if the transform has a non-negligible imaginary part, which means
/// the row was not symmetric.
pub fn spectrum(row: &[f64], dims: &[usize]) -> Result<Vec<f64>> {
    let s: usize = dims.iter().product();
    if row.len() != s || s == 0 {
        return Err(Error::Argument(format!(
            "row of length {} does not match dims {dims:?}",
            row.len()
        )));
    }
    let plan = NdFft::new(dims);
    let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut scratch = Vec::new();
    plan.process(&mut buf, &mut scratch);
    let max_imag = buf.iter().fold(0.0_f64, |acc, c| acc.max(c.im.abs()));
    let scale = row[0].abs().max(f64::MIN_POSITIVE);
    if max_imag > 1e-8 * scale {
        return Err(Error::Consistency(format!(
            "spectrum has imaginary part {max_imag:e}; embedding row is not symmetric"
        )));
    }
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Padding candidates tried, as multiples of `m_i`, when the unpadded
/// embedding is not positive definite. The last entry is the ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddingSchedule {
    pub factors: Vec<f64>,
}

impl Default for PaddingSchedule {
    fn default() -> Self {
        Self {
            factors: vec![0.5, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

/// Factorised circulant embedding `S = G diag(lambda) G^T` of a grid covariance.
#[derive(Debug, Clone)]
pub struct EmbeddingOperator {
    grid: GridSpec,
    padding: Vec<usize>,
    dims: Vec<usize>,
    sigma2: f64,
    // Clamped, untruncated spectrum; shared between truncated copies.
    full: Arc<[f64]>,
    perm: Arc<[usize]>,
    sqrt_retained: Arc<[f64]>,
    truncation_k: usize,
    fft: NdFft,
}

/// Worker-local FFT buffers for [`EmbeddingOperator::sample_with`].
#[derive(Debug, Default)]
pub struct SampleWorkspace {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl EmbeddingOperator {
    /// Builds the operator, padding adaptively with the default schedule.
    pub fn build(grid: &GridSpec, model: &CovarianceModel) -> Result<Self> {
        Self::build_with_schedule(grid, model, &PaddingSchedule::default())
    }

    pub fn build_with_schedule(grid: &GridSpec, model: &CovarianceModel, schedule: &PaddingSchedule) -> Result<Self> {
        let zero = vec![0; grid.dim()];
        let mut tried = Vec::new();
        let mut worst = f64::INFINITY;
        // One periodisation serves all axes, so J_i / m_i must agree: with
        // g = gcd(m_i), take J_i = t m_i / g for the smallest t >= f g.
        let g = grid.m().iter().fold(0, |a, &b| gcd(a, b));
        let candidates = std::iter::once(zero).chain(schedule.factors.iter().map(|&f| {
            let t = (f * g as f64).ceil() as usize;
            grid.m().iter().map(|&m| t * (m / g)).collect::<Vec<_>>()
        }));
        for padding in candidates {
            let row = build_first_row(grid, model, &padding)?;
            let dims = embedding_dims(grid, &padding)?;
            let eigs = spectrum(&row, &dims)?;
            match Self::from_spectrum(grid.clone(), padding.clone(), eigs, model.sigma2()) {
                Ok(op) => {
                    if !tried.is_empty() {
                        log::debug!("embedding for grid {:?} needed padding {:?}", grid.m(), op.padding);
                    }
                    return Ok(op);
                }
                Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => {
                    worst = min_eigenvalue;
                    tried.push(padding);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::NotPositiveDefinite {
            min_eigenvalue: worst,
            padding_tried: tried,
        })
    }

    /// Builds the operator with a fixed padding; fails if it is not positive definite.
    pub fn with_padding(grid: &GridSpec, model: &CovarianceModel, padding: &[usize]) -> Result<Self> {
        let row = build_first_row(grid, model, padding)?;
        let dims = embedding_dims(grid, padding)?;
        let eigs = spectrum(&row, &dims)?;
        Self::from_spectrum(grid.clone(), padding.to_vec(), eigs, model.sigma2())
            .map_err(|e| match e {
                Error::NotPositiveDefinite { min_eigenvalue, .. } => Error::NotPositiveDefinite {
                    min_eigenvalue,
                    padding_tried: vec![padding.to_vec()],
                },
                e => e,
            })
    }

    /// Wraps a precomputed spectrum, certifying it as positive semi-definite
    /// to tolerance `1e-12 s sigma2` and clamping tiny negatives to zero.
    pub fn from_spectrum(grid: GridSpec, padding: Vec<usize>, mut eigs: Vec<f64>, sigma2: f64) -> Result<Self> {
        let dims = embedding_dims(&grid, &padding)?;
        let s: usize = dims.iter().product();
        if eigs.len() != s {
            return Err(Error::Argument(format!("spectrum has {} entries, expected {s}", eigs.len())));
        }
        let tol = spd_tolerance(s, sigma2);
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min >= -tol) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
                padding_tried: vec![padding],
            });
        }
        for v in eigs.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut perm: Vec<usize> = (0..s).collect();
        // Stable: ties keep index order.
        perm.sort_by(|&a, &b| eigs[b].total_cmp(&eigs[a]));
        let sqrt_retained: Arc<[f64]> = eigs.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            fft: NdFft::new(&dims),
            grid,
            padding,
            dims,
            sigma2,
            full: eigs.into(),
            perm: perm.into(),
            sqrt_retained,
            truncation_k: 0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn padding(&self) -> &[usize] {
        &self.padding
    }

    /// Embedding sizes `2 (m_i + J_i)` per axis.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total embedding size `s`.
    pub fn size(&self) -> usize {
        self.full.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Untruncated spectrum (after clamping).
    pub fn full_spectrum(&self) -> &[f64] {
        &self.full
    }

    /// Spectrum actually used for sampling: the full one with the
    /// `truncation_k` smallest entries set to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v = self.full.to_vec();
        for &j in &self.perm[self.size() - self.truncation_k..] {
            v[j] = 0.0;
        }
        v
    }

    /// Indices of the spectrum in non-increasing eigenvalue order.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn truncation_k(&self) -> usize {
        self.truncation_k
    }

    /// Eigenvalues in non-increasing order.
    pub fn sorted_spectrum(&self) -> Vec<f64> {
        self.perm.iter().map(|&j| self.full[j]).collect()
    }

    /// Approximate flop count of drawing one sample.
    pub fn sample_work(&self) -> f64 {
        self.fft.work() + 4.0 * self.size() as f64
    }

    /// Copy of the operator with the `k` smallest eigenvalues zeroed.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        let s = self.size();
        if k >= s {
            return Err(Error::Argument(format!("cannot drop {k} of {s} eigenvalues")));
        }
        let mut sqrt_retained: Vec<f64> = self.full.iter().map(|v| v.sqrt()).collect();
        for &j in &self.perm[s - k..] {
            sqrt_retained[j] = 0.0;
        }
        Ok(Self {
            sqrt_retained: sqrt_retained.into(),
            truncation_k: k,
            ..self.clone()
        })
    }

    /// Embedding-domain sample `u = Re(v) + Im(v)`, `v = F (sqrt(lambda) * xi)`.
    pub fn sample(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.sample_with(xi, &mut SampleWorkspace::default())
    }

    pub fn sample_with(&self, xi: &[f64], ws: &mut SampleWorkspace) -> Result<Vec<f64>> {
        let s = self.size();
        if xi.len() != s {
            return Err(Error::Argument(format!("xi has length {}, expected {s}", xi.len())));
        }
        ws.buf.clear();
        ws.buf
            .extend(xi.iter().zip(self.sqrt_retained.iter()).map(|(x, l)| Complex64::new(x * l, 0.0)));
        self.fft.process(&mut ws.buf, &mut ws.scratch);
        let scale = 1.0 / (s as f64).sqrt();
        Ok(ws.buf.iter().map(|c| (c.re + c.im) * scale).collect())
    }

    /// Extracts the field on `target` from an embedding-domain sample.
    ///
    /// `target` must be nested in the operator grid; a coarser target takes
    /// every `m_i / t_i`-th node of the leading block.
    pub fn restrict(&self, u: &[f64], target: &GridSpec) -> Result<FieldSample> {
        if u.len() != self.size() {
            return Err(Error::Argument(format!(
                "sample has length {}, expected {}",
                u.len(),
                self.size()
            )));
        }
        if !target.is_nested_in(&self.grid) {
            return Err(Error::Argument(format!(
                "grid {:?} is not nested in {:?}",
                target.m(),
                self.grid.m()
            )));
        }
        let strides: Vec<usize> = self.grid.m().iter().zip(target.m()).map(|(f, c)| f / c).collect();
        let values = match target.dim() {
            1 => (0..=target.m()[0]).map(|k| u[k * strides[0]]).collect(),
            _ => {
                let n1 = self.dims[0];
                let mut v = Vec::with_capacity(target.num_nodes());
                for k2 in 0..=target.m()[1] {
                    let base = k2 * strides[1] * n1;
                    v.extend((0..=target.m()[0]).map(|k1| u[base + k1 * strides[0]]));
                }
                v
            }
        };
        Ok(FieldSample {
            grid: target.clone(),
            values,
        })
    }

    /// Convenience: sample and restrict to the operator grid.
    pub fn sample_field(&self, xi: &[f64]) -> Result<FieldSample> {
        let u = self.sample(xi)?;
        self.restrict(&u, &self.grid)
    }

    /// Monte Carlo estimate of `E ||Z - Z~||_inf` (mean, unbiased variance)
    /// between the full and the `k`-truncated sample on the same `xi`.
    pub fn smoothing_error_estimate(&self, k: usize, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
        if n_samples < 2 {
            return Err(Error::Argument("need at least two samples".into()));
        }
        let full = self.truncate(0)?;
        let smooth = self.truncate(k)?;
        let s = self.size();
        let errs = (0..n_samples as u64)
            .into_par_iter()
            .map_init(SampleWorkspace::default, |ws, i| {
                let xi = rng_stream(seed, 0, i).take(s);
                let z = full.restrict(&full.sample_with(&xi, ws)?, &self.grid)?;
                let zs = smooth.restrict(&smooth.sample_with(&xi, ws)?, &self.grid)?;
                Ok(z.sup_distance(&zs))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut acc = crate::stats::RunningStats::default();
        errs.iter().for_each(|&e| acc.push(e));
        Ok((acc.mean(), acc.variance()))
    }
}

/// Eigenvalues down to `-1e-12 s sigma2` are treated as rounding noise.
pub fn spd_tolerance(s: usize, sigma2: f64) -> f64 {
    1e-12 * s as f64 * sigma2
}


fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
