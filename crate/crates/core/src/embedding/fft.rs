//! Separable d-dimensional DFT over a row-major buffer (first axis fastest).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Plans for the positive-exponent transform `sum_q x_q exp(+2 pi i p q / n)`
/// along each axis. No normalisation is applied.
#[derive(Clone)]
pub(crate) struct NdFft {
    dims: Vec<usize>,
    plans: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for NdFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdFft").field("dims", &self.dims).finish()
    }
}

impl NdFft {
    pub(crate) fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        // rustfft's inverse is the unnormalised exp(+2 pi i ...) transform.
        let plans = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self {
            dims: dims.to_vec(),
            plans,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.dims.iter().product()
    }

    /// In-place transform; `scratch` is resized as needed.
    pub(crate) fn process(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(data.len(), self.len());
        match self.dims.len() {
            1 => self.plans[0].process(data),
            2 => {
                let (n1, n2) = (self.dims[0], self.dims[1]);
                // Rows (contiguous along axis 0).
                self.plans[0].process(data);
                // Columns via transpose.
                scratch.resize(data.len(), Complex64::default());
                transpose(data, scratch, n1, n2);
                self.plans[1].process(scratch);
                transpose(scratch, data, n2, n1);
            }
            d => unreachable!("{d}-dimensional transforms are not supported"),
        }
    }

    /// Rough flop count of one transform, `5 s log2 s`.
    pub(crate) fn work(&self) -> f64 {
        let s = self.len() as f64;
        5.0 * s * s.log2().max(1.0)
    }
}

/// `src` holds `rows` rows of length `cols`; writes its transpose into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}
