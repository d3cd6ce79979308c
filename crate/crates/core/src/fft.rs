//! Separable 1-D/2-D FFT over row-major grid data.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

/// Immutable forward/inverse plans for every axis of one grid shape.
#[derive(Clone)]
pub(crate) struct GridFft {
    samples: [usize; 2],
    ndim: usize,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl fmt::Debug for GridFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFft")
            .field("samples", &&self.samples[..self.ndim])
            .finish()
    }
}

impl GridFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let samples = [grid.samples(0), grid.samples(1)];
        GridFft {
            samples,
            ndim: grid.ndim(),
            forward: [planner.plan_fft_forward(samples[0]), planner.plan_fft_forward(samples[1])],
            inverse: [planner.plan_fft_inverse(samples[0]), planner.plan_fft_inverse(samples[1])],
        }
    }

    /// Unnormalized transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        if self.ndim == 1 {
            plans[0].process(data);
            return;
        }
        let [n0, n1] = self.samples;
        // last axis is contiguous; rustfft handles the batch of rows
        plans[1].process(data);
        let mut t = transpose(data, n0, n1);
        plans[0].process(&mut t);
        data.copy_from_slice(&transpose(&t, n1, n0));
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Signed DFT frequency (cycles per unit length) of bin `k` on an axis of `n` cells.
pub(crate) fn frequency(k: usize, n: usize, spacing: f64) -> f64 {
    let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    signed / (n as f64 * spacing)
}
