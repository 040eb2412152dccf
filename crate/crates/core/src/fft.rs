//! Multi-dimensional transforms on row-major arrays, built on `rustfft`.
//!
//! Lines along one axis are processed block by block: a block is the
//! contiguous slab spanned by the axis and all faster axes, so blocks are
//! independent and can be transformed in parallel with bit-identical output.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Complex FFT over all axes of a row-major array.
pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self { shape: shape.to_vec(), forward, inverse }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.along_axis(data, axis, &self.forward[axis]);
        }
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.along_axis(data, axis, &self.inverse[axis]);
        }
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn along_axis(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let block = n * stride;
        if stride == 1 {
            data.par_chunks_mut(block).for_each(|line| plan.process(line));
            return;
        }
        data.par_chunks_mut(block).for_each(|slab| {
            let mut lines = vec![Complex64::default(); block];
            for k in 0..n {
                for l in 0..stride {
                    lines[l * n + k] = slab[k * stride + l];
                }
            }
            plan.process(&mut lines);
            for k in 0..n {
                for l in 0..stride {
                    slab[k * stride + l] = lines[l * n + k];
                }
            }
        });
    }
}

/// DST-I along all axes: `X_k = sum_{j=1}^{m} v_j sin(pi j k / (m + 1))`,
/// for interior sizes `m` per axis. Applying it twice multiplies by
/// `prod (m + 1) / 2`.
pub struct DstNd {
    shape: Vec<usize>,
    plans: Vec<Arc<dyn Fft<f64>>>,
}

impl DstNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let plans = shape.iter().map(|&m| planner.plan_fft_forward(2 * (m + 1))).collect();
        Self { shape: shape.to_vec(), plans }
    }

    pub fn apply(&self, data: &mut [f64]) {
        for axis in 0..self.shape.len() {
            self.along_axis(data, axis);
        }
    }

    /// Inverse of [`DstNd::apply`].
    pub fn apply_inverse(&self, data: &mut [f64]) {
        self.apply(data);
        let scale: f64 = self.shape.iter().map(|&m| 2.0 / (m + 1) as f64).product();
        data.par_iter_mut().for_each(|v| *v *= scale);
    }

    fn along_axis(&self, data: &mut [f64], axis: usize) {
        let m = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let block = m * stride;
        let plan = &self.plans[axis];
        let ext = 2 * (m + 1);
        data.par_chunks_mut(block).for_each(|slab| {
            let mut buf = vec![Complex64::default(); ext];
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            for l in 0..stride {
                buf.iter_mut().for_each(|b| *b = Complex64::default());
                for j in 0..m {
                    let v = slab[j * stride + l];
                    buf[j + 1] = Complex64::new(v, 0.0);
                    buf[ext - j - 1] = Complex64::new(-v, 0.0);
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..m {
                    slab[k * stride + l] = -0.5 * buf[k + 1].im;
                }
            }
        });
    }
}

/// Signed integer frequency of FFT bin `i` out of `n`.
pub fn signed_bin(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
