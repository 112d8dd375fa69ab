//! Four-dimensional complex FFT over row-major arrays (axis 3 fastest).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft4 {
    dims: [usize; 4],
    fwd: [Arc<dyn Fft<f64>>; 4],
    inv: [Arc<dyn Fft<f64>>; 4],
}

impl Fft4 {
    pub(crate) fn new(dims: [usize; 4]) -> Self {
        let mut planner = FftPlanner::new();
        Fft4 {
            dims,
            fwd: std::array::from_fn(|a| planner.plan_fft_forward(dims[a])),
            inv: std::array::from_fn(|a| planner.plan_fft_inverse(dims[a])),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.dims.iter().product()
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 4]) {
        assert_eq!(data.len(), self.len());
        let n = self.dims;
        let strides = [n[1] * n[2] * n[3], n[2] * n[3], n[3], 1];
        // Contiguous last axis: rustfft processes consecutive lines in place.
        plans[3].process(data);
        let mut line = Vec::new();
        let mut scratch = Vec::new();
        for axis in 0..3 {
            let len = n[axis];
            let stride = strides[axis];
            let plan = &plans[axis];
            line.resize(len, Complex64::new(0.0, 0.0));
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            let outer = self.len() / (len * stride);
            for o in 0..outer {
                let base0 = o * len * stride;
                for inner in 0..stride {
                    let base = base0 + inner;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[base + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[base + k * stride] = *v;
                    }
                }
            }
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/V` normalization.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}
