//! Two-dimensional FFT helpers over row-major grids stored in FFT order
//! (centered index i ∈ [−n/2, n/2) lives at slot i mod n).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

pub fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

pub fn centered(j: usize, n: usize) -> i64 {
    let j = j as i64;
    let n = n as i64;
    if j >= n / 2 {
        j - n
    } else {
        j
    }
}

#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    /// Plan for a `rows × cols` grid (rows index the slow axis).
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: p.plan_fft_forward(cols),
            row_inv: p.plan_fft_inverse(cols),
            col_fwd: p.plan_fft_forward(rows),
            col_inv: p.plan_fft_inverse(rows),
        }
    }

    /// Unnormalized Σ x e^{−2πi(nr/rows + ms/cols)}.
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, false);
    }

    /// Unnormalized Σ x e^{+2πi(nr/rows + ms/cols)}.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [C64], inv: bool) {
        assert_eq!(data.len(), self.rows * self.cols);
        let (rf, cf) = if inv { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        rf.process(data);
        let mut t = transpose(data, self.rows, self.cols);
        cf.process(&mut t);
        let back = transpose(&t, self.cols, self.rows);
        data.copy_from_slice(&back);
    }
}

fn transpose(d: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); d.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = d[r * cols + c];
        }
    }
    out
}
