//! Specimen phase maps from atomic coordinates, their spectra, and the
//! noisy-image pipeline.

use std::fmt::Write as _;

use crate::error::{domain, Error, Result};
use crate::fft::{centered, Fft2, C64};

mod atoms;
mod noise;
mod spectrum;

pub use atoms::*;
pub use noise::*;
pub use spectrum::*;

/// Image geometry: `rows × cols` square pixels of side `pixel_nm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub pixel_nm: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, pixel_nm: f64) -> Result<Self> {
        if rows < 2 || cols < 2 || !rows.is_multiple_of(2) || !cols.is_multiple_of(2) {
            return Err(domain("image dimensions must be even and at least 2"));
        }
        if !(pixel_nm > 0.0) || !pixel_nm.is_finite() {
            return Err(domain("pixel size must be positive"));
        }
        Ok(Self { rows, cols, pixel_nm })
    }

    /// 240 × 240 pixels of 0.05 nm.
    pub fn standard() -> Self {
        Self { rows: 240, cols: 240, pixel_nm: 0.05 }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area_nm2(&self) -> f64 {
        self.rows as f64 * self.cols as f64 * self.pixel_nm * self.pixel_nm
    }

    /// Physical coordinate of pixel centre `i` along an axis of `n` pixels.
    pub fn coord(&self, i: usize, n: usize) -> f64 {
        (i as f64 - (n / 2) as f64) * self.pixel_nm
    }

    /// (q_y, q_x) in rad/nm of FFT bin (r, c) stored in wrapped order.
    pub fn bin_q(&self, r: usize, c: usize) -> (f64, f64) {
        let two_pi = 2.0 * std::f64::consts::PI;
        (
            two_pi * centered(r, self.rows) as f64 / (self.rows as f64 * self.pixel_nm),
            two_pi * centered(c, self.cols) as f64 / (self.cols as f64 * self.pixel_nm),
        )
    }

    /// Scattering angle β = λq/2π of every FFT bin, wrapped order.
    pub fn beta_grid(&self, wavelength_nm: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (qy, qx) = self.bin_q(r, c);
                out.push(wavelength_nm * qy.hypot(qx) / (2.0 * std::f64::consts::PI));
            }
        }
        out
    }
}

/// Real image in natural order: row `i` is y = (i − rows/2)·l, column `j` is
/// x = (j − cols/2)·l.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl PixelImage {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn from_data(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Input(format!("image data has {} values, grid needs {}", data.len(), grid.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("image data must be finite".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.grid.cols + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let mu = self.mean();
        (self.data.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn subtract_mean(&mut self) {
        let mu = self.mean();
        self.data.iter_mut().for_each(|v| *v -= mu);
    }

    /// Σθ·l², the integrated phase in nm².
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.pixel_nm * self.grid.pixel_nm
    }

    pub fn add(&self, other: &PixelImage) -> Result<PixelImage> {
        if self.grid != other.grid {
            return Err(domain("images have different grids"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(PixelImage { grid: self.grid, data })
    }

    /// Centered `rows × cols` window.
    pub fn crop_center(&self, rows: usize, cols: usize) -> Result<PixelImage> {
        let g = self.grid;
        if rows == 0 || cols == 0 || rows > g.rows || cols > g.cols {
            return Err(domain("crop window must fit inside the image"));
        }
        let r0 = (g.rows - rows) / 2;
        let c0 = (g.cols - cols) / 2;
        let mut data = Vec::with_capacity(rows * cols);
        for r in r0..r0 + rows {
            data.extend_from_slice(&self.data[r * g.cols + c0..r * g.cols + c0 + cols]);
        }
        // cropped grids may be odd; skip GridSpec::new validation on purpose
        Ok(PixelImage { grid: GridSpec { rows, cols, pixel_nm: g.pixel_nm }, data })
    }

    /// Forward 2-D DFT (e^{−ik·r}), wrapped frequency order.
    pub fn spectrum(&self) -> Vec<C64> {
        let mut buf: Vec<C64> = self.data.iter().map(|&v| C64::new(v, 0.0)).collect();
        Fft2::new(self.grid.rows, self.grid.cols).forward(&mut buf);
        buf
    }

    /// Multiply the spectrum by `gain` (wrapped order) and return the real part.
    pub fn filtered(&self, gain: &[f64]) -> Result<PixelImage> {
        if gain.len() != self.grid.len() {
            return Err(domain("filter size does not match the image"));
        }
        let mut buf = self.spectrum();
        for (b, g) in buf.iter_mut().zip(gain) {
            *b *= *g;
        }
        Fft2::new(self.grid.rows, self.grid.cols).inverse(&mut buf);
        let inv = 1.0 / self.grid.len() as f64;
        Ok(PixelImage { grid: self.grid, data: buf.iter().map(|z| z.re * inv).collect() })
    }

    /// One row per image row, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.data.chunks(self.grid.cols) {
            let line: Vec<String> = row.iter().map(|&v| crate::fmt9(v)).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn from_csv(text: &str, pixel_nm: f64) -> Result<PixelImage> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Input(format!("line {}: {e}", ln + 1)))?;
            match cols {
                None => cols = Some(vals.len()),
                Some(c) if c != vals.len() => {
                    return Err(Error::Input(format!("line {}: ragged row", ln + 1)));
                }
                _ => {}
            }
            data.extend(vals);
            rows += 1;
        }
        let grid = GridSpec::new(rows, cols.unwrap_or(0), pixel_nm)?;
        PixelImage::from_data(grid, data)
    }

    /// Binary PGM (P5, maxval 255) mapping [lo, hi] linearly onto 0..=255.
    pub fn to_pgm(&self, lo: f64, hi: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.grid.cols, self.grid.rows).into_bytes();
        let span = if hi > lo { hi - lo } else { 1.0 };
        out.extend(self.data.iter().map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}
