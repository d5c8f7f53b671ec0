use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::isn_analysis::{noise_spectrum, MuTable, NoiseKind};
use crate::physics::{BeamModel, DoseModel};
use crate::rng;

use super::{GridSpec, PixelImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseCase {
    Zero,
    Constant(f64),
    Classical,
    Qem { k1: f64 },
    QemIsn { k1: f64 },
}

/// Δθ(β) for each imaging method.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub beam: BeamModel,
    pub dose: DoseModel,
    mu: MuTable,
}

impl NoiseModel {
    /// μ(β) tabulated on `points` nodes up to `beta_max`.
    pub fn new(beam: BeamModel, dose: DoseModel, beta_max: f64, points: usize) -> Result<Self> {
        Ok(Self { beam, dose, mu: MuTable::build(beta_max, points, &beam)? })
    }

    /// Table covering every frequency of `grid`.
    pub fn for_grid(beam: BeamModel, dose: DoseModel, grid: GridSpec) -> Result<Self> {
        let bmax = grid.beta_grid(beam.wavelength_nm).into_iter().fold(0.0, f64::max);
        Self::new(beam, dose, 1.01 * bmax, 96)
    }

    pub fn amplitude(&self, case: NoiseCase, beta: f64) -> f64 {
        let kind = match case {
            NoiseCase::Zero => return 0.0,
            NoiseCase::Constant(c) => return c,
            NoiseCase::Classical => NoiseKind::Classical,
            NoiseCase::Qem { .. } => NoiseKind::Qem,
            NoiseCase::QemIsn { .. } => NoiseKind::QemIsn,
        };
        if beta <= 0.0 {
            return 0.0;
        }
        let k1 = match case {
            NoiseCase::Qem { k1 } | NoiseCase::QemIsn { k1 } => k1,
            _ => 1.0,
        };
        let plan = self.mu.plan_at(beta, k1, &self.beam, &self.dose);
        noise_spectrum(kind, beta, &plan, &self.beam, &self.dose)
    }

    /// Multiplier of every FFT bin (wrapped order).
    pub fn multipliers(&self, case: NoiseCase, grid: GridSpec) -> Vec<f64> {
        multiplier_grid(grid, self.beam.wavelength_nm, |b| self.amplitude(case, b))
    }
}

pub fn multiplier_grid<F: Fn(f64) -> f64>(grid: GridSpec, wavelength_nm: f64, f: F) -> Vec<f64> {
    grid.beta_grid(wavelength_nm).into_iter().map(f).collect()
}

/// Unit-variance Gaussian value per pixel.
pub fn white_field(grid: GridSpec, seed: u64) -> PixelImage {
    let mut r = rng::stream(seed, 0x6e6f697365);
    let data = (0..grid.len()).map(|_| StandardNormal.sample(&mut r)).collect();
    PixelImage { grid, data }
}

/// White field → FFT → ×Δθ(β) → inverse FFT → real part.
pub fn synthesize_noise(grid: GridSpec, multipliers: &[f64], seed: u64) -> Result<PixelImage> {
    white_field(grid, seed).filtered(multipliers)
}

/// e^{−β²/2β_H²}(1 − e^{−β²/2β_L²}).
pub fn bandpass_gain(beta: f64, beta_l: f64, beta_h: f64) -> f64 {
    let b2 = beta * beta;
    (-b2 / (2.0 * beta_h * beta_h)).exp() * -(-b2 / (2.0 * beta_l * beta_l)).exp_m1()
}

/// Location of the band-pass maximum.
pub fn bandpass_peak(beta_l: f64, beta_h: f64) -> f64 {
    let a = 0.5 / (beta_h * beta_h);
    let b = 0.5 / (beta_l * beta_l);
    ((1.0 + b / a).ln() / b).sqrt()
}

pub fn bandpass_grid(grid: GridSpec, wavelength_nm: f64, beta_l: f64, beta_h: f64) -> Vec<f64> {
    multiplier_grid(grid, wavelength_nm, |b| bandpass_gain(b, beta_l, beta_h))
}

pub fn bandpass(map: &PixelImage, wavelength_nm: f64, beta_l: f64, beta_h: f64) -> Result<PixelImage> {
    if !(beta_l > 0.0) || !(beta_h > 0.0) {
        return Err(domain("band-pass angles must be positive"));
    }
    map.filtered(&bandpass_grid(map.grid, wavelength_nm, beta_l, beta_h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure3Config {
    pub beta_l: f64,
    pub beta_h: f64,
    pub k1_high: f64,
    pub k1_low: f64,
    pub crop_rows: usize,
    pub crop_cols: usize,
    /// Grey levels span mean ± this many standard deviations.
    pub contrast_sigmas: f64,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Self {
            beta_l: 2e-3,
            beta_h: 3.5e-3,
            k1_high: 10.0,
            k1_low: 5.0,
            crop_rows: 80,
            crop_cols: 200,
            contrast_sigmas: 5.0,
        }
    }
}

impl Figure3Config {
    pub fn cases(&self) -> [(char, &'static str, NoiseCase); 6] {
        [
            ('a', "zero_noise", NoiseCase::Zero),
            ('b', "classical", NoiseCase::Classical),
            ('c', "qem_k1_high", NoiseCase::Qem { k1: self.k1_high }),
            ('d', "qem_isn_k1_high", NoiseCase::QemIsn { k1: self.k1_high }),
            ('e', "qem_k1_low", NoiseCase::Qem { k1: self.k1_low }),
            ('f', "qem_isn_k1_low", NoiseCase::QemIsn { k1: self.k1_low }),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure3Panel {
    pub label: char,
    pub name: &'static str,
    pub case: NoiseCase,
    /// Band-passed full image.
    pub image: PixelImage,
    pub lo: f64,
    pub hi: f64,
    pub cropped: PixelImage,
}

impl Figure3Panel {
    pub fn pgm(&self) -> Vec<u8> {
        self.cropped.to_pgm(self.lo, self.hi)
    }
}

/// Panels (a)–(f): bandpass(map + noise) with one shared white field.
pub fn render_figure3(
    map: &PixelImage,
    model: &NoiseModel,
    cfg: &Figure3Config,
    seed: u64,
) -> Result<Vec<Figure3Panel>> {
    let grid = map.grid;
    let white = white_field(grid, seed);
    if !(cfg.beta_l > 0.0) || !(cfg.beta_h > 0.0) {
        return Err(domain("band-pass angles must be positive"));
    }
    let bp = bandpass_grid(grid, model.beam.wavelength_nm, cfg.beta_l, cfg.beta_h);
    cfg.cases()
        .par_iter()
        .map(|&(label, name, case)| {
            let noisy = if case == NoiseCase::Zero {
                map.clone()
            } else {
                map.add(&white.filtered(&model.multipliers(case, grid))?)?
            };
            let image = noisy.filtered(&bp)?;
            let (mu, sd) = (image.mean(), image.std_dev());
            let cropped = image.crop_center(cfg.crop_rows.min(grid.rows), cfg.crop_cols.min(grid.cols))?;
            Ok(Figure3Panel {
                label,
                name,
                case,
                lo: mu - cfg.contrast_sigmas * sd,
                hi: mu + cfg.contrast_sigmas * sd,
                image,
                cropped,
            })
        })
        .collect()
}
