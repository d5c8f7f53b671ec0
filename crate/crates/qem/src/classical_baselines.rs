//! Reference schemes: conventional weak-phase measurements, entangled
//! accumulation statistics and the background-phase penalty.

use std::fmt::Write as _;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    InFocusPhaseContrast,
    DarkField,
    Diffraction,
    DiscreteNPixel,
    ScanningPairwise,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::InFocusPhaseContrast,
        SchemeKind::DarkField,
        SchemeKind::Diffraction,
        SchemeKind::DiscreteNPixel,
        SchemeKind::ScanningPairwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::InFocusPhaseContrast => "in_focus_phase_contrast",
            SchemeKind::DarkField => "dark_field",
            SchemeKind::Diffraction => "diffraction",
            SchemeKind::DiscreteNPixel => "discrete_n_pixel",
            SchemeKind::ScanningPairwise => "scanning_pairwise",
        }
    }

    fn is_pixelated(self) -> bool {
        matches!(self, SchemeKind::DiscreteNPixel | SchemeKind::ScanningPairwise)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementScheme {
    pub kind: SchemeKind,
    pub electrons: u64,
    pub n_pixels: u64,
}

impl MeasurementScheme {
    pub fn new(kind: SchemeKind, electrons: u64, n_pixels: u64) -> Result<Self> {
        if electrons < 1 {
            return Err(domain("electron count must be at least 1"));
        }
        if kind.is_pixelated() && n_pixels < 2 {
            return Err(domain("pixelated schemes need at least two pixels"));
        }
        if kind == SchemeKind::ScanningPairwise && electrons < n_pixels - 1 {
            return Err(domain("scanning needs at least one electron per pair"));
        }
        Ok(Self { kind, electrons, n_pixels })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain("alpha must lie in (0, 1)"));
    }
    Ok(())
}

/// Closed-form estimator variance. α is ignored by the pixelated schemes.
pub fn variance_analytic(scheme: &MeasurementScheme, alpha: f64) -> Result<f64> {
    let n = scheme.electrons as f64;
    match scheme.kind {
        SchemeKind::InFocusPhaseContrast | SchemeKind::DarkField | SchemeKind::Diffraction => {
            check_alpha(alpha)?;
            Ok(1.0 / (4.0 * n * alpha))
        }
        SchemeKind::DiscreteNPixel | SchemeKind::ScanningPairwise => Ok((scheme.n_pixels as f64 - 1.0) / (4.0 * n)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    pub trials: usize,
}

impl McEstimate {
    pub fn std_error(&self) -> f64 {
        (self.variance / self.trials as f64).sqrt()
    }
}

fn binomial(n: u64, p: f64) -> Result<Binomial> {
    Binomial::new(n, p.clamp(0.0, 1.0)).map_err(|e| Error::Sampling(e.to_string()))
}

/// One estimate of θ (or |θ|, |Θ|) from simulated detection counts.
fn one_estimate(scheme: &MeasurementScheme, theta: f64, alpha: f64, r: &mut Rng) -> Result<f64> {
    let n = scheme.electrons;
    let nf = n as f64;
    Ok(match scheme.kind {
        SchemeKind::InFocusPhaseContrast => {
            let x = binomial(n, alpha * (1.0 + 2.0 * theta))?.sample(r) as f64;
            0.5 * (x / (nf * alpha) - 1.0)
        }
        SchemeKind::DarkField => {
            let x = binomial(n, alpha * theta * theta)?.sample(r) as f64;
            (x / (nf * alpha)).sqrt()
        }
        SchemeKind::Diffraction => {
            // target bin k and its mirror −k share the scattered electrons;
            // each holds α|Θ|² in the large-σ limit
            let p = alpha * theta * theta;
            let x = binomial(n, p)?.sample(r);
            let _mirror = binomial(n - x, (p / (1.0 - p)).min(1.0))?.sample(r);
            (x as f64 / (nf * alpha)).sqrt()
        }
        SchemeKind::DiscreteNPixel => {
            let np = scheme.n_pixels as f64;
            let z = binomial(n, (1.0 + 2.0 * theta) / np)?.sample(r) as f64;
            0.5 * (np * z / nf - 1.0)
        }
        SchemeKind::ScanningPairwise => {
            // pixel s against reference pixel 1 with N/(n−1) electrons, read
            // as the n = 2 discrete scheme
            let m = n / (scheme.n_pixels - 1);
            let z = binomial(m, (1.0 + 2.0 * theta) / 2.0)?.sample(r) as f64;
            0.5 * (2.0 * z / m as f64 - 1.0)
        }
    })
}

/// Empirical mean and variance of the scheme's estimator over `trials`
/// independent exposures; chunks run on separate streams of `seed`.
pub fn variance_monte_carlo(
    scheme: &MeasurementScheme,
    theta_true: f64,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(domain("need at least two trials"));
    }
    if !scheme.kind.is_pixelated() {
        check_alpha(alpha)?;
        if alpha * (1.0 + 2.0 * theta_true.abs()) > 1.0 {
            return Err(domain("detection probability exceeds one"));
        }
    }
    const CHUNK: usize = 256;
    let chunks = trials.div_ceil(CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut acc = (0.0, 0.0);
            for _ in 0..count {
                let y = one_estimate(scheme, theta_true, alpha, &mut r)?;
                acc.0 += y;
                acc.1 += y * y;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as f64;
    let mean = s1 / t;
    Ok(McEstimate { mean, variance: (s2 - t * mean * mean) / (t - 1.0), trials })
}

/// (p_↑, p_↓) = ((1 + sin kδ)/2, (1 − sin kδ)/2).
pub fn eeem_probabilities(k: u32, delta: f64) -> (f64, f64) {
    let s = (k as f64 * delta).sin();
    (0.5 * (1.0 + s), 0.5 * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EeemVariance {
    /// Per group of k electrons.
    pub quantum: f64,
    pub classical: f64,
    /// Over N/k groups.
    pub quantum_total: f64,
    pub classical_total: f64,
}

pub fn eeem_variance_gain(k: u32, electrons: u64, delta: f64) -> Result<EeemVariance> {
    if k == 0 || electrons < k as u64 {
        return Err(domain("need 1 <= k <= N"));
    }
    if (k as f64 * delta).abs() >= 1.0 {
        return Err(domain("k·delta must be small"));
    }
    let kf = k as f64;
    let groups = electrons as f64 / kf;
    Ok(EeemVariance {
        quantum: 1.0 / (kf * kf),
        classical: 1.0 / kf,
        quantum_total: 1.0 / (kf * kf * groups),
        classical_total: 1.0 / (kf * groups),
    })
}

/// SNR multiplier 1 − 3δ²/2 for a background phase ±δ.
pub fn background_phase_penalty(delta_bg: f64) -> Result<f64> {
    if !(delta_bg.abs() < 0.5) {
        return Err(domain("background phase must satisfy |delta| < 0.5"));
    }
    Ok(1.0 - 1.5 * delta_bg * delta_bg)
}

/// (dp₊/dδ)/(2√(p₊p₋)) with p₊ = ½ + sin δ/(3 − 2cos δ); equals 1 at δ = 0.
pub fn background_phase_penalty_exact(delta_bg: f64) -> Result<f64> {
    background_phase_penalty(delta_bg)?;
    let (s, c) = delta_bg.sin_cos();
    let slope = (3.0 * c - 2.0) / (3.0 - 2.0 * c).powi(2);
    let h = s / (3.0 - 2.0 * c);
    Ok(slope / (2.0 * (0.25 - h * h).sqrt()))
}

/// Per-pixel variance n/(s·N) of an n-pixel phase map measured with N total
/// passages, s passages per electron.
pub fn passage_limited_variance(n_pixels: u64, total_passages: f64, per_electron: f64) -> f64 {
    n_pixels as f64 / (per_electron * total_passages)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeisenbergTables {
    /// (label, variance) with the total passages N fixed.
    pub fixed_total: Vec<(&'static str, f64)>,
    /// (label, variance) with every electron limited to s passages.
    pub fixed_passages: Vec<(&'static str, f64)>,
}

/// Multi-pixel versus pixel-by-pixel quantum measurement, in both budgets.
pub fn heisenberg_tables(n_pixels: u64, total_passages: f64, s: f64) -> Result<HeisenbergTables> {
    if n_pixels < 1 || !(total_passages >= n_pixels as f64) || !(s >= 1.0) {
        return Err(domain("need n >= 1, N >= n and s >= 1"));
    }
    let n = total_passages;
    let v = |per| passage_limited_variance(n_pixels, n, per);
    Ok(HeisenbergTables {
        fixed_total: vec![
            ("classical", v(1.0)),
            ("single_pixel_quantum", v(n / n_pixels as f64)),
            ("multi_pixel_quantum", v(n)),
        ],
        fixed_passages: vec![("classical", v(1.0)), ("single_pixel_quantum", v(s)), ("multi_pixel_quantum", v(s))],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub scheme: SchemeKind,
    pub electrons: u64,
    pub alpha: f64,
    pub analytic: f64,
    pub mc: f64,
}

impl VarianceRow {
    pub fn ratio(&self) -> f64 {
        self.mc / self.analytic
    }
}

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let mut s = String::from("scheme,N,alpha,analytic,mc,ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scheme.name(),
            r.electrons,
            crate::fmt9(r.alpha),
            crate::fmt9(r.analytic),
            crate::fmt9(r.mc),
            crate::fmt9(r.ratio())
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub electrons: u64,
    pub alpha: f64,
    pub theta: f64,
    pub n_pixels: u64,
    pub trials: usize,
}

impl Default for BaselineConfig {
    /// Weak phase with Nαθ² = 100, so the square-root estimators are in
    /// their linear regime; Nα·trials = 2·10¹⁰.
    fn default() -> Self {
        Self { electrons: 100_000_000, alpha: 0.01, theta: 0.01, n_pixels: 2, trials: 20_000 }
    }
}

/// One row per scheme; the three continuous schemes share N and α.
pub fn baseline_suite(cfg: &BaselineConfig, seed: u64) -> Result<Vec<VarianceRow>> {
    SchemeKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let scheme = MeasurementScheme::new(kind, cfg.electrons, cfg.n_pixels)?;
            let analytic = variance_analytic(&scheme, cfg.alpha)?;
            let mc = variance_monte_carlo(&scheme, cfg.theta, cfg.alpha, cfg.trials, seed.wrapping_add(i as u64))?;
            Ok(VarianceRow { scheme: kind, electrons: cfg.electrons, alpha: cfg.alpha, analytic, mc: mc.variance })
        })
        .collect()
}

/// Largest pairwise ratio among the in-focus, dark-field and diffraction MC variances.
pub fn equivalence_spread(rows: &[VarianceRow]) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| !r.scheme.is_pixelated()).map(|r| r.mc).collect();
    if v.len() < 3 {
        return None;
    }
    let hi = v.iter().cloned().fold(f64::MIN, f64::max);
    let lo = v.iter().cloned().fold(f64::MAX, f64::min);
    Some(hi / lo)
}
