use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::PixelImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    /// Bin centre, rad/nm.
    pub q: f64,
    /// Mean |F(q)|² with F = l²·DFT, nm⁴.
    pub power: f64,
    /// power / A, nm².
    pub psd: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    pub bins: Vec<SpectrumBin>,
    pub area_nm2: f64,
    pub dq: f64,
}

impl RadialSpectrum {
    /// Σ psd·(count·Δq²/(2π)²), equal to the mean of θ² over the image.
    pub fn parseval_sum(&self, include_dc: bool) -> f64 {
        self.bins
            .iter()
            .enumerate()
            .filter(|(i, _)| include_dc || *i > 0)
            .map(|(_, b)| b.psd * b.count as f64 / self.area_nm2)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("q_per_nm,power,psd\n");
        for b in self.bins.iter().filter(|b| b.count > 0) {
            let _ = writeln!(s, "{},{},{}", crate::fmt9(b.q), crate::fmt9(b.power), crate::fmt9(b.psd));
        }
        s
    }

    fn points<F: Fn(&SpectrumBin) -> f64>(&self, q_min: f64, q_max: f64, y: F) -> Vec<(f64, f64)> {
        self.bins
            .iter()
            .skip(1)
            .filter(|b| b.count > 0 && b.q >= q_min && b.q <= q_max && y(b) > 0.0)
            .map(|b| (b.q, y(b).ln()))
            .collect()
    }
}

/// Radially averaged power; bin width is one reciprocal pixel 2π/(N·l).
pub fn radial_power_spectrum(map: &PixelImage) -> RadialSpectrum {
    let g = map.grid;
    let l2 = g.pixel_nm * g.pixel_nm;
    let area = g.area_nm2();
    let dq = 2.0 * PI / (g.rows.max(g.cols) as f64 * g.pixel_nm);
    let spec = map.spectrum();
    let mut acc: Vec<(f64, usize)> = Vec::new();
    for r in 0..g.rows {
        for c in 0..g.cols {
            let (qy, qx) = g.bin_q(r, c);
            let k = (qy.hypot(qx) / dq).round() as usize;
            if acc.len() <= k {
                acc.resize(k + 1, (0.0, 0));
            }
            acc[k].0 += spec[r * g.cols + c].norm_sqr() * l2 * l2;
            acc[k].1 += 1;
        }
    }
    let bins = acc
        .into_iter()
        .enumerate()
        .map(|(k, (sum, n))| {
            let power = if n > 0 { sum / n as f64 } else { 0.0 };
            SpectrumBin { q: k as f64 * dq, power, psd: power / area, count: n }
        })
        .collect();
    RadialSpectrum { bins, area_nm2: area, dq }
}

/// Least-squares (slope, intercept).
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pts.len() < 2 {
        return Err(Error::Numeric("need at least two points for a fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric("degenerate abscissae in fit".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuinierFit {
    pub r_g: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// ln power ≈ ln Σ₀ − R_g²q²/3 over 0 < q ≤ q_max.
pub fn guinier_fit(spec: &RadialSpectrum, q_max: f64) -> Result<GuinierFit> {
    let pts: Vec<(f64, f64)> = spec.points(0.0, q_max, |b| b.power).into_iter().map(|(q, y)| (q * q, y)).collect();
    let (slope, intercept) = linear_fit(&pts)?;
    if slope >= 0.0 {
        return Err(Error::Numeric("Guinier slope is not negative".into()));
    }
    Ok(GuinierFit { r_g: (-3.0 * slope).sqrt(), slope, intercept })
}

/// B of psd ∝ exp(−B s²/2), s = q/2π, fitted over [q_min, q_max].
pub fn b_factor_fit(spec: &RadialSpectrum, q_min: f64, q_max: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> =
        spec.points(q_min, q_max, |b| b.psd).into_iter().map(|(q, y)| ((q / (2.0 * PI)).powi(2), y)).collect();
    Ok(-2.0 * linear_fit(&pts)?.0)
}
