use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{wrap, C64};

use super::PhaseMap;

/// Direct-sum DFT quantities of a phase map: Θ, θ̄, θ^L and θ^H.
#[derive(Debug, Clone)]
pub struct Filters {
    m: usize,
    pub theta_bar: f64,
    big_theta: Vec<C64>,
    low: Vec<C64>,
    high: Vec<C64>,
}

impl Filters {
    pub fn size(&self) -> usize {
        self.m
    }

    /// Θ_{r,s} = (1/M)Σθ e^{+2πi(rn+sm)/M}, any integer r, s.
    pub fn big_theta(&self, r: i64, s: i64) -> C64 {
        self.big_theta[wrap(r, self.m) * self.m + wrap(s, self.m)]
    }

    /// θ^L at ñ ∈ [−M/4, M/4), m ∈ [−M/2, M/2).
    pub fn low(&self, n: i64, m: i64) -> C64 {
        self.low[wrap(n, self.m / 2) * self.m + wrap(m, self.m)]
    }

    pub fn high(&self, n: i64, m: i64) -> C64 {
        self.high[wrap(n, self.m / 2) * self.m + wrap(m, self.m)]
    }

    pub fn low_values(&self) -> &[C64] {
        &self.low
    }

    pub fn high_values(&self) -> &[C64] {
        &self.high
    }

    /// (C_s, C_a) with the Q1 pixel state ∝ C_s|s̄⟩ + iC_a|ā⟩ to first order.
    pub fn predicted_coefficients(&self, alpha: C64, n: i64, m: i64) -> (C64, C64) {
        let tb = C64::new(self.theta_bar, 0.0);
        let l = self.low(n, m);
        let h = self.high(n, m);
        let i = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        (one - alpha * tb + l + i * alpha * h, alpha + tb + alpha * l - i * h)
    }
}

pub fn reference_filters(map: &PhaseMap) -> Filters {
    let m = map.size();
    let mi = m as i64;
    let tw: Vec<C64> = (0..m).map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / m as f64)).collect();
    let inv = 1.0 / m as f64;

    let mut big_theta = vec![C64::new(0.0, 0.0); m * m];
    for r in 0..m {
        for s in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..m {
                for c in 0..m {
                    // conj of e^{−2πi k/M} gives the + kernel
                    acc += tw[(r * n + s * c) % m].conj() * map.wrapped()[n * m + c];
                }
            }
            big_theta[r * m + s] = acc * inv;
        }
    }
    let theta_bar = big_theta[(m / 2) * m].re * inv;

    let h = m / 2;
    let mut low = vec![C64::new(0.0, 0.0); h * m];
    let mut high = vec![C64::new(0.0, 0.0); h * m];
    for nt in -mi / 4..mi / 4 {
        for mc in -mi / 2..mi / 2 {
            let mut l = C64::new(0.0, 0.0);
            let mut hh = C64::new(0.0, 0.0);
            for rp in -mi / 4..mi / 4 {
                for s in -mi / 2..mi / 2 {
                    if rp == 0 && s == 0 {
                        continue;
                    }
                    let k = tw[wrap(2 * rp * nt + s * mc, m)];
                    l += big_theta[wrap(rp, m) * m + wrap(s, m)] * k;
                    hh += big_theta[wrap(rp + mi / 2, m) * m + wrap(s, m)] * k;
                }
            }
            let idx = wrap(nt, h) * m + wrap(mc, m);
            low[idx] = l * inv;
            high[idx] = hh * inv;
        }
    }
    Filters { m, theta_bar, big_theta, low, high }
}

/// θ̄ = (1/M²)Σ(−1)^n θ_{n,m} straight from the map.
pub fn theta_bar(map: &PhaseMap) -> f64 {
    let m = map.size() as i64;
    let mut acc = 0.0;
    for n in -m / 2..m / 2 {
        let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        for c in -m / 2..m / 2 {
            acc += sign * map.get(n, c);
        }
    }
    acc / (m * m) as f64
}

/// θ̄ of a continuous specimen θ(x, y) sampled at ((n σ + x0), m σ).
pub fn sampled_theta_bar<F: Fn(f64, f64) -> f64>(f: F, m: usize, pitch: f64, x0: f64) -> f64 {
    let mi = m as i64;
    let mut acc = 0.0;
    for n in -mi / 2..mi / 2 {
        let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        for c in -mi / 2..mi / 2 {
            acc += sign * f(n as f64 * pitch + x0, c as f64 * pitch);
        }
    }
    acc / (m * m) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedReading {
    pub delta: f64,
    pub half_shift: bool,
    pub theta_bar: f64,
}

/// Least-squares (A, φ) from readings θ̄ = A cos(φ+δ) (grid at x = (n+δ/π)σ)
/// and θ̄ = −A sin(φ+δ) (half-pixel shifted grid).
pub fn shifted_array_recovery(readings: &[ShiftedReading]) -> Result<(f64, f64)> {
    // unknowns X = A cos φ, Y = A sin φ
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in readings {
        let (s, c) = r.delta.sin_cos();
        let (u, v) = if r.half_shift { (-s, -c) } else { (c, -s) };
        a11 += u * u;
        a12 += u * v;
        a22 += v * v;
        b1 += u * r.theta_bar;
        b2 += v * r.theta_bar;
    }
    let det = a11 * a22 - a12 * a12;
    let scale = (a11 + a22).max(f64::MIN_POSITIVE);
    if readings.len() < 2 || det.abs() <= 1e-12 * scale * scale {
        return Err(Error::Numeric("shifted-array readings are rank deficient".into()));
    }
    let x = (a22 * b1 - a12 * b2) / det;
    let y = (a11 * b2 - a12 * b1) / det;
    Ok((x.hypot(y), y.atan2(x)))
}
