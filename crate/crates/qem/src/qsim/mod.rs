//! Exact joint statevector of the M×M beam grid and the ancilla qubit Q1.
//!
//! Amplitudes are stored per Q1 branch (s̄ first, then ā), each branch a
//! row-major M×M grid in FFT order: row `n mod M`, column `m mod M`.
//!
//! One electron pass, as numbered in the comments below:
//!  1. Q1 starts in |s̄⟩ (or |s̄⟩ + iα|ā⟩) once per round
//!  2. electron in (|s⟩ + |a⟩)/√2
//!  3. CNOT from the electron's s/a comb onto Q1
//!  4. specimen phase e^{iθ}
//!  5. forward QFT
//!  6. phase plate i on (±M/4, 0); 6̃ replaces it by a random Ξ after an inelastic event
//!  7. measure the half-plane bit Q2
//!  8. split inverse QFT of each half-plane
//!  9. measure the pixel
//! 10. swap s̄ and ā when Q2 read 1
//! 11. repeat for k electrons
//! 12. read Q1 in the (|0̄⟩ ± i|1̄⟩)/√2 basis

mod filters;
mod protocol;

pub use filters::*;
pub use protocol::*;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::fft::{centered, wrap, Fft2, C64};
use crate::rng::Rng;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn check_grid(m: usize) -> Result<()> {
    if m < 4 || !m.is_power_of_two() {
        return Err(Error::Config(format!("grid size M={m} must be a power of two >= 4")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q1State {
    pub c_s: C64,
    pub c_a: C64,
}

impl Q1State {
    /// normalize(|s̄⟩ + iα|ā⟩)
    pub fn from_alpha(alpha: C64) -> Self {
        Self { c_s: C64::new(1.0, 0.0), c_a: I * alpha }.normalized()
    }

    pub fn normalized(self) -> Self {
        let n = (self.c_s.norm_sqr() + self.c_a.norm_sqr()).sqrt();
        Self { c_s: self.c_s / n, c_a: self.c_a / n }
    }

    pub fn norm(&self) -> f64 {
        (self.c_s.norm_sqr() + self.c_a.norm_sqr()).sqrt()
    }

    pub fn ratio(&self) -> C64 {
        self.c_a / self.c_s
    }

    pub fn swapped(self) -> Self {
        Self { c_s: self.c_a, c_a: self.c_s }
    }

    /// Amplitudes on |0̄⟩, |1̄⟩ with |s̄⟩ = (|0̄⟩+|1̄⟩)/√2, |ā⟩ = (|0̄⟩−|1̄⟩)/√2.
    pub fn in_computational_basis(&self) -> (C64, C64) {
        ((self.c_s + self.c_a) * FRAC_1_SQRT_2, (self.c_s - self.c_a) * FRAC_1_SQRT_2)
    }

    /// Probability of |↑⟩ = (|0̄⟩ + i|1̄⟩)/√2.
    pub fn p_up(&self) -> f64 {
        let (c0, c1) = self.in_computational_basis();
        let amp = (c0 - I * c1) * FRAC_1_SQRT_2;
        amp.norm_sqr() / (self.c_s.norm_sqr() + self.c_a.norm_sqr())
    }

    /// |⟨other|self⟩|² for normalized states.
    pub fn fidelity(&self, other: &Q1State) -> f64 {
        let a = self.normalized();
        let b = other.normalized();
        (b.c_s.conj() * a.c_s + b.c_a.conj() * a.c_a).norm_sqr()
    }

    /// Density matrix in the {s̄, ā} basis.
    pub fn density(&self) -> [[C64; 2]; 2] {
        let q = self.normalized();
        let v = [q.c_s, q.c_a];
        let mut d = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] = v[i] * v[j].conj();
            }
        }
        d
    }
}

/// Step 12: measure Q1 in the (|0̄⟩ ± i|1̄⟩)/√2 basis; true means ↑.
pub fn measure_q1_updown(q1: &Q1State, rng: &mut Rng) -> bool {
    rng.random::<f64>() < q1.p_up()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    m: usize,
    pub pitch_nm: f64,
    theta: Vec<f64>,
}

impl PhaseMap {
    pub const DEFAULT_LIMIT: f64 = 0.3;

    /// Builds a map from θ(n, m) on centered indices; the mean is removed.
    pub fn from_fn<F: Fn(i64, i64) -> f64>(m: usize, pitch_nm: f64, f: F) -> Result<Self> {
        Self::from_fn_limited(m, pitch_nm, Self::DEFAULT_LIMIT, f)
    }

    pub fn from_fn_limited<F: Fn(i64, i64) -> f64>(m: usize, pitch_nm: f64, limit: f64, f: F) -> Result<Self> {
        check_grid(m)?;
        let mut theta = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                theta[r * m + c] = f(centered(r, m), centered(c, m));
            }
        }
        Self::from_wrapped(m, pitch_nm, limit, theta)
    }

    /// `theta` in FFT order (row n mod M, column m mod M).
    pub fn from_wrapped(m: usize, pitch_nm: f64, limit: f64, mut theta: Vec<f64>) -> Result<Self> {
        check_grid(m)?;
        if theta.len() != m * m {
            return Err(Error::Input(format!("phase map needs {} values, got {}", m * m, theta.len())));
        }
        if !(pitch_nm > 0.0) {
            return Err(Error::Domain("pitch must be positive".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Input("phase map contains non-finite values".into()));
        }
        let mean = theta.iter().sum::<f64>() / theta.len() as f64;
        theta.iter_mut().for_each(|t| *t -= mean);
        let mx = theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        if mx >= limit {
            return Err(Error::Domain(format!("max|theta| = {mx} exceeds the weak-phase limit {limit}")));
        }
        Ok(Self { m, pitch_nm, theta })
    }

    pub fn zero(m: usize, pitch_nm: f64) -> Result<Self> {
        Self::from_fn(m, pitch_nm, |_, _| 0.0)
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, n: i64, m: i64) -> f64 {
        self.theta[wrap(n, self.m) * self.m + wrap(m, self.m)]
    }

    pub fn wrapped(&self) -> &[f64] {
        &self.theta
    }

    pub fn max_abs(&self) -> f64 {
        self.theta.iter().fold(0.0f64, |a, t| a.max(t.abs()))
    }

    /// Plain-text form: header `M pitch`, then M rows of M values for n, m = −M/2..M/2−1.
    pub fn to_text(&self) -> String {
        let m = self.m as i64;
        let mut out = format!("{} {}\n", self.m, crate::fmt9(self.pitch_nm));
        for n in -m / 2..m / 2 {
            let row: Vec<String> = (-m / 2..m / 2).map(|c| format!("{:e}", self.get(n, c))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Input("empty phase map file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 2 {
            return Err(Error::Input("phase map header must be `M pitch_nm`".into()));
        }
        let m: usize = h[0].parse().map_err(|_| Error::Input("bad M in header".into()))?;
        let pitch: f64 = h[1].parse().map_err(|_| Error::Input("bad pitch in header".into()))?;
        check_grid(m)?;
        let vals: Vec<f64> = lines
            .flat_map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .map(|t| t.parse::<f64>().map_err(|_| Error::Input(format!("bad value `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != m * m {
            return Err(Error::Input(format!("expected {} values, found {}", m * m, vals.len())));
        }
        let half = m as i64 / 2;
        let mut theta = vec![0.0; m * m];
        for (i, v) in vals.into_iter().enumerate() {
            let n = (i / m) as i64 - half;
            let c = (i % m) as i64 - half;
            theta[wrap(n, m) * m + wrap(c, m)] = v;
        }
        Self::from_wrapped(m, pitch, f64::INFINITY, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incident {
    S,
    A,
    Superposition,
}

/// |s⟩ = (1/M)Σe^{iπn/2}|n,m⟩, |a⟩ = (1/M)Σe^{−iπn/2}|n,m⟩, or (|s⟩+|a⟩)/√2.
pub fn make_incident(m: usize, which: Incident) -> Result<Vec<C64>> {
    check_grid(m)?;
    let inv = 1.0 / m as f64;
    let mut v = vec![ZERO; m * m];
    for r in 0..m {
        let n = centered(r, m);
        let ph = PI * n as f64 / 2.0;
        let amp = match which {
            Incident::S => C64::from_polar(inv, ph),
            Incident::A => C64::from_polar(inv, -ph),
            Incident::Superposition => (C64::from_polar(inv, ph) + C64::from_polar(inv, -ph)) * FRAC_1_SQRT_2,
        };
        for c in 0..m {
            v[r * m + c] = amp;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    m: usize,
    amps: Vec<C64>,
}

impl JointState {
    pub fn product(electron: &[C64], m: usize, q1: Q1State) -> Result<Self> {
        check_grid(m)?;
        if electron.len() != m * m {
            return Err(Error::Input("electron state has the wrong length".into()));
        }
        let q = q1.normalized();
        let mut amps = Vec::with_capacity(2 * m * m);
        amps.extend(electron.iter().map(|e| e * q.c_s));
        amps.extend(electron.iter().map(|e| e * q.c_a));
        Ok(Self { m, amps })
    }

    pub fn from_amplitudes(m: usize, amps: Vec<C64>) -> Result<Self> {
        check_grid(m)?;
        if amps.len() != 2 * m * m {
            return Err(Error::Input("joint state needs 2·M² amplitudes".into()));
        }
        Ok(Self { m, amps })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Amplitude of |q1⟩|n,m⟩ with q1 = 0 for s̄, 1 for ā.
    pub fn amp(&self, q1: usize, n: i64, m: i64) -> C64 {
        let mm = self.m;
        self.amps[q1 * mm * mm + wrap(n, mm) * mm + wrap(m, mm)]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Sampling("state has zero norm".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(n)
    }

    fn branches_mut(&mut self) -> (&mut [C64], &mut [C64]) {
        let mm = self.m * self.m;
        self.amps.split_at_mut(mm)
    }
}

/// Step 3: flips s̄↔ā on the |a⟩ electron subspace (P_a⊗X + (1−P_a)⊗1).
pub fn entangle_cnot(state: &mut JointState) -> Result<()> {
    let a = make_incident(state.m, Incident::A)?;
    let (bs, ba) = state.branches_mut();
    let proj = |b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>();
    let ps = proj(bs);
    let pa = proj(ba);
    let d = pa - ps;
    for ((x, y), av) in bs.iter_mut().zip(ba.iter_mut()).zip(&a) {
        *x += d * av;
        *y -= d * av;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpecimenMode {
    #[default]
    Exact,
    Linearized,
}

/// Step 4: per-pixel e^{iθ} (or 1+iθ followed by renormalization).
pub fn apply_specimen(state: &mut JointState, map: &PhaseMap, mode: SpecimenMode) -> Result<()> {
    if map.size() != state.m {
        return Err(Error::Input("phase map size does not match the state".into()));
    }
    let mm = state.m * state.m;
    let factors: Vec<C64> = map
        .wrapped()
        .iter()
        .map(|&t| match mode {
            SpecimenMode::Exact => C64::from_polar(1.0, t),
            SpecimenMode::Linearized => C64::new(1.0, t),
        })
        .collect();
    for (i, a) in state.amps.iter_mut().enumerate() {
        *a *= factors[i % mm];
    }
    if mode == SpecimenMode::Linearized {
        state.normalize()?;
    }
    Ok(())
}

/// Unitary 2-D DFT on the electron index: (1/M)Σ e^{+2πi(nr+ms)/M}; the
/// inverse uses the conjugate kernel.
pub fn qft2d(state: &mut JointState, inverse: bool) {
    let m = state.m;
    let f = Fft2::new(m, m);
    let scale = 1.0 / m as f64;
    let (bs, ba) = state.branches_mut();
    for b in [bs, ba] {
        if inverse {
            f.forward(b);
        } else {
            f.inverse(b);
        }
        b.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Step 6: multiply i onto |±M/4, 0⟩ in both Q1 branches.
pub fn phase_plate_step6(state: &mut JointState) {
    let m = state.m;
    for q in 0..2 {
        for n in [-(m as i64) / 4, m as i64 / 4] {
            let idx = q * m * m + wrap(n, m) * m;
            state.amps[idx] *= I;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiSign {
    /// Ξ_{M/4+a,b} = −Ξ_{M/4−a,−b}
    #[default]
    Minus,
    /// Ξ_{M/4+a,b} = +Ξ_{M/4−a,−b}
    Plus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiMap {
    m: usize,
    xi: Vec<f64>,
}

impl XiMap {
    /// Random phases honoring M-periodicity and the pairing (n,m) ↔ (M/2−n, −m).
    pub fn generate(m: usize, sign: XiSign, rng: &mut Rng) -> Result<Self> {
        check_grid(m)?;
        let mut xi = vec![f64::NAN; m * m];
        for r in 0..m {
            for c in 0..m {
                let idx = r * m + c;
                if !xi[idx].is_nan() {
                    continue;
                }
                let n = centered(r, m);
                let mc = centered(c, m);
                let pidx = wrap(m as i64 / 2 - n, m) * m + wrap(-mc, m);
                let v = rng.random::<f64>() * 2.0 * PI;
                if pidx == idx {
                    xi[idx] = match sign {
                        XiSign::Minus => 0.0,
                        XiSign::Plus => v,
                    };
                } else {
                    xi[idx] = v;
                    xi[pidx] = match sign {
                        XiSign::Minus => -v,
                        XiSign::Plus => v,
                    };
                }
            }
        }
        Ok(Self { m, xi })
    }

    pub fn get(&self, n: i64, m: i64) -> f64 {
        self.xi[wrap(n, self.m) * self.m + wrap(m, self.m)]
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Multiply e^{iΞ} onto a far-field grid in FFT order.
    pub fn apply_to_grid(&self, grid: &mut [C64]) {
        for (g, x) in grid.iter_mut().zip(&self.xi) {
            *g *= C64::from_polar(1.0, *x);
        }
    }
}

/// Step 6̃: draws Ξ and applies |n,m⟩ → e^{iΞ_{n,m}}|n,m⟩.
pub fn randomize_step6tilde(state: &mut JointState, sign: XiSign, rng: &mut Rng) -> Result<XiMap> {
    let xi = XiMap::generate(state.m, sign, rng)?;
    apply_xi(state, &xi)?;
    Ok(xi)
}

pub fn apply_xi(state: &mut JointState, xi: &XiMap) -> Result<()> {
    if xi.size() != state.m {
        return Err(Error::Input("Xi map size does not match the state".into()));
    }
    let (bs, ba) = state.branches_mut();
    xi.apply_to_grid(bs);
    xi.apply_to_grid(ba);
    Ok(())
}

/// Half-plane label of far-field row r: 0 for r < 0, 1 for r ≥ 0.
pub fn half_of_row(n: i64) -> u8 {
    u8::from(n >= 0)
}

/// Split inverse QFT: inverse DFT with kernel √2/M·e^{−2πi(2r̃n+sm)/M} on each
/// half-plane, r̃ = r + M/4 for r < 0 and r − M/4 for r ≥ 0. Output pixel ñ of
/// half c is stored on the row of that half congruent to ñ mod M/2.
pub fn split_inverse_qft(state: &mut JointState) {
    let m = state.m;
    let h = m / 2;
    let f = Fft2::new(h, m);
    let scale = std::f64::consts::SQRT_2 / m as f64;
    let (bs, ba) = state.branches_mut();
    for b in [bs, ba] {
        for c in 0..2u8 {
            let mut buf = vec![ZERO; h * m];
            for j in 0..h {
                let n = if c == 0 { j as i64 - h as i64 } else { j as i64 };
                let rt = if c == 0 { n + m as i64 / 4 } else { n - m as i64 / 4 };
                let src = wrap(n, m) * m;
                let dst = wrap(rt, h) * m;
                buf[dst..dst + m].copy_from_slice(&b[src..src + m]);
            }
            f.forward(&mut buf);
            for j in 0..h {
                let row = if c == 0 { j + h } else { j };
                for col in 0..m {
                    b[row * m + col] = buf[j * m + col] * scale;
                }
            }
        }
    }
}

/// Pixel label ñ ∈ [−M/4, M/4) of a stored row after the split inverse QFT.
pub fn n_tilde_of_row(row: usize, m: usize) -> i64 {
    centered(row % (m / 2), m / 2)
}

/// Probability of the half-plane outcome c = 1 (r ≥ 0).
pub fn q2_probability_one(state: &JointState) -> f64 {
    let m = state.m;
    let mm = m * m;
    let mut p = 0.0;
    for q in 0..2 {
        for row in 0..m / 2 {
            for col in 0..m {
                p += state.amps[q * mm + row * m + col].norm_sqr();
            }
        }
    }
    p / state.norm().powi(2)
}

/// Step 7: measure the half-plane bit, collapse and renormalize.
pub fn measure_q2(state: &mut JointState, rng: &mut Rng) -> Result<u8> {
    let p1 = q2_probability_one(state);
    let c = u8::from(rng.random::<f64>() < p1);
    collapse_q2(state, c)?;
    Ok(c)
}

pub fn collapse_q2(state: &mut JointState, c: u8) -> Result<()> {
    let m = state.m;
    let mm = m * m;
    for q in 0..2 {
        for row in 0..m {
            if half_of_row(centered(row, m)) != c {
                state.amps[q * mm + row * m..q * mm + row * m + m].fill(ZERO);
            }
        }
    }
    state.normalize().map(|_| ()).map_err(|_| Error::Sampling(format!("Q2 outcome {c} has zero probability")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelOutcome {
    pub row: usize,
    pub col: usize,
    pub n_tilde: i64,
    pub m_hat: i64,
    pub q1: Q1State,
}

/// Born-rule distribution over electron pixels (summed over Q1).
pub fn pixel_probabilities(state: &JointState) -> Vec<f64> {
    let mm = state.m * state.m;
    let total = state.norm().powi(2);
    (0..mm).map(|i| (state.amps[i].norm_sqr() + state.amps[mm + i].norm_sqr()) / total).collect()
}

/// Step 9: sample an electron pixel; Q1 is left in the conditional state.
pub fn measure_pixel(state: &JointState, rng: &mut Rng) -> Result<PixelOutcome> {
    let probs = pixel_probabilities(state);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = None;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            pick = Some(i);
            acc += p;
            if u < acc {
                break;
            }
        }
    }
    let i = pick.ok_or_else(|| Error::Sampling("no pixel has nonzero probability".into()))?;
    Ok(pixel_outcome(state, i))
}

pub(crate) fn pixel_outcome(state: &JointState, i: usize) -> PixelOutcome {
    let m = state.m;
    let mm = m * m;
    let (row, col) = (i / m, i % m);
    PixelOutcome {
        row,
        col,
        n_tilde: n_tilde_of_row(row, m),
        m_hat: centered(col, m),
        q1: Q1State { c_s: state.amps[i], c_a: state.amps[mm + i] }.normalized(),
    }
}

#[cfg(test)]
mod tests;
