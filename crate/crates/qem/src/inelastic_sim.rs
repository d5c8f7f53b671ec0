//! Inelastic (dipole) scattering events on the beam grid and their effect on Q1.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{centered, wrap, Fft2, C64};
use crate::isn_analysis::mu_of_beta;
use crate::physics::{bethe_ridge_angle, theta_e, BeamModel};
use crate::qsim::{electron_pass, split_inverse_qft, JointState, Passage, PhaseMap, ProtocolOptions, Q1State, XiMap};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleEvent {
    pub r0_nm: [f64; 2],
    pub a_dir: [f64; 2],
    pub energy_loss_ev: f64,
}

impl DipoleEvent {
    pub fn new(r0_nm: [f64; 2], a_dir: [f64; 2], energy_loss_ev: f64) -> Result<Self> {
        let n = a_dir[0].hypot(a_dir[1]);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("dipole direction must be a unit vector (|a| = {n})")));
        }
        if !(energy_loss_ev > 0.0) || !r0_nm.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("invalid dipole event".into()));
        }
        Ok(Self { r0_nm, a_dir, energy_loss_ev })
    }

    /// Uniform position in the cell [−L/2, L/2)² and uniform in-plane direction.
    pub fn random(cell_nm: f64, energy_loss_ev: f64, rng: &mut Rng) -> Self {
        let phi = rng.random::<f64>() * 2.0 * PI;
        let x = (rng.random::<f64>() - 0.5) * cell_nm;
        let y = (rng.random::<f64>() - 0.5) * cell_nm;
        Self { r0_nm: [x, y], a_dir: [phi.cos(), phi.sin()], energy_loss_ev }
    }
}

/// Tilted dipole amplitude at scattering angle `theta` (rad):
/// Ψ̂₀ e^{−ik·r₀} with Ψ̂₀ = (θ̂·a)/√(θ²+θ_E²) inside the cutoff θ_c.
pub fn far_field_dipole(theta: [f64; 2], event: &DipoleEvent, beam: &BeamModel) -> C64 {
    let beam = BeamModel { energy_loss_ev: event.energy_loss_ev, ..*beam };
    let te = theta_e(&beam);
    let tc = bethe_ridge_angle(&beam);
    let t = theta[0].hypot(theta[1]);
    if t == 0.0 || t > tc {
        return C64::new(0.0, 0.0);
    }
    let amp = (theta[0] * event.a_dir[0] + theta[1] * event.a_dir[1]) / t / (t * t + te * te).sqrt();
    let k0 = 2.0 * PI / beam.wavelength_nm;
    let phase = -k0 * (theta[0] * event.r0_nm[0] + theta[1] * event.r0_nm[1]);
    C64::from_polar(amp, phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnvelopeOptions {
    /// Keep far-field lattice samples on the lines r ≡ ±M/4 (mod M). These
    /// lines sit on the stripe boundaries and break the exact imaginarity of g.
    pub include_boundary_lines: bool,
}

struct LatticePoint {
    bin: usize,
    r: i64,
    s: i64,
    gx: f64,
    gy: f64,
}

/// Far-field reciprocal lattice k_{r,s} = k_min(r, s) inside the cutoff disc,
/// folded onto the M×M DFT cell.
pub struct EnvelopeBuilder {
    m: usize,
    pitch_nm: f64,
    energy_loss_ev: f64,
    radius: i64,
    points: Vec<LatticePoint>,
    fft: Fft2,
}

impl EnvelopeBuilder {
    pub fn new(m: usize, pitch_nm: f64, beam: &BeamModel, opts: EnvelopeOptions) -> Result<Self> {
        crate::qsim::check_grid(m)?;
        if !(pitch_nm > 0.0) {
            return Err(Error::Domain("pitch must be positive".into()));
        }
        let te = theta_e(beam);
        let tc = bethe_ridge_angle(beam);
        let step = beam.wavelength_nm / (m as f64 * pitch_nm);
        let radius = (tc / step).floor() as i64;
        let q = m as i64 / 4;
        let mut points = Vec::new();
        for r in -radius..=radius {
            let on_boundary = (r - q).rem_euclid(m as i64) == 0 || (r + q).rem_euclid(m as i64) == 0;
            if on_boundary && !opts.include_boundary_lines {
                continue;
            }
            for s in -radius..=radius {
                let (tx, ty) = (r as f64 * step, s as f64 * step);
                let t = tx.hypot(ty);
                if t == 0.0 || t > tc {
                    continue;
                }
                let w = 1.0 / (t * (t * t + te * te).sqrt());
                points.push(LatticePoint { bin: wrap(r, m) * m + wrap(s, m), r, s, gx: tx * w, gy: ty * w });
            }
        }
        Ok(Self { m, pitch_nm, energy_loss_ev: beam.energy_loss_ev, radius, points, fft: Fft2::new(m, m) })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn cell_nm(&self) -> f64 {
        self.m as f64 * self.pitch_nm
    }

    pub fn lattice_points(&self) -> usize {
        self.points.len()
    }

    /// e_{n,m} = (1/L²) Σ_{r,s} f_{r,s} e^{2πi(rn+sm)/M}, f = Ψ̂₀(k_{r,s}) e^{−ik_{r,s}·r₀}.
    pub fn envelope(&self, event: &DipoleEvent) -> Result<EnvelopeGrid> {
        if event.energy_loss_ev != self.energy_loss_ev {
            return Err(Error::Input("event energy loss differs from the lattice beam model".into()));
        }
        let l = self.cell_nm();
        let half = l / 2.0;
        if event.r0_nm.iter().any(|&v| v < -half || v >= half) {
            return Err(Error::Domain("scattering centre lies outside the illuminated cell".into()));
        }
        let n = (2 * self.radius + 1) as usize;
        let tilt = |x: f64| -> Vec<C64> {
            (0..n).map(|i| C64::from_polar(1.0, -2.0 * PI * (i as i64 - self.radius) as f64 * x / l)).collect()
        };
        let px = tilt(event.r0_nm[0]);
        let py = tilt(event.r0_nm[1]);
        let mut grid = vec![C64::new(0.0, 0.0); self.m * self.m];
        let [ax, ay] = event.a_dir;
        for p in &self.points {
            let amp = ax * p.gx + ay * p.gy;
            let ph = px[(p.r + self.radius) as usize] * py[(p.s + self.radius) as usize];
            grid[p.bin] += ph * amp;
        }
        self.fft.inverse(&mut grid);
        let scale = 1.0 / (l * l);
        grid.iter_mut().for_each(|v| *v *= scale);
        Ok(EnvelopeGrid { m: self.m, pitch_nm: self.pitch_nm, e: grid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeGrid {
    m: usize,
    pub pitch_nm: f64,
    e: Vec<C64>,
}

impl EnvelopeGrid {
    pub fn from_wrapped(m: usize, pitch_nm: f64, e: Vec<C64>) -> Result<Self> {
        crate::qsim::check_grid(m)?;
        if e.len() != m * m {
            return Err(Error::Input("envelope needs M² values".into()));
        }
        Ok(Self { m, pitch_nm, e })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, n: i64, m: i64) -> C64 {
        self.e[wrap(n, self.m) * self.m + wrap(m, self.m)]
    }

    pub fn wrapped(&self) -> &[C64] {
        &self.e
    }
}

pub fn build_envelope(
    event: &DipoleEvent,
    m: usize,
    sigma_nm: f64,
    beam: &BeamModel,
    opts: EnvelopeOptions,
) -> Result<EnvelopeGrid> {
    let beam = BeamModel { energy_loss_ev: event.energy_loss_ev, ..*beam };
    EnvelopeBuilder::new(m, sigma_nm, &beam, opts)?.envelope(event)
}

/// Far-field coefficients E^{(s)}, E^{(a)} (FFT order).
#[derive(Debug, Clone, PartialEq)]
pub struct EGrid {
    m: usize,
    pub e_s: Vec<C64>,
    pub e_a: Vec<C64>,
}

impl EGrid {
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn s(&self, n: i64, m: i64) -> C64 {
        self.e_s[wrap(n, self.m) * self.m + wrap(m, self.m)]
    }

    pub fn a(&self, n: i64, m: i64) -> C64 {
        self.e_a[wrap(n, self.m) * self.m + wrap(m, self.m)]
    }

    pub fn randomized(&self, xi: &XiMap) -> EGrid {
        let mut out = self.clone();
        xi.apply_to_grid(&mut out.e_s);
        xi.apply_to_grid(&mut out.e_a);
        out
    }

    /// Largest violation of E_{±M/4+a,b} = −E*_{±M/4−a,−b} over both grids.
    pub fn symmetry_residual(&self) -> f64 {
        let mi = self.m as i64;
        let mut worst: f64 = 0.0;
        for grid in [&self.e_s, &self.e_a] {
            let at = |n: i64, m: i64| grid[wrap(n, self.m) * self.m + wrap(m, self.m)];
            for c in [mi / 4, -mi / 4] {
                for a in -mi / 2..mi / 2 {
                    for b in -mi / 2..mi / 2 {
                        worst = worst.max((at(c + a, b) + at(c - a, -b).conj()).norm());
                    }
                }
            }
        }
        worst
    }
}

/// E^{(s)}_{n,m} = (1/M)Σ e_{r,s} e^{2πi((n+M/4)r+ms)/M}, E^{(a)} with n−M/4.
pub fn egrid_from_envelope(env: &EnvelopeGrid) -> EGrid {
    let m = env.m;
    let fft = Fft2::new(m, m);
    let inv = 1.0 / m as f64;
    let shifted = |sign: f64| {
        let mut g: Vec<C64> = env
            .e
            .iter()
            .enumerate()
            .map(|(i, v)| v * C64::from_polar(1.0, sign * PI * centered(i / m, m) as f64 / 2.0))
            .collect();
        fft.inverse(&mut g);
        g.iter_mut().for_each(|v| *v *= inv);
        g
    };
    EGrid { m, e_s: shifted(1.0), e_a: shifted(-1.0) }
}

/// Split inverse QFT of one far-field grid; output in FFT order.
pub fn split_transform(grid: &[C64], m: usize) -> Result<Vec<C64>> {
    let mut amps = grid.to_vec();
    amps.extend(std::iter::repeat_n(C64::new(0.0, 0.0), m * m));
    let mut st = JointState::from_amplitudes(m, amps)?;
    split_inverse_qft(&mut st);
    Ok(st.amplitudes()[..m * m].to_vec())
}

/// g^{(s)}, g^{(a)} after the split inverse QFT, plus the largest |Re g| / max|g|.
pub fn g_grids(egrid: &EGrid) -> Result<(Vec<C64>, Vec<C64>, f64)> {
    let gs = split_transform(&egrid.e_s, egrid.m)?;
    let ga = split_transform(&egrid.e_a, egrid.m)?;
    let peak = gs.iter().chain(&ga).fold(0.0f64, |a, v| a.max(v.norm()));
    let re = gs.iter().chain(&ga).fold(0.0f64, |a, v| a.max(v.re.abs()));
    Ok((gs, ga, if peak > 0.0 { re / peak } else { 0.0 }))
}

/// Multiply e_{n,m} onto both Q1 branches and renormalize.
pub fn inject_event(state: &mut JointState, env: &EnvelopeGrid) -> Result<()> {
    let m = state.size();
    if env.m != m {
        return Err(Error::Input("envelope size does not match the state".into()));
    }
    let mut amps = state.amplitudes().to_vec();
    for (i, a) in amps.iter_mut().enumerate() {
        *a *= env.e[i % (m * m)];
    }
    let mut next = JointState::from_amplitudes(m, amps)?;
    next.normalize().map_err(|_| Error::Sampling("event rejected: envelope vanishes on the grid".into()))?;
    *state = next;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTrial {
    pub eta: f64,
    /// Im(c_a/c_s) left after the pass (zero for an exact ISN).
    pub imag: f64,
    pub q2_bit: u8,
    pub n_tilde: i64,
    pub m_hat: i64,
}

/// One electron carrying `event` through Steps 2–10 with Q1 = |s̄⟩.
pub fn single_event_trial(
    builder: &EnvelopeBuilder,
    event: &DipoleEvent,
    opts: &ProtocolOptions,
    rng: &mut Rng,
) -> Result<EventTrial> {
    let env = builder.envelope(event)?;
    let q1 = Q1State::from_alpha(C64::new(0.0, 0.0));
    let passage = Passage { specimen: None, envelope: Some(env.wrapped()) };
    let o = electron_pass(builder.m, q1, &passage, opts, rng)?;
    let ratio = o.q1.ratio();
    Ok(EventTrial { eta: ratio.re, imag: ratio.im, q2_bit: o.q2_bit, n_tilde: o.n_tilde, m_hat: o.m_hat })
}

/// Round of k electrons through `map`; electrons listed in `events` also
/// scatter inelastically. Returns the final Q1 and one η per event
/// (the jump in Re(c_a/c_s) caused by that electron).
pub fn isn_round(
    map: &PhaseMap,
    k: usize,
    events: &[(usize, DipoleEvent)],
    builder: &EnvelopeBuilder,
    alpha0: C64,
    opts: &ProtocolOptions,
    rng: &mut Rng,
) -> Result<(Q1State, Vec<f64>)> {
    if builder.m != map.size() {
        return Err(Error::Input("builder grid does not match the phase map".into()));
    }
    let mut q1 = Q1State::from_alpha(alpha0);
    let mut etas = Vec::with_capacity(events.len());
    for e in 0..k {
        let env = events.iter().find(|(i, _)| *i == e).map(|(_, ev)| builder.envelope(ev)).transpose()?;
        let passage = Passage { specimen: Some(map), envelope: env.as_ref().map(|g| g.wrapped()) };
        let before = q1.ratio().re;
        q1 = electron_pass(map.size(), q1, &passage, opts, rng)?.q1;
        if env.is_some() {
            etas.push(q1.ratio().re - before);
        }
    }
    Ok((q1, etas))
}

/// Poisson(k·t/Λ) distinct electron indices in 0..k, sorted.
pub fn schedule_events(k: usize, t_over_lambda: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    let mean = k as f64 * t_over_lambda;
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::Domain("event rate must be non-negative".into()));
    }
    let count = if mean == 0.0 {
        0
    } else {
        Poisson::new(mean).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng) as usize
    };
    let mut idx = rand::seq::index::sample(rng, k, count.min(k)).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// rms over trials of Σ_{i<w} ±μ with independent fair signs.
pub fn random_walk_accumulation(w: usize, mu: f64, trials: usize, rng: &mut Rng) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for _ in 0..trials {
        let s: f64 = (0..w).map(|_| if rng.random::<bool>() { mu } else { -mu }).sum();
        acc += s * s;
    }
    (acc / trials as f64).sqrt()
}

/// cos(2μ√(kt/Λ)).
pub fn signal_attenuation(k: f64, t: f64, lambda: f64, mu: f64) -> Result<f64> {
    if !(k >= 0.0 && t > 0.0 && lambda > 0.0 && mu >= 0.0) {
        return Err(Error::Domain("signal attenuation needs positive inputs".into()));
    }
    Ok((2.0 * mu * (k * t / lambda).sqrt()).cos())
}

/// Grid-search argmax of k·cos²(2μ√(k t/Λ)) over the first lobe.
pub fn numeric_k_opt(mu: f64, lambda_over_t: f64) -> Result<f64> {
    if !(mu > 0.0 && lambda_over_t > 0.0) {
        return Err(Error::Domain("numeric k_opt needs μ > 0 and Λ/t > 0".into()));
    }
    let upper = (PI / 2.0).powi(2) * lambda_over_t / (4.0 * mu * mu);
    let f = |k: f64| k * (2.0 * mu * (k / lambda_over_t).sqrt()).cos().powi(2);
    let n = 200_000;
    let mut best = (0.0, f64::MIN);
    for i in 1..n {
        let k = upper * i as f64 / n as f64;
        let v = f(k);
        if v > best.1 {
            best = (k, v);
        }
    }
    Ok(best.0)
}

/// Smallest power-of-two grid whose far-field lattice step β/M is at most `spacing_rad`.
pub fn isn_grid_size(beta_period: f64, spacing_rad: f64) -> usize {
    let need = (beta_period / spacing_rad).ceil().max(16.0) as usize;
    need.next_power_of_two()
}

/// η folded to the smaller of |h^a/h^s| and |h^s/h^a|, keeping its sign.
pub fn folded_eta(eta: f64) -> f64 {
    eta.signum() * eta.abs().min(1.0 / eta.abs())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|e| e * e).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct MuComparisonRow {
    pub beta: f64,
    pub m: usize,
    pub mu_analytic: f64,
    /// rms of the folded η
    pub rms_eta: f64,
    /// rms of the raw Re(c_a/c_s); dominated by pixels where h^s ≈ 0
    pub rms_eta_raw: f64,
    pub max_imag: f64,
    pub etas: Vec<f64>,
}

impl MuComparisonRow {
    pub fn ratio(&self) -> f64 {
        self.rms_eta / self.mu_analytic
    }
}

/// Single-event Monte Carlo of η at stripe period β (pitch σ = λ/β).
pub fn mu_comparison(
    beta_period: f64,
    m: usize,
    trials: usize,
    seed: u64,
    beam: &BeamModel,
    opts: &ProtocolOptions,
    env_opts: EnvelopeOptions,
) -> Result<MuComparisonRow> {
    let sigma = beam.wavelength_nm / beta_period;
    let builder = EnvelopeBuilder::new(m, sigma, beam, env_opts)?;
    let mu = mu_of_beta(beta_period, beam)?;
    let cell = builder.cell_nm();
    let trials: Vec<EventTrial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let ev = DipoleEvent::random(cell, beam.energy_loss_ev, &mut rng);
            single_event_trial(&builder, &ev, opts, &mut rng)
        })
        .collect::<Result<_>>()?;
    let etas: Vec<f64> = trials.iter().map(|t| t.eta).collect();
    let folded: Vec<f64> = etas.iter().map(|&e| folded_eta(e)).collect();
    let max_imag = trials.iter().fold(0.0f64, |a, t| a.max(t.imag.abs()));
    Ok(MuComparisonRow {
        beta: beta_period,
        m,
        mu_analytic: mu,
        rms_eta: rms(&folded),
        rms_eta_raw: rms(&etas),
        max_imag,
        etas,
    })
}

/// rms(Σ_{i<w} η_i) / (√w·rms(η)) with the w draws resampled from `etas`.
pub fn walk_ratio_bootstrap(etas: &[f64], w: usize, resamples: usize, rng: &mut Rng) -> Result<f64> {
    if etas.is_empty() || w == 0 || resamples == 0 {
        return Err(Error::Domain("walk bootstrap needs samples, w ≥ 1 and resamples ≥ 1".into()));
    }
    let mut acc = 0.0;
    for _ in 0..resamples {
        let s: f64 = (0..w).map(|_| etas[rng.random_range(0..etas.len())]).sum();
        acc += s * s;
    }
    Ok((acc / resamples as f64).sqrt() / ((w as f64).sqrt() * rms(etas)))
}

pub fn mu_comparison_csv(rows: &[MuComparisonRow]) -> String {
    let mut s = String::from("beta_mrad,M,mu_analytic,rms_eta_mc,ratio,rms_eta_raw\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            crate::fmt9(r.beta * 1e3),
            r.m,
            crate::fmt9(r.mu_analytic),
            crate::fmt9(r.rms_eta),
            crate::fmt9(r.ratio()),
            crate::fmt9(r.rms_eta_raw)
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkTrial {
    pub trial: usize,
    pub w: usize,
    pub eta_sum: f64,
    pub q1_fidelity: f64,
}

/// w events inside one round on a blank specimen, α₀ = 0: Σ η from the
/// simulated Q1 and its fidelity to |s̄⟩.
pub fn event_walk(
    builder: &EnvelopeBuilder,
    w: usize,
    trial: usize,
    seed: u64,
    opts: &ProtocolOptions,
) -> Result<WalkTrial> {
    let mut rng = stream(seed, trial as u64);
    let map = PhaseMap::zero(builder.m, builder.pitch_nm)?;
    let events: Vec<(usize, DipoleEvent)> =
        (0..w).map(|i| (i, DipoleEvent::random(builder.cell_nm(), builder.energy_loss_ev, &mut rng))).collect();
    let (q1, etas) = isn_round(&map, w.max(1), &events, builder, C64::new(0.0, 0.0), opts, &mut rng)?;
    let target = Q1State::from_alpha(C64::new(0.0, 0.0));
    Ok(WalkTrial { trial, w, eta_sum: etas.iter().sum(), q1_fidelity: q1.fidelity(&target) })
}

pub fn walk_trials_csv(rows: &[WalkTrial]) -> String {
    let mut s = String::from("trial,w,eta_sum,q1_fidelity\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.trial, r.w, crate::fmt9(r.eta_sum), crate::fmt9(r.q1_fidelity));
    }
    s
}
