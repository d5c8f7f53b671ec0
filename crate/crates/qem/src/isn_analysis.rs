//! Analytic quantities for inelastic scattering neutralization: the dipole
//! profile, stripe-set integrals giving μ(β), the ξ root, repetition plans and
//! phase-noise spectra.

use std::f64::consts::{E, PI};

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::physics::{self, BeamModel, DoseModel};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeGeometry {
    pub beta_period: f64,
    pub cutoff: f64,
    pub theta_e: f64,
}

impl StripeGeometry {
    pub fn new(beta_period: f64, cutoff: f64, theta_e: f64) -> Result<Self> {
        if !(beta_period > 0.0) || !(cutoff > 0.0) || !(theta_e > 0.0) {
            return Err(domain("stripe geometry needs positive period, cutoff and theta_E"));
        }
        Ok(Self { beta_period, cutoff, theta_e })
    }

    pub fn for_beam(beta_period: f64, beam: &BeamModel) -> Result<Self> {
        Self::new(beta_period, physics::bethe_ridge_angle(beam), physics::theta_e(beam))
    }

    /// Membership in the A stripes, frac(β_x/period) ∈ (1/4, 3/4).
    pub fn in_a(&self, beta_x: f64) -> bool {
        let f = (beta_x / self.beta_period).rem_euclid(1.0);
        f > 0.25 && f < 0.75
    }

    /// Closed form of the full-disc integral of Φ: π·ln(1 + θ_c²/θ_E²).
    pub fn full_disc_closed_form(&self) -> f64 {
        PI * (1.0 + (self.cutoff / self.theta_e).powi(2)).ln()
    }
}

pub fn dipole_profile(beta_x: f64, beta_y: f64, theta_e: f64, cutoff: f64) -> f64 {
    let b2 = beta_x * beta_x + beta_y * beta_y;
    if b2 < cutoff * cutoff {
        1.0 / (b2 + theta_e * theta_e)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Midpoint sum on a polar grid, radial variable u = ln(β² + θ_E²).
    Polar { n_r: usize, n_phi: usize },
    /// Exact angular measure of the stripes, Gauss–Legendre panels in β split at
    /// every radius where a stripe edge becomes tangent to the circle.
    Panels { nodes: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Polar { n_r: 2048, n_phi: 2048 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeIntegrals {
    pub a: f64,
    pub s: f64,
    pub full: f64,
}

impl StripeIntegrals {
    pub fn mu(&self) -> f64 {
        (self.a / self.s).sqrt()
    }
}

pub fn stripe_integrals(geom: &StripeGeometry, quad: Quadrature) -> StripeIntegrals {
    match quad {
        Quadrature::Polar { n_r, n_phi } => polar_integrals(geom, n_r, n_phi),
        Quadrature::Panels { nodes } => {
            let a = panel_integral_a(geom, nodes);
            let full = geom.full_disc_closed_form();
            StripeIntegrals { a, s: full - a, full }
        }
    }
}

fn polar_integrals(geom: &StripeGeometry, n_r: usize, n_phi: usize) -> StripeIntegrals {
    let te2 = geom.theta_e * geom.theta_e;
    let u0 = te2.ln();
    let u1 = (geom.cutoff * geom.cutoff + te2).ln();
    let du = (u1 - u0) / n_r as f64;
    let dphi = 2.0 * PI / n_phi as f64;
    let cos_tab: Vec<f64> = (0..n_phi).map(|j| ((j as f64 + 0.5) * dphi).cos()).collect();
    let (a, s) = (0..n_r)
        .into_par_iter()
        .map(|i| {
            let u = u0 + (i as f64 + 0.5) * du;
            let beta = (u.exp() - te2).max(0.0).sqrt();
            let hits = cos_tab.iter().filter(|&&c| geom.in_a(beta * c)).count();
            // ∫Φ β dβ = ½ du on each radial cell
            let w = 0.5 * du * dphi;
            (w * hits as f64, w * (n_phi - hits) as f64)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    StripeIntegrals { a, s, full: a + s }
}

/// Angular measure of {φ : β cosφ ∈ A}.
fn arc_measure_a(geom: &StripeGeometry, beta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let p = geom.beta_period;
    let jmax = (beta / p).ceil() as i64 + 1;
    let ac = |x: f64| (x / beta).clamp(-1.0, 1.0).acos();
    let mut m = 0.0;
    for j in -jmax..=jmax {
        let lo = p * (j as f64 + 0.25);
        let hi = p * (j as f64 + 0.75);
        if hi <= -beta || lo >= beta {
            continue;
        }
        m += 2.0 * (ac(lo) - ac(hi));
    }
    m
}

fn panel_integral_a(geom: &StripeGeometry, nodes: usize) -> f64 {
    let p = geom.beta_period;
    let mut breaks = vec![0.0];
    let mut j = 0usize;
    loop {
        let b = p * (j as f64 * 0.5 + 0.25);
        if b >= geom.cutoff {
            break;
        }
        breaks.push(b);
        j += 1;
    }
    breaks.push(geom.cutoff);
    let (xs, ws) = gauss_legendre(nodes);
    let te2 = geom.theta_e * geom.theta_e;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (b0, b1) = (w[0], w[1]);
        let h = b1 - b0;
        // β = b0 + h s², absorbs the square-root onset at b0
        let mut acc = 0.0;
        for (x, wt) in xs.iter().zip(&ws) {
            let s = 0.5 * (x + 1.0);
            let beta = b0 + h * s * s;
            let jac = 2.0 * h * s * 0.5;
            acc += wt * jac * beta / (beta * beta + te2) * arc_measure_a(geom, beta);
        }
        total += acc;
    }
    total
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// μ = sqrt(∫_AΦ / ∫_SΦ) for stripes of period `beta_period`.
pub fn mu_of_beta(beta_period: f64, beam: &BeamModel) -> Result<f64> {
    let geom = StripeGeometry::for_beam(beta_period, beam)?;
    let fine = stripe_integrals(&geom, Quadrature::Panels { nodes: 96 });
    let coarse = stripe_integrals(&geom, Quadrature::Panels { nodes: 48 });
    let (mf, mc) = (fine.mu(), coarse.mu());
    if !mf.is_finite() || (mf - mc).abs() > 1e-6 * mf.max(1e-300) && (mf - mc).abs() > 1e-14 {
        return Err(Error::Numeric(format!("mu quadrature did not converge at period {beta_period}: {mf} vs {mc}")));
    }
    Ok(mf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiSolution {
    pub xi: f64,
    pub cos_xi: f64,
    pub xi_sq: f64,
}

/// Root of tanξ = 1/ξ in (0, π/2).
pub fn solve_xi() -> XiSolution {
    let f = |x: f64| x.tan() - 1.0 / x;
    let df = |x: f64| 1.0 / (x.cos() * x.cos()) + 1.0 / (x * x);
    let xi = roots::bracketed_root(f, df, 0.5, 1.5).expect("tan x - 1/x changes sign on [0.5, 1.5]");
    XiSolution { xi, cos_xi: xi.cos(), xi_sq: xi * xi }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepetitionPlan {
    pub k1: f64,
    pub k2: f64,
    pub k_opt: f64,
    pub k1_tilde: f64,
    pub k2_tilde: f64,
    pub mu: f64,
    pub xi: f64,
    pub n_sq: f64,
}

impl RepetitionPlan {
    /// Assemble a plan from k₁ = Λ/t, μ and N_sq.
    pub fn from_parts(k1: f64, mu: f64, n_sq: f64) -> Self {
        let xs = solve_xi();
        let k2 = if mu > 0.0 { xs.xi_sq * k1 / (4.0 * mu * mu) } else { f64::INFINITY };
        let k_opt = k2.max(k1);
        let k1_tilde = k1.min(n_sq).max(E);
        let k2_tilde = k_opt.min(n_sq).max(1.0 / (xs.cos_xi * xs.cos_xi));
        Self { k1, k2, k_opt, k1_tilde, k2_tilde, mu, xi: xs.xi, n_sq }
    }
}

pub fn plan_repetition(t_nm: f64, beam: &BeamModel, sigma_nm: f64, dose: &DoseModel) -> Result<RepetitionPlan> {
    if !(t_nm > 0.0) || !(sigma_nm > 0.0) {
        return Err(domain("thickness and sigma must be positive"));
    }
    let mu = mu_of_beta(beam.wavelength_nm / sigma_nm, beam)?;
    let n_sq = physics::dose_budget_nsq(sigma_nm, dose)?;
    Ok(RepetitionPlan::from_parts(beam.mean_free_path_nm / t_nm, mu, n_sq))
}

pub fn snr_improvement_no_isn(k1: f64) -> Result<f64> {
    if !(k1 > 0.0) {
        return Err(domain("k1 must be positive"));
    }
    Ok((k1 / E).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Classical,
    Qem,
    QemIsn,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Classical => "classical",
            NoiseKind::Qem => "qem",
            NoiseKind::QemIsn => "qem_isn",
        }
    }
}

/// Classical shot-noise amplitude 1/sqrt(N_sq) expressed through β = λ/σ.
pub fn classical_noise(beta: f64, beam: &BeamModel, dose: &DoseModel) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let l2 = beam.wavelength_nm * beam.wavelength_nm;
    (dose.damage_r_nm4 / (8.0 * PI * dose.zeta)).sqrt() * beta * beta / l2
}

/// Δθ(β) for the given kind; `plan` must be evaluated at the same β.
pub fn noise_spectrum(kind: NoiseKind, beta: f64, plan: &RepetitionPlan, beam: &BeamModel, dose: &DoseModel) -> f64 {
    let c = classical_noise(beta, beam, dose);
    match kind {
        NoiseKind::Classical => c,
        NoiseKind::Qem => (E / plan.k1_tilde).sqrt() * c,
        NoiseKind::QemIsn => c / (plan.k2_tilde.sqrt() * plan.xi.cos()),
    }
}

/// Tabulated μ(β) with linear interpolation, for evaluating spectra on dense grids.
#[derive(Debug, Clone)]
pub struct MuTable {
    pub betas: Vec<f64>,
    pub mus: Vec<f64>,
}

impl MuTable {
    pub fn build(beta_max: f64, points: usize, beam: &BeamModel) -> Result<Self> {
        if points < 2 || !(beta_max > 0.0) {
            return Err(domain("mu table needs at least two points and a positive range"));
        }
        let betas: Vec<f64> = (0..points).map(|i| beta_max * (i as f64 + 1.0) / points as f64).collect();
        let mus = betas.par_iter().map(|&b| mu_of_beta(b, beam)).collect::<Result<Vec<f64>>>()?;
        Ok(Self { betas, mus })
    }

    pub fn mu(&self, beta: f64) -> f64 {
        let b = &self.betas;
        if beta <= b[0] {
            return self.mus[0];
        }
        if beta >= b[b.len() - 1] {
            return self.mus[b.len() - 1];
        }
        let i = b.partition_point(|&x| x <= beta) - 1;
        let t = (beta - b[i]) / (b[i + 1] - b[i]);
        self.mus[i] * (1.0 - t) + self.mus[i + 1] * t
    }

    pub fn plan_at(&self, beta: f64, k1: f64, beam: &BeamModel, dose: &DoseModel) -> RepetitionPlan {
        let n_sq = if beta > 0.0 {
            physics::dose_budget_nsq(beam.wavelength_nm / beta, dose).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        RepetitionPlan::from_parts(k1, self.mu(beta), n_sq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Row {
    pub beta: f64,
    pub k_opt: Vec<f64>,
    pub n_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Table {
    pub lambda_over_t: Vec<f64>,
    pub rows: Vec<Figure2Row>,
}

impl Figure2Table {
    pub fn header(&self) -> String {
        let mut h = String::from("beta_mrad");
        for l in &self.lambda_over_t {
            h.push_str(&format!(",k_opt_L{}", crate::fmt_label(*l)));
        }
        h.push_str(",n_sq");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&crate::fmt9(r.beta * 1e3));
            for k in &r.k_opt {
                out.push(',');
                out.push_str(&crate::fmt9(*k));
            }
            out.push(',');
            out.push_str(&crate::fmt9(r.n_sq));
            out.push('\n');
        }
        out
    }
}

pub fn figure2_curves(
    beta_grid: &[f64],
    lambda_over_t: &[f64],
    beam: &BeamModel,
    dose: &DoseModel,
) -> Result<Figure2Table> {
    if beta_grid.is_empty() || lambda_over_t.is_empty() {
        return Err(domain("figure grids must be non-empty"));
    }
    let rows = beta_grid
        .par_iter()
        .map(|&beta| {
            let sigma = beam.wavelength_nm / beta;
            let k_opt = lambda_over_t
                .iter()
                .map(|&lt| plan_repetition(beam.mean_free_path_nm / lt, beam, sigma, dose).map(|p| p.k_opt))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Figure2Row { beta, k_opt, n_sq: physics::dose_budget_nsq(sigma, dose)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Figure2Table { lambda_over_t: lambda_over_t.to_vec(), rows })
}

/// β grid used by the default Fig. 2 run: 0.5 to 12 mrad in 0.25 mrad steps.
pub fn default_figure2_grid() -> Vec<f64> {
    (2..=48).map(|i| i as f64 * 0.25e-3).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn profile_values() {
        let (te, tc) = (4.1e-5, 7.2e-3);
        assert_eq!(dipole_profile(0.0, 0.0, te, tc), 1.0 / (te * te));
        assert_eq!(dipole_profile(8e-3, 0.0, te, tc), 0.0);
        assert!((dipole_profile(te, 0.0, te, tc) - 0.5 / (te * te)).abs() < 1e-3);
    }

    #[test]
    fn xi_values() {
        let x = solve_xi();
        assert!((x.xi.tan() - 1.0 / x.xi).abs() < 1e-12);
        assert!(x.xi > 0.85 && x.xi < 0.87);
        assert!((x.xi_sq - 0.74).abs() < 5e-3);
        assert!((x.cos_xi - 0.65).abs() < 5e-3);
        assert!((1.0 / (x.cos_xi * x.cos_xi) - 2.35).abs() < 0.01);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn polar_full_disc_matches_closed_form() {
        let beam = BeamModel::standard();
        let g = StripeGeometry::for_beam(4e-3, &beam).unwrap();
        let i = stripe_integrals(&g, Quadrature::default());
        assert!((i.full / g.full_disc_closed_form() - 1.0).abs() < 1e-6);
        assert!(((i.a + i.s) / i.full - 1.0).abs() < 1e-12);
    }

    #[test]
    fn panel_and_polar_agree() {
        let beam = BeamModel::standard();
        for &p in &[1e-3, 2e-3, 4e-3, 8e-3] {
            let g = StripeGeometry::for_beam(p, &beam).unwrap();
            let a = stripe_integrals(&g, Quadrature::default()).mu();
            let b = stripe_integrals(&g, Quadrature::Panels { nodes: 96 }).mu();
            assert!((a / b - 1.0).abs() < 1e-4, "{p}: {a} vs {b}");
        }
    }

    #[test]
    fn mu_vanishes_for_wide_period() {
        let beam = BeamModel::standard();
        let tc = physics::bethe_ridge_angle(&beam);
        assert_eq!(mu_of_beta(4.5 * tc, &beam).unwrap(), 0.0);
    }

    #[test]
    fn mu_decreasing_1_to_10_mrad() {
        let beam = BeamModel::standard();
        let mut last = f64::INFINITY;
        for i in 0..=36 {
            let b = 1e-3 + i as f64 * 0.25e-3;
            let m = mu_of_beta(b, &beam).unwrap();
            assert!(m > 0.0 && m < 1.0);
            assert!(m < last, "mu not decreasing at {b}: {m} >= {last}");
            last = m;
        }
    }

    #[test]
    fn plan_examples() {
        let beam = BeamModel::standard();
        let dose = DoseModel::default();
        let p = plan_repetition(30.0, &beam, 1.0, &dose).unwrap();
        assert!((p.k1 - 10.0).abs() < 1e-12);
        let p = plan_repetition(60.0, &beam, 1.0, &dose).unwrap();
        assert!((p.k1 - 5.0).abs() < 1e-12);
        let xi = solve_xi().xi;
        let p = RepetitionPlan::from_parts(10.0, xi / 2.0, 1e4);
        assert!((p.k2 - p.k1).abs() < 1e-9);
    }

    #[test]
    fn snr_values() {
        assert!((snr_improvement_no_isn(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((snr_improvement_no_isn(10.0).unwrap() - (10.0 / E).sqrt()).abs() < 1e-15);
        assert!((snr_improvement_no_isn(100.0).unwrap() - 6.0653).abs() < 1e-3);
    }

    #[test]
    fn classical_noise_values() {
        let beam = BeamModel::standard();
        let dose = DoseModel::default();
        let v = classical_noise(1e-3, &beam, &dose);
        assert!((v * 186.0 - 1.0).abs() < 0.01);
        let v = classical_noise(19.5e-3, &beam, &dose);
        assert!((v / (19.5f64.powi(2) / 186.0) - 1.0).abs() < 0.01);
        assert_eq!(classical_noise(0.0, &beam, &dose), 0.0);
        // general form 1/sqrt(N_sq(λ/β))
        let b = 3e-3;
        let n = physics::dose_budget_nsq(beam.wavelength_nm / b, &dose).unwrap();
        assert!((classical_noise(b, &beam, &dose) * n.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn figure2_shape() {
        let beam = BeamModel::standard();
        let dose = DoseModel::default();
        let t = figure2_curves(&default_figure2_grid(), &[10.0, 5.0], &beam, &dose).unwrap();
        assert_eq!(t.header(), "beta_mrad,k_opt_L10,k_opt_L5,n_sq");
        assert!(t.rows.iter().any(|r| (r.beta - 4e-3).abs() < 1e-12));
        for r in &t.rows {
            assert!(r.k_opt[0] > r.k_opt[1]);
        }
        for w in t.rows.windows(2) {
            let ratio = w[1].n_sq / w[0].n_sq;
            let expect = (w[0].beta / w[1].beta).powi(4);
            assert!((ratio / expect - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn plan_invariants(k1 in 0.1f64..200.0, mu in 0.0f64..0.99, n_sq in 0.01f64..1e5) {
            let p = RepetitionPlan::from_parts(k1, mu, n_sq);
            let floor2 = 1.0 / solve_xi().cos_xi.powi(2);
            prop_assert!(p.k2_tilde >= floor2 - 1e-12);
            prop_assert!(p.k1_tilde >= E);
            prop_assert!(p.k1_tilde <= n_sq.max(E));
            prop_assert!(p.k2_tilde <= n_sq.max(floor2));
            prop_assert_eq!(p.k_opt, p.k1.max(p.k2));
        }

        #[test]
        fn isn_never_harmful(k1 in 3.0f64..50.0, mu in 0.01f64..0.42, beta in 0.5e-3f64..20e-3) {
            let beam = BeamModel::standard();
            let dose = DoseModel::default();
            let n_sq = physics::dose_budget_nsq(beam.wavelength_nm / beta, &dose).unwrap();
            let p = RepetitionPlan::from_parts(k1, mu, n_sq);
            prop_assume!(p.k2 > p.k1);
            let q = noise_spectrum(NoiseKind::Qem, beta, &p, &beam, &dose);
            let qi = noise_spectrum(NoiseKind::QemIsn, beta, &p, &beam, &dose);
            prop_assert!(qi <= q * (1.0 + 1e-12));
        }
    }
}
