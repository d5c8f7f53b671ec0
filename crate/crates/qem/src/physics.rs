//! Radiation damage, dose budgets and relativistic beam quantities.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::roots;

/// Electron rest energy m_e c² in eV.
pub const ME_C2_EV: f64 = 510_998.95;
/// h c in eV·nm.
pub const HC_EV_NM: f64 = 1_239.841_98;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamModel {
    pub kinetic_energy_ev: f64,
    pub energy_loss_ev: f64,
    pub wavelength_nm: f64,
    pub gamma: f64,
    pub beta_rel: f64,
    pub mean_free_path_nm: f64,
}

impl BeamModel {
    pub fn new(kinetic_energy_ev: f64, energy_loss_ev: f64, mean_free_path_nm: f64) -> Result<Self> {
        if !(kinetic_energy_ev > 0.0) || !kinetic_energy_ev.is_finite() {
            return Err(domain("kinetic energy must be positive"));
        }
        if !(energy_loss_ev >= 0.0) || !energy_loss_ev.is_finite() {
            return Err(domain("energy loss must be non-negative"));
        }
        if !(mean_free_path_nm > 0.0) {
            return Err(domain("mean free path must be positive"));
        }
        let gamma = 1.0 + kinetic_energy_ev / ME_C2_EV;
        let beta_rel = (1.0 - 1.0 / (gamma * gamma)).sqrt();
        let wavelength_nm = HC_EV_NM / (kinetic_energy_ev * (kinetic_energy_ev + 2.0 * ME_C2_EV)).sqrt();
        Ok(Self { kinetic_energy_ev, energy_loss_ev, wavelength_nm, gamma, beta_rel, mean_free_path_nm })
    }

    /// 300 keV electrons, 20 eV loss, Λ = 300 nm.
    pub fn standard() -> Self {
        Self::new(300e3, 20.0, 300.0).expect("default beam is valid")
    }

    /// Wave number along the optical axis, 2π/λ (nm⁻¹).
    pub fn k_z(&self) -> f64 {
        2.0 * PI / self.wavelength_nm
    }
}

impl Default for BeamModel {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseModel {
    pub damage_r_nm4: f64,
    pub zeta: f64,
    pub area_nm2: f64,
}

impl DoseModel {
    pub fn new(damage_r_nm4: f64, zeta: f64, area_nm2: f64) -> Result<Self> {
        if !(damage_r_nm4 > 0.0) {
            return Err(domain("R must be positive"));
        }
        if !(zeta > 0.0) {
            return Err(domain("zeta must be positive"));
        }
        if !(area_nm2 > 0.0) {
            return Err(domain("area must be positive"));
        }
        Ok(Self { damage_r_nm4, zeta, area_nm2 })
    }
}

impl Default for DoseModel {
    fn default() -> Self {
        Self { damage_r_nm4: 7e-4, zeta: 0.064, area_nm2: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageState {
    pub fluence_nm2: f64,
    pub b_factor_nm2: f64,
    pub std_displacement_nm: f64,
}

impl DamageState {
    pub fn from_fluence(fluence_nm2: f64, model: &DoseModel) -> Result<Self> {
        if !(fluence_nm2 >= 0.0) {
            return Err(domain("fluence must be non-negative"));
        }
        let b = model.damage_r_nm4 * fluence_nm2;
        Ok(Self { fluence_nm2, b_factor_nm2: b, std_displacement_nm: (b / (8.0 * PI * PI)).sqrt() })
    }
}

pub fn damage_attenuation(q_per_nm: f64, fluence: f64, model: &DoseModel) -> Result<f64> {
    if !(q_per_nm >= 0.0) || !(fluence >= 0.0) {
        return Err(domain("q and fluence must be non-negative"));
    }
    Ok((-model.damage_r_nm4 * fluence * q_per_nm * q_per_nm / (8.0 * PI * PI)).exp())
}

pub fn amplitude_decay_f0(sigma_nm: f64, model: &DoseModel) -> Result<f64> {
    check_sigma(sigma_nm)?;
    Ok(4.0 * sigma_nm * sigma_nm / model.damage_r_nm4)
}

/// Positive root of e^β = 2β + 1 and ζ = β/(2π²).
pub fn solve_zeta() -> (f64, f64) {
    let beta = roots::bracketed_root(zeta_residual, |b| b.exp() - 2.0, 0.5, 3.0)
        .expect("e^b - 2b - 1 changes sign on [0.5, 3]");
    (beta, beta / (2.0 * PI * PI))
}

pub fn zeta_residual(beta: f64) -> f64 {
    beta.exp() - 2.0 * beta - 1.0
}

/// Var(θ̂₀) = β/(kAF₀(1−e^{−β})²) with β = F/F₀.
pub fn estimator_variance(beta_ratio: f64, k: u32, area: f64, f0: f64) -> Result<f64> {
    if !(beta_ratio > 0.0) {
        return Err(domain("beta must be positive"));
    }
    if k == 0 || !(area > 0.0) || !(f0 > 0.0) {
        return Err(domain("k, A and F0 must be positive"));
    }
    let d = 1.0 - (-beta_ratio).exp();
    Ok(beta_ratio / (f64::from(k) * area * f0 * d * d))
}

pub fn fluence_opt(sigma_nm: f64, model: &DoseModel) -> Result<f64> {
    check_sigma(sigma_nm)?;
    Ok(model.zeta * 8.0 * PI * PI * sigma_nm * sigma_nm / model.damage_r_nm4)
}

/// N_sq = ζ·8πσ⁴/R, electrons available per reciprocal-space square at resolution σ.
pub fn dose_budget_nsq(sigma_nm: f64, model: &DoseModel) -> Result<f64> {
    check_sigma(sigma_nm)?;
    Ok(model.zeta * 8.0 * PI * sigma_nm.powi(4) / model.damage_r_nm4)
}

/// Fluence allotted to the ring [q, q+Δq]: ΔF = ζ·64π⁴Δq/(Rq³).
pub fn band_fluence(q_per_nm: f64, dq_per_nm: f64, model: &DoseModel) -> Result<f64> {
    if !(q_per_nm > 0.0) || !(dq_per_nm > 0.0) {
        return Err(domain("q and dq must be positive"));
    }
    Ok(model.zeta * 64.0 * PI.powi(4) * dq_per_nm / (model.damage_r_nm4 * q_per_nm.powi(3)))
}

/// Characteristic inelastic angle E/(γ m c² β²) in radians.
pub fn theta_e(beam: &BeamModel) -> f64 {
    beam.energy_loss_ev / (beam.gamma * ME_C2_EV * beam.beta_rel * beam.beta_rel)
}

/// Bethe-ridge cutoff sqrt(2θ_E/γ).
pub fn bethe_ridge_angle(beam: &BeamModel) -> f64 {
    (2.0 * theta_e(beam) / beam.gamma).sqrt()
}

fn check_sigma(sigma_nm: f64) -> Result<()> {
    if !(sigma_nm > 0.0) || !sigma_nm.is_finite() {
        return Err(domain("sigma must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wavelength_300kev() {
        let b = BeamModel::standard();
        assert!((b.wavelength_nm / 1.97e-3 - 1.0).abs() < 5e-3);
        assert!(b.gamma > 1.0 && b.beta_rel < 1.0);
    }

    #[test]
    fn attenuation_e_inverse() {
        let m = DoseModel::default();
        let f = 8.0 * PI * PI / (7e-4 * 1.0);
        let v = damage_attenuation(1.0, f, &m).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(damage_attenuation(0.0, 1e9, &m).unwrap(), 1.0);
        assert_eq!(damage_attenuation(3.0, 0.0, &m).unwrap(), 1.0);
        assert!(damage_attenuation(-1.0, 1.0, &m).is_err());
    }

    #[test]
    fn f0_values() {
        let m = DoseModel::default();
        let f1 = amplitude_decay_f0(1.0, &m).unwrap();
        assert!((f1 - 5714.285714285714).abs() < 1e-9);
        assert!((amplitude_decay_f0(2.0, &m).unwrap() / f1 - 4.0).abs() < 1e-12);
        assert!((amplitude_decay_f0(0.5, &m).unwrap() / f1 - 0.25).abs() < 1e-12);
        assert!(amplitude_decay_f0(0.0, &m).is_err());
    }

    #[test]
    fn zeta_root() {
        let (b, z) = solve_zeta();
        assert!(zeta_residual(b).abs() < 1e-12);
        assert!((b - 1.26).abs() < 5e-3);
        assert!((z - 0.064).abs() < 5e-4);
        let bis = roots::bisect(zeta_residual, 0.5, 3.0, 1e-13).unwrap();
        assert!((bis - b).abs() < 1e-10);
    }

    #[test]
    fn variance_minimum_at_beta_opt() {
        let (b, _) = solve_zeta();
        let v0 = estimator_variance(b, 1, 1.0, 1.0).unwrap();
        for i in 1..=10_000 {
            let beta = i as f64 * 1e-3;
            assert!(estimator_variance(beta, 1, 1.0, 1.0).unwrap() / v0 >= 1.0 - 1e-15);
        }
        let v1 = estimator_variance(0.7, 1, 2.0, 3.0).unwrap();
        let v2 = estimator_variance(0.7, 2, 2.0, 3.0).unwrap();
        assert!((v1 / v2 - 2.0).abs() < 1e-12);
        assert!(estimator_variance(0.0, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn fluence_opt_matches_beta_f0() {
        let m = DoseModel::default();
        let fo = fluence_opt(1.0, &m).unwrap();
        assert!((fo - 0.064 * 8.0 * PI * PI / 7e-4).abs() < 1e-9);
        let f0 = amplitude_decay_f0(1.0, &m).unwrap();
        assert!((fo / f0 - 2.0 * PI * PI * 0.064).abs() < 1e-12);
    }

    #[test]
    fn nsq_values() {
        let m = DoseModel::default();
        let n = dose_budget_nsq(1.0, &m).unwrap();
        assert!((n / 2.3e3 - 1.0).abs() < 0.01);
        assert!((dose_budget_nsq(2.0, &m).unwrap() / n - 16.0).abs() < 1e-12);
    }

    #[test]
    fn band_fluence_reproduces_nsq() {
        // A reciprocal-space square of side Δq = 2π/√A at q = 2π/σ holds a
        // fraction Δq/(2πq) of the ring.
        for &a in &[1.0, 10.0, 100.0] {
            let m = DoseModel { area_nm2: a, ..DoseModel::default() };
            let sigma: f64 = 1.3;
            let q = 2.0 * PI / sigma;
            let dq = 2.0 * PI / f64::sqrt(a);
            let df = band_fluence(q, dq, &m).unwrap();
            let f_sq = df / (2.0 * PI * q / dq);
            let n = f_sq * a;
            let direct = dose_budget_nsq(sigma, &m).unwrap();
            assert!((n / direct - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_e_and_cutoff() {
        let b = BeamModel::standard();
        let te = theta_e(&b);
        assert!((te * 1e6 - 41.0).abs() < 1.0, "{te}");
        assert!((bethe_ridge_angle(&b) * 1e3 - 7.2).abs() < 0.1);
        let z = BeamModel::new(300e3, 0.0, 300.0).unwrap();
        assert_eq!(theta_e(&z), 0.0);
        assert_eq!(bethe_ridge_angle(&z), 0.0);
        let slow = BeamModel::new(10.0, 1e-3, 300.0).unwrap();
        assert!((theta_e(&slow) / (1e-3 / 20.0) - 1.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn attenuation_log_exact(q in 0.0f64..20.0, f in 0.0f64..1e5) {
            let m = DoseModel::default();
            let v = damage_attenuation(q, f, &m).unwrap();
            let expect = -m.damage_r_nm4 * f * q * q / (8.0 * PI * PI);
            prop_assert!((v.ln() - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            let v2 = damage_attenuation(q + 0.1, f, &m).unwrap();
            prop_assert!(v2 <= v);
            let v3 = damage_attenuation(q, f + 10.0, &m).unwrap();
            prop_assert!(v3 <= v);
        }

        #[test]
        fn damage_state_identity(f in 0.0f64..1e5) {
            let m = DoseModel::default();
            let s = DamageState::from_fluence(f, &m).unwrap();
            prop_assert_eq!(s.b_factor_nm2, m.damage_r_nm4 * f);
            let d2 = s.std_displacement_nm * s.std_displacement_nm;
            prop_assert!((d2 - s.b_factor_nm2 / (8.0 * PI * PI)).abs() <= 1e-12 * d2.max(1e-300));
        }
    }
}
