//! Simulation suite for spatial-frequency-selective quantum electron
//! microscopy: dose budgets, the entangled measurement protocol on an exact
//! statevector, inelastic scattering neutralization, image-noise synthesis
//! and classical reference schemes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical_baselines;
pub mod cli;
pub mod error;
pub mod fft;
pub mod imaging;
pub mod inelastic_sim;
pub mod isn_analysis;
pub mod physics;
pub mod qsim;
pub mod rng;
pub mod roots;

pub use error::{Error, Result};

/// Format with 9 significant digits.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{:.8e}", v)
    }
}

/// Compact numeric label for column names (10 -> "10", 7.5 -> "7.5").
pub fn fmt_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digits() {
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(2298.36), "2298.36");
        assert_eq!(fmt9(-1.5e-7), "-1.50000000e-7");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(f64::INFINITY), "inf");
        assert_eq!(fmt9(123456789.4), "123456789");
        let x = 0.000123456789123;
        assert_eq!(fmt9(x).parse::<f64>().unwrap(), 0.000123456789);
    }

    #[test]
    fn labels() {
        assert_eq!(fmt_label(10.0), "10");
        assert_eq!(fmt_label(7.5), "7.5");
    }
}
