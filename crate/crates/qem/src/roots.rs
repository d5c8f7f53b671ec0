use crate::error::{Error, Result};

/// Bisection on a sign-changing bracket. Stops when the bracket is narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numeric(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < tol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn newton<F, D>(f: F, df: D, mut x: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    for _ in 0..100 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Numeric("vanishing derivative in Newton iteration".into()));
        }
        let step = f(x) / d;
        x -= step;
        if step.abs() <= tol * x.abs().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::Numeric("Newton iteration did not converge".into()))
}

/// Coarse bisection followed by Newton polishing inside the bracket.
pub fn bracketed_root<F, D>(f: F, df: D, lo: f64, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let x0 = bisect(&f, lo, hi, 1e-6)?;
    let x = newton(&f, &df, x0, 1e-15)?;
    if !(lo..=hi).contains(&x) {
        return Err(Error::Numeric("Newton left the bracket".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let r = bracketed_root(|x| x * x - 2.0, |x| 2.0 * x, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_err());
    }
}
