//! Log-gamma and its first two derivatives, by upward recurrence into the
//! asymptotic (Stirling) regime.

use crate::error::{Error, Result};

const SHIFT_TO: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub(crate) fn ln_gamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    while x < SHIFT_TO {
        shift += x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2 * (1.0 / 1188.0 + inv2 * (-691.0 / 360_360.0 + inv2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - shift
}

pub(crate) fn psi(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    while x < SHIFT_TO {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    x.ln() - 0.5 / x - series - shift
}

pub(crate) fn psi1(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    while x < SHIFT_TO {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + inv2 / 2.0
        + inv2
            * inv
            * (1.0 / 6.0
                + inv2
                    * (-1.0 / 30.0
                        + inv2
                            * (1.0 / 42.0
                                + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0 + inv2 * (-691.0 / 2730.0 + inv2 * 7.0 / 6.0))))));
    series + shift
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} requires x > 0, got {x}")))
    }
}

/// `ln Gamma(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    positive(x, "log_gamma")?;
    Ok(ln_gamma(x))
}

/// Digamma `psi(x) = d/dx ln Gamma(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    positive(x, "digamma")?;
    Ok(psi(x))
}

/// Trigamma `psi'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    positive(x, "trigamma")?;
    Ok(psi1(x))
}

/// `ln B(a, b)`.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        assert!((log_gamma(0.5).unwrap() - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
        assert!((log_gamma(100.0).unwrap() - 359.134_205_369_575_4).abs() < 1e-10);
        assert!((digamma(1.0).unwrap() + 0.577_215_664_901_532_9).abs() < 1e-13);
        assert!((trigamma(1.0).unwrap() - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(log_gamma(0.0).is_err());
        assert!(digamma(-1.0).is_err());
        assert!(trigamma(f64::NAN).is_err());
    }

    #[test]
    fn recurrences_hold() {
        let mut x = 0.5;
        while x <= 100.0 {
            assert!((ln_gamma(x + 1.0) - ln_gamma(x) - x.ln()).abs() < 1e-10, "x={x}");
            assert!((psi(x + 1.0) - psi(x) - 1.0 / x).abs() < 1e-10, "x={x}");
            assert!((psi1(x) - psi1(x + 1.0) - 1.0 / (x * x)).abs() < 1e-10, "x={x}");
            x += 0.37;
        }
    }

    #[test]
    fn agrees_with_statrs() {
        let mut x = 0.5;
        while x <= 100.0 {
            let lg = statrs::function::gamma::ln_gamma(x);
            assert!((ln_gamma(x) - lg).abs() < 1e-10, "x={x}");
            let dg = statrs::function::gamma::digamma(x);
            assert!((psi(x) - dg).abs() < 1e-10, "x={x}");
            x += 0.731;
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &x in &[0.6, 1.3, 4.0, 9.9, 10.1, 37.5] {
            let h = 1e-5;
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((fd - psi(x)).abs() < 1e-8);
            let fd = (psi(x + h) - psi(x - h)) / (2.0 * h);
            assert!((fd - psi1(x)).abs() < 1e-7);
        }
    }
}
