//! Small numerical helpers shared across modules.

use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow for any finite input.
///
/// Saturates to exactly 0.0 or 1.0 only where the true value is closer to
/// the bound than f64 resolution (e.g. `expit(40.0) == 1.0`).
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// [`expit`] with a domain check on the input.
pub fn checked_expit(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("expit of non-finite value {x}")));
    }
    Ok(expit(x))
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the (n - 1) denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Sample median; for even lengths the midpoint of the two central values.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics
/// (the common "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Formats `v` with 17 significant digits (round-trip exact).
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_symmetry_and_saturation() {
        assert_eq!(expit(0.0), 0.5);
        let hi = expit(40.0);
        assert!(hi.is_finite() && hi <= 1.0 && 1.0 - hi < 1e-15);
        let lo = expit(-700.0);
        assert!(lo > 0.0 && lo < 1e-300);
        assert!(expit(700.0).is_finite());
        for x in [-30.0, -3.0, -0.1, 0.7, 5.0] {
            assert!((expit(x) + expit(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn expit_inverts_logit() {
        assert!((expit(logit(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn checked_expit_rejects_non_finite() {
        assert!(checked_expit(f64::NAN).is_err());
        assert!(checked_expit(f64::INFINITY).is_err());
        assert_eq!(checked_expit(0.0).unwrap(), 0.5);
    }

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn sig17_round_trips() {
        for v in [0.1, 58.123456789012345, -1e-7, 4.605170185988092] {
            let s = format_sig17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
