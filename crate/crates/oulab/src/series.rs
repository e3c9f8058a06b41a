//! Truncated-series bookkeeping: partial sums paired with tail exponents.
//!
//! A truncated sum alone cannot certify convergence; verdicts here always
//! combine the numeric partial sum with the exponent of the k-th term,
//! either known analytically or fitted from the tail of the data.

use serde::Serialize;

/// Partial sum of a series together with the (analytic or fitted) exponent
/// `e` of its terms `a_k ~ k^e`; the series converges iff `e < -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedSum {
    pub partial_sum: f64,
    pub tail_exponent: f64,
    /// True when the exponent came from power-law inputs rather than a fit.
    pub exponent_is_analytic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Divergent,
    Inconclusive,
}

/// Margin around the critical exponent -1 inside which a fitted exponent
/// cannot be trusted.
const FIT_MARGIN: f64 = 0.05;

impl TruncatedSum {
    pub fn analytic(partial_sum: f64, tail_exponent: f64) -> Self {
        TruncatedSum {
            partial_sum,
            tail_exponent,
            exponent_is_analytic: true,
        }
    }

    /// Builds from explicit terms `a_k` (1-based k), fitting the exponent by
    /// a log-log regression over the last half of the nonzero terms.
    pub fn from_terms(terms: &[f64]) -> Self {
        TruncatedSum {
            partial_sum: terms.iter().sum(),
            tail_exponent: fit_log_slope(terms),
            exponent_is_analytic: false,
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.exponent_is_analytic {
            if self.tail_exponent < -1.0 {
                Verdict::Finite
            } else {
                Verdict::Divergent
            }
        } else if self.tail_exponent < -1.0 - FIT_MARGIN {
            Verdict::Finite
        } else if self.tail_exponent > -1.0 + FIT_MARGIN {
            Verdict::Divergent
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Least-squares slope of `log a_k` vs `log k` over the last half of the
/// strictly positive entries. Returns 0 when fewer than two usable points.
pub fn fit_log_slope(terms: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = terms
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| ((i as f64 + 1.0).ln(), a.ln()))
        .collect();
    if pts.len() < 4 {
        return 0.0;
    }
    slope(&pts[pts.len() / 2..])
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Median of a slice (averaging the two central order statistics).
pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_exponent_recovers_power_law() {
        let terms: Vec<f64> = (1..=500).map(|k| (k as f64).powf(-1.7)).collect();
        let s = TruncatedSum::from_terms(&terms);
        assert!((s.tail_exponent + 1.7).abs() < 0.01, "{}", s.tail_exponent);
        assert_eq!(s.verdict(), Verdict::Finite);
        let harmonic: Vec<f64> = (1..=500).map(|k| 1.0 / k as f64).collect();
        assert_eq!(
            TruncatedSum::from_terms(&harmonic).verdict(),
            Verdict::Inconclusive
        );
    }

    #[test]
    fn analytic_verdicts_are_strict() {
        assert_eq!(
            TruncatedSum::analytic(1.0, -1.0).verdict(),
            Verdict::Divergent
        );
        assert_eq!(
            TruncatedSum::analytic(1.0, -1.0001).verdict(),
            Verdict::Finite
        );
    }

    #[test]
    fn median_basic() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
