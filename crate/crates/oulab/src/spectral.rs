//! Drift operator modelled through its eigenbasis, with exact diagonal
//! semigroup action on truncated coefficient vectors.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Eigenbasis data of a negative self-adjoint drift: the `N` leading
/// eigenvalues `0 > lambda_1 >= lambda_2 >= ...` together with the spatial
/// dimension used for Weyl-exponent arithmetic. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    dim_d: usize,
    eigenvalues: Vec<f64>,
}

/// Coefficient vector `x_k = <x, e_k>` in the model's eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector(pub Vec<f64>);

impl CoefVector {
    pub fn zeros(n: usize) -> Self {
        CoefVector(vec![0.0; n])
    }

    /// `r * e_k` (1-based mode index).
    pub fn unit(n: usize, mode: usize, r: f64) -> Self {
        let mut v = vec![0.0; n];
        v[mode - 1] = r;
        CoefVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &CoefVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl SpectralModel {
    /// Builds a model from a custom spectrum; rejects non-negative or
    /// increasing eigenvalues and non-finite entries.
    pub fn new(dim_d: usize, eigenvalues: Vec<f64>) -> Result<Self> {
        if dim_d == 0 {
            return Err(Error::validation("dim_d must be >= 1"));
        }
        if eigenvalues.is_empty() {
            return Err(Error::validation("eigenvalues must be non-empty"));
        }
        for (k, &l) in eigenvalues.iter().enumerate() {
            if !l.is_finite() || l >= 0.0 {
                return Err(Error::validation(format!(
                    "eigenvalues[{k}] = {l} is not strictly negative and finite"
                )));
            }
            if k > 0 && l > eigenvalues[k - 1] {
                return Err(Error::validation(format!(
                    "eigenvalues must be non-increasing, violated at k={}",
                    k + 1
                )));
            }
        }
        Ok(SpectralModel { dim_d, eigenvalues })
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_k` with 1-based `k`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.eigenvalues[k - 1]
    }

    /// Time horizon treated as "t = infinity": `e^{2 lambda_1 t} < 1e-16`.
    pub fn effective_infinity(&self) -> f64 {
        (1e-16f64).ln() / (2.0 * self.eigenvalues[0])
    }

    /// Clamps a (possibly infinite) time to the effective horizon.
    pub fn clamp_time(&self, t: f64) -> f64 {
        if t.is_infinite() {
            self.effective_infinity()
        } else {
            t.min(self.effective_infinity())
        }
    }

    /// Diagonal semigroup action `(T_t x)_k = e^{lambda_k t} x_k`, `t >= 0`.
    pub fn semigroup_apply(&self, t: f64, x: &CoefVector) -> Result<CoefVector> {
        if !(t >= 0.0) {
            return Err(Error::validation(format!("semigroup time t = {t} < 0")));
        }
        if x.len() != self.truncation() {
            return Err(Error::validation(format!(
                "coefficient vector length {} != truncation {}",
                x.len(),
                self.truncation()
            )));
        }
        Ok(CoefVector(
            self.eigenvalues
                .iter()
                .zip(&x.0)
                .map(|(&l, &xk)| (l * t).exp() * xk)
                .collect(),
        ))
    }

    /// Export as CSV with header `k,lambda_k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,lambda_k")?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{:.17e}", k + 1, l)?;
        }
        Ok(())
    }

    /// Import from CSV produced by [`SpectralModel::write_csv`].
    pub fn read_csv<R: BufRead>(dim_d: usize, r: R) -> Result<Self> {
        let mut vals = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if i == 0 && line.starts_with("k,") {
                continue;
            }
            let mut parts = line.split(',');
            let _k = parts
                .next()
                .ok_or_else(|| Error::validation("missing k column"))?;
            let l: f64 = parts
                .next()
                .ok_or_else(|| Error::validation("missing lambda_k column"))?
                .trim()
                .parse()
                .map_err(|e| Error::validation(format!("bad lambda_k: {e}")))?;
            vals.push(l);
        }
        SpectralModel::new(dim_d, vals)
    }
}

/// The `N` smallest-magnitude Dirichlet eigenvalues of the unit box
/// `(0,1)^d`: `lambda = -pi^2 (m_1^2 + ... + m_d^2)` over multi-indices
/// `m in {1,2,...}^d`, duplicates kept with multiplicity and ties ordered
/// lexicographically by multi-index.
pub fn dirichlet_spectrum(d: usize, n: usize) -> Result<SpectralModel> {
    if d == 0 || n == 0 {
        return Err(Error::validation("dirichlet_spectrum requires d,N >= 1"));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    // Grow the enumeration box until the N-th smallest |m|^2 is certified
    // complete: any index outside {1..M}^d has |m|^2 > M^2.
    let mut m_max = (n as f64).powf(1.0 / d as f64).ceil() as u64 + d as u64;
    loop {
        let mut sums: Vec<(u64, Vec<u64>)> = Vec::new();
        let mut idx = vec![1u64; d];
        'enumerate: loop {
            let s: u64 = idx.iter().map(|&m| m * m).sum();
            sums.push((s, idx.clone()));
            for pos in (0..d).rev() {
                if idx[pos] < m_max {
                    idx[pos] += 1;
                    continue 'enumerate;
                }
                idx[pos] = 1;
            }
            break;
        }
        sums.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        if sums.len() >= n && sums[n - 1].0 <= m_max * m_max {
            let eig = sums[..n].iter().map(|(s, _)| -pi2 * *s as f64).collect();
            return SpectralModel::new(d, eig);
        }
        m_max *= 2;
    }
}

/// Outcome of the two-sided Weyl bound scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeylReport {
    /// Largest `C` in `(0,1)` with `-C^{-1} k^{2/d} <= lambda_k <= -C k^{2/d}`
    /// for all `k <= N`, or `None` when the scan ratio collapses below the
    /// feasibility floor (the spectrum does not follow the `k^{2/d}` growth).
    pub feasible_c: Option<f64>,
    /// Raw scan minimum before clipping.
    pub raw_min: f64,
}

/// Floor below which the scanned constant is reported as infeasible; a
/// two-sided Weyl constant this small means the growth exponent is wrong,
/// not merely the constant.
const WEYL_FLOOR: f64 = 1e-6;

pub fn verify_weyl(model: &SpectralModel) -> WeylReport {
    let d = model.dim_d() as f64;
    let mut c = f64::INFINITY;
    for (i, &l) in model.eigenvalues().iter().enumerate() {
        let k = (i + 1) as f64;
        let ratio = l.abs() / k.powf(2.0 / d);
        c = c.min(ratio).min(1.0 / ratio);
    }
    let feasible_c = if c > WEYL_FLOOR {
        Some(c.min(1.0 - f64::EPSILON))
    } else {
        None
    };
    WeylReport {
        feasible_c,
        raw_min: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

    #[test]
    fn dirichlet_interval_first_three() {
        let m = dirichlet_spectrum(1, 3).unwrap();
        let expect = [-PI2, -4.0 * PI2, -9.0 * PI2];
        for (a, b) in m.eigenvalues().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_square_first_three() {
        // Independent oracle: enumerate m in {1..4}^2, smallest |m|^2 are 2,5,5.
        let mut sums: Vec<u64> = (1..=4u64)
            .flat_map(|a| (1..=4u64).map(move |b| a * a + b * b))
            .collect();
        sums.sort();
        assert_eq!(&sums[..3], &[2, 5, 5]);
        let m = dirichlet_spectrum(2, 3).unwrap();
        let expect = [-2.0 * PI2, -5.0 * PI2, -5.0 * PI2];
        for (a, b) in m.eigenvalues().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_single() {
        let m = dirichlet_spectrum(1, 1).unwrap();
        assert!((m.lambda(1) + PI2).abs() < 1e-12);
    }

    #[test]
    fn weyl_interval_spectrum() {
        // lambda_k = -pi^2 k^2: both ratios are pi^2 and 1/pi^2, so C = 1/pi^2.
        let m = dirichlet_spectrum(1, 100).unwrap();
        let r = verify_weyl(&m);
        assert!((r.feasible_c.unwrap() - 1.0 / PI2).abs() < 1e-12);
    }

    #[test]
    fn weyl_linear_spectrum() {
        // lambda_k = -k in d=1: min over k of min(1/k, k) = 1/N.
        let n = 50;
        let m = SpectralModel::new(1, (1..=n).map(|k| -(k as f64)).collect()).unwrap();
        let r = verify_weyl(&m);
        assert!((r.feasible_c.unwrap() - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn weyl_log_spectrum_infeasible() {
        let n = 10_000;
        let m = SpectralModel::new(1, (1..=n).map(|k| -((k as f64) + 1.0).ln()).collect()).unwrap();
        let r = verify_weyl(&m);
        assert!(r.feasible_c.is_none(), "raw_min = {}", r.raw_min);
    }

    #[test]
    fn weyl_feasible_for_box_spectra() {
        for d in 1..=3usize {
            let m = dirichlet_spectrum(d, 10_000).unwrap();
            let r = verify_weyl(&m);
            assert!(r.feasible_c.is_some(), "d={d} raw_min={}", r.raw_min);
        }
    }

    #[test]
    fn semigroup_identity_and_decay() {
        let m = dirichlet_spectrum(1, 4).unwrap();
        let x = CoefVector(vec![1.0, -2.0, 0.5, 3.0]);
        let y = m.semigroup_apply(0.0, &x).unwrap();
        assert_eq!(x, y);
        let z = m
            .semigroup_apply(0.1, &CoefVector::unit(4, 1, 1.0))
            .unwrap();
        assert!((z.0[0] - (-PI2 * 0.1f64).exp()).abs() < 1e-12);
        assert!((z.0[0] - 0.37266).abs() < 1e-4);
    }

    #[test]
    fn csv_round_trip() {
        let m = dirichlet_spectrum(2, 17).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let m2 = SpectralModel::read_csv(2, buf.as_slice()).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(SpectralModel::new(1, vec![-1.0, 0.0]).is_err());
        assert!(SpectralModel::new(1, vec![-2.0, -1.0]).is_err());
        assert!(SpectralModel::new(0, vec![-1.0]).is_err());
        assert!(SpectralModel::new(1, vec![]).is_err());
        // ties are allowed
        assert!(SpectralModel::new(1, vec![-1.0, -1.0, -2.0]).is_ok());
    }

    proptest! {
        #[test]
        fn semigroup_law_and_contraction(
            t in 0.0..5.0f64,
            s in 0.0..5.0f64,
            coefs in proptest::collection::vec(-10.0..10.0f64, 6),
        ) {
            let m = dirichlet_spectrum(1, 6).unwrap();
            let x = CoefVector(coefs);
            let one = m.semigroup_apply(t + s, &x).unwrap();
            let two = m
                .semigroup_apply(t, &m.semigroup_apply(s, &x).unwrap())
                .unwrap();
            for (a, b) in one.0.iter().zip(&two.0) {
                let scale = a.abs().max(1e-300);
                prop_assert!((a - b).abs() / scale <= 1e-12);
            }
            prop_assert!(one.norm() <= x.norm() + 1e-12);
        }
    }
}
