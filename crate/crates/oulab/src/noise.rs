//! Levy noise described through its characteristic exponent
//! `lambda(xi) = sum sigma1_k^2 xi_k^2 + (stable part)`, with exact
//! samplers for the Gaussian and symmetric alpha-stable building blocks.
//!
//! Stable scale convention: a scalar draw with scale `c` has characteristic
//! function `exp(-|c s|^alpha)`.

use crate::error::{Error, Result};
use crate::spectral::CoefVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    /// Stable part acts per mode: exponent `sum_k sigma2_k^alpha |xi_k|^alpha`.
    Diagonal,
    /// Stable part acts through the norm: exponent `(sum_k sigma2_k^2 xi_k^2)^{alpha/2}`.
    Elliptical,
}

/// Noise family, stability index and per-mode scales. `gamma1`/`gamma2`
/// record the power-law exponents when scales were generated as
/// `sigma_{i,k} = k^{gamma_i}`; tail-exponent arithmetic uses them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub family: NoiseFamily,
    pub sigma1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
}

impl NoiseSpec {
    pub fn new(
        alpha: f64,
        family: NoiseFamily,
        sigma1: Vec<f64>,
        sigma2: Vec<f64>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::validation(format!(
                "alpha = {alpha} must lie in (0,2)"
            )));
        }
        if sigma1.len() != sigma2.len() {
            return Err(Error::validation("sigma1 and sigma2 lengths differ"));
        }
        for (name, s) in [("sigma1", &sigma1), ("sigma2", &sigma2)] {
            if let Some((k, &v)) = s
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(Error::validation(format!(
                    "{name}[{k}] = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(NoiseSpec {
            alpha,
            family,
            sigma1,
            sigma2,
            gamma1: None,
            gamma2: None,
        })
    }

    /// Scales `sigma_{i,k} = k^{gamma_i}`; `None` turns a component off.
    pub fn from_power_laws(
        n: usize,
        alpha: f64,
        family: NoiseFamily,
        gamma1: Option<f64>,
        gamma2: Option<f64>,
    ) -> Result<Self> {
        let pow = |g: Option<f64>| -> Vec<f64> {
            match g {
                Some(g) => (1..=n).map(|k| (k as f64).powf(g)).collect(),
                None => vec![0.0; n],
            }
        };
        let mut spec = NoiseSpec::new(alpha, family, pow(gamma1), pow(gamma2))?;
        spec.gamma1 = gamma1;
        spec.gamma2 = gamma2;
        Ok(spec)
    }

    pub fn n_modes(&self) -> usize {
        self.sigma1.len()
    }

    pub fn is_zero(&self) -> bool {
        self.sigma1.iter().all(|&s| s == 0.0) && self.sigma2.iter().all(|&s| s == 0.0)
    }

    /// Gaussian part of the exponent: `sum sigma1_k^2 xi_k^2`.
    pub fn gaussian_part(&self, xi: &CoefVector) -> f64 {
        self.sigma1
            .iter()
            .zip(&xi.0)
            .map(|(&s, &x)| s * s * x * x)
            .sum()
    }

    /// Stable part of the exponent, per family.
    pub fn stable_part(&self, xi: &CoefVector) -> f64 {
        match self.family {
            NoiseFamily::Diagonal => self
                .sigma2
                .iter()
                .zip(&xi.0)
                .map(|(&s, &x)| s.powf(self.alpha) * x.abs().powf(self.alpha))
                .sum(),
            NoiseFamily::Elliptical => {
                let q: f64 = self
                    .sigma2
                    .iter()
                    .zip(&xi.0)
                    .map(|(&s, &x)| s * s * x * x)
                    .sum();
                q.powf(self.alpha / 2.0)
            }
        }
    }

    /// Characteristic exponent `lambda(xi) >= 0` (symmetric noise).
    pub fn characteristic_exponent(&self, xi: &CoefVector) -> Result<f64> {
        if xi.len() != self.n_modes() {
            return Err(Error::validation(format!(
                "xi length {} != noise modes {}",
                xi.len(),
                self.n_modes()
            )));
        }
        Ok(self.gaussian_part(xi) + self.stable_part(xi))
    }

    /// One draw of the elliptical stable component: `sqrt(2S) * G` with `G`
    /// per-mode Gaussian of standard deviation `sigma2_k` and `S` one-sided
    /// `(alpha/2)`-stable, realizing CF `exp(-(sum sigma2_k^2 xi_k^2)^{alpha/2})`.
    pub fn sample_elliptical_stable<R: Rng>(&self, rng: &mut R) -> Result<CoefVector> {
        if self.family != NoiseFamily::Elliptical {
            return Err(Error::validation(
                "sample_elliptical_stable requires the elliptical family",
            ));
        }
        if self.sigma2.iter().all(|&s| s == 0.0) {
            return Ok(CoefVector::zeros(self.n_modes()));
        }
        let s = sample_positive_stable(self.alpha / 2.0, rng)?;
        let amp = (2.0 * s).sqrt();
        Ok(CoefVector(
            self.sigma2
                .iter()
                .map(|&sig| {
                    let g: f64 = StandardNormal.sample(rng);
                    amp * sig * g
                })
                .collect(),
        ))
    }
}

/// Symmetric alpha-stable draw with CF `exp(-|scale * s|^alpha)` via the
/// Chambers-Mallows-Stuck transform. `alpha = 1` is the Cauchy branch,
/// `alpha >= 2 - 1e-9` the Gaussian branch (variance `2 scale^2`).
pub fn sample_sas<R: Rng>(alpha: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::validation(format!(
            "stable index alpha = {alpha} must lie in (0,2]"
        )));
    }
    if !(scale >= 0.0) {
        return Err(Error::validation(format!("scale = {scale} must be >= 0")));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    if alpha >= 2.0 - 1e-9 {
        let g: f64 = StandardNormal.sample(rng);
        return Ok(scale * std::f64::consts::SQRT_2 * g);
    }
    let u: f64 = rng.gen_range(-FRAC_PI_2 + 1e-12..FRAC_PI_2 - 1e-12);
    if (alpha - 1.0).abs() < 1e-9 {
        return Ok(scale * u.tan());
    }
    let w: f64 = Exp1.sample(rng);
    let x = (alpha * u).sin() / u.cos().powf(1.0 / alpha)
        * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha);
    Ok(scale * x)
}

/// One-sided stable draw `S > 0` with Laplace transform
/// `E e^{-uS} = exp(-u^rho)`, `rho in (0,1)`, by Kanter's representation.
pub fn sample_positive_stable<R: Rng>(rho: f64, rng: &mut R) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::validation(format!(
            "one-sided stable index rho = {rho} must lie in (0,1)"
        )));
    }
    let u: f64 = rng.gen_range(1e-12..PI - 1e-12);
    let w: f64 = Exp1.sample(rng);
    let a = (rho * u).sin().powf(rho / (1.0 - rho)) * ((1.0 - rho) * u).sin()
        / u.sin().powf(1.0 / (1.0 - rho));
    Ok((a / w).powf((1.0 - rho) / rho))
}

/// `E|Y|^r` for standard normal `Y`, `r > -1`.
pub fn gaussian_abs_moment(r: f64) -> f64 {
    use statrs::function::gamma::gamma;
    2f64.powf(r / 2.0) * gamma((r + 1.0) / 2.0) / PI.sqrt()
}

/// `E|Y|^r` for a scale-1 symmetric alpha-stable `Y` (CF `exp(-|s|^alpha)`),
/// finite only for `r < alpha`.
pub fn sas_abs_moment(alpha: f64, r: f64) -> Result<f64> {
    use statrs::function::gamma::gamma;
    if r >= alpha {
        return Err(Error::validation(format!(
            "|Y|^{r} has no finite moment for alpha = {alpha}"
        )));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok(
        2f64.powf(r) * gamma((1.0 + r) / 2.0) * gamma(1.0 - r / alpha)
            / (gamma(1.0 - r / 2.0) * PI.sqrt()),
    )
}
