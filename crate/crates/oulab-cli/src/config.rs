//! Experiment configuration: a single TOML file with four blocks
//! (model / noise / lyapunov / run), dot-path overrides from the command
//! line, and a content hash recorded in every output file.

use anyhow::{anyhow, bail, Context, Result};
use oulab::lyapunov::{make_gamma_sequence, LyapunovParams};
use oulab::noise::{NoiseFamily, NoiseSpec};
use oulab::spectral::{dirichlet_spectrum, SpectralModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelCfg,
    pub noise: NoiseCfg,
    pub lyapunov: LyapCfg,
    pub run: RunCfg,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCfg {
    /// "dirichlet" (interval Laplacian powers), "constant", or "explicit".
    pub source: String,
    pub d: usize,
    pub n: usize,
    /// Eigenvalue list for source = "explicit".
    pub lambda: Option<Vec<f64>>,
    /// Common eigenvalue for source = "constant".
    pub constant: f64,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            source: "dirichlet".into(),
            d: 1,
            n: 64,
            lambda: None,
            constant: -1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseCfg {
    /// "diagonal" or "elliptical".
    pub family: String,
    pub alpha: f64,
    /// Power-law exponent for the Gaussian scales (sigma1_k = k^gamma1).
    pub gamma1: Option<f64>,
    /// Power-law exponent for the stable scales (sigma2_k = k^gamma2).
    pub gamma2: Option<f64>,
    /// Explicit scales; override the power laws when present.
    pub sigma1: Option<Vec<f64>>,
    pub sigma2: Option<Vec<f64>>,
}

impl Default for NoiseCfg {
    fn default() -> Self {
        NoiseCfg {
            family: "diagonal".into(),
            alpha: 1.0,
            gamma1: Some(-1.0),
            gamma2: Some(-1.5),
            sigma1: None,
            sigma2: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapCfg {
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    /// Decay exponent of the auxiliary weight sequence gamma_i = i^-theta.
    pub theta: f64,
    /// Moment order for the stable part of the c1 bound (defaults to 0.9 alpha).
    pub beta: Option<f64>,
}

impl Default for LyapCfg {
    fn default() -> Self {
        LyapCfg {
            a: 0.15,
            p: 2.5,
            q: 1.0,
            gamma: 0.4,
            theta: 1.0,
            beta: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunCfg {
    pub seed: u64,
    pub t: f64,
    pub steps: usize,
    pub n_paths: usize,
    /// Sample count for cf-test.
    pub n_samples: usize,
    pub refinement: usize,
    /// Per-mode frequency magnitudes for cf-test (frequency j probes mode j).
    pub frequencies: Vec<f64>,
    /// Number of random cases for m2-test.
    pub n_cases: usize,
    pub m2_tolerance_diagonal: f64,
    pub m2_tolerance_elliptical: f64,
    /// Truncation grid for the dichotomy experiment.
    pub n_list: Vec<usize>,
    pub gamma2_list: Vec<f64>,
    /// Lyapunov levels for nest-probe.
    pub levels: Vec<f64>,
    /// Monte Carlo budget per resolvent evaluation.
    pub v_budget: usize,
    /// Initial state as mode coefficients (zero vector when absent).
    pub x0: Option<Vec<f64>>,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            seed: 42,
            t: 1.0,
            steps: 200,
            n_paths: 200,
            n_samples: 100_000,
            refinement: 16,
            frequencies: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            n_cases: 100,
            m2_tolerance_diagonal: 1e-12,
            m2_tolerance_elliptical: 1e-7,
            n_list: vec![16, 32, 64, 128, 256, 512, 1024],
            gamma2_list: vec![-3.0, -2.0, -1.0],
            levels: vec![10.0, 100.0, 1000.0, 10000.0],
            v_budget: 2000,
            x0: None,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: Config = value
            .try_into()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        Ok(cfg)
    }

    /// SHA-256 of the effective (post-override) configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn model(&self) -> oulab::error::Result<SpectralModel> {
        match self.model.source.as_str() {
            "dirichlet" => dirichlet_spectrum(self.model.d, self.model.n),
            "constant" => SpectralModel::new(self.model.d, vec![self.model.constant; self.model.n]),
            "explicit" => {
                let lambda = self.model.lambda.clone().ok_or_else(|| {
                    oulab::error::Error::validation("model.lambda required for source = explicit")
                })?;
                SpectralModel::new(self.model.d, lambda)
            }
            other => Err(oulab::error::Error::validation(format!(
                "model.source = {other:?} (expected dirichlet, constant or explicit)"
            ))),
        }
    }

    pub fn noise(&self) -> oulab::error::Result<NoiseSpec> {
        let family = match self.noise.family.as_str() {
            "diagonal" => NoiseFamily::Diagonal,
            "elliptical" => NoiseFamily::Elliptical,
            other => {
                return Err(oulab::error::Error::validation(format!(
                    "noise.family = {other:?} (expected diagonal or elliptical)"
                )))
            }
        };
        let n = self.model.n;
        match (&self.noise.sigma1, &self.noise.sigma2) {
            (Some(s1), Some(s2)) => {
                NoiseSpec::new(self.noise.alpha, family, s1.clone(), s2.clone())
            }
            (None, None) => NoiseSpec::from_power_laws(
                n,
                self.noise.alpha,
                family,
                self.noise.gamma1,
                self.noise.gamma2,
            ),
            _ => Err(oulab::error::Error::validation(
                "noise.sigma1 and noise.sigma2 must be given together",
            )),
        }
    }

    pub fn lyapunov_params(
        &self,
        model: &SpectralModel,
        noise: &NoiseSpec,
    ) -> oulab::error::Result<LyapunovParams> {
        let seq = make_gamma_sequence(
            self.lyapunov.gamma,
            self.lyapunov.q,
            noise,
            model,
            self.lyapunov.theta,
        )?
        .gamma_seq;
        let params = LyapunovParams::new(
            self.lyapunov.a,
            self.lyapunov.p,
            self.lyapunov.q,
            self.lyapunov.gamma,
            seq,
        )?;
        params.validate_for(model)?;
        Ok(params)
    }
}

/// Apply a `section.key=value` override onto the raw TOML tree.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?} must have the form section.key=value"))?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override path {path:?} has an empty component");
    }
    // parse the value as a TOML fragment so numbers, strings and arrays work
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Value>()
        .map(|t| t["v"].clone())
        .or_else(|_| {
            format!("v = {raw:?}")
                .parse::<toml::Value>()
                .map(|t| t["v"].clone())
        })
        .map_err(|e| anyhow!("override value {raw:?}: {e}"))?;
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("override path {path:?} crosses a non-table"))?;
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| anyhow!("override path {path:?} crosses a non-table"))?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
