//! Explicit Lyapunov function
//! `v(x) = sum |lambda_i|^{1+a} (|x_i|^p ^ 1) + sum gamma_i |x_i|^gamma`
//! and its q-potential `V = U_q v`, together with the feasibility checkers
//! for the hypothesis sets that make `V` a compact excessive function:
//! spectral/moment conditions on `(a, p, q, gamma, gamma_i)` and the
//! power-law exponent conditions on `(a, p)` for given noise decay.

use crate::error::{Error, Result};
use crate::mc::{McEstimate, RunningStats};
use crate::mehler::{decay_integral, sample_exponential, sample_mu};
use crate::noise::{gaussian_abs_moment, sas_abs_moment, NoiseSpec};
use crate::quad;
use crate::rng::SeedSpec;
use crate::series::TruncatedSum;
use crate::spectral::{verify_weyl, CoefVector, SpectralModel};
use serde::Serialize;
use std::collections::BTreeMap;

/// Running-mean ceiling beyond which a q-potential estimate is reported as
/// diverging: V is extended-real-valued and genuinely infinite off its
/// finiteness space.
pub const DIVERGENCE_CEILING: f64 = 1e12;

/// Mode label reserved for the exponential holding-time stream.
const TAU_LABEL: u64 = u64::MAX - 1;

/// Parameters `(a, p, q, gamma, (gamma_i))` of the explicit Lyapunov pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovParams {
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub gamma_seq: Vec<f64>,
}

impl LyapunovParams {
    pub fn new(a: f64, p: f64, q: f64, gamma: f64, gamma_seq: Vec<f64>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::validation(format!("a = {a} must be > 0")));
        }
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::validation(format!("p = {p} must be >= 2")));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::validation(format!("q = {q} must be > 0")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::validation(format!(
                "gamma = {gamma} must lie in (0,1]"
            )));
        }
        for (i, &g) in gamma_seq.iter().enumerate() {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::validation(format!(
                    "gamma_seq[{i}] = {g} must lie in (0,1]"
                )));
            }
            if i > 0 && g > gamma_seq[i - 1] {
                return Err(Error::validation(format!(
                    "gamma_seq must be non-increasing, violated at index {i}"
                )));
            }
        }
        Ok(LyapunovParams {
            a,
            p,
            q,
            gamma,
            gamma_seq,
        })
    }

    /// Consistency against a model: sequence length and `q > p lambda_1`
    /// (automatic for a negative spectrum, checked anyway).
    pub fn validate_for(&self, model: &SpectralModel) -> Result<()> {
        if self.gamma_seq.len() != model.truncation() {
            return Err(Error::validation(format!(
                "gamma_seq length {} != truncation {}",
                self.gamma_seq.len(),
                model.truncation()
            )));
        }
        if self.q <= self.p * model.lambda(1) {
            return Err(Error::validation("q must exceed p * lambda_1"));
        }
        Ok(())
    }
}

/// Feasibility verdict of a hypothesis set. `condition_flags` maps each
/// named inequality to "established true"; an inconclusive fitted tail
/// counts as false. `feasible` implies every flag is true at the witness.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub feasible: bool,
    pub witness: Option<(f64, f64)>,
    pub c1_truncated: f64,
    pub c1_tail_exponent: f64,
    pub c2_truncated: f64,
    pub condition_flags: BTreeMap<String, bool>,
}

/// Both terms of `v(x)`: the capped spectral term and the weighted
/// `gamma`-term, in that order.
pub fn eval_v_parts(
    x: &CoefVector,
    model: &SpectralModel,
    params: &LyapunovParams,
) -> Result<(f64, f64)> {
    params.validate_for(model)?;
    if x.len() != model.truncation() {
        return Err(Error::validation("x length mismatch"));
    }
    let mut spectral = 0.0;
    let mut weighted = 0.0;
    for (i, &xi) in x.0.iter().enumerate() {
        let l = model.eigenvalues()[i].abs();
        spectral += l.powf(1.0 + params.a) * xi.abs().powf(params.p).min(1.0);
        weighted += params.gamma_seq[i] * xi.abs().powf(params.gamma);
    }
    Ok((spectral, weighted))
}

pub fn eval_v(x: &CoefVector, model: &SpectralModel, params: &LyapunovParams) -> Result<f64> {
    let (s, w) = eval_v_parts(x, model, params)?;
    Ok(s + w)
}

/// Monte Carlo estimate of the q-potential `U_q v`, flagged when the
/// running mean crosses [`DIVERGENCE_CEILING`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialEstimate {
    pub estimate: McEstimate,
    pub diverging: bool,
}

/// `U_q v(x) = (1/q) E[v(T_tau x + Y_tau)]`, `tau ~ Exp(q)`, `Y_tau ~ mu_tau`.
/// Identical seeds reuse identical `(tau, Y)` draws across states, so
/// estimates at different `x` are coupled by common random numbers.
pub fn eval_resolvent_v(
    x: &CoefVector,
    model: &SpectralModel,
    noise: &NoiseSpec,
    params: &LyapunovParams,
    n: usize,
    refinement: usize,
    seed: &SeedSpec,
) -> Result<PotentialEstimate> {
    params.validate_for(model)?;
    if n == 0 {
        return Err(Error::validation("n must be >= 1"));
    }
    let mut stats = RunningStats::new();
    for i in 0..n {
        let mut tau_rng = seed.stream(i as u64, TAU_LABEL, 0);
        let tau = sample_exponential(params.q, &mut tau_rng);
        let flow = model.semigroup_apply(model.clamp_time(tau), x)?;
        let y = sample_mu(model, noise, tau, refinement, seed, i as u64, 0)?;
        let z = CoefVector(flow.0.iter().zip(&y.0).map(|(a, b)| a + b).collect());
        stats.push(eval_v(&z, model, params)? / params.q);
        if stats.mean() > DIVERGENCE_CEILING {
            return Ok(PotentialEstimate {
                estimate: stats.estimate(),
                diverging: true,
            });
        }
    }
    Ok(PotentialEstimate {
        estimate: stats.estimate(),
        diverging: false,
    })
}

/// Both sides of the discrete supermartingale inequality
/// `e^{-qh} P_h V(x) <= V(x)`, estimated by nested Monte Carlo with
/// independent inner seeds, plus the 3-sigma verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessivityCheck {
    /// `e^{-qh} P_h V(x)` with outer-spread standard error.
    pub lhs: McEstimate,
    /// `V(x)`.
    pub rhs: McEstimate,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn excessivity_probe(
    model: &SpectralModel,
    noise: &NoiseSpec,
    params: &LyapunovParams,
    x: &CoefVector,
    h: f64,
    n_outer: usize,
    n_inner: usize,
    refinement: usize,
    seed: &SeedSpec,
) -> Result<ExcessivityCheck> {
    if !(h > 0.0) {
        return Err(Error::validation("h must be > 0"));
    }
    if n_outer == 0 {
        return Err(Error::validation("n_outer must be >= 1"));
    }
    let flow = model.semigroup_apply(h, x)?;
    let outer_seed = seed.derive(0);
    let mut outer = RunningStats::new();
    for j in 0..n_outer {
        let y = sample_mu(model, noise, h, refinement, &outer_seed, j as u64, 0)?;
        let z = CoefVector(flow.0.iter().zip(&y.0).map(|(a, b)| a + b).collect());
        let inner = eval_resolvent_v(
            &z,
            model,
            noise,
            params,
            n_inner,
            refinement,
            &seed.derive(1 + j as u64),
        )?;
        if inner.diverging {
            return Err(Error::Numerical {
                context: "excessivity probe inner estimate",
                achieved: inner.estimate.value,
                target: DIVERGENCE_CEILING,
            });
        }
        outer.push((-params.q * h).exp() * inner.estimate.value);
    }
    let lhs = outer.estimate();
    let v_at_x = eval_resolvent_v(
        x,
        model,
        noise,
        params,
        n_inner * n_outer,
        refinement,
        &seed.derive(u64::MAX),
    )?;
    let rhs = v_at_x.estimate;
    let se = (lhs.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
    Ok(ExcessivityCheck {
        lhs,
        rhs,
        pass: lhs.value <= rhs.value + 3.0 * se,
    })
}

/// Per-mode terms of
/// `c_2 = sum_i gamma_i int_0^inf e^{-qt} E|<Y_t, e_i>|^gamma dt`,
/// bounded above via `|u+w|^gamma <= |u|^gamma + |w|^gamma` (gamma <= 1).
/// `None` when the stable `gamma`-moment diverges (`gamma >= alpha`).
fn c2_terms(
    model: &SpectralModel,
    noise: &NoiseSpec,
    q: f64,
    gamma: f64,
    gamma_seq: &[f64],
) -> Result<Option<Vec<f64>>> {
    let has_stable = noise.sigma2.iter().any(|&s| s > 0.0);
    if has_stable && gamma >= noise.alpha {
        return Ok(None);
    }
    let cg = gaussian_abs_moment(gamma);
    let cs = if has_stable {
        sas_abs_moment(noise.alpha, gamma)?
    } else {
        0.0
    };
    let t_max = 50.0 / q;
    let mut terms = Vec::with_capacity(model.truncation());
    #[allow(clippy::needless_range_loop)] // i indexes three parallel arrays
    for i in 0..model.truncation() {
        let l = model.eigenvalues()[i];
        let (s1, s2) = (noise.sigma1[i], noise.sigma2[i]);
        let f = |t: f64| {
            let mut m = 0.0;
            if s1 > 0.0 {
                m += (std::f64::consts::SQRT_2 * s1 * decay_integral(l, 2.0, t).sqrt()).powf(gamma)
                    * cg;
            }
            if s2 > 0.0 {
                m += (s2 * decay_integral(l, noise.alpha, t).powf(1.0 / noise.alpha)).powf(gamma)
                    * cs;
            }
            (-q * t).exp() * m
        };
        let term = if s1 == 0.0 && s2 == 0.0 {
            0.0
        } else {
            quad::integrate(f, 0.0, t_max, 1e-8, (1.0 / q).min(1.0 / l.abs()))?
        };
        terms.push(gamma_seq[i] * term);
    }
    Ok(Some(terms))
}

/// Admissible weight sequence `gamma_i = min(1, i^{-theta})` together with
/// the two summability diagnostics it must satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct GammaSeqReport {
    pub gamma_seq: Vec<f64>,
    /// `sum gamma_i^{2/(2-gamma)}`.
    pub power_sum: TruncatedSum,
    /// `c_2`; `None` when the stable `gamma`-moment diverges.
    pub c2: Option<TruncatedSum>,
}

pub fn make_gamma_sequence(
    gamma: f64,
    q: f64,
    noise: &NoiseSpec,
    model: &SpectralModel,
    theta: f64,
) -> Result<GammaSeqReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation(format!(
            "gamma = {gamma} must lie in (0,1]"
        )));
    }
    if !(q > 0.0) {
        return Err(Error::validation("q must be > 0"));
    }
    if theta <= (2.0 - gamma) / 2.0 {
        return Err(Error::validation(format!(
            "theta = {theta} must exceed (2 - gamma)/2 = {}",
            (2.0 - gamma) / 2.0
        )));
    }
    let n = model.truncation();
    if noise.n_modes() != n {
        return Err(Error::validation("noise modes != model truncation"));
    }
    let gamma_seq: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-theta).min(1.0)).collect();
    let power_exp = -2.0 * theta / (2.0 - gamma);
    let power_sum = TruncatedSum::analytic(
        gamma_seq.iter().map(|g| g.powf(2.0 / (2.0 - gamma))).sum(),
        power_exp,
    );
    let d = model.dim_d() as f64;
    let c2 = c2_terms(model, noise, q, gamma, &gamma_seq)?.map(|terms| {
        // analytic exponent available when the scales are power laws:
        // gamma_i ~ i^{-theta}, Gaussian scale ~ i^{gamma1 - 1/d},
        // stable scale ~ i^{gamma2 - 2/(d alpha)}.
        let mut e: Option<f64> = None;
        if let Some(g1) = noise
            .gamma1
            .filter(|_| noise.sigma1.iter().any(|&s| s > 0.0))
        {
            e = Some(-theta + gamma * (g1 - 1.0 / d));
        }
        if let Some(g2) = noise
            .gamma2
            .filter(|_| noise.sigma2.iter().any(|&s| s > 0.0))
        {
            let es = -theta + gamma * (g2 - 2.0 / (d * noise.alpha));
            e = Some(e.map_or(es, |v| v.max(es)));
        }
        match e {
            Some(e) => TruncatedSum::analytic(terms.iter().sum(), e),
            None => TruncatedSum::from_terms(&terms),
        }
    });
    Ok(GammaSeqReport {
        gamma_seq,
        power_sum,
        c2,
    })
}

/// Decides the moment/spectral hypothesis set for a concrete `(model,
/// noise, params)`: truncated `c_1` via the per-mode increment-law bound
/// `sum |lambda_k|^{1+a-p/2} sigma1_k^p + sum |lambda_k|^a sigma2_k^beta`,
/// the two eigenvalue summability conditions, the `gamma`-moment bound and
/// `c_2`. `beta` defaults to `0.9 alpha` (any `beta < alpha` works).
pub fn check_h_a_mu(
    model: &SpectralModel,
    noise: &NoiseSpec,
    params: &LyapunovParams,
    beta: Option<f64>,
) -> Result<HypothesisReport> {
    params.validate_for(model)?;
    if noise.n_modes() != model.truncation() {
        return Err(Error::validation("noise modes != model truncation"));
    }
    let beta = beta.unwrap_or(0.9 * noise.alpha);
    if !(beta > 0.0 && beta < noise.alpha) {
        return Err(Error::validation(format!(
            "beta = {beta} must lie in (0, alpha)"
        )));
    }
    let (a, p) = (params.a, params.p);
    let d = model.dim_d() as f64;
    let lam = model.eigenvalues();
    let has_gauss = noise.sigma1.iter().any(|&s| s > 0.0);
    let has_stable = noise.sigma2.iter().any(|&s| s > 0.0);

    let gauss_terms: Vec<f64> = (0..lam.len())
        .map(|i| lam[i].abs().powf(1.0 + a - p / 2.0) * noise.sigma1[i].powf(p))
        .collect();
    let stable_terms: Vec<f64> = (0..lam.len())
        .map(|i| lam[i].abs().powf(a) * noise.sigma2[i].powf(beta))
        .collect();
    let component = |terms: &[f64], analytic_exp: Option<f64>| -> TruncatedSum {
        match analytic_exp {
            Some(e) => TruncatedSum::analytic(terms.iter().sum(), e),
            None => TruncatedSum::from_terms(terms),
        }
    };
    let gauss_sum = component(
        &gauss_terms,
        noise
            .gamma1
            .map(|g1| (2.0 / d) * (1.0 + a - p / 2.0) + p * g1),
    );
    let stable_sum = component(
        &stable_terms,
        noise.gamma2.map(|g2| (2.0 / d) * a + beta * g2),
    );

    use crate::series::Verdict;
    let finite = |s: &TruncatedSum| s.verdict() == Verdict::Finite;
    let mut flags = BTreeMap::new();
    flags.insert(
        "c1_gaussian_sum_finite".into(),
        !has_gauss || finite(&gauss_sum),
    );
    flags.insert(
        "c1_stable_sum_finite".into(),
        !has_stable || finite(&stable_sum),
    );
    flags.insert(
        "spectrum_weyl_growth".into(),
        verify_weyl(model).feasible_c.is_some(),
    );
    // sum |lambda_i|^{-2a/(p-2)} < inf; exponent -(2/d)(2a/(p-2)) < -1.
    flags.insert(
        "inverse_power_sum_finite".into(),
        p == 2.0 || 4.0 * a / (d * (p - 2.0)) > 1.0,
    );
    flags.insert(
        "gamma_moment_exists".into(),
        !has_stable || params.gamma < noise.alpha,
    );
    let seq_sum = TruncatedSum::from_terms(
        &params
            .gamma_seq
            .iter()
            .map(|g| g.powf(2.0 / (2.0 - params.gamma)))
            .collect::<Vec<_>>(),
    );
    flags.insert("gamma_seq_power_sum_finite".into(), finite(&seq_sum));
    let c2 = c2_terms(model, noise, params.q, params.gamma, &params.gamma_seq)?;
    let (c2_flag, c2_truncated) = match &c2 {
        None => (false, 0.0),
        Some(terms) => {
            let sum: f64 = terms.iter().sum();
            if sum == 0.0 {
                (true, 0.0)
            } else {
                // the weight sequence need not be a pure power law here, so
                // the exponent is fitted from the computed terms.
                (finite(&TruncatedSum::from_terms(terms)), sum)
            }
        }
    };
    flags.insert("c2_finite".into(), c2_flag);

    let c1_truncated = gauss_sum.partial_sum + stable_sum.partial_sum;
    let c1_tail_exponent = match (has_gauss, has_stable) {
        (true, true) => gauss_sum.tail_exponent.max(stable_sum.tail_exponent),
        (true, false) => gauss_sum.tail_exponent,
        (false, true) => stable_sum.tail_exponent,
        (false, false) => f64::NEG_INFINITY,
    };
    let feasible = flags.values().all(|&b| b);
    Ok(HypothesisReport {
        feasible,
        witness: feasible.then_some((a, p)),
        c1_truncated,
        c1_tail_exponent,
        c2_truncated,
        condition_flags: flags,
    })
}

/// Left-hand sides of the three exponent inequalities at `(a, p)`:
/// `(2(1+a)-p)/d + p gamma1 < -1`, `2a/d + alpha gamma2 < -1` (absent when
/// there is no stable part), `4a/(d(p-2)) > 1`.
pub fn h_sigma_lhs(
    d: usize,
    alpha: f64,
    gamma1: f64,
    gamma2: Option<f64>,
    a: f64,
    p: f64,
) -> (f64, Option<f64>, f64) {
    let d = d as f64;
    (
        (2.0 * (1.0 + a) - p) / d + p * gamma1,
        gamma2.map(|g2| 2.0 * a / d + alpha * g2),
        4.0 * a / (d * (p - 2.0)),
    )
}

pub fn h_sigma_point(
    d: usize,
    alpha: f64,
    gamma1: f64,
    gamma2: Option<f64>,
    a: f64,
    p: f64,
) -> bool {
    let (l1, l2, l3) = h_sigma_lhs(d, alpha, gamma1, gamma2, a, p);
    l1 < -1.0 && l2.is_none_or(|v| v < -1.0) && l3 > 1.0
}

/// Eliminating `a` from the first and third inequalities: a feasible `a`
/// exists at a given `p` iff `gamma1 < 1/d - 1/2 - 2/(dp)`; the `p -> inf`
/// limit of the threshold is `1/d - 1/2`.
pub fn sigma2_zero_threshold(d: usize, p: f64) -> f64 {
    1.0 / d as f64 - 0.5 - 2.0 / (d as f64 * p)
}

/// Search rectangle for the `(a, p)` witness scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub a_lo: f64,
    pub a_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    pub n_a: usize,
    pub n_p: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            a_lo: 1e-3,
            a_hi: 10.0,
            p_lo: 2.0 + 1e-3,
            p_hi: 20.0,
            n_a: 50,
            n_p: 50,
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Feasible `a`-interval at fixed `p` (open; empty when `lo >= hi`).
fn a_interval(d: usize, alpha: f64, gamma1: f64, gamma2: Option<f64>, p: f64) -> (f64, f64) {
    let df = d as f64;
    let lo = df * (p - 2.0) / 4.0;
    // first inequality: 2a/d < -1 - p gamma1 - (2 - p)/d
    let mut hi = df * (-1.0 - p * gamma1) / 2.0 - (2.0 - p) / 2.0;
    if let Some(g2) = gamma2 {
        hi = hi.min(df * (-1.0 - alpha * g2) / 2.0);
    }
    (lo, hi)
}

/// Decides existence of `(a, p)` satisfying the three exponent
/// inequalities. Feasibility itself is decided analytically per `p` grid
/// point (interval elimination of `a`, exact at the boundary); the witness
/// comes from a coarse log-spaced grid scan refined once around the first
/// hit, tie-broken by smallest `a` then smallest `p`.
pub fn check_h_sigma(
    d: usize,
    alpha: f64,
    gamma1: f64,
    gamma2: Option<f64>,
    grid: Option<GridSpec>,
) -> Result<HypothesisReport> {
    if d == 0 {
        return Err(Error::validation("d must be >= 1"));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::validation(format!(
            "alpha = {alpha} must lie in (0,2)"
        )));
    }
    let grid = grid.unwrap_or_default();
    let a_pts = log_grid(grid.a_lo, grid.a_hi, grid.n_a);
    let p_pts = log_grid(grid.p_lo, grid.p_hi, grid.n_p);

    // analytic feasibility over the searched p-range
    let feasible_p: Vec<f64> = p_pts
        .iter()
        .copied()
        .filter(|&p| {
            let (lo, hi) = a_interval(d, alpha, gamma1, gamma2, p);
            lo < hi.min(grid.a_hi) && hi > grid.a_lo
        })
        .collect();
    let feasible = !feasible_p.is_empty();

    // grid witness: smallest a, then smallest p
    let mut witness: Option<(f64, f64)> = None;
    'grid: for (ai, &a) in a_pts.iter().enumerate() {
        for (pj, &p) in p_pts.iter().enumerate() {
            if h_sigma_point(d, alpha, gamma1, gamma2, a, p) {
                let a_lo = a_pts[ai.saturating_sub(1)];
                let a_hi = a_pts[(ai + 1).min(a_pts.len() - 1)];
                let p_lo = p_pts[pj.saturating_sub(1)];
                let p_hi = p_pts[(pj + 1).min(p_pts.len() - 1)];
                'refine: for ra in log_grid(a_lo, a_hi, 50) {
                    for rp in log_grid(p_lo, p_hi, 50) {
                        if h_sigma_point(d, alpha, gamma1, gamma2, ra, rp) {
                            witness = Some((ra, rp));
                            break 'refine;
                        }
                    }
                }
                if witness.is_none() {
                    witness = Some((a, p));
                }
                break 'grid;
            }
        }
    }
    // thin feasible region the coarse grid missed: analytic midpoint witness
    if feasible && witness.is_none() {
        let p = feasible_p[0];
        let (lo, hi) = a_interval(d, alpha, gamma1, gamma2, p);
        witness = Some((0.5 * (lo.max(grid.a_lo) + hi.min(grid.a_hi)), p));
    }

    let mut flags = BTreeMap::new();
    let any =
        |pred: &dyn Fn(f64, f64) -> bool| a_pts.iter().any(|&a| p_pts.iter().any(|&p| pred(a, p)));
    flags.insert(
        "spectral_inequality".into(),
        any(&|a, p| h_sigma_lhs(d, alpha, gamma1, gamma2, a, p).0 < -1.0),
    );
    flags.insert(
        "stable_inequality".into(),
        gamma2.is_none_or(|g2| -1.0 - alpha * g2 > 0.0),
    );
    flags.insert(
        "summability_inequality".into(),
        any(&|a, p| h_sigma_lhs(d, alpha, gamma1, gamma2, a, p).2 > 1.0),
    );
    flags.insert(
        "gamma1_below_limit_threshold".into(),
        !feasible || gamma1 < 1.0 / d as f64 - 0.5,
    );

    let c1_tail_exponent = witness
        .map(|(a, p)| {
            let (l1, l2, _) = h_sigma_lhs(d, alpha, gamma1, gamma2, a, p);
            l2.map_or(l1, |v| l1.max(v))
        })
        .unwrap_or(0.0);
    Ok(HypothesisReport {
        feasible,
        witness: if feasible { witness } else { None },
        c1_truncated: 0.0,
        c1_tail_exponent,
        c2_truncated: 0.0,
        condition_flags: flags,
    })
}

/// `sum_k k^{2 gamma - 2/d}` converges iff `2 gamma - 2/d < -1`, i.e.
/// strictly below the `gamma < 1/d - 1/2` embedding boundary.
pub fn hs_exponent(d: usize, gamma: f64) -> f64 {
    2.0 * gamma - 2.0 / d as f64
}

pub fn hs_finite(d: usize, gamma: f64) -> bool {
    hs_exponent(d, gamma) < -1.0
}

/// Hilbert-Schmidt embedding diagnostics for power-law noise scales; the
/// Gaussian trace `sum sigma1_k^2 g_2(t,k)` cross-checks the covariance
/// side at horizon `t`.
#[derive(Debug, Clone, Serialize)]
pub struct HsReport {
    pub n1_finite: bool,
    pub n2_finite: bool,
    pub hs_sum_1: Option<TruncatedSum>,
    pub hs_sum_2: Option<TruncatedSum>,
    pub gaussian_trace: f64,
}

pub fn check_hs_embedding(model: &SpectralModel, noise: &NoiseSpec, t: f64) -> Result<HsReport> {
    if noise.n_modes() != model.truncation() {
        return Err(Error::validation("noise modes != model truncation"));
    }
    if !(t > 0.0) {
        return Err(Error::validation("t must be > 0"));
    }
    if noise.gamma1.is_none() && noise.gamma2.is_none() {
        return Err(Error::validation(
            "hs embedding check requires power-law scales (gamma1/gamma2)",
        ));
    }
    let d = model.dim_d();
    let n = model.truncation();
    let sum_for = |g: f64| {
        let e = hs_exponent(d, g);
        TruncatedSum::analytic((1..=n).map(|k| (k as f64).powf(e)).sum(), e)
    };
    let hs_sum_1 = noise.gamma1.map(sum_for);
    let hs_sum_2 = noise.gamma2.map(sum_for);
    let t = model.clamp_time(t);
    let gaussian_trace = (0..n)
        .map(|i| noise.sigma1[i].powi(2) * decay_integral(model.eigenvalues()[i], 2.0, t))
        .sum();
    Ok(HsReport {
        n1_finite: noise.gamma1.is_none_or(|g| hs_finite(d, g)),
        n2_finite: noise.gamma2.is_none_or(|g| hs_finite(d, g)),
        hs_sum_1,
        hs_sum_2,
        gaussian_trace,
    })
}

/// Membership of `x_k ~ k^{-rho}` in the finiteness space of `V`:
/// `sum |lambda_k|^a |x_k|^p` converges iff `2a/d - p rho < -1`. Exact
/// boundary hits are reported separately and count as non-members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MembershipReport {
    pub member: bool,
    pub boundary: bool,
    pub tail_exponent: f64,
}

pub fn h0_membership(rho: f64, model: &SpectralModel, params: &LyapunovParams) -> MembershipReport {
    let e = 2.0 * params.a / model.dim_d() as f64 - params.p * rho;
    MembershipReport {
        member: e < -1.0,
        boundary: e == -1.0,
        tail_exponent: e,
    }
}
