//! The dimensionality test.
//!
//! `H₀: dim span{Σ₁..Σ_q} = d₀` is tested against `> d₀` with the statistic
//!
//! ```text
//! T = √q · p · M̂^(d₀+1) / σ̂,     σ̂ = 2(d₀+1)·|M̂^(d₀)|·√β̂,     β̂ = q⁻¹ Σ c_i² Ĝ_ii²
//! ```
//!
//! which is asymptotically standard normal under the null. The test rejects
//! for large `T` (one-sided). Multiplying all observations by a common factor
//! leaves `T` unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{gram_hat_from_stats, group_stats, GroupSample};
use crate::normal::{normal_sf, z_alpha};
use crate::space::{mean_principal_minor, GramMatrix, MinorStrategy};

pub use crate::normal::normal_sf as standard_normal_sf;

/// Outcome of one dimensionality test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub d0: usize,
    /// `M̂^(d₀)`
    pub m_hat_d0: f64,
    /// `M̂^(d₀+1)`
    pub m_hat_d0p1: f64,
    pub beta_hat: f64,
    pub sigma_hat: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub q: usize,
    pub p: usize,
}

/// One step of the sequential procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialStep {
    pub d: usize,
    pub report: TestReport,
}

/// Result of testing `d = 1, 2, …` until the first acceptance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialReport {
    /// First accepted `d`, or `None` when every tested `d ≤ d_max` rejected.
    pub estimated_d: Option<usize>,
    pub per_d: Vec<SequentialStep>,
    /// Level applied at every step; no multiplicity correction is made.
    pub per_step_alpha: f64,
    pub d_max: usize,
}

/// `M̂^(k) = C(q,k)⁻¹ Σ det Ĝ(i₁..i_k)`.
pub fn m_hat(g_hat: &GramMatrix, k: usize) -> Result<f64> {
    mean_principal_minor(g_hat, k, MinorStrategy::Auto)
}

/// `β̂ = q⁻¹ Σ c_i² Ĝ_ii²`.
pub fn beta_hat(g_hat: &GramMatrix, c_list: &[f64]) -> Result<f64> {
    let q = g_hat.size();
    if c_list.len() != q {
        return Err(Error::Dimension(format!(
            "{} sample-size ratios for {q} groups",
            c_list.len()
        )));
    }
    if let Some(c) = c_list.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::Domain(format!("ratio c = {c} must be positive")));
    }
    let total: f64 = c_list
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let g = g_hat.get(i, i);
            c * c * g * g
        })
        .sum();
    Ok(total / q as f64)
}

/// `σ̂ = 2(d₀+1)·|M̂^(d₀)|·√β̂`.
pub fn sigma_hat(m_hat_d0: f64, beta_hat: f64, d0: usize) -> f64 {
    2.0 * (d0 as f64 + 1.0) * m_hat_d0.abs() * beta_hat.sqrt()
}

/// Tuning knobs for [`dim_test_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TestOptions {
    pub strategy: MinorStrategy,
}

/// Runs the test of `dim = d0` at level `alpha`.
pub fn dim_test(groups: &[GroupSample], d0: usize, alpha: f64) -> Result<TestReport> {
    dim_test_with(groups, d0, alpha, TestOptions::default())
}

pub fn dim_test_with(
    groups: &[GroupSample],
    d0: usize,
    alpha: f64,
    options: TestOptions,
) -> Result<TestReport> {
    check_test_args(groups.len(), d0, alpha)?;
    let stats = group_stats(groups)?;
    let g_hat = gram_hat_from_stats(&stats)?;
    let c: Vec<f64> = stats.iter().map(|s| s.c).collect();
    dim_test_from_gram(&g_hat, &c, d0, alpha, options)
}

fn check_test_args(q: usize, d0: usize, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if d0 == 0 {
        return Err(Error::Domain("d0 must be at least 1".into()));
    }
    if q < d0 + 2 {
        return Err(Error::Domain(format!(
            "testing d0 = {d0} needs at least {} groups, got {q}",
            d0 + 2
        )));
    }
    Ok(())
}

/// The test on a precomputed sample Gram matrix and ratios `c_i = p/n_i`.
pub fn dim_test_from_gram(
    g_hat: &GramMatrix,
    c_list: &[f64],
    d0: usize,
    alpha: f64,
    options: TestOptions,
) -> Result<TestReport> {
    let q = g_hat.size();
    check_test_args(q, d0, alpha)?;
    let m_d0 = mean_principal_minor(g_hat, d0, options.strategy)?;
    let m_d1 = mean_principal_minor(g_hat, d0 + 1, options.strategy)?;
    let beta = beta_hat(g_hat, c_list)?;
    // The null limit needs M^(d₀) > 0; a non-positive estimate means the
    // variance cannot be estimated.
    if !(m_d0 > 0.0) {
        return Err(Error::DegenerateVariance(format!(
            "M̂^({d0}) = {m_d0:e} is not positive"
        )));
    }
    let sigma = sigma_hat(m_d0, beta, d0);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateVariance(format!(
            "σ̂ = {sigma:e} (M̂^({d0}) = {m_d0:e}, β̂ = {beta:e})"
        )));
    }
    let p = g_hat.dim_p();
    let statistic = (q as f64).sqrt() * p as f64 * m_d1 / sigma;
    let p_value = normal_sf(statistic);
    let reject = statistic > z_alpha(alpha);
    Ok(TestReport {
        d0,
        m_hat_d0: m_d0,
        m_hat_d0p1: m_d1,
        beta_hat: beta,
        sigma_hat: sigma,
        statistic,
        p_value,
        alpha,
        reject,
        q,
        p,
    })
}

/// Largest testable dimension for `q` groups.
pub fn default_d_max(q: usize) -> usize {
    q.saturating_sub(2)
}

/// Tests `d = 1, 2, …, d_max` and stops at the first acceptance.
pub fn sequential_dim(groups: &[GroupSample], alpha: f64, d_max: usize) -> Result<SequentialReport> {
    sequential_dim_with(groups, alpha, d_max, TestOptions::default())
}

pub fn sequential_dim_with(
    groups: &[GroupSample],
    alpha: f64,
    d_max: usize,
    options: TestOptions,
) -> Result<SequentialReport> {
    let q = groups.len();
    if d_max == 0 {
        return Err(Error::Domain("d_max must be at least 1".into()));
    }
    if d_max > default_d_max(q) {
        return Err(Error::Domain(format!(
            "d_max = {d_max} exceeds q − 2 = {}",
            default_d_max(q)
        )));
    }
    check_test_args(q, 1, alpha)?;
    let stats = group_stats(groups)?;
    let g_hat = gram_hat_from_stats(&stats)?;
    let c: Vec<f64> = stats.iter().map(|s| s.c).collect();

    let mut per_d = Vec::new();
    let mut estimated_d = None;
    for d in 1..=d_max {
        let report = dim_test_from_gram(&g_hat, &c, d, alpha, options)?;
        let accepted = !report.reject;
        per_d.push(SequentialStep { d, report });
        if accepted {
            estimated_d = Some(d);
            break;
        }
    }
    Ok(SequentialReport {
        estimated_d,
        per_d,
        per_step_alpha: alpha,
        d_max,
    })
}
