//! Scenario construction and the Monte-Carlo size/power harness.
//!
//! Two scenario families are provided. [`scenario_a`] mixes two random
//! covariance "clusters" and lets the last group drift towards a third
//! matrix; [`scenario_b`] uses banded moving-average covariances whose last
//! group picks up an extra band. In both, `w = 0` is the null and `w > 0`
//! raises the span dimension by one.
//!
//! Every random draw is derived from a 64-bit seed through [`derive_seed`],
//! so results do not depend on the number of worker threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimtest::dim_test;
use crate::error::{Error, Result};
use crate::estimators::GroupSample;
use crate::power::{check_span_dimension, gamma_from_gram, power_from_gamma};
use crate::space::{gram, psd_sqrt, GramMatrix, SymMatrix};

/// Sample-size range used when none is given.
pub const DEFAULT_N_BOUNDS: (usize, usize) = (200, 600);
/// Band amplitude of the extra band in [`scenario_b`].
pub const BAND_AMPLITUDE: f64 = 2.5;
/// Relative tolerance of the span-dimension gate.
pub const SCENARIO_SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ExampleA,
    ExampleB,
    Custom,
}

/// Distribution of the standardized entries of `z` in `x = Σ^½ z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Normal,
    /// `Gamma(shape 4, rate 2) − 2`: mean 0, variance 1, fourth moment 4.5.
    CenteredGamma,
}

impl Noise {
    /// Fourth moment `ν₄ = E z⁴`.
    pub fn nu4(self) -> f64 {
        match self {
            Noise::Normal => 3.0,
            Noise::CenteredGamma => 4.5,
        }
    }

    fn fill(self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Noise::Normal => {
                for v in out {
                    *v = StandardNormal.sample(rng);
                }
            }
            Noise::CenteredGamma => {
                let g = Gamma::new(4.0, 0.5).expect("valid gamma parameters");
                for v in out {
                    *v = g.sample(rng) - 2.0;
                }
            }
        }
    }
}

impl std::str::FromStr for Noise {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(Noise::Normal),
            "centered_gamma" | "gamma" => Ok(Noise::CenteredGamma),
            other => Err(format!("unknown noise family `{other}` (normal | centered_gamma)")),
        }
    }
}

/// A fully specified data-generating configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub p: usize,
    pub q: usize,
    pub w: f64,
    pub sigma_list: Vec<SymMatrix>,
    pub sqrt_list: Vec<SymMatrix>,
    pub n_list: Vec<usize>,
    pub noise: Noise,
    pub d0_true: usize,
    pub seed: u64,
    population_gram: GramMatrix,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based child seed for stream `(a, b)` of `master`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    mix(mix(mix(master) ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ b)
}

impl Scenario {
    /// A scenario from explicit covariances. `w = 0` must give span
    /// dimension `d0_true`, `w > 0` must give `d0_true + 1`.
    pub fn custom(
        sigma_list: Vec<SymMatrix>,
        n_list: Vec<usize>,
        noise: Noise,
        d0_true: usize,
        w: f64,
        seed: u64,
    ) -> Result<Self> {
        let sqrt_list = sigma_list.iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
        Self::assemble(ScenarioKind::Custom, sigma_list, sqrt_list, n_list, noise, d0_true, w, seed)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ScenarioKind,
        sigma_list: Vec<SymMatrix>,
        sqrt_list: Vec<SymMatrix>,
        n_list: Vec<usize>,
        noise: Noise,
        d0_true: usize,
        w: f64,
        seed: u64,
    ) -> Result<Self> {
        let q = sigma_list.len();
        if q < 2 || n_list.len() != q {
            return Err(Error::InvalidScenario(format!(
                "{q} covariances with {} sample sizes",
                n_list.len()
            )));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("w = {w} must lie in [0, 1]")));
        }
        if let Some(n) = n_list.iter().find(|&&n| n < GroupSample::MIN_OBSERVATIONS) {
            return Err(Error::Domain(format!("sample size {n} is below the minimum of 5")));
        }
        let p = sigma_list[0].dim();
        let population_gram = gram(&sigma_list)?;
        let d = if w == 0.0 { d0_true } else { d0_true + 1 };
        check_span_dimension(&population_gram, d, SCENARIO_SPAN_TOL).map_err(|e| {
            Error::InvalidScenario(format!("w = {w}, expected span dimension {d}: {e}"))
        })?;
        Ok(Scenario {
            kind,
            p,
            q,
            w,
            sigma_list,
            sqrt_list,
            n_list,
            noise,
            d0_true,
            seed,
            population_gram,
        })
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn population_gram(&self) -> &GramMatrix {
        &self.population_gram
    }

    /// `c_i = p/n_i`.
    pub fn c_list(&self) -> Vec<f64> {
        self.n_list.iter().map(|&n| self.p as f64 / n as f64).collect()
    }

    /// Draws all `q` groups (ids `1..=q`), group `j` from stream `j` of the seed.
    pub fn draw_groups(&self) -> Result<Vec<GroupSample>> {
        (0..self.q)
            .map(|j| {
                let s = derive_seed(self.seed, 1, j as u64);
                draw_group_with_id(j + 1, &self.sqrt_list[j], self.n_list[j], self.noise, s)
            })
            .collect()
    }

    /// Asymptotic power bound `Φ(γ − z_α)` with the last group as the outlier.
    pub fn theoretical_power(&self, alpha: f64) -> Result<f64> {
        let gamma = gamma_from_gram(&self.population_gram, 1, &self.c_list())?;
        Ok(power_from_gamma(gamma, alpha))
    }
}

/// Draws `n` observations `x = Σ^½ z` from `sqrt_sigma = Σ^½`.
pub fn draw_group(sqrt_sigma: &SymMatrix, n: usize, noise: Noise, stream_seed: u64) -> Result<GroupSample> {
    draw_group_with_id(0, sqrt_sigma, n, noise, stream_seed)
}

fn draw_group_with_id(
    id: usize,
    sqrt_sigma: &SymMatrix,
    n: usize,
    noise: Noise,
    stream_seed: u64,
) -> Result<GroupSample> {
    let p = sqrt_sigma.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut z = DMatrix::zeros(p, n);
    noise.fill(&mut rng, z.as_mut_slice());
    GroupSample::new(id, sqrt_sigma.as_matrix() * z)
}

fn check_n_bounds((lo, hi): (usize, usize)) -> Result<()> {
    if lo < GroupSample::MIN_OBSERVATIONS || lo > hi {
        return Err(Error::Domain(format!(
            "sample-size bounds ({lo}, {hi}) must satisfy 5 ≤ lo ≤ hi"
        )));
    }
    Ok(())
}

fn draw_n_list(rng: &mut ChaCha8Rng, q: usize, (lo, hi): (usize, usize)) -> Vec<usize> {
    (0..q).map(|_| rng.gen_range(lo..=hi)).collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Uᵀ D U` with `U` Haar orthogonal and `D` uniform on `(0, 1)`, returned
/// with its square root `Uᵀ D^½ U`.
fn random_spectrum_matrix(rng: &mut ChaCha8Rng, p: usize) -> (SymMatrix, SymMatrix) {
    let u = random_orthogonal(rng, p);
    let d: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..1.0)).collect();
    let form = |vals: &[f64]| {
        let mut scaled = u.transpose();
        for (c, v) in vals.iter().enumerate() {
            scaled.column_mut(c).scale_mut(*v);
        }
        SymMatrix::from_computed(scaled * &u)
    };
    let root: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    (form(&d), form(&root))
}

/// Two-cluster scenario with `d0_true = 2`.
///
/// `Λ₁, Λ₂, Λ₃` are random matrices `UᵀDU`. Groups `1..q−1` take `Λ₁` or `Λ₂`
/// by random labels (both labels present), and group `q` is
/// `(1−w)Λ_{I_q} + wΛ₃`.
pub fn scenario_a(p: usize, q: usize, w: f64, seed: u64, n_bounds: (usize, usize)) -> Result<Scenario> {
    if q < 4 || p < 2 {
        return Err(Error::Domain(format!("scenario A needs q ≥ 4 and p ≥ 2, got q = {q}, p = {p}")));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("w = {w} must lie in [0, 1]")));
    }
    check_n_bounds(n_bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0));
    let lambdas: Vec<(SymMatrix, SymMatrix)> = (0..3).map(|_| random_spectrum_matrix(&mut rng, p)).collect();
    let labels = loop {
        let l: Vec<usize> = (0..q).map(|_| rng.gen_range(0..2)).collect();
        if l[..q - 1].contains(&0) && l[..q - 1].contains(&1) {
            break l;
        }
    };
    let n_list = draw_n_list(&mut rng, q, n_bounds);

    let mut sigma_list = Vec::with_capacity(q);
    let mut sqrt_list = Vec::with_capacity(q);
    for &l in &labels[..q - 1] {
        sigma_list.push(lambdas[l].0.clone());
        sqrt_list.push(lambdas[l].1.clone());
    }
    let base = &lambdas[labels[q - 1]];
    if w == 0.0 {
        sigma_list.push(base.0.clone());
        sqrt_list.push(base.1.clone());
    } else {
        let last = SymMatrix::linear_combination(&[1.0 - w, w], &[&base.0, &lambdas[2].0])?;
        sqrt_list.push(psd_sqrt(&last)?);
        sigma_list.push(last);
    }
    Scenario::assemble(ScenarioKind::ExampleA, sigma_list, sqrt_list, n_list, Noise::Normal, 2, w, seed)
}

/// Banded covariance of an MA(3) process `e_t + a e_{t−1} + b e_{t−2} + c e_{t−3}`,
/// entrywise.
pub fn ma_band_covariance(p: usize, a: f64, b: f64, c: f64) -> SymMatrix {
    SymMatrix::from_upper_fn(p, |r, s| match s - r {
        0 => 1.0 + a * a + b * b + c * c,
        1 => a + a * b + b * c,
        2 => b + a * c,
        3 => c,
        _ => 0.0,
    })
}

/// Banded scenario with `d0_true = 3`.
///
/// Groups `1..q−1` are MA(2) covariances with coefficients uniform on
/// `[−2, 2]`, which live in `span{Λ₀, Λ₁, Λ₂}`. Group `q` adds a third lag
/// of size `w·A₀` (`A₀ = 2.5`), which brings in `Λ₃`.
pub fn scenario_b(p: usize, q: usize, w: f64, seed: u64, n_bounds: (usize, usize)) -> Result<Scenario> {
    if q < 4 || p < 7 {
        return Err(Error::Domain(format!("scenario B needs q ≥ 4 and p ≥ 7, got q = {q}, p = {p}")));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("w = {w} must lie in [0, 1]")));
    }
    check_n_bounds(n_bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0));
    let coeffs: Vec<(f64, f64)> = (0..q)
        .map(|_| (rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)))
        .collect();
    let n_list = draw_n_list(&mut rng, q, n_bounds);
    let sigma_list: Vec<SymMatrix> = coeffs
        .iter()
        .enumerate()
        .map(|(j, &(a, b))| {
            let c = if j == q - 1 { w * BAND_AMPLITUDE } else { 0.0 };
            ma_band_covariance(p, a, b, c)
        })
        .collect();
    let sqrt_list = sigma_list.iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
    Scenario::assemble(ScenarioKind::ExampleB, sigma_list, sqrt_list, n_list, Noise::Normal, 3, w, seed)
}

/// Empirical rejection rates over a grid of deviation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub w_grid: Vec<f64>,
    pub rejection_rate: Vec<f64>,
    pub reps: usize,
    pub alpha: f64,
    /// Mean of the asymptotic power bound over the replicate scenarios.
    pub theoretical: Vec<f64>,
    pub seed: u64,
    /// Replicates dropped because the variance estimate degenerated.
    pub excluded: Vec<usize>,
}

impl McResult {
    /// Monte-Carlo standard error of each rate under its own estimate.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.rejection_rate
            .iter()
            .zip(&self.excluded)
            .map(|(r, e)| {
                let n = (self.reps - e).max(1) as f64;
                (r * (1.0 - r) / n).sqrt()
            })
            .collect()
    }
}

struct RepOutcome {
    reject: Option<bool>,
    theoretical: f64,
}

/// Runs `reps` replicates at each grid value. Replicate `(k, r)` builds its
/// scenario from `factory(w_k, derive_seed(master_seed, k, r))`, draws the
/// groups and runs the test of `dim = d0`.
pub fn run_mc<F>(
    factory: F,
    w_grid: &[f64],
    reps: usize,
    alpha: f64,
    d0: usize,
    master_seed: u64,
) -> Result<McResult>
where
    F: Fn(f64, u64) -> Result<Scenario> + Sync,
{
    if reps == 0 {
        return Err(Error::Domain("reps must be at least 1".into()));
    }
    if w_grid.is_empty() {
        return Err(Error::EmptyInput("empty w grid".into()));
    }
    if let Some(w) = w_grid.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Domain(format!("grid value w = {w} outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let tasks: Vec<(usize, usize)> = (0..w_grid.len())
        .flat_map(|k| (0..reps).map(move |r| (k, r)))
        .collect();
    let outcomes: Vec<Result<RepOutcome>> = tasks
        .par_iter()
        .map(|&(k, r)| {
            let seed = derive_seed(master_seed, k as u64, r as u64);
            let scenario = factory(w_grid[k], seed)?;
            let theoretical = scenario.theoretical_power(alpha)?;
            let groups = scenario.draw_groups()?;
            let reject = match dim_test(&groups, d0, alpha) {
                Ok(report) => Some(report.reject),
                Err(Error::DegenerateVariance(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(RepOutcome { reject, theoretical })
        })
        .collect();

    let mut rejection_rate = Vec::with_capacity(w_grid.len());
    let mut theoretical = Vec::with_capacity(w_grid.len());
    let mut excluded = Vec::with_capacity(w_grid.len());
    let mut it = outcomes.into_iter();
    for _ in w_grid {
        let (mut rejected, mut used, mut theo) = (0usize, 0usize, 0.0);
        for _ in 0..reps {
            let o = it.next().expect("one outcome per task")?;
            theo += o.theoretical;
            if let Some(rej) = o.reject {
                used += 1;
                rejected += rej as usize;
            }
        }
        rejection_rate.push(if used == 0 { f64::NAN } else { rejected as f64 / used as f64 });
        theoretical.push(theo / reps as f64);
        excluded.push(reps - used);
    }
    Ok(McResult {
        w_grid: w_grid.to_vec(),
        rejection_rate,
        reps,
        alpha,
        theoretical,
        seed: master_seed,
        excluded,
    })
}
