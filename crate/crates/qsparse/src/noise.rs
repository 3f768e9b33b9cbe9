//! Noise generators for the many-quantiles model and the empirical tail-bound
//! verifier.
//!
//! Every family is centered so that the tau-quantile of each marginal is zero:
//! the generator draws a base variable Z and emits `xi = sigma (Z - q)` with
//! `P(Z <= q) = tau`. The AR(1) family keeps standard normal marginals, so the
//! same scalar shift applies after correlating.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as StudentTSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::loss::{penalty_size, rho, QuantileLevel, SupportSet};

/// Sub-Gaussian constant `c_0` for the standard normal:
/// `E exp(c Z^2) = (1 - 2c)^{-1/2} <= 2` holds up to `c = 3/8`.
pub const GAUSSIAN_C0: f64 = 0.375;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
    },
    Laplace {
        scale: f64,
    },
    StudentT {
        df: f64,
    },
    Ar1Gaussian {
        rho_corr: f64,
    },
}

/// A noise law plus its scale; marginals are tau-quantile-centered on output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub family: NoiseFamily,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, sigma: f64) -> Result<Self> {
        let spec = Self { family, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian() -> Self {
        Self {
            family: NoiseFamily::Gaussian,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        match &self.family {
            NoiseFamily::Gaussian => Ok(()),
            NoiseFamily::GaussianMixture { weights, means, sds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len()
                {
                    return Err(Error::InvalidInput(
                        "mixture weights, means, sds must be nonempty and equal-length".into(),
                    ));
                }
                if weights.iter().any(|&w| !(w > 0.0)) || sds.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::InvalidInput(
                        "mixture weights and sds must be positive".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "mixture weights must sum to 1, got {total}"
                    )));
                }
                Ok(())
            }
            NoiseFamily::Laplace { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::InvalidInput("laplace scale must be positive".into()));
                }
                Ok(())
            }
            NoiseFamily::StudentT { df } => {
                if !(*df > 0.0) {
                    return Err(Error::InvalidInput("student-t df must be positive".into()));
                }
                Ok(())
            }
            NoiseFamily::Ar1Gaussian { rho_corr } => {
                if !(rho_corr.abs() < 1.0) {
                    return Err(Error::InvalidInput(
                        "ar1 correlation must lie in (-1, 1)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// CDF of the marginal base variable (before shift and scale).
    fn base_cdf(&self, x: f64) -> f64 {
        match &self.family {
            NoiseFamily::Gaussian | NoiseFamily::Ar1Gaussian { .. } => {
                Normal::standard().cdf(x)
            }
            NoiseFamily::GaussianMixture { weights, means, sds } => {
                let std = Normal::standard();
                weights
                    .iter()
                    .zip(means)
                    .zip(sds)
                    .map(|((w, m), s)| w * std.cdf((x - m) / s))
                    .sum()
            }
            NoiseFamily::Laplace { scale } => {
                if x < 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            NoiseFamily::StudentT { df } => StudentsT::new(0.0, 1.0, *df)
                .expect("validated df")
                .cdf(x),
        }
    }
}

/// The tau-quantile of the base variable: the shift `q` the generators subtract.
///
/// The Laplace quantile is closed-form; other families bisect the CDF to
/// absolute tolerance 1e-10 after bracket doubling.
pub fn quantile_shift(spec: &NoiseSpec, level: QuantileLevel) -> Result<f64> {
    spec.validate()?;
    let tau = level.tau();
    if let NoiseFamily::Laplace { scale } = &spec.family {
        return Ok(if tau < 0.5 {
            scale * (2.0 * tau).ln()
        } else {
            -scale * (2.0 * (1.0 - tau)).ln()
        });
    }
    bisect_quantile(|x| spec.base_cdf(x), tau)
}

fn bisect_quantile(cdf: impl Fn(f64) -> f64, tau: f64) -> Result<f64> {
    let mut lo = -1.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while cdf(lo) > tau {
        lo *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numeric("quantile bracket not found below".into()));
        }
    }
    while cdf(hi) < tau {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numeric("quantile bracket not found above".into()));
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let f = cdf(mid);
        if f == tau {
            return Ok(mid);
        }
        if f < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draw n tau-centered noise values using the caller's RNG stream.
pub fn sample_noise_with(
    spec: &NoiseSpec,
    level: QuantileLevel,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("noise dimension must be >= 1".into()));
    }
    let shift = quantile_shift(spec, level)?;
    let mut out = Vec::with_capacity(n);
    match &spec.family {
        NoiseFamily::Gaussian => {
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                out.push(spec.sigma * (z - shift));
            }
        }
        NoiseFamily::GaussianMixture { weights, means, sds } => {
            for _ in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (j, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = j;
                        break;
                    }
                }
                let e: f64 = rng.sample(StandardNormal);
                let z = means[k] + sds[k] * e;
                out.push(spec.sigma * (z - shift));
            }
        }
        NoiseFamily::Laplace { scale } => {
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() - 0.5;
                let z = -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                out.push(spec.sigma * (z - shift));
            }
        }
        NoiseFamily::StudentT { df } => {
            let t = StudentTSampler::new(*df)
                .map_err(|e| Error::InvalidInput(format!("student-t: {e}")))?;
            for _ in 0..n {
                let z: f64 = t.sample(rng);
                out.push(spec.sigma * (z - shift));
            }
        }
        NoiseFamily::Ar1Gaussian { rho_corr } => {
            let innov = (1.0 - rho_corr * rho_corr).sqrt();
            let mut prev: f64 = rng.sample(StandardNormal);
            out.push(spec.sigma * (prev - shift));
            for _ in 1..n {
                let e: f64 = rng.sample(StandardNormal);
                prev = rho_corr * prev + innov * e;
                out.push(spec.sigma * (prev - shift));
            }
        }
    }
    Ok(out)
}

/// Seeded draw: deterministic in `(spec, tau, n, seed)`.
pub fn sample_noise(spec: &NoiseSpec, level: QuantileLevel, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_noise_with(spec, level, n, &mut rng)
}

/// Tail constants `(M_xi, alpha_xi)` valid for 1-sub-Gaussian base noise with
/// constant `c_0`: `M_xi = c_tau sqrt(log 2 / c_0)`, `alpha_xi = c_0 / c_tau^2`.
pub fn subgaussian_c1_constants_with(level: QuantileLevel, c0: f64) -> (f64, f64) {
    let c_tau = level.c_tau();
    (
        c_tau * (std::f64::consts::LN_2 / c0).sqrt(),
        c0 / (c_tau * c_tau),
    )
}

/// The standard-normal instance (`c_0 = 3/8`).
pub fn subgaussian_c1_constants(level: QuantileLevel) -> (f64, f64) {
    subgaussian_c1_constants_with(level, GAUSSIAN_C0)
}

/// One cell of the tail-bound verification grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Cell {
    pub size: usize,
    pub m: f64,
    pub exceedances: usize,
    pub reps: usize,
    pub estimate: f64,
    pub upper95: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct C1Report {
    pub cells: Vec<C1Cell>,
    pub pass: bool,
}

/// Clopper-Pearson one-sided 95% upper confidence limit for a binomial proportion.
fn binomial_upper95(successes: usize, trials: usize) -> f64 {
    if successes >= trials {
        return 1.0;
    }
    Beta::new((successes + 1) as f64, (trials - successes) as f64)
        .expect("valid beta parameters")
        .inverse_cdf(0.95)
}

/// Monte Carlo check of the tail bound
/// `P(rho(P_I xi) > M_xi p(I) + |I|^{1/2} M^{1/2}) <= H_xi e^{-alpha_xi M}`
/// over a log-spaced grid of support sizes and `M in {0, 1, 2, 4, 8}`.
///
/// A cell passes when the bound is vacuous (>= 1), when no exceedance occurred,
/// or when the 95% upper confidence limit stays under the bound. The zero-count
/// rule is needed because reps Monte Carlo draws cannot resolve probabilities
/// below ~3/reps even when the true probability is far smaller.
pub fn verify_c1(
    spec: &NoiseSpec,
    level: QuantileLevel,
    n: usize,
    m_xi: f64,
    alpha_xi: f64,
    h_xi: f64,
    reps: usize,
    seed: u64,
) -> Result<C1Report> {
    if reps < 1000 {
        return Err(Error::InvalidInput(format!(
            "verify_c1 needs reps >= 1000, got {reps}"
        )));
    }
    spec.validate()?;
    let m_grid: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];
    let mut sizes = vec![0usize, 1];
    let mut s = 2;
    while s < n {
        sizes.push(s);
        s *= 2;
    }
    sizes.push(n);
    sizes.dedup();

    let mut cells = Vec::new();
    for (size_idx, &s) in sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(size_idx as u64 + 1);
        let mut counts = [0usize; 5];
        for _ in 0..reps {
            let support = random_support(s, n, &mut rng);
            let xi = sample_noise_with(spec, level, n, &mut rng)?;
            let projected = crate::loss::project(&xi, &support)?;
            let loss = rho(level, &projected)?;
            let base = m_xi * penalty_size(s, n);
            for (j, &m) in m_grid.iter().enumerate() {
                if loss > base + (s as f64).sqrt() * m.sqrt() {
                    counts[j] += 1;
                }
            }
        }
        for (j, &m) in m_grid.iter().enumerate() {
            let bound = h_xi * (-alpha_xi * m).exp();
            let estimate = counts[j] as f64 / reps as f64;
            let upper95 = binomial_upper95(counts[j], reps);
            let pass = bound >= 1.0 || counts[j] == 0 || upper95 <= bound;
            cells.push(C1Cell {
                size: s,
                m,
                exceedances: counts[j],
                reps,
                estimate,
                upper95,
                bound,
                pass,
            });
        }
    }
    let pass = cells.iter().all(|c| c.pass);
    Ok(C1Report { cells, pass })
}

pub(crate) fn random_support(s: usize, n: usize, rng: &mut impl Rng) -> SupportSet {
    let picked = rand::seq::index::sample(rng, n, s);
    let indices: Vec<usize> = picked.into_iter().map(|i| i + 1).collect();
    SupportSet::new(indices, n).expect("sampled in range")
}

/// Density-free sanity hook used by tests: standard normal pdf.
#[allow(dead_code)]
pub(crate) fn normal_pdf(x: f64) -> f64 {
    Normal::standard().pdf(x)
}
