//! Config-driven Monte Carlo harness: estimation and coverage experiments,
//! rate sweeps, and constant calibration.
//!
//! Reproducibility contract: one root seed; replication r draws from a
//! counter-based stream (ChaCha stream id r + 1), so results are bit-identical
//! regardless of worker count. Calibration and validation use seeds derived
//! from the root seed so reported frequencies are never in-sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::confidence::{theory_constants, ConstantSet};
use crate::error::{Error, Result};
use crate::loss::{penalty_size, rho, QuantileLevel};
use crate::noise::{sample_noise_with, subgaussian_c1_constants, NoiseSpec};
use crate::oracle::{oracle, true_support};
use crate::selector::{estimate, select_pattern, SelectorConfig};
use crate::signal::{sample_signal_with, SignalClass, SignalSpec};

pub const REPORT_SCHEMA: &str = "qsparse.report.v1";
pub const SWEEP_SCHEMA: &str = "qsparse.sweep.v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            alpha1: 0.05,
            alpha2: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ConstantsChoice {
    /// Sub-Gaussian theory preset (provably sufficient, very conservative).
    Theory,
    /// Theory kappa/varkappa with M1, M2, M3 replaced by Monte Carlo
    /// calibration against the configured targets.
    Calibrated,
    /// A fully explicit constant set.
    Explicit { set: ConstantSet },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub tau: f64,
    pub noise: NoiseSpec,
    pub signal: SignalSpec,
    #[serde(default = "default_constants")]
    pub constants: ConstantsChoice,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub targets: Targets,
    /// EBR structural parameter for coverage runs.
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_true")]
    pub resample_signal: bool,
    #[serde(default)]
    pub kappa_override: Option<f64>,
    #[serde(default)]
    pub varkappa_override: Option<f64>,
}

fn default_constants() -> ConstantsChoice {
    ConstantsChoice::Theory
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        QuantileLevel::new(self.tau).map_err(|e| Error::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.signal.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.signal.n != self.n {
            return Err(Error::Config(format!(
                "signal dimension {} does not match n = {}",
                self.signal.n, self.n
            )));
        }
        if self.reps < 100 {
            return Err(Error::Config(format!(
                "reports need reps >= 100, got {}",
                self.reps
            )));
        }
        for (name, a) in [("alpha1", self.targets.alpha1), ("alpha2", self.targets.alpha2)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1], got {a}")));
            }
        }
        if !(self.t >= 0.0) {
            return Err(Error::Config(format!("t must be >= 0, got {}", self.t)));
        }
        Ok(())
    }

    pub fn level(&self) -> QuantileLevel {
        QuantileLevel::new(self.tau).expect("validated")
    }

    /// Parse from JSON, honoring the QSPARSE_SEED environment override.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Ok(seed_text) = std::env::var("QSPARSE_SEED") {
            config.seed = seed_text
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("QSPARSE_SEED is not an integer: {seed_text}")))?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Theory or explicit constants; `Calibrated` resolves to the theory set
    /// here (calibration replaces the multipliers separately).
    pub fn base_constants(&self) -> Result<ConstantSet> {
        let level = self.level();
        let mut set = match &self.constants {
            ConstantsChoice::Explicit { set } => {
                set.validate()?;
                set.clone()
            }
            _ => {
                let (m_xi, alpha_xi) = subgaussian_c1_constants(level);
                theory_constants(m_xi, alpha_xi, 2.0, level, self.t)?
            }
        };
        if let Some(k) = self.kappa_override {
            set.kappa = k;
        }
        if let Some(vk) = self.varkappa_override {
            set.varkappa = vk;
        }
        Ok(set)
    }

    /// Fully resolved constants, running calibration when requested.
    pub fn resolve_constants(&self) -> Result<ConstantSet> {
        let mut set = self.base_constants()?;
        if matches!(self.constants, ConstantsChoice::Calibrated) {
            set.m1_mult = calibrate(self, self.targets.alpha1, CalibrationTarget::M1)?.value;
            set.m2_mult = calibrate(self, self.targets.alpha1, CalibrationTarget::M2)?.value;
            set.m3_mult = calibrate(self, self.targets.alpha2, CalibrationTarget::M3)?.value;
        }
        Ok(set)
    }
}

/// Seed used for calibration searches.
pub fn calibration_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Seed used for held-out validation.
pub fn validation_seed(seed: u64) -> u64 {
    seed ^ 0xC2B2_AE3D_27D4_EB4F
}

fn rep_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One replication of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    /// `rho(theta - theta_hat)`.
    pub loss: f64,
    /// Oracle rate `r(theta)` at the configured varkappa.
    pub oracle_rate: f64,
    pub covered: bool,
    /// `p(I_hat)`.
    pub raw_radius: f64,
    pub selected_size: usize,
    pub oracle_size: usize,
    pub true_size: usize,
    pub t_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub reps: usize,
    /// Frequency of `loss >= M1 r(theta)` (Theorem-1 style exceedance).
    pub estimation_exceedance: f64,
    pub coverage: f64,
    /// Frequency of `p(I_hat) >= M3 r(theta)`.
    pub size_exceedance: f64,
    pub median_loss: f64,
    pub mean_selected_size: f64,
    pub nonempty_selection_rate: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// EBR rejection counter from coverage runs (0 elsewhere).
    pub ebr_rejections: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<RepRow>,
    pub aggregates: Aggregates,
    pub constants: ConstantSet,
}

impl ExperimentReport {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# schema: {REPORT_SCHEMA}")?;
        writeln!(
            out,
            "rep,loss,oracle_rate,covered,raw_radius,selected_size,oracle_size,true_size,t_star"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.rep,
                r.loss,
                r.oracle_rate,
                r.covered as u8,
                r.raw_radius,
                r.selected_size,
                r.oracle_size,
                r.true_size,
                r.t_star
            )?;
        }
        Ok(())
    }
}

fn exceeds(numerator: f64, multiplier: f64, denominator: f64) -> bool {
    if denominator == 0.0 {
        numerator > 0.0
    } else {
        numerator >= multiplier * denominator
    }
}

/// Ratio encoding matching [`exceeds`]: exceedance at multiplier m <=> ratio >= m.
fn exceed_ratio(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        if numerator > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        numerator / denominator
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
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

struct RepOutcome {
    row: RepRow,
    rejections: usize,
}

fn replicate(
    config: &ExperimentConfig,
    level: QuantileLevel,
    consts: &ConstantSet,
    fixed_signal: Option<&[f64]>,
    rep: usize,
    stream_offset: u64,
    enforce_ebr: bool,
    signal: &SignalSpec,
) -> Result<RepOutcome> {
    let sel_cfg = consts.selector_config();
    let mut rng = rep_rng(config.seed, stream_offset + rep as u64 + 1);

    let mut rejections = 0usize;
    let (theta, oracle_result, t_star) = loop {
        let theta = match fixed_signal {
            Some(t) => t.to_vec(),
            None => sample_signal_with(signal, &mut rng)?,
        };
        let o = oracle(&theta, level, &sel_cfg)?;
        let p_io = o.oracle_support.penalty();
        let t_star = if o.residual == 0.0 {
            0.0
        } else if p_io > 0.0 {
            o.residual / p_io
        } else {
            f64::INFINITY
        };
        if !enforce_ebr || t_star <= config.t {
            break (theta, o, t_star);
        }
        if fixed_signal.is_some() {
            return Err(Error::Config(
                "fixed signal violates the EBR condition at the configured t".into(),
            ));
        }
        rejections += 1;
        if rejections > 10_000 {
            return Err(Error::Config(
                "EBR rejection sampling exceeded 10000 attempts; signal class is mis-specified"
                    .into(),
            ));
        }
    };

    let xi = sample_noise_with(&config.noise, level, config.n, &mut rng)?;
    let x: Vec<f64> = theta.iter().zip(&xi).map(|(t, e)| t + e).collect();
    let (theta_hat, sel) = estimate(&x, level, &sel_cfg)?;
    let diff: Vec<f64> = theta.iter().zip(&theta_hat).map(|(t, h)| t - h).collect();
    let loss = rho(level, &diff)?;
    let raw_radius = sel.support.penalty();
    let covered = loss <= consts.m2_mult * raw_radius;

    Ok(RepOutcome {
        row: RepRow {
            rep,
            loss,
            oracle_rate: oracle_result.oracle_rate,
            covered,
            raw_radius,
            selected_size: sel.support.len(),
            oracle_size: oracle_result.oracle_support.len(),
            true_size: true_support(&theta).len(),
            t_star,
        },
        rejections,
    })
}

fn collect_rows(
    config: &ExperimentConfig,
    consts: &ConstantSet,
    signal: &SignalSpec,
    stream_offset: u64,
    enforce_ebr: bool,
) -> Result<(Vec<RepRow>, usize)> {
    let level = config.level();
    let fixed = if config.resample_signal {
        None
    } else {
        let mut rng = rep_rng(config.seed, 0);
        Some(sample_signal_with(signal, &mut rng)?)
    };
    let outcomes: Vec<Result<RepOutcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            replicate(
                config,
                level,
                consts,
                fixed.as_deref(),
                rep,
                stream_offset,
                enforce_ebr,
                signal,
            )
        })
        .collect();
    let mut rows = Vec::with_capacity(config.reps);
    let mut rejections = 0usize;
    for outcome in outcomes {
        let o = outcome?;
        rejections += o.rejections;
        rows.push(o.row);
    }
    if enforce_ebr && rejections > rows.len() {
        return Err(Error::Config(format!(
            "more than half of the sampled signals violated EBR ({rejections} rejections \
             for {} replications); signal class is mis-specified",
            rows.len()
        )));
    }
    Ok((rows, rejections))
}

fn aggregate(rows: &[RepRow], consts: &ConstantSet, rejections: usize) -> Aggregates {
    let reps = rows.len();
    let losses: Vec<f64> = rows.iter().map(|r| r.loss).collect();
    let count = |f: &dyn Fn(&RepRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64;
    Aggregates {
        reps,
        estimation_exceedance: count(&|r| exceeds(r.loss, consts.m1_mult, r.oracle_rate))
            / reps as f64,
        coverage: count(&|r| r.covered) / reps as f64,
        size_exceedance: count(&|r| exceeds(r.raw_radius, consts.m3_mult, r.oracle_rate))
            / reps as f64,
        median_loss: median(&losses),
        mean_selected_size: rows.iter().map(|r| r.selected_size as f64).sum::<f64>()
            / reps as f64,
        nonempty_selection_rate: count(&|r| r.selected_size > 0) / reps as f64,
        m1: consts.m1_mult,
        m2: consts.m2_mult,
        m3: consts.m3_mult,
        ebr_rejections: rejections,
    }
}

/// Estimation experiment (Theorem-1 style): loss versus the oracle rate.
pub fn run_estimation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let consts = config.resolve_constants()?;
    let (rows, _) = collect_rows(config, &consts, &config.signal, 0, false)?;
    let aggregates = aggregate(&rows, &consts, 0);
    Ok(ExperimentReport {
        rows,
        aggregates,
        constants: consts,
    })
}

/// Coverage/size experiment (Theorem-2 style) over the EBR class at `config.t`.
pub fn run_uq(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let consts = config.resolve_constants()?;
    let (rows, rejections) = collect_rows(config, &consts, &config.signal, 0, true)?;
    let aggregates = aggregate(&rows, &consts, rejections);
    Ok(ExperimentReport {
        rows,
        aggregates,
        constants: consts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: usize,
    pub median_loss: f64,
    /// `s sqrt(log(en/s))`.
    pub benchmark: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# schema: {SWEEP_SCHEMA}")?;
        writeln!(out, "s,median_loss,benchmark,ratio")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.s, r.median_loss, r.benchmark, r.ratio)?;
        }
        Ok(())
    }
}

/// Median loss against the `s sqrt(log(en/s))` benchmark over a sparsity grid.
pub fn run_rate_sweep(config: &ExperimentConfig, s_grid: &[usize]) -> Result<SweepTable> {
    config.validate()?;
    let consts = config.base_constants()?;
    if s_grid.iter().any(|&s| s == 0 || s > config.n) {
        return Err(Error::Config("sweep grid must lie in 1..=n".into()));
    }
    let mut rows = Vec::with_capacity(s_grid.len());
    for (k, &s) in s_grid.iter().enumerate() {
        let signal = config.signal.with_sparsity(s);
        signal.validate()?;
        let offset = (k as u64 + 1) * config.reps as u64;
        let (rep_rows, _) = collect_rows(config, &consts, &signal, offset, false)?;
        let losses: Vec<f64> = rep_rows.iter().map(|r| r.loss).collect();
        let median_loss = median(&losses);
        let benchmark = penalty_size(s, config.n);
        rows.push(SweepRow {
            s,
            median_loss,
            benchmark,
            ratio: median_loss / benchmark,
        });
    }
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationTarget {
    M1,
    M2,
    M3,
    Kappa,
    C,
}

impl std::str::FromStr for CalibrationTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Self::M1),
            "m2" => Ok(Self::M2),
            "m3" => Ok(Self::M3),
            "kappa" => Ok(Self::Kappa),
            "c" => Ok(Self::C),
            other => Err(Error::Config(format!(
                "unknown calibration target {other} (expected m1|m2|m3|kappa|c)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub which: CalibrationTarget,
    pub value: f64,
    /// Achieved frequency on the calibration seed.
    pub calibration_frequency: f64,
    /// Achieved frequency on the disjoint validation seed.
    pub validation_frequency: f64,
}

/// Smallest multiplier meeting `frequency <= target` via binary search over a
/// cached, monotone exceedance response.
fn search_multiplier(ratios: &[f64], target: f64) -> Result<f64> {
    let freq = |m: f64| ratios.iter().filter(|&&r| r >= m).count() as f64 / ratios.len() as f64;
    let lo = 0.0;
    if freq(lo) <= target {
        return Ok(lo);
    }
    let mut hi = 1.0;
    while freq(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Calibration(format!(
                "no multiplier below 1e12 meets target {target} \
                 (irreducible exceedance {:.4})",
                freq(f64::MAX)
            )));
        }
    }
    if freq(lo) < freq(hi) {
        return Err(Error::Calibration(
            "non-monotone response over the search bracket".into(),
        ));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if freq(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-9 * hi.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

fn multiplier_ratios(
    config: &ExperimentConfig,
    consts: &ConstantSet,
    seed: u64,
    which: CalibrationTarget,
) -> Result<Vec<f64>> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    let enforce = matches!(which, CalibrationTarget::M2 | CalibrationTarget::M3);
    let (rows, _) = collect_rows(&cfg, consts, &cfg.signal.clone(), 0, enforce)?;
    Ok(rows
        .iter()
        .map(|r| match which {
            CalibrationTarget::M1 => exceed_ratio(r.loss, r.oracle_rate),
            CalibrationTarget::M2 => exceed_ratio(r.loss, r.raw_radius),
            CalibrationTarget::M3 => exceed_ratio(r.raw_radius, r.oracle_rate),
            _ => unreachable!("multiplier_ratios is only called for M1/M2/M3"),
        })
        .collect())
}

/// Per-replication critical kappa on pure noise: `I_hat` is nonempty iff
/// kappa falls strictly below this value.
fn kappa_criticals(config: &ExperimentConfig, seed: u64) -> Result<Vec<f64>> {
    let level = config.level();
    let criticals: Vec<Result<f64>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(seed, rep as u64 + 1);
            let xi = sample_noise_with(&config.noise, level, config.n, &mut rng)?;
            // size_profile at kappa = 0 carries the raw residuals B_i.
            let zero = SelectorConfig::new(0.0, 1.0)?;
            let profile = select_pattern(&xi, level, &zero)?.size_profile;
            let b0 = profile[0];
            let critical = (1..profile.len())
                .map(|i| (b0 - profile[i]) / penalty_size(i, config.n))
                .fold(0.0f64, f64::max);
            Ok(critical)
        })
        .collect();
    criticals.into_iter().collect()
}

/// Calibrate one constant: binary search on the calibration seed, report the
/// achieved frequency on the disjoint validation seed.
pub fn calibrate(
    config: &ExperimentConfig,
    target: f64,
    which: CalibrationTarget,
) -> Result<CalibrationOutcome> {
    config.validate()?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!(
            "calibration target must lie in (0,1], got {target}"
        )));
    }
    let consts = config.base_constants()?;
    let cal_seed = calibration_seed(config.seed);
    let val_seed = validation_seed(config.seed);

    match which {
        CalibrationTarget::M1 | CalibrationTarget::M2 | CalibrationTarget::M3 => {
            let cal = multiplier_ratios(config, &consts, cal_seed, which)?;
            let value = search_multiplier(&cal, target)?;
            let freq_of = |rs: &[f64]| {
                rs.iter().filter(|&&r| r >= value).count() as f64 / rs.len() as f64
            };
            let val = multiplier_ratios(config, &consts, val_seed, which)?;
            Ok(CalibrationOutcome {
                which,
                value,
                calibration_frequency: freq_of(&cal),
                validation_frequency: freq_of(&val),
            })
        }
        CalibrationTarget::Kappa => {
            // False-positive rate of a nonempty selection on pure noise.
            let cal = kappa_criticals(config, cal_seed)?;
            let value = search_multiplier(&cal, target)?;
            let freq_of =
                |cs: &[f64]| cs.iter().filter(|&&c| c > value).count() as f64 / cs.len() as f64;
            let val = kappa_criticals(config, val_seed)?;
            Ok(CalibrationOutcome {
                which,
                value,
                calibration_frequency: freq_of(&cal),
                validation_frequency: freq_of(&val),
            })
        }
        CalibrationTarget::C => {
            let level = config.level();
            let sel_cfg = consts.selector_config();
            let s = config.signal.sparsity().max(1);
            let n = config.n;
            let sampler = |seed: u64| {
                move |c: f64, k: usize| {
                    let spec = SignalSpec {
                        class: SignalClass::ThetaC { s, c },
                        n,
                    };
                    let mut rng = rep_rng(seed, k as u64 + 1);
                    sample_signal_with(&spec, &mut rng).expect("valid theta-C spec")
                }
            };
            let value = crate::oracle::calibrate_theta_c(
                level,
                &sel_cfg,
                1.0,
                1000,
                sampler(cal_seed),
            )?;
            // Validation: fraction of fresh Theta(C) draws with t_star != 0.
            let sample_val = sampler(val_seed);
            let mut violations = 0usize;
            for k in 0..1000 {
                let theta = sample_val(value, k);
                let a = crate::oracle::ebr_assess(&theta, level, &sel_cfg, value)?;
                if a.t_star != 0.0 {
                    violations += 1;
                }
            }
            Ok(CalibrationOutcome {
                which,
                value,
                calibration_frequency: 0.0,
                validation_frequency: violations as f64 / 1000.0,
            })
        }
    }
}
