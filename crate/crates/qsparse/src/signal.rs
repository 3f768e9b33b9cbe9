//! Samplers for the signal classes used in the experiments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::penalty_size;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum SignalClass {
    /// Exactly `s` nonzeros of magnitude `a`, random positions and signs.
    L0Sparse { s: usize, a: f64 },
    /// `s` nonzeros of magnitude `c sqrt(log(en/s))`: the Theta(C) class.
    ThetaC { s: usize, c: f64 },
    /// Dense vector with geometrically decaying magnitudes: coordinate k gets
    /// `sqrt(log(en/s_eff)) * ratio^(k-1)` with a random sign, so roughly the
    /// first `s_eff` coordinates sit above the detection scale.
    GeometricDecay { s_eff: usize, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(flatten)]
    pub class: SignalClass,
    pub n: usize,
}

impl SignalSpec {
    pub fn new(class: SignalClass, n: usize) -> Result<Self> {
        let spec = Self { class, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("signal dimension must be >= 1".into()));
        }
        match &self.class {
            SignalClass::L0Sparse { s, a } => {
                if *s > self.n {
                    return Err(Error::InvalidInput(format!(
                        "sparsity s = {s} exceeds n = {}",
                        self.n
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidInput("magnitude must be finite".into()));
                }
                Ok(())
            }
            SignalClass::ThetaC { s, c } => {
                if *s > self.n {
                    return Err(Error::InvalidInput(format!(
                        "sparsity s = {s} exceeds n = {}",
                        self.n
                    )));
                }
                if !(*c > 0.0) {
                    return Err(Error::InvalidInput("C must be positive".into()));
                }
                Ok(())
            }
            SignalClass::GeometricDecay { s_eff, ratio } => {
                if *s_eff == 0 || *s_eff > self.n {
                    return Err(Error::InvalidInput(format!(
                        "s_eff must lie in 1..=n, got {s_eff}"
                    )));
                }
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::InvalidInput("ratio must lie in (0,1)".into()));
                }
                Ok(())
            }
        }
    }

    /// Sparsity parameter of the class (for sweeps); `s_eff` for decaying signals.
    pub fn sparsity(&self) -> usize {
        match &self.class {
            SignalClass::L0Sparse { s, .. } | SignalClass::ThetaC { s, .. } => *s,
            SignalClass::GeometricDecay { s_eff, .. } => *s_eff,
        }
    }

    /// Same class with a different sparsity parameter.
    pub fn with_sparsity(&self, s_new: usize) -> SignalSpec {
        let class = match &self.class {
            SignalClass::L0Sparse { a, .. } => SignalClass::L0Sparse { s: s_new, a: *a },
            SignalClass::ThetaC { c, .. } => SignalClass::ThetaC { s: s_new, c: *c },
            SignalClass::GeometricDecay { ratio, .. } => SignalClass::GeometricDecay {
                s_eff: s_new,
                ratio: *ratio,
            },
        };
        SignalSpec { class, n: self.n }
    }
}

/// Draw a signal using the caller's RNG stream.
pub fn sample_signal_with(spec: &SignalSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = spec.n;
    let mut theta = vec![0.0; n];
    match &spec.class {
        SignalClass::L0Sparse { s, a } => {
            place_spikes(&mut theta, *s, a.abs(), rng);
        }
        SignalClass::ThetaC { s, c } => {
            let magnitude = if *s == 0 {
                0.0
            } else {
                c * (penalty_size(*s, n) / *s as f64)
            };
            place_spikes(&mut theta, *s, magnitude, rng);
        }
        SignalClass::GeometricDecay { s_eff, ratio } => {
            let base = (penalty_size(*s_eff, n) / *s_eff as f64) * 1.0;
            let mut mag = base;
            for v in theta.iter_mut() {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                *v = sign * mag;
                mag *= ratio;
            }
        }
    }
    Ok(theta)
}

fn place_spikes(theta: &mut [f64], s: usize, magnitude: f64, rng: &mut impl Rng) {
    let positions = rand::seq::index::sample(rng, theta.len(), s);
    for pos in positions {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        theta[pos] = sign * magnitude;
    }
}

/// Seeded draw: deterministic in `(spec, seed)`.
pub fn sample_signal(spec: &SignalSpec, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_signal_with(spec, &mut rng)
}
