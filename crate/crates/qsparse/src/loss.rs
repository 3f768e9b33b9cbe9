//! Quantile loss, quantile projection, and the complexity penalty.
//!
//! The loss `rho_tau(x) = sum_i x_i (tau - 1{x_i <= 0})` behaves like an
//! asymmetric l1 norm: it is zero only at zero, satisfies the triangle
//! inequality, and sandwiches `|x|_1` between `(1-c_tau)` and `c_tau`
//! multiples. The penalty `p(I) = |I| sqrt(log(en/|I|))` is the model
//! complexity term paired with it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quantile level tau in (0,1) with its derived loss constants.
///
/// `c_tau = max(tau, 1-tau)` bounds the loss against the l1 norm and
/// `big_c_tau = c_tau / (1 - c_tau)` controls the asymmetry `rho(-x) <= C rho(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevel {
    tau: f64,
    c_tau: f64,
    big_c_tau: f64,
}

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "quantile level must lie in (0,1), got {tau}"
            )));
        }
        let c_tau = tau.max(1.0 - tau);
        Ok(Self {
            tau,
            c_tau,
            big_c_tau: c_tau / (1.0 - c_tau),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn c_tau(&self) -> f64 {
        self.c_tau
    }

    /// The asymmetry constant `max{(1-tau)/tau, tau/(1-tau)}`.
    pub fn big_c_tau(&self) -> f64 {
        self.big_c_tau
    }

    /// Scalar loss `x (tau - 1{x <= 0})`, always nonnegative.
    #[inline]
    pub fn rho_scalar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            x * (self.tau - 1.0)
        } else {
            x * self.tau
        }
    }
}

/// Compensated (Neumaier) summation; keeps reductions accurate for large n.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Quantile loss `rho_tau(x)` of a vector; error on an empty input.
pub fn rho(level: QuantileLevel, x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidInput("rho of an empty vector".into()));
    }
    Ok(compensated_sum(x.iter().map(|&xi| level.rho_scalar(xi))))
}

/// A sparsity pattern: a subset of coordinates `{1..n}` (1-based, sorted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
    n: usize,
}

impl SupportSet {
    /// Build from 1-based indices; duplicates and out-of-range entries are rejected.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("ambient dimension must be >= 1".into()));
        }
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!("duplicate index {}", w[0])));
            }
        }
        if let Some(&first) = indices.first() {
            if first == 0 {
                return Err(Error::InvalidInput("indices are 1-based; got 0".into()));
            }
        }
        if let Some(&last) = indices.last() {
            if last > n {
                return Err(Error::InvalidInput(format!("index {last} exceeds n = {n}")));
            }
        }
        Ok(Self { indices, n })
    }

    pub fn empty(n: usize) -> Self {
        Self { indices: Vec::new(), n }
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (1..=n).collect(),
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 1-based, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn complement(&self) -> SupportSet {
        let mut out = Vec::with_capacity(self.n - self.indices.len());
        let mut it = self.indices.iter().peekable();
        for i in 1..=self.n {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        SupportSet {
            indices: out,
            n: self.n,
        }
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Complexity penalty `p(I) = |I| sqrt(log(en/|I|))`.
    pub fn penalty(&self) -> f64 {
        penalty_size(self.len(), self.n)
    }
}

/// Quantile projection `P_I x`: keep coordinates in `I`, zero the rest.
///
/// This is the minimizer of `rho(x - y)` over `y` supported on `I`.
pub fn project(x: &[f64], support: &SupportSet) -> Result<Vec<f64>> {
    if support.n() != x.len() {
        return Err(Error::InvalidInput(format!(
            "support has n = {} but vector has length {}",
            support.n(),
            x.len()
        )));
    }
    let mut out = vec![0.0; x.len()];
    for &i in support.indices() {
        out[i - 1] = x[i - 1];
    }
    Ok(out)
}

/// `lambda(s) = s log(en/s)` with the convention `lambda(0) = 0`.
pub fn complexity(s: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    if s > n {
        return Err(Error::InvalidInput(format!("s = {s} exceeds n = {n}")));
    }
    Ok(lambda(s, n))
}

#[inline]
pub(crate) fn lambda(s: usize, n: usize) -> f64 {
    if s == 0 {
        0.0
    } else {
        s as f64 * (1.0 + (n as f64).ln() - (s as f64).ln())
    }
}

/// `p(I)` as a function of `|I| = s`: `s sqrt(log(en/s))`, zero at `s = 0`.
#[inline]
pub fn penalty_size(s: usize, n: usize) -> f64 {
    if s == 0 {
        0.0
    } else {
        (s as f64 * lambda(s, n)).sqrt()
    }
}

/// Exact check of the summability relation: returns
/// `(sum_{|I| >= 1} e^{-nu lambda(|I|)}, (e^{nu-1} - 1)^{-1})`.
///
/// Enumerates by support size with exact binomial coefficients; capped at
/// n = 30 so the coefficients stay exactly representable.
pub fn complexity_sum_bound(n: usize, nu: f64) -> Result<(f64, f64)> {
    if !(nu > 1.0) {
        return Err(Error::InvalidInput(format!("nu must exceed 1, got {nu}")));
    }
    if n == 0 || n > 30 {
        return Err(Error::InvalidInput(format!(
            "n must lie in 1..=30 for exact enumeration, got {n}"
        )));
    }
    let mut acc = CompensatedSum::default();
    let mut binom: u64 = 1;
    for s in 1..=n {
        // C(n,s) via the multiplicative recurrence; exact for n <= 30.
        binom = binom * (n as u64 - s as u64 + 1) / s as u64;
        acc.add(binom as f64 * (-nu * lambda(s, n)).exp());
    }
    let bound = ((nu - 1.0).exp() - 1.0).recip();
    Ok((acc.value(), bound))
}
