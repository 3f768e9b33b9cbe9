//! Penalized sparsity-pattern selection.
//!
//! The criterion `C(I) = rho(P_{I^c} X) + kappa p(I)` is minimized over all
//! subsets of `[n]` by a sorted cumulative-sum reduction: only the size of the
//! support matters once coordinates are ranked by their scalar loss, so the
//! search collapses to n + 1 candidates and costs O(n log n).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{penalty_size, project, rho, CompensatedSum, QuantileLevel, SupportSet};

/// Penalty multipliers: `kappa` for selection, `varkappa` for the oracle rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub kappa: f64,
    pub varkappa: f64,
}

impl SelectorConfig {
    pub fn new(kappa: f64, varkappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidInput(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(varkappa >= 0.0) || !varkappa.is_finite() {
            return Err(Error::InvalidInput(format!(
                "varkappa must be >= 0, got {varkappa}"
            )));
        }
        Ok(Self { kappa, varkappa })
    }
}

/// Outcome of a pattern search: the minimizer, its criterion value, and the
/// criterion evaluated at every candidate size 0..=n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub support: SupportSet,
    pub criterion_value: f64,
    pub size_profile: Vec<f64>,
}

/// `C(I) = rho(P_{I^c} X) + kappa p(I)` for one explicit support.
pub fn criterion(
    x: &[f64],
    support: &SupportSet,
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<f64> {
    if support.n() != x.len() {
        return Err(Error::InvalidInput(format!(
            "support has n = {} but vector has length {}",
            support.n(),
            x.len()
        )));
    }
    let residual = project(x, &support.complement())?;
    Ok(rho(level, &residual)? + cfg.kappa * support.penalty())
}

/// Sorted-cumsum minimization of `B_i + multiplier * p(i)` over sizes i = 0..=n,
/// where `B_i` is the sum of the n - i smallest entries of `b`.
///
/// Ties: equal criterion values resolve to the smallest size; equal `b` values
/// at the size boundary admit the smallest coordinate index first.
pub(crate) fn penalized_argmin(b: &[f64], multiplier: f64, n: usize) -> SelectionResult {
    debug_assert_eq!(b.len(), n);
    // Rank coordinates by loss descending, index ascending on ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[j].partial_cmp(&b[i]).unwrap().then(i.cmp(&j)));

    // residual_after[i] = sum of b over coordinates ranked below the first i.
    let mut residual_after = vec![0.0; n + 1];
    let mut acc = CompensatedSum::default();
    for i in (0..n).rev() {
        acc.add(b[order[i]]);
        residual_after[i] = acc.value();
    }

    let mut best_size = 0usize;
    let mut best_value = f64::INFINITY;
    let mut profile = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let value = residual_after[i] + multiplier * penalty_size(i, n);
        profile.push(value);
        if value < best_value {
            best_value = value;
            best_size = i;
        }
    }

    let mut indices: Vec<usize> = order[..best_size].iter().map(|&i| i + 1).collect();
    indices.sort_unstable();
    SelectionResult {
        support: SupportSet::new(indices, n).expect("indices built in range"),
        criterion_value: best_value,
        size_profile: profile,
    }
}

/// Minimize `C(I)` over all supports via the size reduction.
pub fn select_pattern(
    x: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<SelectionResult> {
    if x.is_empty() {
        return Err(Error::InvalidInput("select_pattern on an empty vector".into()));
    }
    let b: Vec<f64> = x.iter().map(|&xi| level.rho_scalar(xi)).collect();
    Ok(penalized_argmin(&b, cfg.kappa, x.len()))
}

/// The penalized projection estimator `theta_hat = P_{I_hat} X`.
pub fn estimate(
    x: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<(Vec<f64>, SelectionResult)> {
    let result = select_pattern(x, level, cfg)?;
    let theta_hat = project(x, &result.support)?;
    Ok((theta_hat, result))
}

/// Exhaustive minimizer over all 2^n subsets; the test oracle for
/// [`select_pattern`]. Refuses n > 15.
pub fn brute_force_select(
    x: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<SelectionResult> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidInput("brute_force_select on an empty vector".into()));
    }
    if n > 15 {
        return Err(Error::InvalidInput(format!(
            "brute_force_select is capped at n = 15, got {n}"
        )));
    }
    let mut best: Option<(f64, SupportSet)> = None;
    let mut profile = vec![f64::INFINITY; n + 1];
    for mask in 0u32..(1 << n) {
        let indices: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
        let size = indices.len();
        let support = SupportSet::new(indices, n)?;
        let value = criterion(x, &support, level, cfg)?;
        if value < profile[size] {
            profile[size] = value;
        }
        let better = match &best {
            None => true,
            Some((bv, bs)) => {
                value < *bv || (value == *bv && size < bs.len())
            }
        };
        if better {
            best = Some((value, support));
        }
    }
    let (criterion_value, support) = best.expect("at least the empty set was visited");
    Ok(SelectionResult {
        support,
        criterion_value,
        size_profile: profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(tau: f64) -> QuantileLevel {
        QuantileLevel::new(tau).unwrap()
    }

    fn cfg(kappa: f64) -> SelectorConfig {
        SelectorConfig::new(kappa, 1.0).unwrap()
    }

    #[test]
    fn criterion_examples() {
        let x = [10.0, 0.1, -0.2];
        let l = level(0.5);
        let c = cfg(1.0);
        let empty = SupportSet::empty(3);
        assert!((criterion(&x, &empty, l, &c).unwrap() - 5.15).abs() < 1e-12);
        let full = SupportSet::full(3);
        assert!((criterion(&x, &full, l, &c).unwrap() - 3.0).abs() < 1e-12);
        let one = SupportSet::new(vec![1], 3).unwrap();
        let expect = 0.15 + (1.0 + (3.0f64).ln()).sqrt();
        assert!((criterion(&x, &one, l, &c).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn select_pattern_examples() {
        let x = [10.0, 0.1, -0.2];
        let r = select_pattern(&x, level(0.5), &cfg(1.0)).unwrap();
        assert_eq!(r.support.indices(), &[1]);
        let expect = 0.15 + (1.0 + (3.0f64).ln()).sqrt();
        assert!((r.criterion_value - expect).abs() < 1e-12);
        assert_eq!(r.size_profile.len(), 4);

        // All zeros: the empty support wins via the smallest-size tie-break.
        let r = select_pattern(&[0.0; 7], level(0.3), &cfg(1.0)).unwrap();
        assert!(r.support.is_empty());
        assert_eq!(r.criterion_value, 0.0);

        // Huge penalty forces the empty support.
        let r = select_pattern(&x, level(0.5), &cfg(1e9)).unwrap();
        assert!(r.support.is_empty());
    }

    #[test]
    fn estimate_examples() {
        let l = level(0.5);
        let (theta, r) = estimate(&[10.0, 0.1, -0.2], l, &cfg(1.0)).unwrap();
        assert_eq!(theta, vec![10.0, 0.0, 0.0]);
        assert_eq!(r.support.indices(), &[1]);

        let (theta, _) = estimate(&[0.0; 4], l, &cfg(1.0)).unwrap();
        assert_eq!(theta, vec![0.0; 4]);

        // kappa = 0 (test-mode degenerate): full support, theta_hat = X.
        let x = [1.0, -2.0, 3.0];
        let (theta, _) = estimate(&x, l, &cfg(0.0)).unwrap();
        assert_eq!(theta, x.to_vec());
    }

    #[test]
    fn brute_force_examples() {
        let l = level(0.5);
        let c = cfg(1.0);
        let fast = select_pattern(&[10.0, 0.1, -0.2], l, &c).unwrap();
        let slow = brute_force_select(&[10.0, 0.1, -0.2], l, &c).unwrap();
        assert!((fast.criterion_value - slow.criterion_value).abs() < 1e-12);
        assert_eq!(fast.support, slow.support);

        let r = brute_force_select(&[5.0], l, &c).unwrap();
        assert_eq!(r.support.indices(), &[1]);
        assert!((r.criterion_value - 1.0).abs() < 1e-12);

        let r = brute_force_select(&[0.0; 3], l, &c).unwrap();
        assert!(r.support.is_empty());

        assert!(brute_force_select(&[0.0; 16], l, &c).is_err());
    }

    #[test]
    fn residuals_non_increasing_in_size() {
        let x = [3.0, -1.0, 0.5, 2.0, -2.0];
        let l = level(0.25);
        let r = select_pattern(&x, l, &cfg(1.0)).unwrap();
        // Strip the penalty back off the profile to recover B_i.
        for i in 1..r.size_profile.len() {
            let b_prev = r.size_profile[i - 1] - penalty_size(i - 1, 5);
            let b_cur = r.size_profile[i] - penalty_size(i, 5);
            assert!(b_cur <= b_prev + 1e-12);
        }
    }

    #[test]
    fn tie_break_prefers_smaller_size() {
        // n = 1, p(1) = 1: kappa = rho(x) makes C_0 = C_1 exactly.
        let x = [4.0];
        let r = select_pattern(&x, level(0.5), &cfg(2.0)).unwrap();
        assert_eq!(r.size_profile[0], r.size_profile[1]);
        assert!(r.support.is_empty());
    }
}
