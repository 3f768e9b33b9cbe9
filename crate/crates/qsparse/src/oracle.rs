//! Oracle sparsity structure, oracle rate, and the excessive bias restriction.
//!
//! The oracle support minimizes `r(theta, I) = rho(theta - P_I theta) + varkappa p(I)`
//! over all supports; its minimal value is the oracle rate `r(theta)`. The EBR
//! structural parameter `t_star` measures how far theta is from having its bias
//! dominated by the oracle penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{penalty_size, project, rho, QuantileLevel, SupportSet};
use crate::selector::{penalized_argmin, SelectorConfig};

/// Oracle support with the decomposition of its rate into residual + penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub oracle_support: SupportSet,
    pub oracle_rate: f64,
    pub residual: f64,
    pub penalty_part: f64,
}

/// EBR assessment: the minimal structural parameter and Theta(C) membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbrAssessment {
    /// Minimal t with `rho(theta - P_{I_o} theta) <= t p(I_o)`; infinity when the
    /// residual is positive but `p(I_o) = 0`.
    pub t_star: f64,
    pub in_theta_c: bool,
}

/// The true (minimal) sparsity pattern: exactly the nonzero coordinates.
pub fn true_support(theta: &[f64]) -> SupportSet {
    let n = theta.len();
    let indices = theta
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i + 1)
        .collect();
    SupportSet::new(indices, n).expect("indices built in range")
}

/// Minimize `r_varkappa(theta, I)` with the same sorted-cumsum reduction and
/// tie-breaks as the selector.
pub fn oracle(theta: &[f64], level: QuantileLevel, cfg: &SelectorConfig) -> Result<OracleResult> {
    if theta.is_empty() {
        return Err(Error::InvalidInput("oracle of an empty vector".into()));
    }
    let b: Vec<f64> = theta.iter().map(|&v| level.rho_scalar(v)).collect();
    let sel = penalized_argmin(&b, cfg.varkappa, theta.len());
    let residual_vec = project(theta, &sel.support.complement())?;
    let residual = rho(level, &residual_vec)?;
    let penalty_part = cfg.varkappa * sel.support.penalty();
    Ok(OracleResult {
        oracle_support: sel.support,
        oracle_rate: residual + penalty_part,
        residual,
        penalty_part,
    })
}

/// The rate `r_varkappa(theta, I)` of one explicit support.
pub fn rate_at(
    theta: &[f64],
    support: &SupportSet,
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<f64> {
    let residual_vec = project(theta, &support.complement())?;
    Ok(rho(level, &residual_vec)? + cfg.varkappa * support.penalty())
}

/// Assess the EBR condition and membership in Theta(C).
pub fn ebr_assess(
    theta: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
    c: f64,
) -> Result<EbrAssessment> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("C must be positive, got {c}")));
    }
    let o = oracle(theta, level, cfg)?;
    let p_io = o.oracle_support.penalty();
    let t_star = if o.residual == 0.0 {
        0.0
    } else if p_io > 0.0 {
        o.residual / p_io
    } else {
        f64::INFINITY
    };

    let i0 = true_support(theta);
    let in_theta_c = if i0.is_empty() {
        true // theta = 0 sits in Theta(C) through I = empty set
    } else {
        let floor = c * (penalty_size(i0.len(), theta.len()) / i0.len() as f64);
        i0.indices().iter().all(|&i| theta[i - 1].abs() >= floor)
    };
    Ok(EbrAssessment { t_star, in_theta_c })
}

/// The oracle-vs-true chain: `r(theta) <= r(theta, I_0)`, `p(I_o) <= p(I_0)`,
/// `|I_o| <= |I_0|`. Always true; exposed as a checkable contract.
pub fn oracle_vs_true_check(
    theta: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
) -> Result<bool> {
    let o = oracle(theta, level, cfg)?;
    let i0 = true_support(theta);
    let r_true = rate_at(theta, &i0, level, cfg)?;
    let tol = 1e-12 * (1.0 + r_true.abs());
    Ok(o.oracle_rate <= r_true + tol
        && o.oracle_support.penalty() <= i0.penalty() + tol
        && o.oracle_support.len() <= i0.len())
}

/// Smallest `C` (grid of factor-1.1 steps from `c_start`) such that every
/// theta produced by `sample(c)` has `t_star = 0` at the configured varkappa.
pub fn calibrate_theta_c<F>(
    level: QuantileLevel,
    cfg: &SelectorConfig,
    c_start: f64,
    samples: usize,
    mut sample: F,
) -> Result<f64>
where
    F: FnMut(f64, usize) -> Vec<f64>,
{
    if !(c_start > 0.0) {
        return Err(Error::InvalidInput("c_start must be positive".into()));
    }
    let mut c = c_start;
    while c < 1e9 {
        let mut all_zero = true;
        for k in 0..samples {
            let theta = sample(c, k);
            let assessment = ebr_assess(&theta, level, cfg, c)?;
            if assessment.t_star != 0.0 {
                all_zero = false;
                break;
            }
        }
        if all_zero {
            return Ok(c);
        }
        c *= 1.1;
    }
    Err(Error::Calibration(
        "no C below 1e9 put all sampled theta in Theta_eb(0)".into(),
    ))
}
