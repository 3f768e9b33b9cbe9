//! Confidence balls in the quantile-loss geometry and the theory constant preset.
//!
//! The ball `B(theta_hat, M2 * p(I_hat))` uses the asymmetric membership test
//! `rho(theta - center) <= radius`. The constant preset transcribes the chain of
//! sufficient choices from the estimation and coverage proofs; the resulting
//! multipliers are valid but very conservative, so experiments usually run with
//! Monte Carlo calibrated counterparts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{lambda, rho, QuantileLevel};
use crate::selector::{estimate, SelectionResult, SelectorConfig};

/// All tuning and bound constants for one (tau, noise) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub tau: f64,
    pub m_xi: f64,
    pub alpha_xi: f64,
    pub h_xi: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub a7: f64,
    pub kappa: f64,
    pub varkappa: f64,
    pub delta: f64,
    pub m1_mult: f64,
    /// Structural parameter the coverage multiplier was evaluated at.
    pub t: f64,
    /// `M2(t) = M1 (t + varkappa) / delta`.
    pub m2_mult: f64,
    pub m3_mult: f64,
    pub h1_prime: f64,
    pub h1: f64,
    pub m1_exp: f64,
}

impl ConstantSet {
    /// `M2` at another structural parameter.
    pub fn m2_at(&self, t: f64) -> f64 {
        self.m1_mult * (t + self.varkappa) / self.delta
    }

    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            kappa: self.kappa,
            varkappa: self.varkappa,
        }
    }

    /// Estimation tail bound `H1 e^{-m1 lambda(1)}` at dimension n.
    pub fn estimation_bound(&self, n: usize) -> f64 {
        self.h1 * (-self.m1_exp * lambda(1, n)).exp()
    }

    /// Size-relation bound as the two-term sum `H'_1 e^{-A4 l} + H_xi e^{-alpha_xi l}`.
    ///
    /// The proof leaves the bound in this form rather than collapsing it into a
    /// single (H, m) pair; we report it the same way.
    pub fn size_bound(&self, n: usize) -> f64 {
        let l = lambda(1, n);
        self.h1_prime * (-self.a4 * l).exp() + self.h_xi * (-self.alpha_xi * l).exp()
    }

    /// Coverage bound: the size-relation terms plus the estimation term.
    pub fn coverage_bound(&self, n: usize) -> f64 {
        self.estimation_bound(n) + self.size_bound(n)
    }

    /// Every inequality the construction relies on, checked numerically.
    pub fn validate(&self) -> Result<()> {
        let c_tau = QuantileLevel::new(self.tau)?.big_c_tau();
        let checks: [(&str, bool); 7] = [
            ("A3 > 1", self.a3 > 1.0),
            ("A4 > 0", self.a4 > 0.0),
            (
                "A5 > C_tau M_xi / varkappa",
                self.a5 > c_tau * self.m_xi / self.varkappa,
            ),
            (
                "varkappa > 3 (C_tau M_xi + C_tau + kappa)",
                self.varkappa > 3.0 * (c_tau * self.m_xi + c_tau + self.kappa),
            ),
            ("A7 > 0", self.a7 > 0.0),
            (
                "A7 M3 varkappa > C_tau (M_xi + 1)",
                self.a7 * self.m3_mult * self.varkappa > c_tau * (self.m_xi + 1.0),
            ),
            (
                "all finite",
                [
                    self.a1, self.a2, self.m1_mult, self.m2_mult, self.m3_mult, self.h1,
                ]
                .iter()
                .all(|v| v.is_finite()),
            ),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Numeric(format!("constant set violates {name}")));
            }
        }
        Ok(())
    }
}

/// Build the full constant chain from the tail constants `(M_xi, alpha_xi, H_xi)`.
///
/// Strict "sufficiently large" requirements (varkappa, M3) are met with a fixed
/// margin of 1 so the preset is deterministic.
pub fn theory_constants(
    m_xi: f64,
    alpha_xi: f64,
    h_xi: f64,
    level: QuantileLevel,
    t: f64,
) -> Result<ConstantSet> {
    if !(m_xi > 0.0 && alpha_xi > 0.0 && h_xi > 0.0) {
        return Err(Error::InvalidInput(
            "tail constants M_xi, alpha_xi, H_xi must be positive".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let c_tau = level.big_c_tau();

    let a2 = m_xi + (2.0 / alpha_xi).sqrt();
    let a3 = alpha_xi * (a2 - m_xi) * (a2 - m_xi); // = 2 by construction
    let a4 = (a3 - 1.0) / 2.0;
    let kappa = a2 + 1.0;
    let varkappa = 3.0 * (c_tau * m_xi + c_tau + kappa) + 1.0;
    let a1 = ((c_tau / varkappa) * (m_xi + 1.0) + (kappa / varkappa).max(1.0))
        / (varkappa.recip().min(1.0));
    let a5 = ((kappa - a2) / varkappa).min(1.0) * a1 - (kappa / varkappa).max(1.0);
    let a6 = alpha_xi * {
        let z = a5 * varkappa / c_tau - m_xi;
        z * z
    };
    let m1_mult = a1 * (a2 * c_tau / varkappa).max(1.0) + 1.0;
    let delta = 0.5;
    let m2_mult = m1_mult * (t + varkappa) / delta;
    // Smallest M3 with (kappa - A2 - 1/M3) M3 varkappa > C_tau (M_xi + 1),
    // i.e. M3 (kappa - A2) varkappa > C_tau (M_xi + 1) + varkappa, plus margin 1.
    let m3_mult = (c_tau * (m_xi + 1.0) + varkappa) / ((kappa - a2) * varkappa) + 1.0;
    let a7 = kappa - a2 - m3_mult.recip();
    let h1_prime = h_xi * (a4.exp() - 1.0).recip();
    let h1 = h1_prime + h_xi;
    let m1_exp = a4.min(a6);

    let set = ConstantSet {
        tau: level.tau(),
        m_xi,
        alpha_xi,
        h_xi,
        a1,
        a2,
        a3,
        a4,
        a5,
        a6,
        a7,
        kappa,
        varkappa,
        delta,
        m1_mult,
        t,
        m2_mult,
        m3_mult,
        h1_prime,
        h1,
        m1_exp,
    };
    set.validate()?;
    Ok(set)
}

/// A quantile-loss confidence ball `{theta : rho(theta - center) <= radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub raw_radius: f64,
    pub multiplier: f64,
}

/// Run the estimator on `x` and wrap it in a ball of radius `M2 * p(I_hat)`.
pub fn build_ball(
    x: &[f64],
    level: QuantileLevel,
    cfg: &SelectorConfig,
    m2: f64,
) -> Result<(ConfidenceBall, SelectionResult)> {
    if !(m2 > 0.0) {
        return Err(Error::InvalidInput(format!("M2 must be positive, got {m2}")));
    }
    let (center, result) = estimate(x, level, cfg)?;
    let raw_radius = result.support.penalty();
    Ok((
        ConfidenceBall {
            center,
            radius: m2 * raw_radius,
            raw_radius,
            multiplier: m2,
        },
        result,
    ))
}

/// Asymmetric membership: `rho(theta - center) <= radius`. The order of the
/// subtraction matters; swapping arguments can change the answer.
pub fn contains(ball: &ConfidenceBall, theta: &[f64], level: QuantileLevel) -> Result<bool> {
    if theta.len() != ball.center.len() {
        return Err(Error::InvalidInput(format!(
            "ball has dimension {} but theta has length {}",
            ball.center.len(),
            theta.len()
        )));
    }
    let diff: Vec<f64> = theta
        .iter()
        .zip(&ball.center)
        .map(|(t, c)| t - c)
        .collect();
    Ok(rho(level, &diff)? <= ball.radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(tau: f64) -> QuantileLevel {
        QuantileLevel::new(tau).unwrap()
    }

    #[test]
    fn gaussian_half_preset() {
        // M_xi, alpha_xi derived for 1-sub-Gaussian noise at tau = 1/2.
        let set = theory_constants(0.6797, 1.5, 2.0, level(0.5), 0.0).unwrap();
        assert!((set.a2 - 1.8344).abs() < 5e-4);
        assert!((set.kappa - 2.8344).abs() < 5e-4);
        assert!((set.varkappa - 14.543).abs() < 5e-3);
        assert!((set.a3 - 2.0).abs() < 1e-12);
        assert!((set.a4 - 0.5).abs() < 1e-12);
        // A6 collapses to alpha_xi because A5 varkappa / C_tau - M_xi = 1.
        assert!((set.a6 - set.alpha_xi).abs() < 1e-9);
        assert!((set.m2_mult - 2.0 * set.m1_mult * set.varkappa).abs() < 1e-9);
        set.validate().unwrap();
    }

    #[test]
    fn preset_valid_across_levels() {
        for tau in [0.1, 0.25, 0.5, 0.75, 0.9] {
            for (m, a) in [(0.5, 2.0), (1.0, 0.7), (2.0, 0.2)] {
                let set = theory_constants(m, a, 2.0, level(tau), 1.5).unwrap();
                set.validate().unwrap();
                assert!((set.a3 - 2.0).abs() < 1e-12);
                assert!((set.m2_at(1.5) - set.m2_mult).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_examples() {
        let l = level(0.5);
        let cfg = SelectorConfig::new(1.0, 1.0).unwrap();
        let (ball, result) = build_ball(&[10.0, 0.1, -0.2], l, &cfg, 2.0).unwrap();
        assert_eq!(ball.center, vec![10.0, 0.0, 0.0]);
        let expect = (1.0 + (3.0f64).ln()).sqrt();
        assert!((ball.raw_radius - expect).abs() < 1e-12);
        assert!((ball.radius - 2.0 * expect).abs() < 1e-12);
        assert_eq!(result.support.indices(), &[1]);

        let (ball, _) = build_ball(&[0.0; 3], l, &cfg, 2.0).unwrap();
        assert_eq!(ball.raw_radius, 0.0);
        assert!(contains(&ball, &[0.0; 3], l).unwrap());
        assert!(!contains(&ball, &[0.0, 0.0, 1e-12], l).unwrap());
    }

    #[test]
    fn membership_is_asymmetric() {
        let l = level(0.25);
        let ball = ConfidenceBall {
            center: vec![0.0],
            radius: 1.0,
            raw_radius: 1.0,
            multiplier: 1.0,
        };
        // rho_{0.25}(-2) = 1.5 > 1, rho_{0.25}(2) = 0.5 <= 1.
        assert!(!contains(&ball, &[-2.0], l).unwrap());
        assert!(contains(&ball, &[2.0], l).unwrap());
        assert!(contains(&ball, &[0.0, 0.0], l).is_err());
    }
}
