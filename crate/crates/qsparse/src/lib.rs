//! Penalized quantile-loss sparsity selection for the many-quantiles model.
//!
//! Observations `X_i = theta_i + xi_i` with `P(xi_i <= 0) = tau` are fit by
//! minimizing `rho(P_{I^c} X) + kappa p(I)` over sparsity patterns `I`, where
//! `rho` is the quantile (pinball) loss and `p(I) = |I| sqrt(log(en/|I|))`.
//! The crate provides:
//!
//! - [`loss`]: the quantile loss, quantile projection, and complexity penalty;
//! - [`selector`]: the O(n log n) pattern selector and the projection estimator;
//! - [`oracle`]: oracle supports, oracle rates, and the EBR condition;
//! - [`confidence`]: quantile-loss confidence balls and the theory constants;
//! - [`noise`] / [`signal`]: tau-centered noise laws and signal-class samplers;
//! - [`experiments`]: a reproducible Monte Carlo harness with calibration.

pub mod confidence;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod noise;
pub mod oracle;
pub mod selector;
pub mod signal;

pub use error::{Error, Result};
pub use loss::{QuantileLevel, SupportSet};
pub use selector::SelectorConfig;
