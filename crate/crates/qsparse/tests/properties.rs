//! Property-based invariants for the loss, projection, selector, and oracle.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qsparse::loss::{complexity_sum_bound, penalty_size, project, rho, QuantileLevel, SupportSet};
use qsparse::oracle::{ebr_assess, oracle, oracle_vs_true_check, rate_at, true_support};
use qsparse::selector::{brute_force_select, criterion, select_pattern, SelectorConfig};

const TAUS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

fn level(tau: f64) -> QuantileLevel {
    QuantileLevel::new(tau).unwrap()
}

fn random_support(rng: &mut impl Rng, n: usize) -> SupportSet {
    let mask: Vec<usize> = (1..=n).filter(|_| rng.random_bool(0.5)).collect();
    SupportSet::new(mask, n).unwrap()
}

fn vector_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, 1..64)
}

proptest! {
    #[test]
    fn rho_sandwiches_l1(x in vector_strategy(), ti in 0usize..5) {
        let l = level(TAUS[ti]);
        let r = rho(l, &x).unwrap();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        prop_assert!(r >= (1.0 - l.c_tau()) * l1 - 1e-12 * (1.0 + l1));
        prop_assert!(r <= l.c_tau() * l1 + 1e-12 * (1.0 + l1));
    }

    #[test]
    fn rho_half_is_half_l1(x in vector_strategy()) {
        let r = rho(level(0.5), &x).unwrap();
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        prop_assert!((r - 0.5 * l1).abs() <= 1e-12 * (1.0 + l1));
    }

    #[test]
    fn rho_reflection_bound(x in vector_strategy(), ti in 0usize..5) {
        let l = level(TAUS[ti]);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let lhs = rho(l, &neg).unwrap();
        let rhs = l.big_c_tau() * rho(l, &x).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
    }

    #[test]
    fn rho_triangle(x in vector_strategy(), seed in any::<u64>(), ti in 0usize..5) {
        let l = level(TAUS[ti]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|_| rng.random_range(-1e6..1e6)).collect();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = rho(l, &sum).unwrap();
        let rhs = rho(l, &x).unwrap() + rho(l, &y).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
        // Positivity of rho(x - y) for x != y.
        if x != y {
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            prop_assert!(rho(l, &diff).unwrap() > 0.0);
        }
    }

    #[test]
    fn projection_monotone(x in vector_strategy(), seed in any::<u64>(), ti in 0usize..5) {
        let l = level(TAUS[ti]);
        let n = x.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i2 = random_support(&mut rng, n);
        let i1_indices: Vec<usize> = i2
            .indices()
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        let i1 = SupportSet::new(i1_indices, n).unwrap();
        let p1 = rho(l, &project(&x, &i1).unwrap()).unwrap_or(0.0);
        let p2 = rho(l, &project(&x, &i2).unwrap()).unwrap_or(0.0);
        prop_assert!(p1 <= p2 + 1e-12 * (1.0 + p2));
    }

    #[test]
    fn selector_matches_brute_force(seed in any::<u64>(), n in 1usize..13, ti in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let kappa = [0.5, 1.0, 2.0, 5.0][rng.random_range(0..4)];
        let cfg = SelectorConfig::new(kappa, 1.0).unwrap();
        let l = level(TAUS[ti]);
        let fast = select_pattern(&x, l, &cfg).unwrap();
        let slow = brute_force_select(&x, l, &cfg).unwrap();
        let scale = 1.0 + slow.criterion_value.abs();
        prop_assert!((fast.criterion_value - slow.criterion_value).abs() <= 1e-12 * scale);
    }

    #[test]
    fn selector_scaling_consistency(seed in any::<u64>(), n in 1usize..40, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let l = level(0.25);
        let base = select_pattern(&x, l, &SelectorConfig::new(1.7, 1.0).unwrap()).unwrap();
        let scaled_x: Vec<f64> = x.iter().map(|v| c * v).collect();
        let scaled =
            select_pattern(&scaled_x, l, &SelectorConfig::new(1.7 * c, 1.0).unwrap()).unwrap();
        prop_assert_eq!(base.support, scaled.support);
    }

    #[test]
    fn estimator_support_is_selected_support(x in vector_strategy(), ti in 0usize..5) {
        let l = level(TAUS[ti]);
        let cfg = SelectorConfig::new(1.0, 1.0).unwrap();
        let (theta_hat, result) = qsparse::selector::estimate(&x, l, &cfg).unwrap();
        prop_assert_eq!(&true_support(&theta_hat), &result.support);
        // rho(X - theta_hat) equals the residual of the selected pattern.
        let diff: Vec<f64> = x.iter().zip(&theta_hat).map(|(a, b)| a - b).collect();
        let residual = rho(l, &project(&x, &result.support.complement()).unwrap()).unwrap();
        prop_assert!((rho(l, &diff).unwrap() - residual).abs() <= 1e-12 * (1.0 + residual));
    }

    #[test]
    fn sum_bound_holds(n in 1usize..31, nu in 1.01f64..6.0) {
        let (sum, bound) = complexity_sum_bound(n, nu).unwrap();
        prop_assert!(sum <= bound);
    }

    #[test]
    fn oracle_beats_true_support(seed in any::<u64>(), n in 1usize..64, ti in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = rng.random_range(0..=n.min(8));
        let mut theta = vec![0.0; n];
        for _ in 0..s {
            let i = rng.random_range(0..n);
            theta[i] = rng.random_range(-20.0..20.0);
        }
        let cfg = SelectorConfig::new(1.0, rng.random_range(0.2..5.0)).unwrap();
        prop_assert!(oracle_vs_true_check(&theta, level(TAUS[ti]), &cfg).unwrap());
    }
}

#[test]
fn projection_is_loss_optimal() {
    // rho(x - P_I x) <= rho(x - y) for 100 random y supported on I.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for ti in 0..TAUS.len() {
        let l = level(TAUS[ti]);
        for _ in 0..40 {
            let n = rng.random_range(1..32);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let support = random_support(&mut rng, n);
            let projected = project(&x, &support).unwrap();
            let best: Vec<f64> = x.iter().zip(&projected).map(|(a, b)| a - b).collect();
            let best_loss = rho(l, &best).unwrap();
            for _ in 0..100 {
                let mut y = vec![0.0; n];
                for &i in support.indices() {
                    y[i - 1] = rng.random_range(-12.0..12.0);
                }
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let other = rho(l, &diff).unwrap();
                assert!(best_loss <= other + 1e-12 * (1.0 + other));
            }
        }
    }
}

#[test]
fn selection_minimizes_over_random_supports() {
    // C(I_hat) <= C(I') for 200 random I' per instance.
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..50 {
        let n = rng.random_range(1..48);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let tau = TAUS[rng.random_range(0..5)];
        let cfg = SelectorConfig::new(rng.random_range(0.2..4.0), 1.0).unwrap();
        let l = level(tau);
        let best = select_pattern(&x, l, &cfg).unwrap();
        for _ in 0..200 {
            let other = random_support(&mut rng, n);
            let value = criterion(&x, &other, l, &cfg).unwrap();
            assert!(best.criterion_value <= value + 1e-12 * (1.0 + value));
        }
    }
}

#[test]
fn oracle_rate_minimizes_over_random_supports() {
    // r(theta) <= r(theta, I) for 200 random I per theta.
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for _ in 0..50 {
        let n = rng.random_range(1..48);
        let theta: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    rng.random_range(-20.0..20.0)
                } else {
                    0.0
                }
            })
            .collect();
        let tau = TAUS[rng.random_range(0..5)];
        let cfg = SelectorConfig::new(1.0, rng.random_range(0.2..5.0)).unwrap();
        let l = level(tau);
        let o = oracle(&theta, l, &cfg).unwrap();
        assert!((o.oracle_rate - (o.residual + o.penalty_part)).abs() <= 1e-12);
        for _ in 0..200 {
            let other = random_support(&mut rng, n);
            let value = rate_at(&theta, &other, l, &cfg).unwrap();
            assert!(o.oracle_rate <= value + 1e-12 * (1.0 + value));
        }
    }
}

#[test]
fn l0_class_rate_is_bounded_by_true_penalty() {
    // r(theta) <= varkappa * s * sqrt(log(en/s)) for theta in l0[s]: the
    // residual vanishes at I_0, so r(theta) <= varkappa p(I_0) <= varkappa p(s).
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let n = 128;
    for &tau in &TAUS {
        let l = level(tau);
        for &varkappa in &[0.5, 1.0, 3.0] {
            let cfg = SelectorConfig::new(1.0, varkappa).unwrap();
            for s in [1usize, 4, 16, 64] {
                let mut sup = 0.0f64;
                for _ in 0..100 {
                    let mut theta = vec![0.0; n];
                    for k in 0..s {
                        theta[k * (n / s)] = rng.random_range(-50.0..50.0);
                    }
                    sup = sup.max(oracle(&theta, l, &cfg).unwrap().oracle_rate);
                }
                let cap = varkappa * penalty_size(s, n);
                assert!(sup <= cap + 1e-12 * (1.0 + cap), "tau {tau} s {s}: {sup} > {cap}");
            }
        }
    }
}

#[test]
fn theta_c_class_sits_in_ebr_zero() {
    // Calibrate the smallest C with t_star = 0 on sampled Theta(C) vectors,
    // then check fresh samples at that C.
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let n = 64;
    let s = 4;
    let l = level(0.5);
    let cfg = SelectorConfig::new(1.0, 2.0).unwrap();
    let sample = |c: f64, rng: &mut ChaCha8Rng| {
        let mag = c * (penalty_size(s, n) / s as f64);
        let mut theta = vec![0.0; n];
        for k in 0..s {
            theta[k * (n / s)] = if rng.random_bool(0.5) { mag } else { -mag };
        }
        theta
    };
    let mut cal_rng = rng.clone();
    let c_star = qsparse::oracle::calibrate_theta_c(l, &cfg, 1.0, 1000, |c, _| {
        sample(c, &mut cal_rng)
    })
    .unwrap();
    for _ in 0..1000 {
        let theta = sample(c_star, &mut rng);
        let a = ebr_assess(&theta, l, &cfg, c_star).unwrap();
        assert!(a.in_theta_c);
        assert_eq!(a.t_star, 0.0);
    }
}

#[test]
fn ebr_lower_bounds_oracle_penalty() {
    // For theta in Theta_eb(t): p(I_o) >= r(theta) / (t + varkappa).
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let n = 64;
    let cfg = SelectorConfig::new(1.0, 2.0).unwrap();
    let l = level(0.25);
    for _ in 0..500 {
        let mut theta = vec![0.0; n];
        for _ in 0..rng.random_range(1..10) {
            let i = rng.random_range(0..n);
            theta[i] = rng.random_range(-30.0..30.0);
        }
        let o = oracle(&theta, l, &cfg).unwrap();
        let p_io = o.oracle_support.penalty();
        let t_star = if o.residual == 0.0 {
            0.0
        } else if p_io > 0.0 {
            o.residual / p_io
        } else {
            continue; // outside every EBR class
        };
        let bound = o.oracle_rate / (t_star + cfg.varkappa);
        assert!(p_io >= bound - 1e-12 * (1.0 + bound));
    }
}
