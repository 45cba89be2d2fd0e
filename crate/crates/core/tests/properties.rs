use proptest::prelude::*;
use raas_core::baselines::clip;
use raas_core::raas::{auxiliary_step, momentum_coefficients, solve_alpha, step_size_update};
use raas_core::{NoiseConfig, NoiseTape};

fn unit() -> impl Strategy<Value = f64> {
    1e-6..1.0 - 1e-6
}

proptest! {
    #[test]
    fn alpha_root_is_in_unit_interval(
        gamma_prev in 1e-4..10.0f64,
        ratio in 0.5..2.0f64,
        alpha_prev in unit(),
        theta in 0.01..0.99f64,
        vartheta in 0.0..0.99f64,
        mu_frac in 0.0..1.0f64,
    ) {
        let gamma_hat = gamma_prev * ratio;
        let s = 1.0 - vartheta;
        let mu = mu_frac / (2.0 * s * s * gamma_hat);
        let a = solve_alpha(gamma_hat, gamma_prev, alpha_prev, theta, vartheta, mu).unwrap();
        prop_assert!(a > 0.0 && a < 1.0);
        let b = ratio * alpha_prev * alpha_prev;
        let c = 2.0 * theta * s * s * mu * gamma_hat;
        prop_assert!((a * a + (b - c) * a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn momentum_is_nonnegative(
        gamma_prev in 1e-3..1.0f64,
        alpha_prev in 0.01..0.99f64,
        theta in 0.05..0.95f64,
        vartheta in 0.0..0.9f64,
        mu_frac in 0.0..1.0f64,
    ) {
        let s = 1.0 - vartheta;
        let gamma_hat = gamma_prev;
        let mu = mu_frac / (2.0 * s * s * gamma_hat);
        let a = solve_alpha(gamma_hat, gamma_prev, alpha_prev, theta, vartheta, mu).unwrap();
        let (rho, beta) = momentum_coefficients(a, alpha_prev, gamma_hat, theta, vartheta, mu).unwrap();
        prop_assert!((0.0..1.0).contains(&beta));
        prop_assert!(rho >= 0.0 && rho.is_finite());
    }

    #[test]
    fn auxiliary_step_takes_the_larger_branch(gamma in 1e-3..10.0f64, alpha in unit(), theta in 0.01..0.99f64, vartheta in 0.0..0.99f64) {
        let g = auxiliary_step(gamma, alpha, theta, vartheta);
        let a = gamma / (1.0 - alpha) * (2.0 * theta - alpha / (1.0 - vartheta));
        let b = gamma / (1.0 - alpha) * (2.0 * theta + (theta - 2.0) * alpha);
        prop_assert_eq!(g, a.max(b));
    }

    #[test]
    fn step_size_stays_capped(gamma in 1e-6..1.0f64, nu in 0.5..0.999f64, accepted: bool) {
        let cap = 0.5;
        let g = step_size_update(gamma.min(cap), accepted, nu, cap);
        prop_assert!(g <= cap);
        if !accepted {
            prop_assert_eq!(g, nu * gamma.min(cap));
        }
    }

    #[test]
    fn clipped_norm_is_bounded(g in proptest::collection::vec(-10.0..10.0f64, 1..20), tau in 0.01..5.0f64) {
        let c = clip(&g, tau);
        let n: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n <= tau * (1.0 + 1e-12));
    }

    #[test]
    fn tape_entries_do_not_depend_on_length(seed in 0u64..1000, d in 1usize..20, t in 1usize..30) {
        let cfg = NoiseConfig::heavy_tailed(1.0, 1.0).with_bias(0.3);
        let short = NoiseTape::generate(seed, d, cfg, 30).unwrap();
        let long = NoiseTape::generate(seed, d, cfg, 60).unwrap();
        prop_assert_eq!(short.gradient_error(t).unwrap(), long.gradient_error(t).unwrap());
        prop_assert_eq!(short.function_errors(t).unwrap(), long.function_errors(t).unwrap());
    }
}
