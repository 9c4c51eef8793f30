use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tisp::io::{read_vector, write_vector};
use tisp::penalty::{energy, penalty_hard, Augmentation, PenaltySpec};
use tisp::problem::{spectral_norm, Problem, ScaledProblem, SPECTRAL_TOL};
use tisp::simulate::{error_metrics, gen_problem, Ensemble, NoiseKind};
use tisp::solver::{solve, tisp_step, Rho, SolverConfig};
use tisp::thresholding::{RuleKind, ThresholdRule};

fn kind() -> impl Strategy<Value = RuleKind> {
    (0..RuleKind::ALL.len()).prop_map(|k| RuleKind::ALL[k])
}

/// A rule with random shape parameters inside each family's valid range.
fn rule() -> impl Strategy<Value = ThresholdRule> {
    (kind(), 0.05f64..5.0, 0.0f64..2.0, 2.1f64..6.0, 1.1f64..5.0, 0.05f64..0.95).prop_map(
        |(k, lam, eta, a, gamma, r)| match k {
            RuleKind::Soft => ThresholdRule::soft(lam),
            RuleKind::Hard => ThresholdRule::hard(lam),
            RuleKind::Ridge => ThresholdRule::ridge(eta),
            RuleKind::ElasticNet => ThresholdRule::elastic_net(lam, eta),
            RuleKind::Berhu => ThresholdRule::berhu(lam, eta),
            RuleKind::HardRidge => ThresholdRule::hard_ridge(lam, eta),
            RuleKind::Scad => ThresholdRule::scad(lam, a),
            RuleKind::Mcp => ThresholdRule::mcp(lam, gamma),
            RuleKind::Lr => ThresholdRule::lr(lam, r),
        }
        .unwrap(),
    )
}

fn gaussian_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    })
}

fn gaussian_vector(n: usize, seed: u64) -> DVector<f64> {
    gaussian_matrix(n, 1, seed).column(0).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn threshold_is_odd_monotone_and_shrinking(rule in rule(), s in -50.0f64..50.0, t in -50.0f64..50.0) {
        prop_assert!((rule.threshold(t) + rule.threshold(-t)).abs() <= 1e-12);
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        prop_assert!(rule.threshold(lo) <= rule.threshold(hi));
        let a = t.abs();
        let v = rule.threshold(a);
        prop_assert!(v >= 0.0 && v <= a);
    }

    #[test]
    fn threshold_below_hard_at_its_effective_threshold(rule in rule(), t in 0.0f64..50.0) {
        let tau = rule.effective_threshold();
        let hard = if t > tau { t } else { 0.0 };
        prop_assert!(rule.threshold(t) <= hard);
    }

    #[test]
    fn rule_text_round_trips(rule in rule()) {
        let parsed: ThresholdRule = rule.to_string().parse().unwrap();
        prop_assert_eq!(parsed, rule);
    }

    #[test]
    fn penalty_dominates_hard_and_grows_with_magnitude(rule in rule(), t in -30.0f64..30.0, extra in 0.0f64..5.0) {
        let spec = PenaltySpec::new(rule);
        let p = spec.penalty_theta(t).unwrap();
        prop_assert!(p >= penalty_hard(t, rule.effective_threshold()) - 1e-9);
        prop_assert_eq!(spec.penalty_theta(0.0).unwrap(), 0.0);
        let further = t.abs() + extra;
        prop_assert!(spec.penalty_theta(further).unwrap() >= p - 1e-9);
        prop_assert!((spec.penalty_theta(-t).unwrap() - p).abs() <= 1e-9 * (1.0 + p));
    }

    #[test]
    fn hard_penalty_is_subadditive(lam in 0.01f64..10.0, a in -20.0f64..20.0, b in -20.0f64..20.0) {
        prop_assert!(penalty_hard(a + b, lam) <= penalty_hard(a, lam) + penalty_hard(b, lam) + 1e-12);
    }

    #[test]
    fn augmentation_vanishes_on_the_range(lam in 0.05f64..5.0, eta in 0.0f64..2.0, t in -30.0f64..30.0) {
        let hard = ThresholdRule::hard(lam).unwrap();
        for aug in [Augmentation::CappedL1, Augmentation::L0, Augmentation::L0L2] {
            let spec = PenaltySpec::with_augmentation(hard, aug).unwrap();
            prop_assert!(spec.q(t) >= 0.0);
            prop_assert!(spec.q(hard.threshold(t)) <= 1e-10);
        }
        let hr = ThresholdRule::hard_ridge(lam, eta).unwrap();
        let spec = PenaltySpec::with_augmentation(hr, Augmentation::L0L2).unwrap();
        prop_assert!(spec.q(hr.threshold(t)) <= 1e-10);
    }

    #[test]
    fn io_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
        let v = DVector::from_vec(values);
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        prop_assert_eq!(read_vector(buf.as_slice()).unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// For any admissible `ρ >= ‖X‖₂` the objective never rises along TISP.
    #[test]
    fn objective_descends_for_admissible_scaling(
        kind in kind(),
        seed in any::<u64>(),
        factor in 1.0f64..3.0,
        frac in 0.05f64..0.8,
    ) {
        let (n, p) = (10, 16);
        let x = gaussian_matrix(n, p, seed);
        let y = gaussian_vector(n, seed ^ 1) * 3.0;
        let problem = Problem::new(x, y).unwrap();
        // exact norm, so the power-iteration estimate cannot undercut it
        let rho = factor * problem.x().singular_values().max() * (1.0 + 1e-12);
        let scaled = ScaledProblem::new_unchecked(&problem, rho);
        let lambda = frac * scaled.x().tr_mul(scaled.y()).amax();
        let rule = ThresholdRule::with_defaults(kind, lambda).unwrap();
        let spec = PenaltySpec::new(rule);
        let f = |b: &DVector<f64>| energy(&spec, &problem, &scaled.unscale(b), rho).unwrap();
        let mut beta = gaussian_vector(p, seed ^ 2);
        let mut value = f(&beta);
        for _ in 0..40 {
            let next = tisp_step(&beta, &scaled, &rule, rule.effective_threshold(), 1.0).unwrap();
            let next_value = f(&next);
            prop_assert!(next_value <= value + 1e-10 * (1.0 + value.abs()), "{} rose from {} to {}", rule, value, next_value);
            beta = next;
            value = next_value;
        }
    }

    /// Soft thresholding with stepsize `α` is the unit-step iteration on the
    /// problem scaled by `√α` with threshold `αλ`.
    #[test]
    fn soft_stepsize_equals_rescaled_problem(seed in any::<u64>(), alpha in 0.05f64..1.0, lam in 0.01f64..2.0) {
        let (n, p) = (8, 12);
        let x = gaussian_matrix(n, p, seed);
        let y = gaussian_vector(n, seed ^ 1);
        let rho = 1.1 * spectral_norm(&x, SPECTRAL_TOL);
        let plain = ScaledProblem::new_unchecked(&Problem::new(x.clone(), y.clone()).unwrap(), rho);
        let root = alpha.sqrt();
        let rescaled = ScaledProblem::new_unchecked(&Problem::new(x * root, y * root).unwrap(), rho);
        let soft = ThresholdRule::soft(lam).unwrap();
        let beta = gaussian_vector(p, seed ^ 2);
        let a = tisp_step(&beta, &plain, &soft, lam, alpha).unwrap();
        let b = tisp_step(&beta, &rescaled, &soft, alpha * lam, 1.0).unwrap();
        prop_assert!((a - b).amax() <= 1e-12);
    }

    /// `ρ²‖Δ‖² − ‖XΔ‖² = ‖ρΔ‖² − ‖X̃ρΔ‖²` with `X̃ = X/ρ`, and it is nonnegative.
    #[test]
    fn weighted_error_identity(seed in any::<u64>(), factor in 1.0f64..2.0) {
        let problem = gen_problem(&Ensemble::GaussianIid, 20, 10, 3, 2.0, 0.5, NoiseKind::Gaussian, seed).unwrap();
        let rho = factor * spectral_norm(problem.x(), SPECTRAL_TOL);
        let beta = gaussian_vector(10, seed ^ 3);
        let m = error_metrics(&beta, &problem, rho).unwrap();
        let d = &beta - problem.beta_star().unwrap();
        let direct = rho * rho * d.norm_squared() - (problem.x() * &d).norm_squared();
        let scaled = ScaledProblem::new_unchecked(&problem, rho);
        let ds = &d * rho;
        let in_scaled = ds.norm_squared() - (scaled.x() * &ds).norm_squared();
        prop_assert!((m.weighted - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        prop_assert!((in_scaled - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
        // the power-iteration norm may sit up to its tolerance below ‖X‖₂
        prop_assert!(direct >= -4.0 * SPECTRAL_TOL * d.norm_squared() * rho * rho);
    }

    /// Same seed, same data and same solution, bit for bit.
    #[test]
    fn generation_and_solve_are_deterministic(seed in any::<u64>(), k in 0usize..9) {
        let make = || gen_problem(&Ensemble::GaussianAr1 { rho_corr: 0.5 }, 15, 12, 3, 2.0, 0.3, NoiseKind::Gaussian, seed).unwrap();
        let (a, b) = (make(), make());
        prop_assert_eq!(a.x(), b.x());
        prop_assert_eq!(a.y(), b.y());
        let rule = ThresholdRule::with_defaults(RuleKind::ALL[k], 0.5).unwrap();
        let config = SolverConfig { rho: Rho::default(), max_iter: 500, ..SolverConfig::new(rule) };
        let (s, t) = (solve(&a, &config).unwrap(), solve(&b, &config).unwrap());
        prop_assert_eq!(s.beta, t.beta);
        prop_assert_eq!(s.iterations, t.iterations);
    }
}
