//! Desk-scale property suites behind `tisp verify`.
//!
//! Every check reports a signed worst-case slack: nonnegative means the
//! property held on every sample, negative measures the worst violation.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracle::{
    check_theta_equation_scaled, coordinate_descent_local_min, l0_global_min, objective_hard,
    probe_regularity, Assumption, RegularityProbeConfig,
};
use crate::penalty::{
    energy_scaled, penalty_hard, penalty_l0, penalty_l1, penalty_theta_closed,
    penalty_theta_quadrature, PenaltySpec,
};
use crate::problem::{scale_problem, spectral_norm, Problem, SPECTRAL_TOL};
use crate::simulate::{gen_problem, stream_seed, Ensemble, NoiseKind};
use crate::solver::{
    solve_scaled, theta_equation_residual, tisp_step, triangle_inequality_check, LambdaSchedule,
    Rho, SolverConfig, Termination,
};
use crate::thresholding::{
    contraction_grid, estimate_contraction, verify_axioms, RuleKind, ThresholdRule,
    CONTRACTION_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Axioms,
    Penalty,
    Descent,
    Theorem1,
    Lemma5,
    Lemma7,
    Regularity,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Axioms,
        Suite::Penalty,
        Suite::Descent,
        Suite::Theorem1,
        Suite::Lemma5,
        Suite::Lemma7,
        Suite::Regularity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Axioms => "axioms",
            Suite::Penalty => "penalty",
            Suite::Descent => "descent",
            Suite::Theorem1 => "theorem1",
            Suite::Lemma5 => "lemma5",
            Suite::Lemma7 => "lemma7",
            Suite::Regularity => "regularity",
        }
    }

    /// A suite name, or `all` for every suite.
    pub fn parse_list(name: &str) -> Result<Vec<Suite>> {
        if name == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .map(|s| vec![s])
            .ok_or_else(|| {
                let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!(
                    "unknown suite `{name}`; expected one of {}, all",
                    known.join(", ")
                ))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    /// Smallest `tolerance − violation` seen; negative on failure.
    pub worst_slack: f64,
    pub samples: usize,
    /// Something worth reporting that does not fail the check.
    pub finding: Option<String>,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, worst_slack: f64, samples: usize) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: worst_slack >= 0.0,
            worst_slack,
            samples,
            finding: None,
        }
    }
}

/// Runs one suite; all randomness derives from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Axioms => axioms(),
        Suite::Penalty => penalty(),
        Suite::Descent => descent(seed),
        Suite::Theorem1 => theorem1(seed),
        Suite::Lemma5 => lemma5(seed),
        Suite::Lemma7 => lemma7(seed),
        Suite::Regularity => regularity(seed),
    }
}

fn t_grid(points: usize, half_width: f64) -> Vec<f64> {
    (0..points)
        .map(|k| -half_width + 2.0 * half_width * k as f64 / (points - 1) as f64)
        .collect()
}

fn axioms() -> Result<Vec<Check>> {
    let grid = t_grid(2001, 10.0);
    let lambdas = [0.5, 1.0, 2.0];
    let mut checks = Vec::new();
    for rule in ThresholdRule::catalog(1.0)? {
        let report = verify_axioms(&rule, &grid, &lambdas);
        let parts = [
            (report.oddness, crate::thresholding::ODDNESS_TOL),
            (report.monotonicity, 0.0),
            (report.unboundedness, 0.0),
            (report.shrinkage, 0.0),
            (report.hard_dominance, 0.0),
        ];
        let slack = parts
            .iter()
            .map(|(c, tol)| tol - c.worst_violation)
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            Suite::Axioms,
            format!("definition/{}", rule.kind().name()),
            slack,
            grid.len() * lambdas.len(),
        ));

        let est = estimate_contraction(&rule, &contraction_grid(&rule, 2000))?;
        checks.push(Check::new(
            Suite::Axioms,
            format!("contraction/{}", rule.kind().name()),
            CONTRACTION_TOL - (est - rule.contraction()).abs(),
            2000,
        ));
    }
    Ok(checks)
}

/// `P_Θ` of the `ℓ_r` rule from its two pieces: `τ|t| − t²/2` below the
/// jump, `ζ|t|^r` above.
fn lr_penalty_pieces(rule: &ThresholdRule, t: f64) -> f64 {
    let (zeta, r) = (rule.zeta(), rule.r());
    let tau = rule.effective_threshold();
    let jump = (2.0 * zeta * (1.0 - r)).powf(1.0 / (2.0 - r));
    let a = t.abs();
    if a < jump {
        tau * a - 0.5 * a * a
    } else {
        zeta * a.powf(r)
    }
}

const PENALTY_TOL: f64 = 1e-8;
const CHAIN_TOL: f64 = 1e-10;

fn penalty() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for rule in ThresholdRule::catalog(1.0)? {
        let name = rule.kind().name();
        let spec = PenaltySpec::new(rule);
        let tau = rule.effective_threshold();
        let grid = t_grid(401, 10.0);

        let mut closed = f64::INFINITY;
        let mut dominance = f64::INFINITY;
        let mut chain = f64::INFINITY;
        for &t in &grid {
            let quad = penalty_theta_quadrature(&rule, t);
            let exact = penalty_theta_closed(&rule, t).unwrap_or_else(|| lr_penalty_pieces(&rule, t));
            closed = closed.min(PENALTY_TOL - (quad - exact).abs());
            let ph = penalty_hard(t, tau);
            dominance = dominance.min(spec.penalty_theta(t)? - ph + CHAIN_TOL);
            chain = chain.min(penalty_l0(t, tau).min(penalty_l1(t, tau)) - ph + CHAIN_TOL);
        }
        checks.push(Check::new(Suite::Penalty, format!("quadrature/{name}"), closed, grid.len()));
        checks.push(Check::new(Suite::Penalty, format!("dominance/{name}"), dominance, grid.len()));
        checks.push(Check::new(Suite::Penalty, format!("reference/{name}"), chain, grid.len()));
    }

    let coarse = t_grid(81, 4.0);
    let mut sub = f64::INFINITY;
    for lam in [0.5, 1.0, 2.0] {
        for &a in &coarse {
            for &b in &coarse {
                let gap = penalty_hard(a, lam) + penalty_hard(b, lam) - penalty_hard(a + b, lam);
                sub = sub.min(gap + CHAIN_TOL);
            }
        }
    }
    checks.push(Check::new(Suite::Penalty, "subadditivity/hard", sub, 3 * coarse.len().pow(2)));
    Ok(checks)
}

/// A small Gaussian instance scaled at `rho_factor·‖X‖₂`, with a threshold a
/// fixed fraction of `‖X̃ᵀy‖_∞` so that supports are neither empty nor full.
fn instance(n: usize, p: usize, seed: u64) -> Result<(Problem, f64, f64)> {
    let problem = gen_problem(
        &Ensemble::GaussianIid,
        n,
        p,
        (p / 5).max(1),
        2.0,
        0.5,
        NoiseKind::Gaussian,
        seed,
    )?;
    let norm = spectral_norm(problem.x(), SPECTRAL_TOL);
    let corr = (problem.x().tr_mul(problem.y()) / norm).amax();
    Ok((problem, norm, 0.3 * corr))
}

const DESCENT_TOL: f64 = 1e-10;
const DESCENT_STEPS: usize = 200;

/// Descent of the objective along TISP at
/// `ρ = 1.001·max(‖X‖₂, ‖X‖₂/(2−𝓛))`.
fn descent(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for kind in RuleKind::ALL {
        let mut worst = f64::INFINITY;
        let mut samples = 0;
        for i in 0..20 {
            let (problem, norm, lambda) = instance(20, 40, stream_seed(seed, i))?;
            let rule = ThresholdRule::with_defaults(kind, lambda)?;
            let lc = rule.contraction();
            let rho = 1.001 * norm.max(norm / (2.0 - lc));
            let scaled = scale_problem(&problem, rho)?;
            let spec = PenaltySpec::new(rule);
            let f = |b: &DVector<f64>| energy_scaled(&spec, scaled.x(), scaled.y(), b);
            let mut beta = DVector::zeros(problem.p());
            let mut value = f(&beta);
            for _ in 0..DESCENT_STEPS {
                let next = tisp_step(&beta, &scaled, &rule, rule.effective_threshold(), 1.0)?;
                let next_value = f(&next);
                worst = worst.min(value + DESCENT_TOL * (1.0 + value.abs()) - next_value);
                samples += 1;
                beta = next;
                value = next_value;
            }
        }
        checks.push(Check::new(Suite::Descent, kind.name(), worst, samples));
    }
    Ok(checks)
}

const SOLVE_TOL: f64 = 1e-10;
const CD_CERT_TOL: f64 = 1e-6;

fn random_start(p: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Converged solves and coordinate-wise minima are Θ-estimators.
fn theorem1(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 11));
    for kind in [RuleKind::Soft, RuleKind::Hard, RuleKind::Scad, RuleKind::Mcp] {
        let mut worst = f64::INFINITY;
        let mut samples = 0;
        for i in 0..20 {
            let (problem, norm, lambda) = instance(30, 20, stream_seed(seed, 100 + i))?;
            let rule = ThresholdRule::with_defaults(kind, lambda)?;
            let scaled = scale_problem(&problem, 1.01 * norm)?;
            let config = SolverConfig {
                rho: Rho::Fixed(scaled.rho()),
                tol: SOLVE_TOL,
                max_iter: 100_000,
                record_every: 100_000,
                ..SolverConfig::new(rule)
            };
            let out = solve_scaled(&scaled, &config, DVector::zeros(problem.p()))?;
            if out.termination == Termination::Converged {
                let r = theta_equation_residual(&scaled, &rule, &out.beta_scaled);
                worst = worst.min(10.0 * SOLVE_TOL - r);
                samples += 1;
            }
        }
        checks.push(Check::new(Suite::Theorem1, format!("solve/{}", kind.name()), worst, samples));
    }

    for kind in [RuleKind::Soft, RuleKind::Scad, RuleKind::Mcp] {
        let mut worst = f64::INFINITY;
        let mut samples = 0;
        for i in 0..20 {
            let (problem, norm, lambda) = instance(30, 20, stream_seed(seed, 200 + i))?;
            let rule = ThresholdRule::with_defaults(kind, lambda)?;
            let scaled = scale_problem(&problem, 1.01 * norm)?;
            let start = random_start(problem.p(), 1.0, &mut rng);
            let cd = coordinate_descent_local_min(&scaled, &PenaltySpec::new(rule), &start, 100_000)?;
            let report = check_theta_equation_scaled(&scaled, &rule, &cd.beta_scaled, CD_CERT_TOL);
            if cd.converged && !report.near_discontinuity {
                worst = worst.min(CD_CERT_TOL - report.residual);
                samples += 1;
            }
        }
        checks.push(Check::new(
            Suite::Theorem1,
            format!("coordinate-minimum/{}", kind.name()),
            worst,
            samples,
        ));
    }
    Ok(checks)
}

const GAP_SLACK: f64 = 1e-10;

/// The `ℓ0` global minimizer has the threshold gap and is no worse, in the
/// hard-penalized objective, than any TISP-hard fixed point.
fn lemma5(seed: u64) -> Result<Vec<Check>> {
    let mut gap = f64::INFINITY;
    let mut bound = f64::INFINITY;
    let mut fixed_points = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 12));
    let instances = 30;
    for i in 0..instances {
        let p = 4 + (i as usize % 5);
        let (problem, norm, lambda) = instance(12, p, stream_seed(seed, 300 + i))?;
        let rho = 1.01 * norm;
        let sol = l0_global_min(&problem, lambda, rho)?;
        for b in sol.beta_scaled.iter().filter(|b| **b != 0.0) {
            gap = gap.min(b.abs() - (lambda - GAP_SLACK));
        }
        let scaled = scale_problem(&problem, rho)?;
        let config = SolverConfig {
            rho: Rho::Fixed(rho),
            schedule: LambdaSchedule::Constant(lambda),
            tol: SOLVE_TOL,
            max_iter: 100_000,
            record_every: 100_000,
            ..SolverConfig::new(ThresholdRule::hard(lambda)?)
        };
        for _ in 0..5 {
            let start = random_start(p, 2.0, &mut rng);
            let out = solve_scaled(&scaled, &config, start)?;
            if out.termination != Termination::Converged {
                continue;
            }
            let value = objective_hard(&scaled, &out.beta_scaled, lambda);
            bound = bound.min(value - sol.objective + GAP_SLACK * (1.0 + value.abs()));
            fixed_points += 1;
        }
    }
    Ok(vec![
        Check::new(Suite::Lemma5, "gap", gap, instances as usize),
        Check::new(Suite::Lemma5, "lower-bound", bound, fixed_points),
    ])
}

const TRIANGLE_TOL: f64 = 1e-8;

/// Triangle-inequality slack at `(β⁽ᵗ⁾, β)` pairs for every rule.
fn lemma7(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 13));
    let mut checks = Vec::new();
    for kind in RuleKind::ALL {
        let mut worst = f64::INFINITY;
        let mut samples = 0;
        for i in 0..10 {
            let (problem, norm, lambda) = instance(20, 30, stream_seed(seed, 400 + i))?;
            let rule = ThresholdRule::with_defaults(kind, lambda)?;
            let scaled = scale_problem(&problem, 1.001 * norm)?;
            let spec = PenaltySpec::new(rule);
            for _ in 0..10 {
                let beta_t = random_start(problem.p(), 1.0, &mut rng);
                let next = tisp_step(&beta_t, &scaled, &rule, rule.effective_threshold(), 1.0)?;
                let probe = sparse_probe(&next, &mut rng);
                let slack = triangle_inequality_check(&beta_t, &next, &probe, &scaled, &spec);
                let f = energy_scaled(&spec, scaled.x(), scaled.y(), &probe).abs();
                worst = worst.min(slack + TRIANGLE_TOL * (1.0 + f));
                samples += 1;
            }
        }
        checks.push(Check::new(Suite::Lemma7, kind.name(), worst, samples));
    }
    Ok(checks)
}

/// Either a fresh Gaussian vector or a perturbation of `near` on a few
/// coordinates.
fn sparse_probe(near: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    if rng.random_bool(0.5) {
        return random_start(near.len(), 1.0, rng);
    }
    let mut probe = near.clone();
    for _ in 0..3 {
        let j = rng.random_range(0..near.len());
        let z: f64 = StandardNormal.sample(rng);
        probe[j] += z;
    }
    probe
}

/// Probes every assumption for the hard rule on a Gaussian design and on a
/// weak rank-one design. Violations are findings.
fn regularity(seed: u64) -> Result<Vec<Check>> {
    let (gauss, _, _) = instance(40, 20, stream_seed(seed, 500))?;
    // every column a small multiple of the same vector: `‖XΔ‖` is tiny
    // along most directions
    let first = gauss.x().column(0) * 0.1;
    let rank_one = Problem::new(
        DMatrix::from_fn(gauss.n(), gauss.p(), |i, _| first[i]),
        gauss.y().clone(),
    )?;

    let mut checks = Vec::new();
    let rule = ThresholdRule::hard(1.0)?;
    for (label, problem) in [("gaussian", &gauss), ("rank-one", &rank_one)] {
        let mut reference = DVector::zeros(problem.p());
        reference[0] = 2.0;
        reference[2] = -2.0;
        for assumption in [Assumption::R0, Assumption::R1, Assumption::S0, Assumption::S1] {
            let config = RegularityProbeConfig {
                assumption,
                delta: 0.5,
                vartheta: 0.5,
                k: 1.0,
                lambda: 1.0,
                reference_beta: reference.clone(),
                num_samples: 500,
                sample_radius: 3.0,
                seed: stream_seed(seed, 600),
            };
            let report = probe_regularity(&config, problem, &rule)?;
            let mut check = Check::new(
                Suite::Regularity,
                format!("{assumption:?}/{label}"),
                report.min_slack,
                report.samples,
            );
            check.passed = true;
            if let Some(d) = &report.violating_direction {
                check.finding = Some(format!(
                    "violated: slack {:e} along a direction of norm {:.3} with {} nonzeros",
                    report.min_slack,
                    d.norm(),
                    d.iter().filter(|v| **v != 0.0).count()
                ));
            }
            checks.push(check);
        }
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_suite_names() {
        assert_eq!(Suite::parse_list("all").unwrap().len(), 7);
        assert_eq!(Suite::parse_list("lemma5").unwrap(), vec![Suite::Lemma5]);
        assert!(Suite::parse_list("lemma6").is_err());
    }

    #[test]
    fn lr_pieces_are_continuous_at_the_jump() {
        let rule = ThresholdRule::lr(0.7, 0.3).unwrap();
        let jump = (2.0 * 0.7 * 0.7f64).powf(1.0 / 1.7);
        let below = lr_penalty_pieces(&rule, jump * (1.0 - 1e-12));
        let above = lr_penalty_pieces(&rule, jump);
        assert!((below - above).abs() < 1e-9, "{below} vs {above}");
    }

    #[test]
    fn axioms_and_penalty_suites_pass() {
        for suite in [Suite::Axioms, Suite::Penalty] {
            for c in run_suite(suite, 0).unwrap() {
                assert!(c.passed, "{c:?}");
            }
        }
    }

    #[test]
    fn gap_suite_passes() {
        for c in run_suite(Suite::Lemma5, 7).unwrap() {
            assert!(c.passed, "{c:?}");
            assert!(c.samples > 0);
        }
    }
}
