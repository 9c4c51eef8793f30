//! The TISP fixed-point iteration
//! `β̃⁽ᵗ⁺¹⁾ = Θ(β̃⁽ᵗ⁾ + α·X̃ᵀ(y − X̃β̃⁽ᵗ⁾); λ_α(λ_t))` on the `ρ`-scaled design.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::penalty::{energy_scaled, Augmentation, PenaltySpec};
use crate::problem::{scale_problem, spectral_norm, Problem, ScaledProblem, SPECTRAL_TOL};
use crate::thresholding::ThresholdRule;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_RHO_EPSILON: f64 = 0.01;
/// Distance to a discontinuity of `Θ` at which an iteration gets flagged.
pub const DISCONTINUITY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho {
    /// `(1 + ε)·‖X‖₂`.
    Auto { epsilon: f64 },
    Fixed(f64),
}

impl Default for Rho {
    fn default() -> Self {
        Rho::Auto {
            epsilon: DEFAULT_RHO_EPSILON,
        }
    }
}

/// Thresholds `λ_t` fed to the rule at iteration `t`, in scaled coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSchedule {
    Constant(f64),
    /// `max(start·factorᵗ, floor)`
    Geometric { start: f64, factor: f64, floor: f64 },
    /// The last entry is held once the list runs out.
    Explicit(Vec<f64>),
}

impl LambdaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::Geometric {
                start,
                factor,
                floor,
            } => {
                let exp = i32::try_from(t).unwrap_or(i32::MAX);
                (start * factor.powi(exp)).max(*floor)
            }
            LambdaSchedule::Explicit(list) => list[t.min(list.len() - 1)],
        }
    }

    /// Whether the schedule has stopped moving at `t`.
    pub fn settled(&self, t: usize) -> bool {
        self.at(t) == self.at(t + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        match self {
            LambdaSchedule::Constant(l) => {
                if !(l.is_finite() && *l >= 0.0) {
                    return bad("lambda", *l, "threshold must be finite and >= 0");
                }
            }
            LambdaSchedule::Geometric {
                start,
                factor,
                floor,
            } => {
                if !(factor.is_finite() && *factor > 0.0 && *factor < 1.0) {
                    return bad("factor", *factor, "geometric factor must lie in (0, 1)");
                }
                if !(floor.is_finite() && *floor >= 0.0) {
                    return bad("floor", *floor, "floor must be finite and >= 0");
                }
                if !(start.is_finite() && start >= floor) {
                    return bad("start", *start, "start must be finite and >= floor");
                }
            }
            LambdaSchedule::Explicit(list) => {
                if list.is_empty() {
                    return Err(Error::Config("explicit schedule needs at least one value".into()));
                }
                if let Some(&l) = list.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
                    return bad("lambda", l, "threshold must be finite and >= 0");
                }
            }
        }
        Ok(())
    }

    pub fn final_value(&self) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::Geometric { floor, .. } => *floor,
            LambdaSchedule::Explicit(list) => list[list.len() - 1],
        }
    }
}

/// Starting point in original (unscaled) coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Start {
    #[default]
    Zero,
    Given(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rule: ThresholdRule,
    pub rho: Rho,
    pub alpha: f64,
    pub schedule: LambdaSchedule,
    pub tol: f64,
    pub max_iter: usize,
    pub record_every: usize,
    pub augmentation: Augmentation,
    pub start: Start,
}

impl SolverConfig {
    /// Defaults around `rule`, holding its own threshold constant.
    pub fn new(rule: ThresholdRule) -> Self {
        SolverConfig {
            rule,
            rho: Rho::default(),
            alpha: 1.0,
            schedule: LambdaSchedule::Constant(rule.effective_threshold()),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_every: 1,
            augmentation: Augmentation::None,
            start: Start::Zero,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                value: self.tol,
                reason: "tolerance must be finite and > 0",
            });
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if let Rho::Auto { epsilon } = self.rho {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "epsilon",
                    value: epsilon,
                    reason: "auto scaling margin must be finite and > 0",
                });
            }
        }
        self.rule.with_stepsize(self.alpha)?;
        self.schedule.validate()?;
        PenaltySpec::with_augmentation(self.rule, self.augmentation)?;
        if let Start::Given(b) = &self.start {
            if b.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.len(),
                });
            }
        }
        Ok(())
    }
}

/// Resolves the configured scaling and builds the scaled problem.
///
/// `auto` gives `(1+ε)·‖X‖₂`, or 1 for an all-zero design. Any accepted
/// value also satisfies `ρ >= ‖X‖₂/(2 − 𝓛_Θ)` since every rule has
/// `𝓛_Θ <= 1`.
pub fn resolve_scaling(problem: &Problem, rho: Rho, rule: &ThresholdRule) -> Result<ScaledProblem> {
    let value = match rho {
        Rho::Auto { epsilon } => {
            let norm = spectral_norm(problem.x(), SPECTRAL_TOL);
            if norm == 0.0 {
                1.0
            } else {
                (1.0 + epsilon) * norm
            }
        }
        Rho::Fixed(v) => v,
    };
    let scaled = scale_problem(problem, value)?;
    let floor = scaled.design_norm() / (2.0 - rule.contraction());
    if scaled.rho() < floor {
        return Err(Error::RhoTooSmall {
            rho: scaled.rho(),
            norm: floor,
        });
    }
    Ok(scaled)
}

/// One TISP step in scaled coordinates; `rule` is moved to threshold `lambda_t`.
pub fn tisp_step(
    beta: &DVector<f64>,
    scaled: &ScaledProblem,
    rule: &ThresholdRule,
    lambda_t: f64,
    alpha: f64,
) -> Result<DVector<f64>> {
    if beta.len() != scaled.p() {
        return Err(Error::DimensionMismatch {
            expected: scaled.p(),
            found: beta.len(),
        });
    }
    let step_rule = rule.with_threshold(lambda_t)?.with_stepsize(alpha)?;
    let z = beta + scaled.gradient_step(beta) * alpha;
    Ok(z.map(|v| step_rule.threshold(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
        }
    }
}

/// One recorded iterate. Errors are in original coordinates and present only
/// when `β*` is known.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub fp_residual: f64,
    pub support: usize,
    pub pred_err: Option<f64>,
    pub est_err: Option<f64>,
    pub weighted_err: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace {
    pub rows: Vec<TraceRow>,
    /// Iterations whose thresholding argument came within
    /// [`DISCONTINUITY_GUARD`] of a jump of `Θ`.
    pub flagged: Vec<usize>,
}

pub const TRACE_HEADER: [&str; 7] = [
    "iter",
    "objective",
    "fp_residual",
    "support",
    "pred_err",
    "est_err",
    "weighted_err",
];

impl IterateTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        let opt = |v: Option<f64>| v.map(crate::io::fmt_f64).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                crate::io::fmt_f64(r.objective),
                crate::io::fmt_f64(r.fp_residual),
                r.support.to_string(),
                opt(r.pred_err),
                opt(r.est_err),
                opt(r.weighted_err),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    /// `β̂ = β̃/ρ`.
    pub beta: DVector<f64>,
    pub beta_scaled: DVector<f64>,
    pub trace: IterateTrace,
    pub termination: Termination,
    /// Index of the returned iterate.
    pub iterations: usize,
    pub rho: f64,
    /// Objective of the returned iterate at the final threshold.
    pub objective: f64,
    /// Final threshold of the schedule.
    pub lambda: f64,
}

/// Error metrics in original coordinates from a scaled difference `Δ̃ = ρΔ`:
/// `(‖XΔ‖², ‖Δ‖², ρ²‖Δ‖² − ‖XΔ‖²)`.
pub(crate) fn scaled_errors(x_scaled: &DMatrix<f64>, rho: f64, delta: &DVector<f64>) -> (f64, f64, f64) {
    let pred = (x_scaled * delta).norm_squared();
    let sq = delta.norm_squared();
    (pred, sq / (rho * rho), sq - pred)
}

fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Runs TISP from the configured start until the sup-norm step falls below
/// `tol` (once the schedule has settled) or `max_iter` steps are taken.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveOutput> {
    config.validate(problem.p())?;
    let scaled = resolve_scaling(problem, config.rho, &config.rule)?;
    let start = match &config.start {
        Start::Zero => DVector::zeros(problem.p()),
        Start::Given(b) => scaled.scale(b),
    };
    solve_scaled(&scaled, config, start)
}

/// Runs TISP on an already scaled problem from a scaled start.
///
/// No check is made that `‖X̃‖₂ <= 1`; see [`ScaledProblem::new_unchecked`].
pub fn solve_scaled(
    scaled: &ScaledProblem,
    config: &SolverConfig,
    start: DVector<f64>,
) -> Result<SolveOutput> {
    config.validate(scaled.p())?;
    let x = scaled.x();
    let y = scaled.y();
    let truth = scaled.beta_star();

    let mut trace = IterateTrace::default();
    let mut beta = start;
    let mut cached: Option<(f64, ThresholdRule, PenaltySpec, Vec<f64>)> = None;
    let mut best: Option<(f64, usize, DVector<f64>)> = None;

    for t in 0..config.max_iter {
        let lambda_t = config.schedule.at(t);
        if cached.as_ref().map(|c| c.0) != Some(lambda_t) {
            let at = config.rule.with_threshold(lambda_t)?;
            let step_rule = at.with_stepsize(config.alpha)?;
            let spec = PenaltySpec::with_augmentation(at, config.augmentation)?;
            let jumps = step_rule.discontinuities();
            cached = Some((lambda_t, step_rule, spec, jumps));
        }
        let (_, step_rule, spec, jumps) = cached.as_ref().expect("set above");

        let resid = y - x * &beta;
        let z = &beta + x.tr_mul(&resid) * config.alpha;
        let next = z.map(|v| step_rule.threshold(v));
        let objective = 0.5 * resid.norm_squared() + spec.sum(&beta);
        if !objective.is_finite() {
            return Err(Error::Diverged {
                iter: t,
                what: "objective",
            });
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iter: t,
                what: "iterate",
            });
        }
        if !jumps.is_empty()
            && z.iter()
                .any(|v| jumps.iter().any(|d| (v.abs() - d).abs() <= DISCONTINUITY_GUARD))
        {
            trace.flagged.push(t);
        }

        let fp_residual = sup_norm(&(&next - &beta));
        let settled = config.schedule.settled(t);
        let converged = settled && fp_residual <= config.tol;
        let last = t + 1 == config.max_iter;
        if t % config.record_every == 0 || converged || last {
            let (pred_err, est_err, weighted_err) = match truth {
                Some(b) => {
                    let (p, e, w) = scaled_errors(x, scaled.rho(), &(&beta - b));
                    (Some(p), Some(e), Some(w))
                }
                None => (None, None, None),
            };
            trace.rows.push(TraceRow {
                iter: t,
                objective,
                fp_residual,
                support: beta.iter().filter(|v| **v != 0.0).count(),
                pred_err,
                est_err,
                weighted_err,
            });
        }
        if converged {
            return Ok(SolveOutput {
                beta: scaled.unscale(&beta),
                beta_scaled: beta,
                trace,
                termination: Termination::Converged,
                iterations: t,
                rho: scaled.rho(),
                objective,
                lambda: lambda_t,
            });
        }
        if settled && best.as_ref().is_none_or(|b| objective < b.0) {
            best = Some((objective, t, beta.clone()));
        }
        beta = next;
    }

    let lambda = config.schedule.at(config.max_iter - 1);
    let (objective, iterations, beta) = match best {
        Some(b) => b,
        None => {
            let spec = PenaltySpec::with_augmentation(
                config.rule.with_threshold(lambda)?,
                config.augmentation,
            )?;
            (energy_scaled(&spec, x, y, &beta), config.max_iter, beta)
        }
    };
    Ok(SolveOutput {
        beta: scaled.unscale(&beta),
        beta_scaled: beta,
        trace,
        termination: Termination::MaxIter,
        iterations,
        rho: scaled.rho(),
        objective,
        lambda,
    })
}

/// Best of several runs: the configured start, a ridge pilot
/// `(XᵀX + I)⁻¹Xᵀy`, and Gaussian perturbations of the pilot.
pub fn solve_multi_start(
    problem: &Problem,
    config: &SolverConfig,
    starts: usize,
    seed: u64,
) -> Result<SolveOutput> {
    config.validate(problem.p())?;
    let x = problem.x();
    let gram = x.tr_mul(x) + DMatrix::identity(problem.p(), problem.p());
    let pilot = gram
        .cholesky()
        .ok_or_else(|| Error::Config("ridge pilot system is not positive definite".into()))?
        .solve(&x.tr_mul(problem.y()));
    let spread = (pilot.norm() / (problem.p() as f64).sqrt()).max(1e-3);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = vec![config.start.clone(), Start::Given(pilot.clone())];
    for _ in 0..starts {
        let noise = DVector::from_fn(problem.p(), |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * spread
        });
        candidates.push(Start::Given(&pilot + noise));
    }

    let runs = crate::par::par_map(&candidates, |start| {
        let mut c = config.clone();
        c.start = start.clone();
        solve(problem, &c)
    });
    let mut best: Option<SolveOutput> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least two candidates"))
}

/// `‖β̃ − Θ(β̃ + X̃ᵀ(y − X̃β̃))‖_∞` in scaled coordinates.
pub fn theta_equation_residual(
    scaled: &ScaledProblem,
    rule: &ThresholdRule,
    beta_scaled: &DVector<f64>,
) -> f64 {
    let z = beta_scaled + scaled.gradient_step(beta_scaled);
    sup_norm(&(beta_scaled - z.map(|v| rule.threshold(v))))
}

/// `λ = A·σ·√(log(e·p))`.
pub fn theory_lambda(a: f64, sigma: f64, p: usize) -> f64 {
    a * sigma * (1.0 + (p as f64).ln()).sqrt()
}

/// Early-stopping count
/// `⌈log(ρ²·e₀ / (K·σ²λ²J*)) / log(1/κ)⌉` with `K = 1`, clamped to
/// `[1, max_iter]`.
pub fn t_max_estimate(
    rho: f64,
    beta0_error: f64,
    sigma: f64,
    lambda: f64,
    j_star: usize,
    kappa: f64,
    max_iter: usize,
) -> Result<usize> {
    let positive = [
        ("rho", rho),
        ("beta0_error", beta0_error),
        ("sigma", sigma),
        ("lambda", lambda),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be finite and > 0",
            });
        }
    }
    if j_star == 0 {
        return Err(Error::Config("J_star must be at least 1".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            value: kappa,
            reason: "contraction rate must lie in (0, 1)",
        });
    }
    let max_iter = max_iter.max(1);
    let ratio = rho * rho * beta0_error / (sigma * sigma * lambda * lambda * j_star as f64);
    if ratio <= 1.0 {
        return Ok(1);
    }
    let steps = ratio.ln() / (1.0 / kappa).ln();
    // absorb rounding in the logarithms so exact powers are not bumped up
    let steps = (steps - 1e-9).ceil();
    if !steps.is_finite() || steps >= max_iter as f64 {
        return Ok(max_iter);
    }
    Ok((steps as usize).max(1))
}

/// `½‖v‖²_{I − X̃ᵀX̃}`.
fn half_weighted(x: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    0.5 * (v.norm_squared() - (x * v).norm_squared())
}

/// Signed slack `RHS − LHS` of the triangle inequality
/// `(1−𝓛)/2‖β⁺ − β‖² + ½‖β⁺ − β⁽ᵗ⁾‖²_{I−X̃ᵀX̃}
///   <= ½‖β⁽ᵗ⁾ − β‖²_{I−X̃ᵀX̃} + f(β) − f(β⁺)`
/// for `β⁺ = Θ(β⁽ᵗ⁾ + X̃ᵀ(y − X̃β⁽ᵗ⁾))` and `β = probe`, all scaled.
///
/// `f` uses `P_Θ` of the rule in `spec`; any augmentation is ignored.
pub fn triangle_inequality_check(
    beta_t: &DVector<f64>,
    beta_t1: &DVector<f64>,
    probe: &DVector<f64>,
    scaled: &ScaledProblem,
    spec: &PenaltySpec,
) -> f64 {
    let x = scaled.x();
    let y = scaled.y();
    let pure = PenaltySpec::new(*spec.rule());
    let f = |b: &DVector<f64>| energy_scaled(&pure, x, y, b);
    let lc = spec.rule().contraction();
    let rhs = half_weighted(x, &(beta_t - probe)) + f(probe) - f(beta_t1);
    let lhs = 0.5 * (1.0 - lc) * (beta_t1 - probe).norm_squared()
        + half_weighted(x, &(beta_t1 - beta_t));
    rhs - lhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_problem() -> Problem {
        Problem::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 3.0)).unwrap()
    }

    fn fixed(rule: ThresholdRule, rho: f64) -> SolverConfig {
        SolverConfig {
            rho: Rho::Fixed(rho),
            ..SolverConfig::new(rule)
        }
    }

    #[test]
    fn scalar_fixed_point() {
        let out = solve(&scalar_problem(), &fixed(ThresholdRule::soft(1.0).unwrap(), 1.0)).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.beta[0], 2.0);
        assert_eq!(out.trace.rows.last().unwrap().fp_residual, 0.0);
        let scaled = scale_problem(&scalar_problem(), 1.0).unwrap();
        let soft = ThresholdRule::soft(1.0).unwrap();
        for start in [-7.0, 0.0, 0.4, 11.0] {
            let b = tisp_step(&DVector::from_element(1, start), &scaled, &soft, 1.0, 1.0).unwrap();
            assert_eq!(b[0], 2.0);
        }
    }

    #[test]
    fn zero_response_stays_at_zero() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.3, 2.0, 1.0]);
        let problem = Problem::new(x, DVector::zeros(2)).unwrap();
        for rule in ThresholdRule::catalog(0.5).unwrap() {
            let out = solve(&problem, &SolverConfig::new(rule)).unwrap();
            assert_eq!(out.termination, Termination::Converged);
            assert_eq!(out.iterations, 0);
            assert!(out.beta.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn orthonormal_soft_is_closed_form() {
        // X = Q with orthonormal columns: the fixed point is soft(X̃ᵀy; λ)
        let q = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, 0.5, 0.5, 0.5, -0.5]);
        let y = DVector::from_vec(vec![3.0, -1.0, 2.0, 0.5]);
        let problem = Problem::new(q.clone(), y.clone()).unwrap();
        let rule = ThresholdRule::soft(0.8).unwrap();
        let out = solve(&problem, &fixed(rule, 1.0)).unwrap();
        let target = q.tr_mul(&y).map(|v| rule.threshold(v));
        assert_eq!(out.termination, Termination::Converged);
        for (a, b) in out.beta.iter().zip(target.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let scaled = scale_problem(&problem, 1.0).unwrap();
        let one = tisp_step(&DVector::zeros(2), &scaled, &rule, 0.8, 1.0).unwrap();
        assert_eq!(one, target);
    }

    #[test]
    fn zero_threshold_is_gradient_step() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, 0.3]);
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        let problem = Problem::new(x, y).unwrap();
        let scaled = scale_problem(&problem, 2.0).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.1]);
        let hard = ThresholdRule::hard(1.0).unwrap();
        let step = tisp_step(&beta, &scaled, &hard, 0.0, 1.0).unwrap();
        let landweber = &beta + scaled.gradient_step(&beta);
        assert_eq!(step, landweber);
    }

    #[test]
    fn refuses_small_rho() {
        let problem = scalar_problem();
        let err = solve(&problem, &fixed(ThresholdRule::soft(1.0).unwrap(), 0.1)).unwrap_err();
        assert!(matches!(err, Error::RhoTooSmall { .. }));
    }

    #[test]
    fn schedules() {
        let g = LambdaSchedule::Geometric {
            start: 8.0,
            factor: 0.5,
            floor: 1.0,
        };
        assert_eq!([g.at(0), g.at(1), g.at(3), g.at(9)], [8.0, 4.0, 1.0, 1.0]);
        assert!(!g.settled(2));
        assert!(g.settled(3));
        let e = LambdaSchedule::Explicit(vec![3.0, 2.0]);
        assert_eq!([e.at(0), e.at(1), e.at(5)], [3.0, 2.0, 2.0]);
        assert!(LambdaSchedule::Explicit(vec![]).validate().is_err());
        assert!(LambdaSchedule::Geometric {
            start: 1.0,
            factor: 1.0,
            floor: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn continuation_reaches_same_fixed_point_on_convex_problem() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.3, 1.5, 0.2, 0.0, 0.4, 1.0]);
        let y = DVector::from_vec(vec![4.0, -2.0, 0.5]);
        let problem = Problem::new(x, y).unwrap();
        let rule = ThresholdRule::soft(0.3).unwrap();
        let plain = solve(&problem, &SolverConfig { tol: 1e-12, ..SolverConfig::new(rule) }).unwrap();
        let cont = solve(
            &problem,
            &SolverConfig {
                tol: 1e-12,
                schedule: LambdaSchedule::Geometric {
                    start: 3.0,
                    factor: 0.7,
                    floor: 0.3,
                },
                ..SolverConfig::new(rule)
            },
        )
        .unwrap();
        for (a, b) in plain.beta.iter().zip(cont.beta.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn t_max_examples() {
        // ρ²e₀/(σ²λ²J) = 2¹⁰
        assert_eq!(t_max_estimate(1.0, 1024.0, 1.0, 1.0, 1, 0.5, 1000).unwrap(), 10);
        assert_eq!(t_max_estimate(1.0, 0.5, 1.0, 1.0, 1, 0.5, 1000).unwrap(), 1);
        assert_eq!(t_max_estimate(1.0, 1024.0, 1.0, 1.0, 1, 1.0 - 1e-15, 1000).unwrap(), 1000);
        assert!(t_max_estimate(1.0, 1.0, 0.0, 1.0, 1, 0.5, 10).is_err());
        assert!(t_max_estimate(1.0, 1.0, 1.0, 1.0, 1, 1.0, 10).is_err());
    }

    #[test]
    fn triangle_slack_at_next_iterate_is_zero_and_at_current_is_descent() {
        let x = DMatrix::from_row_slice(3, 4, &[1.0, 0.2, -0.3, 0.0, 0.4, 1.1, 0.0, -0.6, 0.0, 0.3, 0.9, 0.5]);
        let y = DVector::from_vec(vec![1.5, -0.7, 2.2]);
        let problem = Problem::new(x, y).unwrap();
        let scaled = resolve_scaling(&problem, Rho::default(), &ThresholdRule::soft(0.2).unwrap()).unwrap();
        let beta_t = DVector::from_vec(vec![0.5, -0.2, 0.0, 1.0]);
        for rule in ThresholdRule::catalog(0.2).unwrap() {
            let spec = PenaltySpec::new(rule);
            let next = tisp_step(&beta_t, &scaled, &rule, rule.effective_threshold(), 1.0).unwrap();
            let at_next = triangle_inequality_check(&beta_t, &next, &next, &scaled, &spec);
            assert_abs_diff_eq!(at_next, 0.0, epsilon = 1e-12);
            let at_current = triangle_inequality_check(&beta_t, &next, &beta_t, &scaled, &spec);
            assert!(at_current >= -1e-12, "{rule}: {at_current}");
        }
    }

    #[test]
    fn trace_csv_layout() {
        let out = solve(&scalar_problem(), &fixed(ThresholdRule::soft(1.0).unwrap(), 1.0)).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,objective,fp_residual,support,pred_err,est_err,weighted_err");
        assert_eq!(lines.next().unwrap(), "0,4.5,2.0,0,,,");
        assert_eq!(lines.next().unwrap(), "1,2.5,0.0,1,,,");
    }

    #[test]
    fn invalid_configs() {
        let problem = scalar_problem();
        let scad = ThresholdRule::scad(1.0, 3.7).unwrap();
        let mut c = SolverConfig::new(scad);
        c.alpha = 0.5;
        assert!(matches!(solve(&problem, &c), Err(Error::UnsupportedStepsize(_))));
        let mut c = SolverConfig::new(ThresholdRule::soft(1.0).unwrap());
        c.tol = 0.0;
        assert!(solve(&problem, &c).is_err());
        c.tol = 1e-8;
        c.start = Start::Given(DVector::zeros(3));
        assert!(solve(&problem, &c).is_err());
    }
}
