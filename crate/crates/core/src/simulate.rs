//! Synthetic regression data and the decay and rate experiments.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::problem::{spectral_norm, Problem, SPECTRAL_TOL};
use crate::solver::{solve, LambdaSchedule, Rho, SolverConfig, Termination};
use crate::thresholding::{RuleKind, ThresholdRule};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Number of trailing weighted errors whose median is the plateau.
pub const PLATEAU_WINDOW: usize = 10;
/// The contraction fit uses the leading iterates above this multiple of the
/// plateau.
pub const PLATEAU_MULTIPLE: f64 = 4.0;
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Ensemble {
    GaussianIid,
    GaussianAr1 { rho_corr: f64 },
    Orthonormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    RademacherScaled,
    UniformBounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaPolicy {
    /// `λ = A·σ·√(log(e·p))`.
    Theory {
        #[serde(rename = "A")]
        a: f64,
    },
    Explicit { value: f64 },
}

impl LambdaPolicy {
    pub fn lambda(&self, sigma: f64, p: usize) -> f64 {
        match *self {
            LambdaPolicy::Theory { a } => crate::solver::theory_lambda(a, sigma, p),
            LambdaPolicy::Explicit { value } => value,
        }
    }
}

/// Threshold schedule relative to the target `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant,
    /// Starts at `start_multiple·λ`, shrinks by `factor`, floors at `λ`.
    Geometric { start_multiple: f64, factor: f64 },
}

impl ScheduleSpec {
    fn build(&self, lambda: f64) -> LambdaSchedule {
        match *self {
            ScheduleSpec::Constant => LambdaSchedule::Constant(lambda),
            ScheduleSpec::Geometric {
                start_multiple,
                factor,
            } => LambdaSchedule::Geometric {
                start: start_multiple * lambda,
                factor,
                floor: lambda,
            },
        }
    }
}

/// Decay experiment configuration, read from JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub ensemble: Ensemble,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "J_star")]
    pub j_star: usize,
    /// Smallest nonzero `|β*_j|`; defaults to `5·√(log(e·p))·max(σ, 1)`.
    #[serde(default)]
    pub signal_magnitude: Option<f64>,
    pub sigma: f64,
    pub noise_kind: NoiseKind,
    pub seeds: Vec<u64>,
    /// Bare kind names (`"hard"`) take the catalog shape parameters; full
    /// specs (`"mcp(lambda=1,gamma=3)"`) keep theirs. The threshold always
    /// comes from `lambda_policy`.
    pub rules: Vec<String>,
    pub lambda_policy: LambdaPolicy,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub rho_epsilon: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

/// Parses an experiment rule entry and moves it to threshold `lambda`.
pub fn parse_rule_entry(entry: &str, lambda: f64) -> Result<ThresholdRule> {
    let entry = entry.trim();
    match RuleKind::from_name(entry) {
        Some(kind) => ThresholdRule::with_defaults(kind, lambda),
        None => entry.parse::<ThresholdRule>()?.with_threshold(lambda),
    }
}

#[allow(clippy::too_many_arguments)]
fn check_common(
    problems: &mut Vec<String>,
    sigma: f64,
    seeds: &[u64],
    lambda_policy: &LambdaPolicy,
    tol: Option<f64>,
    max_iter: Option<usize>,
    rho_epsilon: Option<f64>,
    signal_magnitude: Option<f64>,
) {
    if !(sigma.is_finite() && sigma >= 0.0) {
        problems.push(format!("sigma: must be finite and >= 0, got {sigma}"));
    }
    if seeds.is_empty() {
        problems.push("seeds: at least one seed is required".into());
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        problems.push("seeds: values must be distinct".into());
    }
    match *lambda_policy {
        LambdaPolicy::Theory { a } if !(a.is_finite() && a > 0.0) => {
            problems.push(format!("lambda_policy.A: must be finite and > 0, got {a}"))
        }
        LambdaPolicy::Explicit { value } if !(value.is_finite() && value >= 0.0) => problems
            .push(format!("lambda_policy.value: must be finite and >= 0, got {value}")),
        _ => {}
    }
    if let Some(t) = tol {
        if !(t.is_finite() && t > 0.0) {
            problems.push(format!("tol: must be finite and > 0, got {t}"));
        }
    }
    if max_iter == Some(0) {
        problems.push("max_iter: must be at least 1".into());
    }
    if let Some(e) = rho_epsilon {
        if !(e.is_finite() && e >= 0.0) {
            problems.push(format!("rho_epsilon: must be finite and >= 0, got {e}"));
        }
    }
    if let Some(m) = signal_magnitude {
        if !(m.is_finite() && m > 0.0) {
            problems.push(format!("signal_magnitude: must be finite and > 0, got {m}"));
        }
    }
}

fn check_ensemble(problems: &mut Vec<String>, ensemble: &Ensemble, n: usize, p: usize) {
    match *ensemble {
        Ensemble::GaussianAr1 { rho_corr } if rho_corr.is_nan() || rho_corr.abs() >= 1.0 => {
            problems.push(format!("ensemble.rho_corr: must lie in (-1, 1), got {rho_corr}"))
        }
        Ensemble::Orthonormal if n < p => {
            problems.push(format!("ensemble: orthonormal design needs n >= p, got n = {n}, p = {p}"))
        }
        _ => {}
    }
}

fn finish(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Spec(problems.join("; ")))
    }
}

/// Lists every missing required key and every unknown key of a JSON object,
/// which serde alone reports one at a time.
fn check_keys(text: &str, required: &[&str], optional: &[&str]) -> Result<()> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
    let Some(map) = value.as_object() else {
        return Err(Error::Spec("expected a JSON object".into()));
    };
    let mut problems: Vec<String> = required
        .iter()
        .filter(|k| !map.contains_key(**k))
        .map(|k| format!("{k}: missing"))
        .collect();
    for key in map.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            problems.push(format!("{key}: unknown field"));
        }
    }
    finish(problems)
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        check_keys(
            text,
            &[
                "ensemble",
                "n",
                "p",
                "J_star",
                "sigma",
                "noise_kind",
                "seeds",
                "rules",
                "lambda_policy",
            ],
            &["signal_magnitude", "schedule", "rho_epsilon", "tol", "max_iter"],
        )?;
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reports every invalid field at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n: must be at least 1".into());
        }
        if self.p == 0 {
            problems.push("p: must be at least 1".into());
        }
        if self.j_star == 0 || self.j_star > self.n.min(self.p) {
            problems.push(format!(
                "J_star: must lie in [1, min(n, p)] = [1, {}], got {}",
                self.n.min(self.p),
                self.j_star
            ));
        }
        check_ensemble(&mut problems, &self.ensemble, self.n, self.p);
        check_common(
            &mut problems,
            self.sigma,
            &self.seeds,
            &self.lambda_policy,
            self.tol,
            self.max_iter,
            self.rho_epsilon,
            self.signal_magnitude,
        );
        if self.rules.is_empty() {
            problems.push("rules: at least one rule is required".into());
        }
        let lambda = self.lambda();
        for r in &self.rules {
            if let Err(e) = parse_rule_entry(r, lambda) {
                problems.push(format!("rules: {e}"));
            }
        }
        if let Some(ScheduleSpec::Geometric {
            start_multiple,
            factor,
        }) = self.schedule
        {
            if !(start_multiple.is_finite() && start_multiple >= 1.0) {
                problems.push(format!("schedule.start_multiple: must be >= 1, got {start_multiple}"));
            }
            if !(factor > 0.0 && factor < 1.0) {
                problems.push(format!("schedule.factor: must lie in (0, 1), got {factor}"));
            }
        }
        finish(problems)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_policy.lambda(self.sigma, self.p)
    }

    fn signal(&self) -> f64 {
        self.signal_magnitude
            .unwrap_or_else(|| default_signal(self.sigma, self.p))
    }
}

/// `5·√(log(e·p))·max(σ, 1)`, so noiseless runs keep a nonzero signal.
pub fn default_signal(sigma: f64, p: usize) -> f64 {
    5.0 * (1.0 + (p as f64).ln()).sqrt() * sigma.max(1.0)
}

/// SplitMix64 finalizer, used to derive independent per-replication streams.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `stream` for replication `seed`.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream)
}

const DESIGN_STREAM: u64 = 1;
const BETA_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

pub fn gen_design(ensemble: &Ensemble, n: usize, p: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::Spec("design needs n >= 1 and p >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let scale = 1.0 / (n as f64).sqrt();
    match *ensemble {
        Ensemble::GaussianIid => {
            // fill row by row so the stream order does not depend on storage
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = normal() * scale;
                }
            }
            Ok(x)
        }
        Ensemble::GaussianAr1 { rho_corr } => {
            if rho_corr.is_nan() || rho_corr.abs() >= 1.0 {
                return Err(Error::Spec(format!("rho_corr must lie in (-1, 1), got {rho_corr}")));
            }
            let innov = (1.0 - rho_corr * rho_corr).sqrt();
            let mut x = DMatrix::zeros(n, p);
            for i in 0..n {
                let mut prev = normal();
                x[(i, 0)] = prev * scale;
                for j in 1..p {
                    prev = rho_corr * prev + innov * normal();
                    x[(i, j)] = prev * scale;
                }
            }
            Ok(x)
        }
        Ensemble::Orthonormal => {
            if n < p {
                return Err(Error::Spec(format!(
                    "orthonormal design needs n >= p, got n = {n}, p = {p}"
                )));
            }
            let mut g = DMatrix::zeros(n, p);
            for i in 0..n {
                for j in 0..p {
                    g[(i, j)] = normal();
                }
            }
            Ok(g.qr().q())
        }
    }
}

/// `J` nonzeros of magnitude `magnitude` with random signs at uniformly
/// random positions.
pub fn gen_beta_star(p: usize, j_star: usize, magnitude: f64, seed: u64) -> Result<DVector<f64>> {
    if j_star > p {
        return Err(Error::Spec(format!("J_star = {j_star} exceeds p = {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, p, j_star).into_vec();
    idx.sort_unstable();
    let mut beta = DVector::zeros(p);
    for j in idx {
        beta[j] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    Ok(beta)
}

/// `y = Xβ* + ε` with i.i.d. noise of scale `σ`.
pub fn gen_response(
    x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    sigma: f64,
    noise_kind: NoiseKind,
    seed: u64,
) -> Result<DVector<f64>> {
    if beta_star.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            found: beta_star.len(),
        });
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
            reason: "noise scale must be finite and >= 0",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = sigma * 3f64.sqrt();
    let noise = DVector::from_fn(x.nrows(), |_, _| match noise_kind {
        NoiseKind::Gaussian => {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        }
        NoiseKind::RademacherScaled => {
            if rng.random::<bool>() {
                sigma
            } else {
                -sigma
            }
        }
        NoiseKind::UniformBounded => {
            if half_width == 0.0 {
                0.0
            } else {
                rng.random_range(-half_width..=half_width)
            }
        }
    });
    Ok(x * beta_star + noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// `‖X(β − β*)‖²`
    pub pred: f64,
    /// `‖β − β*‖²`
    pub est: f64,
    /// `ρ²‖β − β*‖² − ‖X(β − β*)‖²`
    pub weighted: f64,
}

pub fn error_metrics(beta: &DVector<f64>, problem: &Problem, rho: f64) -> Result<ErrorMetrics> {
    let truth = problem.beta_star().ok_or(Error::MissingTruth("error metrics"))?;
    problem.check_len(beta)?;
    let delta = beta - truth;
    let pred = (problem.x() * &delta).norm_squared();
    let est = delta.norm_squared();
    Ok(ErrorMetrics {
        pred,
        est,
        weighted: rho * rho * est - pred,
    })
}

/// One synthetic instance with known truth.
#[allow(clippy::too_many_arguments)]
pub fn gen_problem(
    ensemble: &Ensemble,
    n: usize,
    p: usize,
    j_star: usize,
    magnitude: f64,
    sigma: f64,
    noise_kind: NoiseKind,
    seed: u64,
) -> Result<Problem> {
    let x = gen_design(ensemble, n, p, stream_seed(seed, DESIGN_STREAM))?;
    let beta = gen_beta_star(p, j_star, magnitude, stream_seed(seed, BETA_STREAM))?;
    let y = gen_response(&x, &beta, sigma, noise_kind, stream_seed(seed, NOISE_STREAM))?;
    Problem::new(x, y)?.with_truth(beta, Some(sigma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayResult {
    pub seed: u64,
    pub rule: String,
    pub n: usize,
    pub p: usize,
    pub j_star: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub rho: f64,
    pub iters: usize,
    pub converged: bool,
    pub pred_err: f64,
    pub est_err: f64,
    pub weighted_err: f64,
    /// `e_t` for every iterate, original coordinates.
    pub weighted_series: Vec<f64>,
    /// `None` when fewer than [`MIN_FIT_POINTS`] points sit above the plateau.
    pub kappa_hat: Option<f64>,
    pub plateau: f64,
    /// `plateau/(λ²J*)`; absent when `λ = 0`.
    pub plateau_ratio: Option<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Plateau level: median of the last [`PLATEAU_WINDOW`] values.
pub fn plateau_level(series: &[f64]) -> f64 {
    let start = series.len().saturating_sub(PLATEAU_WINDOW);
    median(&series[start..])
}

/// Least-squares slope and intercept of `y` on `x`, with `R²`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, intercept, r2))
}

/// `κ̂ = exp(slope)` of `log e_t` against `t` over the leading iterates that
/// stay above `PLATEAU_MULTIPLE·plateau`.
pub fn fit_contraction(series: &[f64], plateau: f64) -> Option<f64> {
    let cut = PLATEAU_MULTIPLE * plateau;
    let lead: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .take_while(|(_, e)| **e > cut && **e > 0.0)
        .map(|(t, e)| (t as f64, e.ln()))
        .collect();
    if lead.len() < MIN_FIT_POINTS {
        return None;
    }
    let (t, l): (Vec<f64>, Vec<f64>) = lead.into_iter().unzip();
    linear_fit(&t, &l).map(|(slope, _, _)| slope.exp())
}

/// `ρ = (1+ε)·‖X‖₂`; `ε = 0` pins `ρ` to the spectral norm itself.
fn scaling_for(epsilon: Option<f64>, problem: &Problem) -> Rho {
    match epsilon {
        Some(0.0) => Rho::Fixed(spectral_norm(problem.x(), SPECTRAL_TOL)),
        Some(e) => Rho::Auto { epsilon: e },
        None => Rho::default(),
    }
}

/// Runs one `(seed, rule)` replication.
fn decay_replication(spec: &ExperimentSpec, seed: u64, rule_entry: &str) -> Result<DecayResult> {
    let lambda = spec.lambda();
    let problem = gen_problem(
        &spec.ensemble,
        spec.n,
        spec.p,
        spec.j_star,
        spec.signal(),
        spec.sigma,
        spec.noise_kind,
        seed,
    )?;
    let rule = parse_rule_entry(rule_entry, lambda)?;
    let config = SolverConfig {
        rho: scaling_for(spec.rho_epsilon, &problem),
        schedule: spec.schedule.unwrap_or(ScheduleSpec::Constant).build(lambda),
        tol: spec.tol.unwrap_or(DEFAULT_TOL),
        max_iter: spec.max_iter.unwrap_or(DEFAULT_MAX_ITER),
        record_every: 1,
        ..SolverConfig::new(rule)
    };
    let out = solve(&problem, &config)?;
    let series: Vec<f64> = out
        .trace
        .rows
        .iter()
        .map(|r| r.weighted_err.expect("truth is known"))
        .collect();
    let plateau = plateau_level(&series);
    let kappa_hat = fit_contraction(&series, plateau);
    let scale = lambda * lambda * spec.j_star as f64;
    let metrics = error_metrics(&out.beta, &problem, out.rho)?;
    Ok(DecayResult {
        seed,
        rule: rule.to_string(),
        n: spec.n,
        p: spec.p,
        j_star: spec.j_star,
        sigma: spec.sigma,
        lambda,
        rho: out.rho,
        iters: out.iterations,
        converged: out.termination == Termination::Converged,
        pred_err: metrics.pred,
        est_err: metrics.est,
        weighted_err: metrics.weighted,
        weighted_series: series,
        kappa_hat,
        plateau,
        plateau_ratio: (scale > 0.0).then(|| plateau / scale),
    })
}

/// Every `(seed, rule)` replication, sorted by seed and then by the rule's
/// position in the spec.
pub fn run_decay_experiment(spec: &ExperimentSpec) -> Result<Vec<DecayResult>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        for (k, rule) in spec.rules.iter().enumerate() {
            jobs.push((seed, k, rule.as_str()));
        }
    }
    jobs.sort_by_key(|(seed, k, _)| (*seed, *k));
    let results = crate::par::par_map(&jobs, |(seed, _, rule)| decay_replication(spec, *seed, rule));
    results.into_iter().collect()
}

/// `e_{t+1} <= κ̂·e_t + K′·λ²J*` for one pair `(κ̂, K′)` over all runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBound {
    /// Largest fitted contraction rate.
    pub kappa: f64,
    /// Smallest `K′ >= 0` making the bound hold on every step.
    pub k_prime: f64,
    pub runs: usize,
    pub steps: usize,
}

/// Fits a single `(κ̂, K′)` over converged runs with `λ > 0`.
pub fn fit_step_bound(results: &[DecayResult]) -> Option<StepBound> {
    let used: Vec<&DecayResult> = results
        .iter()
        .filter(|r| r.converged && r.lambda > 0.0)
        .collect();
    let kappa = used
        .iter()
        .filter_map(|r| r.kappa_hat)
        .fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.max(k))))?;
    let mut k_prime = 0.0f64;
    let mut steps = 0;
    for r in &used {
        let scale = r.lambda * r.lambda * r.j_star as f64;
        for w in r.weighted_series.windows(2) {
            k_prime = k_prime.max((w[1] - kappa * w[0]) / scale);
            steps += 1;
        }
    }
    Some(StepBound {
        kappa,
        k_prime,
        runs: used.len(),
        steps,
    })
}

/// Rate experiment over a grid of `(p, J*)` with `n = ⌈n_factor·J*·ln p⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub ensemble: Ensemble,
    pub p_grid: Vec<usize>,
    #[serde(rename = "J_star_grid")]
    pub j_star_grid: Vec<usize>,
    #[serde(default = "default_n_factor")]
    pub n_factor: f64,
    #[serde(default)]
    pub signal_magnitude: Option<f64>,
    pub sigma: f64,
    pub noise_kind: NoiseKind,
    pub seeds: Vec<u64>,
    pub rule: String,
    pub lambda_policy: LambdaPolicy,
    #[serde(default)]
    pub rho_epsilon: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn default_n_factor() -> f64 {
    20.0
}

impl RateSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        check_keys(
            text,
            &[
                "ensemble",
                "p_grid",
                "J_star_grid",
                "sigma",
                "noise_kind",
                "seeds",
                "rule",
                "lambda_policy",
            ],
            &["n_factor", "signal_magnitude", "rho_epsilon", "tol", "max_iter"],
        )?;
        let spec: RateSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_for(&self, p: usize, j: usize) -> usize {
        (self.n_factor * j as f64 * (p as f64).ln()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let points = self.p_grid.len() * self.j_star_grid.len();
        if points < 4 {
            problems.push(format!("p_grid x J_star_grid: at least 4 grid points required, got {points}"));
        }
        if self.seeds.len() < 10 {
            problems.push(format!("seeds: at least 10 seeds required, got {}", self.seeds.len()));
        }
        if !(self.n_factor.is_finite() && self.n_factor > 0.0) {
            problems.push(format!("n_factor: must be finite and > 0, got {}", self.n_factor));
        }
        for &p in &self.p_grid {
            if p < 2 {
                problems.push(format!("p_grid: values must be >= 2, got {p}"));
            }
            for &j in &self.j_star_grid {
                let n = self.n_for(p, j);
                if j == 0 || j > p.min(n) {
                    problems.push(format!("J_star_grid: J* = {j} is not in [1, min(n, p)] for p = {p}"));
                }
                check_ensemble(&mut problems, &self.ensemble, n, p);
            }
        }
        check_common(
            &mut problems,
            self.sigma,
            &self.seeds,
            &self.lambda_policy,
            self.tol,
            self.max_iter,
            self.rho_epsilon,
            self.signal_magnitude,
        );
        if self.sigma == 0.0 {
            problems.push("sigma: the rate experiment needs sigma > 0".into());
        }
        if let Some(&p) = self.p_grid.first() {
            if let Err(e) = parse_rule_entry(&self.rule, self.lambda_policy.lambda(self.sigma, p)) {
                problems.push(format!("rule: {e}"));
            }
        }
        finish(problems)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub p: usize,
    pub j_star: usize,
    pub n: usize,
    pub median_pred_err: f64,
    /// `σ²·J*·log(e·p)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<RatePoint>,
    pub replications: Vec<DecayResult>,
}

fn rate_replication(spec: &RateSpec, p: usize, j: usize, seed: u64) -> Result<DecayResult> {
    let n = spec.n_for(p, j);
    let lambda = spec.lambda_policy.lambda(spec.sigma, p);
    let magnitude = spec
        .signal_magnitude
        .unwrap_or_else(|| default_signal(spec.sigma, p));
    // one stream per grid point so replications differ across the grid
    let point_seed = stream_seed(seed, ((p as u64) << 32) | j as u64);
    let problem = gen_problem(
        &spec.ensemble,
        n,
        p,
        j,
        magnitude,
        spec.sigma,
        spec.noise_kind,
        point_seed,
    )?;
    let rule = parse_rule_entry(&spec.rule, lambda)?;
    let max_iter = spec.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let config = SolverConfig {
        rho: scaling_for(spec.rho_epsilon, &problem),
        tol: spec.tol.unwrap_or(DEFAULT_TOL),
        max_iter,
        record_every: max_iter,
        ..SolverConfig::new(rule)
    };
    let out = solve(&problem, &config)?;
    let metrics = error_metrics(&out.beta, &problem, out.rho)?;
    Ok(DecayResult {
        seed,
        rule: rule.to_string(),
        n,
        p,
        j_star: j,
        sigma: spec.sigma,
        lambda,
        rho: out.rho,
        iters: out.iterations,
        converged: out.termination == Termination::Converged,
        pred_err: metrics.pred,
        est_err: metrics.est,
        weighted_err: metrics.weighted,
        weighted_series: Vec::new(),
        kappa_hat: None,
        plateau: f64::NAN,
        plateau_ratio: None,
    })
}

/// Regresses `log(median prediction error)` on `log(σ²J*·log(e·p))`.
pub fn run_rate_experiment(spec: &RateSpec) -> Result<RateReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &p in &spec.p_grid {
        for &j in &spec.j_star_grid {
            for &seed in &spec.seeds {
                jobs.push((p, j, seed));
            }
        }
    }
    jobs.sort_unstable();
    jobs.dedup();
    let runs = crate::par::par_map(&jobs, |(p, j, seed)| rate_replication(spec, *p, *j, *seed));
    let replications: Vec<DecayResult> = runs.into_iter().collect::<Result<_>>()?;

    let mut points = Vec::new();
    for chunk in replications.chunk_by(|a, b| a.p == b.p && a.j_star == b.j_star) {
        let first = &chunk[0];
        let preds: Vec<f64> = chunk.iter().map(|r| r.pred_err).collect();
        points.push(RatePoint {
            p: first.p,
            j_star: first.j_star,
            n: first.n,
            median_pred_err: median(&preds),
            reference: spec.sigma
                * spec.sigma
                * first.j_star as f64
                * (1.0 + (first.p as f64).ln()),
        });
    }
    let xs: Vec<f64> = points.iter().map(|q| q.reference.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|q| q.median_pred_err.ln()).collect();
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGrid(
            "a grid point has zero median prediction error".into(),
        ));
    }
    let (slope, intercept, r2) = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::DegenerateGrid("all grid points share one reference rate".into()))?;
    Ok(RateReport {
        slope,
        intercept,
        r2,
        points,
        replications,
    })
}

pub const RESULTS_HEADER: [&str; 15] = [
    "seed",
    "rule",
    "n",
    "p",
    "J_star",
    "sigma",
    "lambda",
    "rho",
    "iters",
    "pred_err",
    "est_err",
    "weighted_err",
    "kappa_hat",
    "plateau",
    "plateau_ratio",
];

/// Results CSV; absent values are written as empty fields.
pub fn write_results_csv<W: Write>(out: W, results: &[DecayResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in results {
        w.write_record([
            r.seed.to_string(),
            r.rule.clone(),
            r.n.to_string(),
            r.p.to_string(),
            r.j_star.to_string(),
            fmt_f64(r.sigma),
            fmt_f64(r.lambda),
            fmt_f64(r.rho),
            r.iters.to_string(),
            fmt_f64(r.pred_err),
            fmt_f64(r.est_err),
            fmt_f64(r.weighted_err),
            opt(r.kappa_hat),
            opt((!r.plateau.is_nan()).then_some(r.plateau)),
            opt(r.plateau_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
