//! Ground truth at desk scale: exhaustive `ℓ0` minimization, coordinate-wise
//! minima, Θ-equation certificates and sampled probes of the comparison
//! regularity conditions.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::penalty::{penalty_hard, penalty_l0, Form, PenaltySpec, Piece};
use crate::problem::{scale_problem, Problem, ScaledProblem};
use crate::thresholding::ThresholdRule;

/// Largest `p` accepted by [`l0_global_min`].
pub const MAX_ENUMERATION_P: usize = 14;
/// Relative singular-value cutoff of the per-support least squares.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Slack under which a returned nonzero still counts as clearing the gap.
pub const GAP_TOL: f64 = 1e-10;
pub const CD_TOL: f64 = 1e-10;
pub const THETA_CONTINUITY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct L0Solution {
    /// Minimizer in original coordinates.
    pub beta: DVector<f64>,
    pub beta_scaled: DVector<f64>,
    /// `½‖y − X̃β̃‖² + Σ P_0(β̃_j; λ)`.
    pub objective: f64,
    /// The enumerated minimizer broke the gap and was replaced by one hard
    /// thresholding step from it.
    pub gap_repaired: bool,
}

fn objective_l0(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let pen: f64 = beta.iter().map(|b| penalty_l0(*b, lambda)).sum();
    0.5 * (y - x * beta).norm_squared() + pen
}

fn least_squares_on(x: &DMatrix<f64>, y: &DVector<f64>, mask: u32) -> DVector<f64> {
    let p = x.ncols();
    let cols: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
    let mut beta = DVector::zeros(p);
    if cols.is_empty() {
        return beta;
    }
    let sub = x.select_columns(&cols);
    let svd = sub.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = PINV_CUTOFF * smax;
    let coef = if smax == 0.0 {
        DVector::zeros(cols.len())
    } else {
        svd.solve(y, eps).expect("both factors were computed")
    };
    for (k, &j) in cols.iter().enumerate() {
        beta[j] = coef[k];
    }
    beta
}

/// Global minimizer of `½‖y − X̃β̃‖² + P_0(β̃; λ)` with `X̃ = X/ρ`, by
/// enumerating every support.
///
/// Ties are broken towards the smaller support bitmask. If some nonzero of
/// the winner sits below `λ`, one hard thresholding step is taken from it;
/// with `ρ >= ‖X‖₂` that step cannot raise the hard objective, and its output
/// has the gap by construction.
pub fn l0_global_min(problem: &Problem, lambda: f64, rho: f64) -> Result<L0Solution> {
    let p = problem.p();
    if p > MAX_ENUMERATION_P {
        return Err(Error::TooLarge {
            p,
            limit: MAX_ENUMERATION_P,
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "threshold must be finite and >= 0",
        });
    }
    let scaled = scale_problem(problem, rho)?;
    let x = scaled.x();
    let y = scaled.y();

    let masks: Vec<u32> = (0..1u32 << p).collect();
    let candidates = crate::par::par_map(&masks, |&mask| {
        let beta = least_squares_on(x, y, mask);
        (objective_l0(x, y, &beta, lambda), mask, beta)
    });
    let (objective, _, beta) = candidates
        .into_iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)))
        .expect("at least the empty support");

    let has_gap = beta.iter().all(|b| *b == 0.0 || b.abs() >= lambda - GAP_TOL);
    let (beta_scaled, objective, gap_repaired) = if has_gap {
        (beta, objective, false)
    } else {
        let hard = ThresholdRule::hard(lambda)?;
        let z = &beta + scaled.gradient_step(&beta);
        let repaired = z.map(|v| hard.threshold(v));
        let value = objective_l0(x, y, &repaired, lambda);
        (repaired, value.min(objective), true)
    };
    Ok(L0Solution {
        beta: scaled.unscale(&beta_scaled),
        beta_scaled,
        objective,
        gap_repaired,
    })
}

/// Hard-penalized objective `½‖y − X̃β̃‖² + Σ P_H(β̃_j; λ)`.
pub fn objective_hard(scaled: &ScaledProblem, beta_scaled: &DVector<f64>, lambda: f64) -> f64 {
    let pen: f64 = beta_scaled.iter().map(|b| penalty_hard(*b, lambda)).sum();
    0.5 * (scaled.y() - scaled.x() * beta_scaled).norm_squared() + pen
}

/// `ℓ0`-penalized objective in the scaled frame.
pub fn objective_zero(scaled: &ScaledProblem, beta_scaled: &DVector<f64>, lambda: f64) -> f64 {
    objective_l0(scaled.x(), scaled.y(), beta_scaled, lambda)
}

#[derive(Debug, Clone)]
pub struct CdOutput {
    pub beta: DVector<f64>,
    pub beta_scaled: DVector<f64>,
    pub sweeps: usize,
    /// Last sweep moved no coordinate by more than [`CD_TOL`].
    pub converged: bool,
}

/// Root of the increasing branch of `g(a) = w(a − m) + ζ r a^{r−1}` in
/// `[lo, hi]`, given `g(lo) < 0 <= g(hi)`.
fn power_root(w: f64, m: f64, zeta: f64, r: f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = |a: f64| w * (a - m) + zeta * r * a.powf(r - 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Candidate minimizers of `½w(a − m)² + piece(a)` on the piece's interval.
fn piece_candidates(piece: &Piece, w: f64, m: f64, out: &mut Vec<f64>) {
    let (lo, hi) = (piece.lo, piece.hi);
    out.push(lo);
    if hi.is_finite() {
        out.push(hi);
    }
    match piece.form {
        Form::Quadratic { c2, c1, .. } => {
            let curv = w + 2.0 * c2;
            if curv > 0.0 {
                let a = (w * m - c1) / curv;
                out.push(a.clamp(lo, hi));
            }
        }
        Form::Power { zeta, r } => {
            // g is convex with its minimum at a_min; the local minimizer of
            // the objective is the larger root of g
            let a_min = (zeta * r * (1.0 - r) / w).powf(1.0 / (2.0 - r));
            let start = a_min.max(lo);
            let g = |a: f64| w * (a - m) + zeta * r * a.powf(r - 1.0);
            if g(start) < 0.0 {
                let mut top = m.max(start) + 1.0;
                while g(top) < 0.0 {
                    top *= 2.0;
                }
                out.push(power_root(w, m, zeta, r, start, top.min(hi)));
            }
        }
    }
}

/// Exact minimizer of `½w(b − c)² + P(b)` over scalar `b`, keeping `current`
/// when it is not beaten.
fn scalar_min(pieces: &[Piece], w: f64, c: f64, current: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let m = c.abs();
    let mut cands = Vec::with_capacity(8);
    for piece in pieces {
        piece_candidates(piece, w, m, &mut cands);
    }
    let value = |a: f64| {
        let pen = if a == 0.0 {
            0.0
        } else {
            pieces
                .iter()
                .find(|p| a >= p.lo && a <= p.hi)
                .map(|p| p.eval(a))
                .unwrap_or(f64::INFINITY)
        };
        0.5 * w * (a - m) * (a - m) + pen
    };
    let mut best_a = 0.0;
    let mut best_v = value(0.0);
    for a in cands {
        if a > 0.0 {
            let v = value(a);
            if v < best_v {
                best_a = a;
                best_v = v;
            }
        }
    }
    // keep the current coordinate on ties so minimal points do not drift
    let cur_a = if current.signum() == c.signum() || current == 0.0 {
        current.abs()
    } else {
        f64::NAN
    };
    if cur_a.is_finite() && value(cur_a) <= best_v {
        return current;
    }
    best_a.copysign(c)
}

/// Cyclic coordinate minimization of
/// `f(β̃) = ½‖X̃β̃ − y‖² + Σ P(β̃_j)` from a scaled start.
pub fn coordinate_descent_local_min(
    scaled: &ScaledProblem,
    spec: &PenaltySpec,
    start: &DVector<f64>,
    max_sweeps: usize,
) -> Result<CdOutput> {
    let p = scaled.p();
    if start.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: start.len(),
        });
    }
    let x = scaled.x();
    let pieces = spec.pieces();
    let weights: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut beta = start.clone();
    let mut resid = scaled.y() - x * &beta;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut moved = 0.0f64;
        for j in 0..p {
            let w = weights[j];
            let old = beta[j];
            let c = if w > 0.0 {
                old + x.column(j).dot(&resid) / w
            } else {
                0.0
            };
            let new = scalar_min(&pieces, w, c, old);
            if new != old {
                resid.axpy(old - new, &x.column(j), 1.0);
                beta[j] = new;
                moved = moved.max((new - old).abs());
            }
        }
        if !moved.is_finite() {
            return Err(Error::Diverged {
                iter: sweeps,
                what: "coordinate descent",
            });
        }
        if moved <= CD_TOL {
            converged = true;
            break;
        }
    }
    Ok(CdOutput {
        beta: scaled.unscale(&beta),
        beta_scaled: beta,
        sweeps,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaReport {
    /// `‖β̃ − Θ(β̃ + X̃ᵀy − X̃ᵀX̃β̃)‖_∞`.
    pub residual: f64,
    /// Some argument of `Θ` lies within [`THETA_CONTINUITY_GUARD`] of a jump.
    pub near_discontinuity: bool,
    pub passed: bool,
}

/// Θ-equation residual at an original-coordinate `β` scaled by `rho`.
pub fn check_theta_equation(
    beta: &DVector<f64>,
    problem: &Problem,
    rule: &ThresholdRule,
    rho: f64,
    tol: f64,
) -> Result<ThetaReport> {
    problem.check_len(beta)?;
    let scaled = ScaledProblem::new_unchecked(problem, rho);
    Ok(check_theta_equation_scaled(&scaled, rule, &scaled.scale(beta), tol))
}

pub fn check_theta_equation_scaled(
    scaled: &ScaledProblem,
    rule: &ThresholdRule,
    beta_scaled: &DVector<f64>,
    tol: f64,
) -> ThetaReport {
    let z = beta_scaled + scaled.gradient_step(beta_scaled);
    let jumps = rule.discontinuities();
    let mut residual = 0.0f64;
    let mut near = false;
    for (b, v) in beta_scaled.iter().zip(z.iter()) {
        residual = residual.max((b - rule.threshold(*v)).abs());
        near |= jumps.iter().any(|d| (v.abs() - d).abs() <= THETA_CONTINUITY_GUARD);
    }
    ThetaReport {
        residual,
        near_discontinuity: near,
        passed: residual <= tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    R0,
    R1,
    S0,
    S1,
}

impl std::str::FromStr for Assumption {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R0" => Ok(Assumption::R0),
            "R1" => Ok(Assumption::R1),
            "S0" => Ok(Assumption::S0),
            "S1" => Ok(Assumption::S1),
            _ => Err(Error::Config(format!("unknown assumption `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularityProbeConfig {
    pub assumption: Assumption,
    pub delta: f64,
    pub vartheta: f64,
    pub k: f64,
    pub lambda: f64,
    pub reference_beta: DVector<f64>,
    pub num_samples: usize,
    /// Perturbations `β′ − β` have norm up to this radius.
    pub sample_radius: f64,
    pub seed: u64,
}

impl RegularityProbeConfig {
    fn validate(&self, p: usize) -> Result<()> {
        let checks = [
            ("delta", self.delta, self.delta > 0.0),
            ("vartheta", self.vartheta, self.vartheta > 0.0),
            ("K", self.k, self.k >= 0.0),
            ("lambda", self.lambda, self.lambda >= 0.0),
            ("sample_radius", self.sample_radius, self.sample_radius > 0.0),
        ];
        for (name, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "outside the range the assumption allows",
                });
            }
        }
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if self.reference_beta.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.reference_beta.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub assumption: Assumption,
    pub min_slack: f64,
    /// `β′ − β` at the most negative slack, if any slack was negative.
    pub violating_direction: Option<DVector<f64>>,
    pub samples: usize,
}

impl ProbeReport {
    pub fn violated(&self) -> bool {
        self.violating_direction.is_some()
    }
}

/// `RHS − LHS` of the chosen assumption at `β′ = β + Δ`, with `X` as given.
pub fn regularity_slack(
    config: &RegularityProbeConfig,
    x: &DMatrix<f64>,
    rule: &ThresholdRule,
    delta_vec: &DVector<f64>,
) -> f64 {
    let beta = &config.reference_beta;
    let beta_p = beta + delta_vec;
    let spec = PenaltySpec::new(*rule);
    let tau = rule.effective_threshold();
    let lc = rule.contraction();
    let ph: f64 = delta_vec.iter().map(|d| penalty_hard(*d, tau)).sum();
    let sq = delta_vec.norm_squared();
    let xd = (x * delta_vec).norm_squared();
    let p_new = spec.sum(&beta_p);
    let p_ref = spec.sum(beta);
    let lam = config.lambda;
    let support = beta.iter().filter(|b| **b != 0.0).count() as f64;
    let (d, v, k) = (config.delta, config.vartheta, config.k);
    match config.assumption {
        Assumption::R0 => {
            let lhs = v * ph + 0.5 * lc * sq;
            let rhs = 0.5 * (2.0 - d) * xd + p_new + k * p_ref;
            rhs - lhs
        }
        Assumption::R1 => {
            let lhs = v * ph + 0.5 * lc * sq + p_ref;
            let rhs = 0.5 * (2.0 - d) * xd + p_new + k * lam * lam * support;
            rhs - lhs
        }
        Assumption::S0 => {
            let lhs = v * ph + 0.5 * (lc + d) * sq;
            let rhs = xd + p_new + k * p_ref;
            rhs - lhs
        }
        Assumption::S1 => {
            let lhs = v * ph + 0.5 * (lc + d) * sq + p_ref;
            let rhs = xd + p_new + (k + 1.0) * lam * lam * support;
            rhs - lhs
        }
    }
}

/// Falsification probe: evaluates the assumption at `β′ = β` and along
/// coordinate, Gaussian and sparse random directions. A negative slack
/// certifies a violation; nonnegative slack on every sample is only evidence.
///
/// `rule` is moved to threshold `config.lambda`.
pub fn probe_regularity(
    config: &RegularityProbeConfig,
    problem: &Problem,
    rule: &ThresholdRule,
) -> Result<ProbeReport> {
    let p = problem.p();
    config.validate(p)?;
    let rule = rule.with_threshold(config.lambda)?;
    let x = problem.x();

    let mut directions: Vec<DVector<f64>> = vec![DVector::zeros(p)];
    for j in 0..p {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(p);
            e[j] = sign * config.sample_radius;
            directions.push(e);
        }
    }
    let idx: Vec<u64> = (0..config.num_samples as u64).collect();
    let random = crate::par::par_map(&idx, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut d = DVector::from_fn(p, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        if i % 2 == 1 {
            // sparse: keep a handful of coordinates
            let keep = rng.random_range(1..=p.min(3));
            let mut kept = vec![false; p];
            for _ in 0..keep {
                kept[rng.random_range(0..p)] = true;
            }
            for (j, k) in kept.iter().enumerate() {
                if !k {
                    d[j] = 0.0;
                }
            }
        }
        let norm = d.norm();
        if norm > 0.0 {
            let radius = config.sample_radius * rng.random_range(1e-3..=1.0f64);
            d *= radius / norm;
        }
        d
    });
    directions.extend(random);

    let slacks = crate::par::par_map(&directions, |d| regularity_slack(config, x, &rule, d));
    let (pos, min_slack) = slacks
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)))
        .expect("at least the zero direction");
    Ok(ProbeReport {
        assumption: config.assumption,
        min_slack,
        violating_direction: (min_slack < 0.0).then(|| directions[pos].clone()),
        samples: directions.len(),
    })
}

/// `P_o(J) = σ²(J + J·log(e·p/J))`.
pub fn minimax_reference(j: usize, p: usize, sigma: f64) -> Result<f64> {
    if j == 0 || j > p {
        return Err(Error::Config(format!("J = {j} must lie in [1, p = {p}]")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
            reason: "noise scale must be finite and >= 0",
        });
    }
    let (j, p) = (j as f64, p as f64);
    Ok(sigma * sigma * (j + j * (std::f64::consts::E * p / j).ln()))
}
