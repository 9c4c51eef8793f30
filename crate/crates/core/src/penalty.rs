//! Penalties induced by thresholding rules and the energy function.
//!
//! `P_Θ(t) = ∫₀^{|t|} (Θ⁻¹(u) − u) du`. The integrand `s(u) = Θ⁻¹(u) − u`
//! is what the closed forms below integrate piece by piece.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::thresholding::{lr_jump, lr_threshold, RuleKind, ThresholdRule};

/// Extra term `q >= 0` vanishing on the range of `Θ`. It changes objective
/// values but not the set of fixed points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Augmentation {
    #[default]
    None,
    /// `min(λ|t|, λ²/2)`, hard rule only.
    CappedL1,
    /// `(λ²/2)·1{t≠0}`, hard rule only.
    L0,
    /// `λ²/(2(1+η))·1{t≠0} + ηt²/2`, hard-ridge (and hard, as `η = 0`).
    L0L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    rule: ThresholdRule,
    augmentation: Augmentation,
}

impl PenaltySpec {
    pub fn new(rule: ThresholdRule) -> Self {
        PenaltySpec {
            rule,
            augmentation: Augmentation::None,
        }
    }

    pub fn with_augmentation(rule: ThresholdRule, augmentation: Augmentation) -> Result<Self> {
        let ok = match augmentation {
            Augmentation::None => true,
            Augmentation::CappedL1 | Augmentation::L0 => rule.kind() == RuleKind::Hard,
            Augmentation::L0L2 => matches!(rule.kind(), RuleKind::Hard | RuleKind::HardRidge),
        };
        if !ok {
            return Err(Error::Config(format!(
                "augmentation {augmentation:?} is not valid for rule `{rule}`"
            )));
        }
        Ok(PenaltySpec { rule, augmentation })
    }

    pub fn rule(&self) -> &ThresholdRule {
        &self.rule
    }

    pub fn augmentation(&self) -> Augmentation {
        self.augmentation
    }

    /// `P(t) = P_Θ(t) + q(t)`.
    pub fn penalty_theta(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(t));
        }
        Ok(self.value(t))
    }

    /// Unchecked `P(t)`.
    pub(crate) fn value(&self, t: f64) -> f64 {
        let base = penalty_theta_value(&self.rule, t);
        if self.augmentation == Augmentation::None {
            return base;
        }
        base + self.q(t)
    }

    /// `q(t) = P_aug(t) − P_Θ(t)`.
    pub fn q(&self, t: f64) -> f64 {
        let a = t.abs();
        let lam = self.rule.lambda();
        let eta = self.rule.eta();
        let augmented = match self.augmentation {
            Augmentation::None => return 0.0,
            Augmentation::CappedL1 => (lam * a).min(0.5 * lam * lam),
            Augmentation::L0 => penalty_l0(a, lam),
            Augmentation::L0L2 => {
                let jump = if a != 0.0 { 0.5 * lam * lam / (1.0 + eta) } else { 0.0 };
                jump + 0.5 * eta * a * a
            }
        };
        // the difference can dip below zero by rounding where both agree
        (augmented - penalty_theta_value(&self.rule, t)).max(0.0)
    }

    /// `Σ_j P(|v_j|)`.
    pub fn sum(&self, v: &DVector<f64>) -> f64 {
        v.iter().map(|&b| self.value(b)).sum()
    }

    /// Pieces of `P` on `(0, ∞)`; `P(0) = 0` is handled separately.
    pub(crate) fn pieces(&self) -> Vec<Piece> {
        let lam = self.rule.lambda();
        let eta = self.rule.eta();
        match self.augmentation {
            Augmentation::CappedL1 => {
                return vec![
                    Piece::quad(0.0, 0.5 * lam, 0.0, lam, 0.0),
                    Piece::quad(0.5 * lam, f64::INFINITY, 0.0, 0.0, 0.5 * lam * lam),
                ]
            }
            Augmentation::L0 => {
                return vec![Piece::quad(0.0, f64::INFINITY, 0.0, 0.0, 0.5 * lam * lam)]
            }
            Augmentation::L0L2 => {
                return vec![Piece::quad(
                    0.0,
                    f64::INFINITY,
                    0.5 * eta,
                    0.0,
                    0.5 * lam * lam / (1.0 + eta),
                )]
            }
            Augmentation::None => {}
        }
        let inf = f64::INFINITY;
        match self.rule.kind() {
            RuleKind::Soft => vec![Piece::quad(0.0, inf, 0.0, lam, 0.0)],
            RuleKind::Ridge => vec![Piece::quad(0.0, inf, 0.5 * eta, 0.0, 0.0)],
            RuleKind::ElasticNet => vec![Piece::quad(0.0, inf, 0.5 * eta, lam, 0.0)],
            RuleKind::Hard => vec![
                Piece::quad(0.0, lam, -0.5, lam, 0.0),
                Piece::quad(lam, inf, 0.0, 0.0, 0.5 * lam * lam),
            ],
            RuleKind::Berhu if eta == 0.0 => vec![Piece::quad(0.0, inf, 0.0, lam, 0.0)],
            RuleKind::Berhu => vec![
                Piece::quad(0.0, lam / eta, 0.0, lam, 0.0),
                Piece::quad(lam / eta, inf, 0.5 * eta, 0.0, 0.5 * lam * lam / eta),
            ],
            RuleKind::HardRidge => {
                let knot = lam / (1.0 + eta);
                vec![
                    Piece::quad(0.0, knot, -0.5, lam, 0.0),
                    Piece::quad(knot, inf, 0.5 * eta, 0.0, 0.5 * lam * lam / (1.0 + eta)),
                ]
            }
            RuleKind::Scad => {
                let a = self.rule.a();
                vec![
                    Piece::quad(0.0, lam, 0.0, lam, 0.0),
                    Piece::quad(
                        lam,
                        a * lam,
                        -0.5 / (a - 1.0),
                        a * lam / (a - 1.0),
                        -0.5 * lam * lam / (a - 1.0),
                    ),
                    Piece::quad(a * lam, inf, 0.0, 0.0, 0.5 * (a + 1.0) * lam * lam),
                ]
            }
            RuleKind::Mcp => {
                let g = self.rule.gamma();
                vec![
                    Piece::quad(0.0, g * lam, -0.5 / g, lam, 0.0),
                    Piece::quad(g * lam, inf, 0.0, 0.0, 0.5 * g * lam * lam),
                ]
            }
            RuleKind::Lr => {
                let (zeta, r) = (self.rule.zeta(), self.rule.r());
                if zeta == 0.0 {
                    return vec![Piece::quad(0.0, inf, 0.0, 0.0, 0.0)];
                }
                let tau = lr_threshold(zeta, r);
                let jump = lr_jump(zeta, r);
                vec![
                    Piece::quad(0.0, jump, -0.5, tau, 0.0),
                    Piece {
                        lo: jump,
                        hi: inf,
                        form: Form::Power { zeta, r },
                    },
                ]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Form {
    /// `c2·b² + c1·b + c0`
    Quadratic { c2: f64, c1: f64, c0: f64 },
    /// `ζ·b^r`
    Power { zeta: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub form: Form,
}

impl Piece {
    fn quad(lo: f64, hi: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Piece {
            lo,
            hi,
            form: Form::Quadratic { c2, c1, c0 },
        }
    }

    pub fn eval(&self, b: f64) -> f64 {
        match self.form {
            Form::Quadratic { c2, c1, c0 } => (c2 * b + c1) * b + c0,
            Form::Power { zeta, r } => zeta * b.powf(r),
        }
    }
}

/// Closed-form `P_Θ(t)` for every kind except `lr`.
pub fn penalty_theta_closed(rule: &ThresholdRule, t: f64) -> Option<f64> {
    let a = t.abs();
    let lam = rule.lambda();
    let eta = rule.eta();
    let value = match rule.kind() {
        RuleKind::Soft => lam * a,
        RuleKind::Ridge => 0.5 * eta * a * a,
        RuleKind::Hard => penalty_hard(a, lam),
        RuleKind::ElasticNet => lam * a + 0.5 * eta * a * a,
        RuleKind::Berhu => {
            if eta == 0.0 || a <= lam / eta {
                lam * a
            } else {
                0.5 * eta * a * a + 0.5 * lam * lam / eta
            }
        }
        RuleKind::HardRidge => {
            if a < lam / (1.0 + eta) {
                -0.5 * a * a + lam * a
            } else {
                0.5 * eta * a * a + 0.5 * lam * lam / (1.0 + eta)
            }
        }
        RuleKind::Scad => {
            let k = rule.a();
            if a <= lam {
                lam * a
            } else if a <= k * lam {
                (2.0 * k * lam * a - a * a - lam * lam) / (2.0 * (k - 1.0))
            } else {
                0.5 * (k + 1.0) * lam * lam
            }
        }
        RuleKind::Mcp => {
            let g = rule.gamma();
            if a < g * lam {
                -a * a / (2.0 * g) + lam * a
            } else {
                0.5 * g * lam * lam
            }
        }
        RuleKind::Lr => return None,
    };
    Some(value)
}

pub const QUADRATURE_TOL: f64 = 1e-10;

/// `P_Θ(t)` by adaptive Simpson on `[0, |t|]`, split at the kinks of `Θ⁻¹`.
pub fn penalty_theta_quadrature(rule: &ThresholdRule, t: f64) -> f64 {
    let end = t.abs();
    if end == 0.0 {
        return 0.0;
    }
    let s = |u: f64| rule.inverse_unchecked(u) - u;
    let mut knots = vec![0.0];
    knots.extend(rule.inverse_breakpoints().into_iter().filter(|&b| b < end));
    knots.push(end);
    let per_segment = QUADRATURE_TOL / (knots.len() - 1) as f64;
    knots
        .windows(2)
        .map(|w| adaptive_simpson(&s, w[0], w[1], per_segment))
        .sum()
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // evaluate just inside the segment so a kink at an endpoint picks the
    // branch belonging to this segment
    let eps = (b - a) * 1e-15;
    let fa = f(a + eps);
    let fb = f(b - eps);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `P_Θ(t)`: closed form where one exists, quadrature otherwise.
pub(crate) fn penalty_theta_value(rule: &ThresholdRule, t: f64) -> f64 {
    match penalty_theta_closed(rule, t) {
        Some(v) => v,
        None => lr_penalty(rule, t),
    }
}

/// `lr` has no tabulated `P_Θ`; it is integrated numerically.
fn lr_penalty(rule: &ThresholdRule, t: f64) -> f64 {
    penalty_theta_quadrature(rule, t)
}

/// `P_H(t; λ) = (−t²/2 + λ|t|)·1{|t|<λ} + (λ²/2)·1{|t|>=λ}`.
pub fn penalty_hard(t: f64, lambda: f64) -> f64 {
    let a = t.abs();
    if a < lambda {
        -0.5 * a * a + lambda * a
    } else {
        0.5 * lambda * lambda
    }
}

/// `P_0(t; λ) = (λ²/2)·1{t≠0}`.
pub fn penalty_l0(t: f64, lambda: f64) -> f64 {
    if t != 0.0 {
        0.5 * lambda * lambda
    } else {
        0.0
    }
}

/// `P_1(t; λ) = λ|t|`.
pub fn penalty_l1(t: f64, lambda: f64) -> f64 {
    lambda * t.abs()
}

/// `½‖Xβ − y‖² + Σ_j P(ρ|β_j|)` for unscaled `β`.
pub fn energy(spec: &PenaltySpec, problem: &Problem, beta: &DVector<f64>, rho: f64) -> Result<f64> {
    problem.check_len(beta)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "scaling must be finite and > 0",
        });
    }
    let resid = problem.x() * beta - problem.y();
    let penalty: f64 = beta.iter().map(|&b| spec.value(rho * b)).sum();
    Ok(0.5 * resid.norm_squared() + penalty)
}

/// `½‖X̃β̃ − y‖² + Σ_j P(|β̃_j|)` in the scaled frame.
pub(crate) fn energy_scaled(
    spec: &PenaltySpec,
    x: &nalgebra::DMatrix<f64>,
    y: &DVector<f64>,
    beta_scaled: &DVector<f64>,
) -> f64 {
    let resid = x * beta_scaled - y;
    0.5 * resid.norm_squared() + spec.sum(beta_scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn closed_form_examples() {
        let soft = PenaltySpec::new(ThresholdRule::soft(1.0).unwrap());
        assert_abs_diff_eq!(soft.penalty_theta(2.0).unwrap(), 2.0, epsilon = 1e-15);
        let hard = PenaltySpec::new(ThresholdRule::hard(1.0).unwrap());
        assert_abs_diff_eq!(hard.penalty_theta(2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hard.penalty_theta(0.5).unwrap(), 0.375, epsilon = 1e-15);
        let mcp = PenaltySpec::new(ThresholdRule::mcp(1.0, 2.0).unwrap());
        assert_abs_diff_eq!(mcp.penalty_theta(5.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_penalties() {
        assert_eq!(penalty_hard(1.0, 1.0), 0.5);
        assert_eq!(penalty_l0(0.0, 1.0), 0.0);
        assert_eq!(penalty_l0(-3.0, 2.0), 2.0);
        assert_eq!(penalty_l1(-2.0, 1.5), 3.0);
    }

    #[test]
    fn penalty_vanishes_at_zero() {
        for rule in ThresholdRule::catalog(1.0).unwrap() {
            assert_eq!(PenaltySpec::new(rule).penalty_theta(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn scad_integrates_to_known_plateau() {
        let rule = ThresholdRule::scad(1.0, 3.7).unwrap();
        let top = penalty_theta_closed(&rule, 10.0).unwrap();
        assert_abs_diff_eq!(top, 0.5 * 4.7, epsilon = 1e-15);
        assert_abs_diff_eq!(penalty_theta_quadrature(&rule, 10.0), top, epsilon = 1e-10);
    }

    #[test]
    fn lr_quadrature_matches_piecewise_oracle() {
        // below the jump θ_τ: τ|t| − t²/2; above: ζ|t|^r
        let rule = ThresholdRule::lr(1.0, 0.5).unwrap();
        let tau = 1.5;
        let jump = 1.0;
        for t in [0.3f64, 0.99, 1.0, 1.7, 4.0, 9.5] {
            let oracle = if t < jump { tau * t - 0.5 * t * t } else { t.sqrt() };
            assert_abs_diff_eq!(penalty_theta_quadrature(&rule, t), oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn augmentation_validity() {
        let soft = ThresholdRule::soft(1.0).unwrap();
        assert!(PenaltySpec::with_augmentation(soft, Augmentation::L0).is_err());
        let hard = ThresholdRule::hard(1.0).unwrap();
        let spec = PenaltySpec::with_augmentation(hard, Augmentation::CappedL1).unwrap();
        // capped l1 equals P_H on the range of hard thresholding
        assert_eq!(spec.q(1.5), 0.0);
        assert!(spec.q(0.7) > 0.0);
        let l0 = PenaltySpec::with_augmentation(hard, Augmentation::L0).unwrap();
        assert_abs_diff_eq!(l0.penalty_theta(0.3).unwrap(), 0.5, epsilon = 1e-15);
        let hr = ThresholdRule::hard_ridge(1.0, 0.5).unwrap();
        assert!(PenaltySpec::with_augmentation(hr, Augmentation::L0L2).is_ok());
        assert!(PenaltySpec::with_augmentation(hr, Augmentation::CappedL1).is_err());
    }

    #[test]
    fn energy_examples() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 3.0);
        let problem = Problem::new(x, y).unwrap();
        let spec = PenaltySpec::new(ThresholdRule::soft(1.0).unwrap());
        let beta = DVector::from_element(1, 2.0);
        assert_abs_diff_eq!(energy(&spec, &problem, &beta, 1.0).unwrap(), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            energy(&spec, &problem, &DVector::zeros(1), 1.0).unwrap(),
            4.5,
            epsilon = 1e-15
        );
        assert!(energy(&spec, &problem, &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn energy_scaling_identity() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 0.7, -1.1]);
        let y = DVector::from_vec(vec![0.4, -1.0, 2.0]);
        let problem = Problem::new(x.clone(), y.clone()).unwrap();
        let rho = 2.5;
        let scaled = Problem::new(x / rho, y).unwrap();
        let beta = DVector::from_vec(vec![0.8, -0.3]);
        for rule in ThresholdRule::catalog(0.6).unwrap() {
            let spec = PenaltySpec::new(rule);
            let lhs = energy(&spec, &problem, &beta, rho).unwrap();
            let rhs = energy(&spec, &scaled, &(&beta * rho), 1.0).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }
}
