//! Thresholding rules, their generalized inverses and contraction constants.
//!
//! A thresholding rule `Θ(t; λ)` is odd, nondecreasing, unbounded and
//! shrinking (`0 <= Θ(t) <= t` for `t >= 0`). Every rule here is evaluated on
//! `|t|` and the sign is reattached afterwards, so oddness holds bit-exactly.
//!
//! At a discontinuity the rule takes the lower value: the zero region is
//! closed (`Θ(±λ) = 0` for hard and hard-ridge). Callers are expected to stay
//! away from discontinuity points; the solver flags iterations that come
//! within `1e-12` of one.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Identity of a thresholding rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    Soft,
    Hard,
    Ridge,
    ElasticNet,
    Berhu,
    HardRidge,
    Scad,
    Mcp,
    Lr,
}

impl RuleKind {
    pub const ALL: [RuleKind; 9] = [
        RuleKind::Soft,
        RuleKind::Hard,
        RuleKind::Ridge,
        RuleKind::ElasticNet,
        RuleKind::Berhu,
        RuleKind::HardRidge,
        RuleKind::Scad,
        RuleKind::Mcp,
        RuleKind::Lr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Soft => "soft",
            RuleKind::Hard => "hard",
            RuleKind::Ridge => "ridge",
            RuleKind::ElasticNet => "elastic-net",
            RuleKind::Berhu => "berhu",
            RuleKind::HardRidge => "hard-ridge",
            RuleKind::Scad => "scad",
            RuleKind::Mcp => "mcp",
            RuleKind::Lr => "lr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        RuleKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A parameterized thresholding function with validated parameters.
///
/// Parameters that a kind does not use are stored as zero. For every kind
/// except `ridge` and `lr` the `lambda` parameter is the threshold
/// `τ(λ) = Θ⁻¹(0; λ)`; use [`ThresholdRule::effective_threshold`] for a
/// kind-independent value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRule {
    kind: RuleKind,
    lambda: f64,
    eta: f64,
    a: f64,
    gamma: f64,
    r: f64,
    zeta: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "must be finite and >= 0",
        });
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "must be finite and >= 0",
        });
    }
    Ok(())
}

impl ThresholdRule {
    fn blank(kind: RuleKind) -> Self {
        ThresholdRule {
            kind,
            lambda: 0.0,
            eta: 0.0,
            a: 0.0,
            gamma: 0.0,
            r: 0.0,
            zeta: 0.0,
        }
    }

    pub fn soft(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ThresholdRule {
            lambda,
            ..Self::blank(RuleKind::Soft)
        })
    }

    pub fn hard(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ThresholdRule {
            lambda,
            ..Self::blank(RuleKind::Hard)
        })
    }

    pub fn ridge(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(ThresholdRule {
            eta,
            ..Self::blank(RuleKind::Ridge)
        })
    }

    pub fn elastic_net(lambda: f64, eta: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_eta(eta)?;
        Ok(ThresholdRule {
            lambda,
            eta,
            ..Self::blank(RuleKind::ElasticNet)
        })
    }

    pub fn berhu(lambda: f64, eta: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_eta(eta)?;
        Ok(ThresholdRule {
            lambda,
            eta,
            ..Self::blank(RuleKind::Berhu)
        })
    }

    pub fn hard_ridge(lambda: f64, eta: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_eta(eta)?;
        Ok(ThresholdRule {
            lambda,
            eta,
            ..Self::blank(RuleKind::HardRidge)
        })
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(a.is_finite() && a > 2.0) {
            return Err(Error::InvalidParameter {
                name: "a",
                value: a,
                reason: "SCAD knee must satisfy a > 2",
            });
        }
        Ok(ThresholdRule {
            lambda,
            a,
            ..Self::blank(RuleKind::Scad)
        })
    }

    /// MCP with knee `gamma > 1`; `gamma = 1` collapses the middle branch.
    pub fn mcp(lambda: f64, gamma: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "MCP knee must satisfy gamma > 1",
            });
        }
        Ok(ThresholdRule {
            lambda,
            gamma,
            ..Self::blank(RuleKind::Mcp)
        })
    }

    /// Thresholding induced by the `ζ|t|^r` penalty, `0 < r < 1`.
    pub fn lr(zeta: f64, r: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "zeta",
                value: zeta,
                reason: "must be finite and >= 0",
            });
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidParameter {
                name: "r",
                value: r,
                reason: "exponent must satisfy 0 < r < 1",
            });
        }
        Ok(ThresholdRule {
            zeta,
            r,
            ..Self::blank(RuleKind::Lr)
        })
    }

    /// One rule of every kind at threshold `lambda`, with the catalog's
    /// default shape parameters (η = 0.5, a = 3.7, γ = 2, r = 0.5).
    pub fn catalog(lambda: f64) -> Result<Vec<ThresholdRule>> {
        RuleKind::ALL.iter().map(|k| Self::with_defaults(*k, lambda)).collect()
    }

    /// The catalog rule of `kind` at threshold `lambda`.
    pub fn with_defaults(kind: RuleKind, lambda: f64) -> Result<ThresholdRule> {
        let eta = 0.5;
        match kind {
            RuleKind::Soft => ThresholdRule::soft(lambda),
            RuleKind::Hard => ThresholdRule::hard(lambda),
            RuleKind::Ridge => ThresholdRule::ridge(eta),
            RuleKind::ElasticNet => ThresholdRule::elastic_net(lambda, eta),
            RuleKind::Berhu => ThresholdRule::berhu(lambda, eta),
            RuleKind::HardRidge => ThresholdRule::hard_ridge(lambda, eta),
            RuleKind::Scad => ThresholdRule::scad(lambda, 3.7),
            RuleKind::Mcp => ThresholdRule::mcp(lambda, 2.0),
            RuleKind::Lr => ThresholdRule::lr(1.0, 0.5)?.with_threshold(lambda),
        }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Stored contraction constant `𝓛_Θ = 1 − essinf dΘ⁻¹/du`.
    pub fn contraction(&self) -> f64 {
        match self.kind {
            RuleKind::Soft | RuleKind::Berhu => 0.0,
            RuleKind::Hard | RuleKind::HardRidge | RuleKind::Lr => 1.0,
            RuleKind::Ridge | RuleKind::ElasticNet => -self.eta,
            RuleKind::Scad => 1.0 / (self.a - 1.0),
            RuleKind::Mcp => 1.0 / self.gamma,
        }
    }

    /// `τ = Θ⁻¹(0)`: the largest magnitude mapped to zero.
    pub fn effective_threshold(&self) -> f64 {
        match self.kind {
            RuleKind::Ridge => 0.0,
            RuleKind::Lr => lr_threshold(self.zeta, self.r),
            _ => self.lambda,
        }
    }

    /// Same rule with its threshold moved to `tau`.
    ///
    /// For `lr` this solves for the `ζ` whose zero region ends at `tau`; for
    /// `ridge`, which never thresholds, the rule is returned unchanged.
    pub fn with_threshold(&self, tau: f64) -> Result<Self> {
        check_lambda(tau)?;
        let mut out = *self;
        match self.kind {
            RuleKind::Ridge => {}
            RuleKind::Lr => {
                let unit = lr_threshold(1.0, self.r);
                out.zeta = (tau / unit).powf(2.0 - self.r);
            }
            _ => out.lambda = tau,
        }
        Ok(out)
    }

    /// Rule `Θ(·; λ_α)` for the stepsize-`α` iteration, where
    /// `α·P(t; λ) = P(t; λ_α)` for the penalty family of the rule.
    ///
    /// For hard and hard-ridge the identity holds for the `ℓ0` and `ℓ0+ℓ2`
    /// representatives of the penalty. SCAD has no such reparameterization
    /// and is rejected for `α < 1`.
    pub fn with_stepsize(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
                reason: "stepsize must lie in (0, 1]",
            });
        }
        if alpha == 1.0 {
            return Ok(*self);
        }
        let mut out = *self;
        match self.kind {
            RuleKind::Soft => out.lambda = alpha * self.lambda,
            RuleKind::Hard => out.lambda = alpha.sqrt() * self.lambda,
            RuleKind::Ridge => out.eta = alpha * self.eta,
            RuleKind::ElasticNet | RuleKind::Berhu => {
                out.lambda = alpha * self.lambda;
                out.eta = alpha * self.eta;
            }
            RuleKind::HardRidge => {
                out.eta = alpha * self.eta;
                out.lambda =
                    self.lambda * (alpha * (1.0 + alpha * self.eta) / (1.0 + self.eta)).sqrt();
            }
            RuleKind::Mcp => {
                out.lambda = alpha * self.lambda;
                out.gamma = self.gamma / alpha;
            }
            RuleKind::Lr => out.zeta = alpha * self.zeta,
            RuleKind::Scad => return Err(Error::UnsupportedStepsize(self.to_string())),
        }
        Ok(out)
    }

    /// Checked evaluation of `Θ(t)`.
    pub fn apply(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::NonFinite(t));
        }
        Ok(self.threshold(t))
    }

    /// Unchecked evaluation of `Θ(t)`; non-finite input propagates.
    #[inline]
    pub fn threshold(&self, t: f64) -> f64 {
        let m = self.magnitude(t.abs());
        if t < 0.0 {
            -m
        } else {
            m
        }
    }

    fn magnitude(&self, x: f64) -> f64 {
        let lam = self.lambda;
        match self.kind {
            RuleKind::Soft => {
                if x > lam {
                    x - lam
                } else {
                    0.0
                }
            }
            RuleKind::Hard => {
                if x > lam {
                    x
                } else {
                    0.0
                }
            }
            RuleKind::Ridge => x / (1.0 + self.eta),
            RuleKind::ElasticNet => {
                if x > lam {
                    (x - lam) / (1.0 + self.eta)
                } else {
                    0.0
                }
            }
            RuleKind::Berhu => {
                if x <= lam {
                    0.0
                } else if self.eta == 0.0 || x <= lam + lam / self.eta {
                    x - lam
                } else {
                    x / (1.0 + self.eta)
                }
            }
            RuleKind::HardRidge => {
                if x > lam {
                    x / (1.0 + self.eta)
                } else {
                    0.0
                }
            }
            RuleKind::Scad => {
                let a = self.a;
                if x <= lam {
                    0.0
                } else if x <= 2.0 * lam {
                    x - lam
                } else if x <= a * lam {
                    (((a - 1.0) * x - a * lam) / (a - 2.0)).min(x)
                } else {
                    x
                }
            }
            RuleKind::Mcp => {
                let g = self.gamma;
                if x <= lam {
                    0.0
                } else if x < g * lam {
                    ((x - lam) / (1.0 - 1.0 / g)).min(x)
                } else {
                    x
                }
            }
            RuleKind::Lr => {
                if self.zeta == 0.0 {
                    return x;
                }
                if x <= lr_threshold(self.zeta, self.r) {
                    0.0
                } else {
                    lr_root(self.zeta, self.r, x)
                }
            }
        }
    }

    /// Componentwise `Θ`, optionally at an overriding threshold.
    pub fn apply_vec(&self, v: &[f64], lambda_override: Option<f64>) -> Result<Vec<f64>> {
        let rule = match lambda_override {
            Some(tau) => self.with_threshold(tau)?,
            None => *self,
        };
        v.iter().map(|&t| rule.apply(t)).collect()
    }

    /// Generalized inverse `Θ⁻¹(u) = sup{t : Θ(t) <= u}` for `u >= 0`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::NonFinite(u));
        }
        if u < 0.0 {
            return Err(Error::Negative(u));
        }
        Ok(self.inverse_unchecked(u))
    }

    pub(crate) fn inverse_unchecked(&self, u: f64) -> f64 {
        let lam = self.lambda;
        let eta = self.eta;
        match self.kind {
            RuleKind::Soft => u + lam,
            RuleKind::Hard => u.max(lam),
            RuleKind::Ridge => (1.0 + eta) * u,
            RuleKind::ElasticNet => (1.0 + eta) * u + lam,
            RuleKind::Berhu => {
                if eta == 0.0 || u <= lam / eta {
                    u + lam
                } else {
                    (1.0 + eta) * u
                }
            }
            RuleKind::HardRidge => {
                if u < lam / (1.0 + eta) {
                    lam
                } else {
                    (1.0 + eta) * u
                }
            }
            RuleKind::Scad => {
                let a = self.a;
                if u <= lam {
                    u + lam
                } else if u <= a * lam {
                    ((a - 2.0) * u + a * lam) / (a - 1.0)
                } else {
                    u
                }
            }
            RuleKind::Mcp => {
                let g = self.gamma;
                if u < g * lam {
                    lam + u * (1.0 - 1.0 / g)
                } else {
                    u
                }
            }
            RuleKind::Lr => {
                if self.zeta == 0.0 {
                    return u;
                }
                let jump = lr_jump(self.zeta, self.r);
                if u < jump {
                    lr_threshold(self.zeta, self.r)
                } else {
                    u + self.zeta * self.r * u.powf(self.r - 1.0)
                }
            }
        }
    }

    /// Positive points where `Θ` jumps.
    pub fn discontinuities(&self) -> Vec<f64> {
        match self.kind {
            RuleKind::Hard | RuleKind::HardRidge if self.lambda > 0.0 => vec![self.lambda],
            RuleKind::Lr if self.zeta > 0.0 => vec![lr_threshold(self.zeta, self.r)],
            _ => Vec::new(),
        }
    }

    /// Positive points where `Θ⁻¹` (equivalently `P_Θ'`) changes form.
    pub fn inverse_breakpoints(&self) -> Vec<f64> {
        let lam = self.lambda;
        let eta = self.eta;
        let pts = match self.kind {
            RuleKind::Soft | RuleKind::Ridge | RuleKind::ElasticNet => Vec::new(),
            RuleKind::Hard => vec![lam],
            RuleKind::Berhu if eta > 0.0 => vec![lam / eta],
            RuleKind::Berhu => Vec::new(),
            RuleKind::HardRidge => vec![lam / (1.0 + eta)],
            RuleKind::Scad => vec![lam, self.a * lam],
            RuleKind::Mcp => vec![self.gamma * lam],
            RuleKind::Lr if self.zeta > 0.0 => vec![lr_jump(self.zeta, self.r)],
            RuleKind::Lr => Vec::new(),
        };
        pts.into_iter().filter(|&b| b > 0.0).collect()
    }

    /// Natural magnitude scale: the threshold, or 1 when the rule has none.
    pub fn scale(&self) -> f64 {
        let tau = self.effective_threshold();
        if tau > 0.0 {
            tau
        } else {
            1.0
        }
    }
}

/// Zero-region boundary of the `ℓ_r` rule:
/// `ζ^{1/(2−r)} (2−r) (2−2r)^{(r−1)/(2−r)}`.
pub(crate) fn lr_threshold(zeta: f64, r: f64) -> f64 {
    let e = 1.0 / (2.0 - r);
    zeta.powf(e) * (2.0 - r) * (2.0 - 2.0 * r).powf((r - 1.0) * e)
}

/// Smallest nonzero output magnitude of the `ℓ_r` rule, `(2ζ(1−r))^{1/(2−r)}`.
pub(crate) fn lr_jump(zeta: f64, r: f64) -> f64 {
    (2.0 * zeta * (1.0 - r)).powf(1.0 / (2.0 - r))
}

/// Root of `θ + ζ r θ^{r−1} = x` on `[(ζ r (1−r))^{1/(2−r)}, x]`, Newton
/// steps safeguarded by bisection.
fn lr_root(zeta: f64, r: f64, x: f64) -> f64 {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 200;
    let g = |th: f64| th + zeta * r * th.powf(r - 1.0) - x;
    let dg = |th: f64| 1.0 - zeta * r * (1.0 - r) * th.powf(r - 2.0);

    let mut lo = (zeta * r * (1.0 - r)).powf(1.0 / (2.0 - r));
    let mut hi = x;
    assert!(
        g(lo) <= 0.0 && g(hi) >= 0.0,
        "l_r root bracket [{lo}, {hi}] does not straddle a root for x = {x}"
    );
    let mut th = hi;
    for _ in 0..MAX_ITER {
        let val = g(th);
        if val > 0.0 {
            hi = th;
        } else {
            lo = th;
        }
        if hi - lo <= TOL {
            break;
        }
        let d = dg(th);
        let newton = th - val / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - th).abs() <= TOL {
            th = next;
            break;
        }
        th = next;
    }
    th.clamp(lo, hi).min(x)
}

/// `1 − min` finite-difference slope of `Θ⁻¹` over `grid`.
///
/// Slopes across a kink are convex combinations of the one-sided slopes, so
/// the minimum matches the essential infimum for piecewise-linear inverses.
pub fn estimate_contraction(rule: &ThresholdRule, grid: &[f64]) -> Result<f64> {
    if grid.len() < 100 {
        return Err(Error::DegenerateGrid(format!(
            "need at least 100 points, got {}",
            grid.len()
        )));
    }
    if grid[0] <= 0.0 || !grid.iter().all(|u| u.is_finite()) {
        return Err(Error::DegenerateGrid(
            "grid must be finite and strictly positive".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateGrid(
            "grid must be strictly increasing".into(),
        ));
    }
    let min_slope = grid
        .windows(2)
        .map(|w| {
            let du = w[1] - w[0];
            (rule.inverse_unchecked(w[1]) - rule.inverse_unchecked(w[0])) / du
        })
        .fold(f64::INFINITY, f64::min);
    Ok(1.0 - min_slope)
}

/// Uniform grid of `points` values on `(0, 10·scale]`.
pub fn contraction_grid(rule: &ThresholdRule, points: usize) -> Vec<f64> {
    let top = 10.0 * rule.scale();
    (1..=points)
        .map(|k| top * k as f64 / points as f64)
        .collect()
}

/// Outcome of one axiom over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomCheck {
    pub passed: bool,
    /// Largest violation magnitude; zero when the axiom holds everywhere.
    pub worst_violation: f64,
}

impl AxiomCheck {
    fn new(worst_violation: f64, tol: f64) -> Self {
        AxiomCheck {
            passed: worst_violation <= tol,
            worst_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCheck {
    pub stored: f64,
    pub estimated: f64,
    pub agrees: bool,
}

/// Axiom checks for a rule over `t × λ` grids.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    /// (i) `|Θ(t) + Θ(−t)| <= 1e-12`.
    pub oddness: AxiomCheck,
    /// (ii) nondecreasing along the sorted grid, exact comparison.
    pub monotonicity: AxiomCheck,
    /// (iii) proxy: `Θ(λ + 1e6) >= 1e5`.
    pub unboundedness: AxiomCheck,
    /// (iv) `0 <= Θ(t) <= t` for `t >= 0`, exact comparison.
    pub shrinkage: AxiomCheck,
    /// `Θ(t) <= Θ_H(t; τ)` for `t >= 0`.
    pub hard_dominance: AxiomCheck,
    /// Present when the report was built from a catalog rule.
    pub contraction: Option<ContractionCheck>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.oddness.passed
            && self.monotonicity.passed
            && self.unboundedness.passed
            && self.shrinkage.passed
            && self.hard_dominance.passed
    }
}

pub const ODDNESS_TOL: f64 = 1e-12;
pub const CONTRACTION_TOL: f64 = 1e-3;

/// Axiom checks for an arbitrary `(t, λ) -> Θ(t; λ)`, treating `λ` as the
/// threshold for the hard-dominance check.
pub fn verify_axioms_with<F>(theta: F, t_grid: &[f64], lambda_grid: &[f64]) -> AxiomReport
where
    F: Fn(f64, f64) -> f64,
{
    let mut sorted = t_grid.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut odd = 0.0f64;
    let mut mono = 0.0f64;
    let mut unbounded = 0.0f64;
    let mut shrink = 0.0f64;
    let mut dominance = 0.0f64;
    for &lam in lambda_grid {
        let values: Vec<f64> = sorted.iter().map(|&t| theta(t, lam)).collect();
        for (&t, &v) in sorted.iter().zip(&values) {
            odd = odd.max((v + theta(-t, lam)).abs());
            if t >= 0.0 {
                shrink = shrink.max(-v).max(v - t);
                let hard = if t > lam { t } else { 0.0 };
                dominance = dominance.max(v - hard);
            }
        }
        for w in values.windows(2) {
            mono = mono.max(w[0] - w[1]);
        }
        unbounded = unbounded.max(1e5 - theta(lam + 1e6, lam));
    }
    AxiomReport {
        oddness: AxiomCheck::new(odd, ODDNESS_TOL),
        monotonicity: AxiomCheck::new(mono, 0.0),
        unboundedness: AxiomCheck::new(unbounded, 0.0),
        shrinkage: AxiomCheck::new(shrink, 0.0),
        hard_dominance: AxiomCheck::new(dominance, 0.0),
        contraction: None,
    }
}

/// Axiom checks for `rule` re-thresholded at every `λ` of `lambda_grid`,
/// plus a contraction-constant cross-check at each `λ`.
pub fn verify_axioms(rule: &ThresholdRule, t_grid: &[f64], lambda_grid: &[f64]) -> AxiomReport {
    let rules: Vec<ThresholdRule> = lambda_grid
        .iter()
        .filter_map(|&lam| rule.with_threshold(lam).ok())
        .collect();
    let mut report = verify_axioms_with(
        |t, lam| match rule.with_threshold(lam) {
            Ok(r) => r.threshold(t),
            Err(_) => f64::NAN,
        },
        t_grid,
        lambda_grid,
    );
    // ridge has no threshold, so dominance is checked against τ = 0
    if rule.kind() == RuleKind::Ridge {
        report.hard_dominance = verify_axioms_with(
            |t, _| rule.threshold(t),
            t_grid,
            &[0.0],
        )
        .hard_dominance;
    }

    let mut worst: Option<ContractionCheck> = None;
    for r in rules.iter().chain(std::iter::once(rule)) {
        let grid = contraction_grid(r, 2000);
        if let Ok(est) = estimate_contraction(r, &grid) {
            let check = ContractionCheck {
                stored: r.contraction(),
                estimated: est,
                agrees: (est - r.contraction()).abs() <= CONTRACTION_TOL,
            };
            let replace = match worst {
                None => true,
                Some(w) => (check.estimated - check.stored).abs() > (w.estimated - w.stored).abs(),
            };
            if replace {
                worst = Some(check);
            }
        }
    }
    report.contraction = worst;
    report
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.kind.name();
        match self.kind {
            RuleKind::Soft | RuleKind::Hard => write!(f, "{name}(lambda={})", self.lambda),
            RuleKind::Ridge => write!(f, "{name}(eta={})", self.eta),
            RuleKind::ElasticNet | RuleKind::Berhu | RuleKind::HardRidge => {
                write!(f, "{name}(lambda={},eta={})", self.lambda, self.eta)
            }
            RuleKind::Scad => write!(f, "{name}(lambda={},a={})", self.lambda, self.a),
            RuleKind::Mcp => write!(f, "{name}(lambda={},gamma={})", self.lambda, self.gamma),
            RuleKind::Lr => write!(f, "{name}(zeta={},r={})", self.zeta, self.r),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// Parses `name(key=value,...)`, e.g. `scad(lambda=0.5,a=3.7)`.
    fn from_str(s: &str) -> Result<Self> {
        let fail = |reason: String| Error::RuleParse {
            input: s.to_string(),
            reason,
        };
        let trimmed = s.trim();
        let (name, body) = match trimmed.find('(') {
            Some(open) => {
                if !trimmed.ends_with(')') {
                    return Err(fail("missing closing `)`".into()));
                }
                (&trimmed[..open], &trimmed[open + 1..trimmed.len() - 1])
            }
            None => (trimmed, ""),
        };
        let kind = RuleKind::from_name(name.trim())
            .ok_or_else(|| fail(format!("unknown rule name `{}`", name.trim())))?;

        let allowed: &[&str] = match kind {
            RuleKind::Soft | RuleKind::Hard => &["lambda"],
            RuleKind::Ridge => &["eta"],
            RuleKind::ElasticNet | RuleKind::Berhu | RuleKind::HardRidge => &["lambda", "eta"],
            RuleKind::Scad => &["lambda", "a"],
            RuleKind::Mcp => &["lambda", "gamma"],
            RuleKind::Lr => &["zeta", "r"],
        };

        let mut values: Vec<(&str, f64)> = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, raw) = part
                .split_once('=')
                .ok_or_else(|| fail(format!("expected key=value, got `{part}`")))?;
            let key = key.trim();
            let Some(&known) = allowed.iter().find(|k| **k == key) else {
                return Err(fail(format!("unknown key `{key}` for rule `{kind}`")));
            };
            if values.iter().any(|(k, _)| *k == known) {
                return Err(fail(format!("duplicate key `{key}`")));
            }
            let value: f64 = raw
                .trim()
                .parse()
                .map_err(|_| fail(format!("key `{key}` has non-numeric value `{}`", raw.trim())))?;
            values.push((known, value));
        }
        let get = |key: &str| -> Result<f64> {
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| fail(format!("missing key `{key}`")))
        };
        let invalid = |e: Error| match e {
            Error::InvalidParameter { name, reason, .. } => {
                fail(format!("key `{name}`: {reason}"))
            }
            other => other,
        };
        let rule = match kind {
            RuleKind::Soft => ThresholdRule::soft(get("lambda")?),
            RuleKind::Hard => ThresholdRule::hard(get("lambda")?),
            RuleKind::Ridge => ThresholdRule::ridge(get("eta")?),
            RuleKind::ElasticNet => ThresholdRule::elastic_net(get("lambda")?, get("eta")?),
            RuleKind::Berhu => ThresholdRule::berhu(get("lambda")?, get("eta")?),
            RuleKind::HardRidge => ThresholdRule::hard_ridge(get("lambda")?, get("eta")?),
            RuleKind::Scad => ThresholdRule::scad(get("lambda")?, get("a")?),
            RuleKind::Mcp => ThresholdRule::mcp(get("lambda")?, get("gamma")?),
            RuleKind::Lr => ThresholdRule::lr(get("zeta")?, get("r")?),
        };
        rule.map_err(invalid)
    }
}
