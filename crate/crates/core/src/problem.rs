//! Regression problems `y = Xβ* + ε` and their `ρ`-scaled form.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Immutable design and response, with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    beta_star: Option<DVector<f64>>,
    sigma: Option<f64>,
}

impl Problem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Config("design must have n >= 1 and p >= 1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if let Some(bad) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(*bad));
        }
        Ok(Problem {
            x,
            y,
            beta_star: None,
            sigma: None,
        })
    }

    pub fn with_truth(mut self, beta_star: DVector<f64>, sigma: Option<f64>) -> Result<Self> {
        if beta_star.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: beta_star.len(),
            });
        }
        if let Some(s) = sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    value: s,
                    reason: "noise scale must be finite and >= 0",
                });
            }
        }
        self.beta_star = Some(beta_star);
        self.sigma = sigma;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn beta_star(&self) -> Option<&DVector<f64>> {
        self.beta_star.as_ref()
    }
    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub(crate) fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: v.len(),
            });
        }
        Ok(())
    }
}

pub const SPECTRAL_TOL: f64 = 1e-6;

/// `‖X‖₂` by power iteration on `XᵀX` from a fixed pseudo-random start.
///
/// The Rayleigh quotient never overshoots, so the estimate is a lower bound
/// that converges to the spectral norm. An all-zero matrix yields 0.
pub fn spectral_norm(x: &DMatrix<f64>, tol: f64) -> f64 {
    let p = x.ncols();
    if p == 0 || x.nrows() == 0 || x.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let mut v = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
    v /= v.norm();

    let mut estimate = 0.0f64;
    // the change criterion is tightened well below `tol` because it only
    // measures progress, not distance to the top eigenvalue
    let stop = (tol * 1e-3).max(f64::EPSILON);
    for _ in 0..100_000 {
        let xv = x * &v;
        let w = x.tr_mul(&xv);
        let mu = xv.norm_squared();
        let w_norm = w.norm();
        if w_norm == 0.0 {
            break;
        }
        v = w / w_norm;
        let next = mu.sqrt();
        if (next - estimate).abs() <= stop * next {
            estimate = next;
            break;
        }
        estimate = next;
    }
    // one more Rayleigh quotient on the final direction
    (x * &v).norm().max(estimate)
}

/// Problem with design `X̃ = X/ρ`, so `‖X̃‖₂ <= 1` whenever `ρ >= ‖X‖₂`.
///
/// Coefficients in this frame are `β̃ = ρβ`.
#[derive(Debug, Clone)]
pub struct ScaledProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    rho: f64,
    norm: f64,
    beta_star: Option<DVector<f64>>,
}

/// Scales `problem` by `rho`, refusing `rho < ‖X‖₂`.
pub fn scale_problem(problem: &Problem, rho: f64) -> Result<ScaledProblem> {
    let norm = spectral_norm(problem.x(), SPECTRAL_TOL);
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            reason: "scaling must be finite and > 0",
        });
    }
    if rho < norm {
        return Err(Error::RhoTooSmall { rho, norm });
    }
    Ok(ScaledProblem::build(problem, rho, norm))
}

impl ScaledProblem {
    fn build(problem: &Problem, rho: f64, norm: f64) -> Self {
        ScaledProblem {
            x: problem.x() / rho,
            y: problem.y().clone(),
            rho,
            norm,
            beta_star: problem.beta_star().map(|b| b * rho),
        }
    }

    /// Scales without the `rho >= ‖X‖₂` guard. The iteration on the result
    /// carries no descent guarantee; this exists for probing what happens
    /// outside the admissible range.
    pub fn new_unchecked(problem: &Problem, rho: f64) -> Self {
        let norm = spectral_norm(problem.x(), SPECTRAL_TOL);
        Self::build(problem, rho, norm)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// `‖X‖₂` of the unscaled design.
    pub fn design_norm(&self) -> f64 {
        self.norm
    }
    /// `ρβ*` when the ground truth is known.
    pub fn beta_star(&self) -> Option<&DVector<f64>> {
        self.beta_star.as_ref()
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn scale(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta * self.rho
    }

    pub fn unscale(&self, beta_scaled: &DVector<f64>) -> DVector<f64> {
        beta_scaled / self.rho
    }

    /// The scaled design as a standalone problem (truth carried over in
    /// scaled coordinates).
    pub fn as_problem(&self) -> Problem {
        Problem {
            x: self.x.clone(),
            y: self.y.clone(),
            beta_star: self.beta_star.clone(),
            sigma: None,
        }
    }

    /// `X̃ᵀ(y − X̃β̃)`.
    pub fn gradient_step(&self, beta_scaled: &DVector<f64>) -> DVector<f64> {
        let resid = &self.y - &self.x * beta_scaled;
        self.x.tr_mul(&resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_and_diagonal() {
        assert_relative_eq!(spectral_norm(&DMatrix::identity(3, 3), 1e-6), 1.0, max_relative = 1e-6);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_relative_eq!(spectral_norm(&d, 1e-6), 3.0, max_relative = 1e-6);
        assert_eq!(spectral_norm(&DMatrix::zeros(4, 2), 1e-6), 0.0);
    }

    #[test]
    fn matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(20, 50, |_, _| StandardNormal.sample(&mut rng));
        let oracle = x.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(spectral_norm(&x, 1e-6), oracle, max_relative = 1e-6);
    }

    #[test]
    fn scaling_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(15, 8, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(15, |_, _| StandardNormal.sample(&mut rng));
        let problem = Problem::new(x.clone(), y).unwrap();
        let norm = spectral_norm(&x, 1e-6);

        let s1 = scale_problem(&problem, norm).unwrap();
        assert_relative_eq!(spectral_norm(s1.x(), 1e-9), 1.0, max_relative = 1e-6);
        let s2 = scale_problem(&problem, 2.0 * norm).unwrap();
        assert_relative_eq!(spectral_norm(s2.x(), 1e-9), 0.5, max_relative = 1e-6);

        let beta = DVector::from_vec(vec![1.5, -2.0, 0.0, 3.25, 1e-7, -4.0, 0.1, 9.0]);
        let back = s2.unscale(&s2.scale(&beta));
        for (a, b) in back.iter().zip(beta.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn refuses_small_rho() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let problem = Problem::new(x, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(matches!(scale_problem(&problem, 1.0), Err(Error::RhoTooSmall { .. })));
        assert!(scale_problem(&problem, 2.0).is_ok());
    }

    #[test]
    fn problem_validation() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(Problem::new(x.clone(), DVector::zeros(2)).is_err());
        let p = Problem::new(x, DVector::zeros(3)).unwrap();
        assert!(p.clone().with_truth(DVector::zeros(3), None).is_err());
        assert!(p.with_truth(DVector::zeros(2), Some(-1.0)).is_err());
        let mut bad = DMatrix::from_element(2, 2, 1.0);
        bad[(0, 1)] = f64::NAN;
        assert!(Problem::new(bad, DVector::zeros(2)).is_err());
    }
}
