//! Moment coordinates: the contraction of the i.i.d. rate function onto the
//! empirical mean of a vector observable.
//!
//! For an observable matrix `X` (k×n, column `xᵢ` is the value on state `i`)
//! and a prior `p`:
//!
//! ```text
//! ψ(α | p) = log Σᵢ pᵢ exp(α·xᵢ)                 = F(Xᵀα | p)
//! φ(x | p) = sup_α { α·x − ψ(α | p) }            = inf { S(ν | p) : Xν = x }
//! ∇ψ(α)   = E^ν[X],   ∇²ψ(α) = Cov^ν(X),          ν = p^{Xᵀα}
//! ∇²φ(x)  = Cov^ν(X)⁻¹                           at the conjugate α(x)
//! ```
//!
//! The conjugate `α(x)` is found by damped Newton on the strictly convex
//! `α ↦ ψ(α) − α·x`. A moment point is certified interior by the solve
//! succeeding; there is no separate hull test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, OutsideReason, Result};
use crate::measures::{
    check_len, log_partition_raw, tilt_raw, EmpiricalFrequency,
    EnergyVector, ProbabilityVector,
};

const RANK_TOLERANCE: f64 = 1e-10;
const ONES_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Natural parameters beyond this magnitude mean the moment point is not interior.
pub const DIVERGENCE_THRESHOLD: f64 = 1e4;
/// Smallest accepted reciprocal condition number of the explained covariance.
pub const MIN_RCOND: f64 = 1e-14;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// `k × n` matrix of observable values, full row rank, `1 ∉ rowspace`, `k < n − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableMatrix {
    values: DMatrix<f64>,
}

impl ObservableMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (k, n) = values.shape();
        if n < 2 {
            return Err(Error::TooFewStates(n));
        }
        if k == 0 {
            return Err(Error::InvalidObservable("no observable rows".into()));
        }
        if k + 1 >= n {
            return Err(Error::InvalidObservable(format!(
                "need k < n - 1, got k = {k}, n = {n}"
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }

        let svd = values.transpose().svd(true, true);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOLERANCE * smax).count();
        if smax == 0.0 || rank < k {
            return Err(Error::InvalidObservable(format!("rows have rank {rank} < {k}")));
        }
        let ones = DVector::from_element(n, 1.0);
        let coeffs = svd
            .solve(&ones, RANK_TOLERANCE * smax)
            .map_err(|e| Error::InvalidObservable(e.to_string()))?;
        let residual = (&ones - values.transpose() * coeffs).norm() / ones.norm();
        if residual <= ONES_RESIDUAL_TOLERANCE {
            return Err(Error::InvalidObservable(
                "the all-ones vector lies in the row space".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Build from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        Self::new(DMatrix::from_fn(k, n, |i, j| rows[i][j]))
    }

    /// Observable dimension `k`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// State count `n`.
    pub fn states(&self) -> usize {
        self.values.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Energy `Xᵀα` induced on the states by a natural parameter.
    pub fn energy(&self, alpha: &NaturalParameter) -> Result<EnergyVector> {
        check_len(self.dim(), alpha.len())?;
        EnergyVector::new((self.values.transpose() * alpha.as_vector()).iter().copied().collect())
    }

    /// `Xν`.
    pub fn moments_of(&self, nu: &[f64]) -> Result<MomentPoint> {
        check_len(self.states(), nu.len())?;
        Ok(MomentPoint(&self.values * DVector::from_column_slice(nu)))
    }
}

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                Ok(Self(DVector::from_vec(values)))
            }

            pub fn from_vector(values: DVector<f64>) -> Result<Self> {
                if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                Ok(Self(values))
            }

            pub fn zeros(k: usize) -> Self {
                Self(DVector::zeros(k))
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn as_vector(&self) -> &DVector<f64> {
                &self.0
            }

            pub fn as_slice(&self) -> &[f64] {
                self.0.as_slice()
            }
        }
    };
}

real_vector!(
    /// A point `x ∈ Rᵏ` in moment coordinates.
    MomentPoint
);

real_vector!(
    /// Natural (conjugate) coordinates `α ∈ Rᵏ`.
    NaturalParameter
);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target infinity norm of `E[X] − x`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateSolution {
    pub alpha: NaturalParameter,
    pub iterations: usize,
    /// Final `‖E[X] − x‖∞`.
    pub residual: f64,
}

/// An observable paired with a prior; the moment-coordinate problem.
#[derive(Debug, Clone)]
pub struct Contraction {
    observable: ObservableMatrix,
    prior: ProbabilityVector,
    options: SolverOptions,
}

impl Contraction {
    pub fn new(observable: ObservableMatrix, prior: ProbabilityVector) -> Result<Self> {
        check_len(observable.states(), prior.len())?;
        Ok(Self { observable, prior, options: SolverOptions::default() })
    }

    pub fn with_options(mut self, options: SolverOptions) -> Result<Self> {
        if !(options.tol > 0.0) || options.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "solver tolerance must be positive and max_iter nonzero".into(),
            ));
        }
        self.options = options;
        Ok(self)
    }

    /// Same observable, different prior (e.g. a tilted one).
    pub fn with_prior(&self, prior: ProbabilityVector) -> Result<Self> {
        check_len(self.observable.states(), prior.len())?;
        Ok(Self { observable: self.observable.clone(), prior, options: self.options })
    }

    pub fn observable(&self) -> &ObservableMatrix {
        &self.observable
    }

    pub fn prior(&self) -> &ProbabilityVector {
        &self.prior
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    fn weights(&self, alpha: &DVector<f64>) -> Vec<f64> {
        let mu = self.observable.values.transpose() * alpha;
        tilt_raw(mu.as_slice(), self.prior.as_slice())
    }

    fn psi_raw(&self, alpha: &DVector<f64>) -> f64 {
        let mu = self.observable.values.transpose() * alpha;
        log_partition_raw(mu.as_slice(), self.prior.as_slice())
    }

    fn mean_raw(&self, nu: &[f64]) -> DVector<f64> {
        &self.observable.values * DVector::from_column_slice(nu)
    }

    /// `X g Xᵀ`, accumulated in centered form `Σ νᵢ (xᵢ − m)(xᵢ − m)ᵀ` so it
    /// stays positive semidefinite when `ν` concentrates on few states.
    fn covariance_raw(&self, nu: &[f64]) -> DMatrix<f64> {
        let x = &self.observable.values;
        let mean = self.mean_raw(nu);
        let k = x.nrows();
        let mut cov = DMatrix::zeros(k, k);
        for (i, w) in nu.iter().enumerate() {
            let d = x.column(i) - &mean;
            cov.ger(*w, &d, &d, 1.0);
        }
        cov
    }

    fn check_alpha(&self, alpha: &NaturalParameter) -> Result<()> {
        check_len(self.observable.dim(), alpha.len())
    }

    fn check_point(&self, x: &MomentPoint) -> Result<()> {
        check_len(self.observable.dim(), x.len())
    }

    /// `ψ(α | p) = F(Xᵀα | p)`.
    pub fn log_partition(&self, alpha: &NaturalParameter) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(self.psi_raw(alpha.as_vector()))
    }

    /// `∇ψ(α) = Σᵢ νᵢ xᵢ` with `ν = p^{Xᵀα}`.
    pub fn tilted_mean(&self, alpha: &NaturalParameter) -> Result<MomentPoint> {
        self.check_alpha(alpha)?;
        Ok(MomentPoint(self.mean_raw(&self.weights(alpha.as_vector()))))
    }

    /// The prior mean `Xp`, the zero of `φ`.
    pub fn prior_mean(&self) -> MomentPoint {
        MomentPoint(self.mean_raw(self.prior.as_slice()))
    }

    /// Explained covariance `∇²ψ(α) = X g(Xᵀα) Xᵀ`.
    pub fn tilted_covariance(&self, alpha: &NaturalParameter) -> Result<DMatrix<f64>> {
        self.check_alpha(alpha)?;
        Ok(self.covariance_raw(&self.weights(alpha.as_vector())))
    }

    /// Natural parameter conjugate to `x`: the maximizer of `α·x − ψ(α)`.
    pub fn solve_conjugate(&self, x: &MomentPoint) -> Result<ConjugateSolution> {
        self.check_point(x)?;
        let target = x.as_vector();
        let SolverOptions { tol, max_iter } = self.options;
        let objective = |a: &DVector<f64>| self.psi_raw(a) - a.dot(target);

        let mut alpha = DVector::zeros(self.observable.dim());
        let mut nu = self.weights(&alpha);
        let mut grad = self.mean_raw(&nu) - target;
        let mut value = objective(&alpha);

        for iteration in 0..=max_iter {
            let gnorm = grad.amax();
            if gnorm <= tol {
                // one full Newton step to polish down to rounding level
                let (alpha, gnorm) = match self.newton_step(&nu, &grad) {
                    Ok(step) => {
                        let candidate = &alpha + step;
                        let cand_norm = (self.mean_raw(&self.weights(&candidate)) - target).amax();
                        if cand_norm < gnorm { (candidate, cand_norm) } else { (alpha, gnorm) }
                    }
                    Err(_) => (alpha, gnorm),
                };
                return Ok(ConjugateSolution {
                    alpha: NaturalParameter(alpha),
                    iterations: iteration,
                    residual: gnorm,
                });
            }
            if iteration == max_iter {
                break;
            }

            let step = match self.newton_step(&nu, &grad) {
                Ok(step) => step,
                // all mass sits on a face: the iterate ran off to the boundary
                Err(_) if nu.iter().any(|w| *w == 0.0) => {
                    return Err(Error::OutsideDomain {
                        reason: OutsideReason::Diverged,
                        iterations: iteration + 1,
                    })
                }
                Err(e) => return Err(e),
            };
            let slope = grad.dot(&step);

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let candidate = &alpha + &step * t;
                let cand_value = objective(&candidate);
                if cand_value <= value + ARMIJO * t * slope {
                    accepted = Some((candidate, cand_value));
                    break;
                }
                // At convergence the objective change drops below rounding;
                // fall back to the gradient norm as the merit.
                if (cand_value - value).abs() <= 64.0 * f64::EPSILON * (1.0 + value.abs()) {
                    let cand_nu = self.weights(&candidate);
                    if (self.mean_raw(&cand_nu) - target).amax() < gnorm {
                        accepted = Some((candidate, cand_value));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((next, next_value)) = accepted else {
                return Err(Error::OutsideDomain {
                    reason: OutsideReason::IterationLimit,
                    iterations: iteration + 1,
                });
            };
            if next.amax() > DIVERGENCE_THRESHOLD || !next.iter().all(|v| v.is_finite()) {
                return Err(Error::OutsideDomain {
                    reason: OutsideReason::Diverged,
                    iterations: iteration + 1,
                });
            }
            alpha = next;
            value = next_value;
            nu = self.weights(&alpha);
            grad = self.mean_raw(&nu) - target;
        }
        Err(Error::OutsideDomain { reason: OutsideReason::IterationLimit, iterations: max_iter })
    }

    /// Newton direction `−Cov⁻¹ g`, refusing ill-conditioned covariances.
    fn newton_step(&self, nu: &[f64], grad: &DVector<f64>) -> Result<DVector<f64>> {
        let cov = self.covariance_raw(nu);
        let rcond = reciprocal_condition(&cov);
        if !(rcond >= MIN_RCOND) {
            return Err(Error::DegenerateObservable { rcond });
        }
        let chol = cov.cholesky().ok_or(Error::DegenerateObservable { rcond })?;
        Ok(-chol.solve(grad))
    }

    /// Contracted rate function `φ(x | p) = α·x − ψ(α | p)` at the conjugate.
    pub fn rate_phi(&self, x: &MomentPoint) -> Result<f64> {
        let sol = self.solve_conjugate(x)?;
        Ok(self.phi_at(x, &sol.alpha))
    }

    /// `α·x − ψ(α)` for an already-solved conjugate pair.
    pub(crate) fn phi_at(&self, x: &MomentPoint, alpha: &NaturalParameter) -> f64 {
        alpha.as_vector().dot(x.as_vector()) - self.psi_raw(alpha.as_vector())
    }

    /// The minimizer `ν* = p^{Xᵀα}` of `S(· | p)` over the fiber `{Xν = x}`.
    pub fn information_projection(&self, x: &MomentPoint) -> Result<EmpiricalFrequency> {
        let sol = self.solve_conjugate(x)?;
        self.projection_at(&sol.alpha)
    }

    pub(crate) fn projection_at(&self, alpha: &NaturalParameter) -> Result<EmpiricalFrequency> {
        EmpiricalFrequency::new(self.weights(alpha.as_vector()))
    }

    /// Metric on moment space, `∇²φ(x) = Cov^{ν*}(X)⁻¹`.
    pub fn moment_metric(&self, x: &MomentPoint) -> Result<DMatrix<f64>> {
        let sol = self.solve_conjugate(x)?;
        let cov = self.tilted_covariance(&sol.alpha)?;
        invert_spd(cov)
    }
}

/// `λ_min / λ_max` of a symmetric matrix (0 when not positive definite).
pub(crate) fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmax <= 0.0 || lmin <= 0.0 {
        0.0
    } else {
        lmin / lmax
    }
}

/// Inverse of a symmetric positive definite matrix, refusing condition
/// numbers above `1 / MIN_RCOND`.
pub(crate) fn invert_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rcond = reciprocal_condition(&m);
    if !(rcond >= MIN_RCOND) {
        return Err(Error::DegenerateObservable { rcond });
    }
    let inv = m.cholesky().ok_or(Error::DegenerateObservable { rcond })?.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}
