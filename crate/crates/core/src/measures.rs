//! Finite-state measures: priors, empirical frequencies, energies and the
//! entropy / free-energy pair that is Legendre-Fenchel dual on the open
//! simplex.
//!
//! Everything here is in nats. A prior `p` and an empirical frequency `ν`
//! share the same representation (a strictly positive vector summing to 1)
//! but live in distinct types so that model and data do not get mixed up in
//! signatures.
//!
//! Energies `μ` are only meaningful up to an additive constant:
//! `tilt(p, μ + c·1) = tilt(p, μ)` and `F(μ + c·1 | p) = F(μ | p) + c`.
//! [`energy_of`] returns the representative with `F(μ | p) = 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Components below this value are treated as zero (boundary of the simplex).
pub const POSITIVITY_FLOOR: f64 = 1e-300;
/// Largest accepted deviation of the component sum from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Sums closer to 1 than this are stored as given; others are renormalized.
pub const EXACT_SUM_TOLERANCE: f64 = 1e-12;

pub(crate) fn validate_simplex(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    if weights.len() < 2 {
        return Err(Error::TooFewStates(weights.len()));
    }
    for (index, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if w < POSITIVITY_FLOOR {
            return Err(Error::NotPositive { index, value: w });
        }
    }
    let sum: f64 = weights.iter().sum();
    let deviation = (sum - 1.0).abs();
    if deviation > SUM_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    if deviation > EXACT_SUM_TOLERANCE {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(weights)
}

macro_rules! simplex_point {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            weights: Vec<f64>,
        }

        impl $name {
            /// Validates open-simplex membership. Sums within `1e-9` of one
            /// are renormalized.
            pub fn new(weights: Vec<f64>) -> Result<Self> {
                validate_simplex(weights).map(|weights| Self { weights })
            }

            pub fn uniform(n: usize) -> Result<Self> {
                Self::new(vec![1.0 / n as f64; n])
            }

            pub fn len(&self) -> usize {
                self.weights.len()
            }

            pub fn is_empty(&self) -> bool {
                self.weights.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.weights
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.weights
            }
        }

        impl AsRef<[f64]> for $name {
            fn as_ref(&self) -> &[f64] {
                &self.weights
            }
        }
    };
}

simplex_point!(
    /// Strictly positive model probabilities `p` on `n ≥ 2` states.
    ProbabilityVector
);

simplex_point!(
    /// Observed normalized counts `ν`, restricted to the open simplex.
    EmpiricalFrequency
);

impl ProbabilityVector {
    /// Reinterpret the model as data.
    pub fn to_frequency(&self) -> EmpiricalFrequency {
        EmpiricalFrequency { weights: self.weights.clone() }
    }
}

impl EmpiricalFrequency {
    /// Reinterpret the data as a reference measure (e.g. for `S(ν | ν*)`).
    pub fn to_prior(&self) -> ProbabilityVector {
        ProbabilityVector { weights: self.weights.clone() }
    }
}

impl From<EmpiricalFrequency> for ProbabilityVector {
    fn from(nu: EmpiricalFrequency) -> Self {
        ProbabilityVector { weights: nu.weights }
    }
}

impl From<ProbabilityVector> for EmpiricalFrequency {
    fn from(p: ProbabilityVector) -> Self {
        EmpiricalFrequency { weights: p.weights }
    }
}

/// Log-scale energies `μ ∈ Rⁿ`, defined modulo the all-ones direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVector {
    mu: Vec<f64>,
}

impl EnergyVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some(index) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { mu })
    }

    pub fn zeros(n: usize) -> Self {
        Self { mu: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { mu: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mu
    }

    /// `μ + c·1`.
    pub fn shifted(&self, c: f64) -> Self {
        Self { mu: self.mu.iter().map(|m| m + c).collect() }
    }

    /// Componentwise sum, i.e. composition of tilts.
    pub fn add(&self, other: &EnergyVector) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self { mu: self.mu.iter().zip(&other.mu).map(|(a, b)| a + b).collect() })
    }

    /// True when `self − other` is constant to within `tol` (spread of the
    /// difference).
    pub fn gauge_equivalent(&self, other: &EnergyVector, tol: f64) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let (lo, hi) = self
            .mu
            .iter()
            .zip(&other.mu)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        hi - lo <= tol
    }
}

impl AsRef<[f64]> for EnergyVector {
    fn as_ref(&self) -> &[f64] {
        &self.mu
    }
}

/// One real-valued random variable, as its values on the `n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct RealObservable {
    values: Vec<f64>,
}

impl RealObservable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `log Σ pᵢ e^{μᵢ}` with the largest exponent factored out.
pub(crate) fn log_partition_raw(mu: &[f64], p: &[f64]) -> f64 {
    let shift = mu
        .iter()
        .zip(p)
        .map(|(m, pi)| m + pi.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = mu.iter().zip(p).map(|(m, pi)| (m + pi.ln() - shift).exp()).sum();
    shift + sum.ln()
}

/// Tilted weights `pᵢ e^{μᵢ − F}`. May contain exact zeros on underflow.
pub(crate) fn tilt_raw(mu: &[f64], p: &[f64]) -> Vec<f64> {
    let f = log_partition_raw(mu, p);
    let mut nu: Vec<f64> = mu.iter().zip(p).map(|(m, pi)| (m + pi.ln() - f).exp()).collect();
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= total);
    nu
}

/// `Σ aᵢ log(aᵢ / bᵢ)` with `0 log 0 = 0`.
pub(crate) fn kl_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(ai, _)| **ai > 0.0)
        .map(|(ai, bi)| ai * (ai / bi).ln())
        .sum()
}

/// Shannon entropy `H(ν) = −Σ νᵢ log νᵢ`, in `[0, log n]`.
pub fn shannon_entropy(nu: &EmpiricalFrequency) -> f64 {
    -nu.as_slice().iter().map(|v| v * v.ln()).sum::<f64>()
}

/// Relative entropy `S(ν | p) = Σ νᵢ log(νᵢ / pᵢ)`, the i.i.d. rate function.
pub fn kl_divergence(nu: &EmpiricalFrequency, p: &ProbabilityVector) -> Result<f64> {
    check_len(p.len(), nu.len())?;
    Ok(kl_raw(nu.as_slice(), p.as_slice()))
}

/// Free energy `F(μ | p) = log Σ pᵢ e^{μᵢ}`.
pub fn free_energy(mu: &EnergyVector, p: &ProbabilityVector) -> Result<f64> {
    check_len(p.len(), mu.len())?;
    Ok(log_partition_raw(mu.as_slice(), p.as_slice()))
}

/// Exponentially tilted measure `p^μ` with components `pᵢ e^{μᵢ − F(μ|p)}`.
///
/// Fails with [`Error::NotPositive`] when the tilt is so extreme that some
/// component underflows past the simplex floor.
pub fn tilt(p: &ProbabilityVector, mu: &EnergyVector) -> Result<ProbabilityVector> {
    check_len(p.len(), mu.len())?;
    ProbabilityVector::new(tilt_raw(mu.as_slice(), p.as_slice()))
}

/// Canonical conjugate energy `μᵢ = log(νᵢ / pᵢ)`, so that `F(μ | p) = 0` and
/// `tilt(p, μ) = ν`.
pub fn energy_of(nu: &EmpiricalFrequency, p: &ProbabilityVector) -> Result<EnergyVector> {
    check_len(p.len(), nu.len())?;
    Ok(EnergyVector {
        mu: nu.as_slice().iter().zip(p.as_slice()).map(|(v, pi)| (v / pi).ln()).collect(),
    })
}

/// Hessian of the free energy, `gⁱʲ = νᵢ(δᵢⱼ − νⱼ)` at `ν = p^μ`.
///
/// Symmetric positive semidefinite; its null space is spanned by `1`.
pub fn simplex_metric(mu: &EnergyVector, p: &ProbabilityVector) -> Result<DMatrix<f64>> {
    check_len(p.len(), mu.len())?;
    let nu = tilt_raw(mu.as_slice(), p.as_slice());
    Ok(metric_from_weights(&nu))
}

pub(crate) fn metric_from_weights(nu: &[f64]) -> DMatrix<f64> {
    let n = nu.len();
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        nu[i] * (delta - nu[j])
    })
}

/// Covariance of two observables under `p^μ`; equals `yᵀ g(μ) z`.
pub fn covariance_form(
    y: &RealObservable,
    z: &RealObservable,
    mu: &EnergyVector,
    p: &ProbabilityVector,
) -> Result<f64> {
    check_len(p.len(), mu.len())?;
    check_len(p.len(), y.len())?;
    check_len(p.len(), z.len())?;
    let nu = tilt_raw(mu.as_slice(), p.as_slice());
    let mean = |v: &[f64]| nu.iter().zip(v).map(|(w, x)| w * x).sum::<f64>();
    let (ey, ez) = (mean(y.as_slice()), mean(z.as_slice()));
    Ok(nu
        .iter()
        .zip(y.as_slice().iter().zip(z.as_slice()))
        .map(|(w, (a, b))| w * (a - ey) * (b - ez))
        .sum())
}
