//! Entropy production, Bregman divergences and the Pythagorean split of the
//! relative entropy along a moment fiber.

use crate::contraction::{Contraction, MomentPoint, NaturalParameter};
use crate::error::{Error, Result};
use crate::measures::{check_len, kl_divergence, kl_raw, EmpiricalFrequency, ProbabilityVector};

/// Largest `‖Xν − x‖∞` accepted as "ν lies on the fiber of x".
pub const FIBER_TOLERANCE: f64 = 1e-9;

/// `S(ν|p) = S(ν|ν*) + S(ν*|p)` for ν on the fiber of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PythagoreanSplit {
    /// `S(ν | p)`
    pub total: f64,
    /// `S(ν* | p) = φ(x | p)`
    pub projection_term: f64,
    /// `S(ν | ν*)`
    pub residual_term: f64,
    pub projector: EmpiricalFrequency,
}

impl PythagoreanSplit {
    /// `total − projection_term − residual_term`
    pub fn defect(&self) -> f64 {
        self.total - self.projection_term - self.residual_term
    }
}

/// Joint states `(y, z)` stored row-major: index `y·n2 + z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductStateLayout {
    n1: usize,
    n2: usize,
}

impl ProductStateLayout {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::TooFewStates(n1.min(n2)));
        }
        Ok(Self { n1, n2 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn joint_size(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn index(&self, y: usize, z: usize) -> usize {
        y * self.n2 + z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSplit {
    /// `S(ν_Y | p_Y)`
    pub marginal_term: f64,
    /// `Σ_y ν_y S(ν_{Z|y} | p_{Z|y})`
    pub weighted_conditional_term: f64,
}

/// Fenchel-Young gap `σ(x, α) = φ(x) + ψ(α) − α·x ≥ 0`, zero exactly when
/// `α` is conjugate to `x`.
pub fn entropy_production(c: &Contraction, x: &MomentPoint, alpha: &NaturalParameter) -> Result<f64> {
    let phi = c.rate_phi(x)?;
    let psi = c.log_partition(alpha)?;
    Ok(phi + psi - alpha.as_vector().dot(x.as_vector()))
}

/// `D_φ(x, y) = φ(x) − φ(y) − ∇φ(y)·(x − y)`, with `∇φ(y)` the conjugate of `y`.
pub fn bregman_phi(c: &Contraction, x: &MomentPoint, y: &MomentPoint) -> Result<f64> {
    let sol_x = c.solve_conjugate(x)?;
    let sol_y = c.solve_conjugate(y)?;
    let phi_x = c.phi_at(x, &sol_x.alpha);
    let phi_y = c.phi_at(y, &sol_y.alpha);
    let dx = x.as_vector() - y.as_vector();
    Ok(phi_x - phi_y - sol_y.alpha.as_vector().dot(&dx))
}

/// `D_ψ(β, α) = ψ(β) − ψ(α) − ∇ψ(α)·(β − α)`.
pub fn bregman_psi(c: &Contraction, beta: &NaturalParameter, alpha: &NaturalParameter) -> Result<f64> {
    let grad = c.tilted_mean(alpha)?;
    let d = beta.as_vector() - alpha.as_vector();
    Ok(c.log_partition(beta)? - c.log_partition(alpha)? - grad.as_vector().dot(&d))
}

/// Bregman divergence of `S(· | p)`:
/// `S(ν₁|p) − S(ν₂|p) − ∇S(ν₂|p)·(ν₁ − ν₂)`. The prior drops out and the
/// result is `S(ν₁ | ν₂)`.
pub fn bregman_s(nu1: &EmpiricalFrequency, nu2: &EmpiricalFrequency, p: &ProbabilityVector) -> Result<f64> {
    check_len(p.len(), nu1.len())?;
    check_len(p.len(), nu2.len())?;
    let (a, b, q) = (nu1.as_slice(), nu2.as_slice(), p.as_slice());
    // ∂S/∂νᵢ = log(νᵢ/pᵢ) + 1; the constant cancels against Σ(ν₁ − ν₂) = 0
    let slope: f64 = (0..a.len()).map(|i| ((b[i] / q[i]).ln() + 1.0) * (a[i] - b[i])).sum();
    Ok(kl_raw(a, q) - kl_raw(b, q) - slope)
}

fn fiber_residual(c: &Contraction, nu: &EmpiricalFrequency, x: &MomentPoint) -> Result<f64> {
    check_len(c.observable().dim(), x.len())?;
    let m = c.observable().moments_of(nu.as_slice())?;
    Ok((m.as_vector() - x.as_vector()).amax())
}

fn require_fiber(c: &Contraction, nu: &EmpiricalFrequency, x: &MomentPoint) -> Result<()> {
    let residual = fiber_residual(c, nu, x)?;
    if residual > FIBER_TOLERANCE {
        Err(Error::FiberViolation { residual })
    } else {
        Ok(())
    }
}

/// Rate of `ν` conditioned on the moment `x`: `S(ν | p) − φ(x | p)`.
pub fn conditional_rate(c: &Contraction, nu: &EmpiricalFrequency, x: &MomentPoint) -> Result<f64> {
    require_fiber(c, nu, x)?;
    Ok(kl_divergence(nu, c.prior())? - c.rate_phi(x)?)
}

pub fn pythagorean_decompose(
    c: &Contraction,
    nu: &EmpiricalFrequency,
    x: &MomentPoint,
) -> Result<PythagoreanSplit> {
    require_fiber(c, nu, x)?;
    let projector = c.information_projection(x)?;
    Ok(PythagoreanSplit {
        total: kl_divergence(nu, c.prior())?,
        projection_term: kl_divergence(&projector, c.prior())?,
        residual_term: kl_raw(nu.as_slice(), projector.as_slice()),
        projector,
    })
}

fn marginal_and_conditionals(w: &[f64], layout: ProductStateLayout) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n2 = layout.n2;
    let marginal: Vec<f64> = w.chunks(n2).map(|row| row.iter().sum()).collect();
    let conditionals = w
        .chunks(n2)
        .zip(&marginal)
        .map(|(row, m)| row.iter().map(|v| v / m).collect())
        .collect();
    (marginal, conditionals)
}

/// Splits the joint relative entropy into the Y-marginal term and the
/// ν_Y-weighted conditional terms.
pub fn entropy_chain(
    nu: &EmpiricalFrequency,
    p: &ProbabilityVector,
    layout: ProductStateLayout,
) -> Result<ChainSplit> {
    let n = layout.joint_size();
    for len in [nu.len(), p.len()] {
        if len != n {
            return Err(Error::LayoutMismatch { n1: layout.n1, n2: layout.n2, n: len });
        }
    }
    let (nu_y, nu_cond) = marginal_and_conditionals(nu.as_slice(), layout);
    let (p_y, p_cond) = marginal_and_conditionals(p.as_slice(), layout);
    let weighted_conditional_term = nu_y
        .iter()
        .zip(nu_cond.iter().zip(&p_cond))
        .map(|(w, (a, b))| w * kl_raw(a, b))
        .sum();
    Ok(ChainSplit { marginal_term: kl_raw(&nu_y, &p_y), weighted_conditional_term })
}

/// Per-sample information gains in nats.
#[derive(Debug, Clone, Copy)]
pub enum InformationGain<'a> {
    /// `S(ν | uniform) = log n − H(ν)`, no measure required.
    FrequencyVsUniform { nu: &'a EmpiricalFrequency },
    /// `S(ν | p)`
    FrequencyVsPrior { nu: &'a EmpiricalFrequency, prior: &'a ProbabilityVector },
    /// `φ(x | p)`
    MeanVsPrior { contraction: &'a Contraction, x: &'a MomentPoint },
    /// `S(ν | ν*)`, what the full frequency adds over its mean.
    FrequencyGivenMean { contraction: &'a Contraction, nu: &'a EmpiricalFrequency, x: &'a MomentPoint },
}

pub fn information_gain(kind: InformationGain<'_>) -> Result<f64> {
    match kind {
        InformationGain::FrequencyVsUniform { nu } => {
            kl_divergence(nu, &ProbabilityVector::uniform(nu.len())?)
        }
        InformationGain::FrequencyVsPrior { nu, prior } => kl_divergence(nu, prior),
        InformationGain::MeanVsPrior { contraction, x } => contraction.rate_phi(x),
        InformationGain::FrequencyGivenMean { contraction, nu, x } => {
            Ok(pythagorean_decompose(contraction, nu, x)?.residual_term)
        }
    }
}

/// Total gain over `n` samples from a per-sample rate.
pub fn total_gain(rate: f64, samples: u64) -> f64 {
    rate * samples as f64
}
