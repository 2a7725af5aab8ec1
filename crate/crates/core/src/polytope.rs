//! The fiber polytope `A_x = {ν > 0 : Σν = 1, Xν = x}` and its simplex charts.
//!
//! `A_x` has dimension `n − k − 1`. Its closure is the convex hull of finitely
//! many vertices, which need not number `n − k` (the unit-square fiber of
//! `X = [1 1 0 0]`, `x = ½` has four). A chart picks `n − k` linearly
//! independent vertices as the columns of `Q` and parametrizes the open
//! simplex they span by mixture weights `η`, `ν = Qη`.
//!
//! On a chart the conditional rate becomes `S_X(η) = S(Qη | p) − φ(x | p)`,
//! whose conjugate is `F_X(χ) = φ(x | p) + inf { F(μ') : Qᵀμ' = χ }`. The
//! infimum is evaluated in closed form: for any `μ'` with `Qᵀμ' = χ`,
//! `F_X(χ) = φ(x | p) + F(μ' | p) − φ(x | p^{μ'})`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::contraction::{Contraction, ConjugateSolution, MomentPoint, ObservableMatrix};
use crate::error::{Error, Result};
use crate::measures::{
    check_len, kl_raw, log_partition_raw, tilt_raw, validate_simplex, EmpiricalFrequency,
    EnergyVector, ProbabilityVector, POSITIVITY_FLOOR,
};

/// Largest state count accepted by [`enumerate_vertices`].
pub const VERTEX_CAP: usize = 20;
/// Vertices closer than this (infinity norm) are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-9;
const CONSTRAINT_TOLERANCE: f64 = 1e-10;
const BASIS_RCOND: f64 = 1e-12;
const CLEAN_TOLERANCE: f64 = 1e-13;

/// Vertices of the closed fiber polytope, in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    vertices: Vec<DVector<f64>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&DVector<f64>> {
        self.vertices.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.vertices.iter()
    }

    pub fn as_slice(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// First (lexicographic) subset of `size` vertices that is linearly
    /// independent and whose supports jointly cover every state, so that the
    /// chart interior lies in the open simplex.
    ///
    /// At most `budget` subsets are examined.
    pub fn covering_subset(&self, size: usize, budget: usize) -> Option<Vec<usize>> {
        let n = self.vertices.first()?.len();
        (0..self.len())
            .combinations(size)
            .take(budget)
            .find(|subset| {
                let covers = (0..n).all(|i| subset.iter().any(|&j| self.vertices[j][i] > 0.0));
                covers && matrix_rank(&columns(&self.vertices, subset)) == size
            })
    }
}

fn columns(vertices: &[DVector<f64>], subset: &[usize]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = subset.iter().map(|&j| vertices[j].clone()).collect();
    DMatrix::from_columns(&cols)
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-10 * smax).count()
}

/// Stacked constraint system `[1ᵀ; X] ν = [1; x]`.
fn constraint_system(observable: &ObservableMatrix, x: &MomentPoint) -> (DMatrix<f64>, DVector<f64>) {
    let (k, n) = (observable.dim(), observable.states());
    let a = DMatrix::from_fn(k + 1, n, |i, j| if i == 0 { 1.0 } else { observable.matrix()[(i - 1, j)] });
    let b = DVector::from_fn(k + 1, |i, _| if i == 0 { 1.0 } else { x.as_slice()[i - 1] });
    (a, b)
}

/// All vertices of `{ν ≥ 0 : Σν = 1, Xν = x}`, found as the basic feasible
/// solutions of the `(k + 1)`-row constraint system.
pub fn enumerate_vertices(observable: &ObservableMatrix, x: &MomentPoint) -> Result<VertexSet> {
    let n = observable.states();
    check_len(observable.dim(), x.len())?;
    if n > VERTEX_CAP {
        return Err(Error::CapExceeded(format!("{n} states exceeds the vertex cap of {VERTEX_CAP}")));
    }
    let (a, b) = constraint_system(observable, x);
    let rows = a.nrows();

    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for basis in (0..n).combinations(rows) {
        let sub = a.select_columns(&basis);
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 || svd.singular_values.min() < BASIS_RCOND * smax {
            continue;
        }
        let Some(solution) = sub.lu().solve(&b) else { continue };
        if solution.iter().any(|v| *v < -CLEAN_TOLERANCE) {
            continue;
        }
        let mut nu = DVector::zeros(n);
        for (&j, &v) in basis.iter().zip(solution.iter()) {
            nu[j] = if v.abs() < CLEAN_TOLERANCE { 0.0 } else { v };
        }
        if (&a * &nu - &b).amax() > CONSTRAINT_TOLERANCE {
            continue;
        }
        if !vertices.iter().any(|v| (v - &nu).amax() < DEDUP_TOLERANCE) {
            vertices.push(nu);
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptyFiber);
    }
    Ok(VertexSet { vertices })
}

/// The open fiber `A_x` together with its information projection.
#[derive(Debug, Clone)]
pub struct FiberPolytope {
    contraction: Contraction,
    x: MomentPoint,
    conjugate: ConjugateSolution,
    phi: f64,
    projector: EmpiricalFrequency,
}

impl FiberPolytope {
    /// Certifies a nonempty interior by solving for the information projection.
    pub fn new(contraction: Contraction, x: MomentPoint) -> Result<Self> {
        let conjugate = contraction.solve_conjugate(&x)?;
        let phi = contraction.phi_at(&x, &conjugate.alpha);
        let projector = contraction.projection_at(&conjugate.alpha)?;
        Ok(Self { contraction, x, conjugate, phi, projector })
    }

    pub fn contraction(&self) -> &Contraction {
        &self.contraction
    }

    pub fn moment(&self) -> &MomentPoint {
        &self.x
    }

    pub fn conjugate(&self) -> &ConjugateSolution {
        &self.conjugate
    }

    /// `φ(x | p) = S(ν* | p)`
    pub fn rate(&self) -> f64 {
        self.phi
    }

    pub fn projector(&self) -> &EmpiricalFrequency {
        &self.projector
    }

    /// `n − k − 1`
    pub fn dimension(&self) -> usize {
        self.contraction.observable().states() - self.contraction.observable().dim() - 1
    }

    pub fn vertices(&self) -> Result<VertexSet> {
        enumerate_vertices(self.contraction.observable(), &self.x)
    }
}

/// `n × (n − k)` matrix of linearly independent fiber vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexChart {
    q: DMatrix<f64>,
}

impl SimplexChart {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Chart dimension `n − k` (number of mixture weights).
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn states(&self) -> usize {
        self.q.nrows()
    }
}

/// Validates `n − k` fiber vertices as a chart: `XQ = x·1ᵀ` and rank `n − k`.
pub fn build_chart(
    observable: &ObservableMatrix,
    x: &MomentPoint,
    vertices: &[DVector<f64>],
) -> Result<SimplexChart> {
    let (k, n) = (observable.dim(), observable.states());
    check_len(k, x.len())?;
    check_len(n - k, vertices.len())?;
    let (a, b) = constraint_system(observable, x);
    for v in vertices {
        check_len(n, v.len())?;
        let residual = (&a * v - &b).amax();
        if residual > CONSTRAINT_TOLERANCE {
            return Err(Error::FiberViolation { residual });
        }
        if let Some(index) = v.iter().position(|c| *c < 0.0) {
            return Err(Error::NotPositive { index, value: v[index] });
        }
    }
    let q = DMatrix::from_columns(vertices);
    let rank = matrix_rank(&q);
    if rank < n - k {
        return Err(Error::RankDeficient { rank, needed: n - k });
    }
    Ok(SimplexChart { q })
}

/// Mixture weights `η` in the open simplex of dimension `n − k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCoordinate(DVector<f64>);

impl MixtureCoordinate {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        Ok(Self(DVector::from_vec(validate_simplex(eta)?)))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Chart energies `χ ∈ R^{n−k}`, defined modulo the all-ones direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartEnergy(DVector<f64>);

impl ChartEnergy {
    pub fn new(chi: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(chi))
    }

    pub fn from_vector(chi: DVector<f64>) -> Result<Self> {
        if let Some(index) = chi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(chi))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `χ + c·1`
    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.add_scalar(c))
    }
}

/// A chart on a fiber, with the chart-level entropy and free energy.
#[derive(Debug, Clone)]
pub struct ChartGeometry {
    fiber: FiberPolytope,
    chart: SimplexChart,
}

impl ChartGeometry {
    pub fn new(fiber: FiberPolytope, chart: SimplexChart) -> Result<Self> {
        check_len(fiber.contraction.observable().states(), chart.states())?;
        check_len(fiber.contraction.observable().states() - fiber.contraction.observable().dim(), chart.dim())?;
        let (a, b) = constraint_system(fiber.contraction.observable(), &fiber.x);
        for col in chart.q.column_iter() {
            let residual = (&a * col - &b).amax();
            if residual > CONSTRAINT_TOLERANCE {
                return Err(Error::FiberViolation { residual });
            }
        }
        Ok(Self { fiber, chart })
    }

    pub fn fiber(&self) -> &FiberPolytope {
        &self.fiber
    }

    pub fn chart(&self) -> &SimplexChart {
        &self.chart
    }

    fn prior(&self) -> &ProbabilityVector {
        self.fiber.contraction.prior()
    }

    /// `ν = Qη`, required to stay in the open simplex.
    pub fn push_forward(&self, eta: &MixtureCoordinate) -> Result<EmpiricalFrequency> {
        check_len(self.chart.dim(), eta.len())?;
        let nu = &self.chart.q * eta.as_vector();
        if let Some((index, value)) = nu.iter().enumerate().find(|(_, v)| **v <= POSITIVITY_FLOOR) {
            return Err(Error::PatchBoundary { index, value: *value });
        }
        EmpiricalFrequency::new(nu.iter().copied().collect())
    }

    /// `S_X(η | p) = S(Qη | p) − φ(x | p)`
    pub fn chart_entropy(&self, eta: &MixtureCoordinate) -> Result<f64> {
        let nu = self.push_forward(eta)?;
        Ok(kl_raw(nu.as_slice(), self.prior().as_slice()) - self.fiber.phi)
    }

    /// `χ = Qᵀμ` with `μ = log(Qη / p)` the canonical conjugate energy of `Qη`.
    pub fn chart_conjugate(&self, eta: &MixtureCoordinate) -> Result<ChartEnergy> {
        let nu = self.push_forward(eta)?;
        let mu = DVector::from_iterator(
            nu.len(),
            nu.as_slice().iter().zip(self.prior().as_slice()).map(|(v, p)| (v / p).ln()),
        );
        ChartEnergy::from_vector(self.chart.q.transpose() * mu)
    }

    /// Minimum-norm `μ'` with `Qᵀμ' = χ`.
    pub fn min_norm_energy(&self, chi: &ChartEnergy) -> Result<EnergyVector> {
        check_len(self.chart.dim(), chi.len())?;
        let qt = self.chart.q.transpose();
        let svd = qt.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let mu = svd.solve(chi.as_vector(), eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        EnergyVector::new(mu.iter().copied().collect())
    }

    /// `F_X(χ | p)`, evaluated at the minimum-norm preimage of `χ`.
    pub fn chart_free_energy(&self, chi: &ChartEnergy) -> Result<f64> {
        let mu = self.min_norm_energy(chi)?;
        self.chart_free_energy_with(chi, &mu)
    }

    /// `F_X(χ | p) = φ(x | p) + F(μ' | p) − φ(x | p^{μ'})` for a caller-chosen
    /// preimage `μ'` of `χ`.
    pub fn chart_free_energy_with(&self, chi: &ChartEnergy, mu: &EnergyVector) -> Result<f64> {
        check_len(self.chart.dim(), chi.len())?;
        check_len(self.chart.states(), mu.len())?;
        let image = self.chart.q.transpose() * DVector::from_column_slice(mu.as_slice());
        let scale = 1.0 + chi.as_vector().amax();
        let residual = (&image - chi.as_vector()).amax();
        if residual > 1e-9 * scale {
            return Err(Error::InvalidArgument(format!(
                "energy is not a preimage of the chart energy (residual {residual:e})"
            )));
        }
        let p = self.prior().as_slice();
        let f = log_partition_raw(mu.as_slice(), p);
        let tilted = ProbabilityVector::new(tilt_raw(mu.as_slice(), p))?;
        let inner = self.fiber.contraction.with_prior(tilted)?.rate_phi(&self.fiber.x)?;
        Ok(self.fiber.phi + f - inner)
    }

    /// `F_X(χ) + S_X(η) − η·χ`, zero exactly on conjugate pairs.
    pub fn fenchel_young_gap(&self, eta: &MixtureCoordinate, chi: &ChartEnergy) -> Result<f64> {
        Ok(self.chart_free_energy(chi)? + self.chart_entropy(eta)? - eta.as_vector().dot(chi.as_vector()))
    }

    /// Bregman divergence of `S_X`:
    /// `S_X(η₁) − S_X(η₂) − χ₂·(η₁ − η₂)` with `χ₂` conjugate to `η₂`.
    pub fn chart_divergence(&self, eta1: &MixtureCoordinate, eta2: &MixtureCoordinate) -> Result<f64> {
        let chi2 = self.chart_conjugate(eta2)?;
        let d = eta1.as_vector() - eta2.as_vector();
        Ok(self.chart_entropy(eta1)? - self.chart_entropy(eta2)? - chi2.as_vector().dot(&d))
    }
}
