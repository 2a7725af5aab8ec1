//! Level-2 large deviations for stationary Markov chains.
//!
//! Observations are transition pairs `(X_{l−1}, X_l)`. The pair empirical
//! measure `ν_ij` lives on the shift-invariant pair simplex (row sums equal
//! column sums) and has rate
//!
//! `S⁽²⁾(ν | P) = Σ ν_ij log(ν_ij / (ν_i· P_ij))`,
//!
//! whose conjugate is the spectral free energy `F⁽²⁾(u | P) = log λ_max(P ∘ e^u)`.
//!
//! States are 0-based throughout.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::measures::{check_len, ProbabilityVector};

/// Row-sum tolerance for kernels and total-mass tolerance for pair measures.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;
/// Allowed gap between row and column marginals of a pair measure.
pub const SHIFT_TOLERANCE: f64 = 1e-10;
/// Relative gap of the Collatz-Wielandt bounds at which power iteration stops.
pub const EIGEN_TOLERANCE: f64 = 1e-13;
const MAX_POWER_ITERATIONS: usize = 20_000;
const DENSE_FALLBACK_LIMIT: usize = 50;
const REFINE_LIMIT: usize = 400;

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    let n = m.nrows();
    check_len(n, m.ncols())?;
    if n < 2 {
        return Err(Error::TooFewStates(n));
    }
    if let Some(index) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(n)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::TooFewStates(0));
    }
    for row in rows {
        check_len(n, row.len())?;
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Whether the nonnegative pattern of `m` is primitive, i.e. some power is
/// entrywise positive. Primitive patterns reach positivity by power `n²`, and
/// stay positive afterwards, so squaring past `n²` decides the question.
fn is_primitive(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mut pattern: DMatrix<u8> = m.map(|v| u8::from(v > 0.0));
    let mut power = 1usize;
    while power < n * n {
        let mut next = DMatrix::<u8>::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                if pattern[(i, k)] == 0 {
                    continue;
                }
                for j in 0..n {
                    if pattern[(k, j)] != 0 {
                        next[(i, j)] = 1;
                    }
                }
            }
        }
        pattern = next;
        power *= 2;
    }
    pattern.iter().all(|v| *v != 0)
}

/// Row-stochastic, primitive transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    p: DMatrix<f64>,
}

impl MarkovKernel {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&p)?;
        if let Some((index, value)) = p.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidKernel(format!("entry {index} is negative ({value})")));
        }
        for i in 0..n {
            let sum: f64 = p.row(i).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::InvalidKernel(format!("row {i} sums to {sum}")));
            }
        }
        if !is_primitive(&p) {
            return Err(Error::NonPrimitive);
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn states(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Stationary law `π` with `πP = π`.
    pub fn stationary(&self) -> Result<ProbabilityVector> {
        let pair = principal_pair(&self.p)?;
        ProbabilityVector::new(pair.left.iter().map(|v| v * pair.right[0]).collect())
    }

    /// Stationary pair measure `π_i P_ij`, the zero of the level-2 rate.
    pub fn stationary_pairs(&self) -> Result<PairFrequency> {
        let pi = self.stationary()?;
        let pi = pi.as_slice();
        let n = self.states();
        Ok(PairFrequency::normalized(DMatrix::from_fn(n, n, |i, j| pi[i] * self.p[(i, j)])))
    }
}

/// Shift-invariant pair measure on `n × n` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFrequency {
    nu: DMatrix<f64>,
}

impl PairFrequency {
    pub fn new(nu: DMatrix<f64>) -> Result<Self> {
        let n = check_square(&nu)?;
        if let Some((index, value)) = nu.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidPairFrequency(format!("entry {index} is negative ({value})")));
        }
        let total = nu.sum();
        if (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return Err(Error::InvalidPairFrequency(format!("entries sum to {total}")));
        }
        for k in 0..n {
            let gap = nu.row(k).sum() - nu.column(k).sum();
            if gap.abs() > SHIFT_TOLERANCE {
                return Err(Error::InvalidPairFrequency(format!(
                    "state {k}: row and column marginals differ by {gap:e}"
                )));
            }
        }
        Ok(Self { nu })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    fn normalized(nu: DMatrix<f64>) -> Self {
        let total = nu.sum();
        Self { nu: nu / total }
    }

    pub fn states(&self) -> usize {
        self.nu.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.nu
    }

    /// `ν_i· = Σ_j ν_ij`
    pub fn marginal(&self) -> Vec<f64> {
        self.nu.row_iter().map(|r| r.sum()).collect()
    }
}

/// Entrywise tilt `u_ij` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltMatrix {
    u: DMatrix<f64>,
}

impl TiltMatrix {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        check_square(&u)?;
        Ok(Self { u })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: DMatrix::zeros(n, n) }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { u: DMatrix::from_element(n, n, c) }
    }

    pub fn states(&self) -> usize {
        self.u.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }
}

/// Cyclic pair counts of a state sequence, divided by its length.
///
/// Position 0 takes the last position as its predecessor, which makes the
/// row and column marginals agree exactly at every length.
pub fn pair_frequency_from_sequence(seq: &[usize], n: usize) -> Result<PairFrequency> {
    if n < 2 {
        return Err(Error::TooFewStates(n));
    }
    if seq.len() < 2 {
        return Err(Error::InvalidArgument(format!("sequence of length {} has no pairs", seq.len())));
    }
    if let Some(&state) = seq.iter().find(|s| **s >= n) {
        return Err(Error::StateOutOfRange { state, n });
    }
    let mut counts = DMatrix::<f64>::zeros(n, n);
    let mut prev = seq[seq.len() - 1];
    for &s in seq {
        counts[(prev, s)] += 1.0;
        prev = s;
    }
    Ok(PairFrequency { nu: counts / seq.len() as f64 })
}

/// `S⁽²⁾(ν | P)`, with `0 log 0 = 0`.
pub fn pair_rate(nu: &PairFrequency, kernel: &MarkovKernel) -> Result<f64> {
    let n = kernel.states();
    check_len(n, nu.states())?;
    let marginal = nu.marginal();
    let mut rate = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = nu.nu[(i, j)];
            if v == 0.0 {
                continue;
            }
            let pij = kernel.p[(i, j)];
            if pij == 0.0 {
                return Err(Error::SupportViolation { i, j });
            }
            rate += v * (v / (marginal[i] * pij)).ln();
        }
    }
    Ok(rate)
}

/// Principal eigenvalue and eigenvectors of a tilted kernel.
///
/// `right` has unit sum and `left` is scaled so that `left · right = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalEigen {
    pub value: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration with Collatz-Wielandt stopping: for a positive vector `w`,
/// `min (Aw)_i / w_i ≤ λ ≤ max (Aw)_i / w_i`.
fn power_iteration(a: &DMatrix<f64>) -> Option<(f64, Vec<f64>, usize)> {
    let n = a.nrows();
    let mut w = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let mut best_gap = f64::INFINITY;
    let mut stalled = 0usize;
    for iteration in 1..=MAX_POWER_ITERATIONS {
        let aw = a * &w;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (x, y) in aw.iter().zip(w.iter()) {
            let r = x / y;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let sum = aw.sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return None;
        }
        w = aw / sum;
        if lo > 0.0 && hi.is_finite() {
            let gap = (hi - lo) / hi;
            if gap <= EIGEN_TOLERANCE {
                return Some((0.5 * (lo + hi), w.iter().copied().collect(), iteration));
            }
            // rounding floor: bounds no longer tighten
            if gap < best_gap * 0.999 {
                best_gap = gap;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 50 && best_gap < 1e3 * EIGEN_TOLERANCE {
                    return Some((0.5 * (lo + hi), w.iter().copied().collect(), iteration));
                }
            }
        }
    }
    None
}

/// Dense fallback: Perron root from the Schur form, eigenvectors from the
/// null space of `A − λI`.
fn dense_pair(a: &DMatrix<f64>) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let lambda = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) {
        return None;
    }
    let null_vector = |m: DMatrix<f64>| -> Option<Vec<f64>> {
        let n = m.nrows();
        let shifted = m - DMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let (idx, _) = svd.singular_values.argmin();
        let v: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let sum: f64 = v.iter().sum();
        let v: Vec<f64> = v.iter().map(|x| (x / sum).max(0.0)).collect();
        let sum: f64 = v.iter().sum();
        Some(v.iter().map(|x| x / sum).collect())
    };
    Some((lambda, null_vector(a.transpose())?, null_vector(a.clone())?))
}

fn principal_pair(a: &DMatrix<f64>) -> Result<PrincipalEigen> {
    let n = a.nrows();
    let right = power_iteration(a);
    let left = power_iteration(&a.transpose());
    let (value, left, right, iterations) = match (right, left) {
        (Some((lr, r, ir)), Some((_, l, il))) => (lr, l, r, ir.max(il)),
        _ if n <= DENSE_FALLBACK_LIMIT => {
            let (value, l, r) = dense_pair(a).ok_or(Error::NonPrimitive)?;
            (value, l, r, MAX_POWER_ITERATIONS)
        }
        _ => return Err(Error::NonPrimitive),
    };
    let (right, mut left, value) = if n <= REFINE_LIMIT {
        let right = refine(a, value, right);
        let left = refine(&a.transpose(), value, left);
        let w = nalgebra::DVector::from_column_slice(&right);
        let v = nalgebra::DVector::from_column_slice(&left);
        let rayleigh = v.dot(&(a * &w)) / v.dot(&w);
        (right, left, if rayleigh > 0.0 { rayleigh } else { value })
    } else {
        (right, left, value)
    };
    let dot: f64 = left.iter().zip(&right).map(|(x, y)| x * y).sum();
    left.iter_mut().for_each(|x| *x /= dot);
    Ok(PrincipalEigen { value, left, right, iterations })
}

/// Two steps of inverse iteration at the converged eigenvalue. Keeps the
/// input if the shifted solve breaks down or loses positivity.
fn refine(a: &DMatrix<f64>, lambda: f64, start: Vec<f64>) -> Vec<f64> {
    let n = a.nrows();
    let lu = (a - DMatrix::identity(n, n) * lambda).lu();
    let mut y = nalgebra::DVector::from_vec(start.clone());
    for _ in 0..2 {
        let Some(next) = lu.solve(&y) else { return start };
        let sum = next.sum();
        if !sum.is_finite() || sum == 0.0 {
            return start;
        }
        y = next / sum;
    }
    if y.iter().any(|v| !(*v >= 0.0)) {
        return start;
    }
    y.iter().copied().collect()
}

/// Tilted kernel `P ∘ e^{u − max u}` and the shift `max u`.
fn tilted_kernel(u: &TiltMatrix, kernel: &MarkovKernel) -> Result<(DMatrix<f64>, f64)> {
    check_len(kernel.states(), u.states())?;
    let shift = u.u.max();
    Ok((kernel.p.zip_map(&u.u, |p, x| p * (x - shift).exp()), shift))
}

/// Principal eigenpair of `P ∘ e^u`.
pub fn principal_eigen(u: &TiltMatrix, kernel: &MarkovKernel) -> Result<PrincipalEigen> {
    let (a, shift) = tilted_kernel(u, kernel)?;
    let mut pair = principal_pair(&a)?;
    pair.value *= shift.exp();
    Ok(pair)
}

/// `F⁽²⁾(u | P) = log λ_max(P ∘ e^u)`
pub fn markov_free_energy(u: &TiltMatrix, kernel: &MarkovKernel) -> Result<f64> {
    let (a, shift) = tilted_kernel(u, kernel)?;
    Ok(principal_pair(&a)?.value.ln() + shift)
}

/// `∂F⁽²⁾/∂u_ij = P_ij e^{u_ij} v_i w_j / λ_max`
pub fn markov_gradient(u: &TiltMatrix, kernel: &MarkovKernel) -> Result<PairFrequency> {
    let (a, _) = tilted_kernel(u, kernel)?;
    let pair = principal_pair(&a)?;
    let n = a.nrows();
    let nu = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * pair.left[i] * pair.right[j] / pair.value);
    Ok(PairFrequency::normalized(nu))
}

/// `⟨ν, u⟩ = Σ ν_ij u_ij`
pub fn frobenius(nu: &PairFrequency, u: &TiltMatrix) -> Result<f64> {
    check_len(nu.states(), u.states())?;
    Ok(nu.nu.dot(&u.u))
}
