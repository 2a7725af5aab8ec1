//! Monte Carlo and exact-enumeration checks of exponential decay rates.
//!
//! # Random streams
//!
//! Every stream is a ChaCha8 generator. A standalone draw with seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)`. Replica `r` of a rate estimate at sample
//! size `N` under master seed `m` uses
//!
//! ```text
//! key = splitmix64(m ^ splitmix64(N))
//! rng = ChaCha8Rng::seed_from_u64(key), then rng.set_stream(r)
//! ```
//!
//! so replicas are disjoint substreams and the result does not depend on how
//! replicas are scheduled across threads.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contraction::{Contraction, MomentPoint, ObservableMatrix};
use crate::error::{Error, Result};
use crate::markov::MarkovKernel;
use crate::measures::{check_len, kl_raw, EmpiricalFrequency, ProbabilityVector};

/// Largest state count for [`exact_frequency_distribution`].
pub const EXACT_STATE_CAP: usize = 5;
/// Largest sample size for [`exact_frequency_distribution`].
pub const EXACT_SIZE_CAP: usize = 60;
/// Most compositions [`exact_ball_probability`] will visit.
pub const COMPOSITION_CAP: u128 = 20_000_000;
/// Hit counts below this are flagged as unreliable.
pub const MIN_HITS: u64 = 10;
/// Normal quantile for the 95% Wilson interval.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;
const BALL_SLACK: f64 = 1e-12;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replica `replica` at sample size `size`.
pub fn replica_rng(master: u64, size: usize, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(size as u64)));
    rng.set_stream(replica);
    rng
}

fn sampler(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// `size` i.i.d. draws from `p`, as 0-based states.
pub fn sample_iid(p: &ProbabilityVector, size: usize, seed: u64) -> Vec<usize> {
    let dist = sampler(p.as_slice()).expect("probability vectors have positive weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| dist.sample(&mut rng)).collect()
}

/// Counts of a sample that left some state unvisited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryReport {
    pub counts: Vec<u64>,
    pub zero_states: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmpiricalOutcome {
    Interior(EmpiricalFrequency),
    Boundary(BoundaryReport),
}

fn count_states(seq: &[usize], n: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; n];
    for &s in seq {
        *counts.get_mut(s).ok_or(Error::StateOutOfRange { state: s, n })? += 1;
    }
    Ok(counts)
}

/// Normalized occurrence counts of `seq` over `n` states.
pub fn empirical_frequency(seq: &[usize], n: usize) -> Result<EmpiricalOutcome> {
    if n < 2 {
        return Err(Error::TooFewStates(n));
    }
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let counts = count_states(seq, n)?;
    let zero_states: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    if !zero_states.is_empty() {
        return Ok(EmpiricalOutcome::Boundary(BoundaryReport { counts, zero_states }));
    }
    let total = seq.len() as f64;
    Ok(EmpiricalOutcome::Interior(EmpiricalFrequency::new(
        counts.iter().map(|&c| c as f64 / total).collect(),
    )?))
}

/// Exact probability of one lattice frequency `counts / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProbability {
    pub counts: Vec<u32>,
    pub probability: f64,
}

fn log_factorials(size: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(size + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=size {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Calls `visit` on every composition of `size` into `parts` nonnegative parts,
/// in lexicographic order.
fn for_each_composition(size: u32, parts: usize, mut visit: impl FnMut(&[u32])) {
    fn recurse(buf: &mut Vec<u32>, left: u32, parts: usize, visit: &mut impl FnMut(&[u32])) {
        if buf.len() + 1 == parts {
            buf.push(left);
            visit(buf);
            buf.pop();
            return;
        }
        for c in (0..=left).rev() {
            buf.push(c);
            recurse(buf, left - c, parts, visit);
            buf.pop();
        }
    }
    recurse(&mut Vec::with_capacity(parts), size, parts, &mut visit);
}

fn composition_count(size: usize, parts: usize) -> u128 {
    // C(size + parts − 1, parts − 1), saturating
    let mut c: u128 = 1;
    for i in 1..parts as u128 {
        c = c.saturating_mul(size as u128 + i) / i;
    }
    c
}

fn multinomial_log_probability(counts: &[u32], log_p: &[f64], log_fact: &[f64]) -> f64 {
    let size: u32 = counts.iter().sum();
    let mut lp = log_fact[size as usize];
    for (&c, &lpi) in counts.iter().zip(log_p) {
        lp -= log_fact[c as usize];
        if c > 0 {
            lp += c as f64 * lpi;
        }
    }
    lp
}

/// Multinomial law of the empirical frequency of `size` draws from `p`.
pub fn exact_frequency_distribution(p: &ProbabilityVector, size: usize) -> Result<Vec<LatticeProbability>> {
    let n = p.len();
    if n > EXACT_STATE_CAP || size > EXACT_SIZE_CAP {
        return Err(Error::CapExceeded(format!(
            "exact enumeration supports n ≤ {EXACT_STATE_CAP} and N ≤ {EXACT_SIZE_CAP}, got n = {n}, N = {size}"
        )));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let log_p: Vec<f64> = p.as_slice().iter().map(|v| v.ln()).collect();
    let log_fact = log_factorials(size);
    let mut out = Vec::new();
    for_each_composition(size as u32, n, |counts| {
        out.push(LatticeProbability {
            counts: counts.to_vec(),
            probability: multinomial_log_probability(counts, &log_p, &log_fact).exp(),
        });
    });
    Ok(out)
}

/// Closed infinity-norm ball around a frequency or a moment point.
#[derive(Debug, Clone)]
pub enum Target {
    Frequency { center: Vec<f64>, radius: f64 },
    Moment { observable: ObservableMatrix, center: MomentPoint, radius: f64 },
}

impl Target {
    pub fn radius(&self) -> f64 {
        match self {
            Target::Frequency { radius, .. } | Target::Moment { radius, .. } => *radius,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let r = self.radius();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {r}")));
        }
        match self {
            Target::Frequency { center, .. } => {
                check_len(n, center.len())?;
                if let Some(index) = center.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
            }
            Target::Moment { observable, center, .. } => {
                check_len(n, observable.states())?;
                check_len(observable.dim(), center.len())?;
            }
        }
        Ok(())
    }

    /// Whether the frequency `counts / total` lies in the ball.
    pub fn contains_counts(&self, counts: &[u32], total: u32) -> bool {
        let total = total as f64;
        match self {
            Target::Frequency { center, radius } => counts
                .iter()
                .zip(center)
                .all(|(&c, &m)| (c as f64 / total - m).abs() <= radius + BALL_SLACK),
            Target::Moment { observable, center, radius } => {
                let x = observable.matrix();
                (0..x.nrows()).all(|row| {
                    let y: f64 = counts.iter().enumerate().map(|(j, &c)| x[(row, j)] * c as f64).sum::<f64>() / total;
                    (y - center.as_slice()[row]).abs() <= radius + BALL_SLACK
                })
            }
        }
    }
}

/// Exact probability that the empirical frequency of `size` draws lands in
/// the target ball.
pub fn exact_ball_probability(p: &ProbabilityVector, size: usize, target: &Target) -> Result<f64> {
    let n = p.len();
    target.validate(n)?;
    if size == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let count = composition_count(size, n);
    if count > COMPOSITION_CAP {
        return Err(Error::CapExceeded(format!("{count} compositions exceed the cap of {COMPOSITION_CAP}")));
    }
    let log_p: Vec<f64> = p.as_slice().iter().map(|v| v.ln()).collect();
    let log_fact = log_factorials(size);
    let mut terms = Vec::new();
    for_each_composition(size as u32, n, |counts| {
        if target.contains_counts(counts, size as u32) {
            terms.push(multinomial_log_probability(counts, &log_p, &log_fact));
        }
    });
    if terms.is_empty() {
        return Ok(0.0);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>())
}

/// Inputs of a Monte Carlo rate estimate.
#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub prior: ProbabilityVector,
    pub sizes: Vec<usize>,
    pub replicas: u64,
    pub seed: u64,
    pub target: Target,
    pub parallel: bool,
}

impl SampleSpec {
    pub fn new(prior: ProbabilityVector, sizes: Vec<usize>, replicas: u64, seed: u64, target: Target) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be a nonempty list of positive integers".into()));
        }
        if replicas == 0 {
            return Err(Error::InvalidArgument("replica count must be positive".into()));
        }
        target.validate(prior.len())?;
        Ok(Self { prior, sizes, replicas, seed, target, parallel: true })
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

/// Wilson score interval `(low, high)` for `hits` successes in `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let phat = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One rung of the sample-size ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub size: usize,
    pub hits: u64,
    pub replicas: u64,
    pub probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `−(1/N) log P̂`, absent with zero hits.
    pub rate: Option<f64>,
    /// Rates at the Wilson bounds; the upper bound is absent when the lower
    /// probability bound is zero.
    pub rate_low: f64,
    pub rate_high: Option<f64>,
    pub insufficient_hits: bool,
}

impl RateRow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.wilson_high - self.wilson_low)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub rows: Vec<RateRow>,
    /// Analytic rate at the ball center.
    pub center_rate: f64,
    /// Infimum of the analytic rate over the ball, the Sanov comparison value.
    pub analytic_rate: f64,
}

fn replica_hits(spec: &SampleSpec, dist: &WeightedIndex<f64>, size: usize, replica: u64) -> bool {
    let mut rng = replica_rng(spec.seed, size, replica);
    let mut counts = vec![0u32; spec.prior.len()];
    for _ in 0..size {
        counts[dist.sample(&mut rng)] += 1;
    }
    spec.target.contains_counts(&counts, size as u32)
}

/// Monte Carlo estimate of `−(1/N) log P[target]` along the size ladder.
pub fn estimate_rate(spec: &SampleSpec) -> Result<RateEstimate> {
    let dist = sampler(spec.prior.as_slice())?;
    let (center_rate, analytic_rate) = analytic_rates(&spec.prior, &spec.target)?;
    let rows = spec
        .sizes
        .iter()
        .map(|&size| {
            let hits: u64 = if spec.parallel {
                (0..spec.replicas)
                    .into_par_iter()
                    .map(|r| u64::from(replica_hits(spec, &dist, size, r)))
                    .sum()
            } else {
                (0..spec.replicas).map(|r| u64::from(replica_hits(spec, &dist, size, r))).sum()
            };
            let probability = hits as f64 / spec.replicas as f64;
            let (wilson_low, wilson_high) = wilson_interval(hits, spec.replicas, WILSON_Z);
            let to_rate = |q: f64| -q.ln() / size as f64;
            RateRow {
                size,
                hits,
                replicas: spec.replicas,
                probability,
                wilson_low,
                wilson_high,
                rate: (hits > 0).then(|| to_rate(probability)),
                rate_low: to_rate(wilson_high),
                rate_high: (wilson_low > 0.0).then(|| to_rate(wilson_low)),
                insufficient_hits: hits < MIN_HITS,
            }
        })
        .collect();
    Ok(RateEstimate { rows, center_rate, analytic_rate })
}

/// Analytic rate at the ball center and its infimum over the ball.
/// Returns `+∞` for a ball that misses the attainable set.
pub fn analytic_rates(p: &ProbabilityVector, target: &Target) -> Result<(f64, f64)> {
    target.validate(p.len())?;
    match target {
        Target::Frequency { center, radius } => {
            let center_rate = if center.iter().all(|v| *v > 0.0) && (center.iter().sum::<f64>() - 1.0).abs() < 1e-9 {
                kl_raw(center, p.as_slice())
            } else {
                f64::INFINITY
            };
            Ok((center_rate, frequency_ball_infimum(p.as_slice(), center, *radius)))
        }
        Target::Moment { observable, center, radius } => {
            let c = Contraction::new(observable.clone(), p.clone())?;
            let center_rate = c.rate_phi(center).unwrap_or(f64::INFINITY);
            Ok((center_rate, moment_ball_infimum(&c, center, *radius)))
        }
    }
}

/// `min KL(ν | p)` over the box `|ν − center|∞ ≤ radius` in the simplex. The
/// minimizer has the form `ν_i = clamp(t p_i, lo_i, hi_i)` with `t` fixed by
/// normalization.
fn frequency_ball_infimum(p: &[f64], center: &[f64], radius: f64) -> f64 {
    let lo: Vec<f64> = center.iter().map(|c| (c - radius).max(0.0)).collect();
    let hi: Vec<f64> = center.iter().map(|c| (c + radius).min(1.0)).collect();
    if lo.iter().sum::<f64>() > 1.0 + BALL_SLACK || hi.iter().sum::<f64>() < 1.0 - BALL_SLACK {
        return f64::INFINITY;
    }
    let point = |log_t: f64| -> Vec<f64> {
        p.iter().zip(lo.iter().zip(&hi)).map(|(pi, (l, h))| (pi * log_t.exp()).clamp(*l, *h)).collect()
    };
    let (mut a, mut b) = (-800.0f64, 800.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if point(mid).iter().sum::<f64>() < 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let nu = point(0.5 * (a + b));
    let total: f64 = nu.iter().sum();
    let nu: Vec<f64> = nu.iter().map(|v| v / total).collect();
    kl_raw(&nu, p)
}

/// `min φ(y)` over `|y − center|∞ ≤ radius`, by projected gradient with
/// backtracking. Exact clamping in one dimension.
fn moment_ball_infimum(c: &Contraction, center: &MomentPoint, radius: f64) -> f64 {
    let mean = c.prior_mean();
    let lo = center.as_vector().add_scalar(-radius);
    let hi = center.as_vector().add_scalar(radius);
    let project = |y: &DVector<f64>| DVector::from_fn(y.len(), |i, _| y[i].clamp(lo[i], hi[i]));
    let rate = |y: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let m = MomentPoint::from_vector(y.clone()).ok()?;
        let sol = c.solve_conjugate(&m).ok()?;
        Some((c.phi_at(&m, &sol.alpha), sol.alpha.as_vector().clone()))
    };
    let mut y = project(mean.as_vector());
    let Some((mut value, mut grad)) = rate(&y) else { return f64::INFINITY };
    if c.observable().dim() == 1 {
        return value;
    }
    let mut step = 1.0;
    for _ in 0..500 {
        let mut improved = false;
        while step > 1e-14 {
            let cand = project(&(&y - &grad * step));
            if let Some((v, g)) = rate(&cand) {
                if v < value - 1e-4 * grad.dot(&(&y - &cand)) || (v <= value && (&cand - &y).amax() < 1e-13) {
                    let moved = (&cand - &y).amax();
                    y = cand;
                    value = v;
                    grad = g;
                    improved = moved > 1e-13;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    value
}

/// Starting state of a simulated chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Fixed(usize),
    Stationary,
}

/// `size` steps of the chain `kernel`, starting from `initial`.
pub fn sample_markov(kernel: &MarkovKernel, size: usize, seed: u64, initial: InitialState) -> Result<Vec<usize>> {
    let n = kernel.states();
    let rows: Vec<WeightedIndex<f64>> = kernel
        .matrix()
        .row_iter()
        .map(|r| sampler(&r.iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = match initial {
        InitialState::Fixed(s) if s >= n => return Err(Error::StateOutOfRange { state: s, n }),
        InitialState::Fixed(s) => s,
        InitialState::Stationary => sampler(kernel.stationary()?.as_slice())?.sample(&mut rng),
    };
    let mut seq = Vec::with_capacity(size);
    for _ in 0..size {
        seq.push(state);
        state = rows[state].sample(&mut rng);
    }
    Ok(seq)
}
