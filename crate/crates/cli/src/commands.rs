use clap::ValueEnum;
use ldgeom_core::contraction::MomentPoint;
use ldgeom_core::divergence::{
    entropy_chain, information_gain, pythagorean_decompose, total_gain, InformationGain, ProductStateLayout,
};
use ldgeom_core::markov::{
    frobenius, markov_gradient, pair_frequency_from_sequence, pair_rate, principal_eigen,
};
use ldgeom_core::measures::{free_energy, kl_divergence, shannon_entropy, tilt};
use ldgeom_core::polytope::{build_chart, enumerate_vertices, ChartEnergy, ChartGeometry, FiberPolytope, MixtureCoordinate};
use ldgeom_core::sampling::{estimate_rate, exact_ball_probability, SampleSpec, Target};
use serde_json::Value;

use crate::failure::Failure;
use crate::render::{matrix, num, nums, vector, Obj, Units};
use crate::spec::{ProblemSpec, TargetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Shannon entropy, relative entropy and information gains of a frequency
    Entropy,
    /// Tilted prior and free energy of an energy vector
    Tilt,
    /// Conjugate parameter, rate, projection and metric at a moment point
    Contract,
    /// Information projection and Pythagorean split of a fiber frequency
    Project,
    /// Chain rule split of a product-space relative entropy
    Chain,
    /// Vertices of the fiber polytope
    Vertices,
    /// Chart-level entropy, conjugate energy and free energy
    Chart,
    /// Level-2 rate, spectral free energy and its gradient
    Markov,
    /// Monte Carlo decay-rate ladder
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Entropy => "entropy",
            Command::Tilt => "tilt",
            Command::Contract => "contract",
            Command::Project => "project",
            Command::Chain => "chain",
            Command::Vertices => "vertices",
            Command::Chart => "chart",
            Command::Markov => "markov",
            Command::Verify => "verify",
        }
    }
}

pub struct Context<'a> {
    pub spec: &'a ProblemSpec,
    pub units: Units,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
}

pub struct Report {
    pub results: Value,
    pub diagnostics: Value,
    /// Results field rendered as the CSV table.
    pub table: Option<&'static str>,
}

impl Report {
    fn plain(results: Obj, diagnostics: Obj) -> Self {
        Self { results: results.build(), diagnostics: diagnostics.build(), table: None }
    }
}

pub fn run(command: Command, ctx: &Context) -> Result<Report, Failure> {
    match command {
        Command::Entropy => entropy(ctx),
        Command::Tilt => tilt_command(ctx),
        Command::Contract => contract(ctx),
        Command::Project => project(ctx),
        Command::Chain => chain(ctx),
        Command::Vertices => vertices(ctx),
        Command::Chart => chart(ctx),
        Command::Markov => markov(ctx),
        Command::Verify => verify(ctx),
    }
}

fn entropy(ctx: &Context) -> Result<Report, Failure> {
    let (spec, u) = (ctx.spec, ctx.units);
    let nu = spec.frequency()?;
    let p = spec.prior()?;
    let mut gains = vec![
        ("frequency_vs_uniform", information_gain(InformationGain::FrequencyVsUniform { nu: &nu })?),
        ("frequency_vs_prior", information_gain(InformationGain::FrequencyVsPrior { nu: &nu, prior: &p })?),
    ];
    let mut results = Obj::new()
        .set("entropy", u.nat(shannon_entropy(&nu)))
        .set("relative_entropy", u.nat(kl_divergence(&nu, &p)?));
    if spec.observable.is_some() {
        let c = spec.contraction(spec.solver_options(ctx.tol, ctx.max_iter))?;
        let x = c.observable().moments_of(nu.as_slice())?;
        results.put("moment", vector(x.as_vector()));
        gains.push(("mean_vs_prior", information_gain(InformationGain::MeanVsPrior { contraction: &c, x: &x })?));
        gains.push((
            "frequency_given_mean",
            information_gain(InformationGain::FrequencyGivenMean { contraction: &c, nu: &nu, x: &x })?,
        ));
    }
    let table = |f: &dyn Fn(f64) -> f64| {
        gains.iter().fold(Obj::new(), |o, (k, v)| o.set(k, u.nat(f(*v))))
    };
    results.put("information_gain", table(&|v| v));
    if let Some(samples) = spec.samples {
        results.put("samples", Value::from(samples));
        results.put("total_information_gain", table(&|v| total_gain(v, samples)));
    }
    Ok(Report::plain(results, Obj::new()))
}

fn tilt_command(ctx: &Context) -> Result<Report, Failure> {
    let p = ctx.spec.prior()?;
    let mu = ctx.spec.energy()?;
    let tilted = tilt(&p, &mu)?;
    let results = Obj::new()
        .set("tilted", nums(tilted.as_slice()))
        .set("free_energy", ctx.units.nat(free_energy(&mu, &p)?));
    Ok(Report::plain(results, Obj::new()))
}

fn contract(ctx: &Context) -> Result<Report, Failure> {
    let u = ctx.units;
    let c = ctx.spec.contraction(ctx.spec.solver_options(ctx.tol, ctx.max_iter))?;
    let x = ctx.spec.moment()?;
    let sol = c.solve_conjugate(&x)?;
    let phi = c.rate_phi(&x)?;
    let results = Obj::new()
        .set("alpha", vector(sol.alpha.as_vector()))
        .set("phi", u.nat(phi))
        .set("psi", u.nat(c.log_partition(&sol.alpha)?))
        .set("nu_star", nums(c.information_projection(&x)?.as_slice()))
        .set("covariance", matrix(&c.tilted_covariance(&sol.alpha)?))
        .set("metric", matrix(&c.moment_metric(&x)?));
    let diagnostics = Obj::new()
        .set("iterations", Value::from(sol.iterations))
        .set("residual", num(sol.residual))
        .set("tol", num(c.options().tol))
        .set("max_iter", Value::from(c.options().max_iter));
    Ok(Report::plain(results, diagnostics))
}

fn project(ctx: &Context) -> Result<Report, Failure> {
    let u = ctx.units;
    let c = ctx.spec.contraction(ctx.spec.solver_options(ctx.tol, ctx.max_iter))?;
    let nu = ctx.spec.frequency()?;
    let x = match &ctx.spec.moment {
        Some(_) => ctx.spec.moment()?,
        None => c.observable().moments_of(nu.as_slice())?,
    };
    let split = pythagorean_decompose(&c, &nu, &x)?;
    let results = Obj::new()
        .set("moment", vector(x.as_vector()))
        .set("nu_star", nums(split.projector.as_slice()))
        .set("total", u.nat(split.total))
        .set("projection_term", u.nat(split.projection_term))
        .set("residual_term", u.nat(split.residual_term));
    let diagnostics = Obj::new().set("defect", u.nat(split.defect()));
    Ok(Report::plain(results, diagnostics))
}

fn chain(ctx: &Context) -> Result<Report, Failure> {
    let u = ctx.units;
    let nu = ctx.spec.frequency()?;
    let p = ctx.spec.prior()?;
    let [n1, n2] = ctx.spec.layout.ok_or_else(|| Failure::spec("MISSING_FIELD", "spec needs `layout` for this command"))?;
    let split = entropy_chain(&nu, &p, ProductStateLayout::new(n1, n2)?)?;
    let total = kl_divergence(&nu, &p)?;
    let results = Obj::new()
        .set("total", u.nat(total))
        .set("marginal_term", u.nat(split.marginal_term))
        .set("conditional_term", u.nat(split.weighted_conditional_term));
    let diagnostics =
        Obj::new().set("defect", u.nat(total - split.marginal_term - split.weighted_conditional_term));
    Ok(Report::plain(results, diagnostics))
}

fn vertices(ctx: &Context) -> Result<Report, Failure> {
    let obs = ctx.spec.observable()?;
    let x = ctx.spec.moment()?;
    let set = enumerate_vertices(&obs, &x)?;
    let (k, n) = (obs.dim(), obs.states());
    let results = Obj::new()
        .set("count", Value::from(set.len()))
        .set("dimension", Value::from(n - k - 1))
        .set("vertices", Value::Array(set.iter().map(vector).collect()));
    let max_residual = set
        .iter()
        .map(|v| {
            let m = obs.matrix() * v - x.as_vector();
            m.amax().max((v.sum() - 1.0).abs())
        })
        .fold(0.0, f64::max);
    Ok(Report {
        results: results.build(),
        diagnostics: Obj::new().set("max_constraint_residual", num(max_residual)).build(),
        table: Some("vertices"),
    })
}

fn chart(ctx: &Context) -> Result<Report, Failure> {
    let (spec, u) = (ctx.spec, ctx.units);
    let c = spec.contraction(spec.solver_options(ctx.tol, ctx.max_iter))?;
    let x = spec.moment()?;
    let (k, n) = (c.observable().dim(), c.observable().states());
    let set = enumerate_vertices(c.observable(), &x)?;
    let indices = match &spec.chart {
        Some(idx) => idx.clone(),
        None => set.covering_subset(n - k, 100_000).ok_or_else(|| Failure {
            code: "NO_CHART".into(),
            message: "no linearly independent vertex subset covers every state; supply `chart`".into(),
            exit: 2,
        })?,
    };
    let columns = indices
        .iter()
        .map(|&i| {
            set.get(i).cloned().ok_or_else(|| {
                Failure::spec("SPEC_INCONSISTENT", format!("chart index {i} out of range for {} vertices", set.len()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let chart = build_chart(c.observable(), &x, &columns)?;
    let geom = ChartGeometry::new(FiberPolytope::new(c, x)?, chart)?;

    let eta_raw = spec.eta.as_ref().ok_or_else(|| Failure::spec("MISSING_FIELD", "spec needs `eta` for this command"))?;
    let eta = MixtureCoordinate::new(eta_raw.clone())?;
    let chi = geom.chart_conjugate(&eta)?;
    let mut results = Obj::new()
        .set("chart", Value::from(indices.clone()))
        .set("q", matrix(geom.chart().matrix()))
        .set("rate_phi", u.nat(geom.fiber().rate()))
        .set("point", nums(geom.push_forward(&eta)?.as_slice()))
        .set("chart_entropy", u.nat(geom.chart_entropy(&eta)?))
        .set("chi", vector(chi.as_vector()))
        .set("chart_free_energy", u.nat(geom.chart_free_energy(&chi)?));
    let mut diagnostics = Obj::new().set("fenchel_young_gap", u.nat(geom.fenchel_young_gap(&eta, &chi)?));
    if let Some(eta2) = &spec.eta2 {
        let eta2 = MixtureCoordinate::new(eta2.clone())?;
        let d = geom.chart_divergence(&eta, &eta2)?;
        let kl = kl_divergence(&geom.push_forward(&eta)?, &geom.push_forward(&eta2)?.to_prior())?;
        results.put("chart_divergence", u.nat(d));
        diagnostics.put("divergence_minus_kl", u.nat(d - kl));
    }
    if let Some(chi_in) = &spec.chi {
        let chi_in = ChartEnergy::new(chi_in.clone())?;
        results.put("free_energy_at_chi", u.nat(geom.chart_free_energy(&chi_in)?));
    }
    Ok(Report::plain(results, diagnostics))
}

fn markov(ctx: &Context) -> Result<Report, Failure> {
    let (spec, u) = (ctx.spec, ctx.units);
    let kernel = spec.kernel()?;
    let n = kernel.states();
    let tilt_m = spec.tilt_matrix(n)?;
    let eigen = principal_eigen(&tilt_m, &kernel)?;
    let gradient = markov_gradient(&tilt_m, &kernel)?;
    let f2 = eigen.value.ln();
    let mut results = Obj::new()
        .set("free_energy", u.nat(f2))
        .set("eigenvalue", num(eigen.value))
        .set("left_eigenvector", nums(&eigen.left))
        .set("right_eigenvector", nums(&eigen.right))
        .set("gradient", matrix(gradient.matrix()))
        .set("stationary", nums(kernel.stationary()?.as_slice()));
    let observed = match (spec.pairs()?, &spec.sequence) {
        (Some(p), _) => Some(p),
        (None, Some(seq)) => Some(pair_frequency_from_sequence(seq, n)?),
        (None, None) => None,
    };
    if let Some(pairs) = observed {
        results.put("pairs", matrix(pairs.matrix()));
        results.put("pair_rate", u.nat(pair_rate(&pairs, &kernel)?));
    }
    let gap = pair_rate(&gradient, &kernel)? + f2 - frobenius(&gradient, &tilt_m)?;
    let diagnostics = Obj::new()
        .set("iterations", Value::from(eigen.iterations))
        .set("fenchel_young_gap", u.nat(gap));
    Ok(Report::plain(results, diagnostics))
}

fn verify(ctx: &Context) -> Result<Report, Failure> {
    let (spec, u) = (ctx.spec, ctx.units);
    let v = spec.verify.as_ref().ok_or_else(|| Failure::spec("MISSING_FIELD", "spec needs `verify` for this command"))?;
    let p = spec.prior()?;
    let target = match v.target {
        TargetKind::Frequency => Target::Frequency { center: v.center.clone(), radius: v.radius },
        TargetKind::Moment => Target::Moment {
            observable: spec.observable()?,
            center: MomentPoint::new(v.center.clone())?,
            radius: v.radius,
        },
    };
    let seed = ctx.seed.or(spec.seed).unwrap_or(0);
    let mut sample = SampleSpec::new(p.clone(), v.sizes.clone(), v.replicas, seed, target.clone())?;
    if v.serial {
        sample = sample.serial();
    }
    let estimate = estimate_rate(&sample)?;
    let rows: Vec<Value> = estimate
        .rows
        .iter()
        .map(|row| {
            let exact = if v.exact { exact_ball_probability(&p, row.size, &target).ok() } else { None };
            Obj::new()
                .set("size", Value::from(row.size))
                .set("hits", Value::from(row.hits))
                .set("replicas", Value::from(row.replicas))
                .set("probability", num(row.probability))
                .set("wilson_low", num(row.wilson_low))
                .set("wilson_high", num(row.wilson_high))
                .set("rate", row.rate.map_or(Value::Null, |r| u.nat(r)))
                .set("rate_low", u.nat(row.rate_low))
                .set("rate_high", row.rate_high.map_or(Value::Null, |r| u.nat(r)))
                .set("insufficient_hits", Value::from(row.insufficient_hits))
                .set("exact_probability", exact.map_or(Value::Null, num))
                .set(
                    "exact_rate",
                    exact.filter(|q| *q > 0.0).map_or(Value::Null, |q| u.nat(-q.ln() / row.size as f64)),
                )
                .build()
        })
        .collect();
    let results = Obj::new()
        .set("analytic_rate", u.nat(estimate.analytic_rate))
        .set("center_rate", u.nat(estimate.center_rate))
        .set("ladder", Value::Array(rows));
    let diagnostics = Obj::new()
        .set("seed", Value::from(seed))
        .set("parallel", Value::from(!v.serial));
    Ok(Report { results: results.build(), diagnostics: diagnostics.build(), table: Some("ladder") })
}
