//! Problem spec files: one JSON document per run, matrices as row-major
//! lists of lists.

use ldgeom_core::contraction::{Contraction, MomentPoint, ObservableMatrix, SolverOptions};
use ldgeom_core::markov::{MarkovKernel, PairFrequency, TiltMatrix};
use ldgeom_core::measures::{EmpiricalFrequency, EnergyVector, ProbabilityVector};
use serde::Deserialize;

use crate::failure::Failure;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// State count; checked against every vector and matrix when present.
    pub n: Option<usize>,
    pub prior: Option<Vec<f64>>,
    pub kernel: Option<Vec<Vec<f64>>>,
    pub observable: Option<Vec<Vec<f64>>>,
    pub frequency: Option<Vec<f64>>,
    pub moment: Option<Vec<f64>>,
    pub energy: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub eta2: Option<Vec<f64>>,
    pub chi: Option<Vec<f64>>,
    /// Vertex indices (into the enumerated vertex list) forming the chart.
    pub chart: Option<Vec<usize>>,
    pub tilt: Option<Vec<Vec<f64>>>,
    pub pairs: Option<Vec<Vec<f64>>>,
    /// 0-based state sequence; its cyclic pair frequency is evaluated.
    pub sequence: Option<Vec<usize>>,
    /// `[n1, n2]` row-major product layout for `chain`.
    pub layout: Option<[usize; 2]>,
    /// Sample count for total information gains.
    pub samples: Option<u64>,
    pub solver: Option<SolverSpec>,
    pub seed: Option<u64>,
    pub verify: Option<VerifySpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Frequency,
    Moment,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub target: TargetKind,
    pub center: Vec<f64>,
    pub radius: f64,
    pub sizes: Vec<usize>,
    pub replicas: u64,
    #[serde(default)]
    pub serial: bool,
    /// Also report exact ball probabilities where enumeration is feasible.
    #[serde(default = "default_true")]
    pub exact: bool,
}

fn default_true() -> bool {
    true
}

fn missing(field: &str) -> Failure {
    Failure::spec("MISSING_FIELD", format!("spec needs `{field}` for this command"))
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<nalgebra::DMatrix<f64>, Failure> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Failure::spec("SPEC_INCONSISTENT", format!("`{field}` is empty")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Failure::spec(
            "SPEC_INCONSISTENT",
            format!("`{field}` row {i} has {} entries, expected {c}", rows[i].len()),
        ));
    }
    Ok(nalgebra::DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::spec("PARSE_ERROR", e.to_string()))
    }

    fn check_n(&self, field: &str, len: usize) -> Result<(), Failure> {
        match self.n {
            Some(n) if n != len => Err(Failure::spec(
                "SPEC_INCONSISTENT",
                format!("`{field}` has {len} states but n = {n}"),
            )),
            _ => Ok(()),
        }
    }

    /// State count implied by `n` or by the first sized field.
    pub fn states(&self) -> Option<usize> {
        self.n
            .or(self.prior.as_ref().map(Vec::len))
            .or(self.frequency.as_ref().map(Vec::len))
            .or(self.energy.as_ref().map(Vec::len))
            .or(self.observable.as_ref().and_then(|x| x.first()).map(Vec::len))
            .or(self.kernel.as_ref().map(Vec::len))
    }

    /// The prior, defaulting to uniform on the implied state count.
    pub fn prior(&self) -> Result<ProbabilityVector, Failure> {
        match &self.prior {
            Some(p) => {
                self.check_n("prior", p.len())?;
                Ok(ProbabilityVector::new(p.clone())?)
            }
            None => {
                let n = self.states().ok_or_else(|| missing("prior"))?;
                Ok(ProbabilityVector::uniform(n)?)
            }
        }
    }

    pub fn frequency(&self) -> Result<EmpiricalFrequency, Failure> {
        let nu = self.frequency.as_ref().ok_or_else(|| missing("frequency"))?;
        self.check_n("frequency", nu.len())?;
        Ok(EmpiricalFrequency::new(nu.clone())?)
    }

    pub fn energy(&self) -> Result<EnergyVector, Failure> {
        let mu = self.energy.as_ref().ok_or_else(|| missing("energy"))?;
        self.check_n("energy", mu.len())?;
        Ok(EnergyVector::new(mu.clone())?)
    }

    pub fn observable(&self) -> Result<ObservableMatrix, Failure> {
        let rows = self.observable.as_ref().ok_or_else(|| missing("observable"))?;
        let m = matrix(rows, "observable")?;
        self.check_n("observable", m.ncols())?;
        Ok(ObservableMatrix::new(m)?)
    }

    pub fn moment(&self) -> Result<MomentPoint, Failure> {
        let x = self.moment.as_ref().ok_or_else(|| missing("moment"))?;
        Ok(MomentPoint::new(x.clone())?)
    }

    pub fn solver_options(&self, tol: Option<f64>, max_iter: Option<usize>) -> SolverOptions {
        let defaults = SolverOptions::default();
        let spec = self.solver.clone().unwrap_or_default();
        SolverOptions {
            tol: tol.or(spec.tol).unwrap_or(defaults.tol),
            max_iter: max_iter.or(spec.max_iter).unwrap_or(defaults.max_iter),
        }
    }

    pub fn contraction(&self, options: SolverOptions) -> Result<Contraction, Failure> {
        Ok(Contraction::new(self.observable()?, self.prior()?)?.with_options(options)?)
    }

    pub fn kernel(&self) -> Result<MarkovKernel, Failure> {
        let rows = self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
        let m = matrix(rows, "kernel")?;
        self.check_n("kernel", m.nrows())?;
        Ok(MarkovKernel::new(m)?)
    }

    pub fn tilt_matrix(&self, n: usize) -> Result<TiltMatrix, Failure> {
        match &self.tilt {
            Some(rows) => Ok(TiltMatrix::new(matrix(rows, "tilt")?)?),
            None => Ok(TiltMatrix::zeros(n)),
        }
    }

    pub fn pairs(&self) -> Result<Option<PairFrequency>, Failure> {
        match &self.pairs {
            Some(rows) => Ok(Some(PairFrequency::new(matrix(rows, "pairs")?)?)),
            None => Ok(None),
        }
    }
}
