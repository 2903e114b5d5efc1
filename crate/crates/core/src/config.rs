//! JSON configuration.
//!
//! Complex numbers are written `[re, im]`; a plain number is a real value.
//! Sampled coefficients are a single value (constant) or an array of values
//! on a uniform grid of `[0, 1]`. An array of exactly two plain numbers is
//! read as one complex constant, so complex sampled arrays of length two
//! must spell out their entries as pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::delay::DelaySpec;
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, C64};
use crate::lti::{CouplingMatrix, LtiSystem};
use crate::netsim::{AnalysisOptions, NetworkSpec, SimOptions, Subsystem};
use crate::parabolic::{Boundary, ParabolicSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    pub fn value(self) -> C64 {
        match self {
            Complex::Real(x) => c(x, 0.0),
            Complex::Pair([re, im]) => c(re, im),
        }
    }
}

impl Default for Complex {
    fn default() -> Self {
        Complex::Real(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sampled<T> {
    Constant(T),
    Samples(Vec<T>),
}

impl<T: Copy> Sampled<T> {
    fn values(&self) -> Vec<T> {
        match self {
            Sampled::Constant(x) => vec![*x],
            Sampled::Samples(v) => v.clone(),
        }
    }
}

fn zero_sampled() -> Sampled<Complex> {
    Sampled::Constant(Complex::Real(0.0))
}

fn one_sampled() -> Sampled<Complex> {
    Sampled::Constant(Complex::Real(1.0))
}

pub type MatrixConfig = Vec<Vec<Complex>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryConfig {
    Dirichlet,
    Neumann {
        #[serde(default)]
        kappa_left: Complex,
        #[serde(default)]
        kappa_right: Complex,
    },
    NeumannInput {
        #[serde(default)]
        kappa_left: Complex,
        #[serde(default)]
        kappa_right: Complex,
        m_left: Complex,
        m_right: Complex,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Lti {
        a: MatrixConfig,
        b: MatrixConfig,
        c: MatrixConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<MatrixConfig>,
    },
    Parabolic {
        a: Sampled<f64>,
        #[serde(default = "zero_sampled")]
        r0: Sampled<Complex>,
        #[serde(default = "zero_sampled")]
        r1: Sampled<Complex>,
        #[serde(default = "one_sampled")]
        b: Sampled<Complex>,
        boundary: BoundaryConfig,
        n_cells: usize,
    },
    Delay {
        delays: Vec<f64>,
        a_mats: Vec<MatrixConfig>,
        b_mats: Vec<MatrixConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    /// Diffusive weights `sigma[j][i]`.
    Weights(Vec<Vec<f64>>),
    /// Coupling matrix `L` itself.
    Matrix(MatrixConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Sync,
    Stability,
}

fn default_margin() -> f64 {
    1e-6
}
fn default_cells() -> usize {
    200
}
fn default_rate_margin() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub criterion: Criterion,
    /// Test the state instead of the output.
    #[serde(default)]
    pub state: bool,
    /// Grid cells per period for delay systems.
    #[serde(default = "default_cells")]
    pub delay_cells: usize,
    /// Simulated decay counts as synchronization below `-rate_margin`.
    #[serde(default = "default_rate_margin")]
    pub rate_margin: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            margin: default_margin(),
            criterion: Criterion::Sync,
            state: false,
            delay_cells: default_cells(),
            rate_margin: default_rate_margin(),
        }
    }
}

fn default_sample_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemConfig,
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

fn matrix(rows: &MatrixConfig, what: &str) -> Result<CMatrix> {
    let r = rows.len();
    let k = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != k) {
        return Err(Error::Config(format!("{what}: rows have different lengths")));
    }
    let m = CMatrix::from_fn(r, k, |i, j| rows[i][j].value());
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Config(format!("{what}: non-finite entry")));
    }
    Ok(m)
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn subsystem(&self) -> Result<Subsystem> {
        Ok(match &self.system {
            SystemConfig::Lti { a, b, c: cm, d } => {
                let a = matrix(a, "a")?;
                let b = matrix(b, "b")?;
                let cm = matrix(cm, "c")?;
                let d = match d {
                    Some(d) => matrix(d, "d")?,
                    None => CMatrix::zeros(cm.nrows(), b.ncols()),
                };
                Subsystem::Lti(LtiSystem::new(a, b, cm, d)?)
            }
            SystemConfig::Parabolic { a, r0, r1, b, boundary, n_cells } => {
                let cx = |s: &Sampled<Complex>| s.values().into_iter().map(Complex::value).collect::<Vec<_>>();
                let boundary = match boundary {
                    BoundaryConfig::Dirichlet => Boundary::Dirichlet,
                    BoundaryConfig::Neumann { kappa_left, kappa_right } => Boundary::Neumann {
                        kappa_left: kappa_left.value(),
                        kappa_right: kappa_right.value(),
                    },
                    BoundaryConfig::NeumannInput { kappa_left, kappa_right, m_left, m_right } => {
                        Boundary::NeumannInput {
                            kappa_left: kappa_left.value(),
                            kappa_right: kappa_right.value(),
                            m_left: m_left.value(),
                            m_right: m_right.value(),
                        }
                    }
                };
                let spec = ParabolicSpec {
                    a: a.values(),
                    r0: cx(r0),
                    r1: cx(r1),
                    b: cx(b),
                    boundary,
                };
                spec.validate()?;
                Subsystem::Parabolic { spec, n_cells: *n_cells }
            }
            SystemConfig::Delay { delays, a_mats, b_mats } => {
                let a = a_mats
                    .iter()
                    .enumerate()
                    .map(|(j, m)| matrix(m, &format!("a_mats[{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                let b = b_mats
                    .iter()
                    .enumerate()
                    .map(|(j, m)| matrix(m, &format!("b_mats[{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                Subsystem::Delay(DelaySpec::new(delays.clone(), a, b)?)
            }
        })
    }

    pub fn coupling_matrix(&self) -> Result<CouplingMatrix> {
        match &self.coupling {
            CouplingConfig::Weights(w) => {
                let n = w.len();
                if w.iter().any(|row| row.len() != n) {
                    return Err(Error::Config("coupling weights must be square".into()));
                }
                CouplingMatrix::diffusive(DMatrix::from_fn(n, n, |i, j| w[i][j]))
            }
            CouplingConfig::Matrix(m) => {
                let l = matrix(m, "coupling matrix")?;
                if !l.is_square() {
                    return Err(Error::Config("coupling matrix must be square".into()));
                }
                CouplingMatrix::raw(l)
            }
        }
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.subsystem()?, self.coupling_matrix()?)
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            margin: self.analysis.margin,
            delay_cells: self.analysis.delay_cells,
            state: self.analysis.state,
        }
    }

    pub fn sim_options(&self) -> Result<(SimOptions, u64)> {
        let s = self
            .simulation
            .as_ref()
            .ok_or_else(|| Error::Config("missing simulation section".into()))?;
        Ok((
            SimOptions {
                horizon: s.horizon,
                dt: s.dt,
                sample_every: s.sample_every,
            },
            s.seed,
        ))
    }
}

/// Sets the number at a dot-separated path (`system.a_mats.1.0.0`). A path
/// ending at a `[re, im]` pair sets the real part.
pub fn set_param(config: &Value, path: &str, value: f64) -> Result<Value> {
    if !value.is_finite() {
        return Err(Error::Config(format!("parameter value {value} is not finite")));
    }
    let mut root = config.clone();
    let mut node = &mut root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("parameter path {path:?} does not exist at {key:?}")))?;
    }
    let number = serde_json::Number::from_f64(value).expect("finite");
    match node {
        Value::Number(_) => *node = Value::Number(number),
        Value::Array(pair) if pair.len() == 2 && pair.iter().all(Value::is_number) => {
            pair[0] = Value::Number(number);
        }
        _ => return Err(Error::Config(format!("parameter path {path:?} does not address a number"))),
    }
    Ok(root)
}
