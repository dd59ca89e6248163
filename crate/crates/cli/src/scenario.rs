//! JSON scenario files.
//!
//! ```json
//! {
//!   "graph": {"type": "random", "n": 5, "p": 0.6, "seed": 3},
//!   "phi": {"family": "algebraic", "kappa": 1.0, "s": 0.5},
//!   "zeta": {"family": "exponential", "kappa": 1.0, "ell": 5.0},
//!   "initial": {"type": "random", "seed": 9, "dim": 2, "position_box": 0.5,
//!               "velocity_scale": 1e-4, "temperature_range": [1.0, 1.0001]},
//!   "mode": "continuous",
//!   "numerics": {"h": 0.01, "t_end": 200.0, "sample_every": 100},
//!   "certificate": {"x_inf": {"start": 0.6, "stop": 2.0, "count": 15},
//!                   "delta": [0.5, 1.0, 2.0]}
//! }
//! ```
//!
//! Edges are `[source, target]` pairs: `[j, i]` means agent `j` transmits
//! to agent `i`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use tcs_core::dynamics::{EnsembleState, ModelSpec};
use tcs_core::{CommKernel, Digraph};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSpec,
    pub phi: Option<KernelSpec>,
    pub zeta: Option<KernelSpec>,
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub mode: RunMode,
    pub numerics: Option<Numerics>,
    pub certificate: Option<CertificateSpec>,
    /// Used when `--out` is not given.
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Edges { n: usize, edges: Vec<[usize; 2]> },
    Complete { n: usize },
    Cycle { n: usize },
    Path { n: usize },
    Random { n: usize, p: f64, seed: u64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Constant { kappa: f64 },
    Algebraic { kappa: f64, s: f64 },
    Exponential { kappa: f64, ell: f64 },
    Tabulated { table: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Explicit {
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
        temperatures: Vec<f64>,
    },
    /// Positions uniform in `[0, position_box]^dim`, velocity components
    /// uniform in `[-velocity_scale, velocity_scale]`, temperatures uniform
    /// in `temperature_range`.
    Random {
        seed: u64,
        dim: usize,
        position_box: f64,
        velocity_scale: f64,
        temperature_range: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub h: f64,
    pub t_end: Option<f64>,
    pub n_steps: Option<usize>,
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

/// A single value, an explicit list, or `count` evenly spaced points
/// (geometrically spaced with `"spacing": "log"`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Value(f64),
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CountGrid {
    Value(usize),
    List(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub x_inf: Grid,
    pub delta: Option<Grid>,
    pub n0: Option<CountGrid>,
    /// Step sizes for `limit-check`.
    pub limit_h: Option<Vec<f64>>,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let out = match self {
            Grid::Value(v) => vec![*v],
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, count, spacing } => {
                if *count == 0 {
                    return Err(CliError::Invalid("grid count must be >= 1".into()));
                }
                let (a, b) = match spacing {
                    Spacing::Linear => (*start, *stop),
                    Spacing::Log => {
                        if !(*start > 0.0 && *stop > 0.0) {
                            return Err(CliError::Invalid("log-spaced grid needs positive bounds".into()));
                        }
                        (start.ln(), stop.ln())
                    }
                };
                (0..*count)
                    .map(|k| {
                        let u = if *count == 1 { a } else { a + (b - a) * k as f64 / (*count - 1) as f64 };
                        match spacing {
                            Spacing::Linear => u,
                            Spacing::Log => u.exp(),
                        }
                    })
                    .collect()
            }
        };
        if out.is_empty() {
            return Err(CliError::Invalid("empty grid".into()));
        }
        Ok(out)
    }
}

impl CountGrid {
    pub fn values(&self) -> Result<Vec<usize>> {
        let out = match self {
            CountGrid::Value(v) => vec![*v],
            CountGrid::List(v) => v.clone(),
        };
        if out.is_empty() {
            return Err(CliError::Invalid("empty n0 grid".into()));
        }
        Ok(out)
    }
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_owned(), source })?;
    parse(&text).map_err(|e| match e {
        CliError::Parse { field, message, .. } => CliError::Parse { path: path.to_owned(), field, message },
        other => other,
    })
}

pub fn parse(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: "<scenario>".into(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl Scenario {
    /// Replaces every seed in the scenario.
    pub fn override_seed(&mut self, seed: u64) {
        if let GraphSpec::Random { seed: s, .. } = &mut self.graph {
            *s = seed;
        }
        if let Some(InitialSpec::Random { seed: s, .. }) = &mut self.initial {
            *s = seed;
        }
    }

    pub fn build_graph(&self) -> Result<Digraph> {
        let g = match &self.graph {
            GraphSpec::Edges { n, edges } => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Digraph::from_edge_list(*n, &pairs)?
            }
            GraphSpec::Complete { n } => Digraph::complete(*n)?,
            GraphSpec::Cycle { n } => Digraph::cycle(*n)?,
            GraphSpec::Path { n } => Digraph::path(*n)?,
            GraphSpec::Random { n, p, seed } => Digraph::random(*n, *p, &mut ChaCha8Rng::seed_from_u64(*seed))?,
        };
        Ok(g)
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        let phi = required(&self.phi, "phi")?.build()?;
        let zeta = required(&self.zeta, "zeta")?.build()?;
        Ok(ModelSpec::new(self.build_graph()?, phi, zeta)?)
    }

    pub fn build_initial(&self, n: usize) -> Result<EnsembleState> {
        required(&self.initial, "initial")?.build(n)
    }

    pub fn numerics(&self) -> Result<&Numerics> {
        required(&self.numerics, "numerics")
    }

    pub fn certificate(&self) -> Result<&CertificateSpec> {
        required(&self.certificate, "certificate")
    }
}

fn required<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| CliError::Invalid(format!("missing field `{name}`")))
}

impl KernelSpec {
    pub fn build(&self) -> Result<CommKernel> {
        let k = match self {
            KernelSpec::Constant { kappa } => CommKernel::constant(*kappa)?,
            KernelSpec::Algebraic { kappa, s } => CommKernel::algebraic(*kappa, *s)?,
            KernelSpec::Exponential { kappa, ell } => CommKernel::exponential(*kappa, *ell)?,
            KernelSpec::Tabulated { table } => CommKernel::tabulated(table.iter().map(|p| (p[0], p[1])).collect())?,
        };
        Ok(k)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(CliError::Invalid(format!("{what} has {} rows, the graph has {n} agents", rows.len())));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(CliError::Invalid(format!("{what} rows must share a positive dimension")));
    }
    Ok(DMatrix::from_fn(n, d, |i, k| rows[i][k]))
}

impl InitialSpec {
    pub fn build(&self, n: usize) -> Result<EnsembleState> {
        match self {
            InitialSpec::Explicit { positions, velocities, temperatures } => {
                let x = rows_to_matrix(positions, n, "positions")?;
                let v = rows_to_matrix(velocities, n, "velocities")?;
                if x.ncols() != v.ncols() {
                    return Err(CliError::Invalid("positions and velocities differ in dimension".into()));
                }
                if temperatures.len() != n {
                    return Err(CliError::Invalid(format!(
                        "{} temperatures for {n} agents",
                        temperatures.len()
                    )));
                }
                Ok(EnsembleState::from_temperatures(0.0, x, v, temperatures)?)
            }
            InitialSpec::Random { seed, dim, position_box, velocity_scale, temperature_range } => {
                let [lo, hi] = *temperature_range;
                if *dim == 0 {
                    return Err(CliError::Invalid("dim must be >= 1".into()));
                }
                if !(position_box.is_finite() && *position_box >= 0.0) {
                    return Err(CliError::Invalid("position_box must be finite and >= 0".into()));
                }
                if !(velocity_scale.is_finite() && *velocity_scale >= 0.0) {
                    return Err(CliError::Invalid("velocity_scale must be finite and >= 0".into()));
                }
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(CliError::Invalid("temperature_range must satisfy 0 < min <= max".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(1);
                let mut uniform = |a: f64, b: f64| if b > a { rng.random_range(a..=b) } else { a };
                let x = DMatrix::from_fn(n, *dim, |_, _| uniform(0.0, *position_box));
                let v = DMatrix::from_fn(n, *dim, |_, _| uniform(-velocity_scale, *velocity_scale));
                let theta: Vec<f64> = (0..n).map(|_| uniform(lo, hi)).collect();
                Ok(EnsembleState::from_temperatures(0.0, x, v, &theta)?)
            }
        }
    }
}
