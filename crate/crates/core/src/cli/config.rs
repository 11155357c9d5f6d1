//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! mu = 1.0
//! p = 0.7
//! q = 0.7
//! r = 0.5
//! servers = 5
//! capacity = 5
//! service_rate = 1.0          # or: nu = [0.0, 1.0, ...]
//! traffic = [0.1, 0.2, 0.3]   # or: lambda = 0.4
//!
//! [solver]
//! horizon = 100
//! tol = 1e-10
//! max_depth = 1048576
//!
//! [expansion]
//! orders = [1, 2, 3]
//!
//! [tail]
//! idle = [0, 5]
//! window = 100
//! last_level = 250
//!
//! [output]
//! path = "out.csv"
//! ```

use std::path::PathBuf;

use serde::Deserialize;

use crate::model::ModelParams;
use crate::rate_matrix::{DEFAULT_MAX_DEPTH, DEFAULT_TOL};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub expansion: ExpansionSection,
    #[serde(default)]
    pub tail: TailSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub lambda: Option<f64>,
    pub traffic: Option<Vec<f64>>,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub servers: usize,
    pub capacity: usize,
    pub nu: Option<Vec<f64>>,
    pub service_rate: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            tol: default_tol(),
            max_depth: default_max_depth(),
        }
    }
}

fn default_horizon() -> usize {
    100
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionSection {
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
}

impl Default for ExpansionSection {
    fn default() -> Self {
        Self {
            orders: default_orders(),
        }
    }
}

fn default_orders() -> Vec<usize> {
    vec![1, 2, 3]
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    pub idle: Option<Vec<usize>>,
    pub window: Option<usize>,
    pub last_level: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

/// One model in a sweep, tagged with its traffic intensity `lambda / nu_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub rho_star: f64,
    pub params: ModelParams,
}

impl ModelSection {
    fn service_rates(&self) -> Result<Vec<f64>, String> {
        match (&self.nu, self.service_rate) {
            (Some(_), Some(_)) => Err("[model] sets both nu and service_rate".into()),
            (None, None) => Err("[model] needs nu or service_rate".into()),
            (Some(nu), None) => Ok(nu.clone()),
            (None, Some(rate)) => Ok((0..=self.capacity)
                .map(|i| i.min(self.servers) as f64 * rate)
                .collect()),
        }
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>, String> {
        let nu = self.service_rates()?;
        let nu_k = nu.get(self.capacity).copied().unwrap_or(f64::NAN);
        let make = |lambda: f64, rho_star: f64| SweepPoint {
            rho_star,
            params: ModelParams {
                lambda,
                mu: self.mu,
                p: self.p,
                q: self.q,
                r: self.r,
                servers: self.servers,
                capacity: self.capacity,
                nu: nu.clone(),
            },
        };
        match (self.lambda, &self.traffic) {
            (Some(_), Some(_)) => Err("[model] sets both lambda and traffic".into()),
            (None, None) => Err("[model] needs lambda or traffic".into()),
            (Some(lambda), None) => Ok(vec![make(lambda, lambda / nu_k)]),
            (None, Some(list)) if list.is_empty() => Err("[model] traffic list is empty".into()),
            (None, Some(list)) => Ok(list.iter().map(|&t| make(t * nu_k, t)).collect()),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn check(&self) -> Result<(), String> {
        if self.solver.horizon < 1 {
            return Err("horizon must be at least 1".into());
        }
        if self.solver.tol.is_nan() || self.solver.tol <= 0.0 {
            return Err("tol must be positive".into());
        }
        if self.expansion.orders.is_empty() || self.expansion.orders.contains(&0) {
            return Err("orders must be a non-empty list of integers >= 1".into());
        }
        Ok(())
    }
}
