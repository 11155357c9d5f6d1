//! Queue parameters and the level-dependent QBD generator blocks.
//!
//! The state is `(i, n)` with `i` customers in the system (servers plus
//! buffer, `0..=K`) and `n` customers in the orbit. The orbit occupancy is
//! the QBD level; every level has `K + 1` phases.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Which asymptotic regime a parameter set falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Some blocked retrial can leave the system: `(1 - r) + r(1 - q) > 0`.
    Nonpersistent,
    /// `q = r = 1`: orbit customers only leave through service.
    Persistent,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Nonpersistent => f.write_str("nonpersistent"),
            Regime::Persistent => f.write_str("persistent"),
        }
    }
}

/// Parameters of the M/M/c/K retrial queue with two kinds of abandonment.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Primary arrival rate.
    pub lambda: f64,
    /// Per-customer orbit departure rate.
    pub mu: f64,
    /// Probability that a blocked primary customer joins the orbit.
    pub p: f64,
    /// Probability that a blocked retrial customer rejoins the orbit.
    pub q: f64,
    /// Probability that a customer leaving the orbit actually retries.
    pub r: f64,
    /// Number of servers `c`.
    pub servers: usize,
    /// System capacity `K` (servers plus waiting room).
    pub capacity: usize,
    /// Total service rates `nu[0..=K]` indexed by the number in system.
    pub nu: Vec<f64>,
}

impl ModelParams {
    /// Model with `nu_i = min(i, c) * rate`, the usual multiserver service law.
    #[allow(clippy::too_many_arguments)]
    pub fn multiserver(
        lambda: f64,
        mu: f64,
        p: f64,
        q: f64,
        r: f64,
        servers: usize,
        capacity: usize,
        rate: f64,
    ) -> Self {
        let nu = (0..=capacity)
            .map(|i| i.min(servers) as f64 * rate)
            .collect();
        Self {
            lambda,
            mu,
            p,
            q,
            r,
            servers,
            capacity,
            nu,
        }
    }

    pub fn p_bar(&self) -> f64 {
        1.0 - self.p
    }

    pub fn q_bar(&self) -> f64 {
        1.0 - self.q
    }

    pub fn r_bar(&self) -> f64 {
        1.0 - self.r
    }

    /// `(1 - r) + r(1 - q)`: probability that an orbit departure made while
    /// the system is full removes the customer for good.
    pub fn blocked_exit_prob(&self) -> f64 {
        self.r_bar() + self.r * self.q_bar()
    }

    /// `nu_K`, the total service rate when the system is full.
    pub fn nu_full(&self) -> f64 {
        self.nu[self.capacity]
    }

    /// Rate at which blocked primary customers enter the orbit.
    pub fn orbit_inflow(&self) -> f64 {
        self.lambda * self.p
    }

    pub fn regime(&self) -> Regime {
        if self.q == 1.0 && self.r == 1.0 {
            Regime::Persistent
        } else {
            Regime::Nonpersistent
        }
    }

    /// Checks every parameter invariant and reports all violations at once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            violations.push(Violation::NonPositive("lambda"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            violations.push(Violation::NonPositive("mu"));
        }
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r)] {
            if !(0.0..=1.0).contains(&v) {
                violations.push(Violation::ProbabilityRange(name));
            }
        }
        if self.servers == 0 {
            violations.push(Violation::NoServers);
        }
        if self.capacity < self.servers {
            violations.push(Violation::CapacityBelowServers);
        }
        if self.nu.len() != self.capacity + 1 {
            violations.push(Violation::ServiceLength {
                expected: self.capacity + 1,
                found: self.nu.len(),
            });
        } else {
            if self.nu.iter().any(|v| !v.is_finite()) {
                violations.push(Violation::ServiceNotFinite);
            }
            if self.nu[0] != 0.0 {
                violations.push(Violation::ServiceAtZero);
            }
            if self.nu.windows(2).any(|w| w[1] < w[0]) {
                violations.push(Violation::ServiceDecreasing);
            }
        }
        ValidationReport { violations }
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report))
        }
    }

    /// Ergodicity of the chain. Any abandonment from the orbit makes the
    /// chain ergodic; in the persistent case it is ergodic iff
    /// `lambda * p / nu_K < 1`.
    pub fn check_ergodicity(&self) -> Result<Ergodicity> {
        self.ensure_valid()?;
        let nu_k = self.nu_full();
        let persistent = self.regime() == Regime::Persistent;
        if persistent && nu_k == 0.0 {
            return Err(Error::UndefinedRho);
        }
        let rho = if nu_k == 0.0 {
            f64::INFINITY
        } else {
            self.orbit_inflow() / nu_k
        };
        Ok(Ergodicity {
            ergodic: !persistent || rho < 1.0,
            rho,
        })
    }

    pub(crate) fn ensure_ergodic(&self) -> Result<f64> {
        let e = self.check_ergodicity()?;
        if e.ergodic {
            Ok(e.rho)
        } else {
            Err(Error::NonErgodic { rho: e.rho })
        }
    }

    /// Generator blocks at orbit level `n`.
    pub fn blocks(&self, n: usize) -> Result<GeneratorBlocks> {
        self.ensure_valid()?;
        Ok(self.blocks_unchecked(n))
    }

    pub(crate) fn blocks_unchecked(&self, n: usize) -> GeneratorBlocks {
        let k = self.capacity;
        let dim = k + 1;
        let nm = n as f64 * self.mu;
        let mut q0 = DMatrix::zeros(dim, dim);
        let mut q1 = DMatrix::zeros(dim, dim);
        let mut q2 = DMatrix::zeros(dim, dim);
        q0[(k, k)] = self.orbit_inflow();
        for i in 0..dim {
            if i > 0 {
                q1[(i, i - 1)] = self.nu[i];
            }
            if i < k {
                q1[(i, i + 1)] = self.lambda;
                q1[(i, i)] = self.diagonal(n, i);
                q2[(i, i)] = nm * self.r_bar();
                q2[(i, i + 1)] = nm * self.r;
            }
        }
        q1[(k, k)] = self.diagonal(n, k);
        q2[(k, k)] = nm * self.blocked_exit_prob();
        GeneratorBlocks {
            level: n,
            q0,
            q1,
            q2,
        }
    }

    /// Diagonal entry `b_i` of the within-level block at level `n`.
    pub fn diagonal(&self, n: usize, i: usize) -> f64 {
        let nm = n as f64 * self.mu;
        if i < self.capacity {
            -(self.lambda + nm + self.nu[i])
        } else {
            -(self.orbit_inflow() + nm * self.blocked_exit_prob() + self.nu[i])
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ergodicity {
    pub ergodic: bool,
    /// `lambda * p / nu_K`; infinite when `nu_K = 0`.
    pub rho: f64,
}

/// The three `(K+1) x (K+1)` blocks of one level of the generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBlocks {
    pub level: usize,
    /// Level `n -> n + 1`.
    pub q0: DMatrix<f64>,
    /// Within level `n`.
    pub q1: DMatrix<f64>,
    /// Level `n -> n - 1`.
    pub q2: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositive(&'static str),
    ProbabilityRange(&'static str),
    NoServers,
    CapacityBelowServers,
    ServiceLength { expected: usize, found: usize },
    ServiceNotFinite,
    ServiceAtZero,
    ServiceDecreasing,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositive(name) => write!(f, "{name} must be positive and finite"),
            Violation::ProbabilityRange(name) => write!(f, "{name} out of [0,1]"),
            Violation::NoServers => f.write_str("at least one server is required"),
            Violation::CapacityBelowServers => f.write_str("capacity K must be at least c"),
            Violation::ServiceLength { expected, found } => {
                write!(f, "nu must have K+1 = {expected} entries, found {found}")
            }
            Violation::ServiceNotFinite => f.write_str("service rates must be finite"),
            Violation::ServiceAtZero => f.write_str("ν₀ must be 0"),
            Violation::ServiceDecreasing => f.write_str("service rates must be nondecreasing"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("pass");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&msgs.join("; "))
    }
}
