//! Taylor expansions of the rate-row entries in powers of `1/n`.
//!
//! Entries are indexed by the number of idle servers `k`, i.e. the entry
//! `r_{K-k}(n)`. In the nonpersistent regime
//!
//! ```text
//! r_{K-k}(n) = sum_{i>=1} (-1)^{i+1} gamma[k][i] n^{-(k+i)}
//! ```
//!
//! and in the persistent regime (`q = r = 1`)
//!
//! ```text
//! r_{K-k}(n) = sum_{i>=0} (-1)^i theta[k][i] n^{-(k+i)}.
//! ```
//!
//! Coefficients with `k > K` or with an order below the regime's first
//! order read as zero.

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};

/// Highest order whose coefficients are considered numerically trustworthy.
pub const MAX_SUPPORTED_ORDER: usize = 8;

const SATURATION_MAGNITUDE: f64 = 1e300;

/// Rising factorial `x (x+1) ... (x+n-1)`, with `(x)_0 = 1`.
pub fn pochhammer(x: f64, n: usize) -> f64 {
    (0..n).map(|j| x + j as f64).product()
}

fn factorial(n: usize) -> f64 {
    pochhammer(1.0, n)
}

/// Coefficient of `1/n^j` in `(1 + 1/n)^{-a}` without the sign, i.e.
/// `(a)_j / j!`.
fn binomial_series(a: f64, j: usize) -> f64 {
    pochhammer(a, j) / factorial(j)
}

fn sign(e: usize) -> f64 {
    if e.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Triangular table of expansion coefficients for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionTable {
    pub regime: Regime,
    pub max_order: usize,
    capacity: usize,
    coeffs: Vec<Vec<f64>>,
    saturated: Vec<Vec<bool>>,
}

impl ExpansionTable {
    fn new(regime: Regime, capacity: usize, max_order: usize) -> Self {
        Self {
            regime,
            max_order,
            capacity,
            coeffs: vec![vec![0.0; max_order + 1]; capacity + 1],
            saturated: vec![vec![false; max_order + 1]; capacity + 1],
        }
    }

    /// Lowest populated order: 1 for gamma, 0 for theta.
    pub fn min_order(&self) -> usize {
        match self.regime {
            Regime::Nonpersistent => 1,
            Regime::Persistent => 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Coefficient at idle count `k` and order `m`; zero outside the table.
    pub fn coeff(&self, k: usize, m: isize) -> f64 {
        if k > self.capacity || m < self.min_order() as isize || m > self.max_order as isize {
            return 0.0;
        }
        self.coeffs[k][m as usize]
    }

    pub fn is_saturated(&self, k: usize, m: usize) -> bool {
        k <= self.capacity && m <= self.max_order && self.saturated[k][m]
    }

    fn set(&mut self, k: usize, m: usize, value: f64) {
        self.coeffs[k][m] = value;
        self.saturated[k][m] =
            m > MAX_SUPPORTED_ORDER || !value.is_finite() || value.abs() > SATURATION_MAGNITUDE;
    }

    /// `(k, m, value, saturated)` for every populated entry, `k`-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64, bool)> + '_ {
        let lo = self.min_order();
        (0..=self.capacity).flat_map(move |k| {
            (lo..=self.max_order).map(move |m| (k, m, self.coeffs[k][m], self.saturated[k][m]))
        })
    }

    /// Truncated expansion of the whole rate row at level `n`, indexed by
    /// phase `i = K - k`. `terms` counts orders `min_order..=terms`.
    pub fn eval(&self, n: usize, terms: usize) -> Result<Vec<f64>> {
        if terms > self.max_order || terms < self.min_order() {
            return Err(Error::OutOfRange {
                what: "expansion terms",
                value: terms,
                allowed: format!("{}..={}", self.min_order(), self.max_order),
            });
        }
        if n == 0 {
            return Err(Error::OutOfRange {
                what: "level",
                value: 0,
                allowed: ">= 1".into(),
            });
        }
        let x = 1.0 / n as f64;
        let k_max = self.capacity;
        let mut row = vec![0.0; k_max + 1];
        for k in 0..=k_max {
            row[k_max - k] = (self.min_order()..=terms)
                .map(|i| {
                    let s = match self.regime {
                        Regime::Nonpersistent => sign(i + 1),
                        Regime::Persistent => sign(i),
                    };
                    s * self.coeffs[k][i] * x.powi((k + i) as i32)
                })
                .sum();
        }
        Ok(row)
    }
}

/// How the gamma coefficients of orders 2 and 3 are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GammaRecursion {
    /// Dedicated low-order recursions for orders 1..=3, general one above.
    #[default]
    Specialized,
    /// General recursion for every order above 1.
    General,
}

struct GammaCtx<'a> {
    p: &'a ModelParams,
    s: f64,
    t: ExpansionTable,
}

impl GammaCtx<'_> {
    fn g(&self, k: usize, m: isize) -> f64 {
        self.t.coeff(k, m)
    }

    fn nu(&self, i: usize) -> f64 {
        self.p.nu[i]
    }

    /// Coefficients of `(n+1) r_{K-k-1}(n+1)` without the shift factor.
    fn alpha(&self, k: usize, j: usize) -> f64 {
        (1..=j)
            .map(|i| {
                self.g(k + 1, i as isize) * binomial_series((k + i) as f64, j - i) * sign(j + 1)
            })
            .sum()
    }

    fn beta(&self, k: usize, j: usize) -> f64 {
        (1..=j + 1)
            .map(|i| {
                self.g(k, i as isize) * binomial_series((k + i - 1) as f64, j + 1 - i) * sign(j)
            })
            .sum()
    }

    fn phi(&self, k: usize, j: usize) -> f64 {
        let rb = self.p.r_bar();
        if j == 0 {
            rb * self.beta(k, 0)
        } else {
            self.p.r * self.alpha(k, j) + rb * self.beta(k, j)
        }
    }

    fn full_general(&self, m: usize) -> f64 {
        let k_max = self.p.capacity;
        (1..=k_max.min(m))
            .map(|k| self.g(k, (m - k) as isize) * sign(k + 1))
            .sum::<f64>()
            / self.s
    }

    fn idle_general(&self, k: usize, m: usize) -> f64 {
        let (lam, mu) = (self.p.lambda, self.p.mu);
        let k_max = self.p.capacity;
        let m_i = m as isize;
        let conv: f64 = (0..=m - 2)
            .map(|j| self.phi(k, j) * self.g(0, m_i - j as isize - 1) * sign(j + 1))
            .sum();
        self.nu(k_max - k + 1) / mu * self.g(k - 1, m_i)
            + lam / mu * self.g(k + 1, m_i - 2)
            + (lam + self.nu(k_max - k)) / mu * self.g(k, m_i - 1)
            + conv
    }

    fn idle_order1(&self, k: usize) -> f64 {
        self.nu(self.p.capacity - k + 1) / self.p.mu * self.g(k - 1, 1)
    }

    fn idle_order2(&self, k: usize) -> f64 {
        let (lam, mu, k_max) = (self.p.lambda, self.p.mu, self.p.capacity);
        let lead = self.p.orbit_inflow() * self.p.r_bar() / (mu * self.s);
        self.nu(k_max - k + 1) / mu * self.g(k - 1, 2)
            + ((lam + self.nu(k_max - k)) / mu - lead) * self.g(k, 1)
    }

    fn idle_order3(&self, k: usize) -> f64 {
        let (lam, mu, k_max) = (self.p.lambda, self.p.mu, self.p.capacity);
        let lp = self.p.orbit_inflow();
        let (r, rb, s) = (self.p.r, self.p.r_bar(), self.s);
        self.nu(k_max - k + 1) / mu * self.g(k - 1, 3)
            + (lam / mu + lp * r / (mu * s)) * self.g(k + 1, 1)
            + ((lam + self.nu(k_max - k)) / mu - lp * rb / (mu * s)) * self.g(k, 2)
            - lp * rb * (k as f64 * mu * s + self.nu(k_max)) / (mu * mu * s * s) * self.g(k, 1)
    }
}

/// Gamma table for the nonpersistent regime using the dedicated low-order
/// recursions for orders up to 3.
pub fn gamma_table(params: &ModelParams, max_order: usize) -> Result<ExpansionTable> {
    gamma_table_with(params, max_order, GammaRecursion::Specialized)
}

pub fn gamma_table_with(
    params: &ModelParams,
    max_order: usize,
    recursion: GammaRecursion,
) -> Result<ExpansionTable> {
    params.ensure_valid()?;
    let s = params.blocked_exit_prob();
    if s <= 0.0 {
        return Err(Error::Regime(
            "gamma coefficients need (1-r) + r(1-q) > 0".into(),
        ));
    }
    if max_order < 1 {
        return Err(Error::OutOfRange {
            what: "expansion order",
            value: max_order,
            allowed: ">= 1".into(),
        });
    }
    let k_max = params.capacity;
    let mut ctx = GammaCtx {
        p: params,
        s,
        t: ExpansionTable::new(Regime::Nonpersistent, k_max, max_order),
    };
    let mu = params.mu;
    for m in 1..=max_order {
        let specialized = recursion == GammaRecursion::Specialized && m <= 3;
        let full = match m {
            1 => params.orbit_inflow() / (mu * s),
            2 if specialized => params.nu_full() * params.orbit_inflow() / (mu * mu * s * s),
            3 if specialized => (ctx.g(1, 2) - ctx.g(2, 1)) / s,
            _ => ctx.full_general(m),
        };
        ctx.t.set(0, m, full);
        for k in 1..=k_max {
            let v = match m {
                1 => ctx.idle_order1(k),
                2 if specialized => ctx.idle_order2(k),
                3 if specialized => ctx.idle_order3(k),
                _ => ctx.idle_general(k, m),
            };
            ctx.t.set(k, m, v);
        }
    }
    Ok(ctx.t)
}

struct ThetaCtx {
    t: ExpansionTable,
}

impl ThetaCtx {
    fn th(&self, k: usize, m: isize) -> f64 {
        self.t.coeff(k, m)
    }

    /// Coefficients of `(n+1) r_{K-k-1}(n+1)` re-expanded in `1/n`.
    fn big_phi(&self, k: usize, j: usize) -> f64 {
        (0..=j)
            .map(|i| self.th(k + 1, i as isize) * binomial_series((k + i) as f64, j - i) * sign(j))
            .sum()
    }

    /// Coefficients of `(n+1) mu r_{K-1}(n+1) - lambda p` over `mu`.
    fn phi_tilde(&self, j: usize) -> f64 {
        (1..=j)
            .map(|i| self.th(1, i as isize) * binomial_series(i as f64, j - i) * sign(j))
            .sum()
    }
}

/// Theta table for the persistent regime `q = r = 1`.
pub fn theta_table(params: &ModelParams, max_order: usize) -> Result<ExpansionTable> {
    params.ensure_valid()?;
    if params.regime() != Regime::Persistent {
        return Err(Error::Regime("theta coefficients need q = r = 1".into()));
    }
    let nu_k = params.nu_full();
    if nu_k <= 0.0 {
        return Err(Error::UndefinedRho);
    }
    let k_max = params.capacity;
    let (lam, mu) = (params.lambda, params.mu);
    let nu = &params.nu;
    let mut ctx = ThetaCtx {
        t: ExpansionTable::new(Regime::Persistent, k_max, max_order),
    };

    ctx.t.set(1, 0, params.orbit_inflow() / mu);
    for k in 2..=k_max {
        let v = nu[k_max - k + 1] / mu * ctx.th(k - 1, 0);
        ctx.t.set(k, 0, v);
    }
    ctx.t.set(0, 0, params.orbit_inflow() / nu_k);

    for m in 1..=max_order {
        let mi = m as isize;
        let first: f64 = (2..=k_max.min(m + 1))
            .map(|i| ctx.th(i, (m + 1 - i) as isize) * sign(i))
            .sum();
        ctx.t.set(1, m, first);
        for k in 2..=k_max {
            let conv: f64 = (0..m)
                .map(|j| ctx.big_phi(k, j) * ctx.th(0, mi - j as isize - 1) * sign(j + 1))
                .sum();
            let v = nu[k_max - k + 1] / mu * ctx.th(k - 1, mi)
                + lam / mu * ctx.th(k + 1, mi - 2)
                + (lam + nu[k_max - k]) / mu * ctx.th(k, mi - 1)
                + conv;
            ctx.t.set(k, m, v);
        }
        let conv: f64 = (1..=m)
            .map(|j| ctx.phi_tilde(j) * ctx.th(0, mi - j as isize) * sign(j))
            .sum();
        let full = -lam / nu_k * ctx.th(1, mi - 1) + mu / nu_k * conv;
        ctx.t.set(0, m, full);
    }
    Ok(ctx.t)
}

/// Coefficient table for whichever regime the parameters fall into.
pub fn expansion_table(params: &ModelParams, max_order: usize) -> Result<ExpansionTable> {
    match params.regime() {
        Regime::Nonpersistent => gamma_table(params, max_order),
        Regime::Persistent => theta_table(params, max_order),
    }
}

/// The two closed forms that circulate for the first-order theta
/// coefficient of `r_K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstCorrectionForms {
    /// `-rho^2 (p nu_{K-1} - nu_K) / mu`.
    pub without_p: f64,
    /// `-rho^2 (nu_K - p nu_{K-1}) / (p mu)`.
    pub with_p: f64,
}

pub fn first_correction_forms(params: &ModelParams) -> Result<FirstCorrectionForms> {
    params.ensure_valid()?;
    let nu_k = params.nu_full();
    if nu_k <= 0.0 {
        return Err(Error::UndefinedRho);
    }
    let rho = params.orbit_inflow() / nu_k;
    let nu_km1 = params.nu[params.capacity - 1];
    let p = params.p;
    Ok(FirstCorrectionForms {
        without_p: -rho * rho * (p * nu_km1 - nu_k) / params.mu,
        with_p: -rho * rho * (nu_k - p * nu_km1) / (p * params.mu),
    })
}

/// Exact rate row for the persistent model with `K = 1` or `K = 2`.
pub fn explicit_small_k(params: &ModelParams, n: usize) -> Result<Vec<f64>> {
    params.ensure_valid()?;
    if params.regime() != Regime::Persistent {
        return Err(Error::Regime("closed forms need q = r = 1".into()));
    }
    if n == 0 {
        return Err(Error::OutOfRange {
            what: "level",
            value: 0,
            allowed: ">= 1".into(),
        });
    }
    let (lam, mu, lp) = (params.lambda, params.mu, params.orbit_inflow());
    let nm = n as f64 * mu;
    let nu = &params.nu;
    match params.capacity {
        1 => {
            let r0 = lp / nm;
            Ok(vec![r0, r0 * (lam + nm) / nu[1]])
        }
        2 => {
            let d = lam + nu[1] + nm;
            let d_next = d + mu;
            let r0 = lp * nu[1] / (nm * d);
            let r1 = lp * (lam + nm) / (nm * d);
            let r2 = lp * ((lam + nm).powi(2) + nm * nu[1]) / (nm * (nu[2] * d_next + lp * nu[1]))
                * d_next
                / d;
            Ok(vec![r0, r1, r2])
        }
        k => Err(Error::OutOfRange {
            what: "capacity",
            value: k,
            allowed: "1 or 2".into(),
        }),
    }
}
