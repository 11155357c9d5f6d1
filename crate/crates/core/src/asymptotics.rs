//! Tail laws of the joint stationary distribution and the compensated
//! series used to check them numerically.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ModelParams, Regime};
use crate::rate_matrix::StationaryDistribution;

pub const BOUND_FACTOR: f64 = 10.0;
pub const DRIFT_LIMIT: f64 = 0.01;

/// Leading tail behaviour `pi_{K-k,n} ~ [1/n!] base^n n^{exponent + per_idle_shift k}`,
/// where the factorial only appears in the nonpersistent regime.
#[derive(Clone, Debug, PartialEq)]
pub struct TailLaw {
    pub regime: Regime,
    pub base: f64,
    pub exponent: f64,
    pub per_idle_shift: f64,
    /// `lambda p / nu_K`; `None` when `nu_K = 0`.
    pub rho: Option<f64>,
    /// Persistent polynomial exponent.
    pub alpha: Option<f64>,
    /// Constants `a`, `b` of the second-order difference equation behind the
    /// nonpersistent bound, and `a^2 - 4b`.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub discriminant: Option<f64>,
    /// Set when `a^2 - 4b >= 0`, i.e. the complex-root condition fails.
    pub discriminant_flag: bool,
}

pub fn tail_law(params: &ModelParams) -> Result<TailLaw> {
    params.ensure_ergodic()?;
    let (lam, mu, p) = (params.lambda, params.mu, params.p);
    let nu_k = params.nu_full();
    let rho = (nu_k > 0.0).then(|| params.orbit_inflow() / nu_k);
    match params.regime() {
        Regime::Persistent => {
            let rho = rho.ok_or(Error::UndefinedRho)?;
            let nu_km1 = params.nu[params.capacity - 1];
            let alpha = rho * (nu_k - p * nu_km1) / (p * mu);
            Ok(TailLaw {
                regime: Regime::Persistent,
                base: rho,
                exponent: alpha,
                per_idle_shift: -1.0,
                rho: Some(rho),
                alpha: Some(alpha),
                a: None,
                b: None,
                discriminant: None,
                discriminant_flag: false,
            })
        }
        Regime::Nonpersistent => {
            let s = params.blocked_exit_prob();
            let a = nu_k / (mu * s);
            let leak = params.p_bar() * params.r_bar() + params.r * params.q_bar();
            let b = a * a + nu_k * lam * leak / (mu * s).powi(2);
            let discriminant = a * a - 4.0 * b;
            Ok(TailLaw {
                regime: Regime::Nonpersistent,
                base: params.orbit_inflow() / (mu * s),
                exponent: -a,
                per_idle_shift: -1.0,
                rho,
                alpha: None,
                a: Some(a),
                b: Some(b),
                discriminant: Some(discriminant),
                discriminant_flag: discriminant >= 0.0,
            })
        }
    }
}

/// Natural log of the compensated value `pi / law(n, k)`, or `None` when
/// either side vanishes.
fn log_compensated(law: &TailLaw, pi: f64, n: usize, k: usize) -> Option<f64> {
    if pi.is_nan() || pi <= 0.0 || law.base.is_nan() || law.base <= 0.0 {
        return None;
    }
    let x = n as f64;
    let power = law.exponent + law.per_idle_shift * k as f64;
    let factorial = match law.regime {
        Regime::Nonpersistent => ln_gamma(x + 1.0),
        Regime::Persistent => 0.0,
    };
    Some(pi.ln() + factorial - x * law.base.ln() - power * x.ln())
}

/// Compensated series for idle count `k` at levels `1..=horizon`; element
/// `j` belongs to level `j + 1`.
pub fn tail_ratio_series(
    dist: &StationaryDistribution,
    law: &TailLaw,
    k: usize,
) -> Result<Vec<Option<f64>>> {
    let capacity = dist.phases() - 1;
    if k > capacity {
        return Err(Error::OutOfRange {
            what: "idle count",
            value: k,
            allowed: format!("0..={capacity}"),
        });
    }
    Ok((1..=dist.horizon)
        .map(|n| log_compensated(law, dist.get(capacity - k, n), n, k).map(f64::exp))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub min: f64,
    pub max: f64,
    /// Least-squares slope of the log-series per step.
    pub drift: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn spread(&self) -> f64 {
        self.max / self.min
    }
}

/// Checks that the last `window` entries stay within a bounded band without
/// systematic log-drift. Missing entries make the verdict fail.
pub fn boundedness_check(series: &[Option<f64>], window: usize) -> Result<Verdict> {
    if window < 2 || series.len() < 2 * window {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    let tail = &series[series.len() - window..];
    let present: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter_map(|(j, v)| {
            v.filter(|x| *x > 0.0 && x.is_finite())
                .map(|x| (j as f64, x))
        })
        .collect();
    if present.len() < tail.len() {
        return Ok(Verdict {
            min: f64::NAN,
            max: f64::NAN,
            drift: f64::NAN,
            pass: false,
        });
    }
    let min = present.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = present.iter().map(|p| p.1).fold(0.0, f64::max);
    let drift = slope(present.iter().map(|&(j, v)| (j, v.ln())));
    Ok(Verdict {
        min,
        max,
        drift,
        pass: max / min < BOUND_FACTOR && drift.abs() < DRIFT_LIMIT,
    })
}

fn slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let n = points.clone().count() as f64;
    let (sx, sy) = points
        .clone()
        .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.fold((0.0, 0.0), |a, (x, y)| {
        (a.0 + (x - mx) * (y - my), a.1 + (x - mx) * (x - mx))
    });
    sxy / sxx
}
