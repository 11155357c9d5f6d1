//! Oracles shared by the integration tests. None of them reuse the library's
//! recursions or its level-by-level solver.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qbd_core::model::{ModelParams, Regime};

/// `mu = 1, K = c = 5, r = 0.5, p = q = 0.7, nu_i = i`, `lambda = rho* nu_K`.
pub fn traffic_model(rho_star: f64) -> ModelParams {
    ModelParams::multiserver(rho_star * 5.0, 1.0, 0.7, 0.7, 0.5, 5, 5, 1.0)
}

/// Two abandonment channels, `K = c = 10`.
pub fn two_type_model(rho_star: f64) -> ModelParams {
    ModelParams::multiserver(rho_star * 10.0, 1.0, 0.7, 0.7, 0.5, 10, 10, 1.0)
}

/// One abandonment channel (`r = 1`), `K = c = 10`.
pub fn one_type_model(rho_star: f64) -> ModelParams {
    ModelParams::multiserver(rho_star * 10.0, 1.0, 0.7, 0.35, 1.0, 10, 10, 1.0)
}

/// `p = q = r = 1`, `K = c = 10`.
pub fn persistent_model(rho_star: f64) -> ModelParams {
    ModelParams::multiserver(rho_star * 10.0, 1.0, 1.0, 1.0, 1.0, 10, 10, 1.0)
}

pub const TABLE_ROWS: [[f64; 4]; 9] = [
    [0.1, 0.078979804, 0.006347302, 0.000512522],
    [0.2, 0.078922701, 0.006528123, 0.000548023],
    [0.3, 0.078865830, 0.006708717, 0.000584347],
    [0.4, 0.078809192, 0.006889085, 0.000621491],
    [0.5, 0.078752783, 0.007069227, 0.000659455],
    [0.6, 0.078696602, 0.007249146, 0.000698238],
    [0.7, 0.078640650, 0.007428842, 0.000737837],
    [0.8, 0.078584923, 0.007608316, 0.000778252],
    [0.9, 0.078529420, 0.007787571, 0.000819482],
];

pub const TABLE_ROWS_LONG: [[f64; 4]; 9] = [
    [0.1, 0.007711805, 0.000061185, 0.000000491],
    [0.2, 0.007711190, 0.000062962, 0.000000525],
    [0.3, 0.007710574, 0.000064739, 0.000000560],
    [0.4, 0.007709959, 0.000066516, 0.000000596],
    [0.5, 0.007709344, 0.000068292, 0.000000633],
    [0.6, 0.007708729, 0.000070068, 0.000000671],
    [0.7, 0.007708115, 0.000071844, 0.000000709],
    [0.8, 0.007707500, 0.000073620, 0.000000748],
    [0.9, 0.007706887, 0.000075395, 0.000000788],
];

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Truncated power series in x = 1/n.

type Series = Vec<f64>;

fn mul(a: &[f64], b: &[f64], order: usize) -> Series {
    let mut c = vec![0.0; order + 1];
    for (i, &ai) in a.iter().enumerate().take(order + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(order + 1 - i) {
            c[i + j] += ai * bj;
        }
    }
    c
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// `f(x / (1 + x))`, i.e. the value at level `n + 1` of a series in `1/n`.
fn shift(f: &[f64], order: usize) -> Series {
    let mut out = vec![0.0; order + 1];
    for (m, &fm) in f.iter().enumerate().take(order + 1) {
        if m == 0 {
            out[0] += fm;
            continue;
        }
        // x^m (1 + x)^{-m} = sum_t (-1)^t C(m + t - 1, t) x^{m + t}
        for t in 0..=order - m {
            let sgn = if t % 2 == 0 { 1.0 } else { -1.0 };
            out[m + t] += fm * sgn * binom(m + t - 1, t);
        }
    }
    out
}

/// Order-`order` coefficients of `x * (balance equation j)` for the rate row
/// written as `r_j(n) = sum_m a[j][m] x^m`.
fn residuals(p: &ModelParams, a: &[Series], order: usize) -> Vec<f64> {
    let k = p.capacity;
    let (lam, mu) = (p.lambda, p.mu);
    let (r, rb, s) = (p.r, p.r_bar(), p.blocked_exit_prob());
    let lp = p.orbit_inflow();
    let zero = vec![0.0; order + 1];
    let get = |j: isize| -> &Series {
        if j < 0 || j as usize > k {
            &zero
        } else {
            &a[j as usize]
        }
    };
    let shifted: Vec<Series> = a.iter().map(|f| shift(f, order)).collect();
    let sh = |j: isize| -> &Series {
        if j < 0 {
            &zero
        } else {
            &shifted[j as usize]
        }
    };
    let one_plus_x_fk = {
        let mut v = a[k].clone();
        for m in (1..=order).rev() {
            v[m] += a[k][m - 1];
        }
        v
    };
    let coef = |f: &Series, m: usize| if m == 0 { 0.0 } else { f[m - 1] };
    (0..=k)
        .map(|j| {
            let ji = j as isize;
            let g: Series = if j < k {
                sh(ji)
                    .iter()
                    .zip(sh(ji - 1))
                    .map(|(x, y)| rb * x + r * y)
                    .collect()
            } else {
                sh(ji - 1)
                    .iter()
                    .zip(sh(ji))
                    .map(|(x, y)| r * x + s * y)
                    .collect()
            };
            let prod = mul(&one_plus_x_fk, &g, order)[order];
            let m = order;
            if j < k {
                -lam * coef(get(ji - 1), m) - p.nu[j + 1] * coef(get(ji + 1), m)
                    + (lam + p.nu[j]) * coef(&a[j], m)
                    + mu * a[j][m]
                    - mu * prod
            } else {
                let src = if m == 1 { lp } else { 0.0 };
                -lam * coef(get(ji - 1), m) - src
                    + (lp + p.nu[k]) * coef(&a[k], m)
                    + mu * s * a[k][m]
                    - mu * prod
            }
        })
        .collect()
}

/// Coefficients `a[j][m]`, `m <= order`, of the rate row as a power series
/// in `1/n`, obtained by substituting the series into the balance equations
/// and solving order by order. The unknowns of each order enter affinely, so
/// each stage is a small linear solve built by probing.
pub fn series_coefficients(p: &ModelParams, order: usize) -> Vec<Series> {
    let k = p.capacity;
    let width = order + 2;
    let mut a = vec![vec![0.0; width + 1]; k + 1];
    let persistent = p.regime() == Regime::Persistent;
    if persistent {
        a[k][0] = p.orbit_inflow() / p.nu[k];
    }
    for m in 1..=order + 1 {
        // Unknown slots for this stage, with the equations to use.
        let slots: Vec<(usize, usize)> = if persistent {
            let mut v: Vec<(usize, usize)> = (0..k).map(|j| (j, m)).collect();
            if m >= 2 {
                v.push((k, m - 1));
            }
            v
        } else {
            (0..=k).map(|j| (j, m)).collect()
        };
        let eval = |a: &Vec<Series>| {
            let trimmed: Vec<Series> = a.iter().map(|f| f[..=m].to_vec()).collect();
            residuals(p, &trimmed, m)
        };
        let base = eval(&a);
        let mut jac = DMatrix::zeros(k + 1, slots.len());
        for (c, &(j, mm)) in slots.iter().enumerate() {
            let mut probe = a.clone();
            probe[j][mm] += 1.0;
            let res = eval(&probe);
            for row in 0..=k {
                jac[(row, c)] = res[row] - base[row];
            }
        }
        let rhs = -DVector::from_vec(base);
        let sol = jac
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .expect("series stage solve");
        for (c, &(j, mm)) in slots.iter().enumerate() {
            a[j][mm] = sol[c];
        }
    }
    a.iter().map(|f| f[..=order].to_vec()).collect()
}

/// Converts series coefficients to the table convention of the library:
/// nonpersistent `gamma[k][i] = (-1)^{i+1} a[K-k][k+i]`, persistent
/// `theta[k][i] = (-1)^i a[K-k][k+i]`.
pub fn table_convention(p: &ModelParams, a: &[Series], k: usize, i: usize) -> f64 {
    let kk = p.capacity;
    let idx = k + i;
    let v = a[kk - k].get(idx).copied().unwrap_or(f64::NAN);
    let odd = match p.regime() {
        Regime::Nonpersistent => i.is_multiple_of(2),
        Regime::Persistent => i % 2 == 1,
    };
    if odd {
        -v
    } else {
        v
    }
}

// ---------------------------------------------------------------------------
// Direct solve of the full truncated generator.

/// Stationary vector of the chain on levels `0..=levels` with upward
/// transitions out of the top level removed, as `pi[n][i]`.
pub fn truncated_chain_solution(p: &ModelParams, levels: usize) -> Vec<Vec<f64>> {
    let d = p.capacity + 1;
    let size = d * (levels + 1);
    let mut q = DMatrix::<f64>::zeros(size, size);
    let idx = |n: usize, i: usize| n * d + i;
    let k = p.capacity;
    let (lam, mu) = (p.lambda, p.mu);
    let (pp, qq, rr) = (p.p, p.q, p.r);
    for n in 0..=levels {
        for i in 0..=k {
            let from = idx(n, i);
            let mut add = |to: usize, rate: f64| {
                if rate > 0.0 && to != from {
                    q[(from, to)] += rate;
                }
            };
            if i < k {
                add(idx(n, i + 1), lam);
            } else if n < levels {
                add(idx(n + 1, i), lam * pp);
            }
            if i > 0 {
                add(idx(n, i - 1), p.nu[i]);
            }
            if n > 0 {
                let nm = n as f64 * mu;
                if i < k {
                    add(idx(n - 1, i + 1), nm * rr);
                    add(idx(n - 1, i), nm * (1.0 - rr));
                } else {
                    add(idx(n - 1, i), nm * ((1.0 - rr) + rr * (1.0 - qq)));
                }
            }
        }
    }
    for row in 0..size {
        let s: f64 = q.row(row).sum();
        q[(row, row)] = -s;
    }
    let mut a = q.transpose();
    a.row_mut(0).fill(1.0);
    let mut b = DVector::zeros(size);
    b[0] = 1.0;
    let pi = a.lu().solve(&b).expect("truncated chain is irreducible");
    (0..=levels)
        .map(|n| (0..d).map(|i| pi[idx(n, i)]).collect())
        .collect()
}
