//! Rate matrices of the level-dependent QBD and the stationary distribution.
//!
//! The up block has a single nonzero entry at `(K, K)`, so every rate matrix
//! `R(n)` is zero except for its last row `r(n)`. The backward map
//! `X -> Q0 (-Q1(n) - X Q2(n+1))^{-1}` then reduces to one transposed linear
//! solve per level, and the minimal nonnegative solution is the limit of the
//! map composed `depth` times starting from the zero matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Default L1 convergence tolerance on the last requested row.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Deepest backward composition attempted before giving up.
pub const DEFAULT_MAX_DEPTH: usize = 1 << 20;
/// Relative tail mass above which a distribution is flagged as truncated.
pub const TAIL_WARNING: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// Last rows `r(1) ..= r(N)` of the rate matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRowSequence {
    rows: Vec<Vec<f64>>,
    pub horizon: usize,
    pub tol: f64,
    /// Number of doubling trials performed.
    pub iterations: usize,
    /// Composition depth used for level `horizon`; lower levels are deeper.
    pub depth: usize,
}

impl RateRowSequence {
    /// Wraps rows for levels `1..=rows.len()` produced elsewhere.
    pub fn from_rows(rows: Vec<Vec<f64>>, tol: f64, iterations: usize, depth: usize) -> Self {
        let horizon = rows.len();
        Self {
            rows,
            horizon,
            tol,
            iterations,
            depth,
        }
    }

    /// `r(n)` for `1 <= n <= horizon`.
    pub fn row(&self, n: usize) -> &[f64] {
        assert!(
            (1..=self.horizon).contains(&n),
            "level {n} outside 1..={}",
            self.horizon
        );
        &self.rows[n - 1]
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r.as_slice()))
    }

    /// Full rate matrix `R(n)`; rows `0..K` are identically zero.
    pub fn rate_matrix(&self, n: usize) -> DMatrix<f64> {
        let row = self.row(n);
        let dim = row.len();
        let mut m = DMatrix::zeros(dim, dim);
        for (j, &v) in row.iter().enumerate() {
            m[(dim - 1, j)] = v;
        }
        m
    }

    /// `r~(n)`, the level-`n` row combination that enters the balance
    /// equations for `r(n-1)`.
    pub fn tilde(&self, params: &ModelParams, n: usize) -> Vec<f64> {
        let row = self.row(n);
        let k = params.capacity;
        let nm = n as f64 * params.mu;
        (0..=k)
            .map(|i| {
                let stay = if i < k {
                    params.r_bar()
                } else {
                    params.blocked_exit_prob()
                };
                let shift = if i > 0 { params.r * row[i - 1] } else { 0.0 };
                nm * (shift + stay * row[i])
            })
            .collect()
    }

    /// `sum_{i<K} r_i(n) + ((1-r) + r(1-q)) r_K(n) - lambda p / (n mu)`.
    pub fn row_sum_defect(&self, params: &ModelParams, n: usize) -> f64 {
        let row = self.row(n);
        let k = params.capacity;
        let lhs: f64 = row[..k].iter().sum::<f64>() + params.blocked_exit_prob() * row[k];
        lhs - params.orbit_inflow() / (n as f64 * params.mu)
    }
}

/// `-Q1(n) - e_K w` where `w = x Q2(n+1)`; only the last row is touched by `x`.
fn level_matrix(params: &ModelParams, n: usize, next_row: &[f64]) -> DMatrix<f64> {
    let k = params.capacity;
    let nm = (n + 1) as f64 * params.mu;
    let mut m = -params.blocks_unchecked(n).q1;
    for j in 0..=k {
        let stay = if j < k {
            params.r_bar()
        } else {
            params.blocked_exit_prob()
        };
        let mut w = next_row[j] * stay;
        if j > 0 {
            w += next_row[j - 1] * params.r;
        }
        m[(k, j)] -= nm * w;
    }
    m
}

/// Last row of `Q0 M^{-1}`, i.e. `lambda p` times row `K` of `M^{-1}`.
fn last_row_of_solve(params: &ModelParams, n: usize, m: DMatrix<f64>) -> Result<Vec<f64>> {
    let k = params.capacity;
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = params.orbit_inflow();
    let y = m
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular { level: n })?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { level: n });
    }
    Ok(y.iter().copied().collect())
}

/// One application of the backward map at level `n >= 1` to an arbitrary
/// matrix `x` standing for `R(n+1)`.
pub fn rate_map(params: &ModelParams, n: usize, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    params.ensure_valid()?;
    if n == 0 {
        return Err(Error::OutOfRange {
            what: "level",
            value: n,
            allowed: ">= 1".into(),
        });
    }
    let dim = params.capacity + 1;
    let m = -params.blocks_unchecked(n).q1 - x * params.blocks_unchecked(n + 1).q2;
    let row = last_row_of_solve(params, n, m)?;
    let mut out = DMatrix::zeros(dim, dim);
    for (j, v) in row.into_iter().enumerate() {
        out[(dim - 1, j)] = v;
    }
    Ok(out)
}

/// One backward sweep: rows for levels `1..=horizon` where level `horizon`
/// is the `depth`-fold composition started from the zero matrix and level
/// `n` uses depth `depth + horizon - n`.
pub fn rate_rows_at_depth(
    params: &ModelParams,
    horizon: usize,
    depth: usize,
) -> Result<Vec<Vec<f64>>> {
    params.ensure_valid()?;
    let dim = params.capacity + 1;
    let mut rows = vec![vec![0.0; dim]; horizon];
    // The row at level `horizon + depth` is taken as zero.
    let mut next = vec![0.0; dim];
    for n in (1..horizon + depth).rev() {
        let row = last_row_of_solve(params, n, level_matrix(params, n, &next))?;
        if n <= horizon {
            rows[n - 1].clone_from(&row);
        }
        next = row;
    }
    Ok(rows)
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Rate rows up to `horizon`, deepening the backward composition through
/// depths `2^k - 1` until the L1 change of `r(horizon)` drops below `tol`.
pub fn compute_rate_rows(
    params: &ModelParams,
    horizon: usize,
    tol: f64,
) -> Result<RateRowSequence> {
    compute_rate_rows_with(
        params,
        horizon,
        SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn compute_rate_rows_with(
    params: &ModelParams,
    horizon: usize,
    opts: SolverOptions,
) -> Result<RateRowSequence> {
    params.ensure_ergodic()?;
    if horizon == 0 {
        return Err(Error::OutOfRange {
            what: "horizon",
            value: 0,
            allowed: ">= 1".into(),
        });
    }
    let mut k = 1u32;
    let mut prev = rate_rows_at_depth(params, horizon, 1)?;
    let mut change = f64::INFINITY;
    loop {
        let depth = (1usize << (k + 1)) - 1;
        if depth > opts.max_depth {
            return Err(Error::ConvergenceFailure {
                cap: opts.max_depth,
                last_change: change,
            });
        }
        let cur = rate_rows_at_depth(params, horizon, depth)?;
        change = l1_distance(&cur[horizon - 1], &prev[horizon - 1]);
        if change < opts.tol {
            return Ok(RateRowSequence {
                rows: cur,
                horizon,
                tol: opts.tol,
                iterations: k as usize,
                depth,
            });
        }
        if !change.is_finite() {
            return Err(Error::ConvergenceFailure {
                cap: opts.max_depth,
                last_change: change,
            });
        }
        prev = cur;
        k += 1;
    }
}

/// Generator of the chain censored on levels `0..n`, with the last diagonal
/// block replaced by `Q1(n-1) + R(n) Q2(n)`.
pub fn censored_generator(
    params: &ModelParams,
    rows: &RateRowSequence,
    n: usize,
) -> Result<DMatrix<f64>> {
    params.ensure_valid()?;
    if n == 0 || n > rows.horizon {
        return Err(Error::OutOfRange {
            what: "censoring level",
            value: n,
            allowed: format!("1..={}", rows.horizon),
        });
    }
    let d = params.capacity + 1;
    let mut g = DMatrix::zeros(n * d, n * d);
    for level in 0..n {
        let b = params.blocks_unchecked(level);
        let diag = if level == n - 1 {
            b.q1 + rows.rate_matrix(n) * params.blocks_unchecked(n).q2
        } else {
            b.q1
        };
        g.view_mut((level * d, level * d), (d, d)).copy_from(&diag);
        if level + 1 < n {
            g.view_mut((level * d, (level + 1) * d), (d, d))
                .copy_from(&b.q0);
        }
        if level > 0 {
            g.view_mut((level * d, (level - 1) * d), (d, d))
                .copy_from(&b.q2);
        }
    }
    Ok(g)
}

/// Joint stationary probabilities `pi[n][i]` for levels `0..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDistribution {
    pi: Vec<Vec<f64>>,
    pub horizon: usize,
    /// Estimated share of the true mass inside levels `0..=horizon`.
    pub mass_captured: f64,
    /// Extrapolated mass beyond `horizon`, relative to the stored mass.
    pub tail_estimate: f64,
    /// Set when `tail_estimate` exceeds [`TAIL_WARNING`].
    pub tail_warning: bool,
}

impl StationaryDistribution {
    /// `pi_{i,n}`.
    pub fn get(&self, i: usize, n: usize) -> f64 {
        self.pi[n][i]
    }

    /// `pi_n` as a row over phases.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.pi[n]
    }

    pub fn levels(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.pi.iter().enumerate().map(|(n, v)| (n, v.as_slice()))
    }

    pub fn phases(&self) -> usize {
        self.pi[0].len()
    }

    pub fn total(&self) -> f64 {
        self.pi.iter().flatten().sum()
    }

    /// Sup-norm of `pi_{n-1} Q0 + pi_n Q1(n) + pi_{n+1} Q2(n+1)` at
    /// `0 <= n < horizon` (the `n = 0` case omits the first term).
    pub fn balance_residual(&self, params: &ModelParams, n: usize) -> f64 {
        assert!(n < self.horizon, "balance needs level n + 1 <= horizon");
        let row = |v: &[f64]| DMatrix::from_row_slice(1, v.len(), v);
        let mut acc = row(&self.pi[n]) * params.blocks_unchecked(n).q1
            + row(&self.pi[n + 1]) * params.blocks_unchecked(n + 1).q2;
        if n > 0 {
            acc += row(&self.pi[n - 1]) * params.blocks_unchecked(n - 1).q0;
        }
        acc.abs().max()
    }
}

/// Solves the boundary equations for `pi_0`, propagates `pi_n = pi_{n-1} R(n)`
/// and normalizes over the stored levels.
pub fn stationary_distribution(
    params: &ModelParams,
    rows: &RateRowSequence,
) -> Result<StationaryDistribution> {
    params.ensure_ergodic()?;
    let k = params.capacity;
    let d = k + 1;
    if rows.row(1).len() != d {
        return Err(Error::OutOfRange {
            what: "rate row length",
            value: rows.row(1).len(),
            allowed: d.to_string(),
        });
    }
    let mut corner =
        params.blocks_unchecked(0).q1 + rows.rate_matrix(1) * params.blocks_unchecked(1).q2;
    corner.column_mut(0).fill(1.0);
    let mut rhs = DVector::zeros(d);
    rhs[0] = 1.0;
    let pi0 = corner
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or(Error::DegenerateNullSpace)?;
    if pi0.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateNullSpace);
    }

    let mut pi = Vec::with_capacity(rows.horizon + 1);
    pi.push(pi0.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>());
    for (_, r) in rows.rows() {
        let full = pi.last().map(|v: &Vec<f64>| v[k]).unwrap_or(0.0);
        pi.push(r.iter().map(|x| full * x).collect());
    }
    let total: f64 = pi.iter().flatten().sum();
    for v in pi.iter_mut().flatten() {
        *v /= total;
    }

    let tail_estimate = extrapolated_tail(&pi);
    Ok(StationaryDistribution {
        horizon: rows.horizon,
        mass_captured: 1.0 / (1.0 + tail_estimate),
        tail_warning: tail_estimate > TAIL_WARNING,
        tail_estimate,
        pi,
    })
}

/// Geometric extrapolation of level masses past the last stored level.
fn extrapolated_tail(pi: &[Vec<f64>]) -> f64 {
    let mass = |v: &Vec<f64>| v.iter().sum::<f64>();
    let last = mass(&pi[pi.len() - 1]);
    if last == 0.0 {
        return 0.0;
    }
    if pi.len() < 2 {
        return f64::INFINITY;
    }
    let before = mass(&pi[pi.len() - 2]);
    let ratio = last / before;
    if before > 0.0 && ratio < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    }
}
