//! Weak-Markov equilibrium with a fixed on-path allocation, solved on a type grid.
//!
//! State `k` means the remaining buyers are the types in `[theta_lo, grid[k]]`.
//! From state `k` the seller picks the next state `j < k`; the price `P[j]` makes
//! type `grid[j]` indifferent between buying now and waiting for `P[policy[j]]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Primitives;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoaseOptions {
    pub grid_n: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Grid concentration near `theta_lo`; 0 gives a uniform grid.
    pub alpha: f64,
    /// Re-solve by Jacobi iteration from three starting points and compare.
    pub check_uniqueness: bool,
}

impl Default for CoaseOptions {
    fn default() -> Self {
        CoaseOptions { grid_n: 2001, tol: 1e-10, max_sweeps: 100_000, alpha: 4.0, check_uniqueness: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaseSolution {
    pub x_cap: f64,
    pub theta_top: f64,
    pub delta: f64,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Flow utility `u(x_cap, theta)` on the grid.
    pub flow: Vec<f64>,
    pub value: Vec<f64>,
    pub policy: Vec<usize>,
    pub price: Vec<f64>,
    /// On-path states from the top of the grid down to 0.
    pub trajectory: Vec<usize>,
    pub clearing_time: usize,
    pub converged: bool,
    pub sweeps: usize,
    pub final_change: f64,
    /// Largest gap between the value and the best one-step alternative.
    pub bellman_residual: f64,
    /// Largest cutoff-type indifference error along the trajectory.
    pub indifference_residual: f64,
    /// Sup-norm spread across the restarted solves, when requested.
    pub restart_spread: Option<f64>,
}

fn type_grid(lo: f64, hi: f64, n: usize, alpha: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            let g = if alpha.abs() < 1e-12 { u } else { (alpha * u).exp_m1() / alpha.exp_m1() };
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * g
            }
        })
        .collect()
}

/// Best next state from `k` given values and prices; ties go to the larger state.
fn best_cut(k: usize, cdf: &[f64], value: &[f64], price: &[f64], delta: f64) -> (usize, f64) {
    let fk = cdf[k];
    let mut best = f64::NEG_INFINITY;
    for j in 0..k {
        let c = (fk - cdf[j]) * price[j] + delta * value[j];
        if c > best {
            best = c;
        }
    }
    let tie = 1e-13 * best.abs();
    let j = (0..k).rev().find(|&j| (fk - cdf[j]) * price[j] + delta * value[j] >= best - tie).expect("nonempty range");
    (j, best)
}

struct Fixed<'a> {
    cdf: &'a [f64],
    flow: &'a [f64],
    delta: f64,
}

impl Fixed<'_> {
    /// Ascending sweep, updating in place. Returns the sup-norm change.
    fn gauss_seidel(&self, value: &mut [f64], price: &mut [f64], policy: &mut [usize]) -> f64 {
        let d = self.delta;
        let mut change: f64 = 0.0;
        for k in 1..value.len() {
            let (j, v) = best_cut(k, self.cdf, value, price, d);
            let p = (1.0 - d) * self.flow[k] + d * price[j];
            change = change.max((v - value[k]).abs()).max((p - price[k]).abs());
            value[k] = v;
            price[k] = p;
            policy[k] = j;
        }
        change
    }

    /// Simultaneous update of every state from the previous iterate.
    fn jacobi(&self, value: &[f64], price: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let d = self.delta;
        let n = value.len();
        let mut nv = vec![0.0; n];
        let mut np = vec![0.0; n];
        np[0] = self.flow[0];
        let mut change: f64 = 0.0;
        for k in 1..n {
            let (j, v) = best_cut(k, self.cdf, value, price, d);
            nv[k] = v;
            np[k] = (1.0 - d) * self.flow[k] + d * price[j];
            change = change.max((nv[k] - value[k]).abs()).max((np[k] - price[k]).abs());
        }
        (nv, np, change)
    }
}

/// Solve with on-path allocation `x_cap` starting from remaining types `[theta_lo, theta_top]`.
pub fn solve_weak_markov(prim: &Primitives, x_cap: f64, theta_top: f64, opts: &CoaseOptions) -> Result<CoaseSolution> {
    if !(x_cap >= prim.x_lo - 1e-12 && x_cap <= prim.x_hi + 1e-12) {
        return Err(Error::Invalid(format!("x_cap {x_cap} outside [{}, {}]", prim.x_lo, prim.x_hi)));
    }
    let (lo, hi) = prim.dist.support();
    if !(theta_top > lo && theta_top <= hi + 1e-12) {
        return Err(Error::Invalid(format!("state {theta_top} must lie in ({lo}, {hi}]")));
    }
    if opts.grid_n < 3 {
        return Err(Error::Invalid("grid needs at least 3 points".into()));
    }
    let n = opts.grid_n;
    let grid = type_grid(lo, theta_top.min(hi), n, opts.alpha);
    let cdf: Vec<f64> = grid.iter().map(|&t| prim.dist.cdf(t)).collect();
    let flow: Vec<f64> = grid.iter().map(|&t| prim.utility_u(x_cap, t)).collect::<Result<_>>()?;
    let fixed = Fixed { cdf: &cdf, flow: &flow, delta: prim.delta };

    let mut value = vec![0.0; n];
    let mut price = vec![0.0; n];
    let mut policy = vec![0usize; n];
    price[0] = flow[0];
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        change = fixed.gauss_seidel(&mut value, &mut price, &mut policy);
        sweeps += 1;
        if change < opts.tol {
            break;
        }
    }
    let converged = change < opts.tol;
    if !converged {
        return Err(Error::NonConvergence { sweeps, change });
    }

    let mut trajectory = vec![n - 1];
    let mut k = n - 1;
    while k > 0 {
        k = policy[k];
        trajectory.push(k);
    }
    let clearing_time = trajectory.len() - 1;

    let mut bellman_residual: f64 = 0.0;
    for k in 1..n {
        let (_, best) = best_cut(k, &cdf, &value, &price, prim.delta);
        bellman_residual = bellman_residual.max((best - value[k]).abs());
    }
    let mut indifference_residual: f64 = 0.0;
    for &j in &trajectory[1..] {
        if j > 0 {
            let now = flow[j] - price[j];
            let wait = prim.delta * (flow[j] - price[policy[j]]);
            indifference_residual = indifference_residual.max((now - wait).abs());
        }
    }

    let restart_spread = opts.check_uniqueness.then(|| {
        let starts: [(Vec<f64>, Vec<f64>); 3] = [
            (vec![0.0; n], {
                let mut p = vec![0.0; n];
                p[0] = flow[0];
                p
            }),
            (cdf.iter().map(|f| f * flow[0]).collect(), vec![flow[0]; n]),
            (cdf.iter().zip(&flow).map(|(f, w)| f * w).collect(), flow.clone()),
        ];
        let mut spread: f64 = 0.0;
        for (mut v, mut p) in starts {
            for _ in 0..opts.max_sweeps.min(n + 2) {
                let (nv, np, ch) = fixed.jacobi(&v, &p);
                v = nv;
                p = np;
                if ch < opts.tol {
                    break;
                }
            }
            for k in 0..n {
                spread = spread.max((v[k] - value[k]).abs()).max((p[k] - price[k]).abs());
            }
        }
        spread
    });

    Ok(CoaseSolution {
        x_cap,
        theta_top,
        delta: prim.delta,
        grid,
        cdf,
        flow,
        value,
        policy,
        price,
        trajectory,
        clearing_time,
        converged,
        sweeps,
        final_change: change,
        bellman_residual,
        indifference_residual,
        restart_spread,
    })
}

impl CoaseSolution {
    /// Value at the top state.
    pub fn top_value(&self) -> f64 {
        *self.value.last().expect("nonempty grid")
    }

    /// Value at the smallest grid state at or above `theta` (conservative).
    pub fn value_at(&self, theta: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g < theta).min(self.grid.len() - 1);
        self.value[k]
    }

    /// On-path (state, price) pairs.
    pub fn on_path_prices(&self) -> Vec<(usize, f64)> {
        self.trajectory.windows(2).map(|w| (w[0], self.price[w[1]])).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(e.to_string());
        wtr.write_record(["theta", "V", "policy", "price"]).map_err(io)?;
        for k in 0..self.grid.len() {
            wtr.serialize((self.grid[k], self.value[k], self.grid[self.policy[k]], self.price[k])).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingReport {
    pub clearing_time: usize,
    pub finite: bool,
    /// Largest `u(x_cap, theta_lo) - p` over on-path prices; must be <= 1e-9.
    pub worst_price_cap: f64,
    pub price_cap_holds: bool,
    /// Largest one-period ratio of remaining mass; `None` when it is vacuous.
    pub mass_ratio: Option<f64>,
    pub kappa: usize,
}

pub fn clearing_diagnostics(sol: &CoaseSolution) -> ClearingReport {
    let floor = sol.flow[0];
    let worst_price_cap = sol.on_path_prices().iter().map(|&(_, p)| floor - p).fold(f64::NEG_INFINITY, f64::max);
    let mass_ratio = sol
        .trajectory
        .windows(2)
        .filter(|w| w[1] > 0)
        .map(|w| sol.cdf[w[1]] / sol.cdf[w[0]])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    ClearingReport {
        clearing_time: sol.clearing_time,
        finite: sol.trajectory.last() == Some(&0),
        worst_price_cap,
        price_cap_holds: worst_price_cap <= 1e-9,
        mass_ratio,
        kappa: 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaseMargin {
    pub delta: f64,
    pub value: f64,
    /// `V / F(theta_top) - u(x_cap, theta_lo)`.
    pub margin: f64,
    pub clearing_time: usize,
    pub bellman_residual: f64,
}

/// Per-unit-mass premium over the lowest valuation for each discount factor.
pub fn uniform_coase_check(
    prim: &Primitives,
    x_cap: f64,
    theta_top: f64,
    deltas: &[f64],
    opts: &CoaseOptions,
) -> Result<Vec<CoaseMargin>> {
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("discount factors must increase".into()));
    }
    let floor = prim.utility_u(x_cap, prim.theta_lo())?;
    let mass = prim.dist.cdf(theta_top);
    use rayon::prelude::*;
    deltas
        .par_iter()
        .map(|&d| {
            let p = prim.with_delta(d);
            p.validate()?;
            let sol = solve_weak_markov(&p, x_cap, theta_top, opts)?;
            let v = sol.top_value();
            Ok(CoaseMargin {
                delta: d,
                value: v,
                margin: v / mass - floor,
                clearing_time: sol.clearing_time,
                bellman_residual: sol.bellman_residual,
            })
        })
        .collect()
}

/// True when the margins fall at every step after the first rise, if any.
pub fn eventually_decreasing(margins: &[CoaseMargin]) -> bool {
    let start = margins.windows(2).rposition(|w| w[1].margin >= w[0].margin).map_or(0, |i| i + 1);
    start + 1 < margins.len() || margins.len() <= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_abs_diff_eq;

    fn small() -> CoaseOptions {
        CoaseOptions { grid_n: 301, ..CoaseOptions::default() }
    }

    #[test]
    fn cm_clears_at_once() {
        for d in [0.5, 0.9, 0.99] {
            let s = solve_weak_markov(&presets::cm().with_delta(d), 3.0, 2.0, &small()).unwrap();
            assert_eq!(s.clearing_time, 1);
            assert_abs_diff_eq!(s.top_value(), 2.0, epsilon = 1e-12);
            let c = clearing_diagnostics(&s);
            assert!(c.finite && c.price_cap_holds);
            assert_abs_diff_eq!(c.worst_price_cap, 0.0, epsilon = 1e-12);
            assert_eq!(c.mass_ratio, None);
        }
    }

    #[test]
    fn rm_has_multi_period_path() {
        let p = presets::rm().with_delta(0.5);
        let s = solve_weak_markov(&p, 3.0, 2.0, &CoaseOptions { check_uniqueness: true, ..small() }).unwrap();
        assert!(s.clearing_time > 1);
        assert!(s.trajectory.windows(2).all(|w| w[1] < w[0]));
        assert!(s.top_value() > 0.605 * p.dist.cdf(2.0));
        assert!(s.bellman_residual <= 1e-8);
        assert!(s.indifference_residual <= 1e-8);
        assert!(s.restart_spread.unwrap() <= 1e-7);
        let c = clearing_diagnostics(&s);
        assert!(c.price_cap_holds && c.finite);
        assert!(c.mass_ratio.unwrap() < 1.0);
    }

    #[test]
    fn thin_state_clears_immediately() {
        let p = presets::rm().with_delta(0.9);
        let s = solve_weak_markov(&p, 3.0, 0.1 + 1e-9, &small()).unwrap();
        assert_eq!(s.clearing_time, 1);
        assert_abs_diff_eq!(s.top_value(), 0.605 * p.dist.cdf(0.1 + 1e-9), epsilon = 1e-12);
    }

    #[test]
    fn value_monotone_in_state_and_cap() {
        let p = presets::rm().with_delta(0.9);
        let s = solve_weak_markov(&p, 3.0, 2.0, &small()).unwrap();
        assert!(s.value.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let lower = solve_weak_markov(&p, 2.0, 2.0, &small()).unwrap();
        assert!(lower.top_value() <= s.top_value() + 1e-12);
    }

    #[test]
    fn margins_shrink_for_rm() {
        let p = presets::rm();
        let m = uniform_coase_check(&p, 3.0, 2.0, &[0.9, 0.99], &small()).unwrap();
        assert!(m[0].margin > m[1].margin && m[1].margin > 0.0);
        assert!(eventually_decreasing(&m));
        let c = uniform_coase_check(&presets::cm(), 3.0, 2.0, &[0.9, 0.99], &small()).unwrap();
        assert!(c.iter().all(|m| m.margin.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = presets::rm();
        assert!(solve_weak_markov(&p, 0.1, 2.0, &small()).is_err());
        assert!(solve_weak_markov(&p, 3.0, 0.1, &small()).is_err());
        assert!(uniform_coase_check(&p, 3.0, 2.0, &[0.99, 0.9], &small()).is_err());
    }
}
