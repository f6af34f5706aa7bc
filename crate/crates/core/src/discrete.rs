//! Finite-type game: backward induction without free disposal, the
//! with-disposal Coasian/reputational contrast, and positive seller cost.
//!
//! Only pure cutoff states are solved. Mixing by a marginal type over a
//! residual mass is not represented, so off-path existence arguments that
//! rely on it are not checked here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ValueFunction;
use crate::paths::Offer;
use crate::quad;
use crate::verify::{CheckEntry, Tolerances};

/// Note attached to every solution.
pub const PURE_STATE_NOTE: &str = "pure cutoff states only; residual-mass mixing of the marginal type is not verified";

/// Seller cost of producing allocation `x`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostFunction {
    #[default]
    Zero,
    /// `c1 x`
    Linear { c1: f64 },
    /// `c1 x + c2 x^2`
    Quadratic { c1: f64, c2: f64 },
}

impl CostFunction {
    pub fn cost(&self, x: f64) -> f64 {
        match *self {
            CostFunction::Zero => 0.0,
            CostFunction::Linear { c1 } => c1 * x,
            CostFunction::Quadratic { c1, c2 } => c1 * x + c2 * x * x,
        }
    }

    pub fn marginal(&self, x: f64) -> f64 {
        match *self {
            CostFunction::Zero => 0.0,
            CostFunction::Linear { c1 } => c1,
            CostFunction::Quadratic { c1, c2 } => c1 + 2.0 * c2 * x,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CostFunction::Zero)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CostFunction::Zero => true,
            CostFunction::Linear { c1 } => c1 > 0.0,
            CostFunction::Quadratic { c1, c2 } => c1 > 0.0 && c2 >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid("cost needs c1 > 0 and c2 >= 0".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub types: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: ValueFunction,
    pub x_lo: f64,
    pub x_hi: f64,
    pub free_disposal: bool,
    pub cost: CostFunction,
}

impl DiscreteModel {
    pub fn new(
        types: Vec<f64>,
        probs: Vec<f64>,
        value: ValueFunction,
        x_lo: f64,
        x_hi: f64,
        free_disposal: bool,
        cost: CostFunction,
    ) -> Result<Self> {
        let m = DiscreteModel { types, probs, value, x_lo, x_hi, free_disposal, cost };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.value.validate()?;
        self.cost.validate()?;
        if self.types.is_empty() || self.types.len() != self.probs.len() {
            return Err(Error::Invalid("types and probs must be nonempty and of equal length".into()));
        }
        if self.types.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("types must strictly increase".into()));
        }
        if self.probs.iter().any(|&q| !(q > 0.0)) {
            return Err(Error::Invalid("probabilities must be positive".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("probabilities sum to {total}, not 1")));
        }
        if !(self.x_lo > 0.0 && self.x_lo <= self.x_hi) {
            return Err(Error::Invalid("allocation bounds need 0 < x_lo <= x_hi".into()));
        }
        if !self.cost.is_zero() {
            let t = self.types[0];
            let xe = self.efficient(0);
            let margin = self.value.value(xe) + t * xe - self.cost.cost(self.x_lo);
            if !(margin > 1e-12) {
                return Err(Error::Invalid(format!("serving the lowest type is unprofitable (margin {margin:.3e})")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.types.len()
    }

    /// `x^e` of type `i` on `[0, x_hi]`.
    pub fn efficient(&self, i: usize) -> f64 {
        self.value.efficient(self.types[i], self.x_hi)
    }

    /// Utility of type `i` from allocation `x`, with or without disposal.
    pub fn util(&self, x: f64, i: usize, disposal: bool) -> f64 {
        let t = self.types[i];
        let xa = if disposal { x.min(self.efficient(i)) } else { x };
        self.value.value(xa) + t * xa
    }

    /// Allocation in `[x_lo, x_hi]` maximizing buyer utility net of seller cost.
    pub fn cost_efficient(&self, i: usize) -> f64 {
        let t = self.types[i];
        let g = |x: f64| self.value.marginal(x) + t - self.cost.marginal(x);
        let x = if g(0.0) <= 0.0 {
            0.0
        } else if g(self.x_hi) >= 0.0 {
            self.x_hi
        } else {
            quad::bisect(g, 0.0, self.x_hi)
        };
        x.clamp(self.x_lo, self.x_hi)
    }

    /// `Q_i = q_1 + ... + q_i` for `i = 0..=K`.
    fn cumulative(&self) -> Vec<f64> {
        let mut q = vec![0.0];
        for p in &self.probs {
            q.push(q.last().unwrap() + p);
        }
        q
    }
}

/// `theta_i - (1 - Q_i) / q_i`.
pub fn discrete_virtual_values(model: &DiscreteModel) -> Vec<f64> {
    let q = model.cumulative();
    (0..model.k()).map(|i| model.types[i] - (1.0 - q[i + 1]).max(0.0) / model.probs[i]).collect()
}

/// Discrete analogue of the nonnegative-virtual-surplus condition.
pub fn discrete_a4_holds(model: &DiscreteModel) -> bool {
    discrete_virtual_values(model).iter().enumerate().all(|(i, &phi)| {
        let x = model.efficient(i);
        model.value.value(x) + x * phi >= -1e-9
    })
}

/// Upper bound on any seller payoff when buyers can discard: sum over types of the
/// best nonnegative local virtual surplus.
pub fn discrete_static_bound(model: &DiscreteModel) -> f64 {
    let q = model.cumulative();
    let k = model.k();
    (0..k)
        .map(|i| {
            let qi = model.probs[i];
            let rest = (1.0 - q[i + 1]).max(0.0);
            let g = |x: f64| {
                let up = if i + 1 < k { model.util(x, i + 1, true) - model.util(x, i, true) } else { 0.0 };
                qi * model.util(x, i, true) - rest * up
            };
            let shift = if i + 1 < k { rest * (model.types[i + 1] - model.types[i]) / qi } else { 0.0 };
            let cand = model.value.efficient(model.types[i] - shift, model.x_hi).clamp(model.x_lo, model.x_hi);
            g(cand).max(g(model.x_lo)).max(0.0)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiscreteMode {
    NoDisposal,
    Coasian,
    Reputational,
    WithCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePeriod {
    pub t: usize,
    pub offer: Offer,
    /// Indices of the types buying in this period.
    pub buyers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub mode: DiscreteMode,
    pub delta: f64,
    pub periods: Vec<DiscretePeriod>,
    pub payoff: f64,
    pub per_type_alloc: Vec<Option<f64>>,
    pub per_type_consumption: Vec<Option<f64>>,
    pub unique_outcome: bool,
    pub delta_threshold: Option<f64>,
    pub checks: Vec<CheckEntry>,
    pub notes: Vec<String>,
}

impl DiscreteSolution {
    pub fn allocations(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.offer.x).collect()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.offer.p).collect()
    }

    pub fn verified(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(e.to_string());
        wtr.write_record(["t", "x", "p", "buyers"]).map_err(io)?;
        for p in &self.periods {
            let buyers: Vec<String> = p.buyers.iter().map(|b| (b + 1).to_string()).collect();
            wtr.serialize((p.t, p.offer.x, p.offer.p, buyers.join(" "))).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Tie tolerance for distinct on-path choices.
const TIE_TOL: f64 = 1e-9;
const ALLOC_GRID: usize = 201;

fn allocation_grid(model: &DiscreteModel) -> Vec<f64> {
    let mut pts: Vec<(f64, bool)> =
        quad::linspace(model.x_lo, model.x_hi, ALLOC_GRID).into_iter().map(|x| (x, false)).collect();
    for i in 0..model.k() {
        pts.push((model.efficient(i).clamp(model.x_lo, model.x_hi), true));
        pts.push((model.cost_efficient(i), true));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(pts.len());
    for (x, special) in pts {
        match out.last_mut() {
            Some(last) if (x - last.0).abs() < 1e-12 => {
                if special && !last.1 {
                    *last = (x, true);
                }
            }
            _ => out.push((x, special)),
        }
    }
    out.into_iter().map(|p| p.0).collect()
}

struct Induction {
    payoff: f64,
    /// (allocation, price, next state) along the path.
    path: Vec<(f64, f64, usize)>,
    tie: bool,
}

/// Exhaustive backward induction over (remaining lowest types, allocation cap).
fn backward_induction(model: &DiscreteModel, delta: f64, disposal: bool) -> Induction {
    let grid = allocation_grid(model);
    let g = grid.len();
    let k = model.k();
    let q = model.cumulative();
    let util: Vec<Vec<f64>> = grid.iter().map(|&x| (0..k).map(|i| model.util(x, i, disposal)).collect()).collect();
    let cost: Vec<f64> = grid.iter().map(|&x| model.cost.cost(x)).collect();

    // value[s][c], cont[s][c][i], choice[s][c] = (a, j, p, tie)
    let mut value = vec![vec![0.0; g]; k + 1];
    let mut cont = vec![vec![vec![0.0; k]; g]; k + 1];
    let mut choice = vec![vec![(0usize, 0usize, 0.0f64, false); g]; k + 1];
    for s in 1..=k {
        for c in 0..g {
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize, 0.0f64);
            let mut second = f64::NEG_INFINITY;
            for a in 0..=c {
                for j in 0..s {
                    let p = util[a][j] - delta * cont[j][a][j];
                    let val = (q[s] - q[j]) * (p - cost[a]) + delta * value[j][a];
                    if val > best.0 {
                        second = best.0;
                        best = (val, a, j, p);
                    } else if val > second {
                        second = val;
                    }
                }
            }
            let (val, a, j, p) = best;
            value[s][c] = val;
            choice[s][c] = (a, j, p, second > val - TIE_TOL);
            cont[s][c] = (0..k).map(|i| (util[a][i] - p).max(delta * cont[j][a][i])).collect();
        }
    }

    let mut path = Vec::new();
    let mut tie = false;
    let (mut s, mut c) = (k, g - 1);
    while s > 0 {
        let (a, j, p, t) = choice[s][c];
        tie |= t;
        path.push((grid[a], p, j));
        s = j;
        c = a;
    }
    Induction { payoff: value[k][g - 1], path, tie }
}

fn solution_from_induction(
    model: &DiscreteModel,
    delta: f64,
    disposal: bool,
    mode: DiscreteMode,
    ind: &Induction,
) -> DiscreteSolution {
    let k = model.k();
    let mut upper = k;
    let mut periods = Vec::new();
    let mut per_type_alloc = vec![None; k];
    for (t, &(x, p, j)) in ind.path.iter().enumerate() {
        let buyers: Vec<usize> = (j..upper).rev().collect();
        for &b in &buyers {
            per_type_alloc[b] = Some(x);
        }
        periods.push(DiscretePeriod { t, offer: Offer { x, p }, buyers });
        upper = j;
    }
    let per_type_consumption = per_type_alloc
        .iter()
        .enumerate()
        .map(|(i, a)| a.map(|x| if disposal { x.min(model.efficient(i)) } else { x }))
        .collect();
    let mut notes = vec![PURE_STATE_NOTE.to_string()];
    if ind.tie {
        notes.push("AMBIGUOUS: another on-path choice ties within 1e-9".into());
    }
    DiscreteSolution {
        mode,
        delta,
        periods,
        payoff: ind.payoff,
        per_type_alloc,
        per_type_consumption,
        unique_outcome: !ind.tie,
        delta_threshold: None,
        checks: Vec::new(),
        notes,
    }
}

/// Smallest tested discount factor in `[0.5, delta]` giving the same on-path allocations.
fn outcome_threshold(model: &DiscreteModel, delta: f64, disposal: bool, reference: &[f64]) -> Option<f64> {
    let same = |d: f64| {
        let ind = backward_induction(model, d, disposal);
        ind.path.len() == reference.len() && ind.path.iter().zip(reference).all(|(a, b)| (a.0 - b).abs() < 1e-12)
    };
    let lo = 0.5_f64.min(delta);
    if !same(delta) {
        return None;
    }
    if same(lo) {
        return Some(lo);
    }
    let (mut a, mut b) = (lo, delta);
    for _ in 0..30 {
        let mid = 0.5 * (a + b);
        if same(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Invalid(format!("delta must lie in [0, 1) (got {delta})")));
    }
    Ok(())
}

/// Backward induction where the buyer must consume the whole allocation.
pub fn solve_no_disposal(model: &DiscreteModel, delta: f64) -> Result<DiscreteSolution> {
    check_delta(delta)?;
    let ind = backward_induction(model, delta, false);
    let mut sol = solution_from_induction(model, delta, false, DiscreteMode::NoDisposal, &ind);
    let allocs = sol.allocations();
    sol.delta_threshold = outcome_threshold(model, delta, false, &allocs);
    sol.checks = discrete_deviation_checks(model, delta, false, &sol.periods, &Tolerances::default());
    Ok(sol)
}

/// Backward induction with seller cost, using the model's disposal setting.
pub fn solve_with_cost(model: &DiscreteModel, delta: f64) -> Result<DiscreteSolution> {
    if model.cost.is_zero() {
        return Err(Error::Invalid("solve_with_cost needs a nonzero cost".into()));
    }
    check_delta(delta)?;
    let disposal = model.free_disposal;
    let ind = backward_induction(model, delta, disposal);
    let mut sol = solution_from_induction(model, delta, disposal, DiscreteMode::WithCost, &ind);
    let allocs = sol.allocations();
    sol.delta_threshold = outcome_threshold(model, delta, disposal, &allocs);
    let efficient =
        (0..model.k()).all(|i| sol.per_type_alloc[i].is_some_and(|x| (x - model.cost_efficient(i)).abs() < 1e-12));
    if !efficient {
        sol.notes.push("per-type allocations differ from the cost-efficient ones".into());
    }
    Ok(sol)
}

/// Raw backward induction with the model's own disposal and cost settings.
pub fn solve_backward(model: &DiscreteModel, delta: f64) -> Result<DiscreteSolution> {
    check_delta(delta)?;
    let ind = backward_induction(model, delta, model.free_disposal);
    let mode = if model.cost.is_zero() { DiscreteMode::NoDisposal } else { DiscreteMode::WithCost };
    Ok(solution_from_induction(model, delta, model.free_disposal, mode, &ind))
}

/// With-disposal outcomes: immediate clearing, or screening each type in turn.
pub fn solve_with_disposal(model: &DiscreteModel, delta: f64, mode: DiscreteMode) -> Result<DiscreteSolution> {
    if !model.free_disposal {
        return Err(Error::Invalid("model has free_disposal = false".into()));
    }
    check_delta(delta)?;
    let k = model.k();
    let periods = match mode {
        DiscreteMode::Coasian => vec![DiscretePeriod {
            t: 0,
            offer: Offer { x: model.x_hi, p: model.util(model.x_hi, 0, true) },
            buyers: (0..k).rev().collect(),
        }],
        DiscreteMode::Reputational => reputational_periods(model, delta),
        _ => return Err(Error::Invalid("mode must be COASIAN or REPUTATIONAL".into())),
    };
    let tol = Tolerances::default();
    let checks = discrete_deviation_checks(model, delta, true, &periods, &tol);
    if checks.iter().any(|c| !c.pass) {
        let need = required_delta(model, delta);
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::Infeasible(format!(
            "reputational outcome fails {} at delta={delta}; {}",
            failed.join(", "),
            match need {
                Some(d) => format!("requires delta >= {d:.6}"),
                None => "no delta below 1 passes".into(),
            }
        )));
    }
    let mut per_type_alloc = vec![None; k];
    let mut payoff = 0.0;
    let mut disc = 1.0;
    for p in &periods {
        for &b in &p.buyers {
            per_type_alloc[b] = Some(p.offer.x);
            payoff += disc * model.probs[b] * p.offer.p;
        }
        disc *= delta;
    }
    let per_type_consumption =
        per_type_alloc.iter().enumerate().map(|(i, a)| a.map(|x: f64| x.min(model.efficient(i)))).collect();
    Ok(DiscreteSolution {
        mode,
        delta,
        periods,
        payoff,
        per_type_alloc,
        per_type_consumption,
        unique_outcome: false,
        delta_threshold: None,
        checks,
        notes: vec![
            PURE_STATE_NOTE.to_string(),
            "with disposal both immediate clearing and screening are sustainable".into(),
        ],
    })
}

fn reputational_periods(model: &DiscreteModel, delta: f64) -> Vec<DiscretePeriod> {
    let k = model.k();
    let phi = discrete_virtual_values(model);
    // allocation of type i, top type first
    let xs: Vec<f64> =
        (0..k)
            .map(|i| {
                if i == 0 {
                    model.x_lo
                } else {
                    model.value.efficient(phi[i], model.x_hi).clamp(model.x_lo, model.x_hi)
                }
            })
            .collect();
    let mut p = vec![0.0; k];
    p[0] = model.util(xs[0], 0, true);
    for i in 1..k {
        p[i] = model.util(xs[i], i, true) - delta * (model.util(xs[i - 1], i, true) - p[i - 1]);
    }
    (0..k)
        .rev()
        .enumerate()
        .map(|(t, i)| DiscretePeriod { t, offer: Offer { x: xs[i], p: p[i] }, buyers: vec![i] })
        .collect()
}

fn required_delta(model: &DiscreteModel, delta: f64) -> Option<f64> {
    let tol = Tolerances::default();
    let passes = |d: f64| {
        discrete_deviation_checks(model, d, true, &reputational_periods(model, d), &tol).iter().all(|c| c.pass)
    };
    let top = 1.0 - 1e-9;
    if !passes(top) {
        return None;
    }
    let (mut a, mut b) = (delta, top);
    for _ in 0..50 {
        let mid = 0.5 * (a + b);
        if passes(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    Some(b)
}

/// Buyer best response, reversion to immediate clearing, and undercuts to later offers.
pub fn discrete_deviation_checks(
    model: &DiscreteModel,
    delta: f64,
    disposal: bool,
    periods: &[DiscretePeriod],
    tol: &Tolerances,
) -> Vec<CheckEntry> {
    let k = model.k();
    let m = periods.len();
    let mut assigned = vec![None; k];
    for (t, p) in periods.iter().enumerate() {
        for &b in &p.buyers {
            assigned[b] = Some(t);
        }
    }

    // buyer side
    let mut ic = (f64::INFINITY, String::new());
    for (i, &own_t) in assigned.iter().enumerate() {
        let gain = |t: usize| delta.powi(t as i32) * (model.util(periods[t].offer.x, i, disposal) - periods[t].offer.p);
        let own = own_t.map_or(0.0, gain);
        let best_other =
            (0..m).filter(|&t| Some(t) != own_t).map(gain).chain(own_t.map(|_| 0.0)).fold(f64::NEG_INFINITY, f64::max);
        let margin = own - best_other;
        if margin < ic.0 {
            ic = (margin, format!("type {}", i + 1));
        }
    }

    // seller side
    let mass: Vec<f64> = periods.iter().map(|p| p.buyers.iter().map(|&b| model.probs[b]).sum()).collect();
    let mut cont = vec![0.0; m + 1];
    for t in (0..m).rev() {
        cont[t] = mass[t] * (periods[t].offer.p - model.cost.cost(periods[t].offer.x)) + delta * cont[t + 1];
    }
    let remaining = |t: usize| -> f64 { mass[t..].iter().sum() };
    let lowest = |cap: f64| model.util(cap, 0, disposal) - model.cost.cost(cap);
    let mut rev = (f64::INFINITY, String::new());
    for t in 0..m {
        let cap = if t == 0 { model.x_hi } else { periods[t - 1].offer.x };
        let clear = remaining(t) * lowest(cap.min(model.x_hi)).max(0.0);
        let margin = cont[t] - clear;
        if margin < rev.0 {
            rev = (margin, format!("t={t}"));
        }
    }
    let mut markov = (f64::INFINITY, String::new());
    for i in 0..m {
        for j in i + 1..m {
            let take: f64 = mass[i..=j].iter().sum();
            let offer = periods[j].offer;
            let after = remaining(j + 1) * lowest(offer.x).max(0.0);
            let dev = take * (offer.p - model.cost.cost(offer.x)) + delta * after;
            let margin = cont[i] - dev;
            if margin < markov.0 {
                markov = (margin, format!("t={i}->{j}"));
            }
        }
    }
    let fin = |v: (f64, String)| if v.0.is_finite() { v } else { (0.0, "vacuous".into()) };
    let (icm, icw) = fin(ic);
    let (rm, rw) = fin(rev);
    let (mm, mw) = fin(markov);
    vec![
        CheckEntry::at_least("buyer_ic", icm, -tol.slack, icw),
        CheckEntry::at_least("seller_reversion", rm, -tol.slack, rw),
        CheckEntry::at_least("onpath_markov", mm, -tol.slack, mw),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_abs_diff_eq;

    #[test]
    fn virtual_values() {
        let v = discrete_virtual_values(&presets::three_type());
        assert_abs_diff_eq!(v[0], 1.1 - 0.04 / 0.96, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 2.1 - 0.01 / 0.03, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], 3.1, epsilon = 1e-12);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert!(discrete_a4_holds(&presets::three_type()));
        let one =
            DiscreteModel::new(vec![1.5], vec![1.0], presets::three_type().value, 0.1, 3.0, false, CostFunction::Zero)
                .unwrap();
        assert_eq!(discrete_virtual_values(&one), vec![1.5]);
    }

    #[test]
    fn no_disposal_sequence() {
        let s = solve_no_disposal(&presets::three_type(), 0.95).unwrap();
        assert_eq!(s.periods.len(), 3);
        let x = s.allocations();
        let p = s.prices();
        for (a, b) in x.iter().zip([2.1, 1.1, 0.1]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        for (a, b) in p.iter().zip([1.06975, 0.51, 0.005]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        assert!(s.unique_outcome);
        assert!(s.delta_threshold.unwrap() <= 0.95);
        assert!(s.verified(), "{:?}", s.checks);
    }

    #[test]
    fn single_type_clears() {
        let one =
            DiscreteModel::new(vec![2.1], vec![1.0], presets::three_type().value, 0.1, 3.0, false, CostFunction::Zero)
                .unwrap();
        let s = solve_no_disposal(&one, 0.9).unwrap();
        assert_eq!(s.periods.len(), 1);
        assert_abs_diff_eq!(s.periods[0].offer.x, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.periods[0].offer.p, one.util(1.1, 0, false), epsilon = 1e-12);
    }

    #[test]
    fn disposal_multiplicity() {
        let m = presets::three_type_disposal();
        let c = solve_with_disposal(&m, 0.99, DiscreteMode::Coasian).unwrap();
        assert_abs_diff_eq!(c.payoff, 0.005, epsilon = 1e-12);
        for i in 0..3 {
            assert_abs_diff_eq!(c.per_type_consumption[i].unwrap(), m.efficient(i), epsilon = 1e-12);
        }
        let r = solve_with_disposal(&m, 0.99, DiscreteMode::Reputational).unwrap();
        assert!(r.payoff > 0.005 + 1e-6);
        assert!(r.verified());
        let bound = discrete_static_bound(&m);
        assert!(c.payoff <= bound + 1e-12 && r.payoff <= bound + 1e-12);
        assert!(solve_with_disposal(&m, 0.99, DiscreteMode::NoDisposal).is_err());
        assert!(solve_with_disposal(&presets::three_type(), 0.99, DiscreteMode::Coasian).is_err());
    }

    #[test]
    fn cost_makes_allocations_efficient() {
        let m = presets::three_type_cost();
        let s = solve_with_cost(&m, 0.95).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s.per_type_alloc[i].unwrap(), m.cost_efficient(i), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.cost_efficient(2), 2.09, epsilon = 1e-12);
        assert!(s.unique_outcome);
        assert!(solve_with_cost(&presets::three_type_disposal(), 0.95).is_err());
    }

    #[test]
    fn zero_cost_with_disposal_is_ambiguous() {
        let s = solve_backward(&presets::three_type_disposal(), 0.95).unwrap();
        assert!(!s.unique_outcome);
    }

    #[test]
    fn profitability_condition() {
        let base = presets::three_type();
        let bad = DiscreteModel::new(
            base.types.clone(),
            base.probs.clone(),
            base.value.clone(),
            0.1,
            3.0,
            true,
            CostFunction::Linear { c1: 0.05 },
        );
        assert!(bad.is_err());
        assert!(DiscreteModel::new(base.types, vec![0.5, 0.3, 0.3], base.value, 0.1, 3.0, false, CostFunction::Zero)
            .is_err());
    }
}
