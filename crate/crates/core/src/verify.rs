//! Numerical audit of constructed paths: buyer best response, seller
//! deviations, and payoff identities.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coase_solver::{solve_weak_markov, CoaseOptions};
use crate::error::Result;
use crate::model::{Primitives, TypeDistribution};
use crate::paths::{path_payoff_virtual, EquilibriumPath, PathKind};
use crate::quad;
use crate::static_mech::MechanismSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub identity: f64,
    pub indifference: f64,
    pub slack: f64,
    pub buyer_ic: f64,
    pub cap: f64,
    pub partition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { identity: 1e-6, indifference: 1e-8, slack: 1e-9, buyer_ic: 1e-7, cap: 1e-6, partition: 1e-12 }
    }
}

/// Types sampled per step in the buyer check.
const IC_SAMPLES: usize = 201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub pass: bool,
    /// Distance to the failure threshold; nonnegative iff `pass`.
    pub margin: f64,
    pub witness: String,
}

impl CheckEntry {
    /// Passes when `value >= floor`.
    pub fn at_least(name: &str, value: f64, floor: f64, witness: impl Into<String>) -> Self {
        let margin = value - floor;
        CheckEntry { name: name.into(), pass: margin >= 0.0, margin, witness: witness.into() }
    }

    /// Passes when `value <= ceiling`.
    pub fn at_most(name: &str, value: f64, ceiling: f64, witness: impl Into<String>) -> Self {
        let margin = ceiling - value;
        CheckEntry { name: name.into(), pass: margin >= 0.0, margin, witness: witness.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckEntry>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn new(checks: Vec<CheckEntry>) -> Self {
        let overall = checks.iter().all(|c| c.pass);
        VerificationReport { checks, overall }
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:<5} {:>13}  witness", "check", "pass", "margin")?;
        for c in &self.checks {
            let verdict = if c.pass { "ok" } else { "FAIL" };
            writeln!(f, "{:<22} {:<5} {:>13.4e}  {}", c.name, verdict, c.margin, c.witness)?;
        }
        write!(f, "overall: {}", if self.overall { "pass" } else { "FAIL" })
    }
}

/// Seller's continuation value after a deviation, given the allocation cap
/// in force and the highest remaining type.
pub trait Reversion: Sync {
    fn value(&self, x_cap: f64, theta_top: f64) -> Result<f64>;
}

/// Immediate clearing at the lowest valuation: `F(theta_top) u_bar(theta_lo)`.
pub struct CoasianReversion {
    lowest: f64,
    dist: TypeDistribution,
}

impl CoasianReversion {
    pub fn new(prim: &Primitives) -> Result<Self> {
        Ok(CoasianReversion { lowest: prim.u_bar(prim.x_hi, prim.theta_lo())?, dist: prim.dist.clone() })
    }
}

impl Reversion for CoasianReversion {
    fn value(&self, _x_cap: f64, theta_top: f64) -> Result<f64> {
        Ok(self.dist.cdf(theta_top) * self.lowest)
    }
}

/// Weak-Markov equilibrium value, solved per (cap, state) and cached.
pub struct WeakMarkovReversion {
    prim: Primitives,
    opts: CoaseOptions,
    cache: Mutex<HashMap<(u64, u64), f64>>,
}

impl WeakMarkovReversion {
    pub fn new(prim: &Primitives, opts: CoaseOptions) -> Self {
        WeakMarkovReversion { prim: prim.clone(), opts, cache: Mutex::new(HashMap::new()) }
    }

    /// Pre-solve every state the path checks will query.
    pub fn for_path(prim: &Primitives, path: &EquilibriumPath, opts: CoaseOptions) -> Result<Self> {
        let rev = Self::new(prim, opts);
        let mut states = vec![(prim.x_hi, prim.theta_hi())];
        for (t, s) in path.steps.iter().enumerate() {
            if t > 0 {
                states.push((path.steps[t - 1].offer.x, s.cutoff_hi));
            }
            states.push((s.offer.x, s.cutoff_lo));
        }
        states.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        states.dedup();
        let solved: Vec<((u64, u64), f64)> = states
            .par_iter()
            .map(|&(x, t)| Ok(((x.to_bits(), t.to_bits()), rev.solve(x, t)?)))
            .collect::<Result<_>>()?;
        rev.cache.lock().expect("cache lock").extend(solved);
        Ok(rev)
    }

    fn solve(&self, x_cap: f64, theta_top: f64) -> Result<f64> {
        if theta_top <= self.prim.theta_lo() {
            return Ok(0.0);
        }
        let x = x_cap.clamp(self.prim.x_lo, self.prim.x_hi);
        Ok(solve_weak_markov(&self.prim, x, theta_top.min(self.prim.theta_hi()), &self.opts)?.top_value())
    }
}

impl Reversion for WeakMarkovReversion {
    fn value(&self, x_cap: f64, theta_top: f64) -> Result<f64> {
        let key = (x_cap.to_bits(), theta_top.to_bits());
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = self.solve(x_cap, theta_top)?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }
}

pub struct VerifyContext<'a> {
    /// Unconstrained commitment schedule.
    pub benchmark: &'a MechanismSchedule,
    /// Efficiency-constrained schedule; enables the constrained cap.
    pub constrained: Option<&'a MechanismSchedule>,
    pub reversion: &'a dyn Reversion,
    pub tol: Tolerances,
}

fn masses(prim: &Primitives, path: &EquilibriumPath) -> Vec<f64> {
    path.steps.iter().map(|s| prim.dist.cdf(s.cutoff_hi) - prim.dist.cdf(s.cutoff_lo)).collect()
}

/// Discounted seller continuation from each step, masses taken from the cutoffs.
fn continuations(prim: &Primitives, path: &EquilibriumPath) -> Vec<f64> {
    let m = masses(prim, path);
    let n = path.len();
    let mut c = vec![0.0; n + 1];
    for t in (0..n).rev() {
        c[t] = m[t] * path.steps[t].offer.p + path.delta * c[t + 1];
    }
    c
}

fn direct_from_cutoffs(prim: &Primitives, path: &EquilibriumPath) -> f64 {
    continuations(prim, path)[0]
}

fn worst<I: IntoIterator<Item = (f64, String)>>(items: I) -> (f64, String) {
    items.into_iter().fold((f64::INFINITY, "vacuous".to_string()), |a, b| if b.0 < a.0 { b } else { a })
}

fn vacuous_zero(v: (f64, String)) -> (f64, String) {
    if v.0.is_finite() {
        v
    } else {
        (0.0, v.1)
    }
}

pub fn check_partition(prim: &Primitives, path: &EquilibriumPath, tol: &Tolerances) -> CheckEntry {
    let (lo, hi) = prim.dist.support();
    let s = &path.steps;
    let mut errs = vec![((s[0].cutoff_hi - hi).abs(), "t=0 top".to_string())];
    errs.push(((s[s.len() - 1].cutoff_lo - lo).abs(), format!("t={} bottom", s.len() - 1)));
    for (t, st) in s.iter().enumerate() {
        let mass = prim.dist.cdf(st.cutoff_hi) - prim.dist.cdf(st.cutoff_lo);
        errs.push(((st.mass - mass).abs(), format!("t={t} mass")));
        if st.cutoff_lo >= st.cutoff_hi {
            errs.push((st.cutoff_lo - st.cutoff_hi + 1.0, format!("t={t} order")));
        }
        if t + 1 < s.len() {
            errs.push(((st.cutoff_lo - s[t + 1].cutoff_hi).abs(), format!("t={t} gap")));
        }
    }
    let (e, w) = errs.into_iter().fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    CheckEntry::at_most("partition", e, tol.partition, w)
}

pub fn check_allocations(prim: &Primitives, path: &EquilibriumPath) -> CheckEntry {
    let slack = 1e-12;
    let mut items: Vec<(f64, String)> = path
        .steps
        .iter()
        .map(|s| ((s.offer.x - prim.x_lo).min(prim.x_hi - s.offer.x), format!("t={} bounds", s.t)))
        .collect();
    items.extend(path.steps.windows(2).map(|w| (w[0].offer.x - w[1].offer.x, format!("t={}", w[1].t))));
    let (m, w) = vacuous_zero(worst(items));
    CheckEntry::at_least("allocation_monotone", m, -slack, w)
}

pub fn check_prices(path: &EquilibriumPath) -> CheckEntry {
    let (m, w) =
        vacuous_zero(worst(path.steps.windows(2).map(|w| (w[0].offer.p - w[1].offer.p, format!("t={}", w[1].t)))));
    CheckEntry::at_least("price_monotone", m, -1e-12, w)
}

/// Cutoff indifference and sampled best response over every period and never buying.
pub fn check_buyer_ic(prim: &Primitives, path: &EquilibriumPath, tol: &Tolerances) -> Vec<CheckEntry> {
    let d = path.delta;
    let s = &path.steps;
    let n = s.len();

    let (gap, gw) = worst((0..n.saturating_sub(1)).map(|t| {
        let theta = s[t].cutoff_lo;
        let xe = prim.efficient_consumption(theta);
        let now = prim.utility_with_xe(s[t].offer.x, theta, xe) - s[t].offer.p;
        let wait = prim.utility_with_xe(s[t + 1].offer.x, theta, xe) - s[t + 1].offer.p;
        (-(now - d * wait).abs(), format!("t={t}"))
    }));
    let gap = if gap.is_finite() { -gap } else { 0.0 };
    let indiff = CheckEntry::at_most("buyer_indifference", gap, tol.indifference, gw);

    let disc: Vec<f64> = (0..n).map(|t| d.powi(t as i32)).collect();
    let per_step: Vec<(f64, String)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut w = (f64::INFINITY, String::new());
            for theta in quad::linspace(s[t].cutoff_lo, s[t].cutoff_hi, IC_SAMPLES) {
                let xe = prim.efficient_consumption(theta);
                let gain = |k: usize| disc[k] * (prim.utility_with_xe(s[k].offer.x, theta, xe) - s[k].offer.p);
                let own = gain(t);
                let other = (0..n).filter(|&k| k != t).map(gain).fold(0.0, f64::max);
                if own - other < w.0 {
                    w = (own - other, format!("t={t} theta={theta:.6}"));
                }
            }
            w
        })
        .collect();
    let (m, w) = worst(per_step);
    let sampled = CheckEntry::at_least("buyer_ic_sampled", m, -tol.buyer_ic, w);
    vec![indiff, sampled]
}

/// Purchase-now advantage over waiting one period rises with the type.
pub fn check_skimming(prim: &Primitives, path: &EquilibriumPath) -> CheckEntry {
    let d = path.delta;
    let s = &path.steps;
    let lo = prim.theta_lo();
    let (m, w) = vacuous_zero(worst((0..s.len().saturating_sub(1)).map(|t| {
        let diff = |theta: f64| {
            let xe = prim.efficient_consumption(theta);
            prim.utility_with_xe(s[t].offer.x, theta, xe)
                - s[t].offer.p
                - d * (prim.utility_with_xe(s[t + 1].offer.x, theta, xe) - s[t + 1].offer.p)
        };
        let grid = quad::linspace(lo, s[t].cutoff_hi, IC_SAMPLES);
        let vals: Vec<f64> = grid.iter().map(|&th| diff(th)).collect();
        let (k, inc) =
            vals.windows(2)
                .map(|w| w[1] - w[0])
                .enumerate()
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        (inc, format!("t={t} theta={:.6}", grid[k]))
    })));
    CheckEntry::at_least("skimming", m, -1e-12, w)
}

/// On-path continuation never falls below the punishment value.
pub fn check_seller_deviation_reversion(
    prim: &Primitives,
    path: &EquilibriumPath,
    reversion: &dyn Reversion,
    tol: &Tolerances,
) -> Result<CheckEntry> {
    let c = continuations(prim, path);
    let mut items = Vec::with_capacity(path.len());
    for (t, s) in path.steps.iter().enumerate() {
        let cap = if t == 0 { prim.x_hi } else { path.steps[t - 1].offer.x };
        let r = reversion.value(cap, s.cutoff_hi)?;
        items.push((c[t] - r, format!("t={t}")));
    }
    let (m, w) = worst(items);
    Ok(CheckEntry::at_least("seller_reversion", m, -tol.slack, w))
}

/// Undercutting to any later on-path offer, followed by reversion, does not pay.
pub fn check_onpath_markov(
    prim: &Primitives,
    path: &EquilibriumPath,
    reversion: &dyn Reversion,
    tol: &Tolerances,
) -> Result<CheckEntry> {
    let c = continuations(prim, path);
    let s = &path.steps;
    let n = s.len();
    let after: Vec<f64> = s.iter().map(|st| reversion.value(st.offer.x, st.cutoff_lo)).collect::<Result<_>>()?;
    let mut items = Vec::new();
    for i in 0..n {
        let top = prim.dist.cdf(s[i].cutoff_hi);
        for j in i + 1..n {
            let dev = (top - prim.dist.cdf(s[j].cutoff_lo)) * s[j].offer.p + path.delta * after[j];
            items.push((c[i] - dev, format!("t={i}->{j}")));
        }
    }
    let (m, w) = vacuous_zero(worst(items));
    Ok(CheckEntry::at_least("onpath_markov", m, -tol.slack, w))
}

/// Commitment cap, constrained cap when available, stored payoff, and the direct/virtual identity.
pub fn check_identities(
    prim: &Primitives,
    path: &EquilibriumPath,
    benchmark: &MechanismSchedule,
    constrained: Option<&MechanismSchedule>,
    tol: &Tolerances,
) -> Result<Vec<CheckEntry>> {
    let direct = direct_from_cutoffs(prim, path);
    let virt = path_payoff_virtual(prim, path)?;
    let mut out = vec![
        CheckEntry::at_most("payoff_record", (path.payoff - direct).abs(), tol.slack, "stored vs direct"),
        CheckEntry::at_most(
            "commitment_cap",
            direct,
            benchmark.payoff + tol.cap,
            format!("pi={:.9}", benchmark.payoff),
        ),
    ];
    if let Some(c) = constrained {
        out.push(CheckEntry::at_most("constrained_cap", direct, c.payoff + tol.cap, format!("pi_e={:.9}", c.payoff)));
    }
    out.push(CheckEntry::at_most("payoff_identity", (direct - virt).abs(), tol.identity, format!("virtual={virt:.9}")));
    Ok(out)
}

/// Run every path check.
pub fn verify_path(prim: &Primitives, path: &EquilibriumPath, ctx: &VerifyContext<'_>) -> Result<VerificationReport> {
    let tol = &ctx.tol;
    let prim = &prim.with_delta(path.delta);
    if path.is_empty() {
        return Ok(VerificationReport::new(vec![CheckEntry::at_least("nonempty", 0.0, 1.0, "no steps")]));
    }
    let mut checks = vec![check_partition(prim, path, tol), check_allocations(prim, path), check_prices(path)];
    checks.extend(check_buyer_ic(prim, path, tol));
    checks.push(check_skimming(prim, path));
    checks.push(check_seller_deviation_reversion(prim, path, ctx.reversion, tol)?);
    checks.push(check_onpath_markov(prim, path, ctx.reversion, tol)?);
    checks.extend(check_identities(prim, path, ctx.benchmark, ctx.constrained, tol)?);
    Ok(VerificationReport::new(checks))
}

/// Reversion source matching the path: immediate clearing when the lowest
/// type's efficient consumption fits under `x_lo`, the weak-Markov value otherwise.
pub fn default_reversion(prim: &Primitives, path: &EquilibriumPath, opts: CoaseOptions) -> Result<Box<dyn Reversion>> {
    let prim = prim.with_delta(path.delta);
    if path.kind != PathKind::RelaxedTail && prim.check_assumptions().holds("A3") {
        Ok(Box::new(CoasianReversion::new(&prim)?))
    } else {
        Ok(Box::new(WeakMarkovReversion::for_path(&prim, path, opts)?))
    }
}

/// Corrupted copies of a path, used as negative controls.
pub mod fixtures {
    use crate::paths::EquilibriumPath;

    pub fn bump_price(path: &EquilibriumPath, t: usize, by: f64) -> EquilibriumPath {
        let mut p = path.clone();
        p.steps[t].offer.p += by;
        p
    }

    pub fn bump_all_prices(path: &EquilibriumPath, by: f64) -> EquilibriumPath {
        let mut p = path.clone();
        for s in &mut p.steps {
            s.offer.p += by;
        }
        p
    }

    pub fn bump_allocation(path: &EquilibriumPath, t: usize, by: f64) -> EquilibriumPath {
        let mut p = path.clone();
        p.steps[t].offer.x += by;
        p
    }

    pub fn shift_cutoff_lo(path: &EquilibriumPath, t: usize, by: f64) -> EquilibriumPath {
        let mut p = path.clone();
        p.steps[t].cutoff_lo += by;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_reputational, coasian_path};
    use crate::presets;
    use crate::static_mech::{solve_unconstrained, DEFAULT_GRID};

    fn run(prim: &Primitives, path: &EquilibriumPath) -> VerificationReport {
        let sched = solve_unconstrained(prim, DEFAULT_GRID).unwrap();
        let rev = CoasianReversion::new(prim).unwrap();
        let ctx = VerifyContext { benchmark: &sched, constrained: None, reversion: &rev, tol: Tolerances::default() };
        verify_path(prim, path, &ctx).unwrap()
    }

    #[test]
    fn coasian_path_passes_with_zero_reversion_margin() {
        let p = presets::cm();
        let r = run(&p, &coasian_path(&p).unwrap());
        assert!(r.overall, "{r}");
        assert!(r.get("seller_reversion").unwrap().margin.abs() < 1e-8);
    }

    #[test]
    fn reputational_passes_and_price_bump_fails() {
        let p = presets::cm().with_delta(0.999);
        let path = build_reputational(&p, 50).unwrap();
        let r = run(&p, &path);
        for name in ["buyer_indifference", "buyer_ic_sampled", "skimming", "payoff_identity"] {
            assert!(r.get(name).unwrap().pass, "{r}");
        }
        let p = presets::cm().with_delta(0.999995);
        let path = build_reputational(&p, 200).unwrap();
        let r = run(&p, &path);
        assert!(r.overall, "{r}");
        let bad = run(&p, &fixtures::bump_price(&path, 2, 0.01));
        assert!(!bad.overall);
        assert!(
            bad.get("buyer_indifference").unwrap().witness.contains("t=2")
                || bad.get("buyer_indifference").unwrap().witness.contains("t=1")
        );
        assert!(!bad.get("buyer_ic_sampled").unwrap().pass);
    }

    #[test]
    fn low_delta_breaks_reversion() {
        let p = presets::cm().with_delta(0.5);
        let path = build_reputational(&p, 200).unwrap();
        let r = run(&p, &path);
        assert!(!r.get("seller_reversion").unwrap().pass, "{r}");
    }

    #[test]
    fn report_is_deterministic() {
        let p = presets::cm().with_delta(0.99);
        let path = build_reputational(&p, 20).unwrap();
        assert_eq!(run(&p, &path), run(&p, &path));
    }

    #[test]
    fn margin_sign_matches_verdict() {
        let e = CheckEntry::at_least("x", -2e-9, -1e-9, "");
        assert!(!e.pass && e.margin < 0.0);
        let e = CheckEntry::at_most("x", 0.5e-6, 1e-6, "");
        assert!(e.pass && e.margin > 0.0);
    }
}
