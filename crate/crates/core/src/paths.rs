//! Dynamic equilibrium paths: immediate clearing, the segment-skimming
//! construction, its interpolation family, and the relaxed-tail variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Primitives;
use crate::quad;

/// Panels per smooth piece when integrating a step's virtual surplus.
const VIRTUAL_PANELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub x: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub t: usize,
    pub offer: Offer,
    pub cutoff_hi: f64,
    pub cutoff_lo: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PathKind {
    Coasian,
    Reputational,
    ReputationalS,
    RelaxedTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPath {
    pub kind: PathKind,
    pub delta: f64,
    pub payoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub steps: Vec<PathStep>,
}

impl EquilibriumPath {
    fn from_offers(
        prim: &Primitives,
        kind: PathKind,
        cutoffs: &[f64],
        offers: Vec<Offer>,
        n: Option<usize>,
        s: Option<f64>,
    ) -> Self {
        let steps: Vec<PathStep> = offers
            .into_iter()
            .enumerate()
            .map(|(t, offer)| PathStep {
                t,
                offer,
                cutoff_hi: cutoffs[t],
                cutoff_lo: cutoffs[t + 1],
                mass: prim.dist.cdf(cutoffs[t]) - prim.dist.cdf(cutoffs[t + 1]),
            })
            .collect();
        let mut path = EquilibriumPath { kind, delta: prim.delta, payoff: 0.0, n, s, steps };
        path.payoff = path_payoff_direct(&path);
        path
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(e.to_string());
        wtr.write_record(["t", "x", "p", "cutoff_hi", "cutoff_lo", "mass"]).map_err(io)?;
        for s in &self.steps {
            wtr.serialize((s.t, s.offer.x, s.offer.p, s.cutoff_hi, s.cutoff_lo, s.mass)).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Clear the market at once with `(x_hi, u(x_hi, theta_lo))`.
pub fn coasian_path(prim: &Primitives) -> Result<EquilibriumPath> {
    prim.check_assumptions().require(&["A3", "A4"])?;
    let price = prim.u_bar(prim.x_hi, prim.theta_lo())?;
    let cutoffs = [prim.theta_hi(), prim.theta_lo()];
    let offers = vec![Offer { x: prim.x_hi, p: price }];
    Ok(EquilibriumPath::from_offers(prim, PathKind::Coasian, &cutoffs, offers, None, None))
}

/// Type indifferent between `(x, p)` now and `(next_x, next_p)` next period.
pub fn cutoff_indifference(prim: &Primitives, x: f64, p: f64, next_x: f64, next_p: f64) -> Result<f64> {
    if x < next_x - 1e-12 {
        return Err(Error::Invalid(format!("allocation {x} below next allocation {next_x}")));
    }
    let d = prim.delta;
    let gap = |t: f64| -> f64 {
        let xe = prim.efficient_consumption(t);
        prim.utility_with_xe(x, t, xe) - p - d * (prim.utility_with_xe(next_x, t, xe) - next_p)
    };
    prim.utility_u(x, prim.theta_lo())?;
    prim.utility_u(next_x, prim.theta_lo())?;
    let (lo, hi) = prim.dist.support();
    let (glo, ghi) = (gap(lo), gap(hi));
    let tol = 1e-12 * (1.0 + p.abs());
    if glo.abs() <= tol {
        return Ok(lo);
    }
    if ghi.abs() <= tol {
        return Ok(hi);
    }
    if glo > 0.0 {
        return Err(Error::NoRoot("every type prefers buying now".into()));
    }
    if ghi < 0.0 {
        return Err(Error::NoRoot("every type prefers waiting".into()));
    }
    Ok(quad::bisect(gap, lo, hi))
}

/// Type solving `x^m(theta) = level`, or `theta_lo` when already above it.
fn threshold_type(prim: &Primitives, level: f64) -> Result<f64> {
    let (lo, hi) = prim.dist.support();
    let g = |t: f64| prim.x_m(t).expect("inside support") - level;
    if g(lo) >= 0.0 {
        return Ok(lo);
    }
    if g(hi) < 0.0 {
        return Err(Error::Infeasible(format!(
            "commitment allocation never reaches {level}; no screening segment exists"
        )));
    }
    Ok(quad::bisect(g, lo, hi))
}

/// Prices from the terminal price backwards so every interior cutoff type is indifferent.
fn backward_prices(prim: &Primitives, cutoffs: &[f64], xs: &[f64], last_price: f64) -> Vec<f64> {
    let m = xs.len();
    let mut p = vec![0.0; m];
    p[m - 1] = last_price;
    for i in (0..m - 1).rev() {
        let theta = cutoffs[i + 1];
        let xe = prim.efficient_consumption(theta);
        p[i] = prim.utility_with_xe(xs[i], theta, xe)
            - prim.delta * (prim.utility_with_xe(xs[i + 1], theta, xe) - p[i + 1]);
    }
    p
}

fn check_prices(p: &[f64]) -> Result<()> {
    if let Some(t) = p.windows(2).position(|w| w[1] > w[0] + 1e-12) {
        return Err(Error::NonMonotone(format!("price rises after period {t}; delta too small for a skimming path")));
    }
    Ok(())
}

fn skimming_path(prim: &Primitives, n: usize, s: f64, kind: PathKind) -> Result<EquilibriumPath> {
    if n < 2 {
        return Err(Error::Invalid(format!("segment count must be at least 2 (got {n})")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Invalid(format!("interpolation s must lie in [0, 1] (got {s})")));
    }
    prim.check_assumptions().require(&["A3", "A4"])?;
    let (lo, hi) = prim.dist.support();
    let star = threshold_type(prim, prim.x_lo)?;
    if !(star < hi) {
        return Err(Error::Infeasible("screening interval is empty".into()));
    }

    let mut cutoffs: Vec<f64> = (0..n).map(|i| hi - i as f64 * (hi - star) / n as f64).collect();
    cutoffs.push(lo);

    let mut xs = Vec::with_capacity(n);
    for &t in &cutoffs[1..n] {
        let xm = prim.x_m(t)?.clamp(prim.x_lo, prim.x_hi);
        xs.push(s * xm + (1.0 - s) * prim.x_lo);
    }
    xs.push(prim.x_lo);

    let p = backward_prices(prim, &cutoffs, &xs, prim.u_bar(prim.x_hi, lo)?);
    check_prices(&p)?;
    let offers = xs.iter().zip(&p).map(|(&x, &p)| Offer { x, p }).collect();
    let s_tag = (kind == PathKind::ReputationalS).then_some(s);
    Ok(EquilibriumPath::from_offers(prim, kind, &cutoffs, offers, Some(n), s_tag))
}

/// Skimming path over `n` equal segments of the screening interval.
pub fn build_reputational(prim: &Primitives, n: usize) -> Result<EquilibriumPath> {
    skimming_path(prim, n, 1.0, PathKind::Reputational)
}

/// Allocations `s x_i + (1 - s) x_lo`, prices re-derived.
pub fn interpolate_family(prim: &Primitives, n: usize, s: f64) -> Result<EquilibriumPath> {
    skimming_path(prim, n, s, PathKind::ReputationalS)
}

/// Tolerance on the payoff reached by `target_payoff`.
pub const TARGET_TOL: f64 = 1e-4;

/// Interpolated path whose payoff hits `target`.
pub fn target_payoff(prim: &Primitives, n: usize, delta: f64, target: f64) -> Result<EquilibriumPath> {
    let prim = prim.with_delta(delta);
    prim.validate()?;
    let low = interpolate_family(&prim, n, 0.0)?;
    let high = interpolate_family(&prim, n, 1.0)?;
    let (plo, phi) = (low.payoff, high.payoff);
    if !(target >= plo - TARGET_TOL && target <= phi + TARGET_TOL) {
        return Err(Error::TargetOutOfRange { target, lo: plo, hi: phi });
    }
    if (target - phi).abs() <= TARGET_TOL {
        return Ok(high);
    }
    if (target - plo).abs() <= TARGET_TOL {
        return Ok(low);
    }
    let (mut a, mut b) = (0.0, 1.0);
    let mut best = high;
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let path = interpolate_family(&prim, n, mid)?;
        let err = path.payoff - target;
        let done = err.abs() <= 1e-10 || b - a < 1e-15;
        if err < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        best = path;
        if done {
            break;
        }
    }
    Ok(best)
}

/// Optional knobs of the relaxed-tail construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    /// Allocation bump of the second-to-last offer.
    pub eps_prime: Option<f64>,
    /// Cutoff of the bump offer.
    pub theta_dd: Option<f64>,
}

/// Screening steps floored at `x^e(theta_lo)`, then a bump offer and a clearing offer.
pub fn build_relaxed_tail(prim: &Primitives, n: usize, params: TailParams) -> Result<EquilibriumPath> {
    if n < 2 {
        return Err(Error::Invalid(format!("segment count must be at least 2 (got {n})")));
    }
    prim.check_assumptions().require(&["A1", "A2"])?;
    let (lo, hi) = prim.dist.support();
    let floor = prim.efficient_consumption(lo);
    if floor < prim.x_lo {
        return Err(Error::Infeasible(format!("efficient consumption {floor} of the lowest type is below x_lo")));
    }
    let eps = params.eps_prime.unwrap_or(1e-2 * (prim.x_hi - prim.x_lo));
    if !(eps >= 0.0) || floor + eps > prim.x_hi + 1e-12 {
        return Err(Error::Infeasible(format!("bump {eps} does not fit under x_hi")));
    }
    let star = threshold_type(prim, floor)?;
    let dd = params.theta_dd.unwrap_or(0.5 * (lo + star));

    let mut cutoffs: Vec<f64> = (0..n).map(|i| hi - i as f64 * (hi - star) / n as f64).collect();
    if !(dd > lo && dd < cutoffs[n - 1]) {
        return Err(Error::Infeasible(format!("bump cutoff {dd} must lie strictly inside ({lo}, {})", cutoffs[n - 1])));
    }
    cutoffs.push(dd);
    cutoffs.push(lo);

    let mut xs = Vec::with_capacity(n + 1);
    for &t in &cutoffs[1..n] {
        xs.push(prim.x_m(t)?.clamp(floor, prim.x_hi));
    }
    if xs[n - 2] < floor + eps - 1e-12 {
        return Err(Error::Infeasible(format!(
            "bump allocation {} exceeds the last screening allocation {}",
            floor + eps,
            xs[n - 2]
        )));
    }
    xs.push(floor + eps);
    xs.push(floor);

    let p = backward_prices(prim, &cutoffs, &xs, prim.u_bar(floor, lo)?);
    check_prices(&p)?;
    let offers = xs.iter().zip(&p).map(|(&x, &p)| Offer { x, p }).collect();
    Ok(EquilibriumPath::from_offers(prim, PathKind::RelaxedTail, &cutoffs, offers, Some(n), None))
}

/// `sum_t delta^t mass_t p_t`.
pub fn path_payoff_direct(path: &EquilibriumPath) -> f64 {
    let mut disc = 1.0;
    let mut acc = 0.0;
    for s in &path.steps {
        acc += disc * s.mass * s.offer.p;
        disc *= path.delta;
    }
    acc
}

/// Discounted virtual surplus of what each type consumes along the path.
pub fn path_payoff_virtual(prim: &Primitives, path: &EquilibriumPath) -> Result<f64> {
    let knot_types: Vec<f64> = prim.value.kinks().iter().map(|&z| -prim.value.marginal(z)).collect();
    let mut disc = 1.0;
    let mut acc = 0.0;
    for s in &path.steps {
        let x = s.offer.x;
        let mut breaks = knot_types.clone();
        breaks.push(-prim.value.marginal(x));
        let integrand = |t: f64| -> f64 {
            let xa = x.min(prim.efficient_consumption(t));
            let phi = prim.virtual_value(t).expect("cutoffs inside support");
            (prim.value.value(xa) + xa * phi) * prim.dist.pdf(t)
        };
        let lo = s.cutoff_lo.max(prim.theta_lo());
        let hi = s.cutoff_hi.min(prim.theta_hi());
        let pieces = breaks.iter().filter(|&&b| b > lo && b < hi).count() + 1;
        acc += disc * quad::simpson_with_breaks(integrand, lo, hi, &breaks, VIRTUAL_PANELS * pieces);
        disc *= path.delta;
    }
    Ok(acc)
}
