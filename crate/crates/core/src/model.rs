//! Model primitives, buyer utility under free disposal, and assumption checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Slack allowed on allocation bounds before a domain error.
const X_SLACK: f64 = 1e-12;
/// Grid size for the assumption scans.
const CHECK_GRID: usize = 1001;
/// Default Simpson panel count for `u_bar`.
pub const UBAR_PANELS: usize = 10_000;

/// Buyer gross value of consuming `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ValueFunction {
    /// `v(x) = a x - b x^2 / 2`.
    Quadratic { a: f64, b: f64 },
    /// `v'` interpolated linearly between `[z, v'(z)]` knots, `v(0) = 0`.
    /// Beyond the last knot the final segment is extended.
    PiecewiseMarginal { knots: Vec<[f64; 2]> },
}

impl ValueFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            ValueFunction::Quadratic { a, b } => {
                if !a.is_finite() || !(*b > 0.0) || !b.is_finite() {
                    return Err(Error::Invalid(format!("quadratic value needs finite a and b > 0 (a={a}, b={b})")));
                }
            }
            ValueFunction::PiecewiseMarginal { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Invalid("piecewise marginal needs at least 2 knots".into()));
                }
                if knots[0][0] != 0.0 {
                    return Err(Error::Invalid("first knot must sit at z = 0".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::Invalid("knot positions must increase".into()));
                    }
                    if !(w[1][1] < w[0][1]) {
                        return Err(Error::Invalid("knot marginal values must strictly decrease".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Marginal value `v'(x)`.
    pub fn marginal(&self, x: f64) -> f64 {
        match self {
            ValueFunction::Quadratic { a, b } => a - b * x,
            ValueFunction::PiecewiseMarginal { knots } => {
                let k = knots.len();
                let seg = knots.windows(2).position(|w| x <= w[1][0]).unwrap_or(k - 2);
                let [z0, m0] = knots[seg];
                let [z1, m1] = knots[seg + 1];
                m0 + (m1 - m0) * (x - z0) / (z1 - z0)
            }
        }
    }

    /// Gross value `v(x) = \int_0^x v'`.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            ValueFunction::Quadratic { a, b } => a * x - 0.5 * b * x * x,
            ValueFunction::PiecewiseMarginal { knots } => {
                let mut acc = 0.0;
                let last = knots.len() - 2;
                for (i, w) in knots.windows(2).enumerate() {
                    let z0 = w[0][0];
                    if x <= z0 {
                        break;
                    }
                    let z1 = if i == last { x } else { w[1][0].min(x) };
                    acc += 0.5 * (self.marginal(z0) + self.marginal(z1)) * (z1 - z0);
                }
                acc
            }
        }
    }

    /// Points where `v'` has a kink.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            ValueFunction::Quadratic { .. } => vec![],
            ValueFunction::PiecewiseMarginal { knots } => knots[1..knots.len() - 1].iter().map(|k| k[0]).collect(),
        }
    }

    /// Maximizer of `v(x) + theta x` on `[0, x_hi]`.
    pub fn efficient(&self, theta: f64, x_hi: f64) -> f64 {
        let g = |x: f64| self.marginal(x) + theta;
        if g(0.0) <= 0.0 {
            0.0
        } else if g(x_hi) >= 0.0 {
            x_hi
        } else {
            quad::bisect(g, 0.0, x_hi)
        }
    }
}

/// Distribution of the buyer's private type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TypeDistribution {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Density `base + slope (theta - lo)` with `base` set by normalization.
    LinearDensity {
        lo: f64,
        hi: f64,
        slope: f64,
    },
}

impl TypeDistribution {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Invalid(format!("support needs lo < hi (got [{lo}, {hi}])")));
        }
        if let TypeDistribution::LinearDensity { slope, .. } = self {
            if !slope.is_finite() {
                return Err(Error::Invalid("slope must be finite".into()));
            }
        }
        if !(self.density_min() > 0.0) {
            return Err(Error::Invalid(format!("density must stay positive (min {})", self.density_min())));
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            TypeDistribution::Uniform { lo, hi } | TypeDistribution::LinearDensity { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn lo(&self) -> f64 {
        self.support().0
    }

    pub fn hi(&self) -> f64 {
        self.support().1
    }

    fn base(&self) -> f64 {
        match *self {
            TypeDistribution::Uniform { lo, hi } => 1.0 / (hi - lo),
            TypeDistribution::LinearDensity { lo, hi, slope } => {
                let w = hi - lo;
                (1.0 - 0.5 * slope * w * w) / w
            }
        }
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        match *self {
            TypeDistribution::Uniform { .. } => self.base(),
            TypeDistribution::LinearDensity { lo, slope, .. } => self.base() + slope * (theta - lo),
        }
    }

    /// CDF, clamped to `[0, 1]` outside the support.
    pub fn cdf(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta <= lo {
            return 0.0;
        }
        if theta >= hi {
            return 1.0;
        }
        let d = theta - lo;
        match *self {
            TypeDistribution::Uniform { lo, hi } => d / (hi - lo),
            TypeDistribution::LinearDensity { slope, .. } => self.base() * d + 0.5 * slope * d * d,
        }
    }

    /// `m = min f` over the support.
    pub fn density_min(&self) -> f64 {
        let (lo, hi) = self.support();
        self.pdf(lo).min(self.pdf(hi))
    }

    /// `M = max f` over the support.
    pub fn density_max(&self) -> f64 {
        let (lo, hi) = self.support();
        self.pdf(lo).max(self.pdf(hi))
    }
}

/// Model primitives shared by every solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitives {
    pub value: ValueFunction,
    pub dist: TypeDistribution,
    pub x_lo: f64,
    pub x_hi: f64,
    pub delta: f64,
}

impl Primitives {
    pub fn new(value: ValueFunction, dist: TypeDistribution, x_lo: f64, x_hi: f64, delta: f64) -> Result<Self> {
        let p = Primitives { value, dist, x_lo, x_hi, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.value.validate()?;
        self.dist.validate()?;
        if !(self.x_lo > 0.0) || !(self.x_lo <= self.x_hi) || !self.x_hi.is_finite() {
            return Err(Error::Invalid(format!(
                "allocation bounds need 0 < x_lo <= x_hi (got [{}, {}])",
                self.x_lo, self.x_hi
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Invalid(format!("delta must lie in [0, 1) (got {})", self.delta)));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Primitives { delta, ..self.clone() }
    }

    pub fn theta_lo(&self) -> f64 {
        self.dist.lo()
    }

    pub fn theta_hi(&self) -> f64 {
        self.dist.hi()
    }

    fn check_x(&self, x: f64) -> Result<f64> {
        if !(x >= -X_SLACK && x <= self.x_hi + X_SLACK) {
            return Err(Error::Domain(format!("allocation {x} outside [0, {}]", self.x_hi)));
        }
        Ok(x.clamp(0.0, self.x_hi))
    }

    fn check_theta(&self, theta: f64) -> Result<f64> {
        let (lo, hi) = self.dist.support();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(theta >= lo - slack && theta <= hi + slack) {
            return Err(Error::OutOfSupport { theta, lo, hi });
        }
        Ok(theta.clamp(lo, hi))
    }

    /// `x^e(theta)`: efficient consumption, total on the reals.
    pub fn efficient_consumption(&self, theta: f64) -> f64 {
        self.value.efficient(theta, self.x_hi)
    }

    /// `x^a(x, theta) = min(x, x^e(theta))`.
    pub fn actual_consumption(&self, x: f64, theta: f64) -> Result<f64> {
        let x = self.check_x(x)?;
        Ok(x.min(self.efficient_consumption(theta)))
    }

    /// Utility of holding allocation `x` when excess can be discarded.
    pub fn utility_u(&self, x: f64, theta: f64) -> Result<f64> {
        let xa = self.actual_consumption(x, theta)?;
        Ok(self.value.value(xa) + theta * xa)
    }

    /// Same as `utility_u` once `x^e(theta)` is known; no domain check.
    pub fn utility_with_xe(&self, x: f64, theta: f64, xe: f64) -> f64 {
        let xa = x.min(xe);
        self.value.value(xa) + theta * xa
    }

    /// `\int_0^{x_cap} (v'(z) + theta)^+ dz`, by Simpson, cross-checked against `utility_u`.
    pub fn u_bar(&self, x_cap: f64, theta: f64) -> Result<f64> {
        self.u_bar_panels(x_cap, theta, UBAR_PANELS)
    }

    pub fn u_bar_panels(&self, x_cap: f64, theta: f64, panels: usize) -> Result<f64> {
        let x_cap = self.check_x(x_cap)?;
        let top = x_cap.min(self.efficient_consumption(theta));
        let q = quad::simpson_with_breaks(
            |z| (self.value.marginal(z) + theta).max(0.0),
            0.0,
            top,
            &self.value.kinks(),
            panels,
        );
        let direct = self.utility_u(x_cap, theta)?;
        if (q - direct).abs() > 1e-8 {
            return Err(Error::Mismatch(format!(
                "u_bar quadrature {q} disagrees with u {direct} at x={x_cap}, theta={theta}"
            )));
        }
        Ok(q)
    }

    /// Lowest buyer valuation `u(x_hi, theta_lo)`.
    pub fn lowest_valuation(&self) -> f64 {
        let lo = self.theta_lo();
        self.utility_with_xe(self.x_hi, lo, self.efficient_consumption(lo))
    }

    /// `phi(theta) = theta - (1 - F) / f`; error off the support.
    pub fn virtual_value(&self, theta: f64) -> Result<f64> {
        let t = self.check_theta(theta)?;
        Ok(t - (1.0 - self.dist.cdf(t)) / self.dist.pdf(t))
    }

    /// `v(x) + x phi(theta)`.
    pub fn virtual_surplus(&self, x: f64, theta: f64) -> Result<f64> {
        let x = self.check_x(x)?;
        Ok(self.value.value(x) + x * self.virtual_value(theta)?)
    }

    /// Maximizer of the virtual surplus over `[0, x_hi]`.
    pub fn x_m(&self, theta: f64) -> Result<f64> {
        Ok(self.efficient_consumption(self.virtual_value(theta)?))
    }

    pub fn check_assumptions(&self) -> AssumptionReport {
        check_assumptions(self)
    }
}

/// Outcome of one assumption scan. `margin >= 0` iff `holds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionRecord {
    pub id: String,
    pub holds: bool,
    pub margin: f64,
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub records: Vec<AssumptionRecord>,
}

impl AssumptionReport {
    pub fn get(&self, id: &str) -> Option<&AssumptionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn holds(&self, id: &str) -> bool {
        self.get(id).is_some_and(|r| r.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.records.iter().all(|r| r.holds)
    }

    /// Error on the first failing id among `ids`.
    pub fn require(&self, ids: &[&str]) -> Result<()> {
        for id in ids {
            match self.get(id) {
                Some(r) if r.holds => {}
                Some(r) => return Err(Error::AssumptionFailed { id: r.id.clone(), margin: r.margin }),
                None => return Err(Error::Invalid(format!("unknown assumption {id}"))),
            }
        }
        Ok(())
    }
}

fn record(id: &str, holds: bool, margin: f64, witness: f64) -> AssumptionRecord {
    // keep the sign of the margin consistent with the verdict
    let margin = match (holds, margin >= 0.0) {
        (true, false) => 0.0,
        (false, true) => -f64::MIN_POSITIVE,
        _ => margin,
    };
    AssumptionRecord { id: id.to_string(), holds, margin, witness }
}

pub fn check_assumptions(prim: &Primitives) -> AssumptionReport {
    let mut records = Vec::with_capacity(4);

    // A1: normalization and strict concavity on [0, x_hi]
    let v0 = prim.value.value(0.0);
    let xs = quad::linspace(0.0, prim.x_hi, CHECK_GRID);
    let (mut dec, mut at) = (f64::INFINITY, 0.0);
    for w in xs.windows(2) {
        let d = prim.value.marginal(w[0]) - prim.value.marginal(w[1]);
        if d < dec {
            dec = d;
            at = w[0];
        }
    }
    let a1 = v0.abs() <= 1e-12 && dec > 0.0;
    records.push(record("A1", a1, dec.min(1e-12 - v0.abs()), at));

    // A2: positive density bounds and increasing virtual value
    let (lo, hi) = prim.dist.support();
    let thetas = quad::linspace(lo, hi, CHECK_GRID);
    let phis: Vec<f64> = thetas.iter().map(|&t| prim.virtual_value(t).unwrap_or(f64::NAN)).collect();
    let (mut inc, mut at) = (f64::INFINITY, lo);
    for (i, w) in phis.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d >= inc) {
            inc = d;
            at = thetas[i];
        }
    }
    let m = prim.dist.density_min();
    let a2 = m > 0.0 && inc > 0.0;
    records.push(record("A2", a2, inc.min(m), at));

    // A3: 0 < x^e(theta_lo) <= x_lo
    let xe_lo = prim.efficient_consumption(lo);
    let mut m3 = xe_lo.min(prim.x_lo - xe_lo);
    if m3.abs() <= X_SLACK {
        m3 = 0.0;
    }
    let a3 = xe_lo > 0.0 && m3 >= 0.0;
    records.push(record("A3", a3, m3, xe_lo));

    // A4: virtual surplus at efficient consumption is nonnegative
    let (mut worst, mut at) = (f64::INFINITY, lo);
    for &t in &thetas {
        let xe = prim.efficient_consumption(t);
        let vs = prim.value.value(xe) + xe * prim.virtual_value(t).unwrap_or(f64::NAN);
        if !(vs >= worst) {
            worst = vs;
            at = t;
        }
    }
    if worst.abs() <= 1e-9 {
        worst = 0.0;
    }
    records.push(record("A4", worst >= -1e-9, worst, at));

    AssumptionReport { records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cm() -> Primitives {
        Primitives::new(
            ValueFunction::Quadratic { a: 1.0, b: 1.0 },
            TypeDistribution::Uniform { lo: 1.0, hi: 2.0 },
            2.0,
            3.0,
            0.9,
        )
        .unwrap()
    }

    fn rm() -> Primitives {
        Primitives::new(
            ValueFunction::Quadratic { a: 1.0, b: 1.0 },
            TypeDistribution::Uniform { lo: 0.1, hi: 2.0 },
            0.5,
            3.0,
            0.9,
        )
        .unwrap()
    }

    fn discrete_like() -> Primitives {
        Primitives::new(
            ValueFunction::Quadratic { a: -1.0, b: 1.0 },
            TypeDistribution::Uniform { lo: 1.1, hi: 3.1 },
            0.1,
            3.0,
            0.9,
        )
        .unwrap()
    }

    fn grid_argmax(prim: &Primitives, theta: f64, cap: f64) -> (f64, f64) {
        let n = 1_000_000;
        let mut best = (0.0, 0.0);
        for i in 0..=n {
            let x = cap * i as f64 / n as f64;
            let val = prim.value.value(x) + theta * x;
            if val > best.1 {
                best = (x, val);
            }
        }
        best
    }

    #[test]
    fn efficient_consumption_examples() {
        assert_abs_diff_eq!(discrete_like().efficient_consumption(2.1), 1.1, epsilon = 1e-12);
        assert_eq!(cm().efficient_consumption(-5.0), 0.0);
        let p = cm();
        assert_abs_diff_eq!(p.efficient_consumption(1.5), 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(grid_argmax(&p, 1.5, 3.0).0, 2.5, epsilon = 1e-5);
        assert_eq!(p.efficient_consumption(1.0), 2.0);
    }

    #[test]
    fn utility_examples() {
        let d = discrete_like();
        assert_abs_diff_eq!(d.utility_u(3.0, 1.1).unwrap(), 0.005, epsilon = 1e-12);
        assert_abs_diff_eq!(grid_argmax(&d, 1.1, 3.0).1, 0.005, epsilon = 1e-9);
        assert_eq!(cm().utility_u(0.0, 1.7).unwrap(), 0.0);
        assert_abs_diff_eq!(cm().utility_u(3.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(cm().utility_u(3.5, 1.0).is_err());
        assert!(cm().utility_u(-0.1, 1.0).is_err());
    }

    #[test]
    fn consumption_examples() {
        assert_abs_diff_eq!(discrete_like().actual_consumption(3.0, 2.1).unwrap(), 1.1, epsilon = 1e-12);
        let p = cm();
        let xe = p.efficient_consumption(1.3);
        assert_eq!(p.actual_consumption(xe, 1.3).unwrap(), xe);
        assert_eq!(p.actual_consumption(2.0, 1.8).unwrap(), 2.0);
    }

    #[test]
    fn u_bar_examples() {
        assert_abs_diff_eq!(cm().u_bar(3.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(cm().u_bar(0.0, 1.5).unwrap(), 0.0);
        assert_abs_diff_eq!(rm().u_bar(3.0, 0.1).unwrap(), 0.605, epsilon = 1e-12);
    }

    #[test]
    fn virtual_value_examples() {
        let p = cm();
        assert_abs_diff_eq!(p.virtual_value(1.5).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.virtual_value(2.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.virtual_value(1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert!(matches!(p.virtual_value(2.5), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn virtual_surplus_examples() {
        let p = cm();
        assert_abs_diff_eq!(p.virtual_surplus(2.0, 1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(p.virtual_surplus(0.0, 1.4).unwrap(), 0.0);
        assert_abs_diff_eq!(p.virtual_surplus(2.5, 2.0).unwrap(), 4.375, epsilon = 1e-12);
    }

    #[test]
    fn assumptions_cm_and_rm() {
        let r = cm().check_assumptions();
        assert!(r.all_hold(), "{r:?}");
        assert_eq!(r.get("A3").unwrap().margin, 0.0);
        let a4 = r.get("A4").unwrap();
        assert_eq!(a4.margin, 0.0);
        assert_abs_diff_eq!(a4.witness, 1.0, epsilon = 1e-12);

        let r = rm().check_assumptions();
        let a3 = r.get("A3").unwrap();
        assert!(!a3.holds);
        assert!(a3.margin < 0.0);
        assert_abs_diff_eq!(a3.witness, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_value_integrates_marginal() {
        let v = ValueFunction::PiecewiseMarginal { knots: vec![[0.0, 3.0], [1.0, 1.5], [2.0, 0.5], [4.0, -0.5]] };
        v.validate().unwrap();
        assert_abs_diff_eq!(v.value(1.0), 2.25, epsilon = 1e-14);
        assert_abs_diff_eq!(v.value(1.5), 2.875, epsilon = 1e-14);
        assert_abs_diff_eq!(v.value(4.0), 2.25 + 1.0 + 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.marginal(5.0), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.efficient(-1.0, 4.0), 1.5, epsilon = 1e-12);
        let bad = ValueFunction::PiecewiseMarginal { knots: vec![[0.0, 1.0], [1.0, 2.0]] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn linear_density_normalizes() {
        let d = TypeDistribution::LinearDensity { lo: 1.0, hi: 2.0, slope: 0.5 };
        d.validate().unwrap();
        let mass = quad::simpson(|t| d.pdf(t), 1.0, 2.0, 100);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.cdf(2.0 - 1e-15), 1.0, epsilon = 1e-12);
        assert!(TypeDistribution::LinearDensity { lo: 0.0, hi: 1.0, slope: 5.0 }.validate().is_err());
    }

    #[test]
    fn primitives_reject_bad_bounds() {
        let v = ValueFunction::Quadratic { a: 1.0, b: 1.0 };
        let d = TypeDistribution::Uniform { lo: 1.0, hi: 2.0 };
        assert!(Primitives::new(v.clone(), d.clone(), 0.0, 3.0, 0.5).is_err());
        assert!(Primitives::new(v.clone(), d.clone(), 2.0, 1.0, 0.5).is_err());
        assert!(Primitives::new(v, d, 2.0, 3.0, 1.0).is_err());
    }
}
