//! Static commitment benchmark and its efficiency-constrained variant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Primitives;
use crate::quad;

pub const DEFAULT_GRID: usize = 10_001;
/// Tolerance of the commitment cap.
pub const CAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Unconstrained,
    EfficiencyConstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSchedule {
    pub variant: Variant,
    pub theta_grid: Vec<f64>,
    pub alloc: Vec<f64>,
    pub consumption: Vec<f64>,
    pub price: Vec<f64>,
    pub info_rent: Vec<f64>,
    /// `\int p f`.
    pub payoff: f64,
    /// `\int (v(x^a) + x^a phi) f`.
    pub payoff_virtual: f64,
    /// Smallest virtual surplus at the chosen consumption.
    pub min_virtual_surplus: f64,
    /// Raised when some type has negative virtual surplus (withholding would help).
    pub negative_virtual_surplus: bool,
}

pub fn solve_unconstrained(prim: &Primitives, grid_n: usize) -> Result<MechanismSchedule> {
    solve(prim, grid_n, Variant::Unconstrained)
}

pub fn solve_constrained(prim: &Primitives, grid_n: usize) -> Result<MechanismSchedule> {
    solve(prim, grid_n, Variant::EfficiencyConstrained)
}

fn solve(prim: &Primitives, grid_n: usize, variant: Variant) -> Result<MechanismSchedule> {
    if grid_n < 101 {
        return Err(Error::Invalid(format!("grid_n must be at least 101 (got {grid_n})")));
    }
    let report = prim.check_assumptions();
    report.require(&["A1", "A2"])?;

    let n = if grid_n.is_multiple_of(2) { grid_n + 1 } else { grid_n };
    let (lo, hi) = prim.dist.support();
    let floor = match variant {
        Variant::Unconstrained => prim.x_lo,
        Variant::EfficiencyConstrained => {
            let xe = prim.efficient_consumption(lo);
            if xe > prim.x_hi {
                return Err(Error::Infeasible(format!("efficient consumption {xe} of the lowest type exceeds x_hi")));
            }
            xe.max(prim.x_lo)
        }
    };

    let theta_grid = quad::linspace(lo, hi, n);
    let rows: Vec<(f64, f64, f64, f64)> = theta_grid
        .par_iter()
        .map(|&t| {
            let phi = prim.virtual_value(t).expect("grid inside support");
            let alloc = prim.efficient_consumption(phi).clamp(floor, prim.x_hi);
            let xe = prim.efficient_consumption(t);
            let cons = alloc.min(xe);
            let u = prim.utility_with_xe(alloc, t, xe);
            (alloc, cons, u, prim.value.value(cons) + cons * phi)
        })
        .collect();

    let alloc: Vec<f64> = rows.iter().map(|r| r.0).collect();
    if let Some(k) = alloc.windows(2).position(|w| w[1] < w[0] - 1e-12) {
        return Err(Error::NonMonotone(format!("allocation decreases near theta={}", theta_grid[k])));
    }
    let consumption: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let info_rent = quad::cumulative_trapezoid(&theta_grid, &consumption);
    let price: Vec<f64> = rows.iter().zip(&info_rent).map(|(r, rent)| r.2 - rent).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.3).collect();

    let h = (hi - lo) / (n - 1) as f64;
    let dens: Vec<f64> = theta_grid.iter().map(|&t| prim.dist.pdf(t)).collect();
    let pf: Vec<f64> = price.iter().zip(&dens).map(|(p, f)| p * f).collect();
    let vf: Vec<f64> = vs.iter().zip(&dens).map(|(v, f)| v * f).collect();
    let payoff = quad::simpson_samples(&pf, h);
    let payoff_virtual = quad::simpson_samples(&vf, h);
    let min_virtual_surplus = vs.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(MechanismSchedule {
        variant,
        theta_grid,
        alloc,
        consumption,
        price,
        info_rent,
        payoff,
        payoff_virtual,
        min_virtual_surplus,
        negative_virtual_surplus: min_virtual_surplus < -1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `pi - payoff`; positive means slack.
    pub margin: f64,
}

/// No dynamic payoff may exceed the commitment payoff.
pub fn commitment_bound(payoff: f64, sched: &MechanismSchedule) -> BoundCheck {
    let margin = sched.payoff - payoff;
    BoundCheck { holds: margin >= -CAP_TOL, margin }
}

/// Payoff of posting the full static menu at t = 0 and clearing immediately.
pub fn menu_offer_payoff(prim: &Primitives, grid_n: usize) -> Result<f64> {
    Ok(solve_unconstrained(prim, grid_n)?.payoff)
}

impl MechanismSchedule {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(e.to_string());
        wtr.write_record(["theta", "alloc", "consumption", "price", "rent"]).map_err(io)?;
        for k in 0..self.theta_grid.len() {
            wtr.serialize((self.theta_grid[k], self.alloc[k], self.consumption[k], self.price[k], self.info_rent[k]))
                .map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}
