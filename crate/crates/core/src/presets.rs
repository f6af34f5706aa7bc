//! Shorthand constructors for the bundled models.

use crate::config::preset;
use crate::discrete::DiscreteModel;
use crate::model::Primitives;

fn prim(name: &str) -> Primitives {
    preset(name).and_then(|m| m.primitives()).expect("bundled preset is valid")
}

fn disc(name: &str) -> DiscreteModel {
    preset(name).and_then(|m| m.discrete_model()).expect("bundled preset is valid")
}

/// Uniform types on [1, 2], `v(x) = x - x^2/2`, `X = [2, 3]`.
pub fn cm() -> Primitives {
    prim("cm")
}

/// Uniform types on [0.1, 2], `v(x) = x - x^2/2`, `X = [0.5, 3]`.
pub fn rm() -> Primitives {
    prim("rm")
}

pub fn three_type() -> DiscreteModel {
    disc("three-type")
}

pub fn three_type_disposal() -> DiscreteModel {
    disc("three-type-disposal")
}

pub fn three_type_cost() -> DiscreteModel {
    disc("three-type-cost")
}
