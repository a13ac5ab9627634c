//! Parameter sets of the standard studies.

use crate::engine::{InitialPlacement, RealizationConfig};
use crate::error::Result;
use crate::model::{BimolecularChannel, DomainSpec, Network, SpeciesSpec};
use crate::potential::PotentialField;
use std::sync::Arc;

pub const TWO_MOLECULE_RADIUS: f64 = 0.02;
/// Exact mean reaction time of the free two-molecule system.
pub const FREE_PAIR_MEAN_TIME: f64 = 0.064831881311;
/// Ratio of the single-domain maximum width to the pair width in the convergence studies.
pub const SINGLE_TO_PAIR_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Landscape {
    Zero,
    /// `cos(2πx)`
    OneWell,
    /// `cos(4πx)`
    TwoWell,
    /// 2 left of 1/2, 0 right of it.
    Step,
}

impl Landscape {
    pub fn field(self) -> PotentialField {
        match self {
            Landscape::Zero => PotentialField::Zero,
            Landscape::OneWell => PotentialField::cosine(1.0, 1.0),
            Landscape::TwoWell => PotentialField::cosine(1.0, 2.0),
            Landscape::Step => PotentialField::step(2.0, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Landscape::Zero => "zero",
            Landscape::OneWell => "one-well",
            Landscape::TwoWell => "two-well",
            Landscape::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" | "vzero" => Some(Landscape::Zero),
            "one-well" | "cos2" => Some(Landscape::OneWell),
            "two-well" | "vcos" | "cos4" => Some(Landscape::TwoWell),
            "step" | "vstep" => Some(Landscape::Step),
            _ => None,
        }
    }
}

/// A + B → ∅ with equal diffusion and potential for both species.
pub fn annihilation(diffusion: f64, potential: PotentialField, reaction_radius: f64) -> Result<Network> {
    Network::new(
        vec![SpeciesSpec::new("A", diffusion, potential.clone()), SpeciesSpec::new("B", diffusion, potential)],
        vec![BimolecularChannel { reactant_a: 0, reactant_b: 1, reaction_radius, products: vec![], product_separation: None }],
    )
}

/// Pair width `r_R / 2^level` with the single width `SINGLE_TO_PAIR_WIDTH` times larger.
pub fn level_widths(reaction_radius: f64, level: u32) -> (f64, f64) {
    let h_p = reaction_radius / f64::from(1u32 << level);
    (h_p, SINGLE_TO_PAIR_WIDTH * h_p)
}

fn uniform_pairs(count: usize, a: (f64, f64), b: (f64, f64)) -> Vec<InitialPlacement> {
    vec![
        InitialPlacement::Uniform { species: 0, count, lo: a.0, hi: a.1 },
        InitialPlacement::Uniform { species: 1, count, lo: b.0, hi: b.1 },
    ]
}

/// One A and one B, uniform on the unit interval.
pub fn two_molecule(landscape: Landscape, h_p: f64, h_s_max: f64) -> Result<RealizationConfig> {
    let r = TWO_MOLECULE_RADIUS;
    let net = annihilation(1.0, landscape.field(), r)?;
    Ok(RealizationConfig::new(DomainSpec::reflecting(1.0), Arc::new(net), uniform_pairs(1, (0.0, 1.0), (0.0, 1.0)), h_s_max, h_p, 2.0 * r))
}

/// Ten A on (0.1, 0.4) and ten B on (0.6, 0.9).
pub fn twenty_molecule(landscape: Landscape, h_p: f64, h_s_max: f64) -> Result<RealizationConfig> {
    let r = 0.02;
    let net = annihilation(1.0, landscape.field(), r)?;
    Ok(RealizationConfig::new(DomainSpec::reflecting(1.0), Arc::new(net), uniform_pairs(10, (0.1, 0.4), (0.6, 0.9)), h_s_max, h_p, 2.0 * r))
}

/// Fifty A and fifty B, uniform on the unit interval.
pub fn hundred_molecule(landscape: Landscape, h_p: f64, h_s_max: f64) -> Result<RealizationConfig> {
    let r = 0.001;
    let net = annihilation(1.0, landscape.field(), r)?;
    Ok(RealizationConfig::new(DomainSpec::reflecting(1.0), Arc::new(net), uniform_pairs(50, (0.0, 1.0), (0.0, 1.0)), h_s_max, h_p, 4.0 * r))
}

/// Free diffusion with `total / 2` molecules of each species, pair width equal to the reaction
/// radius, single width `L/50` and pair threshold `L/200`.
pub fn scaling(total: usize, reaction_radius: f64) -> Result<RealizationConfig> {
    let net = annihilation(1.0, PotentialField::Zero, reaction_radius)?;
    let half = total / 2;
    Ok(RealizationConfig::new(
        DomainSpec::reflecting(1.0),
        Arc::new(net),
        uniform_pairs(half, (0.0, 1.0), (0.0, 1.0)),
        1.0 / 50.0,
        reaction_radius,
        (1.0f64 / 200.0).max(reaction_radius),
    ))
}

/// Reaction radius of the scaling study: 1 nm against a 10 µm domain.
pub const SCALING_RADIUS: f64 = 1e-4;
/// Coarser radius used when the fixed-lattice baseline must also run.
pub const LATTICE_COMPARISON_RADIUS: f64 = 0.001;
