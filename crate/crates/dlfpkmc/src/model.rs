//! Species, reactions, the overall domain and molecule records.

use crate::error::{Error, Result};
use crate::potential::PotentialField;
use std::sync::Arc;

pub type SpeciesId = usize;
pub type MoleculeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Reflecting,
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub length: f64,
    pub left: Boundary,
    pub right: Boundary,
}

impl DomainSpec {
    pub fn reflecting(length: f64) -> Self {
        DomainSpec { length, left: Boundary::Reflecting, right: Boundary::Reflecting }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidConfig(format!("domain length must be positive, got {}", self.length)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnimolecularChannel {
    pub rate: f64,
    pub products: Vec<SpeciesId>,
    pub product_separation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesSpec {
    pub name: String,
    pub diffusion: f64,
    pub potential: Arc<PotentialField>,
    pub unimolecular: Vec<UnimolecularChannel>,
}

impl SpeciesSpec {
    pub fn new(name: &str, diffusion: f64, potential: PotentialField) -> Self {
        SpeciesSpec { name: name.to_string(), diffusion, potential: Arc::new(potential), unimolecular: Vec::new() }
    }

    pub fn total_unimolecular_rate(&self) -> f64 {
        self.unimolecular.iter().map(|c| c.rate).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimolecularChannel {
    pub reactant_a: SpeciesId,
    pub reactant_b: SpeciesId,
    pub reaction_radius: f64,
    pub products: Vec<SpeciesId>,
    pub product_separation: Option<f64>,
}

/// Immutable reaction network with an O(1) partner table.
#[derive(Debug, Clone)]
pub struct Network {
    pub species: Vec<SpeciesSpec>,
    pub bimolecular: Vec<BimolecularChannel>,
    partner: Vec<Option<usize>>,
}

fn check_products(products: &[SpeciesId], separation: Option<f64>, n_species: usize, what: &str) -> Result<()> {
    if products.len() > 2 {
        return Err(Error::InvalidConfig(format!("{what}: at most two products")));
    }
    if products.iter().any(|&p| p >= n_species) {
        return Err(Error::InvalidConfig(format!("{what}: unknown product species")));
    }
    match (products.len() == 2, separation) {
        (true, Some(s)) if s > 0.0 && s.is_finite() => Ok(()),
        (true, _) => Err(Error::InvalidConfig(format!("{what}: two products need a positive separation"))),
        (false, Some(_)) => Err(Error::InvalidConfig(format!("{what}: separation given without two products"))),
        (false, None) => Ok(()),
    }
}

impl Network {
    pub fn new(species: Vec<SpeciesSpec>, bimolecular: Vec<BimolecularChannel>) -> Result<Self> {
        let n = species.len();
        for s in &species {
            if !(s.diffusion > 0.0 && s.diffusion.is_finite()) {
                return Err(Error::InvalidConfig(format!("species {}: diffusion must be positive", s.name)));
            }
            for c in &s.unimolecular {
                if !(c.rate >= 0.0 && c.rate.is_finite()) {
                    return Err(Error::InvalidConfig(format!("species {}: negative unimolecular rate", s.name)));
                }
                check_products(&c.products, c.product_separation, n, &s.name)?;
            }
        }
        let mut partner = vec![None; n * n];
        for (k, c) in bimolecular.iter().enumerate() {
            if c.reactant_a >= n || c.reactant_b >= n {
                return Err(Error::InvalidConfig("bimolecular channel names an unknown species".into()));
            }
            if !(c.reaction_radius > 0.0 && c.reaction_radius.is_finite()) {
                return Err(Error::InvalidConfig("reaction radius must be positive".into()));
            }
            check_products(&c.products, c.product_separation, n, "bimolecular channel")?;
            let (i, j) = (c.reactant_a, c.reactant_b);
            if partner[i * n + j].is_some() {
                return Err(Error::InvalidConfig("more than one channel for a species pair".into()));
            }
            partner[i * n + j] = Some(k);
            partner[j * n + i] = Some(k);
        }
        Ok(Network { species, bimolecular, partner })
    }

    pub fn channel(&self, a: SpeciesId, b: SpeciesId) -> Option<&BimolecularChannel> {
        self.partner[a * self.species.len() + b].map(|k| &self.bimolecular[k])
    }

    pub fn channel_index(&self, a: SpeciesId, b: SpeciesId) -> Option<usize> {
        self.partner[a * self.species.len() + b]
    }

    pub fn reacts(&self, a: SpeciesId, b: SpeciesId) -> bool {
        self.partner[a * self.species.len() + b].is_some()
    }

    pub fn max_reaction_radius(&self) -> f64 {
        self.bimolecular.iter().map(|c| c.reaction_radius).fold(0.0, f64::max)
    }

    pub fn is_reactive(&self, s: SpeciesId) -> bool {
        (0..self.species.len()).any(|t| self.reacts(s, t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub id: MoleculeId,
    pub species: SpeciesId,
    pub position: f64,
    pub individual_time: f64,
    pub alive: bool,
}
