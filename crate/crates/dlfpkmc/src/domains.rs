//! Neighbour queries, pairing and protective-domain sizing.

use crate::error::{Error, Result};
use crate::model::{Boundary, DomainSpec, Molecule, MoleculeId, Network};
use crate::sampler::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingPolicy {
    pub r_pair: f64,
    pub pair_cap: bool,
}

impl PairingPolicy {
    pub fn new(r_pair: f64) -> Self {
        PairingPolicy { r_pair, pair_cap: true }
    }

    pub fn validate(&self, network: &Network) -> Result<()> {
        if !(self.r_pair.is_finite() && self.r_pair >= network.max_reaction_radius()) {
            return Err(Error::InvalidConfig(format!("r_pair = {} is below the largest reaction radius", self.r_pair)));
        }
        Ok(())
    }
}

/// Positions sorted ascending with the molecule id as tie-break.
#[derive(Debug, Clone, Default)]
pub struct SortedPositions {
    entries: Vec<(f64, MoleculeId)>,
}

fn key_cmp(a: &(f64, MoleculeId), b: &(f64, MoleculeId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl SortedPositions {
    pub fn from_molecules(molecules: &[Molecule]) -> Self {
        let mut entries: Vec<_> = molecules.iter().filter(|m| m.alive).map(|m| (m.position + 0.0, m.id)).collect();
        entries.sort_by(key_cmp);
        SortedPositions { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, MoleculeId)] {
        &self.entries
    }

    pub fn insert(&mut self, position: f64, id: MoleculeId) {
        let key = (position + 0.0, id);
        let at = self.entries.binary_search_by(|e| key_cmp(e, &key)).unwrap_or_else(|i| i);
        self.entries.insert(at, key);
    }

    pub fn remove(&mut self, position: f64, id: MoleculeId) {
        if let Some(i) = self.index_of(position, id) {
            self.entries.remove(i);
        }
    }

    pub fn index_of(&self, position: f64, id: MoleculeId) -> Option<usize> {
        let key = (position + 0.0, id);
        self.entries.binary_search_by(|e| key_cmp(e, &key)).ok()
    }

    /// Entries strictly left of index `i`, nearest first.
    pub fn left_of(&self, i: usize) -> impl Iterator<Item = (f64, MoleculeId)> + '_ {
        self.entries[..i].iter().rev().copied()
    }

    pub fn right_of(&self, i: usize) -> impl Iterator<Item = (f64, MoleculeId)> + '_ {
        self.entries[i + 1..].iter().copied()
    }
}

/// Nearest entry on either side accepted by `accept`, as (distance, id).
pub fn nearest_matching(order: &SortedPositions, i: usize, mut accept: impl FnMut(MoleculeId) -> bool) -> Option<(f64, MoleculeId)> {
    let (x, _) = order.entries[i];
    let left = order.left_of(i).find(|&(_, id)| accept(id)).map(|(p, id)| (x - p, id));
    let right = order.right_of(i).find(|&(_, id)| accept(id)).map(|(p, id)| (p - x, id));
    match (left, right) {
        (Some(l), Some(r)) => Some(if r.0 < l.0 { r } else { l }),
        (l, r) => l.or(r),
    }
}

/// The four-branch protective radius for one neighbour.
pub fn compute_rpd(partner: bool, d_nbr: f64, d_nbr_pd: Option<f64>, reaction_radius: f64) -> f64 {
    match (partner, d_nbr_pd) {
        (true, None) => 0.5 * (d_nbr - reaction_radius),
        (true, Some(d)) => d - reaction_radius,
        (false, None) => 0.5 * d_nbr,
        (false, Some(d)) => d,
    }
}

pub fn pair_condition(separation: f64, reaction_radius: f64, policy: &PairingPolicy, same_species_gap: f64) -> bool {
    separation <= policy.r_pair && separation <= reaction_radius + same_species_gap
}

/// Mutually-nearest reactant pairs among `needs`, ordered by left member position.
pub fn select_pairs(
    order: &SortedPositions,
    molecules: &[Molecule],
    needs: impl Fn(MoleculeId) -> bool,
    network: &Network,
    policy: &PairingPolicy,
) -> Vec<(MoleculeId, MoleculeId)> {
    let nearest_partner = |i: usize| {
        let s = molecules[order.entries[i].1].species;
        nearest_matching(order, i, |id| network.reacts(s, molecules[id].species))
    };
    let same_gap = |i: usize| {
        let s = molecules[order.entries[i].1].species;
        nearest_matching(order, i, |id| molecules[id].species == s).map_or(f64::INFINITY, |(d, _)| d)
    };
    let mut out = Vec::new();
    for (i, &(x, id)) in order.entries.iter().enumerate() {
        if !needs(id) {
            continue;
        }
        let Some((d, other)) = nearest_partner(i) else { continue };
        let other_pos = molecules[other].position + 0.0;
        if other_pos < x || !needs(other) {
            continue;
        }
        let Some(j) = order.index_of(other_pos, other) else { continue };
        // Anything between the two would end up inside the pair domain.
        if j != i + 1 {
            continue;
        }
        if nearest_partner(j).map(|(_, back)| back) != Some(id) {
            continue;
        }
        let r_r = network.channel(molecules[id].species, molecules[other].species).map_or(0.0, |c| c.reaction_radius);
        if pair_condition(d, r_r, policy, same_gap(i).min(same_gap(j))) {
            out.push((id, other));
        }
    }
    out
}

/// Nearest neighbour limiting a single (reaction partner or paired molecule) or a pair member (any molecule).
pub fn limiting_neighbor(
    order: &SortedPositions,
    molecules: &[Molecule],
    id: MoleculeId,
    pair_mate: Option<MoleculeId>,
    is_paired: impl Fn(MoleculeId) -> bool,
    network: &Network,
) -> Option<(MoleculeId, f64)> {
    let m = &molecules[id];
    let i = order.index_of(m.position, id)?;
    let found = match pair_mate {
        Some(mate) => nearest_matching(order, i, |o| o != mate),
        None => nearest_matching(order, i, |o| network.reacts(m.species, molecules[o].species) || is_paired(o)),
    };
    found.map(|(d, o)| (o, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
    pub left: Boundary,
    pub right: Boundary,
}

/// Clip `[lo, hi]` to the overall domain; a clipped end takes the wall's boundary kind.
pub fn truncate(lo: f64, hi: f64, domain: &DomainSpec) -> Interval {
    let (a, left) = if lo <= 0.0 { (0.0, domain.left) } else { (lo, Boundary::Absorbing) };
    let (b, right) = if hi >= domain.length { (domain.length, domain.right) } else { (hi, Boundary::Absorbing) };
    Interval { a, b, left, right }
}

/// Radius for a lone molecule whose domain would otherwise touch two reflecting walls.
pub fn walled_single_radius(x: f64, domain: &DomainSpec) -> f64 {
    0.5 * x.max(domain.length - x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pending {
    Path,
    Unimolecular { slot: usize, time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Single,
    Pair,
}

/// A live protective domain; pair occupants are stored left member first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectiveDomain {
    pub interval: Interval,
    pub kind: DomainKind,
    pub occupants: Vec<MoleculeId>,
    pub r_pd: f64,
    pub creation_time: f64,
    pub path: SamplePath,
    pub pending: Pending,
}

impl ProtectiveDomain {
    pub fn event_time(&self) -> f64 {
        match self.pending {
            Pending::Path => self.path.terminal.time,
            Pending::Unimolecular { time, .. } => time,
        }
    }

    /// Occupant positions at `t`, falling back to the last recorded state at the terminal instant.
    pub fn positions_at(&self, t: f64) -> [f64; 2] {
        self.path.no_passage_position(t).unwrap_or_else(|_| {
            if t < self.path.start_time {
                self.path.initial
            } else {
                self.path.terminal_positions()
            }
        })
    }
}
