//! Fixed global lattice baseline.
//!
//! Every molecule hops on one uniform lattice of cell-centred sites `(i + 1/2)·h` with `h` equal to
//! the reaction radius. Partners react as soon as they sit on adjacent sites; molecules of
//! non-reacting species may share a site and pass each other.

use crate::engine::{
    AbsorptionRecord, InitialPlacement, ReactionChannel, ReactionRecord, RealizationConfig, RealizationRecord, Snapshot, StopRule,
};
use crate::error::{Error, Result};
use crate::model::{Boundary, MoleculeId, SpeciesId};
use crate::rng::{open_unit, realization_rng, unit, StreamRng};
use std::collections::VecDeque;
use std::time::Instant;

const ALIGN_TOL: f64 = 1e-9;

/// Lattice spacing implied by `cfg`, after checking the configuration is one the baseline can run.
pub fn lattice_spacing(cfg: &RealizationConfig) -> Result<f64> {
    cfg.validate()?;
    let net = &cfg.network;
    if net.species.iter().any(|s| !s.potential.is_constant()) {
        return Err(Error::OracleUnavailable("fixed lattice needs a constant potential".into()));
    }
    if net.species.iter().any(|s| s.total_unimolecular_rate() > 0.0) {
        return Err(Error::OracleUnavailable("fixed lattice has no unimolecular channels".into()));
    }
    if net.bimolecular.iter().any(|c| !c.products.is_empty()) {
        return Err(Error::OracleUnavailable("fixed lattice only runs annihilation channels".into()));
    }
    let h = net.max_reaction_radius();
    if h <= 0.0 {
        return Err(Error::OracleUnavailable("fixed lattice needs a bimolecular channel".into()));
    }
    if net.bimolecular.iter().any(|c| (c.reaction_radius - h).abs() > ALIGN_TOL * h) {
        return Err(Error::OracleUnavailable("fixed lattice needs one common reaction radius".into()));
    }
    let cells = cfg.domain.length / h;
    if (cells - cells.round()).abs() > ALIGN_TOL * cells {
        return Err(Error::OracleUnavailable(format!("reaction radius {h} does not divide the length {}", cfg.domain.length)));
    }
    Ok(h)
}

struct Lattice<'c> {
    cfg: &'c RealizationConfig,
    h: f64,
    cells: usize,
    species: Vec<SpeciesId>,
    site: Vec<usize>,
    alive: Vec<bool>,
    deaths: Vec<f64>,
    sites: Vec<Vec<MoleculeId>>,
    by_species: Vec<Vec<MoleculeId>>,
    slot: Vec<usize>,
    hop_rate: Vec<f64>,
    rng: StreamRng,
    time: f64,
    record: RealizationRecord,
}

impl<'c> Lattice<'c> {
    fn centre(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    fn kill(&mut self, id: MoleculeId) {
        self.alive[id] = false;
        self.deaths[id] = self.time;
        let cell = &mut self.sites[self.site[id]];
        if let Some(k) = cell.iter().position(|&o| o == id) {
            cell.swap_remove(k);
        }
        let list = &mut self.by_species[self.species[id]];
        let k = self.slot[id];
        list.swap_remove(k);
        if k < list.len() {
            self.slot[list[k]] = k;
        }
    }

    fn react(&mut self, x: MoleculeId, y: MoleculeId, location: f64, at_start: bool) {
        let k = self.cfg.network.channel_index(self.species[x], self.species[y]).expect("partners");
        self.record.reactions.push(ReactionRecord { time: self.time, location, channel: ReactionChannel::Bimolecular(k), at_start });
        self.kill(x);
        self.kill(y);
    }

    /// Nearest partner of `id` on its own or an adjacent site.
    fn partner_near(&self, id: MoleculeId) -> Option<MoleculeId> {
        let s = self.species[id];
        let i = self.site[id];
        let net = &self.cfg.network;
        let own = self.sites[i].iter().copied().filter(|&o| o != id && net.reacts(s, self.species[o])).min();
        own.or_else(|| {
            let left = i.checked_sub(1).into_iter();
            let right = (i + 1 < self.cells).then_some(i + 1).into_iter();
            left.chain(right).flat_map(|j| self.sites[j].iter().copied()).filter(|&o| net.reacts(s, self.species[o])).min()
        })
    }

    fn possible(&self) -> bool {
        self.cfg.network.bimolecular.iter().any(|c| {
            let na = self.by_species[c.reactant_a].len();
            if c.reactant_a == c.reactant_b {
                na >= 2
            } else {
                na > 0 && !self.by_species[c.reactant_b].is_empty()
            }
        })
    }

    fn snapshot(&self, t: f64) -> Snapshot {
        let molecules = (0..self.species.len())
            .filter(|&id| self.alive[id] || self.deaths[id] > t)
            .map(|id| (id, self.species[id], self.centre(self.site[id])))
            .collect();
        Snapshot { time: t, molecules }
    }
}

/// Initial continuous positions, reacting partners closer than the reaction radius.
fn initial_positions(cfg: &RealizationConfig, rng: &mut StreamRng) -> Vec<(SpeciesId, f64)> {
    let mut out = Vec::new();
    for p in &cfg.initial {
        match p {
            InitialPlacement::Uniform { species, count, lo, hi } => {
                for _ in 0..*count {
                    out.push((*species, lo + (hi - lo) * unit(rng)));
                }
            }
            InitialPlacement::Explicit { species, positions } => out.extend(positions.iter().map(|&x| (*species, x))),
        }
    }
    out
}

/// Global-lattice SSA for one realization.
pub fn fixed_lattice_run(cfg: &RealizationConfig, index: u64) -> Result<RealizationRecord> {
    let h = lattice_spacing(cfg)?;
    let started = Instant::now();
    let net = &cfg.network;
    let n_species = net.species.len();
    let cells = (cfg.domain.length / h).round() as usize;
    let mut rng = realization_rng(cfg.master_seed, index);
    let placed = initial_positions(cfg, &mut rng);
    let n = placed.len();
    let mut lat = Lattice {
        cfg,
        h,
        cells,
        species: placed.iter().map(|p| p.0).collect(),
        site: placed.iter().map(|p| ((p.1 / h).floor() as usize).min(cells - 1)).collect(),
        alive: vec![true; n],
        deaths: vec![f64::INFINITY; n],
        sites: vec![Vec::new(); cells],
        by_species: vec![Vec::new(); n_species],
        slot: vec![0; n],
        hop_rate: net.species.iter().map(|s| 2.0 * s.diffusion / (h * h)).collect(),
        rng,
        time: 0.0,
        record: RealizationRecord { realization: index, initial_counts: vec![0; n_species], ..Default::default() },
    };
    for id in 0..n {
        let s = lat.species[id];
        lat.slot[id] = lat.by_species[s].len();
        lat.by_species[s].push(id);
        lat.sites[lat.site[id]].push(id);
        lat.record.initial_counts[s] += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| placed[a].1.total_cmp(&placed[b].1).then(a.cmp(&b)));
    let mut contacts = Vec::new();
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            let d = placed[b].1 - placed[a].1;
            if d > h {
                break;
            }
            if net.reacts(placed[a].0, placed[b].0) {
                contacts.push((d, a.min(b), a.max(b)));
            }
        }
    }
    contacts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, a, b) in contacts {
        if lat.alive[a] && lat.alive[b] {
            lat.react(a, b, 0.5 * (placed[a].1 + placed[b].1), true);
        }
    }
    for id in 0..n {
        if lat.alive[id] {
            if let Some(o) = lat.partner_near(id) {
                let location = 0.5 * (lat.centre(lat.site[id]) + lat.centre(lat.site[o]));
                lat.react(id, o, location, true);
            }
        }
    }

    let mut snaps: VecDeque<f64> = cfg.snapshot_times.iter().copied().collect();
    if let StopRule::TimeHorizon(t) = cfg.stop {
        snaps.retain(|&s| s <= t);
    }
    let mut rates = vec![0.0; n_species];
    loop {
        for (s, r) in rates.iter_mut().enumerate() {
            *r = lat.hop_rate[s] * lat.by_species[s].len() as f64;
        }
        let total: f64 = rates.iter().sum();
        let next = if total > 0.0 { lat.time - open_unit(&mut lat.rng).ln() / total } else { f64::INFINITY };
        while snaps.front().is_some_and(|&t| t < next) {
            let t = snaps.pop_front().expect("front");
            lat.record.snapshots.push(lat.snapshot(t));
        }
        let done = match cfg.stop {
            StopRule::AllReacted => !lat.possible() && snaps.is_empty(),
            StopRule::TimeHorizon(t) => next > t,
            StopRule::EventCount(k) => lat.record.event_count >= k,
        };
        if done || total <= 0.0 {
            break;
        }
        lat.time = next;
        let mut u = unit(&mut lat.rng) * total;
        let mut s = n_species - 1;
        for (k, &r) in rates.iter().enumerate() {
            if u < r {
                s = k;
                break;
            }
            u -= r;
        }
        let list = &lat.by_species[s];
        let id = list[((unit(&mut lat.rng) * list.len() as f64) as usize).min(list.len() - 1)];
        let from = lat.site[id];
        let to = if unit(&mut lat.rng) < 0.5 {
            match from.checked_sub(1) {
                Some(j) => Some(j),
                None if cfg.domain.left == Boundary::Absorbing => None,
                None => continue,
            }
        } else if from + 1 < cells {
            Some(from + 1)
        } else if cfg.domain.right == Boundary::Absorbing {
            None
        } else {
            continue;
        };
        lat.record.hop_count += 1;
        lat.record.width_hops += h;
        lat.record.event_count += 1;
        let Some(to) = to else {
            let location = if from == 0 { 0.0 } else { cfg.domain.length };
            lat.record.absorptions.push(AbsorptionRecord { time: lat.time, species: s, location });
            lat.kill(id);
            continue;
        };
        let cell = &mut lat.sites[from];
        let k = cell.iter().position(|&o| o == id).expect("occupant");
        cell.swap_remove(k);
        lat.sites[to].push(id);
        lat.site[id] = to;
        if let Some(o) = lat.partner_near(id) {
            let location = 0.5 * (lat.centre(to) + lat.centre(lat.site[o]));
            lat.react(id, o, location, false);
            lat.record.event_count += 1;
        }
    }
    if lat.record.hop_count > 0 {
        lat.record.mesh_hops.insert(h.to_bits(), lat.record.hop_count);
    }
    lat.record.final_time = match cfg.stop {
        StopRule::TimeHorizon(t) => t.max(lat.time),
        _ => lat.time,
    };
    if cfg.measure_wall_time {
        lat.record.wall_seconds = started.elapsed().as_secs_f64();
    }
    Ok(lat.record)
}
