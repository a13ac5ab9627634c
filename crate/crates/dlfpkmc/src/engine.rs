//! Asynchronous event loop over protective domains.

use crate::domains::{
    select_pairs, truncate, walled_single_radius, DomainKind, Interval, PairingPolicy, Pending, ProtectiveDomain, SortedPositions,
};
use crate::error::{Error, Result};
use crate::mesh::single_mesh;
use crate::model::{Boundary, DomainSpec, Molecule, MoleculeId, Network, SpeciesId};
use crate::rng::{domain_rng, realization_rng, unit, StreamRng};
use crate::sampler::{sample_exponential, ssa_pair_path, ssa_single_path, PairSetup, SamplePath, Side, TerminalKind};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

pub const DEFAULT_MAX_PATH_HOPS: usize = 50_000_000;
const FLOOR_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPlacement {
    Uniform { species: SpeciesId, count: usize, lo: f64, hi: f64 },
    Explicit { species: SpeciesId, positions: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    AllReacted,
    TimeHorizon(f64),
    EventCount(u64),
}

#[derive(Debug, Clone)]
pub struct RealizationConfig {
    pub domain: DomainSpec,
    pub network: Arc<Network>,
    pub initial: Vec<InitialPlacement>,
    pub h_s_max: f64,
    pub h_p: f64,
    pub pairing: PairingPolicy,
    pub master_seed: u64,
    pub stop: StopRule,
    pub snapshot_times: Vec<f64>,
    pub keep_history: bool,
    pub log_events: bool,
    pub measure_wall_time: bool,
    pub max_path_hops: Option<usize>,
    /// Radius around a freshly updated molecule inside which other domains are synchronized; `r_pair` when unset.
    pub sync_radius: Option<f64>,
}

impl RealizationConfig {
    pub fn new(domain: DomainSpec, network: Arc<Network>, initial: Vec<InitialPlacement>, h_s_max: f64, h_p: f64, r_pair: f64) -> Self {
        RealizationConfig {
            domain,
            network,
            initial,
            h_s_max,
            h_p,
            pairing: PairingPolicy::new(r_pair),
            master_seed: 0,
            stop: StopRule::AllReacted,
            snapshot_times: Vec::new(),
            keep_history: false,
            log_events: false,
            measure_wall_time: false,
            max_path_hops: Some(DEFAULT_MAX_PATH_HOPS),
            sync_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let n = self.network.species.len();
        if !(self.h_s_max > 0.0 && self.h_s_max.is_finite()) {
            return Err(Error::InvalidConfig("h_s_max must be positive".into()));
        }
        if !(self.h_p > 0.0 && self.h_p.is_finite()) {
            return Err(Error::InvalidConfig("h_p must be positive".into()));
        }
        for c in &self.network.bimolecular {
            let k = c.reaction_radius / self.h_p;
            if (k - k.round()).abs() > 1e-9 * k.max(1.0) || k.round() < 1.0 {
                return Err(Error::InvalidConfig(format!("h_p = {} does not divide r_R = {}", self.h_p, c.reaction_radius)));
            }
        }
        self.pairing.validate(&self.network)?;
        let length = self.domain.length;
        for p in &self.initial {
            match p {
                InitialPlacement::Uniform { species, lo, hi, .. } => {
                    if *species >= n {
                        return Err(Error::InvalidConfig("initial placement names an unknown species".into()));
                    }
                    if !(0.0 <= *lo && lo < hi && *hi <= length) {
                        return Err(Error::InvalidConfig(format!("placement interval ({lo}, {hi}) outside [0, {length}]")));
                    }
                }
                InitialPlacement::Explicit { species, positions } => {
                    if *species >= n {
                        return Err(Error::InvalidConfig("initial placement names an unknown species".into()));
                    }
                    if positions.iter().any(|&x| !(0.0..=length).contains(&x)) {
                        return Err(Error::InvalidConfig("explicit position outside the domain".into()));
                    }
                }
            }
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("snapshot times must be finite, non-negative and sorted".into()));
        }
        match self.stop {
            StopRule::TimeHorizon(t) if !(t >= 0.0) => Err(Error::InvalidConfig("time horizon must be non-negative".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionChannel {
    Bimolecular(usize),
    Unimolecular { species: SpeciesId, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionRecord {
    pub time: f64,
    pub location: f64,
    pub channel: ReactionChannel,
    pub at_start: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionRecord {
    pub time: f64,
    pub species: SpeciesId,
    pub location: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoggedKind {
    FirstPassage,
    Bimolecular,
    Unimolecular,
    Absorbed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub time: f64,
    pub kind: LoggedKind,
    pub molecules: Vec<MoleculeId>,
    pub location: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// (id, species, position) of every molecule alive at `time`, by id.
    pub molecules: Vec<(MoleculeId, SpeciesId, f64)>,
}

impl Snapshot {
    pub fn count(&self, species: SpeciesId) -> usize {
        self.molecules.iter().filter(|m| m.1 == species).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealizationRecord {
    pub realization: u64,
    pub initial_counts: Vec<usize>,
    pub reactions: Vec<ReactionRecord>,
    pub absorptions: Vec<AbsorptionRecord>,
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<LoggedEvent>,
    pub event_count: u64,
    pub hop_count: u64,
    pub width_hops: f64,
    /// Hops per mesh width, keyed by the width's bit pattern.
    pub mesh_hops: BTreeMap<u64, u64>,
    pub domains_built: u64,
    pub final_time: f64,
    pub wall_seconds: f64,
}

impl RealizationRecord {
    pub fn mean_mesh_width(&self) -> Option<f64> {
        (self.hop_count > 0).then(|| self.width_hops / self.hop_count as f64)
    }

    /// `(width, hops)` in increasing width.
    pub fn mesh_usage(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.mesh_hops.iter().map(|(&w, &n)| (f64::from_bits(w), n))
    }

    pub fn first_reaction(&self) -> Option<&ReactionRecord> {
        self.reactions.first()
    }

    pub fn last_reaction_time(&self) -> Option<f64> {
        self.reactions.last().map(|r| r.time)
    }
}

/// Product placement around the reactants' centre.
pub fn place_products(
    reactants: &[f64],
    products: &[SpeciesId],
    separation: Option<f64>,
    length: f64,
    rng: &mut StreamRng,
) -> Result<Vec<(SpeciesId, f64)>> {
    let centre = (reactants.iter().sum::<f64>() / reactants.len() as f64).clamp(0.0, length);
    match products {
        [] => Ok(Vec::new()),
        [p] => Ok(vec![(*p, centre)]),
        [p, q] => {
            let s = separation.ok_or_else(|| Error::InvalidConfig("two products need a separation".into()))?;
            if s > length {
                return Err(Error::InvalidConfig(format!("product separation {s} exceeds the domain length")));
            }
            let mut lo = centre - 0.5 * s;
            if lo < 0.0 {
                lo = 0.0;
            }
            if lo + s > length {
                lo = length - s;
            }
            let hi = lo + s;
            Ok(if unit(rng) < 0.5 { vec![(*p, lo), (*q, hi)] } else { vec![(*p, hi), (*q, lo)] })
        }
        _ => Err(Error::InvalidConfig("at most two products".into())),
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    time: f64,
    seq: u64,
    slot: usize,
    epoch: u64,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone)]
struct Retired {
    occupants: Vec<MoleculeId>,
    end: f64,
    path: SamplePath,
}

#[derive(Debug, Clone, Copy)]
enum Binding {
    None,
    Existing(usize),
    Planned,
    Undefined(MoleculeId),
}

#[derive(Debug, Clone)]
struct Plan {
    kind: DomainKind,
    occupants: Vec<MoleculeId>,
    interval: Interval,
    r_pd: f64,
}

enum Replan {
    Sync(usize),
    Force(MoleculeId, MoleculeId),
}

/// Mutable state of one realization.
pub struct Realization<'c> {
    cfg: &'c RealizationConfig,
    index: u64,
    molecules: Vec<Molecule>,
    births: Vec<f64>,
    deaths: Vec<f64>,
    order: SortedPositions,
    owner: Vec<Option<usize>>,
    domains: Vec<Option<ProtectiveDomain>>,
    epochs: Vec<u64>,
    free: Vec<usize>,
    lengths: BTreeMap<u64, usize>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    counter: u64,
    rng: StreamRng,
    time: f64,
    counts: Vec<usize>,
    history: Vec<Retired>,
    record: RealizationRecord,
    floor: f64,
    sync_radius: f64,
    starting: bool,
}

impl<'c> Realization<'c> {
    pub fn new(cfg: &'c RealizationConfig, index: u64) -> Result<Self> {
        cfg.validate()?;
        let n_species = cfg.network.species.len();
        let mut state = Realization {
            cfg,
            index,
            molecules: Vec::new(),
            births: Vec::new(),
            deaths: Vec::new(),
            order: SortedPositions::default(),
            owner: Vec::new(),
            domains: Vec::new(),
            epochs: Vec::new(),
            free: Vec::new(),
            lengths: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            counter: 0,
            rng: realization_rng(cfg.master_seed, index),
            time: 0.0,
            counts: vec![0; n_species],
            history: Vec::new(),
            record: RealizationRecord { realization: index, ..Default::default() },
            floor: FLOOR_FRACTION * cfg.domain.length,
            sync_radius: cfg.sync_radius.unwrap_or(cfg.pairing.r_pair),
            starting: true,
        };
        let mut need = Vec::new();
        for p in &cfg.initial {
            match p {
                InitialPlacement::Uniform { species, count, lo, hi } => {
                    for _ in 0..*count {
                        let x = lo + (hi - lo) * unit(&mut state.rng);
                        need.push(state.spawn(*species, x));
                    }
                }
                InitialPlacement::Explicit { species, positions } => {
                    for &x in positions {
                        need.push(state.spawn(*species, x));
                    }
                }
            }
        }
        state.record.initial_counts = state.counts.clone();
        state.build(need)?;
        state.starting = false;
        Ok(state)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.molecules
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn record(&self) -> &RealizationRecord {
        &self.record
    }

    pub fn into_record(self) -> RealizationRecord {
        self.record
    }

    pub fn live_domains(&self) -> impl Iterator<Item = &ProtectiveDomain> {
        self.domains.iter().flatten()
    }

    fn spawn(&mut self, species: SpeciesId, x: f64) -> MoleculeId {
        let id = self.molecules.len();
        self.molecules.push(Molecule { id, species, position: x, individual_time: self.time, alive: true });
        self.births.push(self.time);
        self.deaths.push(f64::INFINITY);
        self.owner.push(None);
        self.order.insert(x, id);
        self.counts[species] += 1;
        id
    }

    fn kill(&mut self, id: MoleculeId) {
        let m = &mut self.molecules[id];
        if m.alive {
            m.alive = false;
            self.order.remove(m.position, id);
            self.counts[m.species] -= 1;
            self.deaths[id] = self.time;
        }
    }

    fn move_to(&mut self, id: MoleculeId, x: f64) {
        let old = self.molecules[id].position;
        if old.to_bits() != x.to_bits() {
            self.order.remove(old, id);
            self.order.insert(x, id);
            self.molecules[id].position = x;
        }
        self.molecules[id].individual_time = self.time;
    }

    /// Whether any channel can still fire.
    pub fn reaction_possible(&self) -> bool {
        let net = &self.cfg.network;
        net.species.iter().enumerate().any(|(s, sp)| self.counts[s] > 0 && sp.total_unimolecular_rate() > 0.0)
            || net.bimolecular.iter().any(|c| {
                if c.reactant_a == c.reactant_b {
                    self.counts[c.reactant_a] >= 2
                } else {
                    self.counts[c.reactant_a] > 0 && self.counts[c.reactant_b] > 0
                }
            })
    }

    fn log(&mut self, kind: LoggedKind, molecules: Vec<MoleculeId>, location: f64) {
        if self.cfg.log_events {
            self.record.events.push(LoggedEvent { time: self.time, kind, molecules, location });
        }
    }

    fn max_length(&self) -> f64 {
        self.lengths.keys().next_back().map_or(0.0, |&b| f64::from_bits(b))
    }

    fn destroy(&mut self, slot: usize) -> ProtectiveDomain {
        let d = self.domains[slot].take().expect("live domain");
        self.epochs[slot] += 1;
        self.free.push(slot);
        let key = (d.interval.b - d.interval.a).to_bits();
        if let Some(c) = self.lengths.get_mut(&key) {
            *c -= 1;
            if *c == 0 {
                self.lengths.remove(&key);
            }
        }
        for &o in &d.occupants {
            self.owner[o] = None;
        }
        d
    }

    fn retire(&mut self, d: &ProtectiveDomain) {
        if self.cfg.keep_history {
            self.history.push(Retired { occupants: d.occupants.clone(), end: self.time, path: d.path.clone() });
        }
    }

    /// No-passage update of every occupant of `slot` to the current time.
    fn synchronize(&mut self, slot: usize, need: &mut Vec<MoleculeId>) {
        let d = self.destroy(slot);
        let pos = d.positions_at(self.time);
        for (k, &o) in d.occupants.iter().enumerate() {
            self.move_to(o, pos[k]);
            need.push(o);
        }
        self.retire(&d);
    }

    fn peek_time(&mut self) -> Option<f64> {
        while let Some(Reverse(q)) = self.queue.peek() {
            if self.epochs[q.slot] == q.epoch && self.domains[q.slot].is_some() {
                return Some(q.time);
            }
            self.queue.pop();
        }
        None
    }

    /// Process one global event; `false` when nothing is queued.
    pub fn advance(&mut self) -> Result<bool> {
        if self.peek_time().is_none() {
            return Ok(false);
        }
        let Reverse(q) = self.queue.pop().expect("peeked");
        let d = self.destroy(q.slot);
        self.time = q.time;
        self.record.event_count += 1;
        let mut need = Vec::new();
        match d.pending {
            Pending::Path => {
                let pos = d.path.terminal_positions();
                match d.path.terminal.kind {
                    TerminalKind::FirstPassage { slot, side } => {
                        for (k, &o) in d.occupants.iter().enumerate() {
                            self.move_to(o, pos[k]);
                        }
                        let mover = d.occupants[slot];
                        let at_wall = match side {
                            Side::Left => d.interval.a <= 0.0 && d.interval.left == Boundary::Absorbing,
                            Side::Right => d.interval.b >= self.cfg.domain.length && d.interval.right == Boundary::Absorbing,
                        };
                        self.log(LoggedKind::FirstPassage, vec![mover], pos[slot]);
                        if at_wall {
                            self.absorb(mover);
                        } else {
                            need.push(mover);
                        }
                        need.extend(d.occupants.iter().copied().filter(|&o| o != mover));
                    }
                    TerminalKind::Reaction => {
                        for (k, &o) in d.occupants.iter().enumerate() {
                            self.move_to(o, pos[k]);
                        }
                        self.react_pair(d.occupants[0], d.occupants[1], &mut need)?;
                    }
                    TerminalKind::Aborted => {
                        for (k, &o) in d.occupants.iter().enumerate() {
                            self.move_to(o, pos[k]);
                            need.push(o);
                        }
                        self.log(LoggedKind::Aborted, d.occupants.clone(), pos[0]);
                    }
                }
            }
            Pending::Unimolecular { slot, .. } => {
                let pos = d.positions_at(self.time);
                for (k, &o) in d.occupants.iter().enumerate() {
                    self.move_to(o, pos[k]);
                }
                let reactant = d.occupants[slot];
                need.extend(d.occupants.iter().copied().filter(|&o| o != reactant));
                self.react_single(reactant, &mut need)?;
            }
        }
        self.retire(&d);
        self.sync_near(&mut need);
        self.build(need)?;
        Ok(true)
    }

    fn absorb(&mut self, id: MoleculeId) {
        let m = &self.molecules[id];
        self.record.absorptions.push(AbsorptionRecord { time: self.time, species: m.species, location: m.position });
        self.log(LoggedKind::Absorbed, vec![id], self.molecules[id].position);
        self.kill(id);
    }

    fn react_pair(&mut self, x: MoleculeId, y: MoleculeId, need: &mut Vec<MoleculeId>) -> Result<()> {
        let net = Arc::clone(&self.cfg.network);
        let (sx, sy) = (self.molecules[x].species, self.molecules[y].species);
        let k = net.channel_index(sx, sy).ok_or_else(|| Error::Numerical("reaction between non-partners".into()))?;
        let c = &net.bimolecular[k];
        let (px, py) = (self.molecules[x].position, self.molecules[y].position);
        let location = 0.5 * (px + py);
        self.record.reactions.push(ReactionRecord {
            time: self.time,
            location,
            channel: ReactionChannel::Bimolecular(k),
            at_start: self.starting,
        });
        self.log(LoggedKind::Bimolecular, vec![x, y], location);
        self.kill(x);
        self.kill(y);
        for (s, p) in place_products(&[px, py], &c.products, c.product_separation, self.cfg.domain.length, &mut self.rng)? {
            need.push(self.spawn(s, p));
        }
        Ok(())
    }

    fn react_single(&mut self, x: MoleculeId, need: &mut Vec<MoleculeId>) -> Result<()> {
        let net = Arc::clone(&self.cfg.network);
        let s = self.molecules[x].species;
        let channels = &net.species[s].unimolecular;
        let total: f64 = channels.iter().map(|c| c.rate).sum();
        let mut u = unit(&mut self.rng) * total;
        let mut index = channels.len() - 1;
        for (i, c) in channels.iter().enumerate() {
            if u < c.rate {
                index = i;
                break;
            }
            u -= c.rate;
        }
        let c = &channels[index];
        let px = self.molecules[x].position;
        self.record.reactions.push(ReactionRecord {
            time: self.time,
            location: px,
            channel: ReactionChannel::Unimolecular { species: s, index },
            at_start: false,
        });
        self.log(LoggedKind::Unimolecular, vec![x], px);
        self.kill(x);
        for (sp, p) in place_products(&[px], &c.products, c.product_separation, self.cfg.domain.length, &mut self.rng)? {
            need.push(self.spawn(sp, p));
        }
        Ok(())
    }

    fn near_partner_domain(&self, slot: usize, species: SpeciesId, x: f64, reach: f64) -> bool {
        let d = self.domains[slot].as_ref().expect("owned");
        let net = &self.cfg.network;
        d.interval.b >= x - reach
            && d.interval.a <= x + reach
            && d.occupants.iter().any(|&o| net.reacts(species, self.molecules[o].species))
    }

    /// Synchronize partner domains overlapping or within the sync radius of freshly placed molecules.
    fn sync_near(&mut self, need: &mut Vec<MoleculeId>) {
        let reach = self.sync_radius;
        let mut i = 0;
        let fresh = need.len();
        while i < fresh {
            let id = need[i];
            i += 1;
            if !self.molecules[id].alive {
                continue;
            }
            let x = self.molecules[id].position;
            let species = self.molecules[id].species;
            let window = reach + self.max_length();
            let Some(at) = self.order.index_of(x, id) else { continue };
            let mut hits = Vec::new();
            for (p, o) in self.order.left_of(at) {
                if x - p > window {
                    break;
                }
                if let Some(slot) = self.owner[o] {
                    if self.near_partner_domain(slot, species, x, reach) {
                        hits.push(slot);
                    }
                }
            }
            for (p, o) in self.order.right_of(at) {
                if p - x > window {
                    break;
                }
                if let Some(slot) = self.owner[o] {
                    if self.near_partner_domain(slot, species, x, reach) {
                        hits.push(slot);
                    }
                }
            }
            for slot in hits {
                if self.domains[slot].is_some() {
                    self.synchronize(slot, need);
                }
            }
        }
    }

    fn needs_flags(&self, need: &[MoleculeId]) -> Vec<bool> {
        let mut flags = vec![false; self.molecules.len()];
        for &id in need {
            flags[id] = true;
        }
        flags
    }

    /// Resolve reactant pairs already within reaction range and molecules sitting on absorbing walls.
    fn resolve_contacts(&mut self, need: &mut Vec<MoleculeId>) -> Result<bool> {
        let length = self.cfg.domain.length;
        let mut changed = false;
        for &id in need.iter() {
            let m = &self.molecules[id];
            if m.alive
                && ((m.position <= 0.0 && self.cfg.domain.left == Boundary::Absorbing)
                    || (m.position >= length && self.cfg.domain.right == Boundary::Absorbing))
            {
                self.absorb(id);
                changed = true;
            }
        }
        let rmax = self.cfg.network.max_reaction_radius();
        if rmax <= 0.0 {
            return Ok(changed);
        }
        let net = Arc::clone(&self.cfg.network);
        let mut contacts = Vec::new();
        let mut to_sync = Vec::new();
        for &id in need.iter() {
            let m = &self.molecules[id];
            if !m.alive {
                continue;
            }
            let Some(at) = self.order.index_of(m.position, id) else { continue };
            let scan = self
                .order
                .left_of(at)
                .take_while(|&(p, _)| m.position - p <= rmax)
                .chain(self.order.right_of(at).take_while(|&(p, _)| p - m.position <= rmax));
            for (p, o) in scan {
                if let Some(c) = net.channel(m.species, self.molecules[o].species) {
                    let d = (p - m.position).abs();
                    if d <= c.reaction_radius {
                        match self.owner[o] {
                            Some(slot) => to_sync.push(slot),
                            None if id < o || !need.contains(&o) => contacts.push((d, id.min(o), id.max(o))),
                            None => {}
                        }
                    }
                }
            }
        }
        if !to_sync.is_empty() {
            for slot in to_sync {
                if self.domains[slot].is_some() {
                    self.synchronize(slot, need);
                }
            }
            return Ok(true);
        }
        contacts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        contacts.dedup();
        for (_, x, y) in contacts {
            if self.molecules[x].alive && self.molecules[y].alive {
                self.react_pair(x, y, need)?;
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Rebuild domains for every molecule in `need`.
    fn build(&mut self, mut need: Vec<MoleculeId>) -> Result<()> {
        let mut forced: Vec<(MoleculeId, MoleculeId)> = Vec::new();
        let plans = loop {
            need.retain(|&id| self.molecules[id].alive);
            need.sort_unstable();
            need.dedup();
            if self.resolve_contacts(&mut need)? {
                continue;
            }
            forced.retain(|&(x, y)| self.molecules[x].alive && self.molecules[y].alive);
            match self.plan(&need, &forced) {
                Ok(plans) => break plans,
                Err(Replan::Sync(slot)) => self.synchronize(slot, &mut need),
                Err(Replan::Force(x, y)) => forced.push((x, y)),
            }
        };
        for p in plans {
            self.create(p)?;
        }
        Ok(())
    }

    fn plan(&self, need: &[MoleculeId], forced: &[(MoleculeId, MoleculeId)]) -> std::result::Result<Vec<Plan>, Replan> {
        let net = &self.cfg.network;
        let flags = self.needs_flags(need);
        let in_forced = |id: MoleculeId| forced.iter().any(|&(x, y)| x == id || y == id);
        let mut pairs: Vec<(MoleculeId, MoleculeId)> =
            select_pairs(&self.order, &self.molecules, |id| flags[id] && !in_forced(id), net, &self.cfg.pairing);
        for &(x, y) in forced {
            let (l, r) = if self.molecules[x].position <= self.molecules[y].position { (x, y) } else { (y, x) };
            pairs.push((l, r));
        }
        pairs.sort_by(|p, q| self.molecules[p.0].position.total_cmp(&self.molecules[q.0].position).then(p.0.cmp(&q.0)));
        let mut planned: Vec<Plan> = Vec::new();
        let mut plan_of: Vec<Option<usize>> = vec![None; self.molecules.len()];
        let mut max_len = self.max_length();
        for &(x, y) in &pairs {
            let (px, py) = (self.molecules[x].position, self.molecules[y].position);
            let (lb, lbind) = self.side_bound(x, Side::Left, Some(y), &planned, &plan_of, max_len);
            let (rb, rbind) = self.side_bound(y, Side::Right, Some(x), &planned, &plan_of, max_len);
            let (mut r, bind) = if lb <= rb { (lb, lbind) } else { (rb, rbind) };
            if self.cfg.pairing.pair_cap {
                r = r.min(0.5 * (py - px));
            }
            if r < self.floor {
                if let Binding::Existing(slot) = bind {
                    return Err(Replan::Sync(slot));
                }
            }
            // Squeezed by something that cannot be synchronized: keep a floor-sized domain and
            // let contact resolution catch any partner that comes within range.
            let r = r.max(self.floor);
            let interval = truncate(px - r, py + r, &self.cfg.domain);
            max_len = max_len.max(interval.b - interval.a);
            plan_of[x] = Some(planned.len());
            plan_of[y] = Some(planned.len());
            planned.push(Plan { kind: DomainKind::Pair, occupants: vec![x, y], interval, r_pd: r });
        }
        let mut singles: Vec<MoleculeId> = need.iter().copied().filter(|&id| plan_of[id].is_none()).collect();
        singles.sort_by(|a, b| self.molecules[*a].position.total_cmp(&self.molecules[*b].position).then(a.cmp(b)));
        for x in singles {
            let px = self.molecules[x].position;
            let (lb, lbind) = self.side_bound(x, Side::Left, None, &planned, &plan_of, max_len);
            let (rb, rbind) = self.side_bound(x, Side::Right, None, &planned, &plan_of, max_len);
            let (mut r, bind) = if lb <= rb { (lb, lbind) } else { (rb, rbind) };
            if r < self.floor {
                match bind {
                    Binding::Existing(slot) => return Err(Replan::Sync(slot)),
                    Binding::Undefined(y) if net.reacts(self.molecules[x].species, self.molecules[y].species) => {
                        if let Some(replan) = self.force_between(x, y, &plan_of) {
                            return Err(replan);
                        }
                    }
                    _ => {}
                }
            }
            let mut interval = truncate(px - r, px + r, &self.cfg.domain);
            if interval.left == Boundary::Reflecting && interval.right == Boundary::Reflecting {
                r = walled_single_radius(px, &self.cfg.domain);
                interval = truncate(px - r, px + r, &self.cfg.domain);
            }
            if !(r >= self.floor) {
                r = self.floor;
                interval = truncate(px - r, px + r, &self.cfg.domain);
            }
            max_len = max_len.max(interval.b - interval.a);
            plan_of[x] = Some(planned.len());
            planned.push(Plan { kind: DomainKind::Single, occupants: vec![x], interval, r_pd: r });
        }
        Ok(planned)
    }

    /// Replan for a single squeezed by an undefined partner `y`: pair the closest adjacent reacting
    /// couple between the two, after synchronizing any domain sitting in between.
    fn force_between(&self, x: MoleculeId, y: MoleculeId, plan_of: &[Option<usize>]) -> Option<Replan> {
        let net = &self.cfg.network;
        let ix = self.order.index_of(self.molecules[x].position, x)?;
        let iy = self.order.index_of(self.molecules[y].position, y)?;
        let (lo, hi) = (ix.min(iy), ix.max(iy));
        let entries = &self.order.entries()[lo..=hi];
        for &(_, o) in &entries[1..entries.len() - 1] {
            if let Some(slot) = self.owner[o] {
                return Some(Replan::Sync(slot));
            }
        }
        let mut best: Option<(f64, MoleculeId, MoleculeId)> = None;
        for w in entries.windows(2) {
            let ((pu, u), (pv, v)) = (w[0], w[1]);
            if plan_of[u].is_none()
                && plan_of[v].is_none()
                && net.reacts(self.molecules[u].species, self.molecules[v].species)
                && best.is_none_or(|b| pv - pu < b.0)
            {
                best = Some((pv - pu, u, v));
            }
        }
        best.map(|(_, u, v)| Replan::Force(u, v))
    }

    /// Largest radius on one side of `id` compatible with every neighbour and domain there.
    fn side_bound(
        &self,
        id: MoleculeId,
        side: Side,
        mate: Option<MoleculeId>,
        planned: &[Plan],
        plan_of: &[Option<usize>],
        max_len: f64,
    ) -> (f64, Binding) {
        let net = &self.cfg.network;
        let me = &self.molecules[id];
        let (x, s) = (me.position, me.species);
        let pair_mode = mate.is_some();
        let rmax = net.max_reaction_radius();
        let Some(at) = self.order.index_of(x, id) else { return (f64::INFINITY, Binding::None) };
        let mut bound = f64::INFINITY;
        let mut binding = Binding::None;
        let mut undefined_seen = false;
        let iter: Box<dyn Iterator<Item = (f64, MoleculeId)>> = match side {
            Side::Left => Box::new(self.order.left_of(at)),
            Side::Right => Box::new(self.order.right_of(at)),
        };
        let radius = |o: MoleculeId| net.channel(s, self.molecules[o].species).map(|c| c.reaction_radius);
        for (p, o) in iter {
            let d = (p - x).abs();
            if d > bound + rmax + max_len {
                break;
            }
            if Some(o) == mate {
                continue;
            }
            let defined = match (self.owner[o], plan_of[o]) {
                (Some(slot), _) => {
                    let dom = self.domains[slot].as_ref().expect("owned");
                    Some((dom.interval, dom.kind, &dom.occupants[..], Binding::Existing(slot)))
                }
                (None, Some(k)) => Some((planned[k].interval, planned[k].kind, &planned[k].occupants[..], Binding::Planned)),
                (None, None) => None,
            };
            match defined {
                Some((iv, kind, occupants, bind)) => {
                    let near = match (kind, side) {
                        (DomainKind::Pair, Side::Left) => occupants[1],
                        (DomainKind::Pair, Side::Right) => occupants[0],
                        (DomainKind::Single, _) => occupants[0],
                    };
                    let partner = radius(near);
                    if !(pair_mode || kind == DomainKind::Pair || partner.is_some()) {
                        continue;
                    }
                    let gap = match side {
                        Side::Left => x - iv.b,
                        Side::Right => iv.a - x,
                    };
                    let c = gap - partner.unwrap_or(0.0);
                    if c < bound {
                        bound = c;
                        binding = bind;
                    }
                }
                None => {
                    if undefined_seen {
                        continue;
                    }
                    let partner = radius(o);
                    if !(pair_mode || partner.is_some()) {
                        continue;
                    }
                    undefined_seen = true;
                    let c = match partner {
                        Some(r_r) => 0.5 * (d - r_r),
                        None => 0.5 * d,
                    };
                    if c < bound {
                        bound = c;
                        binding = Binding::Undefined(o);
                    }
                }
            }
        }
        (bound, binding)
    }

    fn create(&mut self, plan: Plan) -> Result<()> {
        self.counter += 1;
        let mut rng = domain_rng(self.cfg.master_seed, self.index, self.counter);
        let net = Arc::clone(&self.cfg.network);
        let iv = plan.interval;
        let path = match plan.kind {
            DomainKind::Single => {
                let m = &self.molecules[plan.occupants[0]];
                let sp = &net.species[m.species];
                let mesh = single_mesh(iv.a, iv.b, m.position, self.cfg.h_s_max, iv.left, iv.right)?;
                let rates = mesh.rates(sp.diffusion, &sp.potential);
                ssa_single_path(&mesh, &rates, self.time, &mut rng, self.cfg.max_path_hops)?
            }
            DomainKind::Pair => {
                let (x, y) = (&self.molecules[plan.occupants[0]], &self.molecules[plan.occupants[1]]);
                let (sx, sy) = (&net.species[x.species], &net.species[y.species]);
                let c = net.channel(x.species, y.species).ok_or_else(|| Error::Numerical("pair of non-partners".into()))?;
                let setup = PairSetup {
                    a: iv.a,
                    b: iv.b,
                    left: iv.left,
                    right: iv.right,
                    positions: [x.position, y.position],
                    h_p: self.cfg.h_p,
                    reaction_radius: c.reaction_radius,
                    diffusion: [sx.diffusion, sy.diffusion],
                    potential: [&sx.potential, &sy.potential],
                };
                ssa_pair_path(&setup, self.time, &mut rng, self.cfg.max_path_hops)?.0
            }
        };
        let mut pending = Pending::Path;
        let mut when = path.terminal.time;
        for (k, &o) in plan.occupants.iter().enumerate() {
            let rate = net.species[self.molecules[o].species].total_unimolecular_rate();
            if rate > 0.0 {
                let t = self.time + sample_exponential(rate, &mut rng);
                if t < when {
                    when = t;
                    pending = Pending::Unimolecular { slot: k, time: t };
                }
            }
        }
        let hops = path.hop_count() as u64;
        self.record.hop_count += hops;
        self.record.width_hops += path.width * hops as f64;
        *self.record.mesh_hops.entry(path.width.to_bits()).or_insert(0) += hops;
        self.record.domains_built += 1;
        let slot = match self.free.pop() {
            Some(s) => s,
            None => {
                self.domains.push(None);
                self.epochs.push(0);
                self.domains.len() - 1
            }
        };
        for &o in &plan.occupants {
            self.owner[o] = Some(slot);
        }
        *self.lengths.entry((iv.b - iv.a).to_bits()).or_insert(0) += 1;
        self.domains[slot] = Some(ProtectiveDomain {
            interval: iv,
            kind: plan.kind,
            occupants: plan.occupants,
            r_pd: plan.r_pd,
            creation_time: self.time,
            path,
            pending,
        });
        self.seq += 1;
        self.queue.push(Reverse(Queued { time: when, seq: self.seq, slot, epoch: self.epochs[slot] }));
        Ok(())
    }

    /// Positions of all molecules alive at `t`, by no-passage lookup in live or retained paths.
    pub fn snapshot(&self, t: f64) -> Result<Snapshot> {
        let next = self.domains.iter().flatten().map(|d| d.event_time()).fold(f64::INFINITY, f64::min);
        if t > next || t < 0.0 {
            return Err(Error::InvalidQuery(format!("t = {t} outside the recorded history")));
        }
        if t < self.time && !self.cfg.keep_history {
            return Err(Error::InvalidQuery("history is not retained".into()));
        }
        let mut pos: Vec<Option<f64>> = vec![None; self.molecules.len()];
        for d in self.domains.iter().flatten() {
            if d.creation_time <= t {
                let p = d.positions_at(t);
                for (k, &o) in d.occupants.iter().enumerate() {
                    pos[o] = Some(p[k]);
                }
            }
        }
        if t < self.time {
            for r in &self.history {
                if r.path.start_time <= t && t < r.end {
                    let p = r.path.no_passage_position(t).unwrap_or(r.path.initial);
                    for (k, &o) in r.occupants.iter().enumerate() {
                        pos[o] = Some(p[k]);
                    }
                }
            }
        }
        let molecules = (0..self.molecules.len())
            .filter(|&id| self.births[id] <= t && t < self.deaths[id])
            .filter_map(|id| pos[id].map(|p| (id, self.molecules[id].species, p)))
            .collect();
        Ok(Snapshot { time: t, molecules })
    }

    fn stop_reached(&self, next: Option<f64>, pending_snapshots: bool) -> bool {
        match self.cfg.stop {
            StopRule::AllReacted => !self.reaction_possible() && !pending_snapshots,
            StopRule::TimeHorizon(h) => next.is_none_or(|n| n > h),
            StopRule::EventCount(n) => self.record.event_count >= n,
        }
    }

    /// Advance until the stop rule holds, recording snapshots on the way.
    pub fn run(mut self) -> Result<RealizationRecord> {
        let started = Instant::now();
        let mut snaps: VecDeque<f64> = self.cfg.snapshot_times.iter().copied().collect();
        if let StopRule::TimeHorizon(h) = self.cfg.stop {
            snaps.retain(|&t| t <= h);
        }
        loop {
            let next = self.peek_time();
            while let Some(&ts) = snaps.front() {
                if next.is_some_and(|n| ts >= n) {
                    break;
                }
                let s = self.snapshot(ts.max(self.time))?;
                self.record.snapshots.push(Snapshot { time: ts, ..s });
                snaps.pop_front();
            }
            if next.is_none() || self.stop_reached(next, !snaps.is_empty()) {
                break;
            }
            self.advance()?;
        }
        self.record.final_time = match self.cfg.stop {
            StopRule::TimeHorizon(h) => h.max(self.time),
            _ => self.time,
        };
        if self.cfg.measure_wall_time {
            self.record.wall_seconds = started.elapsed().as_secs_f64();
        }
        Ok(self.record)
    }
}

pub fn run_realization(cfg: &RealizationConfig, index: u64) -> Result<RealizationRecord> {
    Realization::new(cfg, index)?.run()
}
