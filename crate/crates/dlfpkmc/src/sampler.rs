//! Exact SSA sample paths on domain meshes and no-passage lookup.

use crate::error::{Error, Result};
use crate::mesh::{pair_alignment_submesh, pair_mesh, DomainMesh, MeshRates, LATTICE_TOL};
use crate::model::Boundary;
use crate::potential::PotentialField;
use crate::rates::nonuniform_rate;
use crate::rng::{open_unit, unit};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalKind {
    FirstPassage {
        slot: usize,
        side: Side,
    },
    Reaction,
    /// Hop budget exhausted; the domain must be rebuilt.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTerminal {
    pub kind: TerminalKind,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub time: f64,
    pub index: [u32; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub start_time: f64,
    pub occupants: usize,
    pub initial: [f64; 2],
    pub points: Vec<f64>,
    pub hops: Vec<Hop>,
    pub terminal: PathTerminal,
    pub width: f64,
}

impl SamplePath {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    fn positions_after(&self, count: usize) -> [f64; 2] {
        if count == 0 {
            self.initial
        } else {
            let h = self.hops[count - 1];
            let second = if self.occupants == 2 { self.points[h.index[1] as usize] } else { 0.0 };
            [self.points[h.index[0] as usize], second]
        }
    }

    pub fn terminal_positions(&self) -> [f64; 2] {
        self.positions_after(self.hops.len())
    }

    /// Positions at the last hop not after `t`; `t` must lie in `[start, terminal)`.
    pub fn no_passage_position(&self, t: f64) -> Result<[f64; 2]> {
        if !(t >= self.start_time && t < self.terminal.time) {
            return Err(Error::InvalidQuery(format!("t = {t} outside [{}, {})", self.start_time, self.terminal.time)));
        }
        Ok(self.positions_after(self.hops.partition_point(|h| h.time <= t)))
    }
}

/// `-ln(u) / rate` with `u` uniform on (0, 1]; non-positive rates give `+inf`.
pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        -open_unit(rng).ln() / rate
    } else {
        f64::INFINITY
    }
}

pub fn ssa_single_path<R: Rng + ?Sized>(
    mesh: &DomainMesh,
    rates: &MeshRates,
    start_time: f64,
    rng: &mut R,
    max_hops: Option<usize>,
) -> Result<SamplePath> {
    if mesh.occupants.len() != 1 {
        return Err(Error::InvalidMesh("single path needs exactly one occupant".into()));
    }
    let n = mesh.points.len();
    let mut i = mesh.occupants[0];
    let mut t = start_time;
    let mut hops = Vec::new();
    let budget = max_hops.unwrap_or(usize::MAX);
    let kind = loop {
        if hops.len() >= budget {
            break TerminalKind::Aborted;
        }
        let (rl, rr) = (rates.left[i], rates.right[i]);
        let total = rl + rr;
        if !(total > 0.0) {
            return Err(Error::Numerical("zero total hop rate".into()));
        }
        t += -open_unit(rng).ln() / total;
        i = if unit(rng) * total < rl { i - 1 } else { i + 1 };
        hops.push(Hop { time: t, index: [i as u32, 0] });
        if i == 0 && mesh.left.is_absorbing() {
            break TerminalKind::FirstPassage { slot: 0, side: Side::Left };
        }
        if i + 1 == n && mesh.right.is_absorbing() {
            break TerminalKind::FirstPassage { slot: 0, side: Side::Right };
        }
    };
    let x = mesh.points[mesh.occupants[0]];
    Ok(SamplePath {
        start_time,
        occupants: 1,
        initial: [x, 0.0],
        points: mesh.points.clone(),
        hops,
        terminal: PathTerminal { kind, time: t },
        width: mesh.width,
    })
}

/// Geometry and kinetics of a pair domain; slot 0 is the left molecule.
#[derive(Debug, Clone, Copy)]
pub struct PairSetup<'a> {
    pub a: f64,
    pub b: f64,
    pub left: Boundary,
    pub right: Boundary,
    pub positions: [f64; 2],
    pub h_p: f64,
    pub reaction_radius: f64,
    pub diffusion: [f64; 2],
    pub potential: [&'a PotentialField; 2],
}

impl PairSetup<'_> {
    fn same_kinetics(&self) -> bool {
        self.diffusion[0] == self.diffusion[1] && self.potential[0] == self.potential[1]
    }
}

struct Stencil {
    target: [f64; 2],
    rate: [f64; 2],
    exits: [Option<Side>; 2],
}

/// Away/toward stencil for one molecule; `dir` is -1 for the left molecule.
fn stencil(s: &PairSetup, slot: usize, h_away: f64, h_toward: f64) -> Stencil {
    let x = s.positions[slot];
    let (d, v) = (s.diffusion[slot], s.potential[slot]);
    let vx = v.value(x);
    let (wall, kind, side, dir) = if slot == 0 { (s.a, s.left, Side::Left, -1.0) } else { (s.b, s.right, Side::Right, 1.0) };
    let room = (x - wall).abs();
    let toward = x - dir * h_toward;
    if room <= h_away * (1.0 + LATTICE_TOL) {
        match kind {
            Boundary::Absorbing => {
                let r_away = nonuniform_rate(d, room, h_toward, vx, v.value(wall));
                let r_toward = nonuniform_rate(d, h_toward, room, vx, v.value(toward));
                Stencil { target: [wall, toward], rate: [r_away, r_toward], exits: [Some(side), None] }
            }
            Boundary::Reflecting => {
                let r_toward = nonuniform_rate(d, h_toward, 2.0 * room, vx, v.value(toward));
                Stencil { target: [wall, toward], rate: [0.0, r_toward], exits: [None, None] }
            }
        }
    } else {
        let away = x + dir * h_away;
        let r_away = nonuniform_rate(d, h_away, h_toward, vx, v.value(away));
        let r_toward = nonuniform_rate(d, h_toward, h_away, vx, v.value(toward));
        Stencil { target: [away, toward], rate: [r_away, r_toward], exits: [None, None] }
    }
}

/// Pair path with the optional alignment hop; returns the path and the uniform mesh it ran on.
pub fn ssa_pair_path<R: Rng + ?Sized>(
    s: &PairSetup,
    start_time: f64,
    rng: &mut R,
    max_hops: Option<usize>,
) -> Result<(SamplePath, Option<DomainMesh>)> {
    let [xa, xb] = s.positions;
    if !(xb - xa > s.reaction_radius * (1.0 + 1e-12)) {
        return Err(Error::InvalidMesh(format!("pair entered at separation {} <= r_R", xb - xa)));
    }
    let k_ratio = s.reaction_radius / s.h_p;
    let k = k_ratio.round();
    if (k_ratio - k).abs() > 1e-12 * k_ratio.max(1.0) {
        return Err(Error::InvalidConfig("h_p must divide the reaction radius".into()));
    }
    let k = k as usize;
    let sub = pair_alignment_submesh(xb - xa, s.h_p, s.reaction_radius)?;
    let mut t = start_time;
    let mut positions = s.positions;
    let mut first_hop = None;
    if !sub.is_degenerate() {
        let st = [stencil(s, 0, sub.h_away, sub.h_toward), stencil(s, 1, sub.h_away, sub.h_toward)];
        // channel order: left molecule left, left molecule right, right molecule left, right molecule right
        let rates = [st[0].rate[0], st[0].rate[1], st[1].rate[1], st[1].rate[0]];
        let total: f64 = rates.iter().sum();
        t += -open_unit(rng).ln() / total;
        let u = unit(rng) * total;
        let channel = if u < rates[0] {
            0
        } else if u < rates[0] + rates[1] {
            1
        } else if u < rates[0] + rates[1] + rates[2] {
            2
        } else {
            3
        };
        let (slot, which) = match channel {
            0 => (0, 0),
            1 => (0, 1),
            2 => (1, 1),
            _ => (1, 0),
        };
        positions[slot] = st[slot].target[which];
        let early = if let Some(side) = st[slot].exits[which] {
            Some(TerminalKind::FirstPassage { slot, side })
        } else {
            let gap = positions[1] - positions[0];
            ((gap - s.reaction_radius).abs() <= LATTICE_TOL * s.h_p).then_some(TerminalKind::Reaction)
        };
        if let Some(kind) = early {
            let hops = vec![Hop { time: t, index: [0, 1] }];
            let path = SamplePath {
                start_time,
                occupants: 2,
                initial: s.positions,
                points: positions.to_vec(),
                hops,
                terminal: PathTerminal { kind, time: t },
                width: s.h_p,
            };
            return Ok((path, None));
        }
        first_hop = Some(t);
    }
    let mesh = pair_mesh(s.a, s.b, positions[0], positions[1], s.h_p, s.left, s.right)?;
    let ra = mesh.rates(s.diffusion[0], s.potential[0]);
    let rb_own;
    let rb = if s.same_kinetics() {
        &ra
    } else {
        rb_own = mesh.rates(s.diffusion[1], s.potential[1]);
        &rb_own
    };
    let n = mesh.points.len();
    let (mut ia, mut ib) = (mesh.occupants[0], mesh.occupants[1]);
    let mut hops = Vec::new();
    if let Some(t1) = first_hop {
        hops.push(Hop { time: t1, index: [ia as u32, ib as u32] });
    }
    let budget = max_hops.unwrap_or(usize::MAX);
    let left_abs = mesh.left.is_absorbing();
    let right_abs = mesh.right.is_absorbing();
    let kind = loop {
        if hops.len() >= budget {
            break TerminalKind::Aborted;
        }
        let r = [ra.left[ia], ra.right[ia], rb.left[ib], rb.right[ib]];
        let total = r[0] + r[1] + r[2] + r[3];
        t += -open_unit(rng).ln() / total;
        let u = unit(rng) * total;
        if u < r[0] {
            ia -= 1;
        } else if u < r[0] + r[1] {
            ia += 1;
        } else if u < r[0] + r[1] + r[2] {
            ib -= 1;
        } else {
            ib += 1;
        }
        hops.push(Hop { time: t, index: [ia as u32, ib as u32] });
        if ia == 0 && left_abs {
            break TerminalKind::FirstPassage { slot: 0, side: Side::Left };
        }
        if ib + 1 == n && right_abs {
            break TerminalKind::FirstPassage { slot: 1, side: Side::Right };
        }
        if ib - ia == k {
            break TerminalKind::Reaction;
        }
    };
    let path = SamplePath {
        start_time,
        occupants: 2,
        initial: s.positions,
        points: mesh.points.clone(),
        hops,
        terminal: PathTerminal { kind, time: t },
        width: s.h_p,
    };
    Ok((path, Some(mesh)))
}
