//! Dynamic lattices inside protective domains.

use crate::error::{Error, Result};
use crate::model::Boundary;
use crate::potential::PotentialField;
use crate::rates::nonuniform_rate;

pub const LATTICE_TOL: f64 = 1e-9;
const REMAINDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndKind {
    AbsorbingOnPoint,
    AbsorbingNonUniform { h_abs: f64 },
    ReflectingNonUniform { h_ref: f64 },
}

impl EndKind {
    pub fn is_absorbing(&self) -> bool {
        !matches!(self, EndKind::ReflectingNonUniform { .. })
    }
}

/// Ordered mesh points; absorbing ends are the first/last point themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMesh {
    pub points: Vec<f64>,
    pub left: EndKind,
    pub right: EndKind,
    pub occupants: Vec<usize>,
    pub width: f64,
}

/// Per-point hop rates for one occupant's species.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshRates {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl MeshRates {
    pub fn total(&self, i: usize) -> f64 {
        self.left[i] + self.right[i]
    }
}

impl DomainMesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_absorbing_index(&self, i: usize) -> bool {
        (i == 0 && self.left.is_absorbing()) || (i + 1 == self.points.len() && self.right.is_absorbing())
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Spacings seen from point `i`; reflecting ends contribute `h_ref`.
    pub fn local_spacings(&self, i: usize) -> (f64, f64) {
        let n = self.points.len();
        let hl = if i > 0 {
            self.points[i] - self.points[i - 1]
        } else if let EndKind::ReflectingNonUniform { h_ref } = self.left {
            h_ref
        } else {
            0.0
        };
        let hr = if i + 1 < n {
            self.points[i + 1] - self.points[i]
        } else if let EndKind::ReflectingNonUniform { h_ref } = self.right {
            h_ref
        } else {
            0.0
        };
        (hl, hr)
    }

    /// Probability-mass cell width attached to point `i`.
    pub fn cell_width(&self, i: usize) -> f64 {
        let (hl, hr) = self.local_spacings(i);
        0.5 * (hl + hr)
    }

    pub fn rates(&self, diffusion: f64, potential: &PotentialField) -> MeshRates {
        let n = self.points.len();
        let v: Vec<f64> = self.points.iter().map(|&x| potential.value(x)).collect();
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for i in 0..n {
            if self.is_absorbing_index(i) {
                continue;
            }
            let (hl, hr) = self.local_spacings(i);
            if i > 0 {
                left[i] = nonuniform_rate(diffusion, hl, hr, v[i], v[i - 1]);
            }
            if i + 1 < n {
                right[i] = nonuniform_rate(diffusion, hr, hl, v[i], v[i + 1]);
            }
        }
        MeshRates { left, right }
    }
}

fn reflecting_cell(first_point: f64, wall: f64, h: f64) -> (f64, EndKind) {
    let w = (first_point - wall).abs();
    if w <= LATTICE_TOL * h {
        (wall, EndKind::ReflectingNonUniform { h_ref: 0.0 })
    } else {
        (first_point, EndKind::ReflectingNonUniform { h_ref: 2.0 * w })
    }
}

/// Mesh width `r / ceil(r / h_max)`.
pub fn single_width(r: f64, h_max: f64) -> f64 {
    r / cells(r, h_max) as f64
}

fn cells(r: f64, h_max: f64) -> usize {
    ((r / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Single-occupant mesh on `[a, b]` through the molecule at `x`.
pub fn single_mesh(a: f64, b: f64, x: f64, h_s_max: f64, left: Boundary, right: Boundary) -> Result<DomainMesh> {
    if !(b > a) || !(h_s_max > 0.0) || x < a || x > b {
        return Err(Error::InvalidMesh(format!("single mesh on [{a}, {b}] for x = {x}")));
    }
    match (left, right) {
        (Boundary::Absorbing, Boundary::Absorbing) if ((x - a) - (b - x)).abs() > LATTICE_TOL * (b - a) => {
            let r = (x - a).max(b - x);
            let h = single_width(r, h_s_max);
            let mut m = pair_mesh(a, b, x, x, h, left, right)?;
            m.occupants.truncate(1);
            Ok(m)
        }
        (Boundary::Absorbing, Boundary::Absorbing) => {
            let r = 0.5 * (b - a);
            if !(r > 0.0) {
                return Err(Error::InvalidMesh("r_PD must be positive".into()));
            }
            let n = cells(r, h_s_max);
            let h = r / n as f64;
            let mut points = Vec::with_capacity(2 * n + 1);
            points.push(a);
            for k in 1..2 * n {
                points.push(x + (k as f64 - n as f64) * h);
            }
            points.push(b);
            Ok(DomainMesh { points, left: EndKind::AbsorbingOnPoint, right: EndKind::AbsorbingOnPoint, occupants: vec![n], width: h })
        }
        (Boundary::Reflecting, Boundary::Absorbing) => {
            let r = b - x;
            if !(r > 0.0) {
                return Err(Error::InvalidMesh("r_PD must be positive".into()));
            }
            let n = cells(r, h_s_max);
            let h = r / n as f64;
            let m = ((x - a) / h + LATTICE_TOL).floor().max(0.0) as usize;
            let (p0, kind) = reflecting_cell(x - m as f64 * h, a, h);
            let mut points = Vec::with_capacity(m + n + 1);
            points.push(p0);
            for k in 1..m + n {
                points.push(x + (k as f64 - m as f64) * h);
            }
            points.push(b);
            if m == 0 {
                points[0] = x;
            }
            Ok(DomainMesh { points, left: kind, right: EndKind::AbsorbingOnPoint, occupants: vec![m], width: h })
        }
        (Boundary::Absorbing, Boundary::Reflecting) => {
            let mirrored = single_mesh(-b, -a, -x, h_s_max, Boundary::Reflecting, Boundary::Absorbing)?;
            Ok(mirror(mirrored))
        }
        (Boundary::Reflecting, Boundary::Reflecting) => Err(Error::InvalidMesh("a single domain needs an absorbing end".into())),
    }
}

fn mirror(m: DomainMesh) -> DomainMesh {
    let n = m.points.len();
    DomainMesh {
        points: m.points.iter().rev().map(|p| -p).collect(),
        left: m.right,
        right: m.left,
        occupants: m.occupants.iter().map(|&i| n - 1 - i).collect(),
        width: m.width,
    }
}

/// Alignment spacings: `h_toward = d mod h_p`, `h_away = h_p - h_toward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSubmesh {
    pub h_away: f64,
    pub h_toward: f64,
}

impl PairSubmesh {
    pub fn is_degenerate(&self) -> bool {
        self.h_toward == 0.0
    }
}

pub fn pair_alignment_submesh(separation: f64, h_p: f64, reaction_radius: f64) -> Result<PairSubmesh> {
    if !(separation > reaction_radius) {
        return Err(Error::InvalidMesh(format!("separation {separation} within reaction radius {reaction_radius}")));
    }
    let q = (separation / h_p).floor();
    let mut h2 = separation - q * h_p;
    if h2 <= REMAINDER_TOL * h_p || h_p - h2 <= REMAINDER_TOL * h_p {
        h2 = 0.0;
    }
    Ok(PairSubmesh { h_away: if h2 == 0.0 { h_p } else { h_p - h2 }, h_toward: h2 })
}

/// Uniform `h_p` mesh through both molecules with non-uniform end cells.
pub fn pair_mesh(a: f64, b: f64, xa: f64, xb: f64, h_p: f64, left: Boundary, right: Boundary) -> Result<DomainMesh> {
    if !(b > a) || !(xa <= xb) || xa < a || xb > b {
        return Err(Error::InvalidMesh(format!("pair mesh on [{a}, {b}] with molecules {xa}, {xb}")));
    }
    let q = ((xb - xa) / h_p).round();
    if ((xb - xa) - q * h_p).abs() > LATTICE_TOL * h_p {
        return Err(Error::InvalidMesh("pair molecules are not lattice aligned".into()));
    }
    let q = q as usize;
    let m = ((xa - a) / h_p + LATTICE_TOL).floor().max(0.0) as usize;
    let low = xa - m as f64 * h_p;
    let n = ((b - xa) / h_p + LATTICE_TOL).floor().max(0.0) as usize;
    let high = xa + n as f64 * h_p;
    let mut points = Vec::with_capacity(m + n + 3);
    let left_kind = match left {
        Boundary::Absorbing => {
            let gap = low - a;
            if gap <= LATTICE_TOL * h_p {
                EndKind::AbsorbingOnPoint
            } else {
                points.push(a);
                EndKind::AbsorbingNonUniform { h_abs: gap }
            }
        }
        Boundary::Reflecting => reflecting_cell(low, a, h_p).1,
    };
    let offset = points.len();
    for k in 0..=(m + n) {
        points.push(xa + (k as f64 - m as f64) * h_p);
    }
    if let (Boundary::Absorbing, EndKind::AbsorbingOnPoint) = (left, left_kind) {
        points[0] = a;
    }
    if let (Boundary::Reflecting, EndKind::ReflectingNonUniform { h_ref }) = (left, left_kind) {
        if h_ref == 0.0 {
            points[0] = a;
        }
    }
    let right_kind = match right {
        Boundary::Absorbing => {
            let gap = b - high;
            if gap <= LATTICE_TOL * h_p {
                *points.last_mut().unwrap() = b;
                EndKind::AbsorbingOnPoint
            } else {
                points.push(b);
                EndKind::AbsorbingNonUniform { h_abs: gap }
            }
        }
        Boundary::Reflecting => {
            let kind = reflecting_cell(high, b, h_p).1;
            if let EndKind::ReflectingNonUniform { h_ref } = kind {
                if h_ref == 0.0 {
                    *points.last_mut().unwrap() = b;
                }
            }
            kind
        }
    };
    let ia = offset + m;
    let ib = ia + q;
    points[ia] = xa;
    if ib < points.len() {
        points[ib] = points[ia] + q as f64 * h_p;
    }
    Ok(DomainMesh { points, left: left_kind, right: right_kind, occupants: vec![ia, ib], width: h_p })
}
