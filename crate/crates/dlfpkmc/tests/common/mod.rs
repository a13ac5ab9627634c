#![allow(dead_code)]

use dlfpkmc::mesh::{pair_mesh, single_mesh, DomainMesh};
use dlfpkmc::model::Boundary;
use dlfpkmc::potential::PotentialField;
use dlfpkmc::rates::detailed_balance_residual;
use rand::Rng;

pub fn boundary(absorbing: bool) -> Boundary {
    if absorbing {
        Boundary::Absorbing
    } else {
        Boundary::Reflecting
    }
}

/// One of the four potential families with random parameters.
pub fn random_potential<R: Rng>(family: usize, rng: &mut R) -> PotentialField {
    match family % 4 {
        0 => PotentialField::Zero,
        1 => PotentialField::cosine(rng.random_range(0.2..2.0), rng.random_range(0.5..4.0)),
        2 => PotentialField::step(rng.random_range(-3.0..3.0), rng.random_range(0.1..0.9)),
        _ => {
            let xs: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
            let values = xs.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
            PotentialField::tabulated(xs, values).expect("table")
        }
    }
}

/// A single or pair mesh inside the unit interval with random geometry and end kinds.
pub fn random_mesh<R: Rng>(rng: &mut R) -> DomainMesh {
    loop {
        let a = rng.random_range(0.0..0.5);
        let b = a + rng.random_range(0.05..0.5);
        let h = rng.random_range(0.004..0.05);
        let mesh = if rng.random_bool(0.5) {
            let x = a + (b - a) * rng.random_range(0.05..0.95);
            let (l, r) = match rng.random_range(0..3) {
                0 => (Boundary::Absorbing, Boundary::Absorbing),
                1 => (Boundary::Reflecting, Boundary::Absorbing),
                _ => (Boundary::Absorbing, Boundary::Reflecting),
            };
            single_mesh(a, b, x, h, l, r)
        } else {
            let cells = ((b - a) / h).floor() as usize;
            if cells < 2 {
                continue;
            }
            let xa = a + rng.random_range(0.0..(b - a - h));
            let q = rng.random_range(1..=((b - xa) / h).floor().max(1.0) as usize);
            let xb = xa + q as f64 * h;
            if xb > b {
                continue;
            }
            pair_mesh(a, b, xa, xb, h, boundary(rng.random_bool(0.7)), boundary(rng.random_bool(0.7)))
        };
        if let Ok(m) = mesh {
            if m.len() >= 2 {
                return m;
            }
        }
    }
}

/// Largest detailed-balance residual over the edges between non-absorbing points.
pub fn worst_balance(mesh: &DomainMesh, potential: &PotentialField) -> f64 {
    let rates = mesh.rates(1.0, potential);
    let mut worst: f64 = 0.0;
    for i in 0..mesh.len() - 1 {
        if mesh.is_absorbing_index(i) || mesh.is_absorbing_index(i + 1) {
            continue;
        }
        let (vi, vj) = (potential.value(mesh.points[i]), potential.value(mesh.points[i + 1]));
        let r = detailed_balance_residual(rates.right[i], rates.left[i + 1], vi, vj, mesh.cell_width(i), mesh.cell_width(i + 1))
            .expect("positive flux");
        worst = worst.max(r);
    }
    worst
}
