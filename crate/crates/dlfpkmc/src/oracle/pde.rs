//! Two-molecule Fokker-Planck solver on the half-plane triangle `y - x >= r_R`.
//!
//! Both molecules share diffusivity and potential, so the joint density on the other triangle is the mirror image.
//! The spatial operator is the node-lattice hop generator, symmetrized by the square root of the equilibrium weights.

use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::rates::nonuniform_rate;

pub const CG_TOL: f64 = 1e-12;
const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepper {
    CrankNicolson {
        dt: f64,
    },
    Tga {
        dt: f64,
    },
    /// TGA with `tga_dt` up to `switch`, Crank-Nicolson with `cn_dt` afterwards.
    Hybrid {
        tga_dt: f64,
        cn_dt: f64,
        switch: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeOptions {
    pub stepper: Stepper,
    pub horizon: Option<f64>,
    pub survival_floor: f64,
    pub joint_times: Vec<f64>,
    pub joint_bins: usize,
    /// Density is checked for negativity only after this time.
    pub check_after: f64,
}

impl PdeOptions {
    pub fn new(stepper: Stepper) -> Self {
        PdeOptions { stepper, horizon: None, survival_floor: 1e-6, joint_times: Vec::new(), joint_bins: 0, check_after: f64::INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub mean_time: f64,
    /// `(t, p)` with `p` row-major over (A bin, B bin) followed by the reacted mass.
    pub joint: Vec<(f64, Vec<f64>)>,
}

impl PdeSolution {
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.survival[0];
        }
        if k == self.times.len() {
            return *self.survival.last().unwrap();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.survival[k - 1] + w * self.survival[k]
    }
}

/// Uniform node lattice with spacing `dx` over `[0, length]^2`.
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    pub n: usize,
    pub dx: f64,
    pub gap: usize,
    index: Vec<i64>,
    pub nodes: Vec<(usize, usize)>,
    diag: Vec<f64>,
    up_x: Vec<(i64, f64)>,
    up_y: Vec<(i64, f64)>,
    /// Square root of the equilibrium cell mass.
    sqrt_pi: Vec<f64>,
    cell: Vec<f64>,
}

fn lattice_rates(n: usize, dx: f64, diffusion: f64, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n + 1];
    for i in 0..=n {
        let hl = if i > 0 { dx } else { 0.0 };
        let hr = if i < n { dx } else { 0.0 };
        if i > 0 {
            left[i] = nonuniform_rate(diffusion, hl, hr, v[i], v[i - 1]);
        }
        if i < n {
            right[i] = nonuniform_rate(diffusion, hr, hl, v[i], v[i + 1]);
        }
    }
    (left, right)
}

impl TriangleGrid {
    /// Unknowns are nodes with `j - i > gap`; `gap = None` keeps the whole square without reaction.
    pub fn build(length: f64, diffusion: f64, potential: &PotentialField, dx: f64, reaction_radius: Option<f64>) -> Result<Self> {
        let nf = length / dx;
        let n = nf.round() as usize;
        if n < 2 || (nf - n as f64).abs() > 1e-9 * nf {
            return Err(Error::InvalidConfig(format!("dx = {dx} does not divide L = {length}")));
        }
        let gap = match reaction_radius {
            Some(r) => {
                let kf = r / dx;
                let k = kf.round();
                if k < 1.0 || (kf - k).abs() > 1e-9 * kf {
                    return Err(Error::InvalidConfig(format!("dx = {dx} does not divide r_R = {r}")));
                }
                Some(k as usize)
            }
            None => None,
        };
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 * dx).collect();
        let v: Vec<f64> = xs.iter().map(|&x| potential.value(x)).collect();
        let (left, right) = lattice_rates(n, dx, diffusion, &v);
        let w: Vec<f64> = (0..=n).map(|i| if i == 0 || i == n { 0.5 * dx } else { dx }).collect();
        let inside = |i: usize, j: usize| match gap {
            Some(k) => j > i + k,
            None => true,
        };
        let mut index = vec![-1i64; (n + 1) * (n + 1)];
        let mut nodes = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                if inside(i, j) {
                    index[i * (n + 1) + j] = nodes.len() as i64;
                    nodes.push((i, j));
                }
            }
        }
        let m = nodes.len();
        let mut diag = vec![0.0; m];
        let mut up_x = vec![(-1, 0.0); m];
        let mut up_y = vec![(-1, 0.0); m];
        let mut sqrt_pi = vec![0.0; m];
        let mut cell = vec![0.0; m];
        for (a, &(i, j)) in nodes.iter().enumerate() {
            diag[a] = -(left[i] + right[i] + left[j] + right[j]);
            if i < n && inside(i + 1, j) {
                up_x[a] = (index[(i + 1) * (n + 1) + j], (right[i] * left[i + 1]).sqrt());
            }
            if j < n && inside(i, j + 1) {
                up_y[a] = (index[i * (n + 1) + j + 1], (right[j] * left[j + 1]).sqrt());
            }
            cell[a] = w[i] * w[j];
            sqrt_pi[a] = ((-v[i] - v[j]).exp() * cell[a]).sqrt();
        }
        Ok(TriangleGrid { n, dx, gap: gap.unwrap_or(0), index, nodes, diag, up_x, up_y, sqrt_pi, cell })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, i: usize, j: usize) -> Option<usize> {
        let k = self.index[i * (self.n + 1) + j];
        (k >= 0).then_some(k as usize)
    }

    /// `y = S q` for the symmetrized generator `S`.
    pub fn apply(&self, q: &[f64], y: &mut [f64]) {
        for a in 0..q.len() {
            y[a] = self.diag[a] * q[a];
        }
        for a in 0..q.len() {
            for (b, w) in [self.up_x[a], self.up_y[a]] {
                if b >= 0 {
                    let b = b as usize;
                    y[a] += w * q[b];
                    y[b] += w * q[a];
                }
            }
        }
    }

    /// Residual `|G pi|_inf / |diag pi|_inf` of the equilibrium under the unsymmetrized generator.
    pub fn equilibrium_residual(&self) -> f64 {
        let mut y = vec![0.0; self.len()];
        self.apply(&self.sqrt_pi, &mut y);
        let num = y.iter().zip(&self.sqrt_pi).map(|(r, s)| (r * s).abs()).fold(0.0, f64::max);
        let den = self.diag.iter().zip(&self.sqrt_pi).map(|(d, s)| (d * s * s).abs()).fold(0.0, f64::max);
        num / den
    }

    /// Masses of the constant initial density `rho0`.
    pub fn initial_masses(&self, rho0: f64) -> Vec<f64> {
        self.cell.iter().map(|c| rho0 * c).collect()
    }

    fn to_sym(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.sqrt_pi).map(|(p, s)| p / s).collect()
    }

    fn to_mass(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(&self.sqrt_pi).map(|(q, s)| q * s).collect()
    }

    /// Solve `(I - c S) z = rhs`, or `-S z = rhs` when `c` is `None`, by Jacobi-preconditioned CG.
    pub fn solve(&self, c: Option<f64>, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let m = rhs.len();
        let op = |q: &[f64], y: &mut [f64]| {
            self.apply(q, y);
            match c {
                Some(c) => {
                    for a in 0..m {
                        y[a] = q[a] - c * y[a];
                    }
                }
                None => y.iter_mut().for_each(|v| *v = -*v),
            }
        };
        let inv_diag: Vec<f64> = self.diag.iter().map(|d| 1.0 / c.map_or(-d, |c| 1.0 - c * d)).collect();
        let mut x = guess.to_vec();
        let mut r = vec![0.0; m];
        op(&x, &mut r);
        for a in 0..m {
            r[a] = rhs[a] - r[a];
        }
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; m]);
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; m];
        for _ in 0..20 * m + 1000 {
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= CG_TOL * bnorm {
                return Ok(x);
            }
            op(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for a in 0..m {
                x[a] += alpha * p[a];
                r[a] -= alpha * ap[a];
            }
            for a in 0..m {
                z[a] = r[a] * inv_diag[a];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for a in 0..m {
                p[a] = z[a] + beta * p[a];
            }
        }
        Err(Error::Numerical("conjugate gradients did not converge".into()))
    }

    /// Joint bin probabilities over both orderings; last entry is the reacted mass.
    pub fn joint_bins(&self, masses: &[f64], bins: usize, length: f64) -> Vec<f64> {
        let width = length / bins as f64;
        let overlaps = |i: usize| -> Vec<(usize, f64)> {
            let x = i as f64 * self.dx;
            let lo = if i == 0 { 0.0 } else { x - 0.5 * self.dx };
            let hi = if i == self.n { length } else { x + 0.5 * self.dx };
            let first = ((lo / width).floor() as usize).min(bins - 1);
            let last = ((hi / width).ceil() as usize).clamp(first + 1, bins);
            (first..last)
                .filter_map(|b| {
                    let o = (hi.min((b + 1) as f64 * width) - lo.max(b as f64 * width)).max(0.0);
                    (o > 0.0).then(|| (b, o / (hi - lo)))
                })
                .collect()
        };
        let mut out = vec![0.0; bins * bins + 1];
        let mut total = 0.0;
        for (a, &(i, j)) in self.nodes.iter().enumerate() {
            let mass = masses[a];
            total += 2.0 * mass;
            for &(bi, fi) in &overlaps(i) {
                for &(bj, fj) in &overlaps(j) {
                    out[bi * bins + bj] += mass * fi * fj;
                    out[bj * bins + bi] += mass * fi * fj;
                }
            }
        }
        out[bins * bins] = 1.0 - total;
        out
    }
}

/// The reduced two-molecule problem with constant initial density `1 / L^2`.
#[derive(Debug, Clone)]
pub struct PairPde {
    pub length: f64,
    pub diffusion: f64,
    pub reaction_radius: f64,
    pub grid: TriangleGrid,
}

impl PairPde {
    pub fn new(length: f64, diffusion: f64, reaction_radius: f64, potential: &PotentialField, dx: f64) -> Result<Self> {
        let grid = TriangleGrid::build(length, diffusion, potential, dx, Some(reaction_radius))?;
        Ok(PairPde { length, diffusion, reaction_radius, grid })
    }

    fn rho0(&self) -> f64 {
        1.0 / (self.length * self.length)
    }

    pub fn initial_survival(&self) -> f64 {
        2.0 * self.grid.initial_masses(self.rho0()).iter().sum::<f64>()
    }

    /// Mean reaction time of the semi-discrete problem from one stationary solve.
    pub fn stationary_mean_time(&self) -> Result<f64> {
        let q0 = self.grid.to_sym(&self.grid.initial_masses(self.rho0()));
        let z = self.grid.solve(None, &q0, &vec![0.0; q0.len()])?;
        Ok(2.0 * z.iter().zip(&self.grid.sqrt_pi).map(|(z, s)| z * s).sum::<f64>())
    }

    pub fn solve(&self, opts: &PdeOptions) -> Result<PdeSolution> {
        let g = &self.grid;
        let mut q = g.to_sym(&g.initial_masses(self.rho0()));
        let survival_of = |q: &[f64]| 2.0 * q.iter().zip(&g.sqrt_pi).map(|(q, s)| q * s).sum::<f64>();
        let mut t = 0.0;
        let mut times = vec![0.0];
        let mut survival = vec![survival_of(&q)];
        let mut joint = Vec::new();
        let mut pending: std::collections::VecDeque<f64> = opts.joint_times.iter().copied().collect();
        while let Some(&tj) = pending.front() {
            if tj > 0.0 {
                break;
            }
            joint.push((tj, g.joint_bins(&g.to_mass(&q), opts.joint_bins, self.length)));
            pending.pop_front();
        }
        let mut sq = vec![0.0; q.len()];
        let (mut prev_q, mut prev_t) = (q.clone(), 0.0);
        loop {
            let (tga, dt) = match opts.stepper {
                Stepper::CrankNicolson { dt } => (false, dt),
                Stepper::Tga { dt } => (true, dt),
                Stepper::Hybrid { tga_dt, cn_dt, switch } => {
                    if t < switch - 1e-12 * switch {
                        let steps = ((switch - t) / tga_dt - 1e-9).ceil().max(1.0);
                        (true, (switch - t) / steps)
                    } else {
                        (false, cn_dt)
                    }
                }
            };
            if !(dt > 0.0) {
                return Err(Error::InvalidConfig("time step must be positive".into()));
            }
            let dt = match opts.horizon {
                Some(h) if t + dt > h => h - t,
                _ => dt,
            };
            if dt <= 0.0 {
                break;
            }
            prev_q.clone_from(&q);
            g.apply(&q, &mut sq);
            if tga {
                let mu = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
                let mu3 = std::f64::consts::SQRT_2 - 1.0;
                let rhs: Vec<f64> = q.iter().zip(&sq).map(|(q, s)| q + mu3 * dt * s).collect();
                let w = g.solve(Some(mu * dt), &rhs, &q)?;
                q = g.solve(Some(mu * dt), &w, &w)?;
            } else {
                let rhs: Vec<f64> = q.iter().zip(&sq).map(|(q, s)| q + 0.5 * dt * s).collect();
                q = g.solve(Some(0.5 * dt), &rhs, &q)?;
            }
            t += dt;
            let s = survival_of(&q);
            if !s.is_finite() || s > survival[0] * (1.0 + 1e-9) || s < -NEGATIVE_TOL {
                return Err(Error::Numerical(format!("unstable survival {s} at t = {t}")));
            }
            if t > opts.check_after {
                let scale = q.iter().zip(&g.sqrt_pi).map(|(q, p)| (q * p).abs()).fold(0.0, f64::max).max(1e-300);
                if let Some(a) = q.iter().zip(&g.sqrt_pi).position(|(q, p)| q * p < -NEGATIVE_TOL * scale) {
                    return Err(Error::Numerical(format!("negative density at node {:?}, t = {t}", g.nodes[a])));
                }
            }
            times.push(t);
            survival.push(s);
            while let Some(&tj) = pending.front() {
                if tj > t {
                    break;
                }
                let w = (tj - prev_t) / (t - prev_t);
                let qi: Vec<f64> = q.iter().zip(&prev_q).map(|(a, b)| w * a + (1.0 - w) * b).collect();
                joint.push((tj, g.joint_bins(&g.to_mass(&qi), opts.joint_bins, self.length)));
                pending.pop_front();
            }
            prev_t = t;
            let done_floor = s < opts.survival_floor && opts.horizon.is_none();
            let done_horizon = opts.horizon.is_some_and(|h| t >= h);
            if done_floor || done_horizon {
                break;
            }
        }
        let mean_time = mean_from_survival(&times, &survival);
        Ok(PdeSolution { times, survival, mean_time, joint })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolated {
    pub value: f64,
    pub order: f64,
    /// Stationary mean times at `dx`, `dx/2`, `dx/4`.
    pub levels: [f64; 3],
}

/// Mean reaction time extrapolated from three stationary solves at `dx`, `dx/2`, `dx/4` using the observed order.
pub fn extrapolated_mean_time(
    length: f64,
    diffusion: f64,
    reaction_radius: f64,
    potential: &PotentialField,
    dx: f64,
) -> Result<Extrapolated> {
    let mut levels = [0.0; 3];
    for (k, m) in levels.iter_mut().enumerate() {
        *m = PairPde::new(length, diffusion, reaction_radius, potential, dx / f64::from(1u32 << k))?.stationary_mean_time()?;
    }
    let (d1, d2) = (levels[1] - levels[0], levels[2] - levels[1]);
    if d2 == 0.0 {
        return Ok(Extrapolated { value: levels[2], order: f64::INFINITY, levels });
    }
    let ratio = d1 / d2;
    if !(ratio > 1.0) {
        return Err(Error::Numerical(format!("mean times {levels:?} are not converging monotonically")));
    }
    let order = ratio.log2();
    Ok(Extrapolated { value: levels[2] + d2 / (ratio - 1.0), order, levels })
}

/// Trapezoid quadrature of the survival curve plus an exponential tail fitted over the last decade.
pub fn mean_from_survival(times: &[f64], survival: &[f64]) -> f64 {
    let mut sum = 0.0;
    for k in 1..times.len() {
        sum += 0.5 * (survival[k] + survival[k - 1]) * (times[k] - times[k - 1]);
    }
    let last = *survival.last().unwrap();
    if last > 0.0 {
        let target = 10.0 * last;
        if let Some(a) = survival.iter().rposition(|&s| s >= target) {
            let (ta, tb) = (times[a], *times.last().unwrap());
            if tb > ta {
                let decay = (survival[a] / last).ln() / (tb - ta);
                if decay > 0.0 {
                    sum += last / decay;
                }
            }
        }
    }
    sum
}
