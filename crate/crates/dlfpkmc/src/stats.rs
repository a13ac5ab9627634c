//! Error metrics: empirical survival with bands, Lp distances, binned KL divergence, joint spatial
//! probabilities and convergence orders.

use crate::engine::{RealizationRecord, Snapshot};
use crate::error::{Error, Result};
use crate::model::SpeciesId;
use statrs::distribution::{ContinuousCDF, Normal};

pub const CONFIDENCE: f64 = 0.99;

/// Two-sided normal quantile for `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + 0.5 * level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    pub samples: Vec<f64>,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Survival estimate `S(t) = P(T > t)` on `grid`, with pointwise Greenwood bands.
///
/// Knots sit at the distinct sample values; between knots the estimate is interpolated linearly,
/// before the first knot it is 1 and from the last knot on it is 0.
pub fn empirical_survival(samples: &[f64], grid: &[f64]) -> Result<EmpiricalCdf> {
    if samples.len() < 2 {
        return Err(Error::InvalidQuery("empirical survival needs at least two samples".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidQuery("NaN sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut knots: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in sorted.iter().enumerate() {
        let s = 1.0 - (k + 1) as f64 / n;
        match knots.last_mut() {
            Some(last) if last.0 == x => last.1 = s,
            _ => knots.push((x, s)),
        }
    }
    let z = normal_quantile(CONFIDENCE);
    let mut estimate = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for &t in grid {
        let s = interpolate_knots(&knots, t);
        // Greenwood's variance without censoring reduces to the binomial one.
        let half = z * (s * (1.0 - s) / n).sqrt();
        estimate.push(s);
        lower.push((s - half).max(0.0));
        upper.push((s + half).min(1.0));
    }
    Ok(EmpiricalCdf { samples: sorted, grid: grid.to_vec(), estimate, lower, upper })
}

fn interpolate_knots(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t < first.0 {
        return 1.0;
    }
    if t >= last.0 {
        return 0.0;
    }
    let k = knots.partition_point(|&(x, _)| x <= t);
    let (x0, s0) = knots[k - 1];
    let (x1, s1) = knots[k];
    s0 + (s1 - s0) * (t - x0) / (x1 - x0)
}

/// Smallest sample time at which the empirical survival drops to `level` or below.
pub fn survival_quantile(samples: &[f64], level: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().find(|&(k, _)| 1.0 - (k + 1) as f64 / n <= level).map(|(_, &x)| x)
}

/// Exact sup distance between the empirical CDF of `samples` and a continuous model CDF.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let x = sorted[k];
        let mut j = k;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        worst = worst.max((f - k as f64 / n).abs()).max((j as f64 / n - f).abs());
        k = j;
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Max,
}

impl Norm {
    pub fn all() -> [Norm; 3] {
        [Norm::L1, Norm::L2, Norm::Max]
    }

    pub fn label(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Max => "linf",
        }
    }
}

fn check_lengths(f: &[f64], g: &[f64], grid: Option<&[f64]>) -> Result<()> {
    if f.len() != g.len() || grid.is_some_and(|t| t.len() != f.len()) {
        return Err(Error::InvalidQuery("mismatched grids".into()));
    }
    Ok(())
}

/// Grid norm with left-endpoint weights `t[i+1] - t[i]`.
pub fn grid_norm(f: &[f64], grid: &[f64], norm: Norm) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::InvalidQuery("mismatched grids".into()));
    }
    let weighted = |p: i32| (0..f.len().saturating_sub(1)).map(|i| f[i].abs().powi(p) * (grid[i + 1] - grid[i])).sum::<f64>();
    Ok(match norm {
        Norm::L1 => weighted(1),
        Norm::L2 => weighted(2).sqrt(),
        Norm::Max => f.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

/// `‖f − g‖` on a time grid; `relative` divides by `‖f‖`.
pub fn lp_distance(f: &[f64], g: &[f64], grid: &[f64], norm: Norm, relative: bool) -> Result<f64> {
    check_lengths(f, g, Some(grid))?;
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
    let d = grid_norm(&diff, grid, norm)?;
    Ok(if relative { d / grid_norm(f, grid, norm)? } else { d })
}

/// Unweighted norm over bins.
pub fn bin_norm(f: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L1 => f.iter().map(|v| v.abs()).sum(),
        Norm::L2 => f.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Norm::Max => f.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

/// Unweighted `‖f − g‖ / ‖f‖` over bins.
pub fn relative_bin_distance(f: &[f64], g: &[f64], norm: Norm) -> Result<f64> {
    check_lengths(f, g, None)?;
    let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
    Ok(bin_norm(&diff, norm) / bin_norm(f, norm))
}

/// Bin masses over `edges`; the final mass is an extra bin (tail or reacted mass).
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDistribution {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl BinnedDistribution {
    /// Histogram of `samples` over `edges`; samples at or beyond the last edge land in the extra bin.
    pub fn from_samples(samples: &[f64], edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) || samples.is_empty() {
            return Err(Error::InvalidQuery("need increasing edges and at least one sample".into()));
        }
        let bins = edges.len() - 1;
        let mut masses = vec![0.0; bins + 1];
        let w = 1.0 / samples.len() as f64;
        for &x in samples {
            let k = if x >= edges[bins] { bins } else { edges.partition_point(|&e| e <= x).saturating_sub(1) };
            masses[k] += w;
        }
        Ok(BinnedDistribution { edges: edges.to_vec(), masses })
    }

    /// Reaction-time masses from a survival function; mass reacted by the first edge joins the first bin.
    pub fn from_survival(survival: impl Fn(f64) -> f64, edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidQuery("need increasing edges".into()));
        }
        let s: Vec<f64> = edges.iter().map(|&t| survival(t)).collect();
        let mut masses: Vec<f64> = s.windows(2).map(|w| w[0] - w[1]).collect();
        masses[0] += 1.0 - s[0];
        masses.push(s[s.len() - 1]);
        Ok(BinnedDistribution { edges: edges.to_vec(), masses })
    }

    /// Masses from bin integrals with nothing in the extra bin.
    pub fn from_integrals(edges: &[f64], integrals: Vec<f64>) -> Result<Self> {
        if integrals.len() + 1 != edges.len() {
            return Err(Error::InvalidQuery("one integral per bin".into()));
        }
        let total: f64 = integrals.iter().sum();
        let mut masses: Vec<f64> = integrals.into_iter().map(|m| m / total).collect();
        masses.push(0.0);
        Ok(BinnedDistribution { edges: edges.to_vec(), masses })
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Even reaction-time edges on `[0, cutoff]`, cutoff being where survival reaches 0.01.
pub fn reaction_time_edges(cutoff: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| cutoff * k as f64 / bins as f64).collect()
}

/// `Σ f ln(f/g)`, with `0 ln 0 = 0` and `+∞` where `g` vanishes under positive `f`.
pub fn kl_divergence(truth: &[f64], approx: &[f64]) -> Result<f64> {
    check_lengths(truth, approx, None)?;
    let mut sum = 0.0;
    for (&f, &g) in truth.iter().zip(approx) {
        if f > 0.0 {
            if g <= 0.0 {
                return Ok(f64::INFINITY);
            }
            sum += f * (f / g).ln();
        }
    }
    Ok(sum.max(0.0))
}

/// Bins where `approx` has no mass but `truth` does.
pub fn unsupported_bins(truth: &[f64], approx: &[f64]) -> Vec<usize> {
    truth.iter().zip(approx).enumerate().filter(|(_, (&f, &g))| f > 0.0 && g <= 0.0).map(|(k, _)| k).collect()
}

/// Joint position masses of one `a` and one `b` molecule on an `n × n` grid over `[0, length]`,
/// row-major in the `a` bin, followed by the reacted mass.
pub fn joint_spatial_probs(snapshots: &[&Snapshot], a: SpeciesId, b: SpeciesId, n: usize, length: f64) -> BinnedDistribution {
    let mut masses = vec![0.0; n * n + 1];
    let w = 1.0 / snapshots.len().max(1) as f64;
    let bin = |x: f64| ((x / length * n as f64).floor() as usize).min(n - 1);
    for s in snapshots {
        let qa = s.molecules.iter().find(|m| m.1 == a).map(|m| m.2);
        let qb = s.molecules.iter().find(|m| m.1 == b).map(|m| m.2);
        match (qa, qb) {
            (Some(x), Some(y)) => masses[bin(x) * n + bin(y)] += w,
            _ => masses[n * n] += w,
        }
    }
    let edges = (0..=n).map(|k| length * k as f64 / n as f64).collect();
    BinnedDistribution { edges, masses }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub used: Vec<usize>,
    pub excluded: Vec<usize>,
}

/// Least-squares slope of `ln error` against `ln width`, skipping non-positive errors.
pub fn convergence_order(widths: &[f64], errors: &[f64]) -> Result<OrderFit> {
    check_lengths(widths, errors, None)?;
    let (used, excluded): (Vec<usize>, Vec<usize>) = (0..widths.len()).partition(|&k| errors[k] > 0.0 && widths[k] > 0.0);
    if used.len() < 2 {
        return Err(Error::InvalidQuery(format!("{} usable points, need two", used.len())));
    }
    let xs: Vec<f64> = used.iter().map(|&k| widths[k].ln()).collect();
    let ys: Vec<f64> = used.iter().map(|&k| errors[k].ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidQuery("widths must differ".into()));
    }
    let slope = sxy / sxx;
    Ok(OrderFit { slope, intercept: my - slope * mx, used, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub half_width: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MeanEstimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Sample mean with a symmetric normal 99% interval.
pub fn mean_estimate(samples: &[f64]) -> Result<MeanEstimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidQuery("mean estimate needs at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    Ok(MeanEstimate { mean, std_error, half_width: normal_quantile(CONFIDENCE) * std_error, count: samples.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    pub statistical: f64,
    /// The exact value lies inside the confidence interval.
    pub resolved: bool,
}

pub fn relative_error(exact: f64, estimate: &MeanEstimate) -> RelativeError {
    let gap = (exact - estimate.mean).abs();
    RelativeError { value: gap / exact.abs(), statistical: estimate.half_width / exact.abs(), resolved: gap < estimate.half_width }
}

/// Use-weighted mean mesh width over a batch.
pub fn mean_mesh_width(records: &[RealizationRecord]) -> Option<f64> {
    let hops: u64 = records.iter().map(|r| r.hop_count).sum();
    (hops > 0).then(|| records.iter().map(|r| r.width_hops).sum::<f64>() / hops as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_survival() {
        let e = empirical_survival(&[1.0; 4], &[0.0, 0.5, 0.999, 1.0, 2.0]).unwrap();
        assert_eq!(e.estimate, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn survival_edges() {
        let xs = [0.3, 0.1, 0.7, 0.2];
        let e = empirical_survival(&xs, &[0.05, 0.7]).unwrap();
        assert_eq!(e.estimate, vec![1.0, 0.0]);
        assert!(empirical_survival(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn exponential_survival_and_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..100_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let e = empirical_survival(&draws, &[1.0]).unwrap();
        let p = (-1.0f64).exp();
        assert!((e.estimate[0] - p).abs() < 3.0 * (p * (1.0 - p) / 1e5).sqrt());

        let mut inside = 0;
        for _ in 0..200 {
            let draws: Vec<f64> = (0..2000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let e = empirical_survival(&draws, &[1.0]).unwrap();
            if e.lower[0] <= p && p <= e.upper[0] {
                inside += 1;
            }
        }
        assert!(inside >= 194, "coverage {inside}/200");
    }

    #[test]
    fn lp_examples() {
        let grid: Vec<f64> = (0..=10).map(|k| 0.3 * k as f64).collect();
        let f: Vec<f64> = grid.iter().map(|t| t.sin()).collect();
        let g: Vec<f64> = f.iter().map(|v| v - 0.25).collect();
        assert_eq!(lp_distance(&f, &f, &grid, Norm::L2, false).unwrap(), 0.0);
        assert!((lp_distance(&f, &g, &grid, Norm::L1, false).unwrap() - 0.75).abs() < 1e-12);
        assert!((lp_distance(&f, &g, &grid, Norm::Max, false).unwrap() - 0.25).abs() < 1e-12);
        assert!(lp_distance(&f, &g[1..], &grid, Norm::L1, false).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let v = kl_divergence(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!((v - (0.5 * (5.0f64 / 9.0).ln() + 0.5 * 5.0f64.ln())).abs() < 1e-12);
        assert!((v - 0.5108).abs() < 1e-4);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(unsupported_bins(&[0.5, 0.5], &[1.0, 0.0]), vec![1]);
        assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 2.0f64.ln());
    }

    #[test]
    fn reaction_time_binning() {
        let edges = reaction_time_edges(2.0, 9);
        assert_eq!(edges.len(), 10);
        let s = |t: f64| 0.9 * (-t).exp();
        let d = BinnedDistribution::from_survival(s, &edges).unwrap();
        assert_eq!(d.masses.len(), 10);
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!((d.masses[9] - s(2.0)).abs() < 1e-15);
        let h = BinnedDistribution::from_samples(&[0.0, 0.1, 2.0, 5.0], &edges).unwrap();
        assert_eq!(h.masses[0], 0.5);
        assert_eq!(h.masses[9], 0.5);
    }

    #[test]
    fn joint_probs_reacted_mass() {
        let alive = Snapshot { time: 0.0, molecules: vec![(0, 0, 0.1), (1, 1, 0.9)] };
        let gone = Snapshot { time: 0.0, molecules: vec![] };
        let d = joint_spatial_probs(&[&alive, &gone, &gone, &alive], 0, 1, 5, 1.0);
        assert_eq!(d.masses[4], 0.5);
        assert_eq!(d.masses[25], 0.5);
        assert!((d.total() - 1.0).abs() < 1e-15);
        let all = joint_spatial_probs(&[&gone], 0, 1, 5, 1.0);
        assert_eq!(all.masses[25], 1.0);
    }

    #[test]
    fn order_fit() {
        let h = [0.04, 0.02, 0.01, 0.005];
        let e2: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((convergence_order(&h, &e2).unwrap().slope - 2.0).abs() < 1e-10);
        let e1: Vec<f64> = h.iter().map(|x| 0.7 * x).collect();
        assert!((convergence_order(&h, &e1).unwrap().slope - 1.0).abs() < 1e-10);
        let fit = convergence_order(&h, &[1.0, 0.5, 0.0, 0.2]).unwrap();
        assert_eq!(fit.excluded, vec![2]);
    }

    #[test]
    fn mean_and_relative_error() {
        let m = mean_estimate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((normal_quantile(0.99) - 2.5758293035489).abs() < 1e-9);
        let r = relative_error(2.6, &m);
        assert!(r.resolved);
        assert!((r.value - 0.1 / 2.6).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_of_uniform_grid() {
        let xs: Vec<f64> = (0..10).map(|k| (k as f64 + 0.5) / 10.0).collect();
        assert!((kolmogorov_distance(&xs, |x| x) - 0.05).abs() < 1e-12);
    }
}
