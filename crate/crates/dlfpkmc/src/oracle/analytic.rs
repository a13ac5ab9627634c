//! Eigenfunction-series results for two freely diffusing reactants (zero potential).

use crate::error::{Error, Result};
use std::f64::consts::PI;

const SERIES_TOL: f64 = 1e-14;
const MAX_TERMS: usize = 20_000_000;

/// Two molecules of diffusivity `diffusion` on `[0, length]` with reflecting walls, uniform start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreePair {
    pub length: f64,
    pub diffusion: f64,
    pub reaction_radius: f64,
}

impl FreePair {
    pub fn new(length: f64, diffusion: f64, reaction_radius: f64) -> Result<Self> {
        if !(length > 0.0 && diffusion > 0.0 && reaction_radius >= 0.0 && reaction_radius < length) {
            return Err(Error::InvalidConfig("free pair needs 0 <= r_R < L and positive L, D".into()));
        }
        Ok(FreePair { length, diffusion, reaction_radius })
    }

    /// Side of the unfolded square.
    pub fn side(&self) -> f64 {
        std::f64::consts::SQRT_2 * (self.length - self.reaction_radius)
    }

    /// Constant density on the unfolded square.
    pub fn density(&self) -> f64 {
        0.5 / (self.length * self.length)
    }

    /// Probability of surviving the initial overlap test.
    pub fn initial_survival(&self) -> f64 {
        let l = self.side();
        self.density() * l * l
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.initial_survival();
        }
        let l = self.side();
        let rate = PI * PI * self.diffusion * t / (l * l);
        let mut sum = 0.0;
        let mut k = 1.0_f64;
        for _ in 0..MAX_TERMS {
            let term = (-rate * k * k).exp() / (k * k);
            sum += term;
            if term < SERIES_TOL * sum {
                break;
            }
            k += 2.0;
        }
        64.0 * self.density() * l * l / PI.powi(4) * sum * sum
    }

    pub fn mean_time(&self) -> f64 {
        let l = self.side();
        let mut sum = 0.0;
        let mut k = 1.0_f64;
        loop {
            let term = (0.5 * PI - (0.5 * PI * k).tanh() / k) / k.powi(4);
            sum += term;
            if term < 1e-3 * SERIES_TOL * sum {
                break;
            }
            k += 2.0;
        }
        16.0 * self.density() * l.powi(4) / (self.diffusion * PI.powi(5)) * sum
    }

    /// Mean time from the unsummed double series truncated at `terms` odd indices per axis.
    pub fn mean_time_double_sum(&self, terms: usize) -> f64 {
        let l = self.side();
        let mut sum = 0.0;
        for n in 0..terms {
            let a = (2 * n + 1) as f64;
            let mut inner = 0.0;
            for m in 0..terms {
                let b = (2 * m + 1) as f64;
                inner += 1.0 / (b * b * (a * a + b * b));
            }
            sum += inner / (a * a);
        }
        64.0 * self.density() * l.powi(4) / (self.diffusion * PI.powi(6)) * sum
    }

    /// Cumulative reaction-location distribution along one unfolded edge, `xi` in `[0, side]`.
    pub fn location_cdf_edge(&self, xi: f64) -> f64 {
        let l = self.side();
        let xi = xi.clamp(0.0, l);
        let mut sum = 0.0;
        let mut k = 1.0_f64;
        loop {
            let term = (0.5 * PI * k).tanh() * (1.0 - (k * PI * xi / l).cos()) / k.powi(3);
            sum += term;
            if 2.0 / k.powi(3) < 1e-3 * SERIES_TOL * sum.max(1e-300) || k > 2e6 {
                break;
            }
            k += 2.0;
        }
        16.0 * self.density() * l * l / PI.powi(3) * sum
    }

    /// Distribution of the midpoint at reaction for reactions after `t = 0`, normalized to one.
    pub fn location_cdf(&self, x: f64) -> f64 {
        let half = 0.5 * self.reaction_radius;
        let span = self.length - self.reaction_radius;
        if x <= half {
            return 0.0;
        }
        if x >= self.length - half {
            return 1.0;
        }
        let l = self.side();
        self.location_cdf_edge((x - half) * l / span) / self.location_cdf_edge(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> FreePair {
        FreePair::new(1.0, 1.0, 0.02).unwrap()
    }

    #[test]
    fn reference_mean_time() {
        assert!((unit().mean_time() - 0.064_831_881_311).abs() < 1e-9);
        let fast = FreePair::new(1.0, 2.0, 0.02).unwrap();
        assert!((fast.mean_time() - 0.5 * unit().mean_time()).abs() < 1e-15);
    }

    #[test]
    fn survival_limits() {
        let p = unit();
        assert!((p.survival(0.0) - (1.0 - (2.0 * 0.02 - 0.02 * 0.02))).abs() < 1e-14);
        assert!((p.survival(1e-7) - p.survival(0.0)).abs() < 1e-3);
        assert!(p.survival(50.0) < 1e-100);
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let s = p.survival(i as f64 * 1e-3);
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn location_cdf_shape() {
        let p = unit();
        let l = p.side();
        assert_eq!(p.location_cdf_edge(0.0), 0.0);
        assert!((p.location_cdf_edge(0.5 * l) / p.location_cdf_edge(l) - 0.5).abs() < 1e-12);
        assert!((p.location_cdf_edge(l) - p.initial_survival()).abs() < 1e-10);
        assert!((p.location_cdf(0.5) - 0.5).abs() < 1e-12);
    }
}
