//! Wang-Peskin-Elston hop rates on uniform and non-uniform cells.

use crate::error::{Error, Result};

const SMALL_DV: f64 = 1e-12;
const OVERFLOW_DV: f64 = 700.0;

/// `x / (e^x - 1)` with the limits handled explicitly.
#[inline]
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < SMALL_DV {
        1.0
    } else if x > OVERFLOW_DV {
        x * (-x).exp()
    } else if x < -OVERFLOW_DV {
        -x
    } else {
        x / x.exp_m1()
    }
}

#[inline]
pub fn uniform_rate(diffusion: f64, h: f64, v_from: f64, v_to: f64) -> f64 {
    let base = diffusion / (h * h);
    let dv = v_to - v_from;
    if dv.abs() < SMALL_DV {
        base
    } else {
        base * bernoulli(dv)
    }
}

/// Rate from a point toward the neighbour at distance `h_j`; `h_other` is the opposite spacing.
#[inline]
pub fn nonuniform_rate(diffusion: f64, h_j: f64, h_other: f64, v_from: f64, v_to: f64) -> f64 {
    let base = 2.0 * diffusion / (h_j * (h_j + h_other));
    let dv = v_to - v_from;
    if dv.abs() < SMALL_DV {
        base
    } else {
        base * bernoulli(dv)
    }
}

pub fn detailed_balance_residual(rate_0j: f64, rate_j0: f64, v_0: f64, v_j: f64, cell_0: f64, cell_j: f64) -> Result<f64> {
    let lhs = rate_0j * (-v_0).exp() * cell_0;
    if lhs == 0.0 || !lhs.is_finite() {
        return Err(Error::Numerical("detailed balance reference flux is zero".into()));
    }
    Ok((lhs - rate_j0 * (-v_j).exp() * cell_j).abs() / lhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_rate(1.0, 0.1, 0.3, 0.3), 1.0 / (0.1 * 0.1));
        let up = uniform_rate(1.0, 0.1, 0.0, 1.0);
        let down = uniform_rate(1.0, 0.1, 0.0, -1.0);
        assert!((up - 58.197_670_686_932_64).abs() < 1e-10);
        assert!((down - 158.197_670_686_932_64).abs() < 1e-10);
        assert!((down / up - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn nonuniform_examples() {
        let a = nonuniform_rate(1.0, 0.02, 0.01, 0.0, 0.0);
        let b = nonuniform_rate(1.0, 0.01, 0.02, 0.0, 0.0);
        assert!((a - 2.0 / (0.02 * 0.03)).abs() < 1e-9);
        assert!((b - 2.0 / (0.01 * 0.03)).abs() < 1e-9);
        for dv in [-3.0, -1e-7, 0.0, 0.5, 4.0] {
            let u = uniform_rate(2.0, 0.05, 0.1, 0.1 + dv);
            let n = nonuniform_rate(2.0, 0.05, 0.05, 0.1, 0.1 + dv);
            assert!((u - n).abs() <= 1e-14 * u);
        }
    }

    #[test]
    fn extreme_differences_stay_finite() {
        assert_eq!(uniform_rate(1.0, 1.0, 0.0, 800.0), 0.0);
        assert_eq!(uniform_rate(1.0, 1.0, 800.0, 0.0), 800.0);
        let tiny = uniform_rate(1.0, 0.1, 0.0, 1e-9);
        assert!((tiny - 100.0).abs() < 1e-6 * 100.0);
    }

    #[test]
    fn residual_examples() {
        let (v0, vj, h) = (0.2, 1.1, 0.05);
        let a0j = uniform_rate(1.0, h, v0, vj);
        let aj0 = uniform_rate(1.0, h, vj, v0);
        assert!(detailed_balance_residual(a0j, aj0, v0, vj, h, h).unwrap() < 1e-12);
        assert!((detailed_balance_residual(2.0 * a0j, aj0, v0, vj, h, h).unwrap() - 0.5).abs() < 1e-12);
        let (h1, h2) = (0.03, 0.011);
        let a01 = nonuniform_rate(1.0, h1, h2, v0, vj);
        let a10 = uniform_rate(1.0, h1, vj, v0);
        assert!(detailed_balance_residual(a01, a10, v0, vj, 0.5 * (h1 + h2), h1).unwrap() < 1e-12);
        assert!(detailed_balance_residual(0.0, 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
    }
}
