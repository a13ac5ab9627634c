//! Dimensionless potential fields V(x) and their Gibbs-Boltzmann densities.

use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialField {
    Zero,
    /// `amplitude * cos(2 pi frequency x)`.
    Cosine {
        amplitude: f64,
        frequency: f64,
    },
    /// `height` left of `location`, zero from `location` on.
    Step {
        height: f64,
        location: f64,
    },
    /// Piecewise-linear through `(xs[i], values[i])`, `xs` strictly increasing.
    Tabulated {
        xs: Vec<f64>,
        values: Vec<f64>,
    },
    Shifted {
        base: Box<PotentialField>,
        shift: f64,
    },
}

impl PotentialField {
    pub fn cosine(amplitude: f64, frequency: f64) -> Self {
        PotentialField::Cosine { amplitude, frequency }
    }

    pub fn step(height: f64, location: f64) -> Self {
        PotentialField::Step { height, location }
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::InvalidPotential("tabulated potential needs >= 2 matching points".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPotential("tabulated abscissae must increase".into()));
        }
        if values.iter().chain(xs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("tabulated potential has non-finite entries".into()));
        }
        Ok(PotentialField::Tabulated { xs, values })
    }

    pub fn shifted(self, shift: f64) -> Self {
        PotentialField::Shifted { base: Box::new(self), shift }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            PotentialField::Zero => true,
            PotentialField::Cosine { amplitude, .. } => *amplitude == 0.0,
            PotentialField::Step { height, .. } => *height == 0.0,
            PotentialField::Tabulated { values, .. } => values.iter().all(|v| *v == values[0]),
            PotentialField::Shifted { base, .. } => base.is_constant(),
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        match self {
            PotentialField::Tabulated { xs, values } => {
                let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                if !(x >= lo && x <= hi) {
                    return Err(Error::OutOfRange { x, lo, hi });
                }
                let k = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let w = (x - x0) / (x1 - x0);
                Ok(values[k - 1] + w * (values[k] - values[k - 1]))
            }
            PotentialField::Shifted { base, shift } => Ok(base.evaluate(x)? + shift),
            _ => Ok(self.value(x)),
        }
    }

    /// Infallible evaluation; tabulated fields clamp to their end values.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialField::Zero => 0.0,
            PotentialField::Cosine { amplitude, frequency } => amplitude * (2.0 * PI * frequency * x).cos(),
            PotentialField::Step { height, location } => {
                if x < *location {
                    *height
                } else {
                    0.0
                }
            }
            PotentialField::Tabulated { xs, values } => {
                let x = x.clamp(xs[0], xs[xs.len() - 1]);
                let k = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
                let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
            PotentialField::Shifted { base, shift } => base.value(x) + shift,
        }
    }

    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        match self {
            PotentialField::Step { location, .. } if *location > a && *location < b => out.push(*location),
            PotentialField::Tabulated { xs, .. } => out.extend(xs.iter().copied().filter(|x| *x > a && *x < b)),
            PotentialField::Cosine { frequency, .. } if *frequency != 0.0 => {
                let period = 1.0 / frequency.abs();
                let mut k = (a / period).ceil();
                while k * period < b && out.len() < 4096 {
                    if k * period > a {
                        out.push(k * period);
                    }
                    k += 1.0;
                }
            }
            PotentialField::Shifted { base, .. } => base.breakpoints(a, b, out),
            _ => {}
        }
    }

    /// `int_a^b exp(-V)` by adaptive Simpson, split at the field's kinks and jumps.
    pub fn boltzmann_integral(&self, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
        let mut cuts = vec![a];
        self.breakpoints(a, b, &mut cuts);
        cuts.push(b);
        let f = |x: f64| (-self.value(x)).exp();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            let scale = whole.abs().max(f64::MIN_POSITIVE);
            total += simpson(&f, lo, hi, flo, fmid, fhi, whole, rel_tol * scale, 50);
        }
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidPotential("non-finite Boltzmann weight".into()));
        }
        Ok(total)
    }

    pub fn equilibrium_density(&self, length: f64, x: f64) -> Result<f64> {
        let v = self.evaluate(x)?;
        if !v.is_finite() {
            return Err(Error::InvalidPotential(format!("V({x}) is not finite")));
        }
        let z = self.boltzmann_integral(0.0, length, 1e-10)?;
        Ok((-v).exp() / z)
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        assert_eq!(PotentialField::Zero.evaluate(0.7).unwrap(), 0.0);
        assert!((PotentialField::cosine(1.0, 2.0).evaluate(0.25).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(PotentialField::step(2.0, 0.5).evaluate(0.3).unwrap(), 2.0);
    }

    #[test]
    fn step_is_right_continuous() {
        let v = PotentialField::step(2.0, 0.5);
        assert_eq!(v.evaluate(0.5).unwrap(), 0.0);
        assert_eq!(v.evaluate(0.5 - 1e-12).unwrap(), 2.0);
    }

    #[test]
    fn tabulated_interpolates_and_rejects_outside() {
        let v = PotentialField::tabulated(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, -1.0]).unwrap();
        assert!((v.evaluate(0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((v.evaluate(0.75).unwrap()).abs() < 1e-15);
        assert!(v.evaluate(1.5).is_err());
        assert!(PotentialField::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_density() {
        let d = PotentialField::Zero.equilibrium_density(1.0, 0.3).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_density_closed_form() {
        let d = PotentialField::step(2.0, 0.5).equilibrium_density(1.0, 0.75).unwrap();
        let expected = 1.0 / (0.5 * (-2.0f64).exp() + 0.5);
        assert!((d - expected).abs() < 1e-10 * expected);
        assert!((d - 1.7615).abs() < 1e-4);
    }

    #[test]
    fn cosine_well_ratio() {
        let v = PotentialField::cosine(1.0, 2.0);
        let well = v.equilibrium_density(1.0, 0.25).unwrap();
        let top = v.equilibrium_density(1.0, 0.0).unwrap();
        assert!(well > top);
        assert!((well / top - (2.0f64).exp()).abs() < 1e-10);
    }
}
