//! First-passage law of a single-occupant mesh from its master equation.

use crate::error::{Error, Result};
use crate::mesh::{DomainMesh, MeshRates};
use nalgebra::{DMatrix, SymmetricEigen};

/// Survival as a sum of decaying exponentials, `S(t) = Σ weight·exp(-decay·t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstPassageLaw {
    pub weights: Vec<f64>,
    pub decays: Vec<f64>,
}

impl FirstPassageLaw {
    /// Spectral solution of the generator restricted to the non-absorbing points, started at `start`.
    pub fn new(mesh: &DomainMesh, rates: &MeshRates, start: usize) -> Result<Self> {
        let live: Vec<usize> = (0..mesh.len()).filter(|&i| !mesh.is_absorbing_index(i)).collect();
        let s = live.iter().position(|&i| i == start).ok_or_else(|| Error::InvalidMesh("start on an absorbing point".into()))?;
        let n = live.len();
        // Stationary weights along the chain make the generator symmetric.
        let mut weight = vec![1.0; n];
        for k in 1..n {
            let (i, j) = (live[k - 1], live[k]);
            if j != i + 1 || rates.left[j] <= 0.0 || rates.right[i] <= 0.0 {
                return Err(Error::InvalidMesh("live points must form a connected chain".into()));
            }
            weight[k] = weight[k - 1] * rates.right[i] / rates.left[j];
        }
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = -rates.total(live[k]);
            if k + 1 < n {
                let off = (rates.right[live[k]] * rates.left[live[k + 1]]).sqrt();
                m[(k, k + 1)] = off;
                m[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(m);
        let root: Vec<f64> = weight.iter().map(|w| w.sqrt()).collect();
        let mut weights = Vec::with_capacity(n);
        let mut decays = Vec::with_capacity(n);
        for k in 0..n {
            let u = eig.eigenvectors.column(k);
            let projected: f64 = (0..n).map(|j| u[j] * root[j]).sum();
            weights.push(u[s] / root[s] * projected);
            decays.push(-eig.eigenvalues[k]);
        }
        Ok(FirstPassageLaw { weights, decays })
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.weights.iter().zip(&self.decays).map(|(w, d)| w * (-d * t).exp()).sum::<f64>().clamp(0.0, 1.0)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.decays).map(|(w, d)| w / d).sum()
    }
}
