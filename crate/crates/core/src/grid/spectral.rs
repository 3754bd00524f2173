use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GridError, PowerNetwork};
use crate::linalg::{householder_complement, sorted_symmetric_eigenvalues};

/// Spectral constants of a network.
///
/// `lambda2` and `lambda_n` are the second-smallest and largest eigenvalues of
/// `M⁻¹L_B`, `lambda2_l` is the algebraic connectivity of `L_B` itself, and
/// `norm_ay` is the 2→∞ norm (largest Euclidean row norm) of `AᵀM^{-1/2}Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub lambda2_l: f64,
    pub lambda_n: f64,
    pub norm_ay: f64,
}

impl PowerNetwork {
    /// `M^{-1/2} L_B M^{-1/2}`, the symmetric matrix similar to `M⁻¹L_B`.
    pub fn normalized_laplacian(&self) -> DMatrix<f64> {
        let s = self.inv_sqrt_inertia();
        let mut l = self.laplacian();
        let n = self.n_buses();
        for i in 0..n {
            for j in 0..n {
                l[(i, j)] *= s[i] * s[j];
            }
        }
        l
    }

    pub(crate) fn inv_sqrt_inertia(&self) -> Vec<f64> {
        self.inertia.iter().map(|m| 1.0 / m.sqrt()).collect()
    }

    /// Orthonormal `N × (N−1)` basis `Y` of the null space of `𝟙ᵀM^{1/2}`.
    pub fn complement_basis(&self) -> DMatrix<f64> {
        let u = DVector::from_iterator(self.n_buses(), self.inertia.iter().map(|m| m.sqrt()));
        householder_complement(&u.normalize())
    }

    /// `AᵀM^{-1/2}Y`, the edge-space image of the transformed angle coordinates.
    pub fn edge_map(&self) -> DMatrix<f64> {
        let y = self.complement_basis();
        let s = self.inv_sqrt_inertia();
        let mut out = DMatrix::zeros(self.n_lines(), y.ncols());
        for (l, line) in self.lines.iter().enumerate() {
            for c in 0..y.ncols() {
                out[(l, c)] = s[line.from] * y[(line.from, c)] - s[line.to] * y[(line.to, c)];
            }
        }
        out
    }

    pub fn spectral_summary(&self) -> Result<SpectralSummary, GridError> {
        let eig = sorted_symmetric_eigenvalues(&self.normalized_laplacian()).ok_or(GridError::EigenSolveFailure)?;
        let eig_l = sorted_symmetric_eigenvalues(&self.laplacian()).ok_or(GridError::EigenSolveFailure)?;
        let g = self.edge_map();
        let norm_ay = g.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        Ok(SpectralSummary {
            lambda2: eig[1],
            lambda2_l: eig_l[1],
            lambda_n: eig[eig.len() - 1],
            norm_ay,
        })
    }
}
