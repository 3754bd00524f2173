use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::CertifyError;
use crate::grid::PowerNetwork;
use crate::linalg::sorted_symmetric_eigenvalues;
use crate::nodal::ResponseFunction;

/// Coordinates that split angles into a mean and a disagreement part.
///
/// `θ = 𝟙θ̄ + M^{-1/2}Y θ̃` with `θ̃ = YᵀM^{1/2}θ`, where the columns of `Y`
/// span the orthogonal complement of `M^{1/2}𝟙`. In these coordinates the DC
/// flow operator becomes `Λ_P = YᵀM^{-1/2}L_B M^{-1/2}Y` and the sinusoidal
/// flows derive from `U(θ̃) = −Σ_l Γ_l cos((Gθ̃)_l)` with `G = AᵀM^{-1/2}Y`.
#[derive(Debug, Clone)]
pub struct TransformedFrame {
    pub n: usize,
    pub y: DMatrix<f64>,
    pub lambda_p: DMatrix<f64>,
    /// Smallest eigenvalue (= singular value) of `Λ_P`.
    pub sigma_m: f64,
    pub g: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub sqrt_m: DVector<f64>,
    pub inv_sqrt_m: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl TransformedFrame {
    pub fn new(net: &PowerNetwork) -> Result<Self, CertifyError> {
        let n = net.n_buses();
        let y = net.complement_basis();
        let sqrt_m = DVector::from_iterator(n, net.inertia().iter().map(|m| m.sqrt()));
        let inv_sqrt_m = sqrt_m.map(|s| 1.0 / s);
        let lap = net.normalized_laplacian();
        let mut lambda_p = y.transpose() * lap * &y;
        lambda_p = 0.5 * (&lambda_p + lambda_p.transpose());
        let eig = sorted_symmetric_eigenvalues(&lambda_p).ok_or(crate::grid::GridError::EigenSolveFailure)?;
        let chol = Cholesky::new(lambda_p.clone()).ok_or(crate::grid::GridError::EigenSolveFailure)?;
        Ok(Self {
            n,
            sigma_m: eig[0],
            g: net.edge_map(),
            gamma: net.edge_weights(),
            y,
            lambda_p,
            sqrt_m,
            inv_sqrt_m,
            chol,
        })
    }

    /// `θ̃ = YᵀM^{1/2}θ`.
    pub fn to_tilde(&self, theta: &[f64]) -> DVector<f64> {
        let v = DVector::from_iterator(self.n, theta.iter().zip(self.sqrt_m.iter()).map(|(t, s)| t * s));
        self.y.tr_mul(&v)
    }

    /// `M^{-1/2}Yθ̃`, the representative with zero inertia-weighted mean.
    pub fn from_tilde(&self, tilde: &DVector<f64>) -> Vec<f64> {
        let v = &self.y * tilde;
        v.iter().zip(self.inv_sqrt_m.iter()).map(|(a, s)| a * s).collect()
    }

    /// `YᵀM^{1/2}v` for a bus vector `v`.
    pub fn project_weighted(&self, v: &[f64]) -> DVector<f64> {
        self.to_tilde(v)
    }

    /// `YᵀM^{-1/2}v` for a bus vector `v`.
    pub fn project(&self, v: &[f64]) -> DVector<f64> {
        let w = DVector::from_iterator(self.n, v.iter().zip(self.inv_sqrt_m.iter()).map(|(a, s)| a * s));
        self.y.tr_mul(&w)
    }

    /// `Λ_P⁻¹ x`.
    pub fn solve_lambda_p(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    /// `f̃ = YᵀM^{-1/2}(f(𝟙ω_b) + ξ)`.
    pub fn f_tilde(&self, rfs: &[ResponseFunction], omega_b: f64, xi: &[f64]) -> Result<DVector<f64>, CertifyError> {
        let mut g = Vec::with_capacity(self.n);
        for (rf, x) in rfs.iter().zip(xi) {
            g.push(rf.eval(omega_b)?.0 + x);
        }
        Ok(self.project(&g))
    }

    /// Edge-wise angle differences `Gθ̃`.
    pub fn edge_angles(&self, tilde: &DVector<f64>) -> DVector<f64> {
        &self.g * tilde
    }

    /// Whether `|Gθ̃|_∞ < π/2 − ρ`.
    pub fn in_cohesive_set(&self, tilde: &DVector<f64>, rho: f64) -> bool {
        self.cohesive_slack(tilde, rho) > 0.0
    }

    /// `π/2 − ρ − |Gθ̃|_∞`; positive inside the cohesive set.
    pub fn cohesive_slack(&self, tilde: &DVector<f64>, rho: f64) -> f64 {
        std::f64::consts::FRAC_PI_2 - rho - self.edge_angles(tilde).amax()
    }

    /// `U(θ̃) = −Σ_l Γ_l cos((Gθ̃)_l)`.
    pub fn energy(&self, tilde: &DVector<f64>) -> f64 {
        -self.edge_angles(tilde).iter().zip(self.gamma.iter()).map(|(a, w)| w * a.cos()).sum::<f64>()
    }

    /// `∇U(θ̃) = GᵀΓ sin(Gθ̃)`.
    pub fn energy_gradient(&self, tilde: &DVector<f64>) -> DVector<f64> {
        let s = self.edge_angles(tilde).zip_map(&self.gamma, |a, w| w * a.sin());
        self.g.tr_mul(&s)
    }

    /// `∇²U(θ̃) = Gᵀ diag(Γ cos(Gθ̃)) G`.
    pub fn energy_hessian(&self, tilde: &DVector<f64>) -> DMatrix<f64> {
        let c = self.edge_angles(tilde).zip_map(&self.gamma, |a, w| w * a.cos());
        let mut scaled = self.g.clone();
        for (mut row, w) in scaled.row_iter_mut().zip(c.iter()) {
            row *= *w;
        }
        let h = self.g.tr_mul(&scaled);
        0.5 * (&h + h.transpose())
    }
}
