use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use super::{CertifyError, TransformedFrame};
use crate::grid::PowerNetwork;
use crate::nodal::{blended_response, invert_blended, ResponseFunction, SectorBounds};

/// Synchronous equilibrium under a constant disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub omega_s: f64,
    /// Angles with zero inertia-weighted mean.
    pub theta: Vec<f64>,
    /// Largest nodal power imbalance at `(θ, 𝟙ω_s)`.
    pub residual: f64,
}

impl SteadyState {
    pub fn omega(&self) -> Vec<f64> {
        vec![self.omega_s; self.theta.len()]
    }
}

const RESIDUAL_TARGET: f64 = 1e-12;
const MAX_NEWTON: usize = 100;
const MAX_HALVINGS: usize = 60;

fn synchronous_frequency(net: &PowerNetwork, rfs: &[ResponseFunction], xi: &[f64]) -> Result<f64, CertifyError> {
    let n = net.n_buses();
    if rfs.len() != n || xi.len() != n {
        return Err(CertifyError::DimensionMismatch(format!("{n} buses, {} responses, {} injections", rfs.len(), xi.len())));
    }
    let m_b = net.mean_inertia();
    let xi_b = xi.iter().sum::<f64>() / n as f64;
    let mu_guess = blended_response(rfs, 0.0).map(|(_, d)| -d / m_b).unwrap_or(1.0);
    invert_blended(rfs, m_b, mu_guess, -xi_b).map_err(CertifyError::InversionFailure)
}

fn injections(rfs: &[ResponseFunction], omega_s: f64, xi: &[f64]) -> Result<Vec<f64>, CertifyError> {
    rfs.iter()
        .zip(xi)
        .map(|(rf, x)| rf.eval(omega_s).map(|(f, _)| f + x).map_err(CertifyError::InversionFailure))
        .collect()
}

fn imbalance(g: &[f64], flows: &[f64]) -> f64 {
    g.iter().zip(flows).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
}

/// Equilibrium of the DC-flow model: `0 = f(𝟙ω_s) + ξ − L_B θ`.
pub fn steady_state_linear(net: &PowerNetwork, rfs: &[ResponseFunction], xi: &[f64]) -> Result<SteadyState, CertifyError> {
    let omega_s = synchronous_frequency(net, rfs, xi)?;
    let frame = TransformedFrame::new(net)?;
    let g = injections(rfs, omega_s, xi)?;
    let mut tilde = frame.solve_lambda_p(&frame.project(&g));
    let mut theta = frame.from_tilde(&tilde);
    let mut residual = imbalance(&g, &net.dc_injections(&theta));
    // one step of iterative refinement
    let r: Vec<f64> = g.iter().zip(net.dc_injections(&theta)).map(|(a, b)| a - b).collect();
    tilde += frame.solve_lambda_p(&frame.project(&r));
    let refined = frame.from_tilde(&tilde);
    let refined_residual = imbalance(&g, &net.dc_injections(&refined));
    if refined_residual < residual {
        theta = refined;
        residual = refined_residual;
    }
    Ok(SteadyState { omega_s, theta, residual })
}

/// Solves `k∇U(θ̃) = rhs` by damped Newton inside `𝕊(limit_rho)`.
///
/// The start is pulled toward the origin until it is cohesive; steps are
/// halved while they leave the set or fail to reduce the residual.
pub fn solve_theta_star(
    frame: &TransformedFrame,
    k: f64,
    rhs: &DVector<f64>,
    start: &DVector<f64>,
    limit_rho: f64,
) -> Result<DVector<f64>, CertifyError> {
    let mut x = start.clone();
    let mut shrink = 0;
    while !frame.in_cohesive_set(&x, limit_rho) {
        x *= 0.5;
        shrink += 1;
        if shrink > MAX_HALVINGS {
            x.fill(0.0);
            break;
        }
    }
    let resid = |x: &DVector<f64>| frame.energy_gradient(x) * k - rhs;
    let scale = rhs.amax().max(k * frame.gamma.amax()).max(1e-300);
    let mut r = resid(&x);
    let mut rn = r.norm();
    for _ in 0..MAX_NEWTON {
        if rn <= RESIDUAL_TARGET * scale {
            return Ok(x);
        }
        let h = frame.energy_hessian(&x) * k;
        let step = Cholesky::new(h)
            .ok_or_else(|| CertifyError::NewtonDivergence("Hessian lost definiteness".into()))?
            .solve(&r);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = &x - &step * t;
            if frame.in_cohesive_set(&trial, limit_rho) {
                let tr = resid(&trial);
                let tn = tr.norm();
                if tn < rn || tn <= RESIDUAL_TARGET * scale {
                    x = trial;
                    r = tr;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if rn <= 1e3 * RESIDUAL_TARGET * scale {
                return Ok(x);
            }
            return Err(CertifyError::NewtonDivergence(format!("no descent step, residual {rn:e}")));
        }
    }
    if rn <= 1e3 * RESIDUAL_TARGET * scale {
        Ok(x)
    } else {
        Err(CertifyError::NewtonDivergence(format!("residual {rn:e} after {MAX_NEWTON} iterations")))
    }
}

/// Equilibrium of the sinusoidal model `0 = f(𝟙ω_s) + ξ − k Σ_j B⁰_ij sin(θ_i − θ_j)`
/// with angles in `𝕊(2ρ)`. `net` carries the baseline sensitivities `B⁰`.
pub fn steady_state_nonlinear(
    net: &PowerNetwork,
    rfs: &[ResponseFunction],
    xi: &[f64],
    bounds: &SectorBounds,
    k: f64,
    rho: f64,
) -> Result<SteadyState, CertifyError> {
    if !(rho > 0.0 && rho < std::f64::consts::FRAC_PI_4) {
        return Err(CertifyError::RhoOutOfRange(rho));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(crate::grid::GridError::NonPositiveScale(k).into());
    }
    let n = net.n_buses();
    let xi_b = (xi.iter().sum::<f64>() / n as f64).abs();
    let edge = net.lines().iter().map(|l| (xi[l.from] - xi[l.to]).abs()).fold(0.0, f64::max);
    let spectral = net.spectral_summary()?;
    let lhs = 12.0 * bounds.l * net.max_inertia() * xi_b / (bounds.mu * net.mean_inertia()) + 2.0 * edge;
    let rhs = k * spectral.lambda2_l * (2.0 * rho).cos();
    if lhs > rhs {
        return Err(CertifyError::AssumptionTwoFailed { margin: rhs - lhs });
    }
    steady_state_sinusoidal(net, rfs, xi, k, 2.0 * rho)
}

/// Sinusoidal-flow equilibrium with edge differences below `π/2 − margin`,
/// without the disturbance-size test of [`steady_state_nonlinear`].
pub fn steady_state_sinusoidal(
    net: &PowerNetwork,
    rfs: &[ResponseFunction],
    xi: &[f64],
    k: f64,
    margin: f64,
) -> Result<SteadyState, CertifyError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(crate::grid::GridError::NonPositiveScale(k).into());
    }
    let omega_s = synchronous_frequency(net, rfs, xi)?;
    let frame = TransformedFrame::new(net)?;
    let g = injections(rfs, omega_s, xi)?;
    let target = frame.project(&g);
    let dc_start = frame.solve_lambda_p(&target) / k;
    let tilde = solve_theta_star(&frame, k, &target, &dc_start, margin)?;
    let slack = frame.cohesive_slack(&tilde, margin);
    if slack <= 0.0 {
        return Err(CertifyError::LeftCohesiveSet(slack));
    }
    let theta = frame.from_tilde(&tilde);
    let residual = imbalance(&g, &net.sine_injections(&theta, k));
    Ok(SteadyState { omega_s, theta, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> PowerNetwork {
        PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0)]).unwrap()
    }

    fn lin() -> Vec<ResponseFunction> {
        vec![ResponseFunction::linear(1.0); 2]
    }

    #[test]
    fn linear_two_bus_hand_solution() {
        let s = steady_state_linear(&two_bus(), &lin(), &[1.0, -1.0]).unwrap();
        assert!(s.omega_s.abs() < 1e-12);
        assert!((s.theta[0] - s.theta[1] - 1.0).abs() < 1e-12);
        assert!(s.residual < 1e-10);

        let s = steady_state_linear(&two_bus(), &lin(), &[0.25, 0.25]).unwrap();
        assert!((s.omega_s - 0.25).abs() < 1e-12);
        assert!((s.theta[0] - s.theta[1]).abs() < 1e-12);

        let s = steady_state_linear(&two_bus(), &lin(), &[0.0, 0.0]).unwrap();
        assert_eq!(s.omega_s, 0.0);
        assert!(s.theta.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn nonlinear_two_bus_closed_form() {
        let bounds = SectorBounds { mu: 1.0, l: 1.0, range: (-1.0, 1.0) };
        let rho = 0.5 * 0.8_f64.acos();
        let s = steady_state_nonlinear(&two_bus(), &lin(), &[0.3, -0.3], &bounds, 1.0, rho).unwrap();
        assert!(s.omega_s.abs() < 1e-12);
        assert!((s.theta[0] - s.theta[1] - 0.3_f64.asin()).abs() < 1e-10);
        assert!(s.residual < 1e-10);
        let zero = steady_state_nonlinear(&two_bus(), &lin(), &[0.0, 0.0], &bounds, 1.0, rho).unwrap();
        assert!(zero.theta.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn nonlinear_rejects_infeasible_disturbance() {
        let bounds = SectorBounds { mu: 1.0, l: 1.0, range: (-1.0, 1.0) };
        let err = steady_state_nonlinear(&two_bus(), &lin(), &[0.9, -0.9], &bounds, 1.0, 0.3).unwrap_err();
        assert!(matches!(err, CertifyError::AssumptionTwoFailed { .. }));
        let err = steady_state_nonlinear(&two_bus(), &lin(), &[0.0, 0.0], &bounds, 1.0, 0.9).unwrap_err();
        assert_eq!(err, CertifyError::RhoOutOfRange(0.9));
    }
}
