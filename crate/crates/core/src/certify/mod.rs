//! Steady states, closed-form coherence bounds and their verification.
//!
//! Four certificates are available:
//!
//! * [`theorem1_certificate`]: DC flow, arbitrary initial state.
//! * [`prop1_certificate`]: DC flow, steady-state start followed by a jump.
//! * [`theorem2_certificate`]: sinusoidal flow inside the cohesive set.
//! * [`prop2_certificate`]: sinusoidal flow, steady-state start followed by a jump.
//!
//! Each one bounds the squared coherence error by `a·e^{−c(t−t₀)} + floor`.

mod bounds;
mod frame;
mod steady;
mod verify;

use thiserror::Error;

use crate::engine::EngineError;
use crate::grid::{GridError, PowerNetwork};
use crate::nodal::{sector_bounds, NodalError, ResponseFunction, SectorBounds};
use crate::signals::{DisturbanceProfile, SignalError};

pub use bounds::{
    linear_constants, nonlinear_constants, prop1_certificate, prop2_certificate, search_rho, theorem1_certificate,
    theorem2_certificate, BoundCertificate, CertificateInputs, CertificateKind, Check, LinearConstants,
    NonlinearConstants, RhoObjective, DEFAULT_RHO,
};
pub(crate) use bounds::{linear_lyapunov_parts, nonlinear_lyapunov_parts};
pub use frame::TransformedFrame;
pub use steady::{solve_theta_star, steady_state_linear, steady_state_nonlinear, steady_state_sinusoidal, SteadyState};
pub use verify::{verify_bound, VerifyReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("could not invert the blended response: {0}")]
    InversionFailure(NodalError),
    #[error("Newton iteration did not converge ({0})")]
    NewtonDivergence(String),
    #[error("solution left the cohesive set (slack {0})")]
    LeftCohesiveSet(f64),
    #[error("disturbance too large for the sinusoidal model (margin {margin})")]
    AssumptionTwoFailed { margin: f64 },
    #[error(transparent)]
    AssumptionOneViolated(NodalError),
    #[error("rho = {0} is outside (0, π/4)")]
    RhoOutOfRange(f64),
    #[error("trajectory does not start at the certificate's steady state")]
    NoSteadyInit,
    #[error("jump |Δξ| = {jump} exceeds the admissible {limit}")]
    JumpTooLarge { jump: f64, limit: f64 },
    #[error("rate C = {rate} exceeds the admissible {limit}")]
    RateTooLarge { rate: f64, limit: f64 },
    #[error("certificate does not match the trajectory: {0}")]
    AssumptionMismatch(String),
    #[error("unsupported disturbance profile: {0}")]
    UnsupportedProfile(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl From<NodalError> for CertifyError {
    fn from(e: NodalError) -> Self {
        match e {
            NodalError::AssumptionOneViolated { .. } => CertifyError::AssumptionOneViolated(e),
            other => CertifyError::InversionFailure(other),
        }
    }
}

/// Everything a certificate depends on besides the flow model.
#[derive(Debug, Clone, Copy)]
pub struct CertifyContext<'a> {
    pub net: &'a PowerNetwork,
    pub rfs: &'a [ResponseFunction],
    pub profile: &'a DisturbanceProfile,
    pub bounds: SectorBounds,
}

impl<'a> CertifyContext<'a> {
    /// Certifies the sector bounds on `range` and checks dimensions.
    pub fn new(
        net: &'a PowerNetwork,
        rfs: &'a [ResponseFunction],
        profile: &'a DisturbanceProfile,
        range: (f64, f64),
    ) -> Result<Self, CertifyError> {
        let bounds = sector_bounds(rfs, net.inertia(), range)?;
        Self::with_bounds(net, rfs, profile, bounds)
    }

    pub fn with_bounds(
        net: &'a PowerNetwork,
        rfs: &'a [ResponseFunction],
        profile: &'a DisturbanceProfile,
        bounds: SectorBounds,
    ) -> Result<Self, CertifyError> {
        let n = net.n_buses();
        if rfs.len() != n || profile.n_buses() != n {
            return Err(CertifyError::DimensionMismatch(format!(
                "{n} buses, {} responses, {} profile entries",
                rfs.len(),
                profile.n_buses()
            )));
        }
        Ok(Self { net, rfs, profile, bounds })
    }
}
