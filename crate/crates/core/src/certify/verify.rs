use serde::{Deserialize, Serialize};

use super::{BoundCertificate, CertifyError};
use crate::engine::{weighted_mean, Trajectory};

/// Relative and absolute slack allowed when comparing a sample with its bound.
pub const REL_SLACK: f64 = 1e-6;
pub const ABS_SLACK: f64 = 1e-12;
/// Tolerance on matching the initial state with the certificate's equilibrium.
const INIT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub holds: bool,
    /// `min_t (bound(t)(1+1e−6) + 1e−12 − err(t)²)`; negative on violation.
    pub worst_margin: f64,
    /// `max_t err(t)² / bound(t)`.
    pub worst_ratio: f64,
    pub violation_times: Vec<f64>,
    /// Transient coefficient fitted at `t = 0`, when the certificate has none.
    pub fitted_alpha: Option<f64>,
    pub samples: usize,
}

fn check_steady_init(traj: &Trajectory, cert: &BoundCertificate) -> Result<(), CertifyError> {
    let Some(steady) = &cert.steady_init else { return Ok(()) };
    if traj.is_empty() {
        return Err(CertifyError::NoSteadyInit);
    }
    let omega = traj.omega_at(0);
    let theta = traj.theta_at(0);
    let mean = weighted_mean(theta, &traj.inertia);
    let scale = 1.0 + steady.omega_s.abs();
    let omega_ok = omega.iter().all(|w| (w - steady.omega_s).abs() <= INIT_TOL * scale);
    let theta_ok = theta
        .iter()
        .zip(&steady.theta)
        .all(|(t, s)| (t - mean - s).abs() <= INIT_TOL * (1.0 + s.abs()));
    if omega_ok && theta_ok {
        Ok(())
    } else {
        Err(CertifyError::NoSteadyInit)
    }
}

/// Checks `err(t)² ≤ bound(t)(1 + 1e−6) + 1e−12` at every sample.
///
/// Without a closed-form transient coefficient the smallest one consistent
/// with the first sample is fitted and reported.
pub fn verify_bound(traj: &Trajectory, cert: &BoundCertificate) -> Result<VerifyReport, CertifyError> {
    if traj.network_fingerprint != cert.network_fingerprint {
        return Err(CertifyError::AssumptionMismatch("trajectory was produced on a different network".into()));
    }
    if traj.flow != cert.flow {
        return Err(CertifyError::AssumptionMismatch(format!(
            "flow model {:?} differs from the certificate's {:?}",
            traj.flow, cert.flow
        )));
    }
    if traj.n != cert.inputs.n {
        return Err(CertifyError::AssumptionMismatch("bus count differs".into()));
    }
    check_steady_init(traj, cert)?;
    let err = traj.err();
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    let (alpha, fitted) = match cert.transient {
        Some(a) => (a, None),
        None => {
            let a = err.first().map_or(0.0, |e| (e * e - cert.floor).max(0.0));
            (a, Some(a))
        }
    };
    let mut report = VerifyReport {
        holds: true,
        worst_margin: f64::INFINITY,
        worst_ratio: 0.0,
        violation_times: Vec::new(),
        fitted_alpha: fitted,
        samples: err.len(),
    };
    for (&t, e) in traj.times.iter().zip(&err) {
        let bound = cert.bound_with(alpha, t - t0);
        let e2 = e * e;
        let margin = bound * (1.0 + REL_SLACK) + ABS_SLACK - e2;
        report.worst_margin = report.worst_margin.min(margin);
        if bound > 0.0 {
            report.worst_ratio = report.worst_ratio.max(e2 / bound);
        } else if e2 > 0.0 {
            report.worst_ratio = f64::INFINITY;
        }
        if margin < 0.0 {
            report.holds = false;
            report.violation_times.push(t);
        }
    }
    Ok(report)
}
