//! Lyapunov functions evaluated along a stored trajectory.
//!
//! `V̇` is obtained by differencing `V` on the sample grid, never from the
//! analytic chain rule, so comparing it with the dissipation inequality is an
//! independent check.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{EngineError, FlowModel, Trajectory};
use crate::certify::{
    linear_constants, nonlinear_constants, solve_theta_star, CertifyError, TransformedFrame,
};
use crate::grid::PowerNetwork;
use crate::nodal::{blended_response, ResponseFunction, SectorBounds};
use crate::signals::DisturbanceProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LyapunovMode {
    Linear,
    Nonlinear { k: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub v: f64,
    /// Kinetic part `½δ_ωᵀMδ_ω`.
    pub w_k: f64,
    /// Linear mode: the combined potential/cross part. Nonlinear mode: the potential part.
    pub w_p: f64,
    /// Nonlinear mode only: the cross term (entering `V` multiplied by `η*`).
    pub w_c: Option<f64>,
    /// Envelope of `|df̃/dt|` on the current stage.
    pub df_envelope: f64,
    /// Centred difference of `f̃`, when the sample is interior to its stage.
    pub df_numeric: Option<f64>,
    /// Centred difference of `V`, when the sample is interior to its stage.
    pub v_dot: Option<f64>,
    /// Estimated truncation plus noise error of `v_dot`.
    pub diff_error: Option<f64>,
    /// Nonlinear mode: `θ̃ ∈ 𝕊(ρ)`. Always true in linear mode.
    pub cohesive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub mode: LyapunovMode,
    pub eta_star: f64,
    /// Decay rate in `V̇ ≤ −rate·V + gain·|df̃/dt|²`.
    pub rate: f64,
    pub gain: f64,
    pub samples: Vec<LyapunovSample>,
}

impl LyapunovSample {
    /// `−rate·V + gain·envelope²` for the owning trace's constants.
    pub fn rhs_bound(&self, rate: f64, gain: f64) -> f64 {
        -rate * self.v + gain * self.df_envelope * self.df_envelope
    }
}

impl LyapunovTrace {
    /// Fraction of interior samples with `V̇ ≤ rhs + abs_tol + diff_error`, and their count.
    pub fn decay_fraction(&self, abs_tol: f64) -> (f64, usize) {
        let mut total = 0;
        let mut ok = 0;
        for s in &self.samples {
            if let (Some(vd), Some(de)) = (s.v_dot, s.diff_error) {
                total += 1;
                if vd <= s.rhs_bound(self.rate, self.gain) + abs_tol + de {
                    ok += 1;
                }
            }
        }
        (if total == 0 { 1.0 } else { ok as f64 / total as f64 }, total)
    }

    /// Fraction of interior samples with numeric `|df̃/dt| ≤ envelope + abs_tol`.
    pub fn envelope_fraction(&self, abs_tol: f64) -> (f64, usize) {
        let checked: Vec<bool> =
            self.samples.iter().filter_map(|s| s.df_numeric.map(|d| d <= s.df_envelope + abs_tol)).collect();
        let ok = checked.iter().filter(|b| **b).count();
        (if checked.is_empty() { 1.0 } else { ok as f64 / checked.len() as f64 }, checked.len())
    }

    /// Fails on the first sample outside `𝕊(ρ)`.
    pub fn require_cohesive(&self) -> Result<(), EngineError> {
        match self.samples.iter().find(|s| !s.cohesive) {
            Some(s) => Err(EngineError::OutsideCohesiveSet(s.t)),
            None => Ok(()),
        }
    }
}

fn certify_err(e: CertifyError) -> EngineError {
    match e {
        CertifyError::Engine(inner) => inner,
        other => EngineError::Other(other.to_string()),
    }
}

/// Fourth-order divided difference scaled to a third derivative.
fn third_derivative(t: &[f64], v: &[f64]) -> f64 {
    let mut d: Vec<f64> = v.to_vec();
    for level in 1..4 {
        for i in 0..(4 - level) {
            d[i] = (d[i + 1] - d[i]) / (t[i + level] - t[i]);
        }
    }
    6.0 * d[0]
}

/// Centred first derivative on a non-uniform grid.
fn centred(tm: f64, t0: f64, tp: f64, vm: f64, v0: f64, vp: f64) -> f64 {
    let (hm, hp) = (t0 - tm, tp - t0);
    (hm * hm * vp - hp * hp * vm + (hp * hp - hm * hm) * v0) / (hm * hp * (hm + hp))
}

/// Relative accuracy assumed for stored `V` values when estimating differencing noise.
const VALUE_NOISE: f64 = 1e-8;

/// Evaluates the Lyapunov function of the chosen mode at every sample.
///
/// `net` must be the network the trajectory was integrated on (for the
/// nonlinear mode, the baseline network the flows are `k` times).
pub fn lyapunov_trace(
    traj: &Trajectory,
    net: &PowerNetwork,
    rfs: &[ResponseFunction],
    profile: &DisturbanceProfile,
    bounds: &SectorBounds,
    mode: LyapunovMode,
) -> Result<LyapunovTrace, EngineError> {
    match (mode, traj.flow) {
        (LyapunovMode::Linear, FlowModel::Linear) => {}
        (LyapunovMode::Nonlinear { k, .. }, FlowModel::Sinusoidal { k: kt }) if k == kt => {}
        _ => return Err(EngineError::ModeMismatch),
    }
    if traj.network_fingerprint != net.fingerprint() {
        return Err(EngineError::Other("trajectory was produced on a different network".into()));
    }
    let n = net.n_buses();
    if rfs.len() != n || profile.n_buses() != n || traj.n != n {
        return Err(EngineError::DimensionMismatch("network, responses, profile and trajectory disagree".into()));
    }
    if traj.n_stages() > profile.stages().len() {
        return Err(EngineError::DimensionMismatch("trajectory has more stages than the profile".into()));
    }
    let frame = TransformedFrame::new(net).map_err(certify_err)?;
    let spectral = net.spectral_summary().map_err(|e| EngineError::Other(e.to_string()))?;
    let (mu, l) = (bounds.mu, bounds.l);
    let m_b = net.mean_inertia();
    let min_m = net.min_inertia();
    let (eta, rate, gain) = match mode {
        LyapunovMode::Linear => {
            let lc = linear_constants(n, m_b, min_m, frame.sigma_m, mu, l);
            (lc.eta_star, 0.5 * lc.eta_star, 1.0 / (lc.eta_star * frame.sigma_m))
        }
        LyapunovMode::Nonlinear { k, rho } => {
            let nc = nonlinear_constants(n, m_b, min_m, &spectral, mu, l, k, rho);
            (nc.eta_star, nc.c, nc.phi1 + nc.phi2)
        }
    };
    let rates = profile.rate_stats(net.inertia());
    let nf = n as f64;
    let amp = 2.0 * nf * m_b * (1.0 + l / mu).powi(2);

    let len = traj.len();
    let mut samples = Vec::with_capacity(len);
    let mut f_tildes: Vec<DVector<f64>> = Vec::with_capacity(len);
    let mut star_prev: Option<DVector<f64>> = None;
    for k_stage in 0..traj.n_stages() {
        let range = traj.stage_range(k_stage);
        let stage = &profile.stages()[k_stage];
        let c_k = rates.per_stage[k_stage];
        let first = range.start;
        let xi_start = profile.stage_values(k_stage, stage.start);
        let xi_b_start = xi_start.iter().sum::<f64>() / nf;
        let force = (blended_response(rfs, traj.omega_b[first])?.0 + xi_b_start).abs();
        for j in range {
            let t = traj.times[j];
            let wb = traj.omega_b[j];
            let xi = profile.stage_values(k_stage, t);
            let f_tilde = frame.f_tilde(rfs, wb, &xi).map_err(certify_err)?;
            let tilde = frame.to_tilde(traj.theta_at(j));
            let d_omega: Vec<f64> = traj.omega_at(j).iter().map(|w| w - wb).collect();
            let env2 = amp * c_k * c_k + 2.0 * nf * l * l / m_b * force * force * (-2.0 * mu * (t - stage.start)).exp();
            let (v, w_k, w_p, w_c, cohesive) = match mode {
                LyapunovMode::Linear => {
                    let star = frame.solve_lambda_p(&f_tilde);
                    let (wk, wpc) =
                        crate::certify::linear_lyapunov_parts(&frame, net.inertia(), &tilde, &star, &d_omega, eta);
                    (wk + wpc, wk, wpc, None, true)
                }
                LyapunovMode::Nonlinear { k, rho } => {
                    let start = star_prev.clone().unwrap_or_else(|| frame.solve_lambda_p(&f_tilde) / k);
                    let star = solve_theta_star(&frame, k, &f_tilde, &start, 2.0 * rho)
                        .map_err(|e| EngineError::ThetaStarSolveFailure { t, reason: e.to_string() })?;
                    let (wk, wp, wc) = crate::certify::nonlinear_lyapunov_parts(
                        &frame,
                        net.inertia(),
                        k,
                        &tilde,
                        &star,
                        &d_omega,
                    );
                    star_prev = Some(star);
                    (wk + wp + eta * wc, wk, wp, Some(wc), frame.in_cohesive_set(&tilde, rho))
                }
            };
            f_tildes.push(f_tilde);
            samples.push(LyapunovSample {
                t,
                v,
                w_k,
                w_p,
                w_c,
                df_envelope: env2.sqrt(),
                df_numeric: None,
                v_dot: None,
                diff_error: None,
                cohesive,
            });
        }
    }

    for k_stage in 0..traj.n_stages() {
        let range = traj.stage_range(k_stage);
        let (lo, hi) = (range.start, range.end);
        for j in lo + 1..hi.saturating_sub(1) {
            let (tm, t0, tp) = (traj.times[j - 1], traj.times[j], traj.times[j + 1]);
            let (vm, v0, vp) = (samples[j - 1].v, samples[j].v, samples[j + 1].v);
            let vd = centred(tm, t0, tp, vm, v0, vp);
            let window = if j + 2 < hi {
                Some(j - 1)
            } else if j >= lo + 2 {
                Some(j - 2)
            } else {
                None
            };
            let (hm, hp) = (t0 - tm, tp - t0);
            let trunc = match window {
                Some(w) => {
                    let ts = &traj.times[w..w + 4];
                    let vs: Vec<f64> = samples[w..w + 4].iter().map(|s| s.v).collect();
                    hm * hp / 6.0 * third_derivative(ts, &vs).abs()
                }
                None => 0.5 * ((vp - v0) / hp - (v0 - vm) / hm).abs(),
            };
            let noise = 2.0 * VALUE_NOISE * vm.abs().max(v0.abs()).max(vp.abs()) / (hm + hp);
            let df = (&f_tildes[j + 1] - &f_tildes[j - 1]) / (tp - tm);
            let s = &mut samples[j];
            s.v_dot = Some(vd);
            s.diff_error = Some(trunc + noise);
            s.df_numeric = Some(df.norm());
        }
    }

    Ok(LyapunovTrace { mode, eta_star: eta, rate, gain, samples })
}
