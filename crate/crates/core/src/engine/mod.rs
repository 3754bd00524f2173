//! Time integration of the swing and blended models.
//!
//! The swing state is `(θ, ω)` with `θ̇ = ω` and
//! `M_i ω̇_i = f_i(ω_i) + ξ_i(t) − p_i(θ)`, where the line flows `p` are either
//! the DC approximation `L_B θ` or `k Σ_j B⁰_ij sin(θ_i − θ_j)`. Integration
//! stops at every stage boundary of the disturbance and restarts from the
//! (continuous) state, so no step ever straddles a jump in `ξ`.

mod csv;
mod lyapunov;
mod ode;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::PowerNetwork;
use crate::nodal::{NodalError, ResponseFunction, SectorBounds};
use crate::signals::DisturbanceProfile;

pub use self::csv::{read_trajectory_csv, write_trajectory_csv, CsvOptions};
pub use lyapunov::{lyapunov_trace, LyapunovMode, LyapunovSample, LyapunovTrace};
pub use ode::StepStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("sample grids of the swing and blended runs differ")]
    GridMismatch,
    #[error("θ̃ left the cohesive set at t = {0}")]
    OutsideCohesiveSet(f64),
    #[error("θ̃* solve failed at t = {t}: {reason}")]
    ThetaStarSolveFailure { t: f64, reason: String },
    #[error("Lyapunov mode does not match the trajectory's flow model")]
    ModeMismatch,
    #[error(transparent)]
    Nodal(#[from] NodalError),
    #[error("{0}")]
    Other(String),
}

/// Line-flow model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FlowModel {
    /// `p = L_B θ`.
    Linear,
    /// `p_i = k Σ_j B⁰_ij sin(θ_i − θ_j)`.
    Sinusoidal { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand–Prince 5(4) with dense output.
    Adaptive,
    /// Classic RK4 with step `fixed_step` (bit-reproducible).
    FixedRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub fixed_step: f64,
    /// Final time.
    pub t_end: f64,
    /// Spacing of the uniform output grid.
    pub sample_dt: f64,
    /// Extra output times merged into the uniform grid.
    pub extra_times: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Adaptive,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.5,
            fixed_step: 0.01,
            t_end: 10.0,
            sample_dt: 0.05,
            extra_times: Vec::new(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(t_end: f64, sample_dt: f64) -> Self {
        Self { t_end, sample_dt, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.max_step > 0.0 && self.fixed_step > 0.0) {
            return bad("step sizes must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive and finite");
        }
        if !(self.sample_dt > 0.0) {
            return bad("sample_dt must be positive");
        }
        Ok(())
    }

    /// Sorted output grid: uniform samples, `t_end`, breakpoints and extra times.
    pub fn output_grid(&self, breakpoints: &[f64]) -> Vec<f64> {
        let count = (self.t_end / self.sample_dt).floor() as usize;
        let snap = 1e-9 * self.sample_dt;
        let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * self.sample_dt).filter(|&t| t <= self.t_end).collect();
        times.push(self.t_end);
        times.extend(self.extra_times.iter().copied().filter(|&t| t >= 0.0 && t <= self.t_end));
        let bps: Vec<f64> = breakpoints.iter().copied().filter(|&b| b >= 0.0 && b <= self.t_end).collect();
        for t in &mut times {
            if let Some(b) = bps.iter().find(|&&b| (b - *t).abs() < snap) {
                *t = *b;
            }
        }
        times.extend(bps);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }
}

fn validate_inputs(net: &PowerNetwork, rfs: &[ResponseFunction], profile: &DisturbanceProfile) -> Result<(), EngineError> {
    let n = net.n_buses();
    if rfs.len() != n {
        return Err(EngineError::DimensionMismatch(format!("{} response functions for {n} buses", rfs.len())));
    }
    if profile.n_buses() != n {
        return Err(EngineError::DimensionMismatch(format!("profile has {} buses, network {n}", profile.n_buses())));
    }
    Ok(())
}

struct SwingSystem<'a> {
    net: &'a PowerNetwork,
    rfs: &'a [ResponseFunction],
    profile: &'a DisturbanceProfile,
    stage: usize,
    flow: FlowModel,
    scratch: RefCell<Vec<f64>>,
}

impl ode::System for SwingSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.net.n_buses()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EngineError> {
        let n = self.net.n_buses();
        let (theta, omega) = y.split_at(n);
        let (dtheta, domega) = dy.split_at_mut(n);
        dtheta.copy_from_slice(omega);
        let mut xi = self.scratch.borrow_mut();
        self.profile.stage_values_into(self.stage, t, &mut xi);
        for i in 0..n {
            domega[i] = self.rfs[i].eval(omega[i])?.0 + xi[i];
        }
        for line in self.net.lines() {
            let d = theta[line.from] - theta[line.to];
            let flow = match self.flow {
                FlowModel::Linear => line.sensitivity * d,
                FlowModel::Sinusoidal { k } => k * line.sensitivity * d.sin(),
            };
            domega[line.from] -= flow;
            domega[line.to] += flow;
        }
        for (d, m) in domega.iter_mut().zip(self.net.inertia()) {
            *d /= m;
        }
        Ok(())
    }
}

struct BlendedSystem<'a> {
    rfs: &'a [ResponseFunction],
    profile: &'a DisturbanceProfile,
    stage: usize,
    m_b: f64,
}

impl ode::System for BlendedSystem<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EngineError> {
        let (fb, _) = crate::nodal::blended_response(self.rfs, y[0])?;
        dy[0] = (fb + self.profile.blended_in_stage(self.stage, t)) / self.m_b;
        Ok(())
    }
}

/// Runs one integration per stage on the output grid; `on_boundary` may
/// modify the state at each interior stage start.
fn run_stages<S, B>(
    make: B,
    profile: &DisturbanceProfile,
    y0: &[f64],
    cfg: &IntegratorConfig,
    grid: &[f64],
    mut on_boundary: impl FnMut(&mut [f64]),
) -> Result<(Vec<Vec<f64>>, StepStats), EngineError>
where
    S: ode::System,
    B: Fn(usize) -> S,
{
    let mut samples = vec![Vec::new(); grid.len()];
    let mut y = y0.to_vec();
    let mut stats = StepStats::default();
    let stages = profile.stages();
    for (k, stage) in stages.iter().enumerate() {
        if stage.start >= cfg.t_end && k > 0 {
            break;
        }
        if k > 0 {
            on_boundary(&mut y);
        }
        let end = stage.end.min(cfg.t_end);
        let last = end >= cfg.t_end;
        let lo = grid.partition_point(|&t| t < stage.start);
        let hi = if last { grid.len() } else { grid.partition_point(|&t| t < end) };
        let outs = &grid[lo..hi];
        let sys = make(k);
        let (y_end, s) = ode::integrate(&sys, stage.start, end, &y, outs, cfg, &mut |j, state| {
            samples[lo + j] = state.to_vec();
        })?;
        stats += s;
        y = y_end;
        if last {
            break;
        }
    }
    Ok((samples, stats))
}

/// Swing-model output on the sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingRun {
    pub times: Vec<f64>,
    /// Row-major `samples × N`.
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub n: usize,
    pub stage_marks: Vec<usize>,
    pub flow: FlowModel,
    pub network_fingerprint: u64,
    pub stats_accepted: usize,
    pub stats_rejected: usize,
}

/// Blended-model output on the sample grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendedRun {
    pub times: Vec<f64>,
    pub omega_b: Vec<f64>,
}

fn stage_marks(times: &[f64], profile: &DisturbanceProfile) -> Vec<usize> {
    let t_end = times.last().copied().unwrap_or(0.0);
    profile
        .breakpoints()
        .iter()
        .skip(1)
        .filter(|&&b| b < t_end)
        .filter_map(|b| times.iter().position(|t| t == b))
        .collect()
}

/// Integrates the swing model from `(θ₀, ω₀)`.
pub fn integrate_swing(
    net: &PowerNetwork,
    rfs: &[ResponseFunction],
    profile: &DisturbanceProfile,
    theta0: &[f64],
    omega0: &[f64],
    flow: FlowModel,
    cfg: &IntegratorConfig,
) -> Result<SwingRun, EngineError> {
    validate_inputs(net, rfs, profile)?;
    cfg.validate()?;
    let n = net.n_buses();
    if theta0.len() != n || omega0.len() != n {
        return Err(EngineError::DimensionMismatch("initial state length differs from bus count".into()));
    }
    if let FlowModel::Sinusoidal { k } = flow {
        if !(k > 0.0 && k.is_finite()) {
            return Err(EngineError::InvalidConfig(format!("flow scale k = {k} must be positive")));
        }
    }
    let grid = cfg.output_grid(&profile.breakpoints());
    let y0: Vec<f64> = theta0.iter().chain(omega0).copied().collect();
    let inertia = net.inertia();
    let m_total: f64 = inertia.iter().sum();
    let recenter = |y: &mut [f64]| {
        let mean = y[..n].iter().zip(inertia).map(|(t, m)| t * m).sum::<f64>() / m_total;
        for t in &mut y[..n] {
            *t -= mean;
        }
    };
    let make = |k| SwingSystem { net, rfs, profile, stage: k, flow, scratch: RefCell::new(vec![0.0; n]) };
    let (samples, stats) = run_stages(make, profile, &y0, cfg, &grid, recenter)?;
    let mut theta = Vec::with_capacity(grid.len() * n);
    let mut omega = Vec::with_capacity(grid.len() * n);
    for s in &samples {
        theta.extend_from_slice(&s[..n]);
        omega.extend_from_slice(&s[n..]);
    }
    Ok(SwingRun {
        stage_marks: stage_marks(&grid, profile),
        times: grid,
        theta,
        omega,
        n,
        flow,
        network_fingerprint: net.fingerprint(),
        stats_accepted: stats.accepted,
        stats_rejected: stats.rejected,
    })
}

/// `Σ M_i ω_i / Σ M_i`.
pub fn weighted_mean(values: &[f64], inertia: &[f64]) -> f64 {
    values.iter().zip(inertia).map(|(w, m)| w * m).sum::<f64>() / inertia.iter().sum::<f64>()
}

/// Integrates `M_b ω̇_b = f_b(ω_b) + ξ_b(t)`; only inertias, responses and the
/// disturbance enter, never the lines.
pub fn integrate_blended(
    inertia: &[f64],
    rfs: &[ResponseFunction],
    profile: &DisturbanceProfile,
    omega_b0: f64,
    cfg: &IntegratorConfig,
) -> Result<BlendedRun, EngineError> {
    cfg.validate()?;
    if rfs.len() != inertia.len() || profile.n_buses() != inertia.len() {
        return Err(EngineError::DimensionMismatch("inertia, responses and profile disagree in length".into()));
    }
    let m_b = inertia.iter().sum::<f64>() / inertia.len() as f64;
    let grid = cfg.output_grid(&profile.breakpoints());
    let make = |k| BlendedSystem { rfs, profile, stage: k, m_b };
    let (samples, _) = run_stages(make, profile, &[omega_b0], cfg, &grid, |_| {})?;
    Ok(BlendedRun { times: grid, omega_b: samples.iter().map(|s| s[0]).collect() })
}

/// Full record of one simulation: swing states, blended trajectory and COI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub n: usize,
    /// Row-major `samples × N`.
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_b: Vec<f64>,
    pub omega_coi: Vec<f64>,
    /// Sample indices at which a new stage starts (excluding t = 0).
    pub stage_marks: Vec<usize>,
    pub inertia: Vec<f64>,
    pub flow: FlowModel,
    pub network_fingerprint: u64,
    /// Samples whose frequencies left the certified sector range.
    pub range_excursions: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn theta_at(&self, j: usize) -> &[f64] {
        &self.theta[j * self.n..(j + 1) * self.n]
    }

    pub fn omega_at(&self, j: usize) -> &[f64] {
        &self.omega[j * self.n..(j + 1) * self.n]
    }

    /// `max_i |ω_i − ω_b|` at sample `j`.
    pub fn err_at(&self, j: usize) -> f64 {
        let wb = self.omega_b[j];
        self.omega_at(j).iter().fold(0.0, |acc, w| acc.max((w - wb).abs()))
    }

    /// Coherence error at every sample, computed from the stored states.
    pub fn err(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.err_at(j)).collect()
    }

    /// `max_{i,j} |ω_i − ω_j|` at sample `j`.
    pub fn spread_at(&self, j: usize) -> f64 {
        let w = self.omega_at(j);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Sample index range `[start, end)` of stage `k` (end exclusive except for the last stage).
    pub fn stage_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = if k == 0 { 0 } else { self.stage_marks[k - 1] };
        let end = self.stage_marks.get(k).copied().unwrap_or(self.len());
        start..end
    }

    pub fn n_stages(&self) -> usize {
        self.stage_marks.len() + 1
    }
}

impl Trajectory {
    /// Samples of stage `k` with time shifted to start at zero.
    /// The blended trace is copied unchanged; see [`restart_at_stage`].
    pub fn stage_slice(&self, k: usize) -> Result<Self, EngineError> {
        if k >= self.n_stages() {
            return Err(EngineError::Other(format!("no stage {k} in a {}-stage trajectory", self.n_stages())));
        }
        let r = self.stage_range(k);
        let t0 = self.times[r.start];
        let n = self.n;
        Ok(Self {
            times: self.times[r.clone()].iter().map(|t| t - t0).collect(),
            n,
            theta: self.theta[r.start * n..r.end * n].to_vec(),
            omega: self.omega[r.start * n..r.end * n].to_vec(),
            omega_b: self.omega_b[r.clone()].to_vec(),
            omega_coi: self.omega_coi[r].to_vec(),
            stage_marks: Vec::new(),
            inertia: self.inertia.clone(),
            flow: self.flow,
            network_fingerprint: self.network_fingerprint,
            range_excursions: 0,
        })
    }
}

/// Treats stage `k` as a fresh single-stage experiment: profile and samples
/// are shifted to start at zero and the blended model is re-integrated from
/// the COI frequency at the stage start.
pub fn restart_at_stage(
    traj: &Trajectory,
    rfs: &[ResponseFunction],
    profile: &DisturbanceProfile,
    k: usize,
    cfg: &IntegratorConfig,
) -> Result<(DisturbanceProfile, Trajectory), EngineError> {
    let stage_profile = profile.isolate_stage(k).map_err(|e| EngineError::Other(e.to_string()))?;
    let mut slice = traj.stage_slice(k)?;
    let t_end = slice.times.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return Err(EngineError::Other(format!("stage {k} has fewer than two samples")));
    }
    let sub = IntegratorConfig { t_end, sample_dt: t_end, extra_times: slice.times.clone(), ..cfg.clone() };
    let wb0 = weighted_mean(slice.omega_at(0), &slice.inertia);
    let blended = integrate_blended(&slice.inertia, rfs, &stage_profile, wb0, &sub)?;
    if blended.times.len() != slice.times.len() {
        return Err(EngineError::Other("restarted blended grid differs from the trajectory".into()));
    }
    slice.omega_b = blended.omega_b;
    Ok((stage_profile, slice))
}

/// Combines a swing run with a blended run on the same grid and fills in the
/// COI frequency.
pub fn derived_traces(swing: &SwingRun, blended: &BlendedRun, inertia: &[f64]) -> Result<Trajectory, EngineError> {
    if swing.times != blended.times {
        return Err(EngineError::GridMismatch);
    }
    if inertia.len() != swing.n {
        return Err(EngineError::DimensionMismatch("inertia length differs from bus count".into()));
    }
    let n = swing.n;
    let omega_coi: Vec<f64> = swing.omega.chunks(n).map(|w| weighted_mean(w, inertia)).collect();
    let traj = Trajectory {
        times: swing.times.clone(),
        n,
        theta: swing.theta.clone(),
        omega: swing.omega.clone(),
        omega_b: blended.omega_b.clone(),
        omega_coi,
        stage_marks: swing.stage_marks.clone(),
        inertia: inertia.to_vec(),
        flow: swing.flow,
        network_fingerprint: swing.network_fingerprint,
        range_excursions: 0,
    };
    for j in 0..traj.len() {
        debug_assert!(traj.spread_at(j) <= 2.0 * traj.err_at(j) * (1.0 + 1e-12) + 1e-300);
    }
    Ok(traj)
}

/// Swing and blended integration from `(θ₀, ω₀)`, with `ω_b(0)` the
/// inertia-weighted mean of `ω₀`. When `bounds` is given, samples whose
/// frequencies leave its certified range are counted and logged.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    net: &PowerNetwork,
    rfs: &[ResponseFunction],
    profile: &DisturbanceProfile,
    theta0: &[f64],
    omega0: &[f64],
    flow: FlowModel,
    cfg: &IntegratorConfig,
    bounds: Option<&SectorBounds>,
) -> Result<Trajectory, EngineError> {
    let swing = integrate_swing(net, rfs, profile, theta0, omega0, flow, cfg)?;
    let wb0 = weighted_mean(omega0, net.inertia());
    let blended = integrate_blended(net.inertia(), rfs, profile, wb0, cfg)?;
    let mut traj = derived_traces(&swing, &blended, net.inertia())?;
    if let Some(b) = bounds {
        traj.range_excursions = (0..traj.len())
            .filter(|&j| traj.omega_at(j).iter().chain(std::iter::once(&traj.omega_b[j])).any(|&w| !b.contains(w)))
            .count();
        if traj.range_excursions > 0 {
            log::warn!(
                "{} samples leave the certified frequency range [{}, {}]",
                traj.range_excursions,
                b.range.0,
                b.range.1
            );
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Term;

    fn two_bus() -> PowerNetwork {
        PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn decoupled_closed_form() {
        let rfs = vec![ResponseFunction::linear(1.0); 2];
        let p = DisturbanceProfile::constant(&[0.0, 0.0], None).unwrap();
        let cfg = IntegratorConfig::with_horizon(1.0, 0.1);
        let t = simulate(&two_bus(), &rfs, &p, &[0.0, 0.0], &[1.0, 1.0], FlowModel::Linear, &cfg, None).unwrap();
        let last = t.len() - 1;
        assert_eq!(t.times[last], 1.0);
        for w in t.omega_at(last) {
            assert!((w - (-1.0_f64).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn blended_closed_form() {
        let rfs = vec![ResponseFunction::linear(1.0)];
        let p = DisturbanceProfile::uniform(1, vec![Term::Constant { a: 1.0 }]).unwrap();
        let run = integrate_blended(&[1.0], &rfs, &p, 0.0, &IntegratorConfig::with_horizon(1.0, 0.5)).unwrap();
        assert!((run.omega_b[2] - (1.0 - (-1.0_f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn coi_and_grid_mismatch() {
        assert_eq!(weighted_mean(&[1.0, 3.0], &[1.0, 3.0]), 2.5);
        let swing = SwingRun {
            times: vec![0.0],
            theta: vec![0.0; 2],
            omega: vec![5.0, 5.0],
            n: 2,
            stage_marks: vec![],
            flow: FlowModel::Linear,
            network_fingerprint: 0,
            stats_accepted: 0,
            stats_rejected: 0,
        };
        let ok = derived_traces(&swing, &BlendedRun { times: vec![0.0], omega_b: vec![5.0] }, &[2.0, 7.0]).unwrap();
        assert_eq!(ok.omega_coi[0], 5.0);
        assert_eq!(ok.err_at(0), 0.0);
        let bad = derived_traces(&swing, &BlendedRun { times: vec![0.5], omega_b: vec![0.0] }, &[1.0, 1.0]);
        assert_eq!(bad.unwrap_err(), EngineError::GridMismatch);
    }

    #[test]
    fn output_grid_contains_breakpoints() {
        let cfg = IntegratorConfig { t_end: 100.0, sample_dt: 0.3, ..Default::default() };
        let g = cfg.output_grid(&[0.0, 80.0]);
        assert!(g.contains(&80.0) && g.contains(&100.0) && g[0] == 0.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
