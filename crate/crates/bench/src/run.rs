//! Executing one scenario: simulation, certificates, summary statistics.

use std::path::{Path, PathBuf};
use std::time::Instant;

use coherency::certify::{
    prop1_certificate, prop2_certificate, search_rho, steady_state_linear, steady_state_sinusoidal,
    theorem1_certificate, theorem2_certificate, verify_bound, CertifyContext, RhoObjective, VerifyReport, DEFAULT_RHO,
};
use coherency::engine::{restart_at_stage, simulate};
use coherency::nodal::sector_bounds;
use coherency::parallel;
use coherency::signals::{check_assumption2, Assumption2Report};
use coherency::{BoundCertificate, CertificateKind, CertifyError, EngineError, FlowModel, SectorBounds, Trajectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::output;
use crate::scenario::Scenario;

/// Angle margin kept from `π/2` when solving a sinusoidal equilibrium without
/// a requested `ρ`.
const STEADY_MARGIN: f64 = 1e-3;
/// Grid size of the `ρ` search.
const RHO_POINTS: usize = 64;

#[derive(Debug, Error)]
pub enum RunFailure {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("initial state: {0}")]
    Initial(CertifyError),
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Output(String),
}

#[derive(Debug, Error)]
#[error("scenario `{scenario}`: {failure}")]
pub struct RunError {
    pub scenario: String,
    #[source]
    pub failure: RunFailure,
}

/// Least-squares fit of `ln err(t) ≈ a − rate·t` over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    /// Largest error over the final fifth of the stage.
    pub plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub index: usize,
    pub start: f64,
    /// Time of the stage's last sample.
    pub end: f64,
    pub sup_err: f64,
    pub err_at_end: f64,
    pub decay: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateVerdict {
    pub kind: CertificateKind,
    pub stage: usize,
    pub rho: Option<f64>,
    /// Variant name of the error, when the certificate could not be built or checked.
    pub error_kind: Option<String>,
    pub error: Option<String>,
    pub certificate: Option<BoundCertificate>,
    pub verification: Option<VerifyReport>,
}

impl CertificateVerdict {
    pub fn holds(&self) -> bool {
        self.verification.as_ref().is_some_and(|v| v.holds)
    }

    fn failed(kind: CertificateKind, stage: usize, rho: Option<f64>, e: CertifyError) -> Self {
        let debug = format!("{e:?}");
        let name = debug.split(['(', ' ', '{']).next().unwrap_or("").to_string();
        Self {
            kind,
            stage,
            rho,
            error_kind: Some(name),
            error: Some(e.to_string()),
            certificate: None,
            verification: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_s: f64,
    pub certify_s: f64,
    pub write_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub network_source: String,
    pub n_buses: usize,
    pub flow: FlowModel,
    pub lambda2: f64,
    pub lambda2_l: f64,
    /// Sector bounds, when Assumption 1 could be certified on the range.
    pub sector: Option<SectorBounds>,
    pub assumption1_error: Option<String>,
    /// Disturbance-size test at `ρ = π/8` (sinusoidal flow only).
    pub assumption2: Option<Assumption2Report>,
    pub rate_c: f64,
    pub rate_c_lim: f64,
    pub steady_residual: Option<f64>,
    pub samples: usize,
    pub range_excursions: usize,
    pub sup_err: f64,
    /// `sup_t |ω_b − ω_COI|`.
    pub sup_coi_gap: f64,
    /// `sup_t |ω_COI|`.
    pub sup_coi: f64,
    pub stages: Vec<StageSummary>,
    pub certificates: Vec<CertificateVerdict>,
    pub files: Vec<PathBuf>,
    pub timings: Timings,
}

impl RunReport {
    pub fn stage(&self, k: usize) -> Option<&StageSummary> {
        self.stages.get(k)
    }
}

/// Largest error after `from`.
pub fn sup_err_after(traj: &Trajectory, from: f64) -> f64 {
    (0..traj.len()).filter(|&j| traj.times[j] > from).map(|j| traj.err_at(j)).fold(0.0, f64::max)
}

pub fn run_scenario(s: &Scenario) -> Result<RunReport, RunError> {
    run_scenario_full(s, s.file.out.as_deref()).map(|(r, _)| r)
}

/// Runs `s` and returns the trajectory as well; files are written to `out`
/// when given.
pub fn run_scenario_full(s: &Scenario, out: Option<&Path>) -> Result<(RunReport, Trajectory), RunError> {
    let wrap = |failure| RunError { scenario: s.name().to_string(), failure };
    let total = Instant::now();
    let net = &s.network;
    let rfs = &s.responses;
    let cfg = &s.file.integrator;
    let flow = s.file.flow;
    let bounds = sector_bounds(rfs, net.inertia(), s.file.sector_range);
    let (mut theta0, mut omega0) = (s.theta0.clone(), s.omega0.clone());
    let mut steady_residual = None;
    if s.steady_init {
        let xi = s.profile.initial_value();
        let steady = match flow {
            FlowModel::Linear => steady_state_linear(net, rfs, xi),
            FlowModel::Sinusoidal { k } => steady_state_sinusoidal(net, rfs, xi, k, STEADY_MARGIN),
        }
        .map_err(|e| wrap(RunFailure::Initial(e)))?;
        theta0 = steady.theta.clone();
        omega0 = steady.omega();
        steady_residual = Some(steady.residual);
    }

    let t_sim = Instant::now();
    let traj = simulate(net, rfs, &s.profile, &theta0, &omega0, flow, cfg, bounds.as_ref().ok())
        .map_err(|e| wrap(e.into()))?;
    let simulate_s = t_sim.elapsed().as_secs_f64();

    let spectral = net.spectral_summary().map_err(|e| wrap(RunFailure::Output(e.to_string())))?;
    let assumption2 = match (flow, &bounds) {
        (FlowModel::Sinusoidal { k }, Ok(b)) => check_assumption2(net, &s.profile, b, DEFAULT_RHO, k).ok(),
        _ => None,
    };
    let rates = s.profile.rate_stats(net.inertia());

    let t_cert = Instant::now();
    let jobs: Vec<(usize, usize)> = s
        .file
        .certificates
        .iter()
        .enumerate()
        .flat_map(|(r, req)| {
            let stages: Vec<usize> =
                if req.stages.is_empty() { (0..traj.n_stages()).collect() } else { req.stages.clone() };
            stages.into_iter().map(move |k| (r, k))
        })
        .collect();
    let certificates = parallel::map(s.file.execution, &jobs, |&(r, k)| {
        let req = &s.file.certificates[r];
        match &bounds {
            Ok(b) => certify_stage(s, &traj, *b, req.kind, req.rho, k),
            Err(e) => CertificateVerdict::failed(req.kind, k, req.rho, e.clone().into()),
        }
    });
    let certify_s = t_cert.elapsed().as_secs_f64();

    let err = traj.err();
    let stages = (0..traj.n_stages()).map(|k| stage_summary(&traj, &err, k)).collect();
    let mut report = RunReport {
        scenario: s.name().to_string(),
        scenario_hash: s.hash(),
        network_source: s.network_label.clone(),
        n_buses: net.n_buses(),
        flow,
        lambda2: spectral.lambda2,
        lambda2_l: spectral.lambda2_l,
        sector: bounds.as_ref().ok().copied(),
        assumption1_error: bounds.as_ref().err().map(|e| e.to_string()),
        assumption2,
        rate_c: rates.c,
        rate_c_lim: rates.c_lim,
        steady_residual,
        samples: traj.len(),
        range_excursions: traj.range_excursions,
        sup_err: err.iter().copied().fold(0.0, f64::max),
        sup_coi_gap: traj.omega_b.iter().zip(&traj.omega_coi).map(|(b, c)| (b - c).abs()).fold(0.0, f64::max),
        sup_coi: traj.omega_coi.iter().map(|c| c.abs()).fold(0.0, f64::max),
        stages,
        certificates,
        files: Vec::new(),
        timings: Timings { simulate_s, certify_s, ..Default::default() },
    };
    if let Some(dir) = out {
        let t_write = Instant::now();
        report.files = output::write_run(dir, &report, &traj).map_err(wrap)?;
        report.timings.write_s = t_write.elapsed().as_secs_f64();
    }
    report.timings.total_s = total.elapsed().as_secs_f64();
    if let Some(dir) = out {
        output::write_report_json(dir, &report).map_err(wrap)?;
    }
    Ok((report, traj))
}

fn certify_stage(
    s: &Scenario,
    traj: &Trajectory,
    bounds: SectorBounds,
    kind: CertificateKind,
    rho: Option<f64>,
    k: usize,
) -> CertificateVerdict {
    let single = s.profile.stages().len() == 1;
    let restarted;
    let (profile, stage_traj) = if single {
        (&s.profile, traj)
    } else {
        match restart_at_stage(traj, &s.responses, &s.profile, k, &s.file.integrator) {
            Ok(r) => {
                restarted = r;
                (&restarted.0, &restarted.1)
            }
            Err(e) => return CertificateVerdict::failed(kind, k, rho, e.into()),
        }
    };
    let ctx = match CertifyContext::with_bounds(&s.network, &s.responses, profile, bounds) {
        Ok(c) => c,
        Err(e) => return CertificateVerdict::failed(kind, k, rho, e),
    };
    let init = (stage_traj.theta_at(0), stage_traj.omega_at(0));
    let flow_k = match s.file.flow {
        FlowModel::Sinusoidal { k } => Some(k),
        FlowModel::Linear => None,
    };
    let wrong_flow = |want: &str| {
        CertifyError::AssumptionMismatch(format!("{} needs {want} flow, scenario uses {:?}", kind.as_str(), s.file.flow))
    };
    let mut used_rho = rho;
    let built = match (kind, flow_k) {
        (CertificateKind::T1, None) => theorem1_certificate(&ctx, Some(init)),
        (CertificateKind::P1, None) => prop1_certificate(&ctx),
        (CertificateKind::T2 | CertificateKind::P2, Some(fk)) => {
            let r = match rho {
                Some(r) => Ok(r),
                None => search_rho(&ctx, fk, RhoObjective::JumpRadius, RHO_POINTS).map(|(r, _)| r),
            };
            r.and_then(|r| {
                used_rho = Some(r);
                if kind == CertificateKind::T2 {
                    theorem2_certificate(&ctx, fk, r, Some(init))
                } else {
                    prop2_certificate(&ctx, fk, r)
                }
            })
        }
        (CertificateKind::T1 | CertificateKind::P1, Some(_)) => Err(wrong_flow("linear")),
        (CertificateKind::T2 | CertificateKind::P2, None) => Err(wrong_flow("sinusoidal")),
    };
    let cert = match built {
        Ok(c) => c,
        Err(e) => return CertificateVerdict::failed(kind, k, used_rho, e),
    };
    match verify_bound(stage_traj, &cert) {
        Ok(v) => CertificateVerdict {
            kind,
            stage: k,
            rho: used_rho,
            error_kind: None,
            error: None,
            certificate: Some(cert),
            verification: Some(v),
        },
        Err(e) => {
            let mut out = CertificateVerdict::failed(kind, k, used_rho, e);
            out.certificate = Some(cert);
            out
        }
    }
}

fn stage_summary(traj: &Trajectory, err: &[f64], k: usize) -> StageSummary {
    let range = traj.stage_range(k);
    let e = &err[range.clone()];
    let t = &traj.times[range];
    StageSummary {
        index: k,
        start: t[0],
        end: *t.last().unwrap_or(&t[0]),
        sup_err: e.iter().copied().fold(0.0, f64::max),
        err_at_end: *e.last().unwrap_or(&0.0),
        decay: fit_decay(t, e),
    }
}

/// Fits the exponential regime of one stage.
///
/// The window opens at the error peak that follows the stage start and closes
/// at the first sample below three times the plateau, i.e. the largest error
/// over the final fifth of the stage.
pub fn fit_decay(times: &[f64], err: &[f64]) -> Option<DecayFit> {
    if times.len() < 3 {
        return None;
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let tail_from = t1 - 0.2 * (t1 - t0);
    let plateau = times.iter().zip(err).filter(|(t, _)| **t >= tail_from).map(|(_, e)| *e).fold(0.0, f64::max);
    let peak = err.iter().enumerate().fold(0, |best, (j, &e)| if e > err[best] { j } else { best });
    let end = (peak..err.len()).find(|&j| err[j] < 3.0 * plateau).unwrap_or(err.len() - 1);
    let pts: Vec<(f64, f64)> =
        (peak..=end).filter(|&j| err[j] > 0.0).map(|j| (times[j], err[j].ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(DecayFit { rate: -sxy / sxx, t_start: times[peak], t_end: times[end], samples: pts.len(), plateau })
}
