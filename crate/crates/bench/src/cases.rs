//! The three-case experiment on a 35-generator grid.
//!
//! Case 1 is the baseline two-stage disturbance; Case 2 halves the jumps,
//! doubles the sinusoid amplitudes and quarters their frequency; Case 3 keeps
//! the baseline disturbance and multiplies every line sensitivity by six. All
//! cases use sinusoidal flows and `f_i(ω) = −D_iω − 0.2D_i tanh ω`.

use std::path::{Path, PathBuf};

use coherency::grid::{load_network_file, random_network, NetworkSpec, RandomNetworkSpec};
use coherency::nodal::ResponseSpec;
use coherency::parallel::{self, Execution};
use coherency::signals::{TwoStageParameters, TwoStageTemplate};
use coherency::{CertificateKind, FlowModel, IntegratorConfig, PowerNetwork};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::run::{run_scenario_full, sup_err_after, RunError, RunReport};
use crate::scenario::{
    CertificateRequest, DisturbanceDecl, InitialState, NetworkSource, ResponseDecl, Scenario, ScenarioError,
    ScenarioFile,
};

pub const SWITCH_TIME: f64 = 80.0;
pub const CASE3_SCALE: f64 = 6.0;
/// Largest coherence error accepted at the end of the first stage.
pub const SETTLED_ERR: f64 = 1e-5;
/// Accepted ratio `sup|ω_b − ω_COI| / sup|ω_COI|` in Case 1.
pub const COI_RATIO: f64 = 0.2;

/// Where the grid comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSource {
    /// Random 35-bus network; see [`SurrogateParams`].
    Surrogate,
    /// A network file (JSON or MATPOWER), Kron-reduced onto its generator buses.
    File(PathBuf),
}

/// Synthetic stand-in grid: a random connected network of `buses` buses and
/// `lines` lines, Kron-reduced onto `generators` randomly chosen buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub buses: usize,
    pub lines: usize,
    pub generators: usize,
    pub inertia: (f64, f64),
    pub sensitivity: (f64, f64),
    /// `D_i / M_i`.
    pub damping_ratio: (f64, f64),
    /// Inertia given to MATPOWER buses, which carry none.
    pub default_inertia: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            buses: 118,
            lines: 206,
            generators: 35,
            inertia: (2.0, 10.0),
            sensitivity: (20.0, 60.0),
            damping_ratio: (0.5, 1.5),
            default_inertia: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub grid: GridSource,
    pub seed: u64,
    pub surrogate: SurrogateParams,
    pub template: TwoStageTemplate,
    pub t_end: f64,
    pub sample_dt: f64,
    /// Initial angles and frequencies are drawn from `U(−a, a)`.
    pub initial_amplitude: f64,
    pub execution: Execution,
    pub fixed_step: bool,
    pub out: Option<PathBuf>,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            grid: GridSource::Surrogate,
            seed: 2024,
            surrogate: SurrogateParams::default(),
            template: TwoStageTemplate::default(),
            t_end: 140.0,
            sample_dt: 0.05,
            initial_amplitude: 1e-3,
            execution: Execution::Parallel,
            fixed_step: false,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Comparison {
    fn less(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, pass: lhs < rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSuite {
    /// `surrogate(seed=…)` or the path of the grid file.
    pub source: String,
    pub reports: Vec<RunReport>,
    /// Per case: `sup_{t > 80} err`.
    pub sup_err_after_switch: Vec<f64>,
    /// Per case: `err` at the switch time.
    pub err_at_switch: Vec<f64>,
    pub comparisons: Vec<Comparison>,
}

impl CaseSuite {
    pub fn all_pass(&self) -> bool {
        self.comparisons.iter().all(|c| c.pass)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    Grid(String),
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// The grid with per-bus damping, and a label naming its source.
pub fn case_grid(cfg: &CaseConfig) -> Result<(PowerNetwork, Vec<f64>, String), CaseError> {
    let p = &cfg.surrogate;
    let (net, label) = match &cfg.grid {
        GridSource::Surrogate => {
            if p.generators > p.buses || p.lines + 1 < p.buses {
                return Err(CaseError::Grid(format!(
                    "surrogate needs generators <= buses <= lines + 1, got {} / {} / {}",
                    p.generators, p.buses, p.lines
                )));
            }
            let spec = RandomNetworkSpec {
                n: p.buses,
                extra_edges: p.lines + 1 - p.buses,
                inertia: p.inertia,
                sensitivity: p.sensitivity,
                seed: cfg.seed,
            };
            let full = random_network(&spec).map_err(|e| CaseError::Grid(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e6e_0001);
            let mut order: Vec<usize> = (0..p.buses).collect();
            order.shuffle(&mut rng);
            let net = full.kron_reduce(&order[..p.generators]).map_err(|e| CaseError::Grid(e.to_string()))?;
            (net, format!("surrogate(buses={}, generators={}, seed={})", p.buses, p.generators, cfg.seed))
        }
        GridSource::File(path) => {
            if !path.exists() {
                return Err(ScenarioError::MissingFile(path.clone()).into());
            }
            let case = load_network_file(path, p.default_inertia).map_err(|e| CaseError::Grid(e.to_string()))?;
            let net = case.network.kron_reduce(&case.generator_buses).map_err(|e| CaseError::Grid(e.to_string()))?;
            (net, path.display().to_string())
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da3b);
    let (lo, hi) = p.damping_ratio;
    let damping = net.inertia().iter().map(|m| m * if hi > lo { rng.random_range(lo..hi) } else { lo }).collect();
    Ok((net, damping, label))
}

fn case_scenario(
    name: &str,
    net: &PowerNetwork,
    damping: &[f64],
    params: &TwoStageParameters,
    cfg: &CaseConfig,
) -> Result<Scenario, ScenarioError> {
    let mut integrator = IntegratorConfig::with_horizon(cfg.t_end, cfg.sample_dt);
    if cfg.fixed_step {
        integrator.method = coherency::Method::FixedRk4;
    }
    let file = ScenarioFile {
        name: name.to_string(),
        seed: cfg.seed,
        network: NetworkSource::Inline(NetworkSpec::from_network(net)),
        responses: ResponseDecl {
            all: None,
            buses: damping.iter().map(|&d| ResponseSpec::Saturated { d, s: 0.2 }).collect(),
            per_inertia: false,
        },
        disturbance: DisturbanceDecl::TwoStageParameters(params.clone()),
        initial: InitialState::Uniform { amplitude: cfg.initial_amplitude, seed: Some(cfg.seed) },
        flow: FlowModel::Sinusoidal { k: 1.0 },
        integrator,
        certificates: vec![CertificateRequest { kind: CertificateKind::T2, rho: None, stages: Vec::new() }],
        sector_range: (-2.0, 2.0),
        execution: cfg.execution,
        out: cfg.out.as_ref().map(|o| o.join(name)),
    };
    Scenario::resolve(file, Path::new("."))
}

/// Runs the three cases and compares them.
pub fn builtin_cases(cfg: &CaseConfig) -> Result<CaseSuite, CaseError> {
    let (net, damping, source) = case_grid(cfg)?;
    let base = cfg.template.sample(net.n_buses(), cfg.seed);
    let strong = net.scale_lines(CASE3_SCALE).map_err(|e| CaseError::Grid(e.to_string()))?;
    let scenarios = vec![
        case_scenario("case1", &net, &damping, &base, cfg)?,
        case_scenario("case2", &net, &damping, &base.case2(), cfg)?,
        case_scenario("case3", &strong, &damping, &base, cfg)?,
    ];
    let runs = parallel::map(cfg.execution, &scenarios, |s| run_scenario_full(s, s.file.out.as_deref()));
    let mut reports = Vec::with_capacity(3);
    let mut after = Vec::with_capacity(3);
    let mut at_switch = Vec::with_capacity(3);
    for run in runs {
        let (report, traj) = run?;
        after.push(sup_err_after(&traj, base.switch_time));
        let j = traj.times.iter().position(|&t| t >= base.switch_time).unwrap_or(traj.len() - 1);
        at_switch.push(traj.err_at(j));
        reports.push(report);
    }
    let decay = |r: &RunReport| r.stage(0).and_then(|s| s.decay.as_ref()).map_or(f64::NAN, |d| d.rate);
    let comparisons = vec![
        Comparison::less("case2_sup_err_after_switch_below_case1", after[1], after[0]),
        Comparison::less("case1_stage1_decay_below_case3", decay(&reports[0]), decay(&reports[2])),
        Comparison::less("case3_sup_err_after_switch_below_case1", after[2], after[0]),
        Comparison::less("case1_blended_tracks_coi", reports[0].sup_coi_gap, COI_RATIO * reports[0].sup_coi),
        Comparison::less("case1_settled_at_switch", at_switch[0], SETTLED_ERR),
    ];
    let suite = CaseSuite { source, reports, sup_err_after_switch: after, err_at_switch: at_switch, comparisons };
    if let Some(dir) = &cfg.out {
        let path = dir.join("cases.json");
        let text = serde_json::to_string_pretty(&suite).map_err(|e| CaseError::Grid(e.to_string()))?;
        std::fs::create_dir_all(dir).map_err(|source| CaseError::Io { path: dir.clone(), source })?;
        std::fs::write(&path, text).map_err(|source| CaseError::Io { path, source })?;
    }
    Ok(suite)
}
