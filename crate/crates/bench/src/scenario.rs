//! Scenario files.
//!
//! A scenario is a TOML (or, with a `.json` extension, JSON) document:
//!
//! ```toml
//! name = "two-bus"
//! seed = 7
//!
//! [network]
//! source = "inline"            # or "file" (path, default_inertia, kron) or "random" (N, extra_edges, seed)
//! buses = [{ id = 1, M = 1.0 }, { id = 2, M = 1.0 }]
//! lines = [{ from = 1, to = 2, B = 1.0 }]
//!
//! [responses]
//! all = { kind = "linear", D = 1.0 }   # or `buses = [...]`, one entry per bus
//! per_inertia = false                  # multiply bus i's response by M_i
//!
//! [disturbance]
//! type = "stages"                      # or "two_stage" (template + seed) or "two_stage_parameters"
//! stages = [{ all = [{ type = "constant", a = 0.1 }] }]
//!
//! [initial]
//! kind = "steady"                      # or "zero", "uniform" (amplitude, seed), "given" (theta, omega)
//!
//! [flow]
//! model = "linear"                     # or "sinusoidal" with k
//!
//! [integrator]
//! t_end = 20.0
//!
//! [[certificates]]
//! kind = "T1"
//! ```

use std::path::{Path, PathBuf};

use coherency::certify::CertificateKind;
use coherency::grid::{load_network_file, random_network, NetworkSpec, RandomNetworkSpec};
use coherency::nodal::ResponseSpec;
use coherency::parallel::Execution;
use coherency::signals::{StageSpec, TwoStageParameters, TwoStageTemplate};
use coherency::{DisturbanceProfile, FlowModel, IntegratorConfig, PowerNetwork, ResponseFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}:{column}: {message}")]
    ParseError { path: String, line: usize, column: usize, message: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("could not read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum NetworkSource {
    Inline(NetworkSpec),
    File {
        path: PathBuf,
        #[serde(default = "one")]
        default_inertia: f64,
        /// Kron-reduce onto generator buses.
        #[serde(default)]
        kron: bool,
    },
    Random(RandomNetworkSpec),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ResponseDecl {
    #[serde(default)]
    pub all: Option<ResponseSpec>,
    #[serde(default)]
    pub buses: Vec<ResponseSpec>,
    #[serde(default)]
    pub per_inertia: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisturbanceDecl {
    Stages {
        stages: Vec<StageSpec>,
        /// `ξ(0₋)`; defaults to the first stage's value at zero.
        #[serde(default)]
        initial: Option<Vec<f64>>,
        /// Multiply bus i's disturbance by `M_i`.
        #[serde(default)]
        per_inertia: bool,
    },
    TwoStage {
        #[serde(default)]
        template: TwoStageTemplate,
        /// Falls back to the scenario seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    TwoStageParameters(TwoStageParameters),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Equilibrium for `ξ(0₋)` under the scenario's flow model.
    #[default]
    Steady,
    Zero,
    /// Angles and frequencies drawn from `U(−amplitude, amplitude)`.
    Uniform {
        amplitude: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Given {
        theta: Vec<f64>,
        omega: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateRequest {
    pub kind: CertificateKind,
    /// Phase-cohesiveness margin; searched when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Stages to certify; every stage when empty.
    #[serde(default)]
    pub stages: Vec<usize>,
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkSource,
    pub responses: ResponseDecl,
    pub disturbance: DisturbanceDecl,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default = "linear_flow")]
    pub flow: FlowModel,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub certificates: Vec<CertificateRequest>,
    /// Frequency interval on which the sector bounds are certified.
    #[serde(default = "default_range")]
    pub sector_range: (f64, f64),
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn linear_flow() -> FlowModel {
    FlowModel::Linear
}

fn default_range() -> (f64, f64) {
    (-2.0, 2.0)
}

/// A validated scenario with its network, responses and profile resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub network: PowerNetwork,
    /// Human-readable origin of the network.
    pub network_label: String,
    pub responses: Vec<ResponseFunction>,
    pub profile: DisturbanceProfile,
    pub theta0: Vec<f64>,
    pub omega0: Vec<f64>,
    /// True when the initial state still has to be solved for.
    pub steady_init: bool,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.to_path_buf()));
    }
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let file = parse_scenario(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::resolve(file, base)
}

/// Parses without resolving; `path` picks the format and labels errors.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let label = path.display().to_string();
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => {
                ScenarioError::SchemaViolation(format!("{label}:{}:{}: {e}", e.line(), e.column()))
            }
            _ => ScenarioError::ParseError { path: label, line: e.line(), column: e.column(), message: e.to_string() },
        });
    }
    if let Err(e) = text.parse::<toml::Table>() {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        return Err(ScenarioError::ParseError { path: label, line, column, message: e.message().to_string() });
    }
    toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| line_col(text, s.start));
        match at {
            Some((l, c)) => ScenarioError::SchemaViolation(format!("{label}:{l}:{c}: {}", e.message())),
            None => ScenarioError::SchemaViolation(format!("{label}: {}", e.message())),
        }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, column)
}

fn schema<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> ScenarioError + '_ {
    move |e| ScenarioError::SchemaViolation(format!("{what}: {e}"))
}

impl Scenario {
    /// Builds every derived object and checks cross-references. Relative file
    /// paths are taken relative to `base`.
    pub fn resolve(file: ScenarioFile, base: &Path) -> Result<Self, ScenarioError> {
        let (network, network_label) = match &file.network {
            NetworkSource::Inline(spec) => (spec.build().map_err(schema("network"))?, "inline".to_string()),
            NetworkSource::Random(spec) => (
                random_network(spec).map_err(schema("network"))?,
                format!("random(N={}, extra_edges={}, seed={})", spec.n, spec.extra_edges, spec.seed),
            ),
            NetworkSource::File { path, default_inertia, kron } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                if !full.exists() {
                    return Err(ScenarioError::MissingFile(full));
                }
                let case = load_network_file(&full, *default_inertia).map_err(schema("network file"))?;
                for w in &case.warnings {
                    log::warn!("{}: {w}", full.display());
                }
                let net = if *kron {
                    case.network.kron_reduce(&case.generator_buses).map_err(schema("Kron reduction"))?
                } else {
                    case.network
                };
                (net, full.display().to_string())
            }
        };
        let n = network.n_buses();
        let responses = resolve_responses(&file.responses, &network)?;
        let profile = resolve_profile(&file.disturbance, file.seed, &network)?;
        let (theta0, omega0, steady_init) = match &file.initial {
            InitialState::Steady => (vec![0.0; n], vec![0.0; n], true),
            InitialState::Zero => (vec![0.0; n], vec![0.0; n], false),
            InitialState::Uniform { amplitude, seed } => {
                use rand::{Rng, SeedableRng};
                if !(*amplitude >= 0.0) {
                    return Err(ScenarioError::SchemaViolation(format!("initial amplitude {amplitude} is negative")));
                }
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.unwrap_or(file.seed));
                let a = *amplitude;
                let mut draw = || if a > 0.0 { rng.random_range(-a..a) } else { 0.0 };
                let theta: Vec<f64> = (0..n).map(|_| draw()).collect();
                let omega: Vec<f64> = (0..n).map(|_| draw()).collect();
                (theta, omega, false)
            }
            InitialState::Given { theta, omega } => {
                if theta.len() != n || omega.len() != n {
                    return Err(ScenarioError::SchemaViolation(format!(
                        "initial state has {} angles and {} frequencies for {n} buses",
                        theta.len(),
                        omega.len()
                    )));
                }
                (theta.clone(), omega.clone(), false)
            }
        };
        let stages = profile.stages().len();
        for req in &file.certificates {
            if let Some(&s) = req.stages.iter().find(|&&s| s >= stages) {
                return Err(ScenarioError::SchemaViolation(format!(
                    "certificate {} refers to stage {s} of a {stages}-stage profile",
                    req.kind.as_str()
                )));
            }
        }
        let (lo, hi) = file.sector_range;
        if !(lo < hi) {
            return Err(ScenarioError::SchemaViolation(format!("empty sector range ({lo}, {hi})")));
        }
        file.integrator.validate().map_err(schema("integrator"))?;
        Ok(Self { file, network, network_label, responses, profile, theta0, omega0, steady_init })
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    /// SHA-256 over the resolved network, responses, profile and run settings.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            name: &'a str,
            seed: u64,
            network: NetworkSpec,
            responses: &'a [ResponseFunction],
            profile: &'a DisturbanceProfile,
            initial: &'a InitialState,
            theta0: &'a [f64],
            omega0: &'a [f64],
            flow: &'a FlowModel,
            integrator: &'a IntegratorConfig,
            certificates: &'a [CertificateRequest],
            sector_range: (f64, f64),
        }
        let c = Canonical {
            name: &self.file.name,
            seed: self.file.seed,
            network: NetworkSpec::from_network(&self.network),
            responses: &self.responses,
            profile: &self.profile,
            initial: &self.file.initial,
            theta0: &self.theta0,
            omega0: &self.omega0,
            flow: &self.file.flow,
            integrator: &self.file.integrator,
            certificates: &self.file.certificates,
            sector_range: self.file.sector_range,
        };
        let bytes = serde_json::to_vec(&c).expect("scenario serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with all line sensitivities multiplied by `factor`.
    pub fn with_scaled_lines(&self, factor: f64) -> Result<Self, ScenarioError> {
        let network = self.network.scale_lines(factor).map_err(schema("line scaling"))?;
        let mut file = self.file.clone();
        file.network = NetworkSource::Inline(NetworkSpec::from_network(&network));
        Ok(Self { file, network, network_label: format!("{} ×{factor}", self.network_label), ..self.clone() })
    }

    pub fn with_flow(&self, flow: FlowModel) -> Self {
        let mut out = self.clone();
        out.file.flow = flow;
        out
    }
}

fn resolve_responses(decl: &ResponseDecl, net: &PowerNetwork) -> Result<Vec<ResponseFunction>, ScenarioError> {
    let n = net.n_buses();
    let specs: Vec<&ResponseSpec> = match (&decl.all, decl.buses.is_empty()) {
        (Some(s), true) => vec![s; n],
        (None, false) if decl.buses.len() == n => decl.buses.iter().collect(),
        (None, false) => {
            return Err(ScenarioError::SchemaViolation(format!(
                "{} responses declared for {n} buses",
                decl.buses.len()
            )))
        }
        (Some(_), false) => {
            return Err(ScenarioError::SchemaViolation("responses: give either `all` or `buses`, not both".into()))
        }
        (None, true) => return Err(ScenarioError::SchemaViolation("responses: nothing declared".into())),
    };
    specs
        .into_iter()
        .zip(net.inertia())
        .map(|(s, &m)| {
            let rf = ResponseFunction::from_spec(s).map_err(schema("response"))?;
            Ok(if decl.per_inertia { rf.scaled(m) } else { rf })
        })
        .collect()
}

fn resolve_profile(decl: &DisturbanceDecl, seed: u64, net: &PowerNetwork) -> Result<DisturbanceProfile, ScenarioError> {
    let n = net.n_buses();
    match decl {
        DisturbanceDecl::Stages { stages, initial, per_inertia } => {
            let p = DisturbanceProfile::new(n, stages, initial.clone()).map_err(schema("disturbance"))?;
            Ok(if *per_inertia { p.scaled_per_bus(net.inertia()) } else { p })
        }
        DisturbanceDecl::TwoStage { template, seed: own } => {
            template.sample(n, own.unwrap_or(seed)).profile().map_err(schema("disturbance"))
        }
        DisturbanceDecl::TwoStageParameters(p) => {
            let lens = [p.a.len(), p.r.len(), p.delta.len(), p.b.len(), p.omega.len()];
            if lens.iter().any(|&l| l != n) {
                return Err(ScenarioError::SchemaViolation(format!(
                    "two-stage parameters have lengths {lens:?} for {n} buses"
                )));
            }
            p.profile().map_err(schema("disturbance"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
