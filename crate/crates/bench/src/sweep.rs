//! One-parameter sweeps over a base scenario.

use std::path::Path;
use std::str::FromStr;

use coherency::parallel;
use coherency::FlowModel;
use serde::{Deserialize, Serialize};

use crate::output::{write_rows, CertificateRow};
use crate::run::{run_scenario_full, RunFailure, RunReport};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Target algebraic connectivity, reached by scaling every line.
    Lambda2,
    /// Scale of the sinusoidal flow.
    K,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lambda2 => "lambda2",
            Self::K => "k",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda2" => Ok(Self::Lambda2),
            "k" => Ok(Self::K),
            other => Err(format!("unknown sweep parameter `{other}` (expected lambda2 or k)")),
        }
    }
}

/// Outcome of one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Result<RunReport, String>,
}

/// Copy of `base` with `param` set to `value`.
pub fn sweep_scenario(base: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, ScenarioError> {
    let mut s = match param {
        SweepParam::Lambda2 => {
            let now = base
                .network
                .spectral_summary()
                .map_err(|e| ScenarioError::SchemaViolation(e.to_string()))?
                .lambda2;
            base.with_scaled_lines(value / now)?
        }
        SweepParam::K => base.with_flow(FlowModel::Sinusoidal { k: value }),
    };
    s.file.name = format!("{}[{}={value}]", base.name(), param.as_str());
    Ok(s)
}

/// Runs every point concurrently; point `i` writes into `out/point_<i>`.
pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64], out: Option<&Path>) -> Vec<SweepPoint> {
    parallel::map_range(base.file.execution, values.len(), |i| {
        let value = values[i];
        let dir = out.map(|o| o.join(format!("point_{i}")));
        let report = sweep_scenario(base, param, value)
            .map_err(|e| e.to_string())
            .and_then(|s| run_scenario_full(&s, dir.as_deref()).map(|(r, _)| r).map_err(|e| e.to_string()));
        SweepPoint { value, report }
    })
}

/// One row per (point, certificate); failed points yield one row per
/// requested certificate carrying the failure.
pub fn sweep_rows(base: &Scenario, param: SweepParam, points: &[SweepPoint]) -> Vec<CertificateRow> {
    let mut rows = Vec::new();
    for p in points {
        match &p.report {
            Ok(r) => rows.extend(r.certificates.iter().map(|v| CertificateRow::new(r, v, param.as_str(), Some(p.value)))),
            Err(e) => {
                log::error!("{} = {}: {e}", param.as_str(), p.value);
                rows.extend(base.file.certificates.iter().map(|req| CertificateRow {
                    scenario: format!("{}[{}={}]", base.name(), param.as_str(), p.value),
                    param: param.as_str().to_string(),
                    value: Some(p.value),
                    kind: req.kind.as_str().to_string(),
                    stage: req.stages.first().copied().unwrap_or(0),
                    rho: req.rho,
                    lambda2: f64::NAN,
                    mu: None,
                    l: None,
                    rate_c: None,
                    jump: None,
                    rate: None,
                    transient: None,
                    floor: None,
                    limit: None,
                    holds: false,
                    worst_ratio: None,
                    worst_margin: None,
                    stage_sup_err: None,
                    error_kind: Some("RunFailed".into()),
                }));
            }
        }
    }
    rows
}

pub fn write_sweep_csv(path: &Path, rows: &[CertificateRow]) -> Result<(), RunFailure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| RunFailure::Io { path: dir.to_path_buf(), source })?;
    }
    write_rows(path, rows)
}
