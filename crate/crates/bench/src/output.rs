//! Files written per run: trajectory CSV, certificate documents, CSV rows and
//! the JSON report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use coherency::engine::{write_trajectory_csv, CsvOptions};
use coherency::Trajectory;
use serde::{Deserialize, Serialize};

use crate::run::{CertificateVerdict, RunFailure, RunReport};

/// One certificate outcome, flattened for aggregation across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub scenario: String,
    /// Swept parameter and its value; empty for plain runs.
    pub param: String,
    pub value: Option<f64>,
    pub kind: String,
    pub stage: usize,
    pub rho: Option<f64>,
    pub lambda2: f64,
    pub mu: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "C")]
    pub rate_c: Option<f64>,
    pub jump: Option<f64>,
    pub rate: Option<f64>,
    pub transient: Option<f64>,
    pub floor: Option<f64>,
    pub limit: Option<f64>,
    pub holds: bool,
    pub worst_ratio: Option<f64>,
    pub worst_margin: Option<f64>,
    pub stage_sup_err: Option<f64>,
    pub error_kind: Option<String>,
}

impl CertificateRow {
    pub fn new(report: &RunReport, v: &CertificateVerdict, param: &str, value: Option<f64>) -> Self {
        let c = v.certificate.as_ref();
        let ver = v.verification.as_ref();
        Self {
            scenario: report.scenario.clone(),
            param: param.to_string(),
            value,
            kind: v.kind.as_str().to_string(),
            stage: v.stage,
            rho: v.rho,
            lambda2: report.lambda2,
            mu: report.sector.map(|s| s.mu),
            l: report.sector.map(|s| s.l),
            rate_c: c.map(|c| c.inputs.rate_sup),
            jump: c.map(|c| c.inputs.jump),
            rate: c.map(|c| c.rate),
            transient: c.and_then(|c| c.transient.or(ver.and_then(|v| v.fitted_alpha))),
            floor: c.map(|c| c.floor),
            limit: c.map(|c| c.limit),
            holds: v.holds(),
            worst_ratio: ver.map(|v| v.worst_ratio),
            worst_margin: ver.map(|v| v.worst_margin),
            stage_sup_err: report.stage(v.stage).map(|s| s.sup_err),
            error_kind: v.error_kind.clone(),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunFailure + '_ {
    move |source| RunFailure::Io { path: path.to_path_buf(), source }
}

pub fn write_rows(path: &Path, rows: &[CertificateRow]) -> Result<(), RunFailure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunFailure::Output(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| RunFailure::Output(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows(path: &Path) -> Result<Vec<CertificateRow>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Human-readable certificate document: every constant with its formula and
/// value, the inputs, the checks and the verification verdict.
pub fn certificate_document(v: &CertificateVerdict) -> String {
    let mut doc = toml::Table::new();
    doc.insert("kind".into(), v.kind.as_str().into());
    doc.insert("stage".into(), (v.stage as i64).into());
    if let Some(r) = v.rho {
        doc.insert("rho".into(), r.into());
    }
    let mut verdict = toml::Table::new();
    verdict.insert("holds".into(), v.holds().into());
    if let Some(e) = &v.error {
        verdict.insert("error".into(), e.clone().into());
    }
    if let Some(r) = &v.verification {
        verdict.insert("worst_ratio".into(), r.worst_ratio.into());
        verdict.insert("worst_margin".into(), r.worst_margin.into());
        verdict.insert("samples".into(), (r.samples as i64).into());
        verdict.insert("violations".into(), (r.violation_times.len() as i64).into());
        if let Some(a) = r.fitted_alpha {
            verdict.insert("fitted_alpha".into(), a.into());
        }
    }
    doc.insert("verdict".into(), verdict.into());
    if let Some(c) = &v.certificate {
        let mut bound = toml::Table::new();
        bound.insert("rate".into(), c.rate.into());
        bound.insert("floor".into(), c.floor.into());
        bound.insert("limit".into(), c.limit.into());
        if let Some(a) = c.transient {
            bound.insert("transient".into(), a.into());
        }
        doc.insert("bound".into(), bound.into());
        let mut constants = toml::Table::new();
        for (name, value) in &c.constants {
            let mut entry = toml::Table::new();
            entry.insert("value".into(), (*value).into());
            if let Some(f) = c.formulas.get(name) {
                entry.insert("formula".into(), f.clone().into());
            }
            constants.insert(name.clone(), entry.into());
        }
        doc.insert("constants".into(), constants.into());
        if let Ok(toml::Value::Table(inputs)) = toml::Value::try_from(&c.inputs) {
            doc.insert("inputs".into(), inputs.into());
        }
        let checks: Vec<toml::Value> = c
            .checks
            .iter()
            .map(|ch| {
                let mut t = toml::Table::new();
                t.insert("name".into(), ch.name.clone().into());
                t.insert("pass".into(), ch.pass.into());
                t.insert("detail".into(), ch.detail.clone().into());
                t.into()
            })
            .collect();
        doc.insert("checks".into(), checks.into());
    }
    toml::to_string(&doc).unwrap_or_default()
}

/// Writes the trajectory, certificate documents and rows into `dir`.
pub fn write_run(dir: &Path, report: &RunReport, traj: &Trajectory) -> Result<Vec<PathBuf>, RunFailure> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    let path = dir.join("trajectory.csv");
    let f = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(f);
    write_trajectory_csv(traj, &mut w, CsvOptions { angles: true }).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    files.push(path);
    for v in &report.certificates {
        let path = dir.join(format!("certificate_{}_stage{}.toml", v.kind.as_str(), v.stage));
        fs::write(&path, certificate_document(v)).map_err(io_err(&path))?;
        files.push(path);
    }
    if !report.certificates.is_empty() {
        let path = dir.join("certificates.csv");
        let rows: Vec<_> = report.certificates.iter().map(|v| CertificateRow::new(report, v, "", None)).collect();
        write_rows(&path, &rows)?;
        files.push(path);
    }
    files.push(dir.join("report.json"));
    Ok(files)
}

pub fn write_report_json(dir: &Path, report: &RunReport) -> Result<(), RunFailure> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(|e| RunFailure::Output(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))
}
