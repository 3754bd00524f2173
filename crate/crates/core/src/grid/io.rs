//! Network files.
//!
//! Two formats are accepted:
//!
//! * JSON: `{"buses": [{"id": 1, "M": 2.0}, ...], "lines": [{"from": 1, "to": 2, "B": 1.5}, ...]}`
//!   with an optional `"baseline": true` marking the sensitivities as `B⁰`.
//!   Bus ids are arbitrary integers and are mapped to indices in file order.
//! * A MATPOWER subset: the `mpc.bus`, `mpc.branch` and (optionally) `mpc.gen`
//!   matrices of a `.m` case file. Each in-service branch contributes
//!   `B = 1/x` (unit voltage magnitudes, lossless lines); parallel branches are
//!   merged by adding their sensitivities. Resistance, line charging, tap
//!   ratios, phase shifts and bus shunts are ignored with a warning. MATPOWER
//!   carries no inertia, so every bus receives `default_inertia`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridError, PowerNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: i64,
    #[serde(rename = "M")]
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub from: i64,
    pub to: i64,
    #[serde(rename = "B")]
    pub sensitivity: f64,
}

/// Serialized form of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub buses: Vec<BusSpec>,
    pub lines: Vec<LineSpec>,
    #[serde(default)]
    pub baseline: bool,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<PowerNetwork, GridError> {
        let mut index = HashMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(GridError::Parse(format!("bus id {} appears twice", b.id)));
            }
        }
        let lookup = |id: i64| index.get(&id).copied().ok_or(GridError::UnknownBus(id.max(0) as usize));
        let mut lines = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            lines.push((lookup(l.from)?, lookup(l.to)?, l.sensitivity));
        }
        let net = PowerNetwork::new(self.buses.iter().map(|b| b.inertia).collect(), lines)?;
        Ok(if self.baseline { net.into_baseline() } else { net })
    }

    pub fn from_network(net: &PowerNetwork) -> Self {
        Self {
            buses: net.inertia().iter().enumerate().map(|(i, &m)| BusSpec { id: i as i64 + 1, inertia: m }).collect(),
            lines: net
                .lines()
                .iter()
                .map(|l| LineSpec { from: l.from as i64 + 1, to: l.to as i64 + 1, sensitivity: l.sensitivity })
                .collect(),
            baseline: net.is_baseline(),
        }
    }
}

/// A network read from disk together with what the loader had to drop.
#[derive(Debug, Clone)]
pub struct MatpowerCase {
    pub network: PowerNetwork,
    /// Original bus numbers, indexed like the network's buses.
    pub bus_ids: Vec<i64>,
    /// Indices of buses with at least one in-service generator.
    pub generator_buses: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Reads a JSON network file, or a MATPOWER case when the extension is `.m`.
pub fn load_network_file(path: &Path, default_inertia: f64) -> Result<MatpowerCase, GridError> {
    let text = std::fs::read_to_string(path).map_err(|e| GridError::Parse(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "m") {
        return parse_matpower(&text, default_inertia);
    }
    let spec: NetworkSpec = serde_json::from_str(&text)
        .map_err(|e| GridError::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let network = spec.build()?;
    let n = network.n_buses();
    Ok(MatpowerCase {
        network,
        bus_ids: spec.buses.iter().map(|b| b.id).collect(),
        generator_buses: (0..n).collect(),
        warnings: Vec::new(),
    })
}

fn matrix_block(text: &str, name: &str) -> Result<Option<Vec<Vec<f64>>>, GridError> {
    let key = format!("mpc.{name}");
    let Some(start) = text.find(&key).filter(|&s| {
        text[s + key.len()..].trim_start().starts_with('=')
    }) else {
        return Ok(None);
    };
    let rest = &text[start..];
    let open = rest.find('[').ok_or_else(|| GridError::Parse(format!("{key}: missing '['")))?;
    let close = rest[open..].find(']').ok_or_else(|| GridError::Parse(format!("{key}: missing ']'")))? + open;
    let body = &rest[open + 1..close];
    let mut rows = Vec::new();
    for raw in body.split(['\n', ';']) {
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| GridError::Parse(format!("{key}: bad number '{t}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Some(rows))
}

/// Parses the MATPOWER subset described in the module docs.
pub fn parse_matpower(text: &str, default_inertia: f64) -> Result<MatpowerCase, GridError> {
    let bus = matrix_block(text, "bus")?.ok_or_else(|| GridError::Parse("no mpc.bus matrix".into()))?;
    let branch = matrix_block(text, "branch")?.ok_or_else(|| GridError::Parse("no mpc.branch matrix".into()))?;
    let gen = matrix_block(text, "gen")?.unwrap_or_default();
    let mut warnings = Vec::new();

    let mut index = HashMap::new();
    let mut bus_ids = Vec::new();
    let mut shunts = 0usize;
    for (r, row) in bus.iter().enumerate() {
        if row.len() < 2 {
            return Err(GridError::Parse(format!("mpc.bus row {} has {} columns", r + 1, row.len())));
        }
        let id = row[0] as i64;
        if index.insert(id, bus_ids.len()).is_some() {
            return Err(GridError::Parse(format!("mpc.bus: duplicate bus {id}")));
        }
        bus_ids.push(id);
        if row.len() > 5 && (row[4] != 0.0 || row[5] != 0.0) {
            shunts += 1;
        }
    }
    if shunts > 0 {
        warnings.push(format!("ignored shunt admittance at {shunts} buses"));
    }

    let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order = Vec::new();
    let (mut resistive, mut charging, mut taps, mut out_of_service, mut parallel) = (0, 0, 0, 0, 0);
    for (r, row) in branch.iter().enumerate() {
        if row.len() < 4 {
            return Err(GridError::Parse(format!("mpc.branch row {} has {} columns", r + 1, row.len())));
        }
        if row.len() > 10 && row[10] == 0.0 {
            out_of_service += 1;
            continue;
        }
        let find = |v: f64| index.get(&(v as i64)).copied().ok_or(GridError::UnknownBus(v.max(0.0) as usize));
        let (a, b) = (find(row[0])?, find(row[1])?);
        let x = row[3];
        if !(x.abs() > 0.0) {
            return Err(GridError::Parse(format!("mpc.branch row {}: zero reactance", r + 1)));
        }
        if row[2] != 0.0 {
            resistive += 1;
        }
        if row.len() > 4 && row[4] != 0.0 {
            charging += 1;
        }
        if (row.len() > 8 && row[8] != 0.0 && row[8] != 1.0) || (row.len() > 9 && row[9] != 0.0) {
            taps += 1;
        }
        let key = (a.min(b), a.max(b));
        match merged.get_mut(&key) {
            Some(w) => {
                *w += 1.0 / x.abs();
                parallel += 1;
            }
            None => {
                merged.insert(key, 1.0 / x.abs());
                order.push(key);
            }
        }
    }
    for (count, what) in [
        (resistive, "ignored series resistance on"),
        (charging, "ignored line charging on"),
        (taps, "ignored tap ratio or phase shift on"),
        (out_of_service, "skipped out-of-service"),
        (parallel, "merged parallel"),
    ] {
        if count > 0 {
            warnings.push(format!("{what} {count} branches"));
        }
    }

    let mut generator_buses: Vec<usize> = gen
        .iter()
        .filter(|row| row.len() <= 7 || row[7] > 0.0)
        .filter_map(|row| row.first().and_then(|&b| index.get(&(b as i64)).copied()))
        .collect();
    generator_buses.sort_unstable();
    generator_buses.dedup();

    for w in &warnings {
        log::warn!("{w}");
    }
    let network = PowerNetwork::new(vec![default_inertia; bus_ids.len()], order.iter().map(|k| (k.0, k.1, merged[k])))?;
    Ok(MatpowerCase { network, bus_ids, generator_buses, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE: &str = r#"
function mpc = case4
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
	5	2	0	0	0	19	1	1	0	345	1	1.1	0.9;
	7	1	100	35	0	0	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10;
	5	163	0	300	-300	1	100	1	300	10;
];
mpc.branch = [
	1	2	0	0.5	0	250	250	250	0	0	1	-360	360;
	2	5	0.01	0.25	0.1	250	250	250	0	0	1	-360	360;
	5	7	0	0.2	0	250	250	250	0	0	1	-360	360;
	5	7	0	0.2	0	250	250	250	0	0	1	-360	360;
	1	7	0	1.0	0	250	250	250	0	0	0	-360	360;
];
"#;

    #[test]
    fn matpower_subset() {
        let case = parse_matpower(CASE, 2.0).unwrap();
        let net = &case.network;
        assert_eq!(net.n_buses(), 4);
        assert_eq!(net.n_lines(), 3);
        assert_eq!(case.bus_ids, vec![1, 2, 5, 7]);
        assert_eq!(case.generator_buses, vec![0, 2]);
        let w: Vec<f64> = net.lines().iter().map(|l| l.sensitivity).collect();
        assert_eq!(w, vec![2.0, 4.0, 10.0]);
        assert!(net.inertia().iter().all(|&m| m == 2.0));
        assert_eq!(case.warnings.len(), 5, "{:?}", case.warnings);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"buses":[{"id":10,"M":1.0},{"id":20,"M":2.5}],"lines":[{"from":20,"to":10,"B":3.0}]}"#;
        let spec: NetworkSpec = serde_json::from_str(text).unwrap();
        let net = spec.build().unwrap();
        assert_eq!(net.inertia(), &[1.0, 2.5]);
        assert_eq!(net.lines()[0].sensitivity, 3.0);
        let back = NetworkSpec::from_network(&net).build().unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn json_unknown_bus() {
        let text = r#"{"buses":[{"id":1,"M":1.0},{"id":2,"M":1.0}],"lines":[{"from":1,"to":7,"B":1.0}]}"#;
        let spec: NetworkSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.build().unwrap_err(), GridError::UnknownBus(7));
    }
}
