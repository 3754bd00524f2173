use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridError, PowerNetwork};

/// Random connected network: a uniformly attached random tree plus
/// `extra_edges` additional distinct lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomNetworkSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub extra_edges: usize,
    #[serde(default = "default_inertia_range")]
    pub inertia: (f64, f64),
    #[serde(default = "default_sensitivity_range")]
    pub sensitivity: (f64, f64),
    pub seed: u64,
}

fn default_inertia_range() -> (f64, f64) {
    (0.5, 3.0)
}

fn default_sensitivity_range() -> (f64, f64) {
    (0.5, 2.0)
}

impl RandomNetworkSpec {
    pub fn new(n: usize, extra_edges: usize, seed: u64) -> Self {
        Self { n, extra_edges, inertia: default_inertia_range(), sensitivity: default_sensitivity_range(), seed }
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn random_network(spec: &RandomNetworkSpec) -> Result<PowerNetwork, GridError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    random_network_with(spec, &mut rng)
}

pub(crate) fn random_network_with(spec: &RandomNetworkSpec, rng: &mut ChaCha8Rng) -> Result<PowerNetwork, GridError> {
    let n = spec.n;
    if n < 2 {
        return Err(GridError::TooFewBuses { min: 2, got: n });
    }
    let inertia: Vec<f64> = (0..n).map(|_| sample(rng, spec.inertia)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = HashSet::new();
    let mut lines = Vec::new();
    for k in 1..n {
        let j = order[rng.random_range(0..k)];
        let i = order[k];
        edges.insert((i.min(j), i.max(j)));
        lines.push((i, j, sample(rng, spec.sensitivity)));
    }
    let capacity = n * (n - 1) / 2 - (n - 1);
    let extra = spec.extra_edges.min(capacity);
    while lines.len() < n - 1 + extra {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || !edges.insert((i.min(j), i.max(j))) {
            continue;
        }
        lines.push((i, j, sample(rng, spec.sensitivity)));
    }
    PowerNetwork::new(inertia, lines)
}
