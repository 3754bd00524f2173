//! Network topology and the linear algebra built on it.
//!
//! A [`PowerNetwork`] is an undirected, connected, weighted graph with one
//! inertia constant per bus. Edge weights are line sensitivities `B_ij`
//! (power per radian of angle difference). Every edge carries a fixed
//! orientation from the lower to the higher bus index; the incidence matrix
//! uses `+1` at the tail and `-1` at the head.

mod generate;
mod io;
mod kron;
mod spectral;

use std::collections::{HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{random_network, RandomNetworkSpec};
pub use io::{load_network_file, parse_matpower, MatpowerCase, NetworkSpec};
pub use spectral::SpectralSummary;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("network needs at least {min} buses, got {got}")]
    TooFewBuses { min: usize, got: usize },
    #[error("graph is disconnected: bus {0} is unreachable from bus 0")]
    DisconnectedGraph(usize),
    #[error("{what} at index {index} must be positive, got {value}")]
    NonPositiveParameter { what: &'static str, index: usize, value: f64 },
    #[error("duplicate edge between buses {0} and {1}")]
    DuplicateEdge(usize, usize),
    #[error("self-loop at bus {0}")]
    SelfLoop(usize),
    #[error("edge references unknown bus {0}")]
    UnknownBus(usize),
    #[error("symmetric eigenvalue iteration did not converge")]
    EigenSolveFailure,
    #[error("interior block of the Laplacian is singular")]
    SingularInteriorBlock,
    #[error("Kron reduction needs a non-empty set of kept buses")]
    EmptyKeepSet,
    #[error("line scaling factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("network file: {0}")]
    Parse(String),
}

/// One transmission line, oriented from `from` to `to` with `from < to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub sensitivity: f64,
}

/// Connected weighted graph with per-bus inertia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    inertia: Vec<f64>,
    lines: Vec<Line>,
    /// When true the sensitivities are baseline values `B⁰` meant to be
    /// multiplied by a uniform factor `k` in the sinusoidal flow model.
    baseline: bool,
}

impl PowerNetwork {
    /// Builds and validates a network from zero-based bus indices.
    ///
    /// Edge endpoints may be given in either order; they are stored low→high.
    pub fn new(
        inertia: Vec<f64>,
        lines: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GridError> {
        Self::build(inertia, lines, 2)
    }

    pub(crate) fn build(
        inertia: Vec<f64>,
        lines: impl IntoIterator<Item = (usize, usize, f64)>,
        min_buses: usize,
    ) -> Result<Self, GridError> {
        let n = inertia.len();
        if n < min_buses {
            return Err(GridError::TooFewBuses { min: min_buses, got: n });
        }
        for (index, &m) in inertia.iter().enumerate() {
            if !(m > 0.0 && m.is_finite()) {
                return Err(GridError::NonPositiveParameter { what: "inertia", index, value: m });
            }
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (index, (a, b, w)) in lines.into_iter().enumerate() {
            if a >= n {
                return Err(GridError::UnknownBus(a));
            }
            if b >= n {
                return Err(GridError::UnknownBus(b));
            }
            if a == b {
                return Err(GridError::SelfLoop(a));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GridError::NonPositiveParameter { what: "line sensitivity", index, value: w });
            }
            let (from, to) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((from, to)) {
                return Err(GridError::DuplicateEdge(from, to));
            }
            out.push(Line { from, to, sensitivity: w });
        }
        let net = Self { inertia, lines: out, baseline: false };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<(), GridError> {
        let n = self.n_buses();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match visited.iter().position(|v| !v) {
            Some(i) => Err(GridError::DisconnectedGraph(i)),
            None => Ok(()),
        }
    }

    /// Marks the sensitivities as baseline values `B⁰`.
    pub fn into_baseline(mut self) -> Self {
        self.baseline = true;
        self
    }

    pub fn is_baseline(&self) -> bool {
        self.baseline
    }

    pub fn n_buses(&self) -> usize {
        self.inertia.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn inertia(&self) -> &[f64] {
        &self.inertia
    }

    /// Average inertia `M_b`.
    pub fn mean_inertia(&self) -> f64 {
        self.inertia.iter().sum::<f64>() / self.n_buses() as f64
    }

    pub fn min_inertia(&self) -> f64 {
        self.inertia.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_inertia(&self) -> f64 {
        self.inertia.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Weighted Laplacian `L_B`: `(L_B)_ij = −B_ij`, rows summing to zero.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_buses();
        let mut l = DMatrix::zeros(n, n);
        for line in &self.lines {
            let (i, j, w) = (line.from, line.to, line.sensitivity);
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
        l
    }

    /// Node-edge incidence matrix `A` (N × E), `+1` at the tail, `−1` at the head.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_buses(), self.n_lines());
        for (l, line) in self.lines.iter().enumerate() {
            a[(line.from, l)] = 1.0;
            a[(line.to, l)] = -1.0;
        }
        a
    }

    pub fn edge_weights(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_lines(), self.lines.iter().map(|l| l.sensitivity))
    }

    /// `(L_B, A, Γ)` with `A Γ Aᵀ = L_B`.
    pub fn laplacian_and_incidence(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.laplacian(), self.incidence(), DMatrix::from_diagonal(&self.edge_weights()))
    }

    /// Multiplies every line sensitivity by `k`.
    pub fn scale_lines(&self, k: f64) -> Result<Self, GridError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(GridError::NonPositiveScale(k));
        }
        let mut out = self.clone();
        for l in &mut out.lines {
            l.sensitivity *= k;
        }
        Ok(out)
    }

    /// Same topology and sensitivities, different inertias.
    pub fn with_inertia(&self, inertia: Vec<f64>) -> Result<Self, GridError> {
        let lines = self.lines.iter().map(|l| (l.from, l.to, l.sensitivity));
        let mut net = Self::new(inertia, lines)?;
        net.baseline = self.baseline;
        if net.n_buses() != self.n_buses() {
            return Err(GridError::TooFewBuses { min: self.n_buses(), got: net.n_buses() });
        }
        Ok(net)
    }

    /// Stable content hash, used to match certificates with trajectories.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.inertia.len().hash(&mut h);
        for m in &self.inertia {
            m.to_bits().hash(&mut h);
        }
        for l in &self.lines {
            l.from.hash(&mut h);
            l.to.hash(&mut h);
            l.sensitivity.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// DC power-flow injections `L_B θ`.
    pub fn dc_injections(&self, theta: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_buses()];
        for l in &self.lines {
            let flow = l.sensitivity * (theta[l.from] - theta[l.to]);
            p[l.from] += flow;
            p[l.to] -= flow;
        }
        p
    }

    /// Sinusoidal injections `k Σ_j B_ij sin(θ_i − θ_j)`.
    pub fn sine_injections(&self, theta: &[f64], k: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.n_buses()];
        for l in &self.lines {
            let flow = k * l.sensitivity * (theta[l.from] - theta[l.to]).sin();
            p[l.from] += flow;
            p[l.to] -= flow;
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> PowerNetwork {
        PowerNetwork::new(vec![1.0; 3], [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn minimal_two_bus() {
        let net = PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0)]).unwrap();
        assert_eq!(net.n_lines(), 1);
        let l = net.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn path_graph_laplacian() {
        let l = path3().laplacian();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, expected);
    }

    #[test]
    fn isolated_bus_is_rejected() {
        let err = PowerNetwork::new(vec![1.0; 3], [(0, 1, 1.0)]).unwrap_err();
        assert_eq!(err, GridError::DisconnectedGraph(2));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            PowerNetwork::new(vec![1.0, -1.0], [(0, 1, 1.0)]),
            Err(GridError::NonPositiveParameter { what: "inertia", index: 1, .. })
        ));
        assert!(matches!(
            PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 0.0)]),
            Err(GridError::NonPositiveParameter { what: "line sensitivity", .. })
        ));
        assert_eq!(
            PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0), (1, 0, 2.0)]).unwrap_err(),
            GridError::DuplicateEdge(0, 1)
        );
        assert_eq!(PowerNetwork::new(vec![1.0, 1.0], [(1, 1, 1.0)]).unwrap_err(), GridError::SelfLoop(1));
        assert_eq!(
            PowerNetwork::new(vec![1.0], []).unwrap_err(),
            GridError::TooFewBuses { min: 2, got: 1 }
        );
    }

    #[test]
    fn incidence_orientation_and_factorisation() {
        let net = PowerNetwork::new(vec![1.0, 2.0, 3.0, 0.5], [(2, 0, 1.5), (1, 3, 0.7), (0, 1, 2.0)]).unwrap();
        let (l, a, g) = net.laplacian_and_incidence();
        assert_eq!(net.lines()[0], Line { from: 0, to: 2, sensitivity: 1.5 });
        assert_eq!(a[(0, 0)], 1.0);
        assert_eq!(a[(2, 0)], -1.0);
        assert_eq!((&a * g * a.transpose() - &l).abs().max(), 0.0);
        for r in 0..4 {
            assert!(l.row(r).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_rejects_nonpositive() {
        assert_eq!(path3().scale_lines(0.0).unwrap_err(), GridError::NonPositiveScale(0.0));
        assert_eq!(path3().scale_lines(1.0).unwrap(), path3());
    }

    #[test]
    fn injections_balance() {
        let net = path3();
        let theta = [0.3, -0.1, 0.2];
        assert!(net.dc_injections(&theta).iter().sum::<f64>().abs() < 1e-15);
        assert!(net.sine_injections(&theta, 2.0).iter().sum::<f64>().abs() < 1e-15);
        let via_matrix = net.laplacian() * DVector::from_row_slice(&theta);
        for (a, b) in net.dc_injections(&theta).iter().zip(via_matrix.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
