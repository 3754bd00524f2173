use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DisturbanceProfile, SignalError, StageSpec, Term};

/// Random two-stage profile: `a_i(1 − e^{−r_i t})` before the switch time,
/// then `a_i + Δ_i + b_i sin(Ω_i (t − t_s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoStageTemplate {
    pub switch_time: f64,
    pub a: (f64, f64),
    pub r: (f64, f64),
    pub delta: (f64, f64),
    pub b: (f64, f64),
    /// Shared sinusoid frequency, used unless `omega_range` is given.
    #[serde(rename = "Omega")]
    pub omega: f64,
    /// Per-bus frequencies drawn uniformly from this range.
    #[serde(rename = "Omega_range")]
    pub omega_range: Option<(f64, f64)>,
}

impl Default for TwoStageTemplate {
    fn default() -> Self {
        Self {
            switch_time: 80.0,
            a: (-0.4, 0.4),
            r: (0.05, 0.1),
            delta: (-0.04, 0.04),
            b: (0.0, 0.02),
            omega: 2.0,
            omega_range: None,
        }
    }
}

/// Sampled parameters of a two-stage profile, one entry per bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageParameters {
    pub switch_time: f64,
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub delta: Vec<f64>,
    pub b: Vec<f64>,
    pub omega: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl TwoStageTemplate {
    pub fn sample(&self, n: usize, seed: u64) -> TwoStageParameters {
        self.sample_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample_with(&self, n: usize, rng: &mut ChaCha8Rng) -> TwoStageParameters {
        let mut p = TwoStageParameters {
            switch_time: self.switch_time,
            a: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            delta: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            omega: Vec::with_capacity(n),
        };
        for _ in 0..n {
            p.a.push(draw(rng, self.a));
            p.r.push(draw(rng, self.r));
            p.delta.push(draw(rng, self.delta));
            p.b.push(draw(rng, self.b));
            p.omega.push(match self.omega_range {
                Some(range) => draw(rng, range),
                None => self.omega,
            });
        }
        p
    }
}

impl TwoStageParameters {
    /// Halves the jumps, doubles the sinusoid amplitudes and quarters their frequency.
    pub fn case2(&self) -> Self {
        self.modified(0.5, 2.0, 0.25)
    }

    pub fn modified(&self, delta_factor: f64, b_factor: f64, omega_factor: f64) -> Self {
        Self {
            delta: self.delta.iter().map(|d| d * delta_factor).collect(),
            b: self.b.iter().map(|b| b * b_factor).collect(),
            omega: self.omega.iter().map(|w| w * omega_factor).collect(),
            ..self.clone()
        }
    }

    pub fn n_buses(&self) -> usize {
        self.a.len()
    }

    pub fn profile(&self) -> Result<DisturbanceProfile, SignalError> {
        let n = self.n_buses();
        let first = (0..n).map(|i| vec![Term::Ramp { a: self.a[i], r: self.r[i] }]).collect();
        let second = (0..n)
            .map(|i| {
                vec![
                    Term::Constant { a: self.a[i] },
                    Term::Step { h: self.delta[i] },
                    Term::Sinusoid { b: self.b[i], omega: self.omega[i], phi: 0.0 },
                ]
            })
            .collect();
        DisturbanceProfile::new(
            n,
            &[
                StageSpec { until: Some(self.switch_time), all: Vec::new(), buses: first },
                StageSpec { until: None, all: Vec::new(), buses: second },
            ],
            None,
        )
    }
}
