//! Piecewise-smooth disturbance profiles `ξ_i(t)`.
//!
//! A profile is a sequence of stages `[t_k, t_{k+1})`, the last one unbounded.
//! Inside a stage every bus carries a sum of primitive [`Term`]s evaluated in
//! stage-local time `t′ = t − t_k`, so `ξ` is smooth within a stage and may
//! jump only at stage starts (the breakpoints). Time zero is always a
//! breakpoint; the value just before it, `ξ(0₋)`, defaults to `ξ(0₊)`.

mod template;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, PowerNetwork};
use crate::nodal::SectorBounds;

pub use template::{TwoStageParameters, TwoStageTemplate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("t = {0} is a breakpoint; request the left or right limit explicitly")]
    BreakpointEvaluation(f64),
    #[error("t = {0} is not a breakpoint")]
    NotABreakpoint(f64),
    #[error("time {0} is negative or not finite")]
    InvalidTime(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("ρ = {0} is outside (0, π/4)")]
    RhoOutOfRange(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Primitive signal in stage-local time `t′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// `a`.
    Constant { a: f64 },
    /// `h` from the start of the stage on; kept apart from `Constant` so that
    /// profiles read like the jump they describe.
    Step { h: f64 },
    /// `a(1 − e^{−r t′})`.
    Ramp { a: f64, r: f64 },
    /// `b sin(Ω t′ + φ)`.
    Sinusoid {
        b: f64,
        #[serde(rename = "Omega")]
        omega: f64,
        #[serde(default)]
        phi: f64,
    },
}

impl Term {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { a } => a,
            Term::Step { h } => h,
            Term::Ramp { a, r } => -a * (-r * t).exp_m1(),
            Term::Sinusoid { b, omega, phi } => b * (omega * t + phi).sin(),
        }
    }

    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { .. } | Term::Step { .. } => 0.0,
            Term::Ramp { a, r } => a * r * (-r * t).exp(),
            Term::Sinusoid { b, omega, phi } => b * omega * (omega * t + phi).cos(),
        }
    }

    /// `sup_{t′ ≥ 0} |value|`.
    fn value_sup(&self) -> f64 {
        match *self {
            Term::Constant { a } | Term::Ramp { a, .. } => a.abs(),
            Term::Step { h } => h.abs(),
            Term::Sinusoid { b, .. } => b.abs(),
        }
    }

    /// `sup_{t′ ≥ 0} |rate|`.
    fn rate_sup(&self) -> f64 {
        match *self {
            Term::Constant { .. } | Term::Step { .. } => 0.0,
            Term::Ramp { a, r } => (a * r).abs(),
            Term::Sinusoid { b, omega, .. } => (b * omega).abs(),
        }
    }

    /// `sup_{t′ ≥ 0} |second derivative|`.
    fn accel_sup(&self) -> f64 {
        match *self {
            Term::Constant { .. } | Term::Step { .. } => 0.0,
            Term::Ramp { a, r } => (a * r * r).abs(),
            Term::Sinusoid { b, omega, .. } => (b * omega * omega).abs(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Term::Constant { a } => a.is_finite(),
            Term::Step { h } => h.is_finite(),
            Term::Ramp { a, r } => a.is_finite() && r.is_finite() && r > 0.0,
            Term::Sinusoid { b, omega, phi } => b.is_finite() && omega.is_finite() && omega >= 0.0 && phi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid term {self:?}"))
        }
    }
}

/// Serialized stage: terms shared by all buses plus optional per-bus terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    /// End of the stage; must be absent on the last stage.
    #[serde(default)]
    pub until: Option<f64>,
    #[serde(default)]
    pub all: Vec<Term>,
    /// Either empty or one list per bus.
    #[serde(default)]
    pub buses: Vec<Vec<Term>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub start: f64,
    pub end: f64,
    pub terms: Vec<Vec<Term>>,
}

impl Stage {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    fn bus_value(&self, i: usize, local: f64) -> f64 {
        self.terms[i].iter().map(|t| t.value(local)).sum()
    }

    fn bus_rate(&self, i: usize, local: f64) -> f64 {
        self.terms[i].iter().map(|t| t.rate(local)).sum()
    }
}

/// Which one-sided limit to take at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    n: usize,
    stages: Vec<Stage>,
    initial: Vec<f64>,
}

/// Whole-horizon and per-stage rate statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    /// `sup_{t>0} max_i |ξ̇_i(t)|/M_i`.
    pub c: f64,
    /// `limsup_{t→∞} max_i |ξ̇_i(t)|/M_i`.
    pub c_lim: f64,
    /// The same supremum restricted to each stage.
    pub per_stage: Vec<f64>,
}

/// Outcome of the feasibility test on the disturbance magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumption2Report {
    pub pass: bool,
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub sup_xi_b: f64,
    pub sup_xi_edge: f64,
}

/// Grid points per stage for supremum refinement.
pub const SCAN_POINTS: usize = 10_000;
const SCAN_SAFETY: f64 = 1.001;

impl DisturbanceProfile {
    pub fn new(n: usize, stages: &[StageSpec], initial: Option<Vec<f64>>) -> Result<Self, SignalError> {
        if n == 0 {
            return Err(SignalError::InvalidProfile("profile needs at least one bus".into()));
        }
        if stages.is_empty() {
            return Err(SignalError::InvalidProfile("profile needs at least one stage".into()));
        }
        let mut out = Vec::with_capacity(stages.len());
        let mut start = 0.0;
        for (k, s) in stages.iter().enumerate() {
            let last = k + 1 == stages.len();
            let end = match (s.until, last) {
                (None, true) => f64::INFINITY,
                (Some(u), false) if u.is_finite() && u > start => u,
                (Some(u), true) if u == f64::INFINITY => u,
                (u, true) => return Err(SignalError::InvalidProfile(format!("last stage must not end (until = {u:?})"))),
                (u, false) => {
                    return Err(SignalError::InvalidProfile(format!("stage {k} end {u:?} must exceed its start {start}")))
                }
            };
            if !s.buses.is_empty() && s.buses.len() != n {
                return Err(SignalError::InvalidProfile(format!(
                    "stage {k} lists terms for {} buses, expected {n}",
                    s.buses.len()
                )));
            }
            let terms: Vec<Vec<Term>> = (0..n)
                .map(|i| {
                    let mut t = s.all.clone();
                    if let Some(own) = s.buses.get(i) {
                        t.extend_from_slice(own);
                    }
                    t
                })
                .collect();
            for t in terms.iter().flatten() {
                t.validate().map_err(SignalError::InvalidProfile)?;
            }
            out.push(Stage { start, end, terms });
            start = end;
        }
        let mut profile = Self { n, stages: out, initial: Vec::new() };
        profile.initial = match initial {
            Some(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => v,
            Some(v) => {
                return Err(SignalError::InvalidProfile(format!("initial value has {} entries, expected {n}", v.len())))
            }
            None => profile.stage_values(0, 0.0),
        };
        Ok(profile)
    }

    /// Single-stage profile with the same terms on every bus.
    pub fn uniform(n: usize, terms: Vec<Term>) -> Result<Self, SignalError> {
        Self::new(n, &[StageSpec { until: None, all: terms, buses: Vec::new() }], None)
    }

    /// Single-stage profile with per-bus terms.
    pub fn per_bus(terms: Vec<Vec<Term>>, initial: Option<Vec<f64>>) -> Result<Self, SignalError> {
        let n = terms.len();
        Self::new(n, &[StageSpec { until: None, all: Vec::new(), buses: terms }], initial)
    }

    /// Constant `ξ` for `t > 0`, with an optional different value before zero.
    pub fn constant(xi: &[f64], before: Option<Vec<f64>>) -> Result<Self, SignalError> {
        Self::per_bus(xi.iter().map(|&a| vec![Term::Constant { a }]).collect(), before)
    }

    pub fn n_buses(&self) -> usize {
        self.n
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage start times, beginning with zero.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.start).collect()
    }

    /// `ξ(0₋)`.
    pub fn initial_value(&self) -> &[f64] {
        &self.initial
    }

    /// Same stages, different `ξ(0₋)`.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self, SignalError> {
        if initial.len() != self.n {
            return Err(SignalError::InvalidProfile("initial value has the wrong length".into()));
        }
        Ok(Self { initial, ..self.clone() })
    }

    /// Index of the stage containing `t`, choosing the later stage at a boundary.
    pub fn stage_index(&self, t: f64) -> usize {
        self.stages.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    fn breakpoint_index(&self, t: f64) -> Option<usize> {
        self.stages.iter().position(|s| s.start == t)
    }

    /// Values of stage `k`'s formula at absolute time `t`, also valid at the
    /// stage's closing boundary (giving the left limit there).
    pub fn stage_values(&self, k: usize, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.stage_values_into(k, t, &mut out);
        out
    }

    #[inline]
    pub fn stage_values_into(&self, k: usize, t: f64, out: &mut [f64]) {
        let s = &self.stages[k];
        let local = t - s.start;
        for (i, o) in out.iter_mut().enumerate() {
            *o = s.bus_value(i, local);
        }
    }

    #[inline]
    pub fn stage_rates_into(&self, k: usize, t: f64, out: &mut [f64]) {
        let s = &self.stages[k];
        let local = t - s.start;
        for (i, o) in out.iter_mut().enumerate() {
            *o = s.bus_rate(i, local);
        }
    }

    fn check_time(t: f64) -> Result<(), SignalError> {
        if t.is_finite() && t >= 0.0 {
            Ok(())
        } else {
            Err(SignalError::InvalidTime(t))
        }
    }

    /// `(ξ(t), ξ̇(t))` away from breakpoints.
    pub fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), SignalError> {
        Self::check_time(t)?;
        if self.breakpoint_index(t).is_some() {
            return Err(SignalError::BreakpointEvaluation(t));
        }
        let k = self.stage_index(t);
        let mut v = vec![0.0; self.n];
        let mut d = vec![0.0; self.n];
        self.stage_values_into(k, t, &mut v);
        self.stage_rates_into(k, t, &mut d);
        Ok((v, d))
    }

    /// One-sided limit of `(ξ, ξ̇)`; at `t = 0` the left limit is `ξ(0₋)` with zero rate.
    pub fn eval_side(&self, t: f64, side: Side) -> Result<(Vec<f64>, Vec<f64>), SignalError> {
        Self::check_time(t)?;
        let k = match (self.breakpoint_index(t), side) {
            (Some(0), Side::Left) => return Ok((self.initial.clone(), vec![0.0; self.n])),
            (Some(b), Side::Left) => b - 1,
            (Some(b), Side::Right) => b,
            (None, _) => self.stage_index(t),
        };
        let mut v = vec![0.0; self.n];
        let mut d = vec![0.0; self.n];
        self.stage_values_into(k, t, &mut v);
        self.stage_rates_into(k, t, &mut d);
        Ok((v, d))
    }

    /// `ξ(t₊) − ξ(t₋)` at a breakpoint.
    pub fn initial_jump(&self, at: f64) -> Result<Vec<f64>, SignalError> {
        if self.breakpoint_index(at).is_none() {
            return Err(SignalError::NotABreakpoint(at));
        }
        let (right, _) = self.eval_side(at, Side::Right)?;
        let (left, _) = self.eval_side(at, Side::Left)?;
        Ok(right.iter().zip(&left).map(|(r, l)| r - l).collect())
    }

    pub fn jump_norm(&self, at: f64) -> Result<f64, SignalError> {
        Ok(DVector::from_vec(self.initial_jump(at)?).norm())
    }

    /// Local times at which a stage is scanned, and the spacing between them.
    fn scan_grid(&self, k: usize) -> (Vec<f64>, f64) {
        let s = &self.stages[k];
        let span = if s.end.is_finite() { s.duration() } else { self.tail_horizon(k) };
        let h = span / (SCAN_POINTS - 1) as f64;
        ((0..SCAN_POINTS).map(|j| j as f64 * h).collect(), h)
    }

    /// Scan length for an unbounded stage: long enough for ramps to decay to
    /// `e^{−10}` and for a couple of periods of the slowest sinusoid.
    fn tail_horizon(&self, k: usize) -> f64 {
        let mut t: f64 = 1.0;
        for term in self.stages[k].terms.iter().flatten() {
            match *term {
                Term::Ramp { r, .. } => t = t.max(10.0 / r),
                Term::Sinusoid { omega, .. } if omega > 0.0 => t = t.max(4.0 * std::f64::consts::PI / omega),
                _ => {}
            }
        }
        t
    }

    /// Persistent rate amplitude of bus `i` in the final stage: sinusoids of
    /// equal frequency are combined exactly, distinct frequencies add up.
    fn persistent_rate(&self, i: usize) -> f64 {
        let stage = self.stages.last().expect("profile has stages");
        let mut groups: Vec<(f64, f64, f64)> = Vec::new();
        for term in &stage.terms[i] {
            if let Term::Sinusoid { b, omega, phi } = *term {
                if omega == 0.0 {
                    continue;
                }
                match groups.iter_mut().find(|g| g.0 == omega) {
                    Some(g) => {
                        g.1 += b * phi.cos();
                        g.2 += b * phi.sin();
                    }
                    None => groups.push((omega, b * phi.cos(), b * phi.sin())),
                }
            }
        }
        groups.iter().fold(0.0, |acc, (w, re, im)| acc + w * re.hypot(*im))
    }

    /// Upper bound on `sup |Σ terms|` over a stage for a linear combination of
    /// buses (`weights`), from the grid scan plus a mean-value correction,
    /// capped by the triangle inequality.
    fn combo_sup<FV, FS>(&self, k: usize, weights: &[(usize, f64)], eval: FV, term_sup: FS, derivative_sup: f64) -> f64
    where
        FV: Fn(&Stage, usize, f64) -> f64,
        FS: Fn(&Term) -> f64,
    {
        let stage = &self.stages[k];
        let triangle: f64 = weights.iter().map(|&(i, w)| w.abs() * stage.terms[i].iter().map(&term_sup).sum::<f64>()).sum();
        if triangle == 0.0 {
            return 0.0;
        }
        let (grid, h) = self.scan_grid(k);
        let mut scanned: f64 = 0.0;
        for &t in &grid {
            let v: f64 = weights.iter().map(|&(i, w)| w * eval(stage, i, t)).sum();
            scanned = scanned.max(v.abs());
        }
        let mut refined = SCAN_SAFETY * scanned + 0.5 * h * derivative_sup;
        if !stage.end.is_finite() {
            refined = refined.max(self.tail_bound(k, weights, grid[grid.len() - 1], &eval, &term_sup));
        }
        triangle.min(refined)
    }

    /// Bound on the combination beyond local time `t_end` of the final stage:
    /// the non-decaying part is evaluated at `t_end`, ramps contribute their
    /// remaining decay.
    fn tail_bound<FV, FS>(&self, k: usize, weights: &[(usize, f64)], t_end: f64, eval: &FV, term_sup: &FS) -> f64
    where
        FV: Fn(&Stage, usize, f64) -> f64,
        FS: Fn(&Term) -> f64,
    {
        let stage = &self.stages[k];
        let mut steady = 0.0;
        let mut oscill = 0.0;
        let mut decay = 0.0;
        for &(i, w) in weights {
            for term in &stage.terms[i] {
                match *term {
                    Term::Ramp { r, .. } => {
                        // the settled part of a ramp is its amplitude `a`; what decays is a·e^{−rt}
                        let single = Stage { start: 0.0, end: f64::INFINITY, terms: vec![vec![*term]] };
                        let settled = eval(&single, 0, f64::INFINITY);
                        if settled.is_finite() {
                            steady += w * settled;
                        }
                        decay += w.abs() * term_sup(term) * (-r * t_end).exp();
                    }
                    Term::Sinusoid { .. } => oscill += w.abs() * term_sup(term),
                    _ => steady += w * eval(&Stage { start: 0.0, end: f64::INFINITY, terms: vec![vec![*term]] }, 0, t_end),
                }
            }
        }
        steady.abs() + oscill + decay
    }

    /// Rate statistics with per-bus inertia scaling.
    pub fn rate_stats(&self, inertia: &[f64]) -> RateStats {
        let mut per_stage = Vec::with_capacity(self.stages.len());
        for (k, stage) in self.stages.iter().enumerate() {
            let mut worst: f64 = 0.0;
            for (i, m) in inertia.iter().enumerate().take(self.n) {
                let accel: f64 = stage.terms[i].iter().map(|t| t.accel_sup()).sum();
                let sup = self.combo_sup(k, &[(i, 1.0)], |s, b, t| s.bus_rate(b, t), |t| t.rate_sup(), accel);
                worst = worst.max(sup / m);
            }
            per_stage.push(worst);
        }
        let c_lim = (0..self.n).map(|i| self.persistent_rate(i) / inertia[i]).fold(0.0, f64::max);
        let c = per_stage.iter().copied().fold(c_lim, f64::max);
        RateStats { c, c_lim, per_stage }
    }

    /// `sup_{t≥0} |ξ_b(t)|`, including `ξ(0₋)`.
    pub fn sup_blended(&self) -> f64 {
        let w = 1.0 / self.n as f64;
        let weights: Vec<(usize, f64)> = (0..self.n).map(|i| (i, w)).collect();
        let mut sup = (self.initial.iter().sum::<f64>() * w).abs();
        for (k, stage) in self.stages.iter().enumerate() {
            let rate: f64 = stage.terms.iter().flatten().map(|t| t.rate_sup()).sum::<f64>() * w;
            sup = sup.max(self.combo_sup(k, &weights, |s, b, t| s.bus_value(b, t), |t| t.value_sup(), rate));
        }
        sup
    }

    /// `sup_{t≥0} max_{{i,j}∈ℰ} |ξ_i(t) − ξ_j(t)|`, including `ξ(0₋)`.
    pub fn sup_edge_difference(&self, net: &PowerNetwork) -> f64 {
        let mut sup: f64 = 0.0;
        for line in net.lines() {
            let (i, j) = (line.from, line.to);
            sup = sup.max((self.initial[i] - self.initial[j]).abs());
            let weights = [(i, 1.0), (j, -1.0)];
            for (k, stage) in self.stages.iter().enumerate() {
                let rate: f64 =
                    stage.terms[i].iter().chain(&stage.terms[j]).map(|t| t.rate_sup()).sum();
                sup = sup.max(self.combo_sup(k, &weights, |s, b, t| s.bus_value(b, t), |t| t.value_sup(), rate));
            }
        }
        sup
    }

    /// Mean of `ξ` at time `t` using stage `k`'s formula.
    pub fn blended_in_stage(&self, k: usize, t: f64) -> f64 {
        let s = &self.stages[k];
        let local = t - s.start;
        (0..self.n).map(|i| s.bus_value(i, local)).sum::<f64>() / self.n as f64
    }

    /// Stage `k` alone as a single-stage profile starting at zero and never
    /// ending; `ξ(0₋)` of the result is the left limit at the old breakpoint.
    pub fn isolate_stage(&self, k: usize) -> Result<Self, SignalError> {
        let Some(stage) = self.stages.get(k) else {
            return Err(SignalError::InvalidProfile(format!("no stage {k} in a {}-stage profile", self.stages.len())));
        };
        let initial = if k == 0 { self.initial.clone() } else { self.stage_values(k - 1, stage.start) };
        let stages = vec![Stage { start: 0.0, end: f64::INFINITY, terms: stage.terms.clone() }];
        Ok(Self { n: self.n, stages, initial })
    }

    /// Multiplies bus `i`'s disturbance by `factors[i]`, including `ξ(0₋)`.
    pub fn scaled_per_bus(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for stage in &mut out.stages {
            for (terms, &f) in stage.terms.iter_mut().zip(factors) {
                for t in terms.iter_mut() {
                    *t = match *t {
                        Term::Constant { a } => Term::Constant { a: a * f },
                        Term::Step { h } => Term::Step { h: h * f },
                        Term::Ramp { a, r } => Term::Ramp { a: a * f, r },
                        Term::Sinusoid { b, omega, phi } => Term::Sinusoid { b: b * f, omega, phi },
                    };
                }
            }
        }
        for (v, f) in out.initial.iter_mut().zip(factors) {
            *v *= f;
        }
        out
    }
}

/// Checks `12 L max_i M_i sup|ξ_b| / (μ M_b) + 2 sup|ξ|_{ℰ,∞} ≤ k λ₂^L cos 2ρ`,
/// with `λ₂^L` taken from `net` (the baseline sensitivities).
pub fn check_assumption2(
    net: &PowerNetwork,
    profile: &DisturbanceProfile,
    bounds: &SectorBounds,
    rho: f64,
    k: f64,
) -> Result<Assumption2Report, SignalError> {
    if !(rho > 0.0 && rho < std::f64::consts::FRAC_PI_4) {
        return Err(SignalError::RhoOutOfRange(rho));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(SignalError::Grid(GridError::NonPositiveScale(k)));
    }
    assumption2_from_sups(net, profile.sup_blended(), profile.sup_edge_difference(net), bounds, rho, k)
}

/// [`check_assumption2`] with `sup|ξ_b|` and `sup|ξ|_{ℰ,∞}` already known,
/// for repeated checks over `ρ` or `k`.
pub fn assumption2_from_sups(
    net: &PowerNetwork,
    sup_xi_b: f64,
    sup_xi_edge: f64,
    bounds: &SectorBounds,
    rho: f64,
    k: f64,
) -> Result<Assumption2Report, SignalError> {
    if !(rho > 0.0 && rho < std::f64::consts::FRAC_PI_4) {
        return Err(SignalError::RhoOutOfRange(rho));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(SignalError::Grid(GridError::NonPositiveScale(k)));
    }
    let spectral = net.spectral_summary()?;
    let lhs = 12.0 * bounds.l * net.max_inertia() * sup_xi_b / (bounds.mu * net.mean_inertia()) + 2.0 * sup_xi_edge;
    let rhs = k * spectral.lambda2_l * (2.0 * rho).cos();
    Ok(Assumption2Report { pass: lhs <= rhs, margin: rhs - lhs, lhs, rhs, sup_xi_b, sup_xi_edge })
}
