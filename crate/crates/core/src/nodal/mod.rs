//! Nodal frequency-response functions `f_i(ω)`.
//!
//! Every response is normalised so that `f_i(0) = 0` by subtracting its value
//! at zero. Sector bounds `(μ, L)` with `−L ≤ f_i′(ω)/M_i ≤ −μ` are certified on
//! a bounded frequency range by a dense grid scan.

mod spline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use spline::MonotoneCubic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodalError {
    #[error("ω = {omega} is outside the tabulated range [{lo}, {hi}]")]
    OutOfTabulatedRange { omega: f64, lo: f64, hi: f64 },
    #[error("bus {bus}: f′(ω)/M = {ratio} is not negative at ω = {omega}")]
    AssumptionOneViolated { bus: usize, omega: f64, ratio: f64 },
    #[error("no sign change of f_b(ω) − {target} found")]
    NoBracket { target: f64 },
    #[error("blended response is not decreasing near ω = {0}")]
    NotMonotone(f64),
    #[error("invalid response parameters: {0}")]
    InvalidParameters(String),
    #[error("{got} response functions for {expected} buses")]
    LengthMismatch { expected: usize, got: usize },
}

/// Declarative form of a response function as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseSpec {
    /// `f(ω) = −Dω`.
    #[serde(alias = "linear_damping")]
    Linear {
        #[serde(rename = "D")]
        d: f64,
    },
    /// `f(ω) = −Dω − s·D·tanh(ω)`.
    Saturated {
        #[serde(rename = "D")]
        d: f64,
        #[serde(default = "default_saturation")]
        s: f64,
    },
    /// Monotone cubic through the points `(omega[k], f[k])`.
    Tabulated { omega: Vec<f64>, f: Vec<f64> },
}

fn default_saturation() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Kind {
    Linear { d: f64 },
    Saturated { d: f64, s: f64 },
    Tabulated(MonotoneCubic),
}

/// A nodal response `f_i` with analytic (or spline-exact) derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    kind: Kind,
    offset: f64,
}

impl ResponseFunction {
    pub fn linear(d: f64) -> Self {
        Self { kind: Kind::Linear { d }, offset: 0.0 }
    }

    pub fn saturated(d: f64, s: f64) -> Self {
        Self { kind: Kind::Saturated { d, s }, offset: 0.0 }
    }

    /// Monotone interpolant through the given points; the table must cover ω = 0.
    pub fn tabulated(omega: Vec<f64>, f: Vec<f64>) -> Result<Self, NodalError> {
        let sp = MonotoneCubic::new(omega, f)
            .ok_or_else(|| NodalError::InvalidParameters("table needs ≥ 2 strictly increasing, finite knots".into()))?;
        let (lo, hi) = sp.range();
        let (at_zero, _) = sp.eval(0.0).ok_or(NodalError::OutOfTabulatedRange { omega: 0.0, lo, hi })?;
        Ok(Self { kind: Kind::Tabulated(sp), offset: at_zero })
    }

    pub fn from_spec(spec: &ResponseSpec) -> Result<Self, NodalError> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NodalError::InvalidParameters(format!("{name} must be finite")))
            }
        };
        match spec {
            ResponseSpec::Linear { d } => {
                finite(*d, "D")?;
                Ok(Self::linear(*d))
            }
            ResponseSpec::Saturated { d, s } => {
                finite(*d, "D")?;
                finite(*s, "s")?;
                Ok(Self::saturated(*d, *s))
            }
            ResponseSpec::Tabulated { omega, f } => Self::tabulated(omega.clone(), f.clone()),
        }
    }

    /// The same response multiplied by `factor` (used for homogeneous networks `f_i = M_i f_o`).
    pub fn scaled(&self, factor: f64) -> Self {
        let kind = match &self.kind {
            Kind::Linear { d } => Kind::Linear { d: d * factor },
            Kind::Saturated { d, s } => Kind::Saturated { d: d * factor, s: *s },
            Kind::Tabulated(sp) => Kind::Tabulated(sp.scaled(factor)),
        };
        Self { kind, offset: self.offset * factor }
    }

    /// Frequency interval on which the function is defined.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Tabulated(sp) => sp.range(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `(f(ω), f′(ω))`.
    #[inline]
    pub fn eval(&self, omega: f64) -> Result<(f64, f64), NodalError> {
        match &self.kind {
            Kind::Linear { d } => Ok((-d * omega, -d)),
            Kind::Saturated { d, s } => {
                let th = omega.tanh();
                Ok((-d * omega - s * d * th, -d * (1.0 + s * (1.0 - th * th))))
            }
            Kind::Tabulated(sp) => {
                let (lo, hi) = sp.range();
                let (v, dv) = sp.eval(omega).ok_or(NodalError::OutOfTabulatedRange { omega, lo, hi })?;
                Ok((v - self.offset, dv))
            }
        }
    }
}

impl MonotoneCubic {
    fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale_values(factor);
        out
    }
}

pub fn eval_response(rf: &ResponseFunction, omega: f64) -> Result<(f64, f64), NodalError> {
    rf.eval(omega)
}

/// Certified sector bounds on a frequency range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorBounds {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub range: (f64, f64),
}

impl SectorBounds {
    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.range.0 && omega <= self.range.1
    }
}

pub const SECTOR_GRID_POINTS: usize = 10_000;
const MU_SAFETY: f64 = 0.999;
const L_SAFETY: f64 = 1.001;

/// Scans `−f_i′(ω)/M_i` over a uniform grid on `range` and widens the extremes
/// by 0.1%.
pub fn sector_bounds(rfs: &[ResponseFunction], inertia: &[f64], range: (f64, f64)) -> Result<SectorBounds, NodalError> {
    if rfs.len() != inertia.len() {
        return Err(NodalError::LengthMismatch { expected: inertia.len(), got: rfs.len() });
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.1 >= range.0) {
        return Err(NodalError::InvalidParameters(format!("bad certification range {range:?}")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let last = (SECTOR_GRID_POINTS - 1) as f64;
    for (bus, (rf, &m)) in rfs.iter().zip(inertia).enumerate() {
        for k in 0..SECTOR_GRID_POINTS {
            let omega = range.0 + (range.1 - range.0) * (k as f64 / last);
            let (_, d) = rf.eval(omega)?;
            let ratio = -d / m;
            if !(ratio > 0.0) {
                return Err(NodalError::AssumptionOneViolated { bus, omega, ratio: -ratio });
            }
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    Ok(SectorBounds { mu: lo * MU_SAFETY, l: hi * L_SAFETY, range })
}

/// `(f_b(ω), f_b′(ω))` with `f_b = (1/N) Σ f_i`.
pub fn blended_response(rfs: &[ResponseFunction], omega: f64) -> Result<(f64, f64), NodalError> {
    let mut v = 0.0;
    let mut d = 0.0;
    for rf in rfs {
        let (a, b) = rf.eval(omega)?;
        v += a;
        d += b;
    }
    let n = rfs.len() as f64;
    Ok((v / n, d / n))
}

const MAX_EXPANSIONS: usize = 64;

/// Solves `f_b(ω) = y` for a strictly decreasing blended response.
///
/// `mu` is the certified lower sector bound, used only to centre the initial
/// bracket at `−y/(M_b μ)`.
pub fn invert_blended(rfs: &[ResponseFunction], m_b: f64, mu: f64, y: f64) -> Result<f64, NodalError> {
    let g = |w: f64| blended_response(rfs, w).map(|(v, d)| (v - y, d));
    let centre = if m_b > 0.0 && mu > 0.0 { -y / (m_b * mu) } else { 0.0 };
    let (dom_lo, dom_hi) = rfs.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), rf| {
        let (l, h) = rf.domain();
        (a.max(l), b.min(h))
    });
    let clamp = |w: f64| w.clamp(dom_lo, dom_hi);

    let mut width = 1.0;
    let (mut lo, mut hi);
    let mut expansions = 0;
    loop {
        lo = clamp(centre - width);
        hi = clamp(centre + width);
        let (g_lo, _) = g(lo)?;
        let (g_hi, _) = g(hi)?;
        if g_lo < g_hi {
            return Err(NodalError::NotMonotone(0.5 * (lo + hi)));
        }
        if g_lo >= 0.0 && g_hi <= 0.0 {
            break;
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS || (lo == dom_lo && hi == dom_hi) {
            return Err(NodalError::NoBracket { target: y });
        }
        width *= 2.0;
    }

    let tol = 1e-13 * y.abs().max(1.0);
    let mut w = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (r, d) = g(w)?;
        if r.abs() <= tol {
            return Ok(w);
        }
        if d >= 0.0 {
            return Err(NodalError::NotMonotone(w));
        }
        if r > 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let newton = w - r / d;
        w = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * w.abs().max(1.0) {
            break;
        }
    }
    let (r, _) = g(w)?;
    if r.abs() <= 1e-12 * y.abs().max(1.0) {
        Ok(w)
    } else {
        Err(NodalError::NoBracket { target: y })
    }
}
