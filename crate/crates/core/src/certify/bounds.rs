use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::steady::{solve_theta_star, steady_state_linear, steady_state_nonlinear, SteadyState};
use super::{CertifyContext, CertifyError, TransformedFrame};
use crate::engine::{weighted_mean, FlowModel};
use crate::grid::{PowerNetwork, SpectralSummary};
use crate::nodal::blended_response;
use crate::signals::{assumption2_from_sups, check_assumption2, Assumption2Report, DisturbanceProfile, Side};

pub const DEFAULT_RHO: f64 = PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CertificateKind {
    T1,
    P1,
    T2,
    P2,
}

impl CertificateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::T1 => "T1",
            Self::P1 => "P1",
            Self::T2 => "T2",
            Self::P2 => "P2",
        }
    }
}

/// Quantities the constants were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub n: usize,
    pub m_b: f64,
    pub min_m: f64,
    pub max_m: f64,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub lambda2_l: f64,
    pub norm_ay: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// `sup_{t>0} max_i |ξ̇_i|/M_i`.
    #[serde(rename = "C")]
    pub rate_sup: f64,
    /// `limsup_{t→∞} max_i |ξ̇_i|/M_i`.
    #[serde(rename = "C_lim")]
    pub rate_limsup: f64,
    /// `|ξ(0₊) − ξ(0₋)|`.
    pub jump: f64,
    pub k: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

/// Closed-form bound `err(t)² ≤ transient·e^{−rate·t} + floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: CertificateKind,
    pub constants: BTreeMap<String, f64>,
    /// Formula behind each entry of `constants`.
    pub formulas: BTreeMap<String, String>,
    pub inputs: CertificateInputs,
    /// Coefficient of the exponential term; `None` when only the floor is known.
    pub transient: Option<f64>,
    pub rate: f64,
    pub floor: f64,
    /// Bound on `limsup err²`.
    pub limit: f64,
    pub network_fingerprint: u64,
    pub flow: FlowModel,
    /// Initial state the certificate presumes, if any.
    pub steady_init: Option<SteadyState>,
    pub checks: Vec<Check>,
}

impl BoundCertificate {
    /// Bound on `err(t)²`, or `None` without a transient coefficient.
    pub fn bound_at(&self, t: f64) -> Option<f64> {
        self.transient.map(|a| a * (-self.rate * t).exp() + self.floor)
    }

    pub fn bound_with(&self, alpha: f64, t: f64) -> f64 {
        alpha * (-self.rate * t).exp() + self.floor
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn set(&mut self, name: &str, value: f64, formula: &str) {
        self.constants.insert(name.to_string(), value);
        self.formulas.insert(name.to_string(), formula.to_string());
    }
}

/// DC-flow constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConstants {
    pub eta_star: f64,
    pub k: f64,
    pub c: f64,
    /// `(λ₂+4L²)²/λ₂³`, the factor multiplying `K·C²` in the floor.
    pub floor_factor: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub alpha_star: f64,
}

pub fn linear_constants(n: usize, m_b: f64, min_m: f64, lambda2: f64, mu: f64, l: f64) -> LinearConstants {
    let s = lambda2 + 4.0 * l * l;
    let gain = (1.0 + l / mu).powi(2);
    let phi1 = 1.0 / (min_m * min_m);
    let phi2 = 16.0 * l * l / (3.0 * mu * mu * m_b * min_m);
    LinearConstants {
        eta_star: mu * lambda2 / (2.0 * s),
        k: 32.0 * n as f64 * m_b * gain / (min_m * mu * mu),
        c: mu * lambda2 / (4.0 * s),
        floor_factor: s * s / lambda2.powi(3),
        phi1,
        phi2,
        alpha_star: ((phi1 + phi2) * lambda2 + 4.0 * phi2 * l * l) / (lambda2 * lambda2),
    }
}

/// Sinusoidal-flow constants at scale `k` and cohesiveness margin `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearConstants {
    pub eta_star: f64,
    pub c: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub beta: f64,
    /// Sublevel radius `V_c`.
    pub v_c: f64,
    /// Largest admissible rate `C̄`.
    pub c_bar: f64,
    /// `k → ∞` limits of `η*` and `c`.
    pub eta_limit: f64,
    pub c_limit: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn nonlinear_constants(
    n: usize,
    m_b: f64,
    min_m: f64,
    spectral: &SpectralSummary,
    mu: f64,
    l: f64,
    k: f64,
    rho: f64,
) -> NonlinearConstants {
    let (l2, ln) = (spectral.lambda2, spectral.lambda_n);
    let sr = rho.sin();
    let a = l2 * sr;
    let eta = 1.0 / ((2.0 * ln / mu) * (1.0 + 2.0 * ln * l * l / (k * a * a)) + (2.0 * ln * ln / (k * a)).sqrt());
    let c = eta * a * a / (ln + a);
    let phi1 = 1.0 / (k * eta * a * a);
    let phi2 = eta * a * a / (4.0 * k * ln * ln * l * l);
    let gain = (1.0 + l / mu).powi(2);
    let nm = n as f64 * m_b;
    let beta = 8.0 * (phi1 + phi2) * nm * gain / (c * min_m);
    let curv = k * a - eta * eta * ln * ln;
    let nay2 = spectral.norm_ay * spectral.norm_ay;
    let v_c = curv * rho * rho / (2.0 * nay2);
    let c_bar = (c * rho * rho * curv / (4.0 * nm * gain * nay2 * (phi1 + phi2))).max(0.0).sqrt();
    NonlinearConstants {
        eta_star: eta,
        c,
        phi1,
        phi2,
        beta,
        v_c,
        c_bar,
        eta_limit: mu / (2.0 * ln),
        c_limit: a * a * mu / (2.0 * ln * (ln + a)),
    }
}

fn inputs(ctx: &CertifyContext, spectral: &SpectralSummary, k: Option<f64>, rho: Option<f64>) -> Result<CertificateInputs, CertifyError> {
    let net = ctx.net;
    let rates = ctx.profile.rate_stats(net.inertia());
    Ok(CertificateInputs {
        n: net.n_buses(),
        m_b: net.mean_inertia(),
        min_m: net.min_inertia(),
        max_m: net.max_inertia(),
        lambda2: spectral.lambda2,
        lambda_n: spectral.lambda_n,
        lambda2_l: spectral.lambda2_l,
        norm_ay: spectral.norm_ay,
        mu: ctx.bounds.mu,
        l: ctx.bounds.l,
        rate_sup: rates.c,
        rate_limsup: rates.c_lim,
        jump: ctx.profile.jump_norm(0.0)?,
        k,
        rho,
    })
}

fn require_single_stage(profile: &DisturbanceProfile) -> Result<(), CertifyError> {
    let bps = profile.breakpoints();
    if bps.len() > 1 {
        return Err(CertifyError::UnsupportedProfile(format!(
            "jumps after t = 0 (at {:?}); certify each stage separately",
            &bps[1..]
        )));
    }
    Ok(())
}

fn empty(kind: CertificateKind, inputs: CertificateInputs, net: &PowerNetwork, flow: FlowModel) -> BoundCertificate {
    BoundCertificate {
        kind,
        constants: BTreeMap::new(),
        formulas: BTreeMap::new(),
        inputs,
        transient: None,
        rate: 0.0,
        floor: 0.0,
        limit: 0.0,
        network_fingerprint: net.fingerprint(),
        flow,
        steady_init: None,
        checks: Vec::new(),
    }
}

fn check_init(n: usize, init: Option<(&[f64], &[f64])>) -> Result<(), CertifyError> {
    if let Some((th, om)) = init {
        if th.len() != n || om.len() != n {
            return Err(CertifyError::DimensionMismatch("initial state length differs from bus count".into()));
        }
    }
    Ok(())
}

/// `|f_b(ω_b(0)) + ξ_b(0₊)|`, the initial blended acceleration times `M_b`.
fn initial_blended_force(ctx: &CertifyContext, omega_b0: f64) -> Result<f64, CertifyError> {
    let (xi, _) = ctx.profile.eval_side(0.0, Side::Right)?;
    let xi_b = xi.iter().sum::<f64>() / xi.len() as f64;
    Ok((blended_response(ctx.rfs, omega_b0)?.0 + xi_b).abs())
}

fn delta_omega(omega: &[f64], omega_b: f64) -> Vec<f64> {
    omega.iter().map(|w| w - omega_b).collect()
}

/// DC-flow bound for an arbitrary initial state.
///
/// With `init = Some((θ₀, ω₀))` the transient coefficient
/// `α = (2/min M)(V(0₊) + 2β₁/(3μ))` is evaluated exactly; otherwise only
/// the floor is certified.
pub fn theorem1_certificate(ctx: &CertifyContext, init: Option<(&[f64], &[f64])>) -> Result<BoundCertificate, CertifyError> {
    require_single_stage(ctx.profile)?;
    let net = ctx.net;
    check_init(net.n_buses(), init)?;
    let spectral = net.spectral_summary()?;
    let inp = inputs(ctx, &spectral, None, None)?;
    let lc = linear_constants(inp.n, inp.m_b, inp.min_m, inp.lambda2, inp.mu, inp.l);
    let mut cert = empty(CertificateKind::T1, inp.clone(), net, FlowModel::Linear);
    cert.set("eta_star", lc.eta_star, "mu*lambda2/(2*(lambda2+4*L^2))");
    cert.set("K", lc.k, "32*N*M_b*(1+L/mu)^2/(min M*mu^2)");
    cert.set("c", lc.c, "mu*lambda2/(4*(lambda2+4*L^2))");
    let floor = lc.k * inp.rate_sup.powi(2) * lc.floor_factor;
    let limit = lc.k * inp.rate_limsup.powi(2) * lc.floor_factor;
    cert.set("limiting_term", floor, "K*C^2*(lambda2+4*L^2)^2/lambda2^3");
    cert.set("limiting_term_lim", limit, "K*C_lim^2*(lambda2+4*L^2)^2/lambda2^3");
    cert.rate = lc.c;
    cert.floor = floor;
    cert.limit = limit;
    let gain = (1.0 + inp.l / inp.mu).powi(2);
    let beta2 = 2.0 * inp.n as f64 * inp.m_b * inp.rate_sup.powi(2) * gain / (lc.eta_star * inp.lambda2);
    cert.set("beta2", beta2, "2*N*M_b*C^2*(1+L/mu)^2/(eta_star*lambda2)");

    if let Some((theta0, omega0)) = init {
        let frame = TransformedFrame::new(net)?;
        let wb0 = weighted_mean(omega0, net.inertia());
        let force = initial_blended_force(ctx, wb0)?;
        let beta1 = 2.0 * inp.n as f64 * inp.l.powi(2) * force * force / (lc.eta_star * inp.lambda2 * inp.m_b);
        let (xi0, _) = ctx.profile.eval_side(0.0, Side::Right)?;
        let f_tilde = frame.f_tilde(ctx.rfs, wb0, &xi0)?;
        let star = frame.solve_lambda_p(&f_tilde);
        let d_omega = delta_omega(omega0, wb0);
        let v0 = linear_lyapunov(&frame, net.inertia(), &frame.to_tilde(theta0), &star, &d_omega, lc.eta_star);
        let alpha = 2.0 / inp.min_m * (v0 + 2.0 * beta1 / (3.0 * inp.mu));
        cert.set("beta1", beta1, "2*N*L^2*|f_b(omega_b(0))+xi_b(0+)|^2/(eta_star*lambda2*M_b)");
        cert.set("V0", v0, "V(0+)");
        cert.set("alpha", alpha, "(2/min M)*(V(0+) + 2*beta1/(3*mu))");
        cert.transient = Some(alpha);
    }
    cert.checks.push(Check::new("positive_constants", lc.k > 0.0 && lc.c > 0.0, format!("K = {}, c = {}", lc.k, lc.c)));
    Ok(cert)
}

/// `½δ_ωᵀMδ_ω + ½δ̂ᵀΛ_Pδ̂` with `δ̂ = θ̃ − θ̃* + ηΛ_P⁻¹YᵀM^{1/2}δ_ω`; returns `(W_k, W_pc)`.
pub(crate) fn linear_lyapunov_parts(
    frame: &TransformedFrame,
    inertia: &[f64],
    tilde: &DVector<f64>,
    star: &DVector<f64>,
    d_omega: &[f64],
    eta: f64,
) -> (f64, f64) {
    let wk = 0.5 * d_omega.iter().zip(inertia).map(|(d, m)| m * d * d).sum::<f64>();
    let hat = tilde - star + frame.solve_lambda_p(&frame.project_weighted(d_omega)) * eta;
    let wpc = 0.5 * hat.dot(&(&frame.lambda_p * &hat));
    (wk, wpc)
}

fn linear_lyapunov(frame: &TransformedFrame, inertia: &[f64], tilde: &DVector<f64>, star: &DVector<f64>, d: &[f64], eta: f64) -> f64 {
    let (a, b) = linear_lyapunov_parts(frame, inertia, tilde, star, d, eta);
    a + b
}

/// Sinusoidal-flow Lyapunov parts `(W_k, W_p, W_c)`; `V = W_k + W_p + ηW_c`.
pub(crate) fn nonlinear_lyapunov_parts(
    frame: &TransformedFrame,
    inertia: &[f64],
    k: f64,
    tilde: &DVector<f64>,
    star: &DVector<f64>,
    d_omega: &[f64],
) -> (f64, f64, f64) {
    let wk = 0.5 * d_omega.iter().zip(inertia).map(|(d, m)| m * d * d).sum::<f64>();
    let grad_star = frame.energy_gradient(star);
    let wp = k * (frame.energy(tilde) - frame.energy(star) - grad_star.dot(&(tilde - star)));
    let wc = (frame.energy_gradient(tilde) - grad_star).dot(&frame.project_weighted(d_omega));
    (wk, wp, wc)
}

/// DC-flow bound after a jump from the steady state of `ξ(0₋)`.
pub fn prop1_certificate(ctx: &CertifyContext) -> Result<BoundCertificate, CertifyError> {
    require_single_stage(ctx.profile)?;
    let net = ctx.net;
    let spectral = net.spectral_summary()?;
    let inp = inputs(ctx, &spectral, None, None)?;
    let lc = linear_constants(inp.n, inp.m_b, inp.min_m, inp.lambda2, inp.mu, inp.l);
    let steady = steady_state_linear(net, ctx.rfs, ctx.profile.initial_value())?;
    let mut cert = empty(CertificateKind::P1, inp.clone(), net, FlowModel::Linear);
    cert.set("eta_star", lc.eta_star, "mu*lambda2/(2*(lambda2+4*L^2))");
    cert.set("K", lc.k, "32*N*M_b*(1+L/mu)^2/(min M*mu^2)");
    cert.set("c", lc.c, "mu*lambda2/(4*(lambda2+4*L^2))");
    cert.set("phi1", lc.phi1, "1/(min M)^2");
    cert.set("phi2", lc.phi2, "16*L^2/(3*mu^2*M_b*min M)");
    cert.set("alpha_star", lc.alpha_star, "((phi1+phi2)*lambda2 + 4*phi2*L^2)/lambda2^2");
    let floor = lc.k * inp.rate_sup.powi(2) * lc.floor_factor;
    let limit = lc.k * inp.rate_limsup.powi(2) * lc.floor_factor;
    cert.set("limiting_term", floor, "K*C^2*(lambda2+4*L^2)^2/lambda2^3");
    cert.set("limiting_term_lim", limit, "K*C_lim^2*(lambda2+4*L^2)^2/lambda2^3");
    cert.transient = Some(lc.alpha_star * inp.jump * inp.jump);
    cert.rate = lc.c;
    cert.floor = floor;
    cert.limit = limit;
    cert.checks.push(Check::new(
        "steady_residual",
        steady.residual < 1e-10,
        format!("residual {:e}", steady.residual),
    ));
    cert.steady_init = Some(steady);
    Ok(cert)
}

fn validate_nonlinear(ctx: &CertifyContext, k: f64, rho: f64) -> Result<Assumption2Report, CertifyError> {
    if !(rho > 0.0 && rho < FRAC_PI_4) {
        return Err(CertifyError::RhoOutOfRange(rho));
    }
    let report = check_assumption2(ctx.net, ctx.profile, &ctx.bounds, rho, k)?;
    if !report.pass {
        return Err(CertifyError::AssumptionTwoFailed { margin: report.margin });
    }
    Ok(report)
}

fn fill_nonlinear(cert: &mut BoundCertificate, nc: &NonlinearConstants, a2: &Assumption2Report) {
    cert.set("eta_star", nc.eta_star, "1/((2*lambda_N/mu)*(1+2*lambda_N*L^2/(k*(lambda2*sin rho)^2)) + sqrt(2*lambda_N^2/(k*lambda2*sin rho)))");
    cert.set("c", nc.c, "eta_star*(lambda2*sin rho)^2/(lambda_N + lambda2*sin rho)");
    cert.set("phi1_k", nc.phi1, "1/(k*eta_star*(lambda2*sin rho)^2)");
    cert.set("phi2_k", nc.phi2, "eta_star*(lambda2*sin rho)^2/(4*k*lambda_N^2*L^2)");
    cert.set("beta", nc.beta, "8*(phi1_k+phi2_k)*N*M_b*(1+L/mu)^2/(c*min M)");
    cert.set("V_c", nc.v_c, "(k*lambda2*sin rho - eta_star^2*lambda_N^2)*rho^2/(2*|A^T M^-1/2 Y|_2inf^2)");
    cert.set("C_bar", nc.c_bar, "sqrt(c*rho^2*(k*lambda2*sin rho - eta_star^2*lambda_N^2)/(4*N*M_b*(1+L/mu)^2*|A^T M^-1/2 Y|_2inf^2*(phi1_k+phi2_k)))");
    cert.set("eta_star_limit", nc.eta_limit, "mu/(2*lambda_N)");
    cert.set("c_limit", nc.c_limit, "(lambda2*sin rho)^2*mu/(2*lambda_N*(lambda_N+lambda2*sin rho))");
    cert.set("assumption2_lhs", a2.lhs, "12*L*max M*sup|xi_b|/(mu*M_b) + 2*sup|xi|_E,inf");
    cert.set("assumption2_rhs", a2.rhs, "k*lambda2(L_B)*cos(2*rho)");
    cert.rate = nc.c;
    cert.floor = nc.beta * cert.inputs.rate_sup.powi(2);
    cert.limit = nc.beta * cert.inputs.rate_limsup.powi(2);
    cert.set("limiting_term", cert.floor, "beta*C^2");
    cert.set("limiting_term_lim", cert.limit, "beta*C_lim^2");
    cert.checks.push(Check::new(
        "rate_within_C_bar",
        cert.inputs.rate_sup <= nc.c_bar,
        format!("C = {} vs C_bar = {}", cert.inputs.rate_sup, nc.c_bar),
    ));
    cert.checks.push(Check::new("sublevel_positive", nc.v_c > 0.0, format!("V_c = {}", nc.v_c)));
}

fn monotonicity_check(inp: &CertificateInputs, spectral: &SpectralSummary, nc: &NonlinearConstants, k: f64, rho: f64) -> Check {
    let up = nonlinear_constants(inp.n, inp.m_b, inp.min_m, spectral, inp.mu, inp.l, 2.0 * k, rho);
    let pass = up.c > nc.c && up.beta < nc.beta;
    Check::new(
        "monotone_in_k",
        pass,
        format!("c: {} -> {}, beta: {} -> {} when k doubles", nc.c, up.c, nc.beta, up.beta),
    )
}

/// `(V(0₊), |ω_b(0)| bound φ₃)` data for the admissible-set test.
struct Admissibility {
    v_bar: f64,
    phi3: f64,
    omega_b0: f64,
}

fn admissibility(
    ctx: &CertifyContext,
    frame: &TransformedFrame,
    nc: &NonlinearConstants,
    k: f64,
    rho: f64,
    theta0: &[f64],
    omega0: &[f64],
) -> Result<(Admissibility, f64), CertifyError> {
    let net = ctx.net;
    let inp_n = net.n_buses() as f64;
    let (mu, l) = (ctx.bounds.mu, ctx.bounds.l);
    let m_b = net.mean_inertia();
    let wb0 = weighted_mean(omega0, net.inertia());
    let (xi0, _) = ctx.profile.eval_side(0.0, Side::Right)?;
    let f_tilde = frame.f_tilde(ctx.rfs, wb0, &xi0)?;
    let start = frame.solve_lambda_p(&f_tilde) / k;
    let star = solve_theta_star(frame, k, &f_tilde, &start, 2.0 * rho)?;
    let (wk, wp, wc) = nonlinear_lyapunov_parts(frame, net.inertia(), k, &frame.to_tilde(theta0), &star, &delta_omega(omega0, wb0));
    let v0 = wk + wp + nc.eta_star * wc;
    let force = initial_blended_force(ctx, wb0)?;
    let v_bar = v0 + 2.0 * inp_n * l * l * (nc.phi1 + nc.phi2) * force * force / (m_b * (2.0 * mu - nc.c));
    let xi_b0 = xi0.iter().sum::<f64>() / inp_n;
    let spectral = net.spectral_summary()?;
    let phi3 = xi_b0.abs() / (mu * m_b) + k * spectral.lambda2_l * (2.0 * rho).cos() / (8.0 * l * net.max_inertia());
    Ok((Admissibility { v_bar, phi3, omega_b0: wb0 }, v0))
}

/// Sinusoidal-flow bound inside the cohesive set. `ctx.net` carries the
/// baseline sensitivities; the flows are `k` times them.
pub fn theorem2_certificate(
    ctx: &CertifyContext,
    k: f64,
    rho: f64,
    init: Option<(&[f64], &[f64])>,
) -> Result<BoundCertificate, CertifyError> {
    require_single_stage(ctx.profile)?;
    let a2 = validate_nonlinear(ctx, k, rho)?;
    let net = ctx.net;
    check_init(net.n_buses(), init)?;
    let spectral = net.spectral_summary()?;
    let inp = inputs(ctx, &spectral, Some(k), Some(rho))?;
    let nc = nonlinear_constants(inp.n, inp.m_b, inp.min_m, &spectral, inp.mu, inp.l, k, rho);
    let mut cert = empty(CertificateKind::T2, inp.clone(), net, FlowModel::Sinusoidal { k });
    fill_nonlinear(&mut cert, &nc, &a2);
    cert.checks.push(monotonicity_check(&inp, &spectral, &nc, k, rho));
    if let Some((theta0, omega0)) = init {
        let frame = TransformedFrame::new(net)?;
        let (adm, v0) = admissibility(ctx, &frame, &nc, k, rho, theta0, omega0)?;
        let alpha = 4.0 * adm.v_bar / inp.min_m;
        cert.set("V0", v0, "V(0+)");
        cert.set("V_bar0", adm.v_bar, "V(0+) + 2*N*L^2*(phi1_k+phi2_k)*|f_b(omega_b(0))+xi_b(0+)|^2/(M_b*(2*mu-c))");
        cert.set("phi3", adm.phi3, "|xi_b(0+)|/(mu*M_b) + k*lambda2(L_B)*cos(2*rho)/(8*L*max M)");
        cert.set("alpha", alpha, "4*V_bar(0+)/min M");
        cert.transient = Some(alpha);
        let inside = adm.v_bar <= nc.v_c && adm.omega_b0.abs() <= adm.phi3;
        cert.checks.push(Check::new(
            "admissible_initial_state",
            inside,
            format!("V_bar(0+) = {} vs V_c = {}, |omega_b(0)| = {} vs {}", adm.v_bar, nc.v_c, adm.omega_b0.abs(), adm.phi3),
        ));
        let tilde0 = frame.to_tilde(theta0);
        cert.checks.push(Check::new(
            "initial_cohesive",
            frame.in_cohesive_set(&tilde0, rho),
            format!("slack {}", frame.cohesive_slack(&tilde0, rho)),
        ));
    }
    Ok(cert)
}

/// Sinusoidal-flow bound after a jump from the steady state of `ξ(0₋)`.
pub fn prop2_certificate(ctx: &CertifyContext, k: f64, rho: f64) -> Result<BoundCertificate, CertifyError> {
    require_single_stage(ctx.profile)?;
    let a2 = validate_nonlinear(ctx, k, rho)?;
    let net = ctx.net;
    let spectral = net.spectral_summary()?;
    let inp = inputs(ctx, &spectral, Some(k), Some(rho))?;
    let nc = nonlinear_constants(inp.n, inp.m_b, inp.min_m, &spectral, inp.mu, inp.l, k, rho);
    let mut cert = empty(CertificateKind::P2, inp.clone(), net, FlowModel::Sinusoidal { k });
    fill_nonlinear(&mut cert, &nc, &a2);
    cert.checks.push(monotonicity_check(&inp, &spectral, &nc, k, rho));
    let sr = rho.sin();
    let zeta1 = inp.lambda_n / (2.0 * k * inp.min_m * (sr * inp.lambda2).powi(2))
        + 2.0 * inp.l * inp.l * (nc.phi1 + nc.phi2) / (inp.m_b * inp.mu);
    let zeta2 = k * inp.lambda2_l * (2.0 * rho).cos() * inp.mu * inp.m_b / (8.0 * inp.l * inp.max_m);
    let delta_bar = (nc.v_c / zeta1).sqrt().min((inp.n as f64).sqrt() * zeta2);
    let alpha_star = 4.0 * zeta1 / inp.min_m;
    cert.set("zeta1", zeta1, "lambda_N/(2*k*min M*(lambda2*sin rho)^2) + 2*L^2*(phi1_k+phi2_k)/(M_b*mu)");
    cert.set("zeta2", zeta2, "k*lambda2(L_B)*cos(2*rho)*mu*M_b/(8*L*max M)");
    cert.set("Delta_bar", delta_bar, "min(sqrt(V_c/zeta1), sqrt(N)*zeta2)");
    cert.set("alpha_star", alpha_star, "4*zeta1/min M");
    if inp.jump > delta_bar {
        return Err(CertifyError::JumpTooLarge { jump: inp.jump, limit: delta_bar });
    }
    if inp.rate_sup > nc.c_bar {
        return Err(CertifyError::RateTooLarge { rate: inp.rate_sup, limit: nc.c_bar });
    }
    let steady = steady_state_nonlinear(net, ctx.rfs, ctx.profile.initial_value(), &ctx.bounds, k, rho)?;
    cert.transient = Some(alpha_star * inp.jump * inp.jump);
    cert.checks.push(Check::new(
        "steady_residual",
        steady.residual < 1e-10,
        format!("residual {:e}", steady.residual),
    ));
    cert.steady_init = Some(steady);
    Ok(cert)
}

/// Criterion used by [`search_rho`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoObjective {
    /// Largest feasibility margin; always favours the smallest grid value.
    Assumption2Margin,
    /// Largest admissible jump `Δ̄` among feasible values.
    JumpRadius,
}

/// Scans `ρ` over an interior grid of `(0, π/4)` and returns the best feasible
/// value with its feasibility report.
pub fn search_rho(
    ctx: &CertifyContext,
    k: f64,
    objective: RhoObjective,
    points: usize,
) -> Result<(f64, Assumption2Report), CertifyError> {
    let points = points.max(2);
    let spectral = ctx.net.spectral_summary()?;
    let n = ctx.net.n_buses();
    let (m_b, min_m, max_m) = (ctx.net.mean_inertia(), ctx.net.min_inertia(), ctx.net.max_inertia());
    let (sup_b, sup_edge) = (ctx.profile.sup_blended(), ctx.profile.sup_edge_difference(ctx.net));
    let mut best: Option<(f64, f64, Assumption2Report)> = None;
    for j in 1..=points {
        let rho = FRAC_PI_4 * j as f64 / (points + 1) as f64;
        let report = assumption2_from_sups(ctx.net, sup_b, sup_edge, &ctx.bounds, rho, k)?;
        if !report.pass {
            continue;
        }
        let score = match objective {
            RhoObjective::Assumption2Margin => report.margin,
            RhoObjective::JumpRadius => {
                let (mu, l) = (ctx.bounds.mu, ctx.bounds.l);
                let nc = nonlinear_constants(n, m_b, min_m, &spectral, mu, l, k, rho);
                let sr = rho.sin();
                let zeta1 = spectral.lambda_n / (2.0 * k * min_m * (sr * spectral.lambda2).powi(2))
                    + 2.0 * l * l * (nc.phi1 + nc.phi2) / (m_b * mu);
                let zeta2 = k * spectral.lambda2_l * (2.0 * rho).cos() * mu * m_b / (8.0 * l * max_m);
                if nc.v_c > 0.0 {
                    (nc.v_c / zeta1).sqrt().min((n as f64).sqrt() * zeta2)
                } else {
                    f64::NEG_INFINITY
                }
            }
        };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, rho, report));
        }
    }
    match best {
        Some((_, rho, report)) => Ok((rho, report)),
        None => {
            let report = assumption2_from_sups(ctx.net, sup_b, sup_edge, &ctx.bounds, FRAC_PI_4 / (points + 1) as f64, k)?;
            Err(CertifyError::AssumptionTwoFailed { margin: report.margin })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodal::{ResponseFunction, SectorBounds};

    fn two_bus() -> PowerNetwork {
        PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn linear_constants_two_bus() {
        let lc = linear_constants(2, 1.0, 1.0, 2.0, 1.0, 1.0);
        assert!((lc.k - 256.0).abs() < 1e-12);
        assert!((lc.c - 1.0 / 12.0).abs() < 1e-15);
        assert!((lc.k * lc.floor_factor - 1152.0).abs() < 1e-9);
        assert!((lc.phi1 - 1.0).abs() < 1e-15);
        assert!((lc.phi2 - 16.0 / 3.0).abs() < 1e-14);
        assert!((lc.alpha_star - 8.5).abs() < 1e-13);
    }

    #[test]
    fn linear_limits_in_connectivity() {
        let lc = linear_constants(3, 1.0, 1.0, 1e9, 0.7, 1.3);
        assert!((lc.c - 0.7 / 4.0).abs() < 1e-6);
        let base = linear_constants(3, 1.0, 1.0, 1.0, 0.7, 1.3);
        assert!(lc.alpha_star < 1e-8 * base.alpha_star);
    }

    #[test]
    fn theorem1_zero_rate_has_zero_floor() {
        let rfs = vec![ResponseFunction::linear(1.0); 2];
        let p = DisturbanceProfile::constant(&[0.1, -0.1], None).unwrap();
        let net = two_bus();
        let ctx = CertifyContext::new(&net, &rfs, &p, (-1.0, 1.0)).unwrap();
        let cert = theorem1_certificate(&ctx, None).unwrap();
        assert_eq!(cert.floor, 0.0);
        assert!(cert.transient.is_none());
        let with = theorem1_certificate(&ctx, Some((&[0.0, 0.0], &[0.0, 0.0]))).unwrap();
        assert!(with.transient.unwrap() > 0.0);
    }

    #[test]
    fn nonlinear_limits_and_monotonicity() {
        let s = SpectralSummary { lambda2: 2.0, lambda2_l: 2.0, lambda_n: 2.0, norm_ay: 2f64.sqrt() };
        let a = nonlinear_constants(2, 1.0, 1.0, &s, 1.0, 1.0, 1.0, 0.3);
        let b = nonlinear_constants(2, 1.0, 1.0, &s, 1.0, 1.0, 10.0, 0.3);
        let z = nonlinear_constants(2, 1.0, 1.0, &s, 1.0, 1.0, 1e12, 0.3);
        assert!(b.c > a.c && b.beta < a.beta);
        assert!((z.eta_star - z.eta_limit).abs() < 1e-5 * z.eta_limit);
        assert!((z.c - z.c_limit).abs() < 1e-5 * z.c_limit);
        assert!(z.beta < 1e-9 * a.beta);
    }

    #[test]
    fn prop2_zeta2_example() {
        // k = 1, λ₂^L = 2, cos 2ρ = 0.8, μ = L = M = 1 ⇒ ζ₂ = 0.2
        let rho = 0.5 * 0.8_f64.acos();
        let zeta2 = 1.0 * 2.0 * (2.0 * rho).cos() * 1.0 * 1.0 / (8.0 * 1.0 * 1.0);
        assert!((zeta2 - 0.2).abs() < 1e-15);
        let net = two_bus();
        let rfs = vec![ResponseFunction::linear(1.0); 2];
        let p = DisturbanceProfile::constant(&[0.0, 0.0], None).unwrap();
        let mut ctx = CertifyContext::new(&net, &rfs, &p, (-1.0, 1.0)).unwrap();
        ctx.bounds = SectorBounds { mu: 1.0, l: 1.0, range: (-1.0, 1.0) };
        let cert = prop2_certificate(&ctx, 1.0, rho).unwrap();
        assert!((cert.constant("zeta2").unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(cert.transient, Some(0.0));
        assert_eq!(cert.floor, 0.0);
    }

    #[test]
    fn rejects_multistage_profiles() {
        let net = two_bus();
        let rfs = vec![ResponseFunction::linear(1.0); 2];
        let p = crate::signals::TwoStageTemplate::default().sample(2, 3).profile().unwrap();
        let ctx = CertifyContext::new(&net, &rfs, &p, (-1.0, 1.0)).unwrap();
        assert!(matches!(prop1_certificate(&ctx), Err(CertifyError::UnsupportedProfile(_))));
    }
}
