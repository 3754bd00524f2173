//! Explicit Runge–Kutta integrators: Dormand–Prince 5(4) with the
//! Hairer–Wanner dense output, and classic fixed-step RK4.

use super::{EngineError, IntegratorConfig, Method};

pub(crate) trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EngineError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl std::ops::AddAssign for StepStats {
    fn add_assign(&mut self, o: Self) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn check_finite(t: f64, y: &[f64]) -> Result<(), EngineError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::NonFiniteState(t))
    }
}

/// Integrates from `t0` to `t1`, calling `sink(j, y)` for every output time
/// `outputs[j]` (sorted, inside `[t0, t1]`). Returns the state at `t1`.
pub(crate) fn integrate<S: System>(
    sys: &S,
    t0: f64,
    t1: f64,
    y0: &[f64],
    outputs: &[f64],
    cfg: &IntegratorConfig,
    sink: &mut dyn FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, StepStats), EngineError> {
    check_finite(t0, y0)?;
    match cfg.method {
        Method::Adaptive => dopri5(sys, t0, t1, y0, outputs, cfg, sink),
        Method::FixedRk4 => rk4(sys, t0, t1, y0, outputs, cfg.fixed_step, sink),
    }
}

fn rk4<S: System>(
    sys: &S,
    t0: f64,
    t1: f64,
    y0: &[f64],
    outputs: &[f64],
    h_max: f64,
    sink: &mut dyn FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, StepStats), EngineError> {
    let n = sys.dim();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut t = t0;
    // Consecutive targets: every output time, then t1.
    let targets = outputs.iter().copied().chain(std::iter::once(t1));
    for (j, target) in targets.enumerate() {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / h_max).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                let ts = t + s as f64 * h;
                sys.rhs(ts, &y, &mut k1)?;
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                sys.rhs(ts + 0.5 * h, &tmp, &mut k2)?;
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                sys.rhs(ts + 0.5 * h, &tmp, &mut k3)?;
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                sys.rhs(ts + h, &tmp, &mut k4)?;
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                stats.rhs_evals += 4;
                stats.accepted += 1;
                check_finite(ts + h, &y)?;
            }
            t = target;
        }
        if j < outputs.len() {
            sink(j, &y);
        }
    }
    Ok((y, stats))
}

fn error_norm(y: &[f64], ynew: &[f64], err: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = y.len() as f64;
    let sum: f64 = y
        .iter()
        .zip(ynew)
        .zip(err)
        .map(|((a, b), e)| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<S: System>(sys: &S, t0: f64, y0: &[f64], f0: &[f64], cfg: &IntegratorConfig, span: f64) -> Result<f64, EngineError> {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| cfg.abs_tol + cfg.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(cfg.max_step).min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t0 + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(cfg.max_step).min(span))
}

fn dopri5<S: System>(
    sys: &S,
    t0: f64,
    t1: f64,
    y0: &[f64],
    outputs: &[f64],
    cfg: &IntegratorConfig,
    sink: &mut dyn FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, StepStats), EngineError> {
    let n = sys.dim();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        sink(next_out, &y);
        next_out += 1;
    }
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok((y, stats));
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut dense = vec![0.0; n];

    sys.rhs(t0, &y, &mut k1)?;
    stats.rhs_evals += 1;
    let mut h = initial_step(sys, t0, &y, &k1, cfg, span)?;
    stats.rhs_evals += 1;
    let mut t = t0;
    let mut last_rejected = false;

    while t < t1 {
        let mut final_step = false;
        if t + h >= t1 || t + 1.01 * h >= t1 {
            h = t1 - t;
            final_step = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(EngineError::StepSizeUnderflow(t));
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &tmp, &mut k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &tmp, &mut k5)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if final_step { t1 } else { t + h };
        sys.rhs(t_new, &tmp, &mut k6)?;
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t_new, &ynew, &mut k7)?;
        stats.rhs_evals += 6;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&y, &ynew, &err, cfg.rel_tol, cfg.abs_tol);
        if !en.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }

        if en <= 1.0 {
            stats.accepted += 1;
            // Dense output on [t, t_new].
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let s = (outputs[next_out] - t) / h;
                let s1 = 1.0 - s;
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    let r4 = ydiff - h * k7[i] - bspl;
                    let r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    dense[i] = y[i] + s * (ydiff + s1 * (bspl + s * (r4 + s1 * r5)));
                }
                if outputs[next_out] == t_new {
                    sink(next_out, &ynew);
                } else {
                    sink(next_out, &dense);
                }
                next_out += 1;
            }
            check_finite(t_new, &ynew)?;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(cfg.max_step);
            last_rejected = false;
            if final_step {
                break;
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok((y, stats))
}
