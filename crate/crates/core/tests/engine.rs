use std::io::BufReader;

use approx::assert_abs_diff_eq;
use coherency::engine::{
    derived_traces, integrate_blended, lyapunov_trace, read_trajectory_csv, restart_at_stage, simulate,
    write_trajectory_csv, BlendedRun, CsvOptions, LyapunovMode, SwingRun,
};
use coherency::grid::{random_network, RandomNetworkSpec};
use coherency::nodal::{invert_blended, sector_bounds};
use coherency::signals::StageSpec;
use coherency::{
    DisturbanceProfile, EngineError, FlowModel, IntegratorConfig, Method, PowerNetwork, ResponseFunction, Term,
};
use proptest::prelude::*;

fn two_bus() -> PowerNetwork {
    PowerNetwork::new(vec![1.0, 1.0], [(0, 1, 1.0)]).unwrap()
}

fn cfg(t_end: f64, dt: f64) -> IntegratorConfig {
    IntegratorConfig::with_horizon(t_end, dt)
}

#[test]
fn identical_buses_stay_identical() {
    let net = two_bus();
    let rfs = vec![ResponseFunction::saturated(1.0, 0.2); 2];
    let p = DisturbanceProfile::uniform(2, vec![Term::Sinusoid { b: 0.1, omega: 1.0, phi: 0.0 }]).unwrap();
    let traj = simulate(&net, &rfs, &p, &[0.0, 0.0], &[0.2, 0.2], FlowModel::Linear, &cfg(10.0, 0.1), None).unwrap();
    for j in 0..traj.len() {
        let w = traj.omega_at(j);
        assert_eq!(w[0], w[1]);
        let th = traj.theta_at(j);
        assert_eq!(net.dc_injections(th), vec![0.0, 0.0]);
    }
}

#[test]
fn decoupled_decay() {
    let rfs = vec![ResponseFunction::linear(1.0); 2];
    let p = DisturbanceProfile::constant(&[0.0, 0.0], None).unwrap();
    let traj = simulate(&two_bus(), &rfs, &p, &[0.0, 0.0], &[1.0, 1.0], FlowModel::Linear, &cfg(1.0, 0.5), None).unwrap();
    let last = traj.len() - 1;
    assert_eq!(traj.times[last], 1.0);
    for &w in traj.omega_at(last) {
        assert_abs_diff_eq!(w, (-1.0f64).exp(), epsilon = 1e-7);
    }
}

#[test]
fn small_angle_flows_agree() {
    let net = random_network(&RandomNetworkSpec::new(5, 3, 9)).unwrap().scale_lines(20.0).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::linear(m)).collect();
    let xi = [0.01, -0.005, 0.002, -0.004, -0.003];
    let p = DisturbanceProfile::constant(&xi, None).unwrap();
    let zero = vec![0.0; 5];
    let c = cfg(20.0, 0.1);
    let lin = simulate(&net, &rfs, &p, &zero, &zero, FlowModel::Linear, &c, None).unwrap();
    let sin = simulate(&net, &rfs, &p, &zero, &zero, FlowModel::Sinusoidal { k: 1.0 }, &c, None).unwrap();
    let max_angle = (0..lin.len())
        .flat_map(|j| net.lines().iter().map(move |l| (l.from, l.to, j)))
        .map(|(a, b, j)| (lin.theta_at(j)[a] - lin.theta_at(j)[b]).abs())
        .fold(0.0, f64::max);
    assert!(max_angle < 0.01, "max angle difference {max_angle}");
    let gap = lin.omega.iter().zip(&sin.omega).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-4, "gap {gap}");
}

#[test]
fn blended_examples() {
    let rfs = [ResponseFunction::linear(1.0)];
    let one = DisturbanceProfile::constant(&[1.0], None).unwrap();
    let run = integrate_blended(&[1.0], &rfs, &one, 0.0, &cfg(1.0, 0.25)).unwrap();
    assert_abs_diff_eq!(*run.omega_b.last().unwrap(), 1.0 - (-1.0f64).exp(), epsilon = 1e-8);

    let zero = DisturbanceProfile::constant(&[0.0], None).unwrap();
    let run = integrate_blended(&[1.0], &rfs, &zero, 0.0, &cfg(5.0, 0.5)).unwrap();
    assert!(run.omega_b.iter().all(|&w| w == 0.0));

    let rfs = [ResponseFunction::saturated(1.0, 0.2), ResponseFunction::saturated(2.0, 0.5)];
    let xi = [0.3, 0.1];
    let p = DisturbanceProfile::constant(&xi, None).unwrap();
    let run = integrate_blended(&[1.0, 2.0], &rfs, &p, 0.0, &cfg(60.0, 1.0)).unwrap();
    let target = invert_blended(&rfs, 1.5, 1.0, -0.2).unwrap();
    assert!((run.omega_b.last().unwrap() - target).abs() < 1e-8);
}

#[test]
fn coi_examples() {
    let swing = |omega: Vec<f64>| SwingRun {
        times: vec![0.0],
        theta: vec![0.0, 0.0],
        omega,
        n: 2,
        stage_marks: Vec::new(),
        flow: FlowModel::Linear,
        network_fingerprint: 0,
        stats_accepted: 0,
        stats_rejected: 0,
    };
    let blended = BlendedRun { times: vec![0.0], omega_b: vec![0.0] };
    let t = derived_traces(&swing(vec![5.0, 5.0]), &blended, &[0.3, 7.0]).unwrap();
    assert_abs_diff_eq!(t.omega_coi[0], 5.0, epsilon = 1e-15);
    let t = derived_traces(&swing(vec![1.0, 3.0]), &blended, &[1.0, 3.0]).unwrap();
    assert_eq!(t.omega_coi[0], 2.5);
    assert_eq!(t.err_at(0), 3.0);
    let shifted = BlendedRun { times: vec![0.5], omega_b: vec![0.0] };
    assert!(matches!(derived_traces(&swing(vec![1.0, 3.0]), &shifted, &[1.0, 3.0]), Err(EngineError::GridMismatch)));
}

#[test]
fn homogeneous_network_is_coherent() {
    let net = random_network(&RandomNetworkSpec::new(6, 4, 5)).unwrap();
    let fo = ResponseFunction::saturated(0.8, 0.2);
    let rfs: Vec<_> = net.inertia().iter().map(|&m| fo.scaled(m)).collect();
    let terms = vec![Term::Ramp { a: 0.2, r: 0.3 }, Term::Sinusoid { b: 0.02, omega: 1.5, phi: 0.3 }];
    let p = DisturbanceProfile::uniform(6, terms).unwrap().scaled_per_bus(net.inertia());
    let c = cfg(30.0, 0.1);
    let traj = simulate(&net, &rfs, &p, &[0.0; 6], &[0.05; 6], FlowModel::Linear, &c, None).unwrap();
    let worst = traj.err().into_iter().fold(0.0, f64::max);
    assert!(worst < 10.0 * c.rel_tol, "err {worst}");
}

#[test]
fn steady_state_has_zero_lyapunov_value() {
    let net = random_network(&RandomNetworkSpec::new(4, 2, 1)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::linear(1.5 * m)).collect();
    let xi = [0.05, -0.02, 0.01, -0.01];
    let p = DisturbanceProfile::constant(&xi, None).unwrap();
    let ss = coherency::certify::steady_state_linear(&net, &rfs, &xi).unwrap();
    let traj = simulate(&net, &rfs, &p, &ss.theta, &ss.omega(), FlowModel::Linear, &cfg(5.0, 0.1), None).unwrap();
    let bounds = sector_bounds(&rfs, net.inertia(), (-1.0, 1.0)).unwrap();
    let trace = lyapunov_trace(&traj, &net, &rfs, &p, &bounds, LyapunovMode::Linear).unwrap();
    for s in &trace.samples {
        assert!(s.v.abs() < 1e-10, "V({}) = {}", s.t, s.v);
    }
}

#[test]
fn linear_lyapunov_inequality() {
    for seed in 0..5 {
        let net = random_network(&RandomNetworkSpec::new(5, 3, seed)).unwrap();
        let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::saturated(m, 0.3)).collect();
        let terms = [Term::Ramp { a: 0.1, r: 0.2 }, Term::Sinusoid { b: 0.01, omega: 1.0, phi: 0.0 }];
        let p = DisturbanceProfile::per_bus(
            (0..5).map(|i| terms.iter().map(|t| match *t {
                Term::Ramp { a, r } => Term::Ramp { a: a * (i as f64 - 2.0), r },
                other => other,
            }).collect()).collect(),
            None,
        )
        .unwrap();
        let omega0: Vec<f64> = (0..5).map(|i| 0.02 * i as f64).collect();
        let traj = simulate(&net, &rfs, &p, &[0.0; 5], &omega0, FlowModel::Linear, &cfg(20.0, 0.02), None).unwrap();
        let bounds = sector_bounds(&rfs, net.inertia(), (-1.0, 1.0)).unwrap();
        let trace = lyapunov_trace(&traj, &net, &rfs, &p, &bounds, LyapunovMode::Linear).unwrap();
        let (fraction, _) = trace.decay_fraction(1e-6);
        assert!(fraction >= 0.99, "seed {seed}: {fraction}");
        for (j, s) in trace.samples.iter().enumerate() {
            let w = traj.omega_at(j);
            for (i, m) in net.inertia().iter().enumerate() {
                let d = w[i] - traj.omega_b[j];
                assert!(m * d * d <= 2.0 * s.v * (1.0 + 1e-9) + 1e-14, "seed {seed}, t = {}", s.t);
            }
        }
    }
}

#[test]
fn tolerance_halving_converges() {
    let net = random_network(&RandomNetworkSpec::new(6, 4, 3)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::saturated(m, 0.2)).collect();
    let p = DisturbanceProfile::uniform(6, vec![Term::Ramp { a: 0.1, r: 0.1 }, Term::Sinusoid { b: 0.01, omega: 2.0, phi: 0.0 }])
        .unwrap();
    let omega0: Vec<f64> = (0..6).map(|i| 0.01 * i as f64).collect();
    let loose = cfg(20.0, 0.1);
    let tight = IntegratorConfig { rel_tol: loose.rel_tol / 2.0, abs_tol: loose.abs_tol / 2.0, ..loose.clone() };
    let a = simulate(&net, &rfs, &p, &[0.0; 6], &omega0, FlowModel::Linear, &loose, None).unwrap();
    let b = simulate(&net, &rfs, &p, &[0.0; 6], &omega0, FlowModel::Linear, &tight, None).unwrap();
    for (x, y) in a.omega.iter().zip(&b.omega) {
        let tol = tight.abs_tol + tight.rel_tol * y.abs();
        assert!((x - y).abs() < 10.0 * tol, "{x} vs {y}");
    }
}

#[test]
fn fixed_step_is_bit_reproducible() {
    let net = random_network(&RandomNetworkSpec::new(5, 2, 8)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::saturated(m, 0.2)).collect();
    let p = DisturbanceProfile::uniform(5, vec![Term::Sinusoid { b: 0.02, omega: 1.0, phi: 0.1 }]).unwrap();
    let c = IntegratorConfig { method: Method::FixedRk4, ..cfg(10.0, 0.1) };
    let run = || simulate(&net, &rfs, &p, &[0.0; 5], &[0.01; 5], FlowModel::Sinusoidal { k: 1.0 }, &c, None).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn csv_round_trip() {
    let net = random_network(&RandomNetworkSpec::new(3, 1, 2)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::linear(m)).collect();
    let stages = [
        StageSpec { until: Some(1.0), all: vec![Term::Constant { a: 0.1 }], buses: Vec::new() },
        StageSpec { until: None, all: vec![Term::Sinusoid { b: 0.1, omega: 3.0, phi: 0.0 }], buses: Vec::new() },
    ];
    let p = DisturbanceProfile::new(3, &stages, None).unwrap();
    let traj = simulate(&net, &rfs, &p, &[0.0, 0.1, -0.1], &[0.0; 3], FlowModel::Linear, &cfg(2.0, 0.1), None).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf, CsvOptions { angles: true }).unwrap();
    let back = read_trajectory_csv(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.times, traj.times);
    assert_eq!(back.omega, traj.omega);
    assert_eq!(back.omega_b, traj.omega_b);
    assert_eq!(back.omega_coi, traj.omega_coi);
    assert_eq!(back.err, traj.err());
    assert_eq!(back.theta.as_ref(), Some(&traj.theta));
    assert_eq!(back.stage_marks, traj.stage_marks);
}

#[test]
fn restart_matches_a_fresh_run() {
    let net = random_network(&RandomNetworkSpec::new(4, 2, 6)).unwrap();
    let rfs: Vec<_> = net.inertia().iter().map(|&m| ResponseFunction::saturated(m, 0.2)).collect();
    let stages = [
        StageSpec { until: Some(5.0), all: vec![Term::Ramp { a: 0.1, r: 0.5 }], buses: Vec::new() },
        StageSpec {
            until: None,
            all: vec![Term::Constant { a: 0.08 }],
            buses: vec![vec![Term::Step { h: 0.02 }], vec![], vec![Term::Step { h: -0.01 }], vec![]],
        },
    ];
    let p = DisturbanceProfile::new(4, &stages, None).unwrap();
    let c = cfg(12.0, 0.05);
    let traj = simulate(&net, &rfs, &p, &[0.0; 4], &[0.0; 4], FlowModel::Linear, &c, None).unwrap();
    let (stage, slice) = restart_at_stage(&traj, &rfs, &p, 1, &c).unwrap();
    assert_eq!(slice.times[0], 0.0);
    assert!(slice.stage_marks.is_empty());
    assert_eq!(stage.initial_value(), &p.eval_side(5.0, coherency::signals::Side::Left).unwrap().0[..]);
    let j0 = traj.stage_range(1).start;
    let fresh_cfg = IntegratorConfig { extra_times: slice.times.clone(), ..cfg(*slice.times.last().unwrap(), 7.0) };
    let fresh = simulate(&net, &rfs, &stage, traj.theta_at(j0), traj.omega_at(j0), FlowModel::Linear, &fresh_cfg, None)
        .unwrap();
    assert_eq!(fresh.times, slice.times);
    for (a, b) in fresh.omega_b.iter().zip(&slice.omega_b) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in fresh.omega.iter().zip(&slice.omega) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

fn arb_case() -> impl Strategy<Value = (PowerNetwork, Vec<ResponseFunction>, DisturbanceProfile, Vec<f64>)> {
    (3usize..7, 0usize..5, any::<u64>()).prop_map(|(n, extra, seed)| {
        use rand::{Rng, SeedableRng};
        let net = random_network(&RandomNetworkSpec::new(n, extra, seed)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rfs = (0..n).map(|_| ResponseFunction::saturated(rng.random_range(0.3..2.0), rng.random_range(0.0..0.5))).collect();
        let terms = (0..n)
            .map(|_| {
                vec![
                    Term::Ramp { a: rng.random_range(-0.3..0.3), r: rng.random_range(0.05..0.5) },
                    Term::Sinusoid { b: rng.random_range(0.0..0.05), omega: rng.random_range(0.5..3.0), phi: 0.0 },
                ]
            })
            .collect();
        let p = DisturbanceProfile::per_bus(terms, None).unwrap();
        let omega0 = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
        (net, rfs, p, omega0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn momentum_balance((net, rfs, p, omega0) in arb_case(), sinusoidal in any::<bool>()) {
        let n = net.n_buses();
        let flow = if sinusoidal { FlowModel::Sinusoidal { k: 1.0 } } else { FlowModel::Linear };
        let dt = 0.01;
        let traj = simulate(&net, &rfs, &p, &vec![0.0; n], &omega0, flow, &cfg(5.0, dt), None).unwrap();
        let momentum: Vec<f64> = (0..traj.len())
            .map(|j| traj.omega_at(j).iter().zip(net.inertia()).map(|(w, m)| w * m).sum())
            .collect();
        for j in 1..traj.len() - 1 {
            let numeric = (momentum[j + 1] - momentum[j - 1]) / (2.0 * dt);
            let (xi, _) = p.eval(traj.times[j]).unwrap();
            let exact: f64 = rfs.iter().zip(traj.omega_at(j)).zip(&xi).map(|((rf, &w), x)| rf.eval(w).unwrap().0 + x).sum();
            prop_assert!((numeric - exact).abs() < 1e-4 * exact.abs().max(1.0), "t = {}: {numeric} vs {exact}", traj.times[j]);
        }
    }

    #[test]
    fn error_bounds_pairwise_spread((net, rfs, p, omega0) in arb_case()) {
        let n = net.n_buses();
        let traj = simulate(&net, &rfs, &p, &vec![0.0; n], &omega0, FlowModel::Linear, &cfg(10.0, 0.1), None).unwrap();
        prop_assert_eq!(traj.omega_b[0], coherency::engine::weighted_mean(&omega0, net.inertia()));
        for j in 0..traj.len() {
            prop_assert!(traj.err_at(j) >= 0.0);
            prop_assert!(traj.spread_at(j) <= 2.0 * traj.err_at(j) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn blended_ignores_lines((net, rfs, p, omega0) in arb_case(), seed in any::<u64>()) {
        let n = net.n_buses();
        let other = random_network(&RandomNetworkSpec::new(n, 2, seed)).unwrap().with_inertia(net.inertia().to_vec()).unwrap();
        let c = cfg(10.0, 0.1);
        let a = simulate(&net, &rfs, &p, &vec![0.0; n], &omega0, FlowModel::Linear, &c, None).unwrap();
        let b = simulate(&other, &rfs, &p, &vec![0.0; n], &omega0, FlowModel::Linear, &c, None).unwrap();
        prop_assert_eq!(a.times, b.times);
        prop_assert_eq!(a.omega_b, b.omega_b);
    }
}
