//! End-to-end synthesis on the 1-D toy plant: xdot = u, allowable set
//! [-1, 1], legacy u_n = -x. The safe interval of the synthesized barrier
//! must approach the whole allowable interval, and the certificate must
//! survive sampled verification and drive the runtime filter.

use sossf::certificate::SafetyCertificate;
use sossf::model::toy_1d;
use sossf::runtime::{assemble, licq_check, solve_filter, FilterOptions, FilterStatus};
use sossf::sim::{verify_certificate_sampled, VerifyOptions};
use sossf::slack::{synthesize_slack, SlackOptions};
use sossf::synth::{synthesize, DegreeConfig, SynthOptions};

fn toy_certificate() -> (SafetyCertificate, sossf::synth::SynthReport) {
    let model = toy_1d();
    let degrees = DegreeConfig::derive(&model, 2, 2, 1, 2);
    let opts = SynthOptions {
        seed: 3,
        main_max_iters: 25,
        ..SynthOptions::default()
    };
    let (mut cert, report) = synthesize(&model, &degrees, &opts).expect("toy synthesis");
    let r = synthesize_slack(&cert, &model, &SlackOptions::default()).expect("toy slack");
    cert.r = r;
    (cert, report)
}

#[test]
fn toy_pipeline_grows_the_safe_interval_and_verifies() {
    let model = toy_1d();
    let (cert, report) = toy_certificate();

    // interval oracle: dense 1-D scan of {B <= 0} within [-1, 1]
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut covered = 0usize;
    let scan = 20_000;
    for k in 0..=scan {
        let x = -1.0 + 2.0 * k as f64 / scan as f64;
        if cert.b_max(&[x]).unwrap() <= 0.0 {
            lo = lo.min(x);
            hi = hi.max(x);
            covered += 1;
        }
    }
    let coverage = covered as f64 / (scan + 1) as f64;
    assert!(
        coverage >= 0.95,
        "safe interval [{lo:.4}, {hi:.4}] covers only {:.1}% of [-1, 1]",
        100.0 * coverage
    );

    // init reached rho = 0 quickly
    assert_eq!(*report.rho_history.last().unwrap(), 0.0);
    assert!(
        report.init_iterations <= 15,
        "init took {} iterations",
        report.init_iterations
    );

    // trace objective never decreases between accepted iterations
    for w in report.trace_history.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-8,
            "trace surrogate decreased: {} -> {}",
            w[0],
            w[1]
        );
    }

    // sampled certificate verification
    let rep = verify_certificate_sampled(
        &cert,
        &model,
        &VerifyOptions {
            n_samples: 20_000,
            ..VerifyOptions::default()
        },
    )
    .unwrap();
    assert!(rep.pass(), "verification failed:\n{}", rep.summary());
}

#[test]
fn toy_filter_matches_legacy_inside_nominal_region() {
    let model = toy_1d();
    let (cert, _) = toy_certificate();
    // points well inside the nominal region: filter returns u_n exactly
    for k in 0..50 {
        let x = -0.2 + 0.4 * k as f64 / 49.0;
        if !cert.in_nominal(&[x], -1e-3) {
            continue;
        }
        let inst = assemble(&cert, &model, &[x]).unwrap();
        let res = solve_filter(&inst, &FilterOptions::default()).unwrap();
        assert_eq!(res.status, FilterStatus::LegacyFeasible);
        assert_eq!(res.u_s[0], -x);
        assert_eq!(res.kkt_residual, 0.0);
    }
}

#[test]
fn toy_filter_intervenes_in_transitional_region() {
    let model = toy_1d();
    let (cert, _) = toy_certificate();
    // deep in the transitional region the CLF row binds; the filter output
    // must satisfy every row within tolerance and stay KKT-consistent
    let mut saw_intervention = false;
    for k in 0..60 {
        let x = 0.5 + 0.49 * k as f64 / 59.0;
        if !cert.in_safe(&[x], 0.0) {
            continue;
        }
        let inst = assemble(&cert, &model, &[x]).unwrap();
        let res = solve_filter(&inst, &FilterOptions::default()).unwrap();
        if res.status == FilterStatus::Optimal {
            saw_intervention = true;
            assert!(
                res.kkt_residual <= 1e-7,
                "kkt residual {} at x={x}",
                res.kkt_residual
            );
            // rows hold
            for (i, crow) in inst.c.iter().enumerate() {
                let v: f64 = crow[0] * res.u_s[0] + inst.b[i] - inst.r[i];
                assert!(v <= 1e-6, "row {i} violated by {v:.3e} at x={x}");
            }
        }
        let licq = licq_check(&inst, &res.u_s, 1e-7);
        assert!(licq.ok, "LICQ failed at x={x}");
    }
    assert!(saw_intervention, "filter never intervened in X_t");
}

#[test]
fn toy_closed_loop_converges_to_nominal_and_stays() {
    use sossf::runtime::Filter;
    use sossf::sim::{integrate, measure_convergence, IntegratorConfig};
    let model = toy_1d();
    let (cert, _) = toy_certificate();
    let filter = Filter::new(&cert, &model).unwrap();
    let x0 = [0.97f64];
    assert!(cert.in_safe(&x0, 0.0));
    let cfg = IntegratorConfig {
        dt_ctrl: 1e-4,
        store_every: 5,
        ..IntegratorConfig::default()
    };
    let traj = integrate(
        &model,
        Some(&cert),
        |x| Ok((filter.filter(x)?.u_s, 0)),
        &x0,
        6.0,
        &cfg,
    )
    .unwrap();
    let conv = measure_convergence(&traj, &cert, &model, 11).unwrap();
    let t_hit = conv.t_hit.expect("trajectory never reached the nominal region");
    let v0x = cert.v.eval(&x0).unwrap();
    assert!(
        t_hit <= 1.1 * v0x / conv.l,
        "finite-time bound violated: T={t_hit}, V(x0)/l={}",
        v0x / conv.l
    );
    assert!(
        conv.worst_invariance_violation <= 1e-6,
        "left the nominal region after entering: {}",
        conv.worst_invariance_violation
    );
    // forward invariance of the allowable set along the way
    for x in &traj.x {
        assert!(model.in_allowable(x, 1e-4));
    }
}
