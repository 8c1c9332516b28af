mod common;

use common::*;
use shearecho::modes::{dissipation_exponent, integrate, rhs_full, rhs_full_with};
use shearecho::{Config, FSource, InitSpec, Params, State};

fn small_case() -> (Params, f64) {
    (Params::new(0.5, 0.0008, 0.0).unwrap(), 50.0)
}

#[test]
fn rhs_matches_term_by_term_evaluation() {
    let p = Params::new(0.5, 0.001, 0.0).unwrap();
    let s = scrambled_state(20.0, 5, 7);
    for per_l in [false, true] {
        let (a, b) = rhs_terms(20.0, &s, 3e-5, &p, 50.0, per_l);
        let r = rhs_full_with(20.0, &s, 3e-5, &p, 50.0, per_l);
        for i in 0..5 {
            assert!((r.theta[i] - a[i]).norm() <= 1e-14 * a[i].norm().max(1e-300), "theta {i}");
            assert!((r.good[i] - b[i]).norm() <= 1e-13 * b[i].norm(), "G {i}");
        }
    }
}

#[test]
fn integrator_matches_fine_step_rk4() {
    let (p, eta) = small_case();
    for (seed, source) in [(1, FSource::Ode), (2, FSource::Ode), (3, FSource::Zero)] {
        let init = scrambled_state(0.0, 8, seed);
        let mut cfg = Config::new(eta, 8, 0.0, 10.0, InitSpec::State(init.clone()));
        cfg.f_source = source;
        cfg.truncation_guard = None;
        let traj = integrate(&cfg, &p, &init).unwrap();
        let (oracle, f) = rk4_oracle(&p, eta, &init, 0.0, 10.0, 1e-4, source == FSource::Ode);
        let floor = 1e-12 * oracle.l2_norm();
        let worst = worst_mismatch(traj.last(), &oracle, floor);
        assert!(worst <= 1e-6, "seed {seed}: worst relative mismatch {worst:e}");
        if source == FSource::Ode {
            let fw = traj.wave.last().unwrap().f;
            assert!((fw - f).abs() <= 1e-6 * f.abs(), "{fw} vs {f}");
        }
    }
}

#[test]
fn delta_echo_matches_fine_step_rk4() {
    // a resonance (eta/k = 10, 12.5, 16.7) inside the span
    let (p, eta) = small_case();
    let init = {
        let mut s = State::zeros(0.0, 8);
        s.theta[4].re = 1.0;
        s
    };
    let mut cfg = Config::new(eta, 8, 0.0, 10.0, InitSpec::DeltaTheta { mode: 5 });
    cfg.truncation_guard = None;
    let traj = integrate(&cfg, &p, &init).unwrap();
    let (oracle, _) = rk4_oracle(&p, eta, &init, 0.0, 10.0, 1e-4, true);
    let worst = worst_mismatch(traj.last(), &oracle, 1e-12 * oracle.l2_norm());
    assert!(worst <= 1e-6, "worst relative mismatch {worst:e}");
}

#[test]
fn pure_decay_is_reproduced() {
    let p = Params::new(0.7, 0.0, 0.0).unwrap();
    let eta = 40.0;
    let mut init = State::zeros(0.0, 6);
    for i in 0..6 {
        init.good[i] = C::new(1.0 + i as f64, -0.5);
    }
    let mut cfg = Config::new(eta, 6, 0.0, 30.0, InitSpec::State(init.clone()));
    cfg.sample_times = (1..30).map(|i| i as f64).collect();
    cfg.truncation_guard = None;
    let traj = integrate(&cfg, &p, &init).unwrap();
    for s in &traj.samples {
        assert!(s.theta.iter().all(|z| z.norm() == 0.0));
        for i in 0..6 {
            let e = dissipation_exponent(i + 1, 0.0, s.t, 0.7, eta);
            let expect = init.good[i] * (-e).exp();
            assert!(
                (s.good[i] - expect).norm() <= 1e-10 * expect.norm() + 1e-300,
                "t={} l={}: {} vs {}",
                s.t,
                i + 1,
                s.good[i],
                expect
            );
        }
    }
}

#[test]
fn zero_state_stays_zero() {
    let (p, eta) = small_case();
    let init = State::zeros(0.0, 8);
    let cfg = Config::new(eta, 8, 0.0, 10.0, InitSpec::State(init.clone()));
    let traj = integrate(&cfg, &p, &init).unwrap();
    assert!(traj.samples.iter().all(|s| s.l2_norm() == 0.0));
    let r = rhs_full(3.0, &init, 1e-3, &p, eta);
    assert_eq!(r.l2_norm(), 0.0);
}
