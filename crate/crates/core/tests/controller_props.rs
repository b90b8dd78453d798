use hystloop_core::controller::{ctrl_step, init_term, pid_step, validate, CtrlParams, CtrlState, PidParams, PidState};
use hystloop_core::engine::{run_closed_loop, ControllerConfig, LoopConfig, MetricSettings};
use hystloop_core::plant::{Plant, PlantKind};
use hystloop_core::signals::{ReferenceSpec, Shape};
use proptest::prelude::*;

fn run_sequence(p: &CtrlParams, dt: f64, refs: &[f64], meas: &[f64]) -> Vec<f64> {
    let mut s = CtrlState::new(p);
    refs.iter()
        .zip(meas)
        .map(|(&r, &m)| {
            let (u, next) = ctrl_step(&s, r, m, dt, p).unwrap();
            s = next;
            u
        })
        .collect()
}

#[test]
fn three_step_fixture() {
    let p = CtrlParams {
        kp: 0.5,
        ki: 2.0,
        k_alpha: 1.0,
        k_beta: 0.5,
        ..CtrlParams::default()
    };
    let got = run_sequence(&p, 0.01, &[1.0, 1.0, 1.0], &[0.0, 0.2, 0.5]);

    // the recursion written out by hand
    let s0 = 2.0 * 1.0 * 0.01;
    let w0 = 0.5 * (1.0 - 0.0);
    let s1 = s0 + 2.0 * 0.8 * 0.01;
    let w1 = w0 + 0.5 * ((-0.5f64).exp() - 0.2);
    let s2 = s1 + 2.0 * 0.5 * 0.01;
    let w2 = w1 + 0.5 * ((-1.0f64).exp() - 0.5);
    let want = [s0 + w0, s1 + w1, s2 + w2];

    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    // spot values
    assert!((got[0] - 0.52).abs() < 1e-12);
    assert!((got[1] - 0.739_265_329_856_317).abs() < 1e-12);
}

#[test]
fn init_term_decays_within_horizon() {
    for k_beta in [0.01, 0.1, 0.5, 2.0, 7.3] {
        let p = CtrlParams {
            k_alpha: -3.5,
            k_beta,
            ..CtrlParams::default()
        };
        let horizon = (21.0 / k_beta).floor() as u64 + 1;
        for k in horizon..horizon + 50 {
            assert!(init_term(&p, k).abs() < 1e-9 * p.k_alpha.abs(), "k_beta={k_beta} k={k}");
        }
    }
}

#[test]
fn constant_without_excitation() {
    let p = CtrlParams {
        kp: 0.7,
        ki: 0.0,
        k_alpha: 0.0,
        u_internal0: 0.25,
        ..CtrlParams::default()
    };
    let u = run_sequence(&p, 1e-3, &[1.0; 20], &[0.0; 20]);
    assert!(u.iter().all(|&x| x == 0.25));
}

#[test]
fn validate_examples() {
    let p = CtrlParams {
        kp: 1.0,
        ki: 1.0,
        ..CtrlParams::default()
    };
    assert!(validate(&p).unwrap().is_empty());
    assert!(validate(&CtrlParams { kp: -1.0, ..p }).is_err());
    assert!(!validate(&CtrlParams { ki: 0.0, ..p }).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn superposition(
        kp in 0.01f64..5.0,
        ki in 0.0f64..50.0,
        k_beta in 0.0f64..2.0,
        ka1 in -2.0f64..2.0,
        ka2 in -2.0f64..2.0,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        r1 in prop::collection::vec(-1.0f64..1.0, 8),
        r2 in prop::collection::vec(-1.0f64..1.0, 8),
        m1 in prop::collection::vec(-1.0f64..1.0, 8),
        m2 in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let dt = 1e-3;
        let base = CtrlParams { kp, ki, k_beta, ..CtrlParams::default() };
        let u1 = run_sequence(&CtrlParams { k_alpha: ka1, ..base }, dt, &r1, &m1);
        let u2 = run_sequence(&CtrlParams { k_alpha: ka2, ..base }, dt, &r2, &m2);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| a * p + b * q).collect() };
        let u12 = run_sequence(
            &CtrlParams { k_alpha: a * ka1 + b * ka2, ..base },
            dt,
            &mix(&r1, &r2),
            &mix(&m1, &m2),
        );
        for k in 0..8 {
            let want = a * u1[k] + b * u2[k];
            prop_assert!((u12[k] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn deterministic(
        kp in 0.01f64..5.0,
        ki in 0.0f64..50.0,
        refs in prop::collection::vec(-1.0f64..1.0, 16),
        meas in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let p = CtrlParams { kp, ki, k_alpha: 0.3, k_beta: 0.2, ..CtrlParams::default() };
        let a = run_sequence(&p, 1e-4, &refs, &meas);
        let b = run_sequence(&p, 1e-4, &refs, &meas);
        prop_assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

fn linear_sine(ki: f64) -> LoopConfig {
    LoopConfig {
        reference: ReferenceSpec {
            shape: Shape::Sine,
            frequency_hz: 50.0,
            amplitude: 1.0,
            phase_rad: 0.0,
            periods: 8,
            samples_per_period: 200,
        },
        plant: PlantKind::Linear {
            gain: 1.0,
            time_constant_s: 1e-4,
        },
        controller: ControllerConfig::Cpi(CtrlParams {
            kp: 0.01,
            ki,
            k_alpha: 0.5,
            k_beta: 0.01,
            ..CtrlParams::default()
        }),
        init_cycles: 0,
        measure_periods: 3,
        seed: 0,
        symmetrization: None,
        disturbance: None,
        metrics: MetricSettings::default(),
    }
}

#[test]
fn integral_action_reduces_tracking_error() {
    let without = run_closed_loop(&linear_sine(0.0)).unwrap().metrics.rmse_tracking;
    let with = run_closed_loop(&linear_sine(5000.0)).unwrap().metrics.rmse_tracking;
    assert!(with < without, "{with} !< {without}");
}

#[test]
fn pid_proportional_steady_state_error() {
    // unit step on a unit-gain first-order plant
    for kp in [0.5, 1.0, 4.0] {
        let params = PidParams {
            kp,
            ki: 0.0,
            kd: 0.0,
            n_filter: 0.0,
        };
        let mut plant = Plant::new(PlantKind::Linear {
            gain: 1.0,
            time_constant_s: 0.05,
        })
        .unwrap();
        let mut s = PidState::default();
        let mut v = 0.0;
        let dt = 1e-3;
        for _ in 0..5000 {
            let (u, next) = pid_step(&s, 1.0, v, dt, &params).unwrap();
            s = next;
            v = plant.step(u, dt).unwrap();
        }
        let err = 1.0 - v;
        let want = 1.0 / (1.0 + kp);
        assert!((err - want).abs() < 0.01 * want, "kp={kp}: {err} vs {want}");
    }
}
