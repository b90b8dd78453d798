use hystloop_core::engine::{
    per_period_dc, run_closed_loop, run_open_loop, simulate, ControllerConfig, Disturbance,
    LoopConfig, MetricSettings, SymTarget, Symmetrization,
};
use hystloop_core::plant::{DynamicLoss, JaParams, PlantKind};
use hystloop_core::signals::{ReferenceSpec, Shape};
use hystloop_core::{CtrlParams, Error};

fn linear() -> PlantKind {
    PlantKind::Linear {
        gain: 1.0,
        time_constant_s: 1e-4,
    }
}

fn cpi(kp: f64, ki: f64) -> ControllerConfig {
    ControllerConfig::Cpi(CtrlParams {
        kp,
        ki,
        ..CtrlParams::default()
    })
}

fn config(plant: PlantKind, controller: ControllerConfig, periods: usize) -> LoopConfig {
    LoopConfig {
        reference: ReferenceSpec {
            shape: Shape::Sine,
            frequency_hz: 50.0,
            amplitude: 1.0,
            phase_rad: 0.0,
            periods,
            samples_per_period: 200,
        },
        plant,
        controller,
        init_cycles: 1,
        measure_periods: 3,
        seed: 7,
        symmetrization: None,
        disturbance: None,
        metrics: MetricSettings::default(),
    }
}

fn ja_static() -> PlantKind {
    PlantKind::JaStatic(JaParams {
        field_gain: 4000.0,
        ..JaParams::default()
    })
}

#[test]
fn perturbation_only_affects_later_samples() {
    for plant in [linear(), ja_static()] {
        let cfg = config(plant, cpi(1e-3, 3000.0), 4);
        let base = run_closed_loop(&cfg).unwrap();
        let k0 = 437;
        let bumped = simulate(&cfg, &|k| if k == k0 { 0.05 } else { 0.0 }).unwrap();
        let (a, b) = (&base.traces, &bumped.traces);
        assert_eq!(a.v_b.samples[..k0], b.v_b.samples[..k0]);
        assert_eq!(a.u.samples[..k0], b.u.samples[..k0]);
        assert_ne!(a.v_b.samples[k0], b.v_b.samples[k0]);
    }
}

#[test]
fn bit_identical_reruns() {
    let cfg = config(ja_static(), cpi(1e-4, 3000.0), 4);
    let a = run_closed_loop(&cfg).unwrap();
    let b = run_closed_loop(&cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.traces.v_b.samples), bits(&b.traces.v_b.samples));
    assert_eq!(bits(&a.traces.u.samples), bits(&b.traces.u.samples));
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn traces_have_equal_length_and_window_is_whole_periods() {
    for (periods, measure) in [(4, 1), (5, 3), (6, 4)] {
        let mut cfg = config(linear(), cpi(1e-2, 5000.0), periods);
        cfg.measure_periods = measure;
        let r = run_closed_loop(&cfg).unwrap();
        let n = r.traces.len();
        assert_eq!(n, periods * 200);
        for t in [&r.traces.u, &r.traces.v_b, &r.traces.b] {
            assert_eq!(t.len(), n);
        }
        let w = r.window(&r.traces.v_b);
        assert_eq!(w.len() % 200, 0);
        assert_eq!(w.len(), measure * 200);
        let m = r.metrics;
        for v in [m.ff_vb_percent, m.ff_b_percent, m.rmse_tracking, m.dc_u, m.dc_vb, m.loop_area] {
            assert!(v.is_finite());
        }
    }
}

#[test]
fn tracking_on_linear_plant() {
    let cfg = config(linear(), cpi(1e-3, 8000.0), 6);
    let r = run_closed_loop(&cfg).unwrap();
    assert!(r.metrics.ff_vb_percent.abs() < 1.0, "{:?}", r.metrics);
    assert!(r.metrics.rmse_tracking < 0.02, "{:?}", r.metrics);
}

#[test]
fn symmetrization_removes_disturbance_offset() {
    let mut cfg = config(linear(), cpi(1e-3, 5000.0), 12);
    cfg.disturbance = Some(Disturbance {
        value: 0.3,
        start_period: 1,
    });
    cfg.symmetrization = Some(Symmetrization {
        lambda: 0.5,
        target: SymTarget::U,
    });
    cfg.measure_periods = 2;
    let r = run_closed_loop(&cfg).unwrap();
    let dc = per_period_dc(&r.traces.v_b.samples, 200);
    for (i, d) in dc.iter().enumerate().skip(11) {
        assert!(d.abs() < 1e-3, "period {i}: {d:e}");
    }
}

#[test]
fn symmetrization_drive_dc_non_increasing() {
    for target in [SymTarget::U, SymTarget::Output] {
        let mut cfg = config(linear(), ControllerConfig::None, 12);
        cfg.disturbance = Some(Disturbance {
            value: 0.3,
            start_period: 0,
        });
        cfg.symmetrization = Some(Symmetrization {
            lambda: 0.5,
            target,
        });
        let r = run_closed_loop(&cfg).unwrap();
        let dc: Vec<f64> = per_period_dc(&r.traces.u.samples, 200)
            .iter()
            .map(|d| d.abs())
            .collect();
        assert!((dc[0] - 0.3).abs() < 1e-9);
        for w in dc[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{target:?}: {dc:?}");
        }
        assert!(dc[11] < 1e-3);
    }
    // geometric factor on the drive target
    let mut cfg = config(linear(), ControllerConfig::None, 6);
    cfg.disturbance = Some(Disturbance {
        value: 0.4,
        start_period: 0,
    });
    cfg.symmetrization = Some(Symmetrization {
        lambda: 0.25,
        target: SymTarget::U,
    });
    let r = run_closed_loop(&cfg).unwrap();
    let dc = per_period_dc(&r.traces.u.samples, 200);
    for (i, d) in dc.iter().enumerate() {
        let want = 0.4 * 0.75f64.powi(i as i32);
        assert!((d - want).abs() < 1e-9, "period {i}: {d} vs {want}");
    }
}

#[test]
fn saturating_plant_flattens_sine() {
    let mut cfg = config(
        PlantKind::Saturating {
            gain: 1.0,
            sat_level: 0.6,
        },
        ControllerConfig::None,
        3,
    );
    cfg.init_cycles = 0;
    let r = run_open_loop(&cfg).unwrap();
    assert!(r.metrics.ff_vb_percent < 0.0, "{}", r.metrics.ff_vb_percent);
}

#[test]
fn open_loop_ignores_controller() {
    let cfg = config(ja_static(), cpi(1e-4, 3000.0), 4);
    let r = run_open_loop(&cfg).unwrap();
    assert_eq!(r.traces.u.samples, r.traces.reference.samples);
}

#[test]
fn ja_loop_area_non_negative() {
    let cfg = config(ja_static(), cpi(1e-4, 3000.0), 5);
    let r = run_closed_loop(&cfg).unwrap();
    let h = r.traces.h.as_ref().unwrap();
    let areas = hystloop_core::engine::loop_areas(
        &h.samples[400..],
        &r.traces.v_b.samples[400..],
        200,
    );
    assert!(areas.iter().all(|&a| a >= 0.0), "{areas:?}");
    assert!(r.metrics.loop_area > 0.0);
}

#[test]
fn dynamic_plant_square_drive_is_not_triangular_in_b() {
    let mut cfg = config(
        PlantKind::JaDynamic(JaParams {
            field_gain: 4000.0,
            dynamic: Some(DynamicLoss {
                k_eddy: 0.5,
                k_excess: 1.0,
            }),
            ..JaParams::default()
        }),
        ControllerConfig::None,
        4,
    );
    cfg.reference.shape = Shape::Square;
    cfg.reference.frequency_hz = 500.0;
    cfg.reference.amplitude = 1.45;
    let r = run_open_loop(&cfg).unwrap();
    assert!(r.metrics.ff_b_percent.abs() > 0.5, "{}", r.metrics.ff_b_percent);
}

#[test]
fn divergence_carries_step() {
    let cfg = config(PlantKind::Passthrough, cpi(5.0, 1e5), 4);
    match run_closed_loop(&cfg) {
        Err(Error::Divergence { step, partial, .. }) => {
            assert_eq!(partial.len(), step + 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
