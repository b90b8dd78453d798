//! Closed-loop engine.
//!
//! Each sample `k` the controller consumes `(v_ref[k], v_B[k−1])` and emits
//! `u[k]`, then the plant consumes `u[k]` and produces `v_B[k]`. The first
//! `init_cycles` periods drive the plant open-loop with the raw reference
//! while the controller runs in shadow mode; at handoff the internal
//! recursion is seeded so that the controller continues from the last
//! open-loop drive value.
//!
//! Optional symmetrization adds a per-period offset to the drive that
//! removes its DC component geometrically.

use serde::{Deserialize, Serialize};

use crate::controller::{self, ctrl_step, pid_step, CtrlParams, CtrlState, PidParams, PidState};
use crate::error::{Error, Result};
use crate::plant::{Plant, PlantKind};
use crate::signals::{
    dc_component, form_factor_percent, generate_reference, integrate_trace, mean_rectified, rmse,
    ReferenceSpec, SignalTrace,
};

/// Divergence guard relative to the reference amplitude.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerConfig {
    /// Open loop: the plant is driven by the reference itself.
    None,
    Cpi(CtrlParams),
    Pid(PidParams),
}

impl ControllerConfig {
    pub fn ctrl_params(&self) -> Option<&CtrlParams> {
        match self {
            ControllerConfig::Cpi(p) => Some(p),
            _ => None,
        }
    }

    pub fn ctrl_params_mut(&mut self) -> Option<&mut CtrlParams> {
        match self {
            ControllerConfig::Cpi(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymTarget {
    /// DC of the plant drive.
    U,
    /// DC of the measured output, mapped back to drive units.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Symmetrization {
    pub lambda: f64,
    #[serde(default = "default_sym_target")]
    pub target: SymTarget,
}

fn default_sym_target() -> SymTarget {
    SymTarget::U
}

/// Constant disturbance added at the plant input from `start_period` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub value: f64,
    #[serde(default)]
    pub start_period: usize,
}

/// Theoretical form factors used by the metrics. Defaults follow the
/// reference shape.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff_vb_theoretical: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff_b_theoretical: Option<f64>,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub reference: ReferenceSpec,
    pub plant: PlantKind,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub init_cycles: usize,
    pub measure_periods: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetrization: Option<Symmetrization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
    #[serde(default)]
    pub metrics: MetricSettings,
}

impl LoopConfig {
    /// Validates the configuration and returns controller warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.reference.validate()?;
        self.plant.validate()?;
        let warnings = match &self.controller {
            ControllerConfig::None => Vec::new(),
            ControllerConfig::Cpi(p) => controller::validate(p)?,
            ControllerConfig::Pid(p) => {
                p.validate()?;
                Vec::new()
            }
        };
        if self.measure_periods == 0 {
            return Err(Error::param("measure_periods", "must be >= 1"));
        }
        if self.init_cycles >= self.reference.periods
            || self.measure_periods > self.reference.periods - self.init_cycles
        {
            return Err(Error::param(
                "measure_periods",
                format!(
                    "must be <= periods − init_cycles = {}",
                    self.reference.periods.saturating_sub(self.init_cycles)
                ),
            ));
        }
        if let Some(s) = &self.symmetrization {
            if !(s.lambda > 0.0 && s.lambda <= 1.0) {
                return Err(Error::param(
                    "symmetrization.lambda",
                    format!("must lie in (0, 1], got {}", s.lambda),
                ));
            }
        }
        if let Some(d) = &self.disturbance {
            if !d.value.is_finite() {
                return Err(Error::param("disturbance.value", "must be finite"));
            }
        }
        for (name, v) in [
            ("metrics.ff_vb_theoretical", self.metrics.ff_vb_theoretical),
            ("metrics.ff_b_theoretical", self.metrics.ff_b_theoretical),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(name, "must be > 0"));
                }
            }
        }
        Ok(warnings)
    }

    pub fn ff_vb_theoretical(&self) -> f64 {
        self.metrics
            .ff_vb_theoretical
            .unwrap_or_else(|| self.reference.shape.form_factor())
    }

    pub fn ff_b_theoretical(&self) -> f64 {
        self.metrics
            .ff_b_theoretical
            .unwrap_or_else(|| self.reference.shape.integral_form_factor())
    }

    /// Number of samples in the metric window.
    pub fn window_len(&self) -> usize {
        self.measure_periods * self.reference.samples_per_period
    }
}

/// Time series recorded by a run. All traces share `dt` and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub reference: SignalTrace,
    /// Plant drive: controller output plus symmetrization offset and disturbance.
    pub u: SignalTrace,
    pub v_b: SignalTrace,
    /// Time integral of `v_b`, mean removed.
    pub b: SignalTrace,
    /// Applied field, JA plants only.
    pub h: Option<SignalTrace>,
}

impl Traces {
    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ff_vb_percent: f64,
    pub ff_b_percent: f64,
    pub rmse_tracking: f64,
    pub dc_u: f64,
    #[serde(rename = "dc_vB")]
    pub dc_vb: f64,
    /// Mean per-period area of the (H, v_B) loop for JA plants, (u, v_B) otherwise.
    pub loop_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub traces: Traces,
    pub metrics: Metrics,
    /// Resolved configuration that produced this run.
    pub config: LoopConfig,
    pub warnings: Vec<String>,
    /// JA sub-steps where |M| had to be clamped.
    pub clamp_events: u64,
}

impl RunResult {
    /// Metric window (last `measure_periods` periods) of a trace.
    pub fn window<'a>(&self, trace: &'a SignalTrace) -> &'a [f64] {
        let n = self.config.window_len();
        &trace.samples[trace.len() - n..]
    }
}

/// Offset to add to the next period's drive: `−lambda·mean(last period)`.
pub fn symmetrize(history: &SignalTrace, period_samples: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::param("lambda", format!("must lie in (0, 1], got {lambda}")));
    }
    if period_samples == 0 || history.len() < period_samples {
        return Err(Error::State(format!(
            "symmetrization needs a full period of history ({} of {period_samples} samples)",
            history.len()
        )));
    }
    let last = history.tail(period_samples);
    Ok(-lambda * dc_component(&last)?)
}

enum ActiveController {
    Open,
    Cpi(CtrlParams, CtrlState),
    Pid(PidParams, PidState),
}

/// Runs the configured experiment.
pub fn run_closed_loop(cfg: &LoopConfig) -> Result<RunResult> {
    simulate(cfg, &|_| 0.0)
}

/// Runs the plant directly on the reference (controller removed).
pub fn run_open_loop(cfg: &LoopConfig) -> Result<RunResult> {
    let mut open = cfg.clone();
    open.controller = ControllerConfig::None;
    open.symmetrization = None;
    simulate(&open, &|_| 0.0)
}

/// Like [`run_closed_loop`] with an extra additive plant-input signal
/// `injection(k)`.
pub fn simulate(cfg: &LoopConfig, injection: &dyn Fn(usize) -> f64) -> Result<RunResult> {
    let warnings = cfg.validate()?;
    let reference = generate_reference(&cfg.reference)?;
    let spp = cfg.reference.samples_per_period;
    let n = reference.len();
    let dt = reference.dt;
    let limit = DIVERGENCE_FACTOR * cfg.reference.amplitude;

    let mut plant = Plant::new(cfg.plant.clone())?;
    let is_ja = cfg.plant.ja_params().is_some();
    let mut ctrl = match &cfg.controller {
        ControllerConfig::None => ActiveController::Open,
        ControllerConfig::Cpi(p) => ActiveController::Cpi(*p, CtrlState::new(p)),
        ControllerConfig::Pid(p) => ActiveController::Pid(*p, PidState::default()),
    };

    let handoff = cfg.init_cycles * spp;
    let mut u_trace = Vec::with_capacity(n);
    let mut v_trace = Vec::with_capacity(n);
    let mut h_trace = Vec::with_capacity(if is_ja { n } else { 0 });
    let mut v_prev = 0.0;
    let mut last_command = 0.0;
    let mut offset = 0.0;

    for (k, &r) in reference.samples.iter().enumerate() {
        if k > 0 && k % spp == 0 {
            if let Some(sym) = &cfg.symmetrization {
                offset += symmetrization_step(sym, &u_trace, &v_trace, spp, reference.dt)?;
            }
        }
        let closed = k >= handoff;
        let command = match &mut ctrl {
            ActiveController::Open => r,
            ActiveController::Cpi(p, state) => {
                if k == handoff && handoff > 0 {
                    // bumpless transfer from the open-loop drive
                    state.u_internal = last_command - state.integral_acc;
                }
                let (u, next) = ctrl_step(state, r, v_prev, dt, p).map_err(|e| at_step(e, k))?;
                *state = next;
                if closed {
                    u
                } else {
                    r
                }
            }
            ActiveController::Pid(p, state) => {
                let (u, next) = pid_step(state, r, v_prev, dt, p).map_err(|e| at_step(e, k))?;
                *state = next;
                if closed {
                    u
                } else {
                    r
                }
            }
        };
        last_command = command;

        let mut drive = command + offset + injection(k);
        if let Some(d) = &cfg.disturbance {
            if k >= d.start_period * spp {
                drive += d.value;
            }
        }
        if !(drive.abs() <= limit) {
            u_trace.push(if drive.is_finite() { drive } else { 0.0 });
            return Err(divergence(k, "u", drive, limit, &reference, u_trace, v_trace, h_trace));
        }
        let v = plant.step(drive, dt).map_err(|e| at_step(e, k))?;
        u_trace.push(drive);
        if let Some(h) = plant.state().applied_field() {
            h_trace.push(h);
        }
        if !(v.abs() <= limit) {
            v_trace.push(if v.is_finite() { v } else { 0.0 });
            return Err(divergence(k, "v_B", v, limit, &reference, u_trace, v_trace, h_trace));
        }
        v_trace.push(v);
        v_prev = v;
    }

    let clamp_events = match plant.state() {
        crate::plant::PlantState::Ja { ja, .. } => ja.clamp_events,
        _ => 0,
    };
    let traces = build_traces(&reference, u_trace, v_trace, h_trace)?;
    let metrics = compute_metrics(cfg, &traces)?;
    Ok(RunResult {
        traces,
        metrics,
        config: cfg.clone(),
        warnings,
        clamp_events,
    })
}

fn symmetrization_step(
    sym: &Symmetrization,
    u: &[f64],
    v: &[f64],
    spp: usize,
    dt: f64,
) -> Result<f64> {
    match sym.target {
        SymTarget::U => {
            let hist = SignalTrace::new(u[u.len() - spp..].to_vec(), dt, "u")?;
            symmetrize(&hist, spp, sym.lambda)
        }
        SymTarget::Output => {
            let u_last = SignalTrace::new(u[u.len() - spp..].to_vec(), dt, "u")?;
            let v_last = SignalTrace::new(v[v.len() - spp..].to_vec(), dt, "vB")?;
            let v_scale = mean_rectified(&v_last)?;
            if v_scale == 0.0 {
                return Ok(0.0);
            }
            // drive-per-output ratio over the last period
            let gain = mean_rectified(&u_last)? / v_scale;
            Ok(gain * symmetrize(&v_last, spp, sym.lambda)?)
        }
    }
}

fn at_step(err: Error, k: usize) -> Error {
    match err {
        Error::Numeric { what, .. } => Error::Numeric { step: k, what },
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
fn divergence(
    step: usize,
    signal: &'static str,
    value: f64,
    limit: f64,
    reference: &SignalTrace,
    mut u: Vec<f64>,
    mut v: Vec<f64>,
    mut h: Vec<f64>,
) -> Error {
    let len = u.len().max(v.len());
    u.resize(len, 0.0);
    v.resize(len, 0.0);
    if !h.is_empty() {
        h.resize(len, 0.0);
    }
    let partial = build_traces(&reference.window(0, len), u, v, h);
    match partial {
        Ok(traces) => Error::Divergence {
            step,
            signal,
            value,
            limit,
            partial: Box::new(traces),
        },
        Err(e) => e,
    }
}

fn build_traces(
    reference: &SignalTrace,
    u: Vec<f64>,
    v: Vec<f64>,
    h: Vec<f64>,
) -> Result<Traces> {
    let dt = reference.dt;
    let v_b = SignalTrace::new(v, dt, "vB")?;
    let b = integrate_trace(&v_b, 1.0, true)?.with_label("B");
    Ok(Traces {
        reference: reference.clone(),
        u: SignalTrace::new(u, dt, "u")?,
        v_b,
        b,
        h: if h.is_empty() {
            None
        } else {
            Some(SignalTrace::new(h, dt, "H")?)
        },
    })
}

/// Per-period shoelace area of the closed curve `(x, y)`; positive when
/// traversed counter-clockwise.
pub fn loop_areas(x: &[f64], y: &[f64], period_samples: usize) -> Vec<f64> {
    x.chunks_exact(period_samples)
        .zip(y.chunks_exact(period_samples))
        .map(|(xs, ys)| {
            let n = xs.len();
            let twice: f64 = (0..n)
                .map(|i| {
                    let j = (i + 1) % n;
                    xs[i] * ys[j] - xs[j] * ys[i]
                })
                .sum();
            0.5 * twice
        })
        .collect()
}

/// Per-period DC of a trace window.
pub fn per_period_dc(samples: &[f64], period_samples: usize) -> Vec<f64> {
    samples
        .chunks_exact(period_samples)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

pub fn compute_metrics(cfg: &LoopConfig, traces: &Traces) -> Result<Metrics> {
    let n = cfg.window_len();
    let spp = cfg.reference.samples_per_period;
    let start = traces.len() - n;
    let w = |t: &SignalTrace| t.window(start, start + n);
    let v = w(&traces.v_b);
    let u = w(&traces.u);
    let x = traces.h.as_ref().map_or_else(|| u.clone(), w);
    let areas = loop_areas(&x.samples, &v.samples, spp);
    let metrics = Metrics {
        ff_vb_percent: form_factor_percent(&v, cfg.ff_vb_theoretical())?,
        ff_b_percent: form_factor_percent(&w(&traces.b), cfg.ff_b_theoretical())?,
        rmse_tracking: rmse(&w(&traces.reference), &v)?,
        dc_u: dc_component(&u)?,
        dc_vb: dc_component(&v)?,
        loop_area: areas.iter().sum::<f64>() / areas.len() as f64,
    };
    Ok(metrics)
}
