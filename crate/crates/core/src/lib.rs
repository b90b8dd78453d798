//! Model-free digital control of a magnetic induction waveform on a
//! hysteretic plant.
//!
//! * [`signals`]: reference waveforms, form factor and other metrics.
//! * [`plant`]: Jiles-Atherton hysteresis (static and rate-dependent) and simple oracle plants.
//! * [`controller`]: the model-free, derivative-free discrete controller and a PID baseline.
//! * [`engine`]: closed-loop runs with initialization cycles and symmetrization.
//! * [`tuning`]: derivative-free gain tuning (simulated annealing, exhaustive grid).
//! * [`export`]: CSV and JSON artifacts.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod engine;
pub mod error;
pub mod export;
pub mod plant;
pub mod signals;
pub mod tuning;

pub use controller::{ctrl_step, pid_step, CtrlParams, CtrlState, PidParams, PidState};
pub use engine::{
    run_closed_loop, run_open_loop, symmetrize, ControllerConfig, Disturbance, LoopConfig,
    MetricSettings, Metrics, RunResult, SymTarget, Symmetrization, Traces,
};
pub use error::{Error, Result};
pub use plant::{JaParams, JaState, PlantKind};
pub use signals::{ReferenceSpec, Shape, SignalTrace};
pub use tuning::{
    anneal, grid_search, tune, Dimension, Objective, Optimizer, Scale, TuneResult, TuneSpec,
    TunedParam,
};
