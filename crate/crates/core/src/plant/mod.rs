//! The plant under control.
//!
//! The Jiles-Atherton variants map the plant input `u` to an applied field
//! `H = field_gain·u` and output the induction `B` directly as the measured
//! signal. The linear, saturating and pass-through plants are simple
//! references used by the tests.

mod ja;

pub use ja::{
    anhysteretic, anhysteretic_induction, ja_dynamic_field, ja_dynamic_step, ja_step,
    saturation_knee, DynamicLoss, JaParams, JaState, MU0, SUBSTEP_FRACTION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantKind {
    JaStatic(JaParams),
    /// Static branch plus the rate-dependent dynamic field; `dynamic` must be set.
    JaDynamic(JaParams),
    /// First-order lag `τ·v' = gain·u − v`, discretized exactly.
    Linear { gain: f64, time_constant_s: f64 },
    /// Memoryless `sat_level·tanh(gain·u / sat_level)`.
    Saturating { gain: f64, sat_level: f64 },
    /// `v = u`.
    Passthrough,
}

impl PlantKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            PlantKind::JaStatic(p) => p.validate(),
            PlantKind::JaDynamic(p) => {
                p.validate()?;
                if p.dynamic.is_none() {
                    return Err(Error::Configuration(
                        "ja_dynamic plant needs [plant.dynamic] coefficients".into(),
                    ));
                }
                Ok(())
            }
            PlantKind::Linear {
                gain,
                time_constant_s,
            } => {
                if !(gain.is_finite() && *gain != 0.0) {
                    return Err(Error::param("plant.gain", "must be finite and nonzero"));
                }
                if !(*time_constant_s > 0.0 && time_constant_s.is_finite()) {
                    return Err(Error::param("plant.time_constant_s", "must be > 0"));
                }
                Ok(())
            }
            PlantKind::Saturating { gain, sat_level } => {
                if !(*gain > 0.0 && gain.is_finite()) {
                    return Err(Error::param("plant.gain", "must be > 0"));
                }
                if !(*sat_level > 0.0 && sat_level.is_finite()) {
                    return Err(Error::param("plant.sat_level", "must be > 0"));
                }
                Ok(())
            }
            PlantKind::Passthrough => Ok(()),
        }
    }

    pub fn ja_params(&self) -> Option<&JaParams> {
        match self {
            PlantKind::JaStatic(p) | PlantKind::JaDynamic(p) => Some(p),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlantKind::JaStatic(_) => "ja_static",
            PlantKind::JaDynamic(_) => "ja_dynamic",
            PlantKind::Linear { .. } => "linear",
            PlantKind::Saturating { .. } => "saturating",
            PlantKind::Passthrough => "passthrough",
        }
    }

    pub fn initial_state(&self) -> PlantState {
        match self {
            PlantKind::JaStatic(_) | PlantKind::JaDynamic(_) => PlantState::Ja {
                ja: JaState::default(),
                h_applied: 0.0,
            },
            PlantKind::Linear { .. } => PlantState::Linear { v: 0.0 },
            PlantKind::Saturating { .. } | PlantKind::Passthrough => PlantState::Stateless,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlantState {
    Ja { ja: JaState, h_applied: f64 },
    Linear { v: f64 },
    Stateless,
}

impl PlantState {
    /// Applied field for JA plants.
    pub fn applied_field(&self) -> Option<f64> {
        match self {
            PlantState::Ja { h_applied, .. } => Some(*h_applied),
            _ => None,
        }
    }
}

/// One plant sample: consumes `u`, returns the measured output and the
/// advanced state.
pub fn plant_eval(kind: &PlantKind, u: f64, state: &PlantState, dt: f64) -> Result<(f64, PlantState)> {
    if !u.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            what: format!("plant input {u}"),
        });
    }
    match (kind, state) {
        (PlantKind::JaStatic(p), PlantState::Ja { ja, .. }) => {
            let h = p.field_gain * u;
            let next = ja_step(ja, h, dt, p)?;
            Ok((next.b, PlantState::Ja { ja: next, h_applied: h }))
        }
        (PlantKind::JaDynamic(p), PlantState::Ja { ja, .. }) => {
            let h = p.field_gain * u;
            let next = ja_dynamic_step(ja, h, dt, p)?;
            Ok((next.b, PlantState::Ja { ja: next, h_applied: h }))
        }
        (
            PlantKind::Linear {
                gain,
                time_constant_s,
            },
            PlantState::Linear { v },
        ) => {
            let target = gain * u;
            let decay = (-dt / time_constant_s).exp();
            let v_next = target + (v - target) * decay;
            Ok((v_next, PlantState::Linear { v: v_next }))
        }
        (PlantKind::Saturating { gain, sat_level }, PlantState::Stateless) => {
            Ok((sat_level * (gain * u / sat_level).tanh(), PlantState::Stateless))
        }
        (PlantKind::Passthrough, PlantState::Stateless) => Ok((u, PlantState::Stateless)),
        (kind, _) => Err(Error::State(format!(
            "plant state does not match plant kind `{}`",
            kind.name()
        ))),
    }
}

/// A plant together with its evolving state.
#[derive(Debug, Clone)]
pub struct Plant {
    kind: PlantKind,
    state: PlantState,
}

impl Plant {
    pub fn new(kind: PlantKind) -> Result<Self> {
        kind.validate()?;
        let state = kind.initial_state();
        Ok(Self { kind, state })
    }

    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64> {
        let (v, next) = plant_eval(&self.kind, u, &self.state, dt)?;
        self.state = next;
        Ok(v)
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn kind(&self) -> &PlantKind {
        &self.kind
    }
}
