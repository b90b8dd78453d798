//! Model-free, derivative-free discrete controller and a PID baseline.
//!
//! At step `k` the controller receives the reference and the measurement
//! produced at the previous sample and returns
//!
//! ```text
//! ε          = v_ref − v_meas
//! I_k        = I_{k−1} + Ki·ε·dt                               (left Riemann sum)
//! u^i_k      = u^i_{k−1} + Kp·(k_alpha·exp(−k_beta·k) − v_meas)
//! u_k        = I_k + u^i_k
//! ```
//!
//! The exponential term is an initialization function that fades out after
//! roughly `21 / k_beta` steps; beyond that the output is driven only by the
//! measurement and the reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Gains of the model-free controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtrlParams {
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Ki")]
    pub ki: f64,
    #[serde(default)]
    pub k_alpha: f64,
    #[serde(default)]
    pub k_beta: f64,
    /// Symmetric output saturation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_limit: Option<f64>,
    /// Freeze the integral while the output saturates.
    #[serde(default, skip_serializing_if = "is_false")]
    pub anti_windup: bool,
    /// Initial value of the internal recursion.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub u_internal0: f64,
}

impl Default for CtrlParams {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.0,
            k_alpha: 0.0,
            k_beta: 0.0,
            u_limit: None,
            anti_windup: false,
            u_internal0: 0.0,
        }
    }
}

/// Checks hard constraints and returns soft warnings.
pub fn validate(params: &CtrlParams) -> Result<Vec<String>> {
    let finite = [
        ("controller.Kp", params.kp),
        ("controller.Ki", params.ki),
        ("controller.k_alpha", params.k_alpha),
        ("controller.k_beta", params.k_beta),
        ("controller.u_internal0", params.u_internal0),
    ];
    for (name, v) in finite {
        if !v.is_finite() {
            return Err(Error::param(name, "must be finite"));
        }
    }
    if params.kp <= 0.0 {
        return Err(Error::param(
            "controller.Kp",
            format!("must be > 0, got {}", params.kp),
        ));
    }
    if params.ki < 0.0 {
        return Err(Error::param(
            "controller.Ki",
            format!("must be >= 0, got {}", params.ki),
        ));
    }
    if params.k_beta < 0.0 {
        return Err(Error::param(
            "controller.k_beta",
            format!("must be >= 0, got {}", params.k_beta),
        ));
    }
    if let Some(lim) = params.u_limit {
        if !(lim > 0.0 && lim.is_finite()) {
            return Err(Error::param(
                "controller.u_limit",
                format!("must be > 0, got {lim}"),
            ));
        }
    }
    let mut warnings = Vec::new();
    if params.ki == 0.0 {
        warnings.push("Ki = 0 disables the integral tracking term".to_string());
    }
    if params.k_beta == 0.0 && params.k_alpha != 0.0 {
        warnings.push(
            "k_beta = 0 with k_alpha != 0: the initialization term never decays (constant bias)"
                .to_string(),
        );
    }
    if params.anti_windup && params.u_limit.is_none() {
        warnings.push("anti_windup has no effect without u_limit".to_string());
    }
    Ok(warnings)
}

/// Controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtrlState {
    pub k: u64,
    pub integral_acc: f64,
    pub u_internal: f64,
    pub last_u: f64,
}

impl CtrlState {
    pub fn new(params: &CtrlParams) -> Self {
        Self {
            k: 0,
            integral_acc: 0.0,
            u_internal: params.u_internal0,
            last_u: 0.0,
        }
    }

    pub fn reset(&mut self, params: &CtrlParams) {
        *self = Self::new(params);
    }
}

/// Initialization term `k_alpha·exp(−k_beta·k)`.
pub fn init_term(params: &CtrlParams, k: u64) -> f64 {
    params.k_alpha * (-params.k_beta * k as f64).exp()
}

/// One controller step. `v_meas` is the measurement of the previous sample.
pub fn ctrl_step(
    state: &CtrlState,
    v_ref: f64,
    v_meas: f64,
    dt: f64,
    params: &CtrlParams,
) -> Result<(f64, CtrlState)> {
    if !(v_ref.is_finite() && v_meas.is_finite()) {
        return Err(Error::Numeric {
            step: state.k as usize,
            what: format!("controller input v_ref={v_ref}, v_meas={v_meas}"),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    let err = v_ref - v_meas;
    let integral_acc = state.integral_acc + params.ki * err * dt;
    let u_internal = state.u_internal + params.kp * (init_term(params, state.k) - v_meas);
    let raw = integral_acc + u_internal;
    if !raw.is_finite() {
        return Err(Error::Numeric {
            step: state.k as usize,
            what: format!("controller output {raw}"),
        });
    }
    let (u, saturated) = match params.u_limit {
        Some(lim) if raw.abs() > lim => (raw.clamp(-lim, lim), true),
        _ => (raw, false),
    };
    let integral_acc = if saturated && params.anti_windup {
        state.integral_acc
    } else {
        integral_acc
    };
    Ok((
        u,
        CtrlState {
            k: state.k + 1,
            integral_acc,
            u_internal,
            last_u: u,
        },
    ))
}

/// PID gains. `n_filter` is the derivative filter bandwidth in rad/s
/// (`0` disables filtering).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidParams {
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Ki", default)]
    pub ki: f64,
    #[serde(rename = "Kd", default)]
    pub kd: f64,
    #[serde(rename = "N_filter", default)]
    pub n_filter: f64,
}

impl PidParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("controller.Kp", self.kp),
            ("controller.Ki", self.ki),
            ("controller.Kd", self.kd),
            ("controller.N_filter", self.n_filter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub k: u64,
    pub integral: f64,
    pub derivative: f64,
    pub prev_error: Option<f64>,
}

/// Textbook parallel PID with a first-order filtered derivative
/// (backward Euler).
pub fn pid_step(
    state: &PidState,
    v_ref: f64,
    v_meas: f64,
    dt: f64,
    params: &PidParams,
) -> Result<(f64, PidState)> {
    if !(v_ref.is_finite() && v_meas.is_finite()) {
        return Err(Error::Numeric {
            step: state.k as usize,
            what: format!("controller input v_ref={v_ref}, v_meas={v_meas}"),
        });
    }
    let err = v_ref - v_meas;
    let integral = state.integral + params.ki * err * dt;
    let de = state.prev_error.map_or(0.0, |e| err - e);
    let tf = if params.n_filter > 0.0 {
        1.0 / params.n_filter
    } else {
        0.0
    };
    let derivative = (tf * state.derivative + params.kd * de) / (tf + dt);
    let u = params.kp * err + integral + derivative;
    Ok((
        u,
        PidState {
            k: state.k + 1,
            integral,
            derivative,
            prev_error: Some(err),
        },
    ))
}
