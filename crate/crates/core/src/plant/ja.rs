//! Scalar Jiles-Atherton hysteresis.
//!
//! Magnetization is split into an irreversible part, driven toward the
//! Langevin anhysteretic curve by
//!
//! ```text
//! He        = H + alpha·M
//! dMirr/dH  = (Man − Mirr) / (δ·k − alpha·(Man − Mirr)),   δ = sign(dH)
//! M         = Mirr + c·(Man − Mirr)
//! B         = µ0·(H + M)
//! ```
//!
//! and the irreversible increment is zeroed while `(Man − M)·δ < 0`.
//! `dMirr/dH` is integrated with classical explicit Runge-Kutta, sub-stepped
//! in H so that no sub-step exceeds `a / 20`; the reversible part is solved
//! exactly at every node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability, H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Series threshold for the Langevin function.
const LANGEVIN_SERIES_LIMIT: f64 = 1e-4;

/// Largest H sub-step as a fraction of `a`.
pub const SUBSTEP_FRACTION: f64 = 1.0 / 20.0;

/// Beyond `FAR_FIELD·a` the sub-step grows in proportion to |H|.
const FAR_FIELD: f64 = 100.0;

/// Rate-dependent loss coefficients added as a dynamic field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicLoss {
    /// Classical eddy-current coefficient, A/m per T/s.
    pub k_eddy: f64,
    /// Excess-loss coefficient, A/m per √(T/s).
    pub k_excess: f64,
}

/// Material constants. Missing fields take the canonical values of
/// [`JaParams::default`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JaParams {
    /// Saturation magnetization, A/m.
    pub ms: f64,
    /// Anhysteretic shape parameter, A/m.
    pub a: f64,
    /// Pinning parameter, A/m.
    pub k_pin: f64,
    /// Reversibility coefficient.
    pub c_rev: f64,
    /// Inter-domain coupling.
    pub alpha: f64,
    /// Applied field per unit plant input, A/m.
    pub field_gain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<DynamicLoss>,
}

impl Default for JaParams {
    /// Representative non-oriented SiFe values.
    fn default() -> Self {
        Self {
            ms: 1.6e6,
            a: 1100.0,
            k_pin: 400.0,
            c_rev: 0.2,
            alpha: 1.6e-4,
            field_gain: 1.0,
            dynamic: None,
        }
    }
}

impl JaParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("plant.{name}"), format!("must be > 0, got {v}")))
            }
        };
        let non_negative = |v: f64, name: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("plant.{name}"), format!("must be >= 0, got {v}")))
            }
        };
        positive(self.ms, "ms")?;
        positive(self.a, "a")?;
        non_negative(self.k_pin, "k_pin")?;
        non_negative(self.alpha, "alpha")?;
        positive(self.field_gain, "field_gain")?;
        if !(0.0..1.0).contains(&self.c_rev) {
            return Err(Error::param(
                "plant.c_rev",
                format!("must lie in [0, 1), got {}", self.c_rev),
            ));
        }
        if self.alpha >= self.a / self.ms {
            return Err(Error::param(
                "plant.alpha",
                format!(
                    "must be < a/ms = {:e} for a positive anhysteretic slope, got {:e}",
                    self.a / self.ms,
                    self.alpha
                ),
            ));
        }
        if let Some(d) = &self.dynamic {
            non_negative(d.k_eddy, "dynamic.k_eddy")?;
            non_negative(d.k_excess, "dynamic.k_excess")?;
        }
        Ok(())
    }

    /// Saturation induction `µ0·Ms`, T.
    pub fn saturation_induction(&self) -> f64 {
        MU0 * self.ms
    }
}

/// Evolving magnetic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JaState {
    /// Field seen by the hysteresis branch, A/m.
    pub h: f64,
    /// Magnetization, A/m.
    pub m: f64,
    /// Irreversible magnetization, A/m.
    pub m_irr: f64,
    /// Induction `µ0·(h + m)`, T.
    pub b: f64,
    /// Direction of the last nonzero field increment (±1).
    pub prev_dh_sign: f64,
    /// Induction rate over the last step, T/s.
    pub db_dt: f64,
    /// Number of sub-steps where |M| had to be clamped to Ms.
    pub clamp_events: u64,
}

impl Default for JaState {
    /// Demagnetized origin.
    fn default() -> Self {
        Self {
            h: 0.0,
            m: 0.0,
            m_irr: 0.0,
            b: 0.0,
            prev_dh_sign: 1.0,
            db_dt: 0.0,
            clamp_events: 0,
        }
    }
}

/// Langevin anhysteretic magnetization `Ms·(coth(He/a) − a/He)`.
pub fn anhysteretic(he: f64, params: &JaParams) -> f64 {
    let x = he / params.a;
    if x.abs() < LANGEVIN_SERIES_LIMIT {
        params.ms * (x / 3.0 - x * x * x / 45.0)
    } else {
        params.ms * (1.0 / x.tanh() - 1.0 / x)
    }
}

/// Total magnetization consistent with `h` and `m_irr`, solving
/// `M = Mirr + c·(Man(h + alpha·M) − Mirr)` by fixed-point iteration from `m_guess`.
fn total_magnetization(h: f64, m_irr: f64, m_guess: f64, p: &JaParams) -> (f64, f64) {
    let mut m = m_guess;
    let mut man = anhysteretic(h + p.alpha * m, p);
    for _ in 0..30 {
        let next = m_irr + p.c_rev * (man - m_irr);
        let done = (next - m).abs() <= 1e-13 * p.ms;
        m = next;
        man = anhysteretic(h + p.alpha * m, p);
        if done {
            break;
        }
    }
    (m, man)
}

/// `dMirr/dH` on a branch of direction `delta`, with the negative
/// susceptibility guard.
fn irreversible_slope(h: f64, m_irr: f64, m_guess: f64, delta: f64, p: &JaParams) -> f64 {
    let (m, man) = total_magnetization(h, m_irr, m_guess, p);
    if (man - m) * delta <= 0.0 {
        return 0.0;
    }
    let x = man - m_irr;
    let denom = delta * p.k_pin - p.alpha * x;
    // denom must carry the sign of delta; otherwise the branch slope would
    // flip and the loop would run backwards.
    if denom * delta <= 0.0 {
        return 0.0;
    }
    x / denom
}

/// Advances the state from `state.h` to `h_next`.
pub fn ja_step(state: &JaState, h_next: f64, dt: f64, params: &JaParams) -> Result<JaState> {
    if !h_next.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            what: format!("field {h_next}"),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    let mut next = advance(state, h_next, params);
    next.db_dt = (next.b - state.b) / dt;
    Ok(next)
}

pub(crate) fn advance(state: &JaState, h_next: f64, p: &JaParams) -> JaState {
    let dh_total = h_next - state.h;
    if dh_total == 0.0 {
        return *state;
    }
    let delta = dh_total.signum();
    let max_sub = p.a * SUBSTEP_FRACTION;
    let far = FAR_FIELD * p.a;
    let h0 = state.h;

    let mut s = *state;
    s.prev_dh_sign = delta;
    if h0.abs().max(h_next.abs()) <= far {
        let n = (dh_total.abs() / max_sub).ceil().max(1.0) as usize;
        for i in 1..=n {
            // land exactly on h_next
            let h = if i == n {
                h_next
            } else {
                h0 + dh_total * (i as f64 / n as f64)
            };
            substep(&mut s, h, delta, p);
        }
    } else {
        // deep saturation: sub-steps grow with |H| so that a runaway drive
        // costs logarithmically many steps
        while s.h != h_next {
            let size = max_sub * (s.h.abs() / far).max(1.0);
            let h = if (h_next - s.h).abs() <= size {
                h_next
            } else {
                s.h + delta * size
            };
            substep(&mut s, h, delta, p);
        }
    }
    s.b = MU0 * (s.h + s.m);
    s
}

/// One RK4 step of the irreversible magnetization from `s.h` to `h`.
fn substep(s: &mut JaState, h: f64, delta: f64, p: &JaParams) {
    let h_prev = s.h;
    let dh = h - h_prev;
    let m_guess = s.m;
    let f = |hh: f64, mi: f64| irreversible_slope(hh, mi, m_guess, delta, p);
    let k1 = f(h_prev, s.m_irr);
    let k2 = f(h_prev + 0.5 * dh, s.m_irr + 0.5 * dh * k1);
    let k3 = f(h_prev + 0.5 * dh, s.m_irr + 0.5 * dh * k2);
    let k4 = f(h, s.m_irr + dh * k3);
    let mut m_irr = s.m_irr + dh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if m_irr.abs() > p.ms {
        m_irr = m_irr.clamp(-p.ms, p.ms);
        s.clamp_events += 1;
    }
    let (mut m, _) = total_magnetization(h, m_irr, s.m, p);
    if m.abs() > p.ms {
        m = m.clamp(-p.ms, p.ms);
        s.clamp_events += 1;
    }
    s.h = h;
    s.m_irr = m_irr;
    s.m = m;
}

/// Dynamic field of the loss-separation model,
/// `k_eddy·dB/dt + k_excess·sign(dB/dt)·√|dB/dt|`.
pub fn ja_dynamic_field(db_dt: f64, params: &JaParams) -> Result<f64> {
    let d = params.dynamic.as_ref().ok_or_else(|| {
        Error::Configuration("dynamic field requested on a static JA parameter set".into())
    })?;
    Ok(dynamic_field(db_dt, d))
}

fn dynamic_field(db_dt: f64, d: &DynamicLoss) -> f64 {
    d.k_eddy * db_dt + d.k_excess * db_dt.signum() * db_dt.abs().sqrt()
}

/// Rate-dependent step: finds the induction `B'` such that the static
/// hysteresis branch, driven by `h_applied − H_dyn((B' − B)/dt)`, returns
/// `B'`.
///
/// The residual `B_branch(B') − B'` is strictly decreasing in `B'`, so the
/// root is unique. The search starts from the previous induction rate,
/// expands outward until the residual changes sign and then refines the
/// bracket with the Illinois variant of regula falsi.
pub fn ja_dynamic_step(
    state: &JaState,
    h_applied: f64,
    dt: f64,
    params: &JaParams,
) -> Result<JaState> {
    let d = *params.dynamic.as_ref().ok_or_else(|| {
        Error::Configuration("dynamic step requested on a static JA parameter set".into())
    })?;
    if !h_applied.is_finite() {
        return Err(Error::Numeric {
            step: 0,
            what: format!("field {h_applied}"),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    let b0 = state.b;
    let b_sat = params.saturation_induction();
    let eval = |b_trial: f64| {
        let h = h_applied - dynamic_field((b_trial - b0) / dt, &d);
        let mut next = advance(state, h, params);
        next.db_dt = (next.b - b0) / dt;
        (next.b - b_trial, next)
    };
    let tol = 1e-12 * b_sat;

    let x0 = b0 + state.db_dt * dt;
    let (r0, s0) = eval(x0);
    if r0.abs() <= tol {
        return Ok(s0);
    }
    // expand in the direction of the residual until it changes sign
    let mut step = (x0 - b0).abs().max(1e-9 * b_sat) * 0.25;
    let (mut a, mut ra) = (x0, r0);
    let (mut b, mut rb, mut best) = loop {
        let x = a + r0.signum() * step;
        let (r, next) = eval(x);
        if r.abs() <= tol {
            return Ok(next);
        }
        if r.signum() != r0.signum() {
            break (x, r, next);
        }
        a = x;
        ra = r;
        step *= 2.0;
        if step > 1e3 * b_sat {
            return Err(Error::Numeric {
                step: 0,
                what: "dynamic induction solve failed to bracket".into(),
            });
        }
    };
    let mut side = 0i8;
    for _ in 0..200 {
        let mut x = b - rb * (b - a) / (rb - ra);
        if !(x - a.min(b) > 0.0 && a.max(b) - x > 0.0) {
            x = 0.5 * (a + b);
        }
        let (r, next) = eval(x);
        best = next;
        if r.abs() <= tol || (a - b).abs() <= tol {
            break;
        }
        if r.signum() == ra.signum() {
            a = x;
            ra = r;
            if side == 1 {
                rb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            rb = r;
            if side == -1 {
                ra *= 0.5;
            }
            side = -1;
        }
    }
    Ok(best)
}

/// Point on the self-consistent anhysteretic curve `M = Man(H + alpha·M)`.
pub fn anhysteretic_induction(h: f64, p: &JaParams) -> f64 {
    // M ↦ Man(h + alpha·M) − M is strictly decreasing when alpha < a/(3·Ms)·3
    let (mut lo, mut hi) = (-p.ms, p.ms);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if anhysteretic(h + p.alpha * mid, p) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    MU0 * (h + 0.5 * (lo + hi))
}

/// Saturation knee on the anhysteretic curve: the field where a 10 %
/// increase of induction needs a 50 % increase of field. Returns `(H, B)`.
pub fn saturation_knee(p: &JaParams) -> (f64, f64) {
    let excess = |h: f64| anhysteretic_induction(1.5 * h, p) - 1.1 * anhysteretic_induction(h, p);
    // excess > 0 on the steep part, < 0 past the knee
    let (mut lo, mut hi) = (1e-3 * p.a, 1e3 * p.a);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = (lo * hi).sqrt();
    (h, anhysteretic_induction(h, p))
}
