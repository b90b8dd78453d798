//! Reference waveforms and the waveform metrics used across the crate.
//!
//! The form factor is the ratio of the RMS value of a periodic signal to the
//! mean of its rectified value. [`form_factor_percent`] reports the relative
//! deviation of that ratio from the value of an ideal shape, so `0 %` means
//! the signal has exactly the expected waveform and negative values mean the
//! signal is "squarer" than the ideal one.
//!
//! None of the metrics here detect periods. Callers pass whole periods.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Form factor of a pure sine, `π / (2√2)`.
pub const FF_SINE: f64 = PI / (2.0 * std::f64::consts::SQRT_2);
/// Form factor of a pure square wave.
pub const FF_SQUARE: f64 = 1.0;
/// Form factor of a symmetric triangle wave, `(1/√3) / (1/2)`.
pub const FF_TRIANGLE: f64 = 1.154_700_538_379_251_5;
/// Form factor of the parabolic wave obtained by integrating a triangle, `√(6/5)`.
pub const FF_PARABOLIC: f64 = 1.095_445_115_010_332_2;

/// Minimum samples per period accepted for a reference.
pub const MIN_SAMPLES_PER_PERIOD: usize = 16;

/// A uniformly sampled real-valued time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub samples: Vec<f64>,
    /// Seconds per sample.
    pub dt: f64,
    pub label: String,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, dt: f64, label: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be finite and > 0, got {dt}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                step: i,
                what: "trace sample".into(),
            });
        }
        Ok(Self {
            samples,
            dt,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// The last `n` samples as a new trace (the whole trace if shorter).
    pub fn tail(&self, n: usize) -> SignalTrace {
        let start = self.samples.len().saturating_sub(n);
        SignalTrace {
            samples: self.samples[start..].to_vec(),
            dt: self.dt,
            label: self.label.clone(),
        }
    }

    /// Samples `[start, end)` as a new trace.
    pub fn window(&self, start: usize, end: usize) -> SignalTrace {
        SignalTrace {
            samples: self.samples[start..end].to_vec(),
            dt: self.dt,
            label: self.label.clone(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn require_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::param(
                format!("trace `{}`", self.label),
                "trace is empty",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sine,
    Square,
    Triangle,
}

impl Shape {
    /// Ideal form factor of a signal with this shape.
    pub fn form_factor(self) -> f64 {
        match self {
            Shape::Sine => FF_SINE,
            Shape::Square => FF_SQUARE,
            Shape::Triangle => FF_TRIANGLE,
        }
    }

    /// Ideal form factor of the time integral of a signal with this shape.
    pub fn integral_form_factor(self) -> f64 {
        match self {
            Shape::Sine => FF_SINE,
            Shape::Square => FF_TRIANGLE,
            Shape::Triangle => FF_PARABOLIC,
        }
    }

    /// Unit-amplitude waveform at cycle position `x` (in periods).
    ///
    /// The square wave takes `+1` on `[0, ½)` and `-1` on `[½, 1)`, so the
    /// rising zero crossing resolves to `+1`.
    pub fn unit(self, x: f64) -> f64 {
        let frac = x - x.floor();
        match self {
            Shape::Sine => (TAU * x).sin(),
            Shape::Square => {
                if frac < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Shape::Triangle => {
                if frac < 0.25 {
                    4.0 * frac
                } else if frac < 0.75 {
                    2.0 - 4.0 * frac
                } else {
                    4.0 * frac - 4.0
                }
            }
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Shape::Sine => "sine",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        })
    }
}

/// Description of a periodic reference waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub shape: Shape,
    pub frequency_hz: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_rad: f64,
    pub periods: usize,
    pub samples_per_period: usize,
}

impl ReferenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(Error::param(
                "reference.frequency_hz",
                format!("must be > 0, got {}", self.frequency_hz),
            ));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(
                "reference.amplitude",
                format!("must be > 0, got {}", self.amplitude),
            ));
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::param("reference.phase_rad", "must be finite"));
        }
        if self.periods == 0 {
            return Err(Error::param("reference.periods", "must be >= 1"));
        }
        if self.samples_per_period < MIN_SAMPLES_PER_PERIOD {
            return Err(Error::param(
                "reference.samples_per_period",
                format!(
                    "must be >= {MIN_SAMPLES_PER_PERIOD}, got {}",
                    self.samples_per_period
                ),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.frequency_hz * self.samples_per_period as f64)
    }

    pub fn total_samples(&self) -> usize {
        self.periods * self.samples_per_period
    }
}

/// Samples the reference over `periods × samples_per_period` points.
pub fn generate_reference(spec: &ReferenceSpec) -> Result<SignalTrace> {
    spec.validate()?;
    Ok(sample_reference(spec))
}

/// Same as [`generate_reference`] without the `samples_per_period` floor;
/// used by unit tests and coarse previews.
pub(crate) fn sample_reference(spec: &ReferenceSpec) -> SignalTrace {
    let spp = spec.samples_per_period as f64;
    let offset = spec.phase_rad / TAU;
    let samples = (0..spec.total_samples())
        .map(|i| spec.amplitude * spec.shape.unit(i as f64 / spp + offset))
        .collect();
    SignalTrace {
        samples,
        dt: spec.dt(),
        label: "ref".into(),
    }
}

pub fn rms(trace: &SignalTrace) -> Result<f64> {
    trace.require_non_empty()?;
    let sum_sq: f64 = trace.samples.iter().map(|x| x * x).sum();
    Ok((sum_sq / trace.len() as f64).sqrt())
}

pub fn mean_rectified(trace: &SignalTrace) -> Result<f64> {
    trace.require_non_empty()?;
    let sum: f64 = trace.samples.iter().map(|x| x.abs()).sum();
    Ok(sum / trace.len() as f64)
}

/// Arithmetic mean of the samples.
pub fn dc_component(trace: &SignalTrace) -> Result<f64> {
    trace.require_non_empty()?;
    Ok(trace.samples.iter().sum::<f64>() / trace.len() as f64)
}

/// Relative deviation (in percent) of the trace's form factor from
/// `ff_theoretical`.
///
/// The trace must span an integer number of periods; this is not checked.
pub fn form_factor_percent(trace: &SignalTrace, ff_theoretical: f64) -> Result<f64> {
    if !(ff_theoretical > 0.0 && ff_theoretical.is_finite()) {
        return Err(Error::param(
            "ff_theoretical",
            format!("must be > 0, got {ff_theoretical}"),
        ));
    }
    let mean_abs = mean_rectified(trace)?;
    let max_abs = trace.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if mean_abs <= 1e-15 * max_abs {
        return Err(Error::DegenerateSignal(format!(
            "mean rectified value of `{}` is zero",
            trace.label
        )));
    }
    let ff = rms(trace)? / mean_abs;
    Ok(100.0 * (ff - ff_theoretical) / ff_theoretical)
}

/// Cumulative trapezoidal integral, multiplied by `scale`. With
/// `remove_mean` the mean of the result is subtracted.
pub fn integrate_trace(trace: &SignalTrace, scale: f64, remove_mean: bool) -> Result<SignalTrace> {
    trace.require_non_empty()?;
    let half_dt = 0.5 * trace.dt * scale;
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in trace.samples.windows(2) {
        acc += half_dt * (w[0] + w[1]);
        out.push(acc);
    }
    if remove_mean {
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        out.iter_mut().for_each(|x| *x -= mean);
    }
    SignalTrace::new(out, trace.dt, format!("int({})", trace.label))
}

/// Root mean square of `a - b`.
pub fn rmse(a: &SignalTrace, b: &SignalTrace) -> Result<f64> {
    a.require_non_empty()?;
    if a.len() != b.len() {
        return Err(Error::param(
            "trace length",
            format!("{} != {}", a.len(), b.len()),
        ));
    }
    let sum_sq: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum_sq / a.len() as f64).sqrt())
}
