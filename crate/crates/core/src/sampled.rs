//! Uniformly sampled real functions of time.

use crate::error::{Result, VzError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "rad/s")]
    RadPerSec,
    #[serde(rename = "Hz")]
    Hz,
    #[serde(rename = "dimensionless")]
    Dimensionless,
    #[serde(rename = "seconds")]
    Seconds,
    #[serde(rename = "flux-arb")]
    FluxArb,
    #[serde(rename = "rad")]
    Radians,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Interp {
    Linear,
    /// Cubic Hermite with the given node slopes (Fritsch-Carlson slopes when built by
    /// [`SampledFunction::monotone_cubic`]).
    Hermite(Vec<f64>),
    /// Exact integral of the linear interpolant of the node slopes; used for accumulated phases.
    Integral(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledJson", into = "SampledJson")]
pub struct SampledFunction {
    t0: f64,
    dt: f64,
    samples: Vec<f64>,
    unit: Unit,
    interp: Interp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SampledJson {
    unit: String,
    t0: f64,
    dt: f64,
    samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slopes: Option<Vec<f64>>,
}

fn unit_scale(unit: &str) -> std::result::Result<(Unit, f64), String> {
    let two_pi = 2.0 * PI;
    Ok(match unit {
        "rad/s" => (Unit::RadPerSec, 1.0),
        "GHz" => (Unit::RadPerSec, two_pi * 1e9),
        "MHz" => (Unit::RadPerSec, two_pi * 1e6),
        "kHz" => (Unit::RadPerSec, two_pi * 1e3),
        "Hz" => (Unit::RadPerSec, two_pi),
        "rad/ns" => (Unit::RadPerSec, 1e9),
        "dimensionless" => (Unit::Dimensionless, 1.0),
        "seconds" | "s" => (Unit::Seconds, 1.0),
        "ns" => (Unit::Seconds, 1e-9),
        "flux-arb" => (Unit::FluxArb, 1.0),
        "rad" => (Unit::Radians, 1.0),
        other => return Err(format!("unknown unit tag '{other}'")),
    })
}

fn time_scale(unit: &str) -> std::result::Result<f64, String> {
    match unit {
        "s" | "seconds" => Ok(1.0),
        "ms" => Ok(1e-3),
        "us" => Ok(1e-6),
        "ns" => Ok(1e-9),
        "ps" => Ok(1e-12),
        other => Err(format!("unknown time unit '{other}'")),
    }
}

impl TryFrom<SampledJson> for SampledFunction {
    type Error = String;
    fn try_from(j: SampledJson) -> std::result::Result<Self, String> {
        let (unit, vscale) = unit_scale(&j.unit)?;
        let ts = time_scale(j.time_unit.as_deref().unwrap_or("s"))?;
        let samples: Vec<f64> = j.samples.iter().map(|v| v * vscale).collect();
        let (t0, dt) = (j.t0 * ts, j.dt * ts);
        // slopes are d(value)/d(time) in the JSON's units
        let slopes = j
            .slopes
            .map(|s| s.iter().map(|v| v * vscale / ts).collect::<Vec<_>>());
        let r = match j.interp.as_deref().unwrap_or("linear") {
            "linear" => SampledFunction::new(t0, dt, samples, unit),
            "monotone-cubic" => SampledFunction::monotone_cubic(t0, dt, samples, unit),
            "hermite" => SampledFunction::hermite(
                t0,
                dt,
                samples,
                slopes.ok_or("hermite interpolation requires 'slopes'")?,
                unit,
            ),
            "integral" => SampledFunction::integral_form(
                t0,
                dt,
                samples,
                slopes.ok_or("integral interpolation requires 'slopes'")?,
                unit,
            ),
            other => return Err(format!("unknown interpolation '{other}'")),
        };
        r.map_err(|e| e.to_string())
    }
}

impl From<SampledFunction> for SampledJson {
    fn from(f: SampledFunction) -> Self {
        let unit = match f.unit {
            Unit::RadPerSec => "rad/s",
            Unit::Hz => "Hz",
            Unit::Dimensionless => "dimensionless",
            Unit::Seconds => "seconds",
            Unit::FluxArb => "flux-arb",
            Unit::Radians => "rad",
        }
        .to_string();
        let (interp, slopes) = match f.interp {
            Interp::Linear => (None, None),
            Interp::Hermite(s) => (Some("hermite".to_string()), Some(s)),
            Interp::Integral(s) => (Some("integral".to_string()), Some(s)),
        };
        SampledJson {
            unit,
            t0: f.t0,
            dt: f.dt,
            samples: f.samples,
            time_unit: None,
            interp,
            slopes,
        }
    }
}

/// Fritsch-Carlson slopes for monotone cubic interpolation.
pub fn fritsch_carlson_slopes(dt: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        m[k] = if d[k - 1] * d[k] <= 0.0 {
            0.0
        } else {
            0.5 * (d[k - 1] + d[k])
        };
    }
    for k in 0..n - 1 {
        if d[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / d[k];
        let b = m[k + 1] / d[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let t = 3.0 / s.sqrt();
            m[k] = t * a * d[k];
            m[k + 1] = t * b * d[k];
        }
    }
    m
}

impl SampledFunction {
    fn check(t0: f64, dt: f64, samples: &[f64]) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(VzError::Validation(format!("dt must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(VzError::Validation("at least 2 samples required".into()));
        }
        if !t0.is_finite() || samples.iter().any(|v| !v.is_finite()) {
            return Err(VzError::Validation("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::check(t0, dt, &samples)?;
        Ok(SampledFunction {
            t0,
            dt,
            samples,
            unit,
            interp: Interp::Linear,
        })
    }

    pub fn monotone_cubic(t0: f64, dt: f64, samples: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::check(t0, dt, &samples)?;
        let slopes = fritsch_carlson_slopes(dt, &samples);
        Ok(SampledFunction {
            t0,
            dt,
            samples,
            unit,
            interp: Interp::Hermite(slopes),
        })
    }

    pub fn hermite(t0: f64, dt: f64, samples: Vec<f64>, slopes: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::check(t0, dt, &samples)?;
        if slopes.len() != samples.len() {
            return Err(VzError::Validation("slopes and samples differ in length".into()));
        }
        Ok(SampledFunction {
            t0,
            dt,
            samples,
            unit,
            interp: Interp::Hermite(slopes),
        })
    }

    pub fn integral_form(t0: f64, dt: f64, samples: Vec<f64>, slopes: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::check(t0, dt, &samples)?;
        if slopes.len() != samples.len() {
            return Err(VzError::Validation("slopes and samples differ in length".into()));
        }
        Ok(SampledFunction {
            t0,
            dt,
            samples,
            unit,
            interp: Interp::Integral(slopes),
        })
    }

    /// Sample `f` at `n` uniform points on [t0, t1] with linear interpolation.
    pub fn from_fn(t0: f64, t1: f64, n: usize, unit: Unit, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(t1 > t0) {
            return Err(VzError::Validation("from_fn needs n >= 2 and t1 > t0".into()));
        }
        let dt = (t1 - t0) / (n - 1) as f64;
        let samples = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(t0, dt, samples, unit)
    }

    /// Constant function on [t0, t1].
    pub fn constant(t0: f64, t1: f64, value: f64, unit: Unit) -> Result<Self> {
        Self::from_fn(t0, t1, 2, unit, |_| value)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn unit(&self) -> Unit {
        self.unit
    }
    pub fn interp(&self) -> &Interp {
        &self.interp
    }
    pub fn t_end(&self) -> f64 {
        self.t0 + (self.samples.len() - 1) as f64 * self.dt
    }
    pub fn domain(&self) -> (f64, f64) {
        (self.t0, self.t_end())
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| self.time(k))
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    /// Node slopes: explicit for Hermite/Integral, secant-based for linear.
    pub fn node_slopes(&self) -> Vec<f64> {
        match &self.interp {
            Interp::Hermite(s) | Interp::Integral(s) => s.clone(),
            Interp::Linear => {
                let n = self.samples.len();
                (0..n)
                    .map(|k| {
                        if k == 0 {
                            (self.samples[1] - self.samples[0]) / self.dt
                        } else if k == n - 1 {
                            (self.samples[n - 1] - self.samples[n - 2]) / self.dt
                        } else {
                            (self.samples[k + 1] - self.samples[k - 1]) / (2.0 * self.dt)
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        let slack = 1e-12 * (hi - lo).abs().max(self.dt);
        t >= lo - slack && t <= hi + slack
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.samples.len();
        let x = (t - self.t0) / self.dt;
        let mut k = x.floor();
        if k < 0.0 {
            k = 0.0;
        }
        let mut k = k as usize;
        if k > n - 2 {
            k = n - 2;
        }
        let u = (t - self.time(k)).clamp(0.0, self.dt);
        (k, u)
    }

    fn segment(&self, k: usize, u: f64) -> (f64, f64) {
        let h = self.dt;
        let (y0, y1) = (self.samples[k], self.samples[k + 1]);
        match &self.interp {
            Interp::Linear => {
                let s = (y1 - y0) / h;
                (y0 + s * u, s)
            }
            Interp::Hermite(m) => {
                let (m0, m1) = (m[k], m[k + 1]);
                let s = u / h;
                let s2 = s * s;
                let s3 = s2 * s;
                let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                    + (s3 - 2.0 * s2 + s) * h * m0
                    + (-2.0 * s3 + 3.0 * s2) * y1
                    + (s3 - s2) * h * m1;
                let d = ((6.0 * s2 - 6.0 * s) * y0 + (-6.0 * s2 + 6.0 * s) * y1) / h
                    + (3.0 * s2 - 4.0 * s + 1.0) * m0
                    + (3.0 * s2 - 2.0 * s) * m1;
                (v, d)
            }
            Interp::Integral(m) => {
                let (m0, m1) = (m[k], m[k + 1]);
                let v = y0 + m0 * u + (m1 - m0) * u * u / (2.0 * h);
                let d = m0 + (m1 - m0) * u / h;
                (v, d)
            }
        }
    }

    fn segment_integral(&self, k: usize, u: f64) -> f64 {
        let h = self.dt;
        let (y0, y1) = (self.samples[k], self.samples[k + 1]);
        match &self.interp {
            Interp::Linear => y0 * u + (y1 - y0) * u * u / (2.0 * h),
            Interp::Hermite(m) => {
                let (m0, m1) = (m[k], m[k + 1]);
                let s = u / h;
                let s2 = s * s;
                let s3 = s2 * s;
                let s4 = s3 * s;
                h * ((0.5 * s4 - s3 + s) * y0
                    + (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2) * h * m0
                    + (-0.5 * s4 + s3) * y1
                    + (0.25 * s4 - s3 / 3.0) * h * m1)
            }
            Interp::Integral(m) => {
                let (m0, m1) = (m[k], m[k + 1]);
                y0 * u + m0 * u * u / 2.0 + (m1 - m0) * u * u * u / (6.0 * h)
            }
        }
    }

    fn guard(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            let (lo, hi) = self.domain();
            Err(VzError::OutOfDomain { t, lo, hi })
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.guard(t)?;
        Ok(self.eval_clamped(t))
    }

    /// Evaluation without the domain check; `t` is clamped to the domain.
    pub fn eval_clamped(&self, t: f64) -> f64 {
        let (k, u) = self.locate(t);
        self.segment(k, u).0
    }

    /// Value, or zero outside the domain (gated envelope semantics).
    pub fn eval_or_zero(&self, t: f64) -> f64 {
        if self.contains(t) {
            self.eval_clamped(t)
        } else {
            0.0
        }
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        self.guard(t)?;
        Ok(self.deriv_clamped(t))
    }

    pub fn deriv_clamped(&self, t: f64) -> f64 {
        let (k, u) = self.locate(t);
        self.segment(k, u).1
    }

    fn antiderivative(&self, t: f64) -> f64 {
        let (k, u) = self.locate(t);
        let mut acc = 0.0;
        for j in 0..k {
            acc += self.segment_integral(j, self.dt);
        }
        acc + self.segment_integral(k, u)
    }

    /// Exact integral of the interpolant over [a, b].
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        self.guard(a)?;
        self.guard(b)?;
        Ok(self.antiderivative(b) - self.antiderivative(a))
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| *v == 0.0)
    }

    /// Resample on `n` uniform points over [a, b] with linear interpolation.
    pub fn resample(&self, a: f64, b: f64, n: usize) -> Result<Self> {
        self.guard(a)?;
        self.guard(b)?;
        Self::from_fn(a, b, n, self.unit, |t| self.eval_clamped(t))
    }

    /// Add a constant, keeping the interpolation scheme.
    pub fn offset(&self, c: f64) -> Self {
        SampledFunction {
            samples: self.samples.iter().map(|v| v + c).collect(),
            ..self.clone()
        }
    }

    /// Multiply by a constant, keeping the interpolation scheme.
    pub fn scaled(&self, c: f64) -> Self {
        let interp = match &self.interp {
            Interp::Linear => Interp::Linear,
            Interp::Hermite(m) => Interp::Hermite(m.iter().map(|v| v * c).collect()),
            Interp::Integral(m) => Interp::Integral(m.iter().map(|v| v * c).collect()),
        };
        SampledFunction {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|v| v * c).collect(),
            unit: self.unit,
            interp,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SampledFunction {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|v| f(*v)).collect(),
            unit: self.unit,
            interp: Interp::Linear,
        }
    }
}

/// V(t) = V0 + integral_t0^t v, trapezoid on v's grid. The result interpolates as the exact
/// integral of v's linear interpolant, so V'(t) reproduces v(t).
pub fn accumulate_phase(v: &SampledFunction, v0: f64) -> SampledFunction {
    let h = v.dt;
    let s = v.samples();
    let mut out = Vec::with_capacity(s.len());
    let mut acc = v0;
    out.push(acc);
    for w in s.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    SampledFunction {
        t0: v.t0,
        dt: h,
        samples: out,
        unit: Unit::Radians,
        interp: Interp::Integral(s.to_vec()),
    }
}

/// Solve g(x) = y for x in [lo, hi] where g is monotone (direction given by `increasing`).
/// Bisection to `xtol`, then one Newton polish if it stays in the bracket and reduces the residual.
pub fn solve_monotone(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    y: f64,
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
    xtol: f64,
) -> f64 {
    let sgn = if increasing { 1.0 } else { -1.0 };
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sgn * (g(mid) - y) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let r = g(x) - y;
    let d = dg(x);
    if d != 0.0 && d.is_finite() {
        let xn = x - r / d;
        if xn >= lo - xtol && xn <= hi + xtol && (g(xn) - y).abs() <= r.abs() {
            return xn;
        }
    }
    x
}

/// Inverse of a strictly monotone sampled function, sampled on its range with 4x the
/// source resolution and Hermite slopes 1/g'.
pub fn invert_monotone(g: &SampledFunction) -> Result<SampledFunction> {
    let s = g.samples();
    let first = s[1] - s[0];
    if first == 0.0 {
        return Err(VzError::NonMonotone("zero successive difference at index 0".into()));
    }
    for (k, w) in s.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d == 0.0 || d.signum() != first.signum() {
            return Err(VzError::NonMonotone(format!("successive difference changes sign at index {k}")));
        }
    }
    let increasing = first > 0.0;
    let n = 4 * (s.len() - 1) + 1;
    let (y0, y1) = (s[0], s[s.len() - 1]);
    let dy = (y1 - y0) / (n - 1) as f64;
    let (a, b) = g.domain();
    let xtol = 1e-14 * (b - a);
    let mut xs = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for k in 0..n {
        let y = if k == n - 1 { y1 } else { y0 + k as f64 * dy };
        let x = if k == 0 {
            a
        } else if k == n - 1 {
            b
        } else {
            solve_monotone(|t| g.eval_clamped(t), |t| g.deriv_clamped(t), y, a, b, increasing, xtol)
        };
        xs.push(x);
        slopes.push(1.0 / g.deriv_clamped(x));
    }
    // Hermite over an increasing abscissa: for decreasing g the range runs backwards.
    if increasing {
        SampledFunction::hermite(y0, dy, xs, slopes, Unit::Seconds)
    } else {
        xs.reverse();
        slopes.reverse();
        SampledFunction::hermite(y1, -dy, xs, slopes, Unit::Seconds)
    }
}

/// Wrap x into (-p/2, p/2].
pub fn wrap_symmetric(x: f64, p: f64) -> f64 {
    let mut r = x.rem_euclid(p);
    if r > 0.5 * p {
        r -= p;
    }
    r
}

/// A frame phase: analytic linear ramp or sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Phase {
    Linear { rate: f64, offset: f64 },
    Sampled { f: SampledFunction },
}

impl Phase {
    pub fn linear(rate: f64) -> Self {
        Phase::Linear { rate, offset: 0.0 }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Phase::Linear { rate, offset } => Ok(offset + rate * t),
            Phase::Sampled { f } => f.eval(t),
        }
    }

    pub fn eval_clamped(&self, t: f64) -> f64 {
        match self {
            Phase::Linear { rate, offset } => offset + rate * t,
            Phase::Sampled { f } => f.eval_clamped(t),
        }
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        match self {
            Phase::Linear { rate, .. } => Ok(*rate),
            Phase::Sampled { f } => f.deriv(t),
        }
    }

    pub fn deriv_clamped(&self, t: f64) -> f64 {
        match self {
            Phase::Linear { rate, .. } => *rate,
            Phase::Sampled { f } => f.deriv_clamped(t),
        }
    }

    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Phase::Linear { .. } => None,
            Phase::Sampled { f } => Some(f.domain()),
        }
    }
}

/// Composite Simpson integral of a closure, used as an independent oracle.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n_intervals: usize) -> f64 {
    let n = if n_intervals % 2 == 1 { n_intervals + 1 } else { n_intervals.max(2) };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simpson_oracle(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * f(a + k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn construction_is_validated() {
        assert!(SampledFunction::new(0.0, 0.0, vec![1.0, 2.0], Unit::Hz).is_err());
        assert!(SampledFunction::new(0.0, 1.0, vec![1.0], Unit::Hz).is_err());
        assert!(SampledFunction::new(0.0, 1.0, vec![1.0, f64::NAN], Unit::Hz).is_err());
        let f = SampledFunction::new(0.0, 1.0, vec![1.0, 3.0], Unit::Hz).unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 2.0);
        assert!(matches!(f.eval(1.5), Err(VzError::OutOfDomain { .. })));
        assert_eq!(f.eval_or_zero(-0.1), 0.0);
    }

    #[test]
    fn accumulate_trivial_cases() {
        let z = SampledFunction::constant(0.0, 1.0, 0.0, Unit::RadPerSec).unwrap();
        assert!(accumulate_phase(&z, 0.0).is_zero());
        let one = SampledFunction::constant(0.0, 2.0, 1.0, Unit::RadPerSec).unwrap();
        let v = accumulate_phase(&one, 0.5);
        assert_eq!(v.eval(0.0).unwrap(), 0.5);
        assert!((v.eval(2.0).unwrap() - 2.5).abs() < 1e-15);
        assert!((v.eval(0.7).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn accumulate_sech_pulse_matches_simpson() {
        let w = 2.0 * PI * 0.3e9;
        let v = |t: f64| w / ((t - 25e-9) / 2.5e-9).cosh().powi(2);
        let f = SampledFunction::from_fn(0.0, 50e-9, 50_001, Unit::RadPerSec, v).unwrap();
        let got = accumulate_phase(&f, 0.0).eval(50e-9).unwrap();
        let want = simpson_oracle(v, 0.0, 50e-9, 500_000);
        assert!((got - want).abs() < 1e-8 * want.abs(), "{got} {want}");
    }

    #[test]
    fn accumulate_then_differentiate() {
        let v = |t: f64| (3.0 * t).sin() + t * t;
        for n in [101usize, 201] {
            let f = SampledFunction::from_fn(0.0, 2.0, n, Unit::RadPerSec, v).unwrap();
            let big = accumulate_phase(&f, 0.0);
            let h = f.dt();
            let err = (1..n - 1)
                .map(|k| ((big.samples()[k + 1] - big.samples()[k - 1]) / (2.0 * h) - v(f.time(k))).abs())
                .fold(0.0, f64::max);
            // central difference of the trapezoid sum is v + h^2 v'' / 4, and |v''| <= 11 here
            assert!(err < 3.0 * h * h, "{n}: {err}");
            assert!((big.deriv(0.3).unwrap() - f.eval(0.3).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_examples() {
        let id = SampledFunction::from_fn(0.0, 1.0, 11, Unit::Seconds, |t| t).unwrap();
        let inv = invert_monotone(&id).unwrap();
        assert!((inv.eval(0.37).unwrap() - 0.37).abs() < 1e-12);
        let two = SampledFunction::from_fn(0.0, 1.0, 11, Unit::Seconds, |t| 2.0 * t).unwrap();
        let inv = invert_monotone(&two).unwrap();
        assert_eq!(inv.domain(), (0.0, 2.0));
        assert!((inv.eval(1.3).unwrap() - 0.65).abs() < 1e-12);
        let g = |t: f64| t + 0.1 * t.sin();
        let gs = SampledFunction::hermite(
            0.0,
            0.01,
            (0..=1000).map(|k| g(k as f64 * 0.01)).collect(),
            (0..=1000).map(|k| 1.0 + 0.1 * (k as f64 * 0.01).cos()).collect(),
            Unit::Seconds,
        )
        .unwrap();
        let inv = invert_monotone(&gs).unwrap();
        let (a, b) = inv.domain();
        let err = (0..1000)
            .map(|k| {
                let y = a + (b - a) * (k as f64 + 0.5) / 1000.0;
                (gs.eval(inv.eval(y).unwrap()).unwrap() - y).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn inverse_rejects_non_monotone() {
        let g = SampledFunction::new(0.0, 1.0, vec![0.0, 1.0, 0.5], Unit::Seconds).unwrap();
        assert!(matches!(invert_monotone(&g), Err(VzError::NonMonotone(_))));
        let flat = SampledFunction::new(0.0, 1.0, vec![0.0, 1.0, 1.0], Unit::Seconds).unwrap();
        assert!(invert_monotone(&flat).is_err());
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let line = SampledFunction::from_fn(0.0, 1.0, 7, Unit::Hz, |t| 3.0 - 2.0 * t).unwrap();
        let p = |t: f64| 1.0 - t + 0.5 * t * t - 0.25 * t * t * t;
        let dp = |t: f64| -1.0 + t - 0.75 * t * t;
        let cubic = SampledFunction::hermite(
            0.0,
            0.1,
            (0..=10).map(|k| p(k as f64 * 0.1)).collect(),
            (0..=10).map(|k| dp(k as f64 * 0.1)).collect(),
            Unit::Hz,
        )
        .unwrap();
        for t in [0.013, 0.41, 0.777, 0.999] {
            assert!((line.eval(t).unwrap() - (3.0 - 2.0 * t)).abs() < 1e-12);
            assert!((cubic.eval(t).unwrap() - p(t)).abs() < 1e-10 * p(t).abs().max(1.0));
        }
        // monotone data stays monotone between nodes
        let m = SampledFunction::monotone_cubic(0.0, 1.0, vec![0.0, 0.1, 5.0, 5.1, 9.0], Unit::Seconds).unwrap();
        let vals: Vec<f64> = (0..=400).map(|k| m.eval(k as f64 * 0.01).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn json_units_convert_to_rad_per_second() {
        let j = r#"{"unit":"GHz","t0":0,"dt":1,"time_unit":"ns","samples":[1.0,2.0]}"#;
        let f: SampledFunction = serde_json::from_str(j).unwrap();
        assert_eq!(f.unit(), Unit::RadPerSec);
        assert!((f.eval(0.5e-9).unwrap() - 2.0 * PI * 1.5e9).abs() < 1e-3);
        let back: SampledFunction = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"unit":"furlong","t0":0,"dt":1,"samples":[1.0,2.0]}"#;
        assert!(serde_json::from_str::<SampledFunction>(bad).is_err());
    }

    #[test]
    fn wrap_and_phase() {
        assert!((wrap_symmetric(3.0 * PI, 2.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_symmetric(-0.1, 2.0 * PI) + 0.1).abs() < 1e-12);
        let p = Phase::linear(2.0);
        assert_eq!(p.eval(1.5).unwrap(), 3.0);
        assert_eq!(p.deriv(7.0).unwrap(), 2.0);
        assert!(p.domain().is_none());
    }

    proptest! {
        #[test]
        fn integral_is_linear_and_additive(
            a in proptest::collection::vec(-5.0f64..5.0, 9),
            b in proptest::collection::vec(-5.0f64..5.0, 9),
            c in -3.0f64..3.0,
            x in 0.0f64..1.0,
            y in 0.0f64..1.0,
        ) {
            let f = SampledFunction::new(0.0, 0.125, a.clone(), Unit::Hz).unwrap();
            let g = SampledFunction::new(0.0, 0.125, b.clone(), Unit::Hz).unwrap();
            let h = SampledFunction::new(0.0, 0.125, a.iter().zip(&b).map(|(p, q)| p + c * q).collect(), Unit::Hz).unwrap();
            let (lo, hi) = (x.min(y), x.max(y));
            let scale = a.iter().chain(&b).map(|v| v.abs()).fold(1.0, f64::max) * (1.0 + c.abs());
            let lin = h.integrate(lo, hi).unwrap() - f.integrate(lo, hi).unwrap() - c * g.integrate(lo, hi).unwrap();
            prop_assert!(lin.abs() < 1e-12 * scale);
            let split = f.integrate(0.0, lo).unwrap() + f.integrate(lo, hi).unwrap() + f.integrate(hi, 1.0).unwrap();
            prop_assert!((split - f.integrate(0.0, 1.0).unwrap()).abs() < 1e-12 * scale);
        }
    }
}
