//! Physical drive <-> baseband quadratures.
//!
//! With `Omega = mu [I cos(phi) + Q sin(phi)] = Re[mu (I - iQ) e^{i phi}]`, the narrowest (I, Q) come
//! from the analytic signal of Omega in the warped time `x = phi(t)`:
//! `mu (I - iQ) = (u + i H u) e^{-ix}` with `u(x) = Omega(phi^-1(x))`.

use crate::error::{Result, VzError};
use crate::sampled::{Phase, SampledFunction, Unit};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqOptions {
    /// Tukey taper fraction applied to the drive before the transform.
    pub tukey_alpha: f64,
    /// Samples per period of the highest retained frequency in warped time.
    pub oversample: f64,
}

impl Default for IqOptions {
    fn default() -> Self {
        IqOptions {
            tukey_alpha: 0.1,
            oversample: 8.0,
        }
    }
}

pub fn tukey(s: f64, alpha: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    if alpha <= 0.0 {
        return 1.0;
    }
    let h = 0.5 * alpha;
    if s < h {
        0.5 * (1.0 - (PI * s / h).cos())
    } else if s > 1.0 - h {
        0.5 * (1.0 - (PI * (1.0 - s) / h).cos())
    } else {
        1.0
    }
}

/// Omega = mu [I cos(phi) + Q sin(phi)] on the grid of I.
pub fn synthesize(i: &SampledFunction, q: &SampledFunction, phi: &Phase, mu: f64) -> Result<SampledFunction> {
    same_grid(i, q)?;
    let s = i
        .times()
        .zip(i.samples().iter().zip(q.samples()))
        .map(|(t, (a, b))| {
            let (sn, cs) = phi.eval_clamped(t).sin_cos();
            mu * (a * cs + b * sn)
        })
        .collect();
    SampledFunction::new(i.t0(), i.dt(), s, Unit::RadPerSec)
}

/// Frequency-multiplexed drive: sum_j mu [I_j cos(w_j phi) + Q_j sin(w_j phi)].
pub fn synthesize_global(
    channels: &[(SampledFunction, SampledFunction)],
    freqs: &[f64],
    base: &Phase,
    mu: f64,
) -> Result<SampledFunction> {
    if channels.len() != freqs.len() || channels.is_empty() {
        return Err(VzError::DimensionMismatch(channels.len(), freqs.len()));
    }
    let first = &channels[0].0;
    for (i, q) in channels {
        same_grid(first, i)?;
        same_grid(first, q)?;
    }
    let s = first
        .times()
        .enumerate()
        .map(|(k, t)| {
            let x = base.eval_clamped(t);
            channels
                .iter()
                .zip(freqs)
                .map(|((i, q), w)| {
                    let (sn, cs) = (w * x).sin_cos();
                    mu * (i.samples()[k] * cs + q.samples()[k] * sn)
                })
                .sum()
        })
        .collect();
    SampledFunction::new(first.t0(), first.dt(), s, Unit::RadPerSec)
}

fn same_grid(a: &SampledFunction, b: &SampledFunction) -> Result<()> {
    let tol = 1e-12 * (a.t_end() - a.t0()).abs().max(1e-300);
    if a.len() != b.len() || (a.t0() - b.t0()).abs() > tol || (a.dt() - b.dt()).abs() > tol / a.len() as f64 {
        return Err(VzError::Domain("quadratures are sampled on different grids".into()));
    }
    Ok(())
}

/// Drive resampled on a uniform warped-time grid, zero-padded to a power of two.
struct Warped {
    x0: f64,
    dx: f64,
    /// Samples inside the window; the rest of the buffer is padding.
    used: usize,
    buf: Vec<Complex64>,
}

fn invert_phase(phi: &Phase, x: f64, lo: f64, hi: f64, guess: f64) -> f64 {
    // Newton from the previous root, bracketed by bisection.
    let (mut a, mut b) = (lo, hi);
    let mut t = guess.clamp(lo, hi);
    for _ in 0..60 {
        let r = phi.eval_clamped(t) - x;
        if r.abs() <= 1e-13 * x.abs().max(1.0) {
            return t;
        }
        if r > 0.0 {
            b = t;
        } else {
            a = t;
        }
        let d = phi.deriv_clamped(t);
        let nt = t - r / d;
        t = if d > 0.0 && nt > a && nt < b { nt } else { 0.5 * (a + b) };
        if b - a <= 1e-15 * (hi - lo) {
            break;
        }
    }
    t
}

fn check_phase(omega: &SampledFunction, phi: &Phase) -> Result<()> {
    let rates: Vec<f64> = omega.times().map(|t| phi.deriv_clamped(t)).collect();
    if rates.iter().any(|r| !(*r > 0.0)) {
        return Err(VzError::NonMonotonePhase);
    }
    let vals: Vec<f64> = omega.times().map(|t| phi.eval_clamped(t)).collect();
    if vals.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VzError::NonMonotonePhase);
    }
    Ok(())
}

fn warp(omega: &SampledFunction, phi: &Phase, scale: f64, top_freq: f64, opts: &IqOptions) -> Result<Warped> {
    check_phase(omega, phi)?;
    let (a, b) = omega.domain();
    let (xa, xb) = (phi.eval_clamped(a), phi.eval_clamped(b));
    let by_freq = ((xb - xa) * top_freq * opts.oversample / (2.0 * PI)).ceil() as usize;
    let used = by_freq.max(2 * omega.len()).max(16);
    let dx = (xb - xa) / (used - 1) as f64;
    let total = (2 * used).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    let src = SampledFunction::monotone_cubic(omega.t0(), omega.dt(), omega.samples().to_vec(), omega.unit())?;
    let mut t = a;
    for (k, slot) in buf.iter_mut().take(used).enumerate() {
        let x = xa + k as f64 * dx;
        t = invert_phase(phi, x, a, b, t);
        let w = tukey((t - a) / (b - a), opts.tukey_alpha);
        *slot = Complex64::new(w * src.eval_clamped(t) / scale, 0.0);
    }
    Ok(Warped { x0: xa, dx, used, buf })
}

/// Keep spectral bins whose angular frequency lies in [lo, hi) (positive side), doubled; DC and the
/// Nyquist bin are kept once when inside the band.
fn band_pass(spec: &[Complex64], dx: f64, lo: f64, hi: f64) -> Vec<Complex64> {
    let n = spec.len();
    let dw = 2.0 * PI / (n as f64 * dx);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..=n / 2 {
        let w = k as f64 * dw;
        if w < lo || w >= hi {
            continue;
        }
        let weight = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
        out[k] = spec[k] * weight;
    }
    out
}

/// Baseband (I, Q) on the warped grid, returned on the grid of `omega`.
fn demodulate(
    omega: &SampledFunction,
    phi: &Phase,
    w: &Warped,
    analytic: &[Complex64],
    carrier: f64,
) -> Result<(SampledFunction, SampledFunction)> {
    let (xi, xq): (Vec<f64>, Vec<f64>) = analytic[..w.used]
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let x = w.x0 + k as f64 * w.dx;
            let d = z * Complex64::from_polar(1.0, -carrier * x);
            (d.re, -d.im)
        })
        .unzip();
    let bi = SampledFunction::monotone_cubic(w.x0, w.dx, xi, Unit::Dimensionless)?;
    let bq = SampledFunction::monotone_cubic(w.x0, w.dx, xq, Unit::Dimensionless)?;
    let (mut si, mut sq) = (Vec::with_capacity(omega.len()), Vec::with_capacity(omega.len()));
    for t in omega.times() {
        let x = phi.eval_clamped(t);
        si.push(bi.eval_clamped(x));
        sq.push(bq.eval_clamped(x));
    }
    Ok((
        SampledFunction::new(omega.t0(), omega.dt(), si, Unit::Dimensionless)?,
        SampledFunction::new(omega.t0(), omega.dt(), sq, Unit::Dimensionless)?,
    ))
}

fn fft_roundtrip(buf: &mut [Complex64], dx: f64, lo: f64, hi: f64) -> Vec<Complex64> {
    let n = buf.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(buf);
    let mut band = band_pass(buf, dx, lo, hi);
    planner.plan_fft_inverse(n).process(&mut band);
    let s = 1.0 / n as f64;
    band.iter_mut().for_each(|z| *z *= s);
    band
}

/// (I, Q) with Omega = mu [I cos(phi) + Q sin(phi)] and the smallest spectral width.
pub fn decompose_local(
    omega: &SampledFunction,
    phi: &Phase,
    mu: f64,
    opts: &IqOptions,
) -> Result<(SampledFunction, SampledFunction)> {
    if mu == 0.0 {
        return Err(VzError::Validation("drive strength mu must be non-zero".into()));
    }
    let mut w = warp(omega, phi, mu, 2.0, opts)?;
    let analytic = fft_roundtrip(&mut w.buf, w.dx, 0.0, f64::INFINITY);
    demodulate(omega, phi, &w, &analytic, 1.0)
}

/// Per-channel (I_j, Q_j) of a multiplexed drive with phi_j = w_j phi, split at band midpoints.
pub fn decompose_global(
    omega: &SampledFunction,
    freqs: &[f64],
    base: &Phase,
    mu: f64,
    opts: &IqOptions,
) -> Result<Vec<(SampledFunction, SampledFunction)>> {
    if freqs.is_empty() {
        return Err(VzError::Validation("no carrier frequencies".into()));
    }
    if freqs.iter().any(|w| !(*w > 0.0)) {
        return Err(VzError::Validation("carrier frequencies must be positive".into()));
    }
    if freqs.windows(2).any(|p| p[1] < p[0]) {
        return Err(VzError::Validation("carrier frequencies must be sorted ascending".into()));
    }
    if let Some(p) = freqs.windows(2).find(|p| p[1] == p[0]) {
        return Err(VzError::DegenerateFrequencies(format!("carrier {} appears twice", p[0])));
    }
    if mu == 0.0 {
        return Err(VzError::Validation("drive strength mu must be non-zero".into()));
    }
    let top = 2.0 * freqs[freqs.len() - 1];
    let w = warp(omega, base, mu, top, opts)?;
    let n = freqs.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let lo = if j == 0 { 0.0 } else { 0.5 * (freqs[j - 1] + freqs[j]) };
        let hi = if j + 1 == n { f64::INFINITY } else { 0.5 * (freqs[j] + freqs[j + 1]) };
        let mut buf = w.buf.clone();
        let g = fft_roundtrip(&mut buf, w.dx, lo, hi);
        out.push(demodulate(omega, base, &w, &g, freqs[j])?);
    }
    Ok(out)
}

/// Re-express (I, Q) given relative to `from` as quadratures relative to `to`, leaving
/// Omega unchanged: I' - iQ' = (I - iQ) e^{i(from - to)}.
pub fn rephase(
    i: &SampledFunction,
    q: &SampledFunction,
    from: &Phase,
    to: &Phase,
) -> Result<(SampledFunction, SampledFunction)> {
    same_grid(i, q)?;
    let (mut si, mut sq) = (Vec::with_capacity(i.len()), Vec::with_capacity(i.len()));
    for (k, t) in i.times().enumerate() {
        let z = Complex64::new(i.samples()[k], -q.samples()[k])
            * Complex64::from_polar(1.0, from.eval_clamped(t) - to.eval_clamped(t));
        si.push(z.re);
        sq.push(-z.im);
    }
    Ok((
        SampledFunction::new(i.t0(), i.dt(), si, i.unit())?,
        SampledFunction::new(q.t0(), q.dt(), sq, q.unit())?,
    ))
}

/// Relative L2 difference on the central fraction of the common grid.
pub fn central_l2(a: &SampledFunction, b: &SampledFunction, fraction: f64) -> f64 {
    let n = a.len().min(b.len());
    let skip = ((1.0 - fraction) * 0.5 * n as f64).round() as usize;
    let (mut num, mut den) = (0.0, 0.0);
    for k in skip..n.saturating_sub(skip) {
        num += (a.samples()[k] - b.samples()[k]).powi(2);
        den += b.samples()[k].powi(2);
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const W: f64 = 2.0 * PI * 1e9;

    fn grid(f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction::from_fn(0.0, 400e-9, 40001, Unit::RadPerSec, f).unwrap()
    }

    fn central_max(f: &SampledFunction, target: impl Fn(f64) -> f64) -> f64 {
        let n = f.len();
        (n / 10..n - n / 10)
            .map(|k| (f.samples()[k] - target(f.time(k))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cosine_carrier_gives_constant_i() {
        let mu = 3.0;
        let om = grid(|t| mu * (W * t).cos());
        let (i, q) = decompose_local(&om, &Phase::linear(W), mu, &IqOptions::default()).unwrap();
        assert!(central_max(&i, |_| 1.0) < 1e-3);
        assert!(central_max(&q, |_| 0.0) < 1e-3);
    }

    #[test]
    fn sine_carrier_gives_constant_q() {
        let om = grid(|t| (W * t).sin());
        let (i, q) = decompose_local(&om, &Phase::linear(W), 1.0, &IqOptions::default()).unwrap();
        assert!(central_max(&i, |_| 0.0) < 1e-3);
        assert!(central_max(&q, |_| 1.0) < 1e-3);
    }

    #[test]
    fn shifted_gaussian_splits_evenly() {
        let g = |t: f64| (-0.5 * ((t - 200e-9) / 60e-9).powi(2)).exp();
        let expect = grid(|t| g(t) / 2f64.sqrt());
        let om = grid(|t| g(t) * (W * t - PI / 4.0).cos());
        let (i, q) = decompose_local(&om, &Phase::linear(W), 1.0, &IqOptions::default()).unwrap();
        assert!(central_l2(&i, &expect, 0.8) < 1e-3);
        assert!(central_l2(&q, &expect, 0.8) < 1e-3);
        // a +pi/4 offset flips the sign of Q
        let om = grid(|t| g(t) * (W * t + PI / 4.0).cos());
        let (i, q) = decompose_local(&om, &Phase::linear(W), 1.0, &IqOptions::default()).unwrap();
        assert!(central_l2(&i, &expect, 0.8) < 1e-3);
        assert!(central_l2(&q.scaled(-1.0), &expect, 0.8) < 1e-3);
    }

    #[test]
    fn synthesize_matches_closed_form() {
        let one = grid(|_| 1.0);
        let zero = grid(|_| 0.0);
        let om = synthesize(&zero, &one, &Phase::linear(W), 2.0).unwrap();
        assert!(central_max(&om, |t| 2.0 * (W * t).sin()) < 1e-9);
    }

    #[test]
    fn decreasing_phase_is_rejected() {
        let om = grid(|t| (W * t).cos());
        assert_eq!(
            decompose_local(&om, &Phase::linear(-W), 1.0, &IqOptions::default()),
            Err(VzError::NonMonotonePhase)
        );
    }

    #[test]
    fn global_single_tone_isolated() {
        let freqs = [2.0 * PI * 0.6e9, 2.0 * PI * 1.0e9, 2.0 * PI * 1.4e9];
        let om = grid(|t| 0.7 * (freqs[1] * t).cos());
        let ch = decompose_global(&om, &freqs, &Phase::linear(1.0), 1.0, &IqOptions::default()).unwrap();
        assert!(central_max(&ch[1].0, |_| 0.7) < 1e-3 * 0.7);
        for j in [0, 2] {
            assert!(central_max(&ch[j].0, |_| 0.0) < 1e-3 * 0.7);
            assert!(central_max(&ch[j].1, |_| 0.0) < 1e-3 * 0.7);
        }
    }

    #[test]
    fn global_zero_and_duplicates() {
        let om = grid(|_| 0.0);
        let ch = decompose_global(&om, &[1e8, 2e8], &Phase::linear(1.0), 1.0, &IqOptions::default()).unwrap();
        assert!(ch.iter().all(|(i, q)| i.is_zero() && q.is_zero()));
        assert!(matches!(
            decompose_global(&om, &[1e8, 1e8], &Phase::linear(1.0), 1.0, &IqOptions::default()),
            Err(VzError::DegenerateFrequencies(_))
        ));
    }

    #[test]
    fn rephase_preserves_drive() {
        let i = grid(|t| (t * 1e7).sin());
        let q = grid(|t| (t * 2e7).cos());
        let from = Phase::linear(W);
        let to = Phase::linear(1.1 * W);
        let (i2, q2) = rephase(&i, &q, &from, &to).unwrap();
        let a = synthesize(&i, &q, &from, 1.0).unwrap();
        let b = synthesize(&i2, &q2, &to, 1.0).unwrap();
        assert!(central_max(&a, |t| b.eval(t).unwrap()) < 1e-12);
    }

    #[test]
    fn synthesize_cosine() {
        let om = synthesize(&grid(|_| 1.0), &grid(|_| 0.0), &Phase::linear(W), 0.5).unwrap();
        assert!(central_max(&om, |t| 0.5 * (W * t).cos()) < 1e-12);
    }

    #[test]
    fn band_limited_round_trip_is_tight() {
        let g = |t: f64| (-0.5 * ((t - 200e-9) / 40e-9).powi(2)).exp();
        // dense input so that resampling error stays below the tolerance
        let om = SampledFunction::from_fn(0.0, 400e-9, 200001, Unit::RadPerSec, |t| {
            g(t) * (1.05 * W * t).cos() + 0.3 * g(t - 30e-9) * (0.9 * W * t).sin()
        })
        .unwrap();
        let phi = Phase::linear(W);
        let (i, q) = decompose_local(&om, &phi, 2.0, &IqOptions::default()).unwrap();
        let back = synthesize(&i, &q, &phi, 2.0).unwrap();
        let r = central_l2(&back, &om, 0.8);
        assert!(r < 1e-6, "{r:e}");
    }

    #[test]
    fn chirped_phase_is_unwarped() {
        // phi = W t + a sin(b t) stays monotone for a b < W
        let (a, b) = (3.0, 2.0 * PI * 20e6);
        let ph: Vec<f64> = grid(|t| W * t + a * (b * t).sin()).samples().to_vec();
        let phi = Phase::Sampled { f: SampledFunction::new(0.0, 400e-9 / 40000.0, ph, Unit::Radians).unwrap() };
        let om = grid(|t| (W * t + a * (b * t).sin()).cos());
        let (i, q) = decompose_local(&om, &phi, 1.0, &IqOptions::default()).unwrap();
        assert!(central_max(&i, |_| 1.0) < 1e-3);
        assert!(central_max(&q, |_| 0.0) < 1e-3);
    }

    #[test]
    fn baseband_stays_narrow() {
        // content in warped frequencies [0.7, 1.3] -> baseband inside |w| <= 0.3
        let om = grid(|t| {
            let env = (-0.5 * ((t - 200e-9) / 50e-9).powi(2)).exp();
            env * ((0.8 * W * t).cos() + 0.5 * (1.2 * W * t).sin())
        });
        let (i, q) = decompose_local(&om, &Phase::linear(W), 1.0, &IqOptions::default()).unwrap();
        let n = i.len();
        let mut z: Vec<Complex64> = (0..n).map(|k| Complex64::new(i.samples()[k], -q.samples()[k])).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut z);
        let dw = 2.0 * PI / (n as f64 * i.dt()) / W;
        let (mut inside, mut outside) = (0.0, 0.0);
        for (k, c) in z.iter().enumerate() {
            let w = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * dw;
            if w.abs() <= 0.35 {
                inside += c.norm_sqr();
            } else {
                outside += c.norm_sqr();
            }
        }
        assert!(outside / inside < 1e-6, "{}", outside / inside);
    }

    #[test]
    fn global_two_tones_reconstruct() {
        let freqs = [2.0 * PI * 0.6e9, 2.0 * PI * 1.0e9, 2.0 * PI * 1.4e9];
        let g = |t: f64| (-0.5 * ((t - 200e-9) / 60e-9).powi(2)).exp();
        let om = grid(|t| g(t) * (freqs[0] * t).cos() - 0.4 * g(t) * (freqs[1] * t).sin());
        let base = Phase::linear(1.0);
        let ch = decompose_global(&om, &freqs, &base, 1.0, &IqOptions::default()).unwrap();
        let back = synthesize_global(&ch, &freqs, &base, 1.0).unwrap();
        assert!(central_l2(&back, &om, 0.8) < 1e-3);
        assert!(central_l2(&ch[0].0, &grid(g), 0.8) < 1e-3);
        assert!(central_l2(&ch[1].1, &grid(|t| -0.4 * g(t)), 0.8) < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn local_round_trip(a in -1.0f64..1.0, b in -1.0f64..1.0, f in 2e6f64..20e6, c in 0.3f64..0.7) {
            let env_i = move |t: f64| a * (-0.5 * ((t - c * 400e-9) / 50e-9).powi(2)).exp();
            let env_q = move |t: f64| b * (2.0 * PI * f * t).cos() * (-0.5 * ((t - 200e-9) / 70e-9).powi(2)).exp();
            let i = grid(env_i);
            let q = grid(env_q);
            let phi = Phase::linear(W);
            let om = synthesize(&i, &q, &phi, 1.5).unwrap();
            let (i2, q2) = decompose_local(&om, &phi, 1.5, &IqOptions::default()).unwrap();
            let back = synthesize(&i2, &q2, &phi, 1.5).unwrap();
            prop_assert!(central_l2(&back, &om, 0.8) < 1e-3);
            let (i3, _) = decompose_local(&om.scaled(2.0), &phi, 1.5, &IqOptions::default()).unwrap();
            prop_assert!(central_l2(&i3, &i2.scaled(2.0), 0.8) < 1e-9 + 1e-9 * i2.max_abs());
        }
    }
}
