//! Piecewise-constant effective gradient waveforms and their filter functions.
//!
//! The effective waveform already carries the sign flip of the refocusing
//! pulse. The filter is the squared finite-time Fourier transform including
//! the gradient amplitude,
//!
//! ```text
//! F(w) = | ∫_0^t G(t') exp(-i w t') dt' |^2        [T^2 m^-2 s^2]
//! ```
//!
//! so that the phase variance is `gamma^2 ∫ F(w) S(w) dw` with `S` normalised
//! as in [`crate::spectrum`]. For PGSE this is
//! `G^2 |4 sin(w delta/2) sin(w Delta/2) / w|^2`.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::minimize::brent_minimize;

/// Below this `|w| t` the sinc factor switches to its Taylor series.
const SMALL_PHASE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Duration, s.
    pub duration: f64,
    /// Signed effective amplitude, T/m.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientWaveform {
    segments: Vec<Segment>,
}

impl GradientWaveform {
    /// Validates durations and the echo condition `∫ G dt = 0`.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("segments", "waveform has no segments"));
        }
        if let Some(s) = segments
            .iter()
            .find(|s| !(s.duration > 0.0 && s.duration.is_finite() && s.amplitude.is_finite()))
        {
            return Err(Error::invalid(
                "segments",
                format!("durations must be positive and amplitudes finite, got {s:?}"),
            ));
        }
        let moment: f64 = segments.iter().map(|s| s.duration * s.amplitude).sum();
        let scale: f64 = segments
            .iter()
            .map(|s| (s.duration * s.amplitude).abs())
            .sum();
        if moment.abs() > 1e-12 * scale {
            return Err(Error::invalid(
                "segments",
                format!("echo condition violated: zeroth moment {moment:e} T s/m"),
            ));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Start times of the segments followed by the total duration.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// `∫ G dt`, T s/m.
    pub fn zeroth_moment(&self) -> f64 {
        self.segments.iter().map(|s| s.duration * s.amplitude).sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.amplitude.abs())
            .fold(0.0, f64::max)
    }

    /// Amplitude at time `t` (right-continuous; zero outside the waveform).
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for s in &self.segments {
            if t >= start && t < start + s.duration {
                return s.amplitude;
            }
            start += s.duration;
        }
        0.0
    }

    /// Same waveform played backwards.
    pub fn time_reversed(&self) -> Self {
        Self {
            segments: self.segments.iter().rev().copied().collect(),
        }
    }

    /// Waveform with every duration multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    duration: s.duration * factor,
                    amplitude: s.amplitude,
                })
                .collect(),
        }
    }

    /// Waveform with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    duration: s.duration,
                    amplitude: s.amplitude * factor,
                })
                .collect(),
        }
    }

    /// `(G, t)` if this is a constant-gradient Hahn echo: two equal-length
    /// lobes of opposite sign.
    pub fn as_hahn(&self) -> Option<(f64, f64)> {
        match self.segments.as_slice() {
            [a, b]
                if a.amplitude == -b.amplitude
                    && ((a.duration - b.duration).abs() <= 1e-12 * a.duration) =>
            {
                Some((a.amplitude.abs(), a.duration + b.duration))
            }
            _ => None,
        }
    }

    /// Finite-time Fourier transform `∫ G(t) exp(-i w t) dt` as `(re, im)`.
    pub fn fourier(&self, omega: f64) -> (f64, f64) {
        let mut re = 0.0;
        let mut im = 0.0;
        let mut start = 0.0;
        for s in &self.segments {
            let half = 0.5 * s.duration;
            let mid = start + half;
            // ∫_a^b e^{-iwt} dt = L sinc(w L/2) e^{-i w mid}
            let x = omega * half;
            let sinc = if x.abs() < SMALL_PHASE {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            };
            let mag = s.amplitude * s.duration * sinc;
            let (sn, cs) = (omega * mid).sin_cos();
            re += mag * cs;
            im -= mag * sn;
            start += s.duration;
        }
        (re, im)
    }

    /// Filter function `|∫ G exp(-i w t) dt|^2`, T^2 m^-2 s^2.
    pub fn filter(&self, omega: f64) -> f64 {
        let (re, im) = self.fourier(omega);
        re * re + im * im
    }

    /// Bound `F(w) <= filter_envelope(w)` valid for all `w != 0`.
    pub fn filter_envelope(&self, omega: f64) -> f64 {
        let total: f64 = self.segments.iter().map(|s| s.amplitude.abs()).sum();
        let by_area: f64 = self
            .segments
            .iter()
            .map(|s| (s.amplitude * s.duration).abs())
            .sum();
        let bound = by_area.min(2.0 * total / omega.abs());
        bound * bound
    }

    /// Frequency of the dominant filter lobe on `(0, 40 pi / t]`.
    pub fn bandpass_center(&self) -> Result<f64> {
        let t = self.duration();
        let hi = 40.0 * std::f64::consts::PI / t;
        let n = 8000;
        let step = hi / n as f64;
        let (mut best_i, mut best) = (0usize, 0.0);
        for i in 1..=n {
            let v = self.filter(i as f64 * step);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        if best_i == 0 || !(best > 0.0) {
            return Err(Error::Domain(
                "filter vanishes identically; no bandpass centre".into(),
            ));
        }
        let lo = (best_i as f64 - 1.0) * step;
        let up = ((best_i as f64 + 1.0) * step).min(hi);
        let m = brent_minimize(
            |w| -self.filter(w),
            lo.max(step * 1e-3),
            up,
            best_i as f64 * step,
            1e-12,
            0.0,
        );
        Ok(m.x)
    }

    /// CSV rows `duration_s,amplitude_T_per_m` with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "duration_s,amplitude_T_per_m")?;
        for s in &self.segments {
            writeln!(out, "{:e},{:e}", s.duration, s.amplitude)?;
        }
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv); `#` lines and a
    /// non-numeric header are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut segments = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::invalid("waveform", e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(d), Some(a), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::invalid(
                    "waveform",
                    format!("line {}: expected two columns", lineno + 1),
                ));
            };
            match (d.parse::<f64>(), a.parse::<f64>()) {
                (Ok(duration), Ok(amplitude)) => segments.push(Segment {
                    duration,
                    amplitude,
                }),
                _ if segments.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::invalid(
                        "waveform",
                        format!("line {}: cannot parse `{line}`", lineno + 1),
                    ))
                }
            }
        }
        Self::new(segments)
    }

    /// CSV dump `omega,F` of the filter.
    pub fn write_filter_csv<W: Write>(&self, omegas: &[f64], mut out: W) -> io::Result<()> {
        writeln!(out, "omega,F")?;
        for &w in omegas {
            writeln!(out, "{w:e},{:e}", self.filter(w))?;
        }
        Ok(())
    }
}

/// Pulsed-gradient spin-echo timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgseTiming {
    /// Gradient pulse duration, s.
    pub delta: f64,
    /// Pulse separation (onset to onset), s.
    pub big_delta: f64,
    /// Gradient amplitude, T/m.
    pub gradient: f64,
}

impl PgseTiming {
    pub fn new(delta: f64, big_delta: f64, gradient: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(
                "delta",
                format!("must be positive, got {delta}"),
            ));
        }
        if !(big_delta.is_finite() && delta <= big_delta) {
            return Err(Error::invalid(
                "big_delta",
                format!("need delta <= Delta, got delta={delta}, Delta={big_delta}"),
            ));
        }
        if !gradient.is_finite() {
            return Err(Error::invalid("gradient", "must be finite"));
        }
        Ok(Self {
            delta,
            big_delta,
            gradient,
        })
    }

    /// Constant-gradient Hahn echo, `delta = Delta = t/2`.
    pub fn hahn(gradient: f64, t: f64) -> Result<Self> {
        Self::new(0.5 * t, 0.5 * t, gradient)
    }

    /// Total diffusion time `delta + Delta`.
    pub fn duration(&self) -> f64 {
        self.delta + self.big_delta
    }

    /// Closed-form PGSE filter `G^2 |4 sin(w delta/2) sin(w Delta/2) / w|^2`.
    pub fn filter(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        let v =
            4.0 * (0.5 * omega * self.delta).sin() * (0.5 * omega * self.big_delta).sin() / omega;
        self.gradient * self.gradient * v * v
    }
}

/// Effective PGSE waveform: `+G` on `[0, delta]`, zero until `Delta`, then
/// `-G` on `[Delta, Delta + delta]`.
pub fn pgse_waveform(timing: &PgseTiming) -> GradientWaveform {
    let g = timing.gradient;
    let mut segments = vec![Segment {
        duration: timing.delta,
        amplitude: g,
    }];
    let gap = timing.big_delta - timing.delta;
    if gap > 0.0 {
        segments.push(Segment {
            duration: gap,
            amplitude: 0.0,
        });
    }
    segments.push(Segment {
        duration: timing.delta,
        amplitude: -g,
    });
    GradientWaveform { segments }
}

/// Constant-gradient Hahn echo of total duration `t`.
pub fn hahn_waveform(gradient: f64, t: f64) -> Result<GradientWaveform> {
    Ok(pgse_waveform(&PgseTiming::hahn(gradient, t)?))
}

/// Oscillating-gradient train of `lobes` alternating rectangles, each of
/// duration `lobe`. `lobes` must be even for the echo condition.
pub fn oscillating_waveform(gradient: f64, lobe: f64, lobes: usize) -> Result<GradientWaveform> {
    if lobes == 0 || !lobes.is_multiple_of(2) {
        return Err(Error::invalid(
            "lobes",
            "need a positive even number of lobes",
        ));
    }
    GradientWaveform::new(
        (0..lobes)
            .map(|i| Segment {
                duration: lobe,
                amplitude: if i % 2 == 0 { gradient } else { -gradient },
            })
            .collect(),
    )
}
