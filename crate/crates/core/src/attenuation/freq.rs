use std::f64::consts::PI;

use super::{AttenuationEngine, Method};
use crate::error::{Error, Result};
use crate::numeric::log_space;
use crate::numeric::quadrature::{integrate, QuadratureOptions};
use crate::spectrum::SpectralDensity;
use crate::waveform::GradientWaveform;

/// Adaptive Gauss-Kronrod quadrature of `gamma^2 ∫_0^inf F(w) S(w) dw`.
#[derive(Debug, Clone, Copy)]
pub struct FreqQuadrature {
    pub options: QuadratureOptions,
    /// The upper limit is placed where the integrand envelope drops below
    /// this fraction of the integrand peak.
    pub envelope_floor: f64,
}

impl Default for FreqQuadrature {
    fn default() -> Self {
        Self {
            options: QuadratureOptions::default(),
            envelope_floor: 1e-14,
        }
    }
}

/// Which spectral kernel to integrate against the filter.
#[derive(Clone, Copy)]
enum Kernel {
    Spectrum,
    /// `ell_c dS/d ell_c = (4 D0/pi) sum b tau^2/(1 + w^2 tau^2)^2`
    LogDerivative,
}

impl Kernel {
    fn eval(self, s: &SpectralDensity, w: f64) -> f64 {
        let w2 = w * w;
        let sum: f64 = s
            .terms()
            .iter()
            .map(|t| {
                let den = 1.0 + w2 * t.tau * t.tau;
                match self {
                    Kernel::Spectrum => t.weight * t.tau * t.tau / den,
                    Kernel::LogDerivative => t.weight * t.tau * t.tau / (den * den),
                }
            })
            .sum();
        match self {
            Kernel::Spectrum => sum * s.d0() / PI,
            Kernel::LogDerivative => 4.0 * sum * s.d0() / PI,
        }
    }

    /// `∫_W^inf kernel(w) / w^2 dw`.
    fn tail_over_w2(self, s: &SpectralDensity, big_w: f64) -> f64 {
        let sum: f64 = s
            .terms()
            .iter()
            .map(|t| {
                let u = 1.0 / (big_w * t.tau);
                let tau3 = t.tau * t.tau * t.tau;
                match self {
                    Kernel::Spectrum => t.weight * tau3 * u_minus_atan(u),
                    Kernel::LogDerivative => t.weight * tau3 * squared_tail(u),
                }
            })
            .sum();
        match self {
            Kernel::Spectrum => sum * s.d0() / PI,
            Kernel::LogDerivative => 4.0 * sum * s.d0() / PI,
        }
    }
}

/// `u - atan(u)`.
fn u_minus_atan(u: f64) -> f64 {
    if u < 0.1 {
        let u2 = u * u;
        let mut term = u * u2;
        let mut sum = 0.0;
        for k in 1..12 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * term / (2 * k + 1) as f64;
            term *= u2;
        }
        sum
    } else {
        u - u.atan()
    }
}

/// `∫_{1/u}^inf dx / (x^2 (1 + x^2)^2)`.
fn squared_tail(u: f64) -> f64 {
    if u < 0.1 {
        let u2 = u * u;
        let mut term = u.powi(5);
        let mut sum = 0.0;
        for k in 2..14 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term * (0.5 - 1.5 / (2 * k + 1) as f64);
            term *= u2;
        }
        sum
    } else {
        u + u / (2.0 * (1.0 + u * u)) - 1.5 * u.atan()
    }
}

impl FreqQuadrature {
    fn overlap(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        kernel: Kernel,
    ) -> Result<f64> {
        let t = waveform.duration();
        let integrand = |w: f64| waveform.filter(w) * kernel.eval(spectrum, w);
        let envelope = |w: f64| waveform.filter_envelope(w) * kernel.eval(spectrum, w);

        let slow = 1.0 / t.max(spectrum.longest_tau());
        let fast = 1.0 / t.min(spectrum.shortest_tau());
        let peak = log_space(1e-3 * slow, 1e3 * fast, 4000)
            .into_iter()
            .map(integrand)
            .fold(0.0, f64::max);
        if peak == 0.0 {
            return Ok(0.0);
        }

        let period = 2.0 * PI / t;
        let mut cutoff = 4.0 * period;
        while envelope(cutoff) > self.envelope_floor * peak {
            cutoff *= 1.25;
        }
        let panels = (cutoff / period).ceil() as usize;
        if panels.saturating_mul(21) > self.options.max_evaluations {
            return Err(Error::Quadrature {
                estimate: f64::NAN,
                error: f64::INFINITY,
                evaluations: panels * 21,
            });
        }
        let cutoff = panels as f64 * period;

        // geometric refinement toward w = 0 resolves narrow Lorentzians
        let mut breaks = Vec::with_capacity(panels + 64);
        breaks.push(0.0);
        let floor = 1e-3 * slow;
        let mut low: Vec<f64> = (1..60)
            .map(|k| period / 2f64.powi(k))
            .take_while(|&w| w > floor)
            .collect();
        low.reverse();
        breaks.extend(low);
        breaks.extend((1..=panels).map(|k| k as f64 * period));

        let body = integrate(integrand, &breaks, &self.options)?;

        // beyond the cutoff F averages to sum(jump^2)/w^2
        let mut jumps = 0.0;
        let mut prev = 0.0;
        for s in waveform.segments() {
            jumps += (s.amplitude - prev).powi(2);
            prev = s.amplitude;
        }
        jumps += prev * prev;
        let tail = jumps * kernel.tail_over_w2(spectrum, cutoff);
        Ok(body.value + tail)
    }
}

impl AttenuationEngine for FreqQuadrature {
    fn name(&self) -> &'static str {
        "freq"
    }

    fn method(&self) -> Method {
        Method::FreqQuadrature
    }

    fn check(&self, _: &GradientWaveform, _: &SpectralDensity) -> Result<()> {
        Ok(())
    }

    fn beta(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        Ok(gamma * gamma * self.overlap(waveform, spectrum, Kernel::Spectrum)?)
    }

    fn log_sensitivity(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        Ok(gamma * gamma * self.overlap(waveform, spectrum, Kernel::LogDerivative)?)
    }
}
