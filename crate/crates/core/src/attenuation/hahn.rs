use super::{AttenuationEngine, Method};
use crate::error::{Error, Result};
use crate::spectrum::SpectralDensity;
use crate::waveform::GradientWaveform;

/// Closed-form Hahn echo attenuation for an exponential correlation.
#[derive(Debug, Clone, Copy, Default)]
pub struct HahnClosedForm;

const SERIES_LIMIT: f64 = 2.0;

/// `x - 3 - exp(-x) + 4 exp(-x/2)`, the Hahn shape factor with `x = t/tau`.
pub(crate) fn shape(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        series(x, |_| 1.0)
    } else {
        x - 3.0 - (-x).exp() + 4.0 * (-0.5 * x).exp()
    }
}

/// `3 g(x) - x g'(x)`, with `g' = (1 - exp(-x/2))^2`.
pub(crate) fn shape_scaling(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        series(x, |n| 3.0 - n as f64)
    } else {
        let gp = (-0.5 * x).exp_m1().powi(2);
        3.0 * shape(x) - x * gp
    }
}

/// `sum_{n>=3} w(n) (-1)^n (4 2^-n - 1) x^n / n!`
fn series(x: f64, weight: impl Fn(u32) -> f64) -> f64 {
    let mut pow = x * x * x / 6.0;
    let mut sum = 0.0;
    for n in 3u32..40 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let c = 4.0 * 0.5f64.powi(n as i32) - 1.0;
        sum += weight(n) * sign * c * pow;
        pow *= x / (n + 1) as f64;
    }
    sum
}

/// `gamma^2 G^2 D0 tau^2 t [1 - (tau/t)(3 + exp(-t/tau) - 4 exp(-t/(2 tau)))]`.
pub fn hahn_exponent(gamma: f64, gradient: f64, d0: f64, tau: f64, t: f64) -> f64 {
    gamma * gamma * gradient * gradient * d0 * tau.powi(3) * shape(t / tau)
}

/// Same bracket with `t/tau` in place of `tau/t`. Kept only to show that
/// this form disagrees with the exact time-domain integral.
pub fn hahn_exponent_inverted_bracket(gamma: f64, gradient: f64, d0: f64, tau: f64, t: f64) -> f64 {
    let x = t / tau;
    gamma
        * gamma
        * gradient
        * gradient
        * d0
        * tau
        * tau
        * t
        * (1.0 - x * (3.0 + (-x).exp() - 4.0 * (-0.5 * x).exp()))
}

impl HahnClosedForm {
    fn params(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
    ) -> Result<(f64, f64)> {
        self.check(waveform, spectrum)?;
        Ok(waveform.as_hahn().expect("checked"))
    }
}

impl AttenuationEngine for HahnClosedForm {
    fn name(&self) -> &'static str {
        "hahn"
    }

    fn method(&self) -> Method {
        Method::HahnClosedForm
    }

    fn check(&self, waveform: &GradientWaveform, spectrum: &SpectralDensity) -> Result<()> {
        if !spectrum.is_single() {
            return Err(Error::UnsupportedModel {
                engine: "hahn",
                reason: format!(
                    "closed form needs a single Lorentzian, got {} terms",
                    spectrum.terms().len()
                ),
            });
        }
        if waveform.as_hahn().is_none() {
            return Err(Error::UnsupportedModel {
                engine: "hahn",
                reason: "waveform is not a two-lobe Hahn echo".into(),
            });
        }
        Ok(())
    }

    fn beta(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        let (g, t) = self.params(waveform, spectrum)?;
        let term = spectrum.terms()[0];
        Ok(term.weight * hahn_exponent(gamma, g, spectrum.d0(), term.tau, t))
    }

    fn log_sensitivity(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        let (g, t) = self.params(waveform, spectrum)?;
        let term = spectrum.terms()[0];
        let tau = term.tau;
        Ok(2.0
            * term.weight
            * gamma
            * gamma
            * g
            * g
            * spectrum.d0()
            * tau.powi(3)
            * shape_scaling(t / tau))
    }
}
