//! Signal attenuation `beta = <phi^2>/2` and the normalised echo `M = exp(-beta)`.
//!
//! Three engines compute `beta`, each behind [`AttenuationEngine`] and
//! registered by name in an [`EngineRegistry`]:
//!
//! | name   | engine                | models                          |
//! |--------|-----------------------|---------------------------------|
//! | `freq` | [`FreqQuadrature`]    | any waveform, any spectrum      |
//! | `time` | [`TimeDomainExact`]   | any waveform, single Lorentzian |
//! | `hahn` | [`HahnClosedForm`]    | Hahn echo, single Lorentzian    |
//!
//! Every engine also returns the log-sensitivity `ell_c d(beta)/d(ell_c)` at
//! fixed `D0`, propagated analytically through `tau_k ∝ ell_c^2`.

mod freq;
mod hahn;
mod time;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

pub use freq::FreqQuadrature;
pub use hahn::{hahn_exponent, hahn_exponent_inverted_bracket, HahnClosedForm};
pub use time::TimeDomainExact;

use crate::error::{Error, Result};
use crate::spectrum::{lorentzian_spectrum, SpectralDensity};
use crate::units::TissueModel;
use crate::waveform::{hahn_waveform, GradientWaveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FreqQuadrature,
    TimeDomainExact,
    HahnClosedForm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FreqQuadrature => "freq",
            Method::TimeDomainExact => "time",
            Method::HahnClosedForm => "hahn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationResult {
    pub beta: f64,
    /// `exp(-beta)`.
    pub m_norm: f64,
    /// `exp(-t/T2) exp(-beta)`; equal to `m_norm` until [`apply_t2`] is used.
    pub m_norm_t2: f64,
    pub t: f64,
    pub method: Method,
}

impl AttenuationResult {
    pub fn new(beta: f64, t: f64, method: Method) -> Self {
        let m = (-beta).exp();
        Self {
            beta,
            m_norm: m,
            m_norm_t2: m,
            t,
            method,
        }
    }
}

/// Multiplies the echo by the relaxation factor `exp(-t/T2)`.
pub fn apply_t2(result: AttenuationResult, t2: f64, t: f64) -> AttenuationResult {
    let factor = if t2.is_infinite() {
        1.0
    } else {
        (-t / t2).exp()
    };
    AttenuationResult {
        m_norm_t2: result.m_norm * factor,
        t,
        ..result
    }
}

/// A way of evaluating the attenuation exponent.
pub trait AttenuationEngine: Send + Sync {
    fn name(&self) -> &'static str;

    fn method(&self) -> Method;

    /// Whether the engine can evaluate this combination.
    fn check(&self, waveform: &GradientWaveform, spectrum: &SpectralDensity) -> Result<()>;

    /// `beta = (gamma^2 / 2) ∫ F(w) S(w) dw`.
    fn beta(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64>;

    /// `ell_c d(beta)/d(ell_c)` at fixed `D0`.
    fn log_sensitivity(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64>;

    fn attenuate(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<AttenuationResult> {
        let beta = self.beta(waveform, spectrum, gamma)?;
        Ok(AttenuationResult::new(
            beta,
            waveform.duration(),
            self.method(),
        ))
    }
}

/// Name-keyed set of attenuation engines.
#[derive(Clone, Default)]
pub struct EngineRegistry {
    engines: BTreeMap<&'static str, Arc<dyn AttenuationEngine>>,
}

impl EngineRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(FreqQuadrature::default()));
        r.register(Arc::new(TimeDomainExact));
        r.register(Arc::new(HahnClosedForm));
        r
    }

    pub fn register(&mut self, engine: Arc<dyn AttenuationEngine>) {
        self.engines.insert(engine.name(), engine);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AttenuationEngine>> {
        self.engines
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownEngine(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.engines.keys().copied().collect()
    }

    /// Exact time-domain sum when it applies, quadrature otherwise.
    pub fn default_for(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
    ) -> Result<Arc<dyn AttenuationEngine>> {
        for name in ["time", "freq"] {
            if let Some(e) = self.engines.get(name) {
                if e.check(waveform, spectrum).is_ok() {
                    return Ok(e.clone());
                }
            }
        }
        Err(Error::UnsupportedModel {
            engine: "any",
            reason: "no registered engine accepts this waveform/spectrum".into(),
        })
    }
}

/// Process-wide registry with the three built-in engines.
pub fn default_engines() -> &'static EngineRegistry {
    static REGISTRY: OnceLock<EngineRegistry> = OnceLock::new();
    REGISTRY.get_or_init(EngineRegistry::with_defaults)
}

/// Attenuation by adaptive quadrature of the filter-spectrum overlap.
pub fn attenuation_freq(
    waveform: &GradientWaveform,
    spectrum: &SpectralDensity,
    gamma: f64,
) -> Result<AttenuationResult> {
    FreqQuadrature::default().attenuate(waveform, spectrum, gamma)
}

/// Attenuation from the exact double time integral of the exponential
/// displacement correlation.
pub fn attenuation_time_exact(
    waveform: &GradientWaveform,
    tissue: &TissueModel,
    gamma: f64,
) -> Result<AttenuationResult> {
    TimeDomainExact.attenuate(waveform, &lorentzian_spectrum(tissue), gamma)
}

/// Closed-form Hahn echo attenuation for a single-Lorentzian tissue.
pub fn hahn_closed_form(
    tissue: &TissueModel,
    gradient: f64,
    t: f64,
    gamma: f64,
) -> Result<AttenuationResult> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!(
            "diffusion time must be positive, got {t}"
        )));
    }
    let beta = hahn_exponent(gamma, gradient, tissue.d0(), tissue.tau_c(), t);
    Ok(AttenuationResult::new(beta, t, Method::HahnClosedForm))
}

/// Convenience: Hahn waveform plus single-Lorentzian spectrum for a tissue.
pub fn hahn_inputs(
    tissue: &TissueModel,
    gradient: f64,
    t: f64,
) -> Result<(GradientWaveform, SpectralDensity)> {
    Ok((hahn_waveform(gradient, t)?, lorentzian_spectrum(tissue)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_space;
    use crate::spectrum::{geometry_spectrum, GeometryExpansion};
    use crate::units::PROTON_GAMMA;
    use crate::waveform::{oscillating_waveform, pgse_waveform, PgseTiming};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const D0: f64 = 1e-9;

    fn tissue() -> TissueModel {
        TissueModel::lorentzian(3.7e-6, D0, 0.1).unwrap()
    }

    #[test]
    fn zero_gradient_gives_unit_signal() {
        let t = tissue();
        let (w, s) = hahn_inputs(&t, 0.0, 0.02).unwrap();
        for engine in ["freq", "time", "hahn"] {
            let r = default_engines()
                .get(engine)
                .unwrap()
                .attenuate(&w, &s, PROTON_GAMMA)
                .unwrap();
            assert_eq!(r.beta, 0.0, "{engine}");
            assert_eq!(r.m_norm, 1.0);
        }
    }

    #[test]
    fn closed_form_matches_time_domain() {
        let t = tissue();
        let tau = t.tau_c();
        for x in log_space(1e-2, 1e2, 50) {
            let time = x * tau;
            let h = hahn_closed_form(&t, 0.05, time, PROTON_GAMMA).unwrap();
            let e = attenuation_time_exact(&hahn_waveform(0.05, time).unwrap(), &t, PROTON_GAMMA)
                .unwrap();
            assert_relative_eq!(h.beta, e.beta, max_relative = 1e-10);
        }
    }

    #[test]
    fn inverted_bracket_disagrees() {
        let t = tissue();
        let tau = t.tau_c();
        let time = 10.0 * tau;
        let good = hahn_exponent(PROTON_GAMMA, 0.05, D0, tau, time);
        let bad = hahn_exponent_inverted_bracket(PROTON_GAMMA, 0.05, D0, tau, time);
        assert!((bad / good - 1.0).abs() > 10.0);
    }

    #[test]
    fn long_and_short_time_asymptotes() {
        let t = tissue();
        let tau = t.tau_c();
        let g = 0.05;
        let pre = PROTON_GAMMA * PROTON_GAMMA * g * g * D0;
        let long = attenuation_time_exact(&hahn_waveform(g, 1e3 * tau).unwrap(), &t, PROTON_GAMMA)
            .unwrap();
        assert_relative_eq!(
            long.beta / (pre * tau * tau * 1e3 * tau),
            1.0,
            max_relative = 0.01
        );
        let ts = 1e-3 * tau;
        let short =
            attenuation_time_exact(&hahn_waveform(g, ts).unwrap(), &t, PROTON_GAMMA).unwrap();
        assert_relative_eq!(
            short.beta / (pre * ts.powi(3) / 12.0),
            1.0,
            max_relative = 0.01
        );
        let cf = hahn_closed_form(&t, g, ts, PROTON_GAMMA).unwrap();
        assert_relative_eq!(
            cf.beta / (pre * ts.powi(3) / 12.0),
            1.0,
            max_relative = 0.01
        );
    }

    #[test]
    fn freq_matches_time_on_random_pgse() {
        let t = tissue();
        let tau = t.tau_c();
        let s = lorentzian_spectrum(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let freq = FreqQuadrature::default();
        for _ in 0..100 {
            let total = tau * 10f64.powf(rng.random_range(-2.0..2.0));
            let frac: f64 = rng.random_range(0.05..0.5);
            let delta = frac * total;
            let timing =
                PgseTiming::new(delta, total - delta, rng.random_range(0.01..0.5)).unwrap();
            let w = pgse_waveform(&timing);
            let a = freq.beta(&w, &s, PROTON_GAMMA).unwrap();
            let b = TimeDomainExact.beta(&w, &s, PROTON_GAMMA).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-6);
            let sa = freq.log_sensitivity(&w, &s, PROTON_GAMMA).unwrap();
            let sb = TimeDomainExact
                .log_sensitivity(&w, &s, PROTON_GAMMA)
                .unwrap();
            assert_relative_eq!(sa, sb, max_relative = 1e-6);
        }
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let t = tissue();
        let ell = t.ell_c();
        let h = 1e-4 * ell;
        let w = pgse_waveform(&PgseTiming::new(0.004, 0.011, 0.2).unwrap());
        let hw = hahn_waveform(0.2, 0.013).unwrap();
        let osc = oscillating_waveform(0.2, 0.002, 6).unwrap();
        for engine in [
            &TimeDomainExact as &dyn AttenuationEngine,
            &HahnClosedForm,
            &FreqQuadrature::default(),
        ] {
            for wf in [&w, &hw, &osc] {
                if engine.check(wf, &lorentzian_spectrum(&t)).is_err() {
                    continue;
                }
                let b = |l: f64| {
                    engine
                        .beta(
                            wf,
                            &lorentzian_spectrum(&t.with_ell_c(l).unwrap()),
                            PROTON_GAMMA,
                        )
                        .unwrap()
                };
                // Richardson-extrapolated central difference
                let d1 = (b(ell + h) - b(ell - h)) / (2.0 * h);
                let d2 = (b(ell + 2.0 * h) - b(ell - 2.0 * h)) / (4.0 * h);
                let fd = (4.0 * d1 - d2) / 3.0;
                let an = engine
                    .log_sensitivity(wf, &lorentzian_spectrum(&t), PROTON_GAMMA)
                    .unwrap();
                assert_relative_eq!(fd * ell, an, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn multi_term_sensitivity_matches_finite_differences() {
        let g = geometry_spectrum(&GeometryExpansion::new("cylinder", 8e-6, 10), D0)
            .unwrap()
            .spectrum;
        let ell = g.restriction_length();
        let h = 1e-4 * ell;
        let w = hahn_waveform(0.1, 0.03).unwrap();
        let e = FreqQuadrature::default();
        let b = |l: f64| {
            e.beta(&w, &g.with_restriction_length(l), PROTON_GAMMA)
                .unwrap()
        };
        let d1 = (b(ell + h) - b(ell - h)) / (2.0 * h);
        let d2 = (b(ell + 2.0 * h) - b(ell - 2.0 * h)) / (4.0 * h);
        let fd = (4.0 * d1 - d2) / 3.0;
        let an = e.log_sensitivity(&w, &g, PROTON_GAMMA).unwrap();
        assert_relative_eq!(fd * ell, an, max_relative = 1e-6);
    }

    #[test]
    fn time_engine_rejects_multi_term() {
        let g = geometry_spectrum(&GeometryExpansion::new("planar", 8e-6, 10), D0)
            .unwrap()
            .spectrum;
        let w = hahn_waveform(0.1, 0.03).unwrap();
        assert!(matches!(
            TimeDomainExact.beta(&w, &g, PROTON_GAMMA),
            Err(Error::UnsupportedModel { .. })
        ));
        assert!(HahnClosedForm.beta(&w, &g, PROTON_GAMMA).is_err());
        let e = default_engines().default_for(&w, &g).unwrap();
        assert_eq!(e.name(), "freq");
        let s = lorentzian_spectrum(&tissue());
        assert_eq!(
            default_engines().default_for(&w, &s).unwrap().name(),
            "time"
        );
        let p = pgse_waveform(&PgseTiming::new(0.001, 0.01, 0.1).unwrap());
        assert_eq!(
            default_engines().default_for(&p, &s).unwrap().name(),
            "time"
        );
    }

    #[test]
    fn hahn_engine_rejects_pgse() {
        let s = lorentzian_spectrum(&tissue());
        let p = pgse_waveform(&PgseTiming::new(0.001, 0.01, 0.1).unwrap());
        assert!(HahnClosedForm.check(&p, &s).is_err());
    }

    #[test]
    fn symmetric_waveform_reversal() {
        let t = tissue();
        let w = pgse_waveform(&PgseTiming::new(0.003, 0.02, 0.1).unwrap());
        let a = attenuation_time_exact(&w, &t, PROTON_GAMMA).unwrap().beta;
        let b = attenuation_time_exact(&w.time_reversed(), &t, PROTON_GAMMA)
            .unwrap()
            .beta;
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn fourth_power_scaling_in_restricted_regime() {
        let g = 0.02;
        let t1 = tissue();
        let t2 = t1.with_ell_c(2.0 * t1.ell_c()).unwrap();
        let rate = |t: &TissueModel| {
            let time = 100.0 * t.tau_c();
            hahn_closed_form(t, g, time, PROTON_GAMMA).unwrap().beta / time
        };
        assert_relative_eq!(rate(&t2) / rate(&t1), 16.0, max_relative = 0.02);
    }

    #[test]
    fn beta_non_decreasing_in_time() {
        let t = tissue();
        let mut prev = 0.0;
        for time in log_space(1e-2 * t.tau_c(), 1e2 * t.tau_c(), 200) {
            let b = hahn_closed_form(&t, 0.1, time, PROTON_GAMMA).unwrap().beta;
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn relaxation_factor() {
        let r = AttenuationResult::new(0.3, 0.043, Method::HahnClosedForm);
        assert_eq!(apply_t2(r, f64::INFINITY, 0.043).m_norm_t2, r.m_norm);
        let x = apply_t2(r, 0.1, 0.043);
        assert_relative_eq!(
            x.m_norm_t2 / x.m_norm,
            0.650_509_094_723_316_5,
            max_relative = 1e-12
        );
        let y = apply_t2(r, 0.043, 0.043);
        assert_relative_eq!(
            y.m_norm_t2 / y.m_norm,
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert!(y.m_norm_t2 <= y.m_norm);
    }

    #[test]
    fn decay_curves_ordered_by_restriction() {
        // renormalised curves M vs (gamma^2 G^2 D0)^(1/3) t: slower decay for
        // smaller ell_c^2/ell_G^2
        let g = 0.1;
        let unit_rate = (PROTON_GAMMA * PROTON_GAMMA * g * g * D0).cbrt();
        let ratios = [0.1, 0.15, 0.25, 0.4, 1.0];
        let grid = log_space(0.1, 100.0, 60);
        let curves: Vec<Vec<f64>> = ratios
            .iter()
            .map(|r| {
                let tau = r / unit_rate;
                let t =
                    TissueModel::lorentzian((2.0 * D0 * tau).sqrt(), D0, f64::INFINITY).unwrap();
                grid.iter()
                    .map(|x| {
                        hahn_closed_form(&t, g, x / unit_rate, PROTON_GAMMA)
                            .unwrap()
                            .m_norm
                    })
                    .collect()
            })
            .collect();
        for c in &curves {
            assert!(c.windows(2).all(|w| w[1] <= w[0]));
        }
        for pair in curves.windows(2) {
            assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| a >= b));
        }
    }
}
