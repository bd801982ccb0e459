//! Fisher information for the restriction length and the Cramér-Rao
//! relative error.
//!
//! For a two-outcome echo measurement with normalised contrast `M` the
//! quantum Fisher information about `ell_c` is
//!
//! ```text
//! F_Q = M^2 / (1 - M^2) * (d ln M / d ell_c)^2
//! ```
//!
//! and the relative error per measurement is `eps = 1 / (ell_c sqrt(F_Q))`.
//! Since `|ell_c d beta/d ell_c| <= 4 beta` for any spectrum built from
//! Lorentzians, `eps` never drops below `sqrt(1-M^2) / (4 (-ln M) M)`, whose
//! minimum over `M` is the ultimate bound `eps_0`.

use std::fmt;
use std::sync::Arc;

use crate::attenuation::{default_engines, AttenuationEngine};
use crate::error::{Error, Result};
use crate::numeric::special::lambert_w0;
use crate::spectrum::{spectrum_for, SpectralDensity};
use crate::units::TissueModel;
use crate::waveform::{pgse_waveform, GradientWaveform, PgseTiming};

/// Largest exponent for which `exp(-x)` is treated as a usable contrast.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltimateBound {
    /// Optimal normalised contrast `M_0`.
    pub m_opt: f64,
    /// `-ln M_0`.
    pub ln_m_opt: f64,
    pub epsilon_0: f64,
}

/// `-ln M_0 = 1 + W(-2 e^-2)/2` and `eps_0 = error_lower_envelope(M_0)`.
pub fn ultimate_bound() -> UltimateBound {
    let w = lambert_w0(-2.0 * (-2.0f64).exp()).expect("argument exceeds -1/e");
    let ln_m = 1.0 + 0.5 * w;
    let m = (-ln_m).exp();
    UltimateBound {
        m_opt: m,
        ln_m_opt: ln_m,
        epsilon_0: envelope_from_exponent(ln_m),
    }
}

/// `eps_0`, the smallest attainable relative error per measurement.
pub fn epsilon_0() -> f64 {
    ultimate_bound().epsilon_0
}

/// `sqrt(1 - M^2) / (4 (-ln M) M)` written in terms of `beta = -ln M`.
fn envelope_from_exponent(beta: f64) -> f64 {
    if !(beta > 0.0) || beta > MAX_EXPONENT {
        return f64::INFINITY;
    }
    (-(-2.0 * beta).exp_m1()).sqrt() * beta.exp() / (4.0 * beta)
}

/// Lower envelope of the relative error at contrast `m_norm`; infinite at
/// the endpoints.
pub fn error_lower_envelope(m_norm: f64) -> f64 {
    if !(m_norm > 0.0 && m_norm < 1.0) {
        return f64::INFINITY;
    }
    envelope_from_exponent(-m_norm.ln())
}

/// `e^(t/T2) eps_0`.
pub fn t2_bound(t: f64, t2: f64) -> f64 {
    if t2.is_infinite() {
        epsilon_0()
    } else {
        (t / t2).exp() * epsilon_0()
    }
}

/// Why a result carries an infinite error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// The signal carries ell_c information.
    Regular,
    /// `M = 1` or zero sensitivity: no diffusion contrast.
    NoContrast,
    /// The signal has decayed to numerical zero.
    FullDecay,
}

impl fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Degeneracy::Regular => "ok",
            Degeneracy::NoContrast => "no-contrast",
            Degeneracy::FullDecay => "full-decay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionResult {
    /// Fisher information about `ell_c`, m^-2, with or without relaxation
    /// according to `include_t2`.
    pub qfi: f64,
    /// `1 / (ell_c sqrt(qfi))`.
    pub epsilon: f64,
    /// Relative error with the `exp(-t/T2)` contrast loss.
    pub epsilon_t2: f64,
    /// `(epsilon / eps_0)^2`.
    pub n_equiv: f64,
    pub t: f64,
    pub gradient: f64,
    pub beta: f64,
    /// `ell_c d(beta)/d(ell_c)`.
    pub sensitivity: f64,
    pub m_norm: f64,
    pub m_norm_t2: f64,
    pub include_t2: bool,
    pub flag: Degeneracy,
}

impl PrecisionResult {
    pub fn is_finite(&self) -> bool {
        self.flag == Degeneracy::Regular && self.epsilon.is_finite()
    }

    /// Fisher information about a size `s` with `ell_c = k s`.
    pub fn qfi_for_size(&self, ell_per_size: f64) -> f64 {
        self.qfi * ell_per_size * ell_per_size
    }
}

/// Relative error and Fisher information from `beta`, the log-sensitivity
/// and the extra relaxation exponent `t/T2`.
fn precision_from(beta: f64, sensitivity: f64, relax: f64, ell_c: f64) -> (f64, f64, Degeneracy) {
    let total = beta + relax;
    if !(beta > 0.0) || sensitivity == 0.0 {
        return (0.0, f64::INFINITY, Degeneracy::NoContrast);
    }
    if total > MAX_EXPONENT {
        return (0.0, f64::INFINITY, Degeneracy::FullDecay);
    }
    let one_minus_m2 = -(-2.0 * total).exp_m1();
    let eps = one_minus_m2.sqrt() * total.exp() / sensitivity.abs();
    let qfi = 1.0 / (ell_c * eps).powi(2);
    (qfi, eps, Degeneracy::Regular)
}

/// Gradient waveform family parameterised by `(G, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceFamily {
    /// Constant gradient, sign flip at `t/2`.
    Hahn,
    /// Two pulses with `delta = r Delta`, `delta + Delta = t`, `0 < r <= 1`.
    Pgse { delta_fraction: f64 },
}

impl SequenceFamily {
    pub fn waveform(&self, gradient: f64, t: f64) -> Result<GradientWaveform> {
        match *self {
            SequenceFamily::Hahn => crate::waveform::hahn_waveform(gradient, t),
            SequenceFamily::Pgse { delta_fraction } => {
                if !(delta_fraction > 0.0 && delta_fraction <= 1.0) {
                    return Err(Error::invalid(
                        "delta_fraction",
                        format!("must lie in (0, 1], got {delta_fraction}"),
                    ));
                }
                let big = t / (1.0 + delta_fraction);
                Ok(pgse_waveform(&PgseTiming::new(
                    delta_fraction * big,
                    big,
                    gradient,
                )?))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            SequenceFamily::Hahn => "hahn".into(),
            SequenceFamily::Pgse { delta_fraction } => {
                format!("pgse(delta/Delta={delta_fraction})")
            }
        }
    }
}

/// A tissue, a sequence family and an attenuation engine: everything needed
/// to evaluate the precision at a given `(G, t)`.
#[derive(Clone)]
pub struct PrecisionProblem {
    tissue: TissueModel,
    spectrum: SpectralDensity,
    family: SequenceFamily,
    gamma: f64,
    engine: Option<Arc<dyn AttenuationEngine>>,
}

impl fmt::Debug for PrecisionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrecisionProblem")
            .field("tissue", &self.tissue)
            .field("family", &self.family)
            .field("gamma", &self.gamma)
            .field("engine", &self.engine.as_ref().map(|e| e.name()))
            .finish()
    }
}

impl PrecisionProblem {
    /// Single-Lorentzian model of `tissue` probed by `family`.
    pub fn new(tissue: TissueModel, family: SequenceFamily, gamma: f64) -> Self {
        let spectrum = crate::spectrum::lorentzian_spectrum(&tissue);
        Self {
            tissue,
            spectrum,
            family,
            gamma,
            engine: None,
        }
    }

    /// Uses the geometry eigen-expansion instead of a single Lorentzian.
    pub fn with_geometry_spectrum(mut self) -> Result<Self> {
        self.spectrum = spectrum_for(&self.tissue, true)?;
        Ok(self)
    }

    pub fn with_spectrum(mut self, spectrum: SpectralDensity) -> Self {
        self.spectrum = spectrum;
        self
    }

    pub fn with_engine(mut self, engine: Arc<dyn AttenuationEngine>) -> Self {
        self.engine = Some(engine);
        self
    }

    pub fn tissue(&self) -> &TissueModel {
        &self.tissue
    }

    pub fn spectrum(&self) -> &SpectralDensity {
        &self.spectrum
    }

    pub fn family(&self) -> SequenceFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Engine used for evaluation: the explicit one, else the registry default.
    pub fn engine(&self, waveform: &GradientWaveform) -> Result<Arc<dyn AttenuationEngine>> {
        match &self.engine {
            Some(e) => {
                e.check(waveform, &self.spectrum)?;
                Ok(e.clone())
            }
            None => default_engines().default_for(waveform, &self.spectrum),
        }
    }

    /// `(beta, ell_c d beta/d ell_c)` at `(G, t)`.
    pub fn exponent(&self, gradient: f64, t: f64) -> Result<(f64, f64)> {
        let w = self.family.waveform(gradient, t)?;
        let e = self.engine(&w)?;
        Ok((
            e.beta(&w, &self.spectrum, self.gamma)?,
            e.log_sensitivity(&w, &self.spectrum, self.gamma)?,
        ))
    }

    pub fn evaluate(&self, gradient: f64, t: f64, include_t2: bool) -> Result<PrecisionResult> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!(
                "diffusion time must be positive, got {t}"
            )));
        }
        let (beta, sensitivity) = self.exponent(gradient, t)?;
        let ell = self.spectrum.restriction_length();
        let t2 = self.tissue.t2();
        let relax = if t2.is_infinite() { 0.0 } else { t / t2 };
        let (qfi0, eps0, flag0) = precision_from(beta, sensitivity, 0.0, ell);
        let (qfi1, eps1, flag1) = precision_from(beta, sensitivity, relax, ell);
        let (qfi, epsilon, flag) = if include_t2 {
            (qfi1, eps1, flag1)
        } else {
            (qfi0, eps0, flag0)
        };
        let n_equiv = (epsilon / epsilon_0()).powi(2);
        Ok(PrecisionResult {
            qfi,
            epsilon,
            epsilon_t2: eps1,
            n_equiv,
            t,
            gradient,
            beta,
            sensitivity,
            m_norm: (-beta).exp(),
            m_norm_t2: (-beta - relax).exp(),
            include_t2,
            flag,
        })
    }

    /// Log-sensitivity by Richardson-extrapolated central differences with
    /// step `1e-4 ell_c`. Returns the estimate and the discrepancy between
    /// the two step sizes.
    pub fn sensitivity_finite_difference(&self, gradient: f64, t: f64) -> Result<(f64, f64)> {
        let w = self.family.waveform(gradient, t)?;
        let e = self.engine(&w)?;
        let ell = self.spectrum.restriction_length();
        let h = 1e-4 * ell;
        let b = |l: f64| e.beta(&w, &self.spectrum.with_restriction_length(l), self.gamma);
        let d1 = (b(ell + h)? - b(ell - h)?) / (2.0 * h);
        let d2 = (b(ell + 2.0 * h)? - b(ell - 2.0 * h)?) / (4.0 * h);
        let rich = (4.0 * d1 - d2) / 3.0;
        Ok((ell * rich, ell * (d1 - d2).abs()))
    }
}

/// Precision of a single-Lorentzian tissue probed by `family` at `(G, t)`.
pub fn qfi(
    tissue: &TissueModel,
    family: SequenceFamily,
    gradient: f64,
    t: f64,
    gamma: f64,
    include_t2: bool,
) -> Result<PrecisionResult> {
    PrecisionProblem::new(*tissue, family, gamma).evaluate(gradient, t, include_t2)
}
