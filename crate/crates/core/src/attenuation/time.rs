use super::{AttenuationEngine, Method};
use crate::error::{Error, Result};
use crate::spectrum::SpectralDensity;
use crate::waveform::GradientWaveform;

/// Exact segment-pair sum for the correlation `D0 b tau exp(-|s|/tau)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeDomainExact;

/// `y - 1 + exp(-y)`.
fn phi(y: f64) -> f64 {
    if y < 0.1 {
        let mut term = y * y / 2.0;
        let mut sum = 0.0;
        for n in 2..20 {
            sum += term;
            term *= -y / (n + 1) as f64;
        }
        sum
    } else {
        y + (-y).exp_m1()
    }
}

/// `1 - exp(-y)`.
fn one_minus_exp(y: f64) -> f64 {
    -(-y).exp_m1()
}

struct Pair {
    value: f64,
    /// `-(sum of y d/dy)` applied to the dimensionless kernel
    scaling: f64,
}

/// Dimensionless double integrals `I_ij / (D0 b tau^3)`.
fn pair_integrals(waveform: &GradientWaveform, tau: f64) -> Vec<Vec<Pair>> {
    let segs = waveform.segments();
    let starts: Vec<f64> = waveform.boundaries();
    let n = segs.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let p = segs[i].duration / tau;
            if i == j {
                let value = 2.0 * phi(p);
                let scaling = -2.0 * p * one_minus_exp(p);
                row.push(Pair { value, scaling });
            } else {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                let p = segs[a].duration / tau;
                let q = segs[b].duration / tau;
                let r = (starts[b] - (starts[a] + segs[a].duration)).max(0.0) / tau;
                let (pp, qq, er) = (one_minus_exp(p), one_minus_exp(q), (-r).exp());
                let value = pp * qq * er;
                let scaling = -(p * (-p).exp() * qq * er + q * (-q).exp() * pp * er) + r * value;
                row.push(Pair { value, scaling });
            }
        }
        out.push(row);
    }
    out
}

impl TimeDomainExact {
    fn sums(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
    ) -> Result<(f64, f64, f64)> {
        self.check(waveform, spectrum)?;
        let term = spectrum.terms()[0];
        let tau = term.tau;
        let pairs = pair_integrals(waveform, tau);
        let segs = waveform.segments();
        let mut value = 0.0;
        let mut scaling = 0.0;
        for (i, row) in pairs.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                let gg = segs[i].amplitude * segs[j].amplitude;
                value += gg * p.value;
                scaling += gg * p.scaling;
            }
        }
        let pre = spectrum.d0() * term.weight * tau.powi(3);
        Ok((pre, value, scaling))
    }
}

impl AttenuationEngine for TimeDomainExact {
    fn name(&self) -> &'static str {
        "time"
    }

    fn method(&self) -> Method {
        Method::TimeDomainExact
    }

    fn check(&self, _: &GradientWaveform, spectrum: &SpectralDensity) -> Result<()> {
        if spectrum.is_single() {
            Ok(())
        } else {
            Err(Error::UnsupportedModel {
                engine: "time",
                reason: format!(
                    "exact time-domain sum needs a single Lorentzian, got {} terms",
                    spectrum.terms().len()
                ),
            })
        }
    }

    fn beta(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        let (pre, value, _) = self.sums(waveform, spectrum)?;
        Ok((0.5 * gamma * gamma * pre * value).max(0.0))
    }

    fn log_sensitivity(
        &self,
        waveform: &GradientWaveform,
        spectrum: &SpectralDensity,
        gamma: f64,
    ) -> Result<f64> {
        // ell d/d ell = 2 tau d/d tau, and tau d/d tau [tau^3 f(L/tau)] = tau^3 (3 f - y f')
        let (pre, value, scaling) = self.sums(waveform, spectrum)?;
        Ok(gamma * gamma * pre * (3.0 * value + scaling))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_branches_agree() {
        let y: f64 = 0.1;
        let direct = y - 1.0 + (-y).exp();
        assert!((phi(0.099_999_999_999) / direct - 1.0).abs() < 1e-9);
        assert!((phi(1e-8) / 5e-17 - 1.0).abs() < 1e-7);
    }
}
