//! Displacement power spectra as sums of Lorentzians,
//!
//! ```text
//! S(w) = sum_k D0 b_k tau_k^2 / (pi (1 + w^2 tau_k^2))
//! ```
//!
//! The single-correlation-time tissue is the one-term case with `b = 1` and
//! `tau = tau_c`. Restricted compartments expand over the Neumann
//! eigenmodes of the Laplacian; each compartment shape is a
//! [`RestrictionGeometry`] looked up by name in a [`GeometryRegistry`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::numeric::special::{bessel_j1_prime_zeros, spherical_j1_prime_zeros};
use crate::units::{Geometry, TissueModel};

/// Default number of eigenmodes kept in a geometry expansion.
pub const DEFAULT_ORDER: usize = 50;

/// Relative variance deficit above which a truncated expansion is flagged.
pub const TRUNCATION_WARNING_THRESHOLD: f64 = 0.01;

/// Absolute tolerance for the eigenvalue roots.
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzTerm {
    /// Dimensionless mode weight `b_k`.
    pub weight: f64,
    /// Correlation time `tau_k`, s.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    terms: Vec<LorentzTerm>,
    d0: f64,
}

impl SpectralDensity {
    pub fn new(terms: Vec<LorentzTerm>, d0: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("terms", "spectrum needs at least one term"));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::invalid("d0", format!("must be positive, got {d0}")));
        }
        if let Some(bad) = terms
            .iter()
            .find(|t| !(t.weight > 0.0 && t.tau > 0.0 && t.weight.is_finite() && t.tau.is_finite()))
        {
            return Err(Error::invalid(
                "terms",
                format!("weights and correlation times must be positive, got {bad:?}"),
            ));
        }
        Ok(Self { terms, d0 })
    }

    /// One Lorentzian with correlation time `tau_c`.
    pub fn single(tau_c: f64, d0: f64) -> Result<Self> {
        Self::new(
            vec![LorentzTerm {
                weight: 1.0,
                tau: tau_c,
            }],
            d0,
        )
    }

    pub fn terms(&self) -> &[LorentzTerm] {
        &self.terms
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn is_single(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let w2 = omega * omega;
        self.terms
            .iter()
            .map(|t| t.weight * t.tau * t.tau / (1.0 + w2 * t.tau * t.tau))
            .sum::<f64>()
            * self.d0
            / PI
    }

    /// `dS/d ell_c` at fixed `D0`, using `tau_k ∝ ell_c^2` with fixed weights.
    pub fn d_dell_c(&self, omega: f64, ell_c: f64) -> f64 {
        let w2 = omega * omega;
        self.terms
            .iter()
            .map(|t| {
                let den = 1.0 + w2 * t.tau * t.tau;
                t.weight * t.tau * t.tau / (den * den)
            })
            .sum::<f64>()
            * 4.0
            * self.d0
            / (PI * ell_c)
    }

    /// Upper envelope of `S` for `|w| >= omega`; equal to `S` itself since
    /// every term is monotone in `|w|`.
    pub fn envelope(&self, omega: f64) -> f64 {
        self.eval(omega)
    }

    /// Displacement variance `D0 sum_k b_k tau_k`, equal to `∫ S dw`.
    pub fn variance(&self) -> f64 {
        self.d0 * self.terms.iter().map(|t| t.weight * t.tau).sum::<f64>()
    }

    pub fn zero_frequency(&self) -> f64 {
        self.eval(0.0)
    }

    /// Limit of `w^2 S(w)` as `w -> inf`.
    pub fn high_frequency_coefficient(&self) -> f64 {
        self.d0 * self.terms.iter().map(|t| t.weight).sum::<f64>() / PI
    }

    /// Root-mean-square correlation length `sqrt(2 D0 sqrt(sum b_k tau_k^2))`.
    pub fn restriction_length(&self) -> f64 {
        let ms: f64 = self.terms.iter().map(|t| t.weight * t.tau * t.tau).sum();
        (2.0 * self.d0 * ms.sqrt()).sqrt()
    }

    pub fn shortest_tau(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.tau)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn longest_tau(&self) -> f64 {
        self.terms.iter().map(|t| t.tau).fold(0.0, f64::max)
    }

    /// Copy with every correlation time multiplied by `factor`.
    pub fn scale_times(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| LorentzTerm {
                    weight: t.weight,
                    tau: t.tau * factor,
                })
                .collect(),
            d0: self.d0,
        }
    }

    /// Rescales the compartment so that the restriction length becomes
    /// `ell_c`, keeping `D0` and the mode weights.
    pub fn with_restriction_length(&self, ell_c: f64) -> Self {
        let r = ell_c / self.restriction_length();
        self.scale_times(r * r)
    }

    /// Two-column CSV dump `(omega_rad_per_s, S)`.
    pub fn write_csv<W: Write>(&self, omegas: &[f64], mut out: W) -> io::Result<()> {
        writeln!(out, "omega_rad_per_s,S")?;
        for &w in omegas {
            writeln!(out, "{w:e},{:e}", self.eval(w))?;
        }
        Ok(())
    }
}

/// Single-Lorentzian spectrum of a tissue, `D0 tau_c^2 / (pi (1 + w^2 tau_c^2))`.
pub fn lorentzian_spectrum(tissue: &TissueModel) -> SpectralDensity {
    SpectralDensity {
        terms: vec![LorentzTerm {
            weight: 1.0,
            tau: tissue.tau_c(),
        }],
        d0: tissue.d0(),
    }
}

/// One Neumann eigenmode: dimensionless eigenvalue root `alpha_k` (so that
/// `tau_k = L^2 / (D0 alpha_k^2)`) and its weight `b_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub alpha: f64,
    pub weight: f64,
}

/// A restricting compartment shape.
pub trait RestrictionGeometry: Send + Sync {
    fn name(&self) -> &'static str;

    /// Length `L` that scales the eigenvalues, from the user-facing size
    /// (width or diameter).
    fn mode_length(&self, size: f64) -> f64;

    /// First `count` modes with non-zero weight.
    fn modes(&self, count: usize) -> Result<Vec<Mode>>;

    /// Exact displacement variance along the gradient axis divided by `size^2`.
    fn variance_per_size_sq(&self) -> f64;
}

/// Slab of width `a`: `alpha_k = k pi` for odd `k`, `b_k = 8 / alpha_k^2`.
#[derive(Debug, Default)]
pub struct Planar;

impl RestrictionGeometry for Planar {
    fn name(&self) -> &'static str {
        "planar"
    }

    fn mode_length(&self, size: f64) -> f64 {
        size
    }

    fn modes(&self, count: usize) -> Result<Vec<Mode>> {
        Ok((0..count)
            .map(|i| {
                let alpha = (2 * i + 1) as f64 * PI;
                Mode {
                    alpha,
                    weight: 8.0 / (alpha * alpha),
                }
            })
            .collect())
    }

    fn variance_per_size_sq(&self) -> f64 {
        1.0 / 12.0
    }
}

/// Roots cached per geometry; recomputed only when more are requested.
#[derive(Default)]
struct RootCache {
    roots: OnceLock<Vec<f64>>,
}

impl RootCache {
    const CACHED: usize = 200;

    fn get(&self, count: usize, compute: fn(usize, f64) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        if count <= Self::CACHED {
            if let Some(r) = self.roots.get() {
                return Ok(r[..count].to_vec());
            }
            let r = compute(Self::CACHED, ROOT_TOL)?;
            let r = self.roots.get_or_init(|| r);
            return Ok(r[..count].to_vec());
        }
        compute(count, ROOT_TOL)
    }
}

/// Disk cross-section of a cylinder perpendicular to the gradient:
/// `alpha_k` are the zeros of `J1'`, `b_k = 2 / (alpha_k^2 - 1)`, `L = d/2`.
#[derive(Default)]
pub struct Cylinder {
    cache: RootCache,
}

impl RestrictionGeometry for Cylinder {
    fn name(&self) -> &'static str {
        "cylinder"
    }

    fn mode_length(&self, size: f64) -> f64 {
        0.5 * size
    }

    fn modes(&self, count: usize) -> Result<Vec<Mode>> {
        Ok(self
            .cache
            .get(count, bessel_j1_prime_zeros)?
            .into_iter()
            .map(|alpha| Mode {
                alpha,
                weight: 2.0 / (alpha * alpha - 1.0),
            })
            .collect())
    }

    fn variance_per_size_sq(&self) -> f64 {
        // R^2 / 4 with R = d / 2
        1.0 / 16.0
    }
}

/// Ball: `alpha_k` are the zeros of the spherical `j1'`,
/// `b_k = 2 / (alpha_k^2 - 2)`, `L = d/2`.
#[derive(Default)]
pub struct Sphere {
    cache: RootCache,
}

impl RestrictionGeometry for Sphere {
    fn name(&self) -> &'static str {
        "sphere"
    }

    fn mode_length(&self, size: f64) -> f64 {
        0.5 * size
    }

    fn modes(&self, count: usize) -> Result<Vec<Mode>> {
        Ok(self
            .cache
            .get(count, spherical_j1_prime_zeros)?
            .into_iter()
            .map(|alpha| Mode {
                alpha,
                weight: 2.0 / (alpha * alpha - 2.0),
            })
            .collect())
    }

    fn variance_per_size_sq(&self) -> f64 {
        // R^2 / 5 with R = d / 2
        1.0 / 20.0
    }
}

/// Name-keyed set of compartment geometries.
#[derive(Clone, Default)]
pub struct GeometryRegistry {
    entries: BTreeMap<&'static str, Arc<dyn RestrictionGeometry>>,
}

impl GeometryRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `planar`, `cylinder` and `sphere`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Planar));
        r.register(Arc::new(Cylinder::default()));
        r.register(Arc::new(Sphere::default()));
        r
    }

    pub fn register(&mut self, geometry: Arc<dyn RestrictionGeometry>) {
        self.entries.insert(geometry.name(), geometry);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RestrictionGeometry>> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownGeometry(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// Process-wide default registry; roots are computed once per geometry.
pub fn default_geometries() -> &'static GeometryRegistry {
    static REGISTRY: OnceLock<GeometryRegistry> = OnceLock::new();
    REGISTRY.get_or_init(GeometryRegistry::with_defaults)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryExpansion {
    pub geometry: String,
    /// Width (planar) or diameter (cylinder, sphere), m.
    pub size: f64,
    /// Number of retained modes.
    pub order: usize,
}

impl GeometryExpansion {
    pub fn new(geometry: impl Into<String>, size: f64, order: usize) -> Self {
        Self {
            geometry: geometry.into(),
            size,
            order,
        }
    }

    /// Expansion matching a sized tissue geometry, with the default order.
    pub fn for_geometry(geometry: &Geometry) -> Option<Self> {
        match geometry {
            Geometry::GenericLorentzian => None,
            g => Some(Self::new(g.name(), g.size()?, DEFAULT_ORDER)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpectrum {
    pub spectrum: SpectralDensity,
    /// `1 - (truncated variance) / (exact variance)`.
    pub variance_deficit: f64,
    /// Set when the deficit exceeds [`TRUNCATION_WARNING_THRESHOLD`].
    pub truncation_warning: Option<String>,
}

/// Multi-Lorentzian spectrum of a restricted compartment from the default
/// geometry registry.
pub fn geometry_spectrum(expansion: &GeometryExpansion, d0: f64) -> Result<GeometrySpectrum> {
    geometry_spectrum_with(default_geometries(), expansion, d0)
}

pub fn geometry_spectrum_with(
    registry: &GeometryRegistry,
    expansion: &GeometryExpansion,
    d0: f64,
) -> Result<GeometrySpectrum> {
    if expansion.order == 0 {
        return Err(Error::invalid("order", "expansion needs at least one mode"));
    }
    if !(expansion.size > 0.0 && expansion.size.is_finite()) {
        return Err(Error::invalid(
            "size",
            format!("must be positive, got {}", expansion.size),
        ));
    }
    let geometry = registry.get(&expansion.geometry)?;
    let length = geometry.mode_length(expansion.size);
    let terms = geometry
        .modes(expansion.order)?
        .into_iter()
        .map(|m| LorentzTerm {
            weight: m.weight,
            tau: length * length / (d0 * m.alpha * m.alpha),
        })
        .collect();
    let spectrum = SpectralDensity::new(terms, d0)?;
    let exact = geometry.variance_per_size_sq() * expansion.size * expansion.size;
    let variance_deficit = 1.0 - spectrum.variance() / exact;
    let truncation_warning = (variance_deficit.abs() > TRUNCATION_WARNING_THRESHOLD).then(|| {
        let msg = format!(
            "{} expansion with {} modes misses {:.2}% of the displacement variance",
            expansion.geometry,
            expansion.order,
            100.0 * variance_deficit
        );
        log::warn!("{msg}");
        msg
    });
    Ok(GeometrySpectrum {
        spectrum,
        variance_deficit,
        truncation_warning,
    })
}

/// Restriction length per unit size of a geometry at the default order.
pub fn ell_c_per_size(geometry: &str) -> Result<f64> {
    let g = geometry_spectrum(&GeometryExpansion::new(geometry, 1e-5, DEFAULT_ORDER), 1e-9)?;
    Ok(g.spectrum.restriction_length() / 1e-5)
}

/// Spectrum appropriate for a tissue: the geometry expansion for sized
/// slab/sphere/cylinder tissues when `use_geometry` is set, else the single
/// Lorentzian.
pub fn spectrum_for(tissue: &TissueModel, use_geometry: bool) -> Result<SpectralDensity> {
    match (
        use_geometry,
        GeometryExpansion::for_geometry(&tissue.geometry()),
    ) {
        (true, Some(exp)) => Ok(geometry_spectrum(&exp, tissue.d0())?.spectrum),
        _ => Ok(lorentzian_spectrum(tissue)),
    }
}
