use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use dwi_precision::attenuation::default_engines;
use dwi_precision::fisher::{PrecisionProblem, SequenceFamily};
use dwi_precision::numeric::log_space;
use dwi_precision::spectrum::{geometry_spectrum, lorentzian_spectrum, GeometryExpansion};
use dwi_precision::units::TissueModel;

use crate::config::{RunConfig, UsageError};

pub mod bound;
pub mod map;
pub mod mc;
pub mod optimize;
pub mod signal;

/// Key table of a subcommand: the shared tissue keys followed by `$extra`.
#[macro_export]
macro_rules! tissue_keys {
    ($($extra:expr),* $(,)?) => {
        &[
            Key::new("geometry", Kind::Choice(&["cylinder", "planar", "sphere", "lorentzian"]),
                Some("cylinder"), "Restriction geometry"),
            Key::new("size", Kind::Quantity(Dimension::Length), Some("10um"),
                "Compartment diameter (cylinder, sphere) or slab width (planar)"),
            Key::new("ell_c", Kind::Quantity(Dimension::Length), None,
                "Restriction length, required for geometry = lorentzian"),
            Key::new("d0", Kind::Quantity(Dimension::Diffusivity), Some("1e-5cm2/s"),
                "Free diffusivity"),
            Key::new("t2", Kind::Quantity(Dimension::Time), Some("inf"),
                "Transverse relaxation time"),
            Key::new("gamma", Kind::Real, Some("2.6752218744e8"),
                "Gyromagnetic ratio in rad/(s T)"),
            Key::new("spectrum", Kind::Choice(&["lorentzian", "expansion"]), Some("lorentzian"),
                "Single-Lorentzian spectrum or the eigenmode expansion of the geometry"),
            Key::new("order", Kind::Count, Some("50"), "Number of eigenmodes for spectrum = expansion"),
            $($extra),*
        ]
    };
}

pub fn tissue(cfg: &RunConfig) -> Result<TissueModel> {
    let d0 = cfg.quantity("d0")?;
    let t2 = cfg.quantity("t2")?;
    let t = match cfg.choice("geometry")? {
        "lorentzian" => TissueModel::lorentzian(cfg.quantity("ell_c")?, d0, t2)?,
        "planar" => TissueModel::planar(cfg.quantity("size")?, d0, t2)?,
        "sphere" => TissueModel::sphere(cfg.quantity("size")?, d0, t2)?,
        _ => TissueModel::cylinder(cfg.quantity("size")?, d0, t2)?,
    };
    Ok(t)
}

pub fn gamma(cfg: &RunConfig) -> Result<f64> {
    let g = cfg.real("gamma")?;
    if g <= 0.0 {
        return Err(UsageError(format!(
            "invalid value `{g}` for key `gamma`: must be positive"
        ))
        .into());
    }
    Ok(g)
}

pub fn family(cfg: &RunConfig) -> Result<SequenceFamily> {
    Ok(match cfg.choice("sequence")? {
        "pgse" => SequenceFamily::Pgse {
            delta_fraction: cfg.real("delta_fraction")?,
        },
        _ => SequenceFamily::Hahn,
    })
}

/// Tissue, spectrum and engine selected by the shared keys.
pub fn problem(
    cfg: &RunConfig,
    family: SequenceFamily,
    method: Option<&str>,
) -> Result<PrecisionProblem> {
    let tissue = tissue(cfg)?;
    let d0 = tissue.d0();
    let spectrum = match cfg.choice("spectrum")? {
        "expansion" => {
            let geometry = tissue.geometry();
            let size = geometry.size().ok_or_else(|| {
                UsageError(
                    "spectrum = expansion needs a planar, cylinder or sphere geometry".into(),
                )
            })?;
            let order = cfg.count("order")?;
            let gs = geometry_spectrum(&GeometryExpansion::new(geometry.name(), size, order), d0)?;
            if let Some(w) = &gs.truncation_warning {
                log::warn!("{w}");
            }
            gs.spectrum
        }
        _ => lorentzian_spectrum(&tissue),
    };
    let mut p = PrecisionProblem::new(tissue, family, gamma(cfg)?).with_spectrum(spectrum);
    if let Some(name) = method.filter(|m| *m != "auto") {
        p = p.with_engine(Arc::clone(&default_engines().get(name)?));
    }
    Ok(p)
}

/// Log-spaced grid from `<prefix>_min`, `<prefix>_max`, `<prefix>_points`.
pub fn grid(cfg: &RunConfig, prefix: &str) -> Result<Vec<f64>> {
    let lo = cfg.quantity(&format!("{prefix}_min"))?;
    let hi = cfg.quantity(&format!("{prefix}_max"))?;
    let n = cfg.count(&format!("{prefix}_points"))?;
    if n == 0 {
        return Err(UsageError(format!("key `{prefix}_points` must be at least 1")).into());
    }
    if !(hi >= lo) || !hi.is_finite() {
        return Err(UsageError(format!(
            "`{prefix}_max` must be finite and not below `{prefix}_min`"
        ))
        .into());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if hi == lo {
        return Err(UsageError(format!(
            "`{prefix}_min` equals `{prefix}_max` with {n} points"
        ))
        .into());
    }
    Ok(log_space(lo, hi, n))
}

/// Writes `body` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, body: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(body).and_then(|()| out.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}
