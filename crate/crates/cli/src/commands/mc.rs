use std::fmt::Write as _;

use anyhow::Result;
use clap::{ArgMatches, Command};
use dwi_precision::attenuation::attenuation_freq;
use dwi_precision::fisher::SequenceFamily;
use dwi_precision::mc::{histogram_of, simulate_detailed, McConfig, McGeometry};
use dwi_precision::spectrum::{geometry_spectrum, GeometryExpansion};
use dwi_precision::units::Dimension;
use dwi_precision::waveform::GradientWaveform;

use super::emit;
use crate::config::{keyed_command, Key, Kind, RunConfig, UsageError};

pub const KEYS: &[Key] = &[
    Key::new(
        "geometry",
        Kind::Choice(&["planar", "cylinder", "sphere", "free"]),
        Some("planar"),
        "Reflecting compartment",
    ),
    Key::new(
        "size",
        Kind::Quantity(Dimension::Length),
        Some("10um"),
        "Slab width or compartment diameter",
    ),
    Key::new(
        "d0",
        Kind::Quantity(Dimension::Diffusivity),
        Some("1e-5cm2/s"),
        "Free diffusivity",
    ),
    Key::new(
        "gamma",
        Kind::Real,
        Some("2.6752218744e8"),
        "Gyromagnetic ratio in rad/(s T)",
    ),
    Key::new(
        "gradient",
        Kind::Quantity(Dimension::Gradient),
        Some("0mT/m"),
        "Gradient amplitude",
    ),
    Key::new(
        "t",
        Kind::Quantity(Dimension::Time),
        Some("30ms"),
        "Echo time",
    ),
    Key::new(
        "sequence",
        Kind::Choice(&["hahn", "pgse"]),
        Some("hahn"),
        "Gradient waveform family",
    ),
    Key::new(
        "delta_fraction",
        Kind::Real,
        Some("1"),
        "Pulse duration over pulse separation for sequence = pgse",
    ),
    Key::new("n_walkers", Kind::Count, Some("10000"), "Number of walkers"),
    Key::new(
        "dt",
        Kind::Quantity(Dimension::Time),
        Some("0.01ms"),
        "Time step",
    ),
    Key::new("seed", Kind::Seed, None, "Random seed (required)"),
    Key::new(
        "order",
        Kind::Count,
        Some("50"),
        "Eigenmodes in the analytic reference spectrum",
    ),
    Key::new("bins", Kind::Count, Some("40"), "Phase histogram bins"),
    Key::new("histogram", Kind::Path, None, "Phase histogram CSV"),
    Key::new("output", Kind::Path, None, "Output CSV (stdout when unset)"),
];

pub fn command() -> Command {
    keyed_command(
        "mc",
        "Monte-Carlo random walk estimate of the echo signal with the analytic reference",
        KEYS,
    )
}

/// `gamma^2 D0 \int q(t)^2 dt` for unrestricted diffusion.
fn free_exponent(w: &GradientWaveform, d0: f64, gamma: f64) -> f64 {
    let mut q = 0.0;
    let mut acc = 0.0;
    for s in w.segments() {
        let (d, g) = (s.duration, s.amplitude);
        acc += q * q * d + q * g * d * d + g * g * d * d * d / 3.0;
        q += g * d;
    }
    gamma * gamma * d0 * acc
}

pub fn run(matches: &ArgMatches) -> Result<()> {
    let cfg = RunConfig::from_matches("mc", KEYS, matches)?;
    let seed = cfg.seed("seed")?;
    let d0 = cfg.quantity("d0")?;
    let size = cfg.quantity("size")?;
    let gamma = cfg.real("gamma")?;
    if gamma <= 0.0 {
        return Err(UsageError("key `gamma` must be positive".into()).into());
    }
    let family = match cfg.choice("sequence")? {
        "pgse" => SequenceFamily::Pgse {
            delta_fraction: cfg.real("delta_fraction")?,
        },
        _ => SequenceFamily::Hahn,
    };
    let waveform = family.waveform(cfg.quantity("gradient")?, cfg.quantity("t")?)?;
    let geometry = match cfg.choice("geometry")? {
        "free" => McGeometry::Free,
        "cylinder" => McGeometry::Cylinder { diameter: size },
        "sphere" => McGeometry::Sphere { diameter: size },
        _ => McGeometry::Planar { width: size },
    };
    let beta = match geometry {
        McGeometry::Free => free_exponent(&waveform, d0, gamma),
        g => {
            let exp = GeometryExpansion::new(g.name(), size, cfg.count("order")?);
            attenuation_freq(&waveform, &geometry_spectrum(&exp, d0)?.spectrum, gamma)?.beta
        }
    };
    let config = McConfig {
        geometry,
        d0,
        n_walkers: cfg.count("n_walkers")?,
        dt: cfg.quantity("dt")?,
        seed,
        waveform,
        gamma,
    };
    let detail = simulate_detailed(&config)?;
    let r = &detail.result;
    let m_analytic = (-beta).exp();
    let z = if r.std_error > 0.0 {
        (r.m_estimate - m_analytic) / r.std_error
    } else {
        0.0
    };

    let mut out = cfg.header();
    out.push_str(
        "M_estimate,std_error,mean_phase,phase_variance,phase_variance_std_error,msd_m2,msd_std_error_m2,n_walkers,beta_analytic,M_analytic,z_score\n",
    );
    let _ = writeln!(
        out,
        "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{beta:.12e},{m_analytic:.12e},{z:.12e}",
        r.m_estimate,
        r.std_error,
        r.mean_phase,
        r.phase_variance,
        r.phase_variance_std_error,
        r.msd,
        r.msd_std_error,
        r.n_walkers,
    );
    emit(cfg.path("output").as_deref(), out.as_bytes())?;

    if let Some(path) = cfg.path("histogram") {
        let h = histogram_of(&detail.phases, cfg.count("bins")?)?;
        let mut body = cfg.header().into_bytes();
        h.write_csv(&mut body)?;
        emit(Some(&path), &body)?;
    }
    Ok(())
}
