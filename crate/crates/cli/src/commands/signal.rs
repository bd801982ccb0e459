use std::fmt::Write as _;

use anyhow::Result;
use clap::{ArgMatches, Command};
use dwi_precision::optimizer::optimal_time_for;
use dwi_precision::units::Dimension;

use super::{emit, family, grid, problem};
use crate::config::{keyed_command, Key, Kind, RunConfig, UsageError};
use crate::tissue_keys;

pub const KEYS: &[Key] = tissue_keys![
    Key::new(
        "sequence",
        Kind::Choice(&["hahn", "pgse"]),
        Some("hahn"),
        "Gradient waveform family"
    ),
    Key::new(
        "delta_fraction",
        Kind::Real,
        Some("1"),
        "Pulse duration over pulse separation for sequence = pgse"
    ),
    Key::new(
        "method",
        Kind::Choice(&["auto", "freq", "time", "hahn"]),
        Some("auto"),
        "Attenuation engine"
    ),
    Key::new(
        "gradient",
        Kind::Quantity(Dimension::Gradient),
        None,
        "Gradient amplitude; ignored when ratios is set"
    ),
    Key::new(
        "ratios",
        Kind::RealList,
        None,
        "Values of ell_c^2 / ell_G^2, one decay curve each"
    ),
    Key::new(
        "t_min",
        Kind::Quantity(Dimension::Time),
        Some("0.1ms"),
        "Shortest diffusion time"
    ),
    Key::new(
        "t_max",
        Kind::Quantity(Dimension::Time),
        Some("1000ms"),
        "Longest diffusion time"
    ),
    Key::new(
        "t_points",
        Kind::Count,
        Some("200"),
        "Number of log-spaced times"
    ),
    Key::new(
        "include_t2",
        Kind::Bool,
        Some("false"),
        "Include relaxation when locating t_opt"
    ),
    Key::new("output", Kind::Path, None, "Output CSV (stdout when unset)"),
];

pub fn command() -> Command {
    keyed_command(
        "signal",
        "Decay curves beta(t) and normalised signal with the optimal time marked",
        KEYS,
    )
}

pub fn run(matches: &ArgMatches) -> Result<()> {
    let cfg = RunConfig::from_matches("signal", KEYS, matches)?;
    let method = cfg.choice("method")?;
    let p = problem(&cfg, family(&cfg)?, Some(method))?;
    let times = grid(&cfg, "t")?;
    let include_t2 = cfg.flag("include_t2")?;
    let tissue = p.tissue();
    let (gamma, d0, ell_c) = (p.gamma(), tissue.d0(), tissue.ell_c());

    let curves: Vec<(String, f64)> = if cfg.is_set("ratios") {
        cfg.real_list("ratios")?
            .into_iter()
            .map(|r| {
                let ell_g3 = (ell_c * ell_c / r).powf(1.5);
                (format!("{r}"), 2.0 * d0 / (gamma * ell_g3))
            })
            .collect()
    } else if cfg.is_set("gradient") {
        vec![(String::from("0"), cfg.quantity("gradient")?)]
    } else {
        return Err(UsageError("`signal` needs key `gradient` or key `ratios`".into()).into());
    };

    let t_opts: Vec<Option<f64>> = curves
        .iter()
        .map(|&(_, g)| {
            if g <= 0.0 {
                return None;
            }
            match optimal_time_for(&p, g, include_t2) {
                Ok(o) => Some(o.t_opt),
                Err(e) => {
                    log::warn!("no optimal time for G = {g:e} T/m: {e}");
                    None
                }
            }
        })
        .collect();

    let mut out = cfg.header();
    for ((label, g), t_opt) in curves.iter().zip(&t_opts) {
        let _ = writeln!(
            out,
            "# curve={label} G_T_per_m={g:.12e} t_opt_s={}",
            t_opt.map_or("none".into(), |t| format!("{t:.12e}"))
        );
    }
    out.push_str("curve,t_s,x_renormalized,beta,M_norm,M_norm_T2,is_t_opt\n");
    for ((label, g), t_opt) in curves.iter().zip(&t_opts) {
        let nearest = t_opt.map(|to| {
            (0..times.len())
                .min_by(|&a, &b| {
                    let da = (times[a] / to).ln().abs();
                    let db = (times[b] / to).ln().abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0)
        });
        let scale = (gamma * gamma * g * g * d0).cbrt();
        for (k, &t) in times.iter().enumerate() {
            let (beta, _) = p.exponent(*g, t)?;
            let m = (-beta).exp();
            let m_t2 = (-beta - t / tissue.t2()).exp();
            let _ = writeln!(
                out,
                "{label},{t:.12e},{:.12e},{beta:.12e},{m:.12e},{m_t2:.12e},{}",
                scale * t,
                u8::from(nearest == Some(k))
            );
        }
    }
    emit(cfg.path("output").as_deref(), out.as_bytes())
}
