use anyhow::Result;
use clap::{ArgMatches, Command};
use dwi_precision::fisher::SequenceFamily;
use dwi_precision::optimizer::{precision_map_dg, precision_map_tg_for};
use dwi_precision::units::Dimension;

use super::{emit, gamma, grid, problem, tissue};
use crate::config::{keyed_command, Key, Kind, RunConfig, UsageError};
use crate::tissue_keys;

pub const KEYS: &[Key] = tissue_keys![
    Key::new(
        "kind",
        Kind::Choice(&["tg", "dg"]),
        Some("tg"),
        "tg: eps_0/eps_T2 over (t, G); dg: (eps_T2/eps_0)^2 at the optimal t over (d, G)"
    ),
    Key::new(
        "method",
        Kind::Choice(&["auto", "freq", "time", "hahn"]),
        Some("auto"),
        "Attenuation engine for kind = tg"
    ),
    Key::new(
        "g_min",
        Kind::Quantity(Dimension::Gradient),
        Some("1mT/m"),
        "Smallest gradient"
    ),
    Key::new(
        "g_max",
        Kind::Quantity(Dimension::Gradient),
        Some("10000mT/m"),
        "Largest gradient"
    ),
    Key::new(
        "g_points",
        Kind::Count,
        Some("100"),
        "Number of log-spaced gradients"
    ),
    Key::new(
        "t_min",
        Kind::Quantity(Dimension::Time),
        Some("1ms"),
        "Shortest time for kind = tg"
    ),
    Key::new(
        "t_max",
        Kind::Quantity(Dimension::Time),
        Some("1000ms"),
        "Longest time for kind = tg"
    ),
    Key::new(
        "t_points",
        Kind::Count,
        Some("100"),
        "Number of log-spaced times for kind = tg"
    ),
    Key::new(
        "d_min",
        Kind::Quantity(Dimension::Length),
        Some("1um"),
        "Smallest size for kind = dg"
    ),
    Key::new(
        "d_max",
        Kind::Quantity(Dimension::Length),
        Some("20um"),
        "Largest size for kind = dg"
    ),
    Key::new(
        "d_points",
        Kind::Count,
        Some("20"),
        "Number of log-spaced sizes for kind = dg"
    ),
    Key::new(
        "d_list",
        Kind::QuantityList(Dimension::Length),
        None,
        "Explicit sizes for kind = dg, overriding d_min, d_max and d_points"
    ),
    Key::new("output", Kind::Path, None, "Output CSV (stdout when unset)"),
    Key::new(
        "plot_script",
        Kind::Path,
        None,
        "Gnuplot script reading the output CSV"
    ),
];

pub fn command() -> Command {
    keyed_command("map", "Precision maps over (t, G) or (d, G)", KEYS)
}

pub fn run(matches: &ArgMatches) -> Result<()> {
    let cfg = RunConfig::from_matches("map", KEYS, matches)?;
    let output = cfg.path("output");
    let script = cfg.path("plot_script");
    if script.is_some() && output.is_none() {
        return Err(UsageError("key `plot_script` needs key `output`".into()).into());
    }
    let g_grid = grid(&cfg, "g")?;
    let map = match cfg.choice("kind")? {
        "dg" => {
            if cfg.choice("spectrum")? != "lorentzian" {
                log::warn!("kind = dg always uses the single-Lorentzian spectrum");
            }
            let d_grid = if cfg.is_set("d_list") {
                cfg.quantity_list("d_list")?
            } else {
                grid(&cfg, "d")?
            };
            precision_map_dg(&tissue(&cfg)?, &d_grid, &g_grid, gamma(&cfg)?)?
        }
        _ => {
            let p = problem(&cfg, SequenceFamily::Hahn, Some(cfg.choice("method")?))?;
            precision_map_tg_for(&p, &g_grid, &grid(&cfg, "t")?)?
        }
    };
    let mut body = cfg.header().into_bytes();
    map.write_csv(&mut body)?;
    emit(output.as_deref(), &body)?;
    if let (Some(script), Some(csv)) = (script, output) {
        let mut text = Vec::new();
        map.write_plot_script(&csv.to_string_lossy(), &mut text)?;
        emit(Some(&script), &text)?;
    }
    Ok(())
}
