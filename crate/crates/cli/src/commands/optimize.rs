use std::fmt::Write as _;

use anyhow::Result;
use clap::{ArgMatches, Command};
use dwi_precision::fisher::epsilon_0;
use dwi_precision::optimizer::{gradient_window, optimal_time_for, OptimizationOutcome};
use dwi_precision::units::Dimension;

use super::{emit, family, problem};
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
        "Gradient amplitude (required)"
    ),
    Key::new(
        "include_t2",
        Kind::Bool,
        Some("true"),
        "Include relaxation in the objective (no effect when t2 = inf)"
    ),
    Key::new(
        "margin",
        Kind::Real,
        Some("3"),
        "Strictness factor of the gradient window"
    ),
    Key::new(
        "output",
        Kind::Path,
        None,
        "Also write the report as a one-row CSV"
    ),
];

pub fn command() -> Command {
    keyed_command(
        "optimize",
        "Optimal diffusion time, attained error and feasible gradient window",
        KEYS,
    )
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

pub fn run(matches: &ArgMatches) -> Result<()> {
    let cfg = RunConfig::from_matches("optimize", KEYS, matches)?;
    let p = problem(&cfg, family(&cfg)?, Some(cfg.choice("method")?))?;
    let g = cfg.quantity("gradient")?;
    if g <= 0.0 {
        return Err(UsageError("key `gradient` must be positive for `optimize`".into()).into());
    }
    let margin = cfg.real("margin")?;
    let include_t2 = cfg.flag("include_t2")?;
    let window = gradient_window(p.tissue(), p.gamma(), margin)
        .map_err(|e| UsageError(format!("invalid value for key `margin`: {e}")))?;

    let outcome: Option<OptimizationOutcome> = match optimal_time_for(&p, g, include_t2) {
        Ok(o) => Some(o),
        Err(e) if window.is_empty() => {
            log::warn!("optimisation failed inside an empty window: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let (status, note) = if window.is_empty() {
        ("warning", "infeasible under T2: gradient window is empty")
    } else if !window.contains(g) {
        ("warning", "gradient lies outside the window")
    } else {
        ("ok", "gradient lies inside the window")
    };

    let mut fields: Vec<(&str, String)> = vec![
        ("status", status.into()),
        ("note", note.into()),
        ("gradient_T_per_m", fmt(g)),
        ("g_low_T_per_m", fmt(window.g_low)),
        ("g_high_T_per_m", fmt(window.g_high)),
        ("margin", fmt(window.margin)),
        ("validity", fmt(p.tissue().efficiency(p.gamma(), g))),
        ("epsilon_0", fmt(epsilon_0())),
    ];
    if let Some(o) = &outcome {
        fields.extend([
            ("t_opt_s", fmt(o.t_opt)),
            ("closed_form_t_opt_s", fmt(o.closed_form_t_opt)),
            ("epsilon", fmt(o.epsilon_at_opt)),
            ("epsilon_t2", fmt(o.at_opt.epsilon_t2)),
            ("epsilon_over_eps0", fmt(o.epsilon_at_opt / epsilon_0())),
            ("n_equiv", fmt(o.n_equiv_at_opt)),
            ("m_norm", fmt(o.at_opt.m_norm)),
            ("on_search_boundary", o.on_boundary().to_string()),
            ("flag", o.at_opt.flag.to_string()),
        ]);
    }

    let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut report = String::new();
    for (k, v) in &fields {
        let _ = writeln!(report, "{k:<width$} = {v}");
    }
    emit(None, report.as_bytes())?;
    if let Some(path) = cfg.path("output") {
        let mut csv = cfg.header();
        let _ = writeln!(
            csv,
            "{}",
            fields.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            csv,
            "{}",
            fields
                .iter()
                .map(|(_, v)| v.replace(',', ";"))
                .collect::<Vec<_>>()
                .join(",")
        );
        emit(Some(&path), csv.as_bytes())?;
    }
    Ok(())
}
