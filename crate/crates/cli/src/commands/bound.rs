use std::fmt::Write as _;

use anyhow::Result;
use clap::{Arg, ArgAction, ArgMatches, Command};
use dwi_precision::fisher::{error_lower_envelope, ultimate_bound};
use dwi_precision::numeric::minimize::brent_minimize;

use super::emit;

pub fn command() -> Command {
    Command::new("bound")
        .about("Print the ultimate per-measurement bound eps_0 and the optimal contrast M_0")
        .arg(
            Arg::new("json")
                .long("json")
                .action(ArgAction::SetTrue)
                .help("Emit a JSON object instead of text"),
        )
        .arg(
            Arg::new("check")
                .long("check")
                .action(ArgAction::SetTrue)
                .help("Also minimise the error envelope numerically and report residuals"),
        )
}

pub fn run(matches: &ArgMatches) -> Result<()> {
    let b = ultimate_bound();
    let check = matches.get_flag("check").then(|| {
        // brute force over ln M
        let m = brent_minimize(
            |u: f64| error_lower_envelope(u.exp()),
            -10.0,
            -1e-6,
            -0.8,
            1e-10,
            0.0,
        );
        let m_num = m.x.exp();
        let w = 2.0 * (b.ln_m_opt - 1.0);
        let lambert = w * w.exp() + 2.0 * (-2.0f64).exp();
        (m_num, m.value, lambert)
    });
    let mut text = String::new();
    if matches.get_flag("json") {
        let mut obj = serde_json::json!({
            "epsilon_0": b.epsilon_0,
            "M_0": b.m_opt,
            "minus_ln_M0": b.ln_m_opt,
        });
        if let Some((m_num, eps_num, lambert)) = check {
            obj["check"] = serde_json::json!({
                "M_0_numeric": m_num,
                "epsilon_0_numeric": eps_num,
                "M_0_residual": m_num - b.m_opt,
                "epsilon_0_residual": eps_num - b.epsilon_0,
                "lambert_residual": lambert,
            });
        }
        let _ = writeln!(text, "{}", serde_json::to_string_pretty(&obj)?);
    } else {
        let _ = writeln!(text, "epsilon_0    = {:.10}", b.epsilon_0);
        let _ = writeln!(text, "M_0          = {:.10}", b.m_opt);
        let _ = writeln!(text, "minus_ln_M0  = {:.10}", b.ln_m_opt);
        if let Some((m_num, eps_num, lambert)) = check {
            let _ = writeln!(
                text,
                "check: numeric M_0 = {m_num:.10} (residual {:.3e})",
                m_num - b.m_opt
            );
            let _ = writeln!(
                text,
                "check: numeric epsilon_0 = {eps_num:.10} (residual {:.3e})",
                eps_num - b.epsilon_0
            );
            let _ = writeln!(text, "check: Lambert W residual = {lambert:.3e}");
        }
    }
    emit(None, text.as_bytes())
}
