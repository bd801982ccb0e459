//! Optimal diffusion time, the admissible gradient window and precision maps.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fisher::{
    epsilon_0, ultimate_bound, Degeneracy, PrecisionProblem, PrecisionResult, SequenceFamily,
};
use crate::numeric::minimize::{bracket_downhill, brent_minimize};
use crate::numeric::roots::brent_root;
use crate::units::{Geometry, TissueModel};

/// Default strictness factor for the gradient window.
pub const DEFAULT_WINDOW_MARGIN: f64 = 3.0;

/// Relative tolerance on the optimal time.
const TIME_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientWindow {
    pub g_low: f64,
    pub g_high: f64,
    pub margin: f64,
}

impl GradientWindow {
    pub fn is_empty(&self) -> bool {
        self.g_low >= self.g_high
    }

    pub fn contains(&self, gradient: f64) -> bool {
        gradient > self.g_low && gradient < self.g_high
    }
}

/// Gradients that are strong enough to beat relaxation and weak enough to
/// stay in the restricted regime:
/// `margin sqrt(2 D0/T2) / (gamma ell_c^2) < G < 2 D0 / (margin gamma ell_c^3)`.
pub fn gradient_window(tissue: &TissueModel, gamma: f64, margin: f64) -> Result<GradientWindow> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::invalid(
            "margin",
            format!("must be finite and >= 1, got {margin}"),
        ));
    }
    let ell = tissue.ell_c();
    let d0 = tissue.d0();
    let g_low = if tissue.t2().is_infinite() {
        0.0
    } else {
        margin * (2.0 * d0 / tissue.t2()).sqrt() / (gamma * ell * ell)
    };
    let g_high = 2.0 * d0 / (gamma * ell.powi(3)) / margin;
    Ok(GradientWindow {
        g_low,
        g_high,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationOutcome {
    pub t_opt: f64,
    /// Relative error at `t_opt`, with relaxation when it was optimised with it.
    pub epsilon_at_opt: f64,
    pub n_equiv_at_opt: f64,
    /// `(-ln M_0) / (gamma^2 G^2 D0 tau_c^2)`.
    pub closed_form_t_opt: f64,
    /// `gamma^2 G^2 D0 tau_c^3`.
    pub validity: f64,
    pub g_window: GradientWindow,
    pub at_opt: PrecisionResult,
    /// The search interval `[t_lo, t_hi]`.
    pub search_range: (f64, f64),
}

impl OptimizationOutcome {
    /// The optimum sits on an end of the search interval.
    pub fn on_boundary(&self) -> bool {
        let (lo, hi) = self.search_range;
        (self.t_opt / lo - 1.0).abs() < 1e-3 || (self.t_opt / hi - 1.0).abs() < 1e-3
    }
}

/// Optimal Hahn echo time for a single-Lorentzian tissue at gradient `G`.
pub fn optimal_time(
    tissue: &TissueModel,
    gradient: f64,
    gamma: f64,
    include_t2: bool,
) -> Result<OptimizationOutcome> {
    let p = PrecisionProblem::new(*tissue, SequenceFamily::Hahn, gamma);
    optimal_time_for(&p, gradient, include_t2)
}

/// Minimises the relative error over `t` for any precision problem.
pub fn optimal_time_for(
    problem: &PrecisionProblem,
    gradient: f64,
    include_t2: bool,
) -> Result<OptimizationOutcome> {
    if !(gradient > 0.0 && gradient.is_finite()) {
        return Err(Error::invalid(
            "gradient",
            format!("must be positive, got {gradient}"),
        ));
    }
    let tissue = problem.tissue();
    let gamma = problem.gamma();
    let tau = problem.spectrum().longest_tau().max(tissue.tau_c());
    let validity = tissue.efficiency(gamma, gradient);
    let rate = gamma * gamma * gradient * gradient * tissue.d0() * tissue.tau_c().powi(2);
    let closed_form = ultimate_bound().ln_m_opt / rate;

    let lo = 1e-3 * tau;
    let mut hi = 1e3 * tau * (1.0 / validity).max(1.0);
    if include_t2 && tissue.t2().is_finite() {
        hi = hi.min(20.0 * tissue.t2());
    }
    if !(hi > lo) {
        return Err(Error::NoOptimum(format!(
            "empty search interval [{lo:e}, {hi:e}] s"
        )));
    }
    let (ulo, uhi) = (lo.ln(), hi.ln());

    let objective = |u: f64| -> f64 {
        match problem.evaluate(gradient, u.exp(), include_t2) {
            Ok(r) if r.epsilon.is_finite() => r.epsilon.ln(),
            _ => f64::MAX,
        }
    };

    let seed = if validity < 1.0 {
        closed_form
    } else {
        // where the echo has decayed to 1/e
        let excess = |u: f64| match problem.exponent(gradient, u.exp()) {
            Ok((b, _)) => b - 1.0,
            Err(_) => f64::NAN,
        };
        if excess(ulo) >= 0.0 {
            lo
        } else if excess(uhi) <= 0.0 {
            hi
        } else {
            brent_root(excess, ulo, uhi, 1e-6)?.exp()
        }
    };
    let useed = seed.clamp(lo, hi).ln();

    let (a, b, c) = bracket_downhill(&objective, useed, 0.5, ulo, uhi)?;
    if objective(b) == f64::MAX {
        problem.evaluate(gradient, b.exp(), include_t2)?;
        return Err(Error::NoOptimum(format!(
            "no diffusion contrast anywhere in t = [{lo:e}, {hi:e}] s at G = {gradient:e} T/m"
        )));
    }
    let m = brent_minimize(objective, a, c, b, 0.0, TIME_TOL);
    let t_opt = m.x.exp();
    let at_opt = problem.evaluate(gradient, t_opt, include_t2)?;
    if !at_opt.is_finite() {
        return Err(Error::NoOptimum(format!(
            "flat objective at G = {gradient:e} T/m"
        )));
    }
    Ok(OptimizationOutcome {
        t_opt,
        epsilon_at_opt: at_opt.epsilon,
        n_equiv_at_opt: at_opt.n_equiv,
        closed_form_t_opt: closed_form,
        validity,
        g_window: if tissue.t2().is_finite() {
            gradient_window(tissue, gamma, DEFAULT_WINDOW_MARGIN)?
        } else {
            GradientWindow {
                g_low: 0.0,
                g_high: 2.0 * tissue.d0()
                    / (gamma * tissue.ell_c().powi(3) * DEFAULT_WINDOW_MARGIN),
                margin: DEFAULT_WINDOW_MARGIN,
            }
        },
        at_opt,
        search_range: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementCount {
    /// `(epsilon / eps_0)^2` rounded up.
    pub n: u64,
    pub ratio: f64,
}

/// Number of repetitions needed to match the single-shot ultimate precision.
pub fn measurements_needed(epsilon: f64) -> Result<MeasurementCount> {
    let e0 = epsilon_0();
    if !(epsilon >= e0 * (1.0 - 1e-9)) {
        return Err(Error::Consistency(format!(
            "relative error {epsilon} is below the ultimate bound {e0}"
        )));
    }
    let ratio = (epsilon / e0).powi(2);
    let n = if ratio.is_finite() {
        ((ratio - 1e-9).ceil() as u64).max(1)
    } else {
        u64::MAX
    };
    Ok(MeasurementCount { n, ratio })
}

/// Cell values over a two-axis grid, stored with `axis2` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMap {
    pub axis1_name: String,
    pub axis2_name: String,
    pub value_name: String,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
    pub flags: Vec<Degeneracy>,
    /// `key=value` pairs written as comments above the CSV header.
    pub metadata: Vec<(String, String)>,
}

impl PrecisionMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    /// Values along `axis2` at `axis1[i]`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.axis2.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Values along `axis1` at `axis2[j]`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.axis1.len()).map(|i| self.get(i, j)).collect()
    }

    /// `(i, j)` of the largest finite value.
    pub fn argmax(&self) -> Option<(usize, usize)> {
        self.extremum(|a, b| a > b)
    }

    /// `(i, j)` of the smallest finite value.
    pub fn argmin(&self) -> Option<(usize, usize)> {
        self.extremum(|a, b| a < b)
    }

    fn extremum(&self, better: impl Fn(f64, f64) -> bool) -> Option<(usize, usize)> {
        let n = self.axis2.len();
        let mut best: Option<usize> = None;
        for (k, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            if best.is_none_or(|b| better(v, self.values[b])) {
                best = Some(k);
            }
        }
        best.map(|k| (k / n, k % n))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(
            out,
            "# axis1={} axis2={} value={}",
            self.axis1_name, self.axis2_name, self.value_name
        )?;
        for (i, a) in self.axis1.iter().enumerate() {
            for (j, b) in self.axis2.iter().enumerate() {
                writeln!(out, "{a:.12e},{b:.12e},{:.12e}", self.get(i, j))?;
            }
        }
        Ok(())
    }

    /// Gnuplot script rendering `csv_path` as a log-log heat map.
    pub fn write_plot_script<W: Write>(&self, csv_path: &str, mut out: W) -> io::Result<()> {
        writeln!(out, "set datafile separator ','")?;
        writeln!(out, "set datafile commentschars '#'")?;
        writeln!(out, "set logscale xy")?;
        writeln!(out, "set xlabel '{}'", self.axis1_name)?;
        writeln!(out, "set ylabel '{}'", self.axis2_name)?;
        writeln!(out, "set cblabel '{}'", self.value_name)?;
        writeln!(out, "set view map")?;
        writeln!(out, "set dgrid3d {},{}", self.axis2.len(), self.axis1.len())?;
        writeln!(out, "splot '{csv_path}' using 1:2:3 with pm3d notitle")?;
        Ok(())
    }
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid(
            name,
            "grid values must be positive and finite",
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "grid must be strictly increasing"));
    }
    Ok(())
}

/// `eps_0 / epsilon_T2` over `(t, G)` for the Hahn echo.
pub fn precision_map_tg(
    tissue: &TissueModel,
    g_grid: &[f64],
    t_grid: &[f64],
    gamma: f64,
) -> Result<PrecisionMap> {
    let p = PrecisionProblem::new(*tissue, SequenceFamily::Hahn, gamma);
    precision_map_tg_for(&p, g_grid, t_grid)
}

pub fn precision_map_tg_for(
    problem: &PrecisionProblem,
    g_grid: &[f64],
    t_grid: &[f64],
) -> Result<PrecisionMap> {
    check_grid("t_grid", t_grid)?;
    check_grid("g_grid", g_grid)?;
    let e0 = epsilon_0();
    let n = g_grid.len();
    let cells: Vec<(f64, Degeneracy)> = (0..t_grid.len() * n)
        .into_par_iter()
        .map(|k| {
            let r = problem.evaluate(g_grid[k % n], t_grid[k / n], true)?;
            Ok((e0 / r.epsilon_t2, r.flag))
        })
        .collect::<Result<_>>()?;
    let (values, flags) = cells.into_iter().unzip();
    Ok(PrecisionMap {
        axis1_name: "t_s".into(),
        axis2_name: "G_T_per_m".into(),
        value_name: "eps0_over_eps".into(),
        axis1: t_grid.to_vec(),
        axis2: g_grid.to_vec(),
        values,
        flags,
        metadata: map_metadata(problem),
    })
}

fn map_metadata(problem: &PrecisionProblem) -> Vec<(String, String)> {
    let t = problem.tissue();
    vec![
        ("geometry".into(), t.geometry().name().into()),
        ("ell_c_m".into(), format!("{:e}", t.ell_c())),
        ("d0_m2_per_s".into(), format!("{:e}", t.d0())),
        ("t2_s".into(), format!("{:e}", t.t2())),
        ("gamma_rad_per_s_T".into(), format!("{:e}", problem.gamma())),
        ("sequence".into(), problem.family().name()),
    ]
}

/// Tissue with compartment size `size`; a generic Lorentzian template is
/// read as a perpendicular cylinder.
pub fn tissue_with_size(template: &TissueModel, size: f64) -> Result<TissueModel> {
    let geometry = match template.geometry() {
        Geometry::GenericLorentzian => Geometry::CylinderPerpendicular { diameter: size },
        g => g.with_size(size),
    };
    TissueModel::from_geometry(geometry, template.d0(), template.t2())
}

/// `(epsilon_T2 / eps_0)^2` at the per-cell optimal time over `(d, G)`.
pub fn precision_map_dg(
    template: &TissueModel,
    d_grid: &[f64],
    g_grid: &[f64],
    gamma: f64,
) -> Result<PrecisionMap> {
    check_grid("d_grid", d_grid)?;
    check_grid("g_grid", g_grid)?;
    let tissues: Vec<TissueModel> = d_grid
        .iter()
        .map(|&d| tissue_with_size(template, d))
        .collect::<Result<_>>()?;
    let e0 = epsilon_0();
    let n = g_grid.len();
    let cells: Vec<(f64, Degeneracy)> = (0..d_grid.len() * n)
        .into_par_iter()
        .map(
            |k| match optimal_time(&tissues[k / n], g_grid[k % n], gamma, true) {
                Ok(o) => Ok(((o.at_opt.epsilon_t2 / e0).powi(2), o.at_opt.flag)),
                Err(Error::NoOptimum(_)) => Ok((f64::INFINITY, Degeneracy::NoContrast)),
                Err(e) => Err(e),
            },
        )
        .collect::<Result<_>>()?;
    let (values, flags) = cells.into_iter().unzip();
    let probe = PrecisionProblem::new(tissues[0], SequenceFamily::Hahn, gamma);
    let mut metadata = map_metadata(&probe);
    metadata.retain(|(k, _)| k != "ell_c_m");
    Ok(PrecisionMap {
        axis1_name: "d_m".into(),
        axis2_name: "G_T_per_m".into(),
        value_name: "eps_over_eps0_sq".into(),
        axis1: d_grid.to_vec(),
        axis2: g_grid.to_vec(),
        values,
        flags,
        metadata,
    })
}
