//! Monte-Carlo random walks with phase accrual in a one-axis gradient.
//!
//! Walkers start uniformly inside the compartment, take Gaussian steps of
//! variance `2 D0 dt` per axis and reflect specularly off the walls. The
//! phase integrates `gamma G(t) x(t)` with the midpoint of every step.
//! Each walker draws from its own ChaCha stream `(seed, walker index)`, and
//! ensemble sums use a fixed pairwise tree, so results are bitwise
//! independent of the thread count.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::waveform::GradientWaveform;

/// Largest allowed step length as a fraction of the compartment size.
pub const MAX_STEP_FRACTION: f64 = 1.0 / 50.0;

/// Smallest ensemble accepted by [`McConfig::validate`].
pub const MIN_WALKERS: usize = 1000;

/// Reflections resolved per step; a step needing more stops at the wall.
const MAX_REFLECTIONS: usize = 10;

/// Fraction of capped steps above which the time step is declared too large.
const MAX_CAPPED_FRACTION: f64 = 1e-5;

/// Compartment walls; the gradient points along `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McGeometry {
    /// Unbounded diffusion along `x`.
    Free,
    /// Slab `|x| <= width/2`.
    Planar {
        width: f64,
    },
    /// Disk of the given diameter in the `(x, y)` plane.
    Cylinder {
        diameter: f64,
    },
    Sphere {
        diameter: f64,
    },
}

impl McGeometry {
    pub fn name(&self) -> &'static str {
        match self {
            McGeometry::Free => "free",
            McGeometry::Planar { .. } => "planar",
            McGeometry::Cylinder { .. } => "cylinder",
            McGeometry::Sphere { .. } => "sphere",
        }
    }

    pub fn size(&self) -> Option<f64> {
        match *self {
            McGeometry::Free => None,
            McGeometry::Planar { width } => Some(width),
            McGeometry::Cylinder { diameter } | McGeometry::Sphere { diameter } => Some(diameter),
        }
    }

    fn dims(&self) -> usize {
        match self {
            McGeometry::Free | McGeometry::Planar { .. } => 1,
            McGeometry::Cylinder { .. } => 2,
            McGeometry::Sphere { .. } => 3,
        }
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        match *self {
            McGeometry::Free => [0.0; 3],
            McGeometry::Planar { width } => [width * (rng.random::<f64>() - 0.5), 0.0, 0.0],
            McGeometry::Cylinder { diameter } | McGeometry::Sphere { diameter } => {
                let r = 0.5 * diameter;
                let dims = self.dims();
                loop {
                    let mut p = [0.0; 3];
                    for c in p.iter_mut().take(dims) {
                        *c = r * (2.0 * rng.random::<f64>() - 1.0);
                    }
                    if norm2(&p) <= r * r {
                        return p;
                    }
                }
            }
        }
    }

    /// Moves `p` by `d`, reflecting off the walls. Returns `true` when the
    /// reflection cap was reached and the walker was left on the wall.
    fn advance(&self, p: &mut [f64; 3], mut d: [f64; 3]) -> bool {
        match *self {
            McGeometry::Free => {
                p[0] += d[0];
                false
            }
            McGeometry::Planar { width } => {
                let h = 0.5 * width;
                let mut x = p[0] + d[0];
                for _ in 0..MAX_REFLECTIONS {
                    if x > h {
                        x = 2.0 * h - x;
                    } else if x < -h {
                        x = -2.0 * h - x;
                    } else {
                        p[0] = x;
                        return false;
                    }
                }
                p[0] = x.clamp(-h, h);
                true
            }
            McGeometry::Cylinder { diameter } | McGeometry::Sphere { diameter } => {
                let r = 0.5 * diameter;
                if self.dims() == 2 {
                    d[2] = 0.0;
                }
                for _ in 0..MAX_REFLECTIONS {
                    let q = add(p, &d);
                    if norm2(&q) <= r * r {
                        *p = q;
                        return false;
                    }
                    // farthest root of |p + s d| = r
                    let dd = norm2(&d);
                    let pd = dot(p, &d);
                    let c = norm2(p) - r * r;
                    let disc = (pd * pd - dd * c).max(0.0);
                    let s = ((-pd + disc.sqrt()) / dd).clamp(0.0, 1.0);
                    let mut hit = add(p, &scale(&d, s));
                    let n = scale(&hit, 1.0 / norm2(&hit).sqrt());
                    hit = scale(&n, r * (1.0 - 1e-14));
                    let rest = scale(&d, 1.0 - s);
                    let rn = dot(&rest, &n);
                    d = add(&rest, &scale(&n, -2.0 * rn));
                    *p = hit;
                }
                true
            }
        }
    }

    /// Fraction of the compartment at coordinate `u in [0, 1)`, used for
    /// uniformity binning: `x` for the slab, `(r/R)^2` for the disk,
    /// `(r/R)^3` for the ball.
    fn uniform_coordinate(&self, p: &[f64; 3]) -> Option<f64> {
        match *self {
            McGeometry::Free => None,
            McGeometry::Planar { width } => Some(p[0] / width + 0.5),
            McGeometry::Cylinder { diameter } => Some(norm2(p) / (0.25 * diameter * diameter)),
            McGeometry::Sphere { diameter } => Some((norm2(p).sqrt() / (0.5 * diameter)).powi(3)),
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm2(a: &[f64; 3]) -> f64 {
    dot(a, a)
}

fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub geometry: McGeometry,
    pub d0: f64,
    pub n_walkers: usize,
    /// Upper bound on the time step; segments are split into equal steps
    /// no longer than this.
    pub dt: f64,
    pub seed: u64,
    pub waveform: GradientWaveform,
    pub gamma: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(Error::McConfig(format!(
                "d0 must be positive, got {}",
                self.d0
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::McConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.n_walkers < MIN_WALKERS {
            return Err(Error::McConfig(format!(
                "need at least {MIN_WALKERS} walkers, got {}",
                self.n_walkers
            )));
        }
        if let Some(size) = self.geometry.size() {
            if !(size > 0.0 && size.is_finite()) {
                return Err(Error::McConfig(format!(
                    "compartment size must be positive, got {size}"
                )));
            }
            let step = self.step_length();
            if step > MAX_STEP_FRACTION * size {
                return Err(Error::McConfig(format!(
                    "step length {step:e} m exceeds size/50 = {:e} m; reduce dt below {:e} s",
                    MAX_STEP_FRACTION * size,
                    (MAX_STEP_FRACTION * size).powi(2) / (2.0 * self.d0)
                )));
            }
        }
        Ok(())
    }

    /// `sqrt(2 D0 dt)`.
    pub fn step_length(&self) -> f64 {
        (2.0 * self.d0 * self.dt).sqrt()
    }

    /// `(steps, step duration, amplitude)` for each waveform segment.
    fn schedule(&self) -> Vec<(usize, f64, f64)> {
        self.waveform
            .segments()
            .iter()
            .map(|s| {
                let n = (s.duration / self.dt).ceil().max(1.0) as usize;
                (n, s.duration / n as f64, s.amplitude)
            })
            .collect()
    }

    pub fn total_steps(&self) -> usize {
        self.schedule().iter().map(|s| s.0).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    /// `<cos phi>`.
    pub m_estimate: f64,
    pub std_error: f64,
    pub mean_phase: f64,
    /// `<phi^2>`.
    pub phase_variance: f64,
    /// Standard error of `<phi^2>`.
    pub phase_variance_std_error: f64,
    /// `<(x(t) - x(0))^2>` along the gradient axis.
    pub msd: f64,
    pub msd_std_error: f64,
    pub n_walkers: usize,
}

impl McResult {
    /// Standard deviation of the phase across walkers.
    pub fn phase_std(&self) -> f64 {
        (self.phase_variance - self.mean_phase * self.mean_phase)
            .max(0.0)
            .sqrt()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "M_estimate,std_error,mean_phase,phase_variance,phase_variance_std_error,msd_m2,msd_std_error_m2,n_walkers"
        )?;
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.m_estimate,
            self.std_error,
            self.mean_phase,
            self.phase_variance,
            self.phase_variance_std_error,
            self.msd,
            self.msd_std_error,
            self.n_walkers
        )
    }
}

struct Walker {
    capped: usize,
    phase: f64,
    start: [f64; 3],
    end: [f64; 3],
}

fn walk(config: &McConfig, schedule: &[(usize, f64, f64)], index: usize) -> Walker {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let geometry = &config.geometry;
    let dims = geometry.dims();
    let start = geometry.sample_uniform(&mut rng);
    let mut p = start;
    let mut phase = 0.0;
    let mut capped = 0;
    for &(steps, h, g) in schedule {
        let sigma = (2.0 * config.d0 * h).sqrt();
        let k = config.gamma * g * h;
        for _ in 0..steps {
            let mut d = [0.0; 3];
            for c in d.iter_mut().take(dims) {
                *c = sigma * rng.sample::<f64, _>(StandardNormal);
            }
            let x0 = p[0];
            capped += usize::from(geometry.advance(&mut p, d));
            phase += k * 0.5 * (x0 + p[0]);
        }
    }
    Walker {
        capped,
        phase,
        start,
        end: p,
    }
}

fn run(config: &McConfig) -> Result<Vec<Walker>> {
    config.validate()?;
    let schedule = config.schedule();
    let walkers: Vec<Walker> = (0..config.n_walkers)
        .into_par_iter()
        .map(|i| walk(config, &schedule, i))
        .collect();
    let capped: usize = walkers.iter().map(|w| w.capped).sum();
    let steps = config.total_steps() as f64 * config.n_walkers as f64;
    if capped as f64 > MAX_CAPPED_FRACTION * steps {
        return Err(Error::McConfig(format!(
            "{capped} steps needed more than {MAX_REFLECTIONS} reflections; reduce dt"
        )));
    }
    Ok(walkers)
}

fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(walkers: &[Walker]) -> McResult {
    let cos: Vec<f64> = walkers.iter().map(|w| w.phase.cos()).collect();
    let phase: Vec<f64> = walkers.iter().map(|w| w.phase).collect();
    let phase2: Vec<f64> = walkers.iter().map(|w| w.phase * w.phase).collect();
    let disp2: Vec<f64> = walkers
        .iter()
        .map(|w| (w.end[0] - w.start[0]).powi(2))
        .collect();
    let (m, se) = mean_and_error(&cos);
    let (mean_phase, _) = mean_and_error(&phase);
    let (pv, pv_se) = mean_and_error(&phase2);
    let (msd, msd_se) = mean_and_error(&disp2);
    McResult {
        m_estimate: m,
        std_error: se,
        mean_phase,
        phase_variance: pv,
        phase_variance_std_error: pv_se,
        msd,
        msd_std_error: msd_se,
        n_walkers: walkers.len(),
    }
}

/// Ensemble statistics of the echo.
pub fn simulate(config: &McConfig) -> Result<McResult> {
    Ok(summarize(&run(config)?))
}

/// Ensemble statistics plus per-walker phases and final positions.
#[derive(Debug, Clone)]
pub struct McDetailed {
    pub result: McResult,
    pub phases: Vec<f64>,
    pub final_positions: Vec<[f64; 3]>,
}

pub fn simulate_detailed(config: &McConfig) -> Result<McDetailed> {
    let walkers = run(config)?;
    Ok(McDetailed {
        result: summarize(&walkers),
        phases: walkers.iter().map(|w| w.phase).collect(),
        final_positions: walkers.iter().map(|w| w.end).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformityTest {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of the positions against the uniform
/// distribution over the compartment, on `bins` equal-volume bins.
pub fn uniformity_test(
    geometry: &McGeometry,
    positions: &[[f64; 3]],
    bins: usize,
) -> Result<UniformityTest> {
    if bins < 2 {
        return Err(Error::invalid("bins", "need at least two bins"));
    }
    let mut counts = vec![0usize; bins];
    for p in positions {
        let u = geometry
            .uniform_coordinate(p)
            .ok_or_else(|| Error::McConfig("free diffusion has no equilibrium density".into()))?;
        let k = ((u * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let expected = positions.len() as f64 / bins as f64;
    let chi_square: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::McConfig(e.to_string()))?;
    Ok(UniformityTest {
        chi_square,
        dof,
        p_value: dist.sf(chi_square),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistogram {
    pub centers: Vec<f64>,
    /// Probability mass per bin; sums to 1.
    pub mass: Vec<f64>,
    /// Zero for a point mass.
    pub bin_width: f64,
    pub excess_kurtosis: f64,
    /// `sqrt(24 / n)`, the large-sample standard error of the excess kurtosis.
    pub kurtosis_std_error: f64,
    /// `|excess kurtosis| < 0.1`.
    pub gaussian: bool,
}

impl PhaseHistogram {
    /// Mass divided by bin width.
    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.bin_width).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# excess_kurtosis={:.6e} kurtosis_std_error={:.6e} gaussian={}",
            self.excess_kurtosis, self.kurtosis_std_error, self.gaussian
        )?;
        writeln!(out, "phase_rad,mass")?;
        for (c, m) in self.centers.iter().zip(&self.mass) {
            writeln!(out, "{c:.12e},{m:.12e}")?;
        }
        Ok(())
    }
}

pub fn phase_histogram(config: &McConfig, bins: usize) -> Result<PhaseHistogram> {
    let detail = simulate_detailed(config)?;
    histogram_of(&detail.phases, bins)
}

pub fn histogram_of(phases: &[f64], bins: usize) -> Result<PhaseHistogram> {
    if bins == 0 || phases.is_empty() {
        return Err(Error::invalid(
            "bins",
            "need at least one bin and one sample",
        ));
    }
    let n = phases.len() as f64;
    let lo = phases.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phases.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kurtosis_std_error = (24.0 / n).sqrt();
    if hi == lo {
        return Ok(PhaseHistogram {
            centers: vec![lo],
            mass: vec![1.0],
            bin_width: 0.0,
            excess_kurtosis: f64::NAN,
            kurtosis_std_error,
            gaussian: false,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &p in phases {
        let k = (((p - lo) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let mean = pairwise_sum(phases) / n;
    let m2: Vec<f64> = phases.iter().map(|p| (p - mean).powi(2)).collect();
    let m4: Vec<f64> = phases.iter().map(|p| (p - mean).powi(4)).collect();
    let var = pairwise_sum(&m2) / n;
    let excess = pairwise_sum(&m4) / n / (var * var) - 3.0;
    Ok(PhaseHistogram {
        centers: (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect(),
        mass: counts.iter().map(|&c| c as f64 / n).collect(),
        bin_width: width,
        excess_kurtosis: excess,
        kurtosis_std_error,
        gaussian: excess.abs() < 0.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::PROTON_GAMMA;
    use crate::waveform::hahn_waveform;

    const D0: f64 = 1e-9;

    fn config(geometry: McGeometry, gradient: f64, t: f64, n: usize, dt: f64) -> McConfig {
        McConfig {
            geometry,
            d0: D0,
            n_walkers: n,
            dt,
            seed: 42,
            waveform: hahn_waveform(gradient, t).unwrap(),
            gamma: PROTON_GAMMA,
        }
    }

    #[test]
    fn zero_gradient_gives_unit_echo() {
        for g in [
            McGeometry::Planar { width: 10e-6 },
            McGeometry::Cylinder { diameter: 10e-6 },
            McGeometry::Sphere { diameter: 10e-6 },
        ] {
            let r = simulate(&config(g, 0.0, 0.01, 1000, 1e-5)).unwrap();
            assert_eq!(r.m_estimate, 1.0);
            assert_eq!(r.phase_variance, 0.0);
        }
        let h = phase_histogram(
            &config(McGeometry::Planar { width: 10e-6 }, 0.0, 0.01, 1000, 1e-5),
            20,
        )
        .unwrap();
        assert_eq!(h.centers, vec![0.0]);
        assert_eq!(h.mass, vec![1.0]);
    }

    #[test]
    fn config_validation() {
        let c = config(McGeometry::Planar { width: 10e-6 }, 0.1, 0.01, 1000, 1e-3);
        assert!(matches!(c.validate(), Err(Error::McConfig(_))));
        let c = config(McGeometry::Planar { width: 10e-6 }, 0.1, 0.01, 10, 1e-5);
        assert!(matches!(c.validate(), Err(Error::McConfig(_))));
        let c = config(McGeometry::Planar { width: 10e-6 }, 0.1, 0.01, 1000, 1e-5);
        assert!(c.validate().is_ok());
        assert_eq!(c.total_steps(), 1000);
    }

    #[test]
    fn reflections_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [
            McGeometry::Planar { width: 2.0 },
            McGeometry::Cylinder { diameter: 2.0 },
            McGeometry::Sphere { diameter: 2.0 },
        ] {
            let mut p = g.sample_uniform(&mut rng);
            let mut capped = 0;
            for _ in 0..200_000 {
                let mut d = [0.0; 3];
                for c in d.iter_mut().take(g.dims()) {
                    *c = 0.04 * rng.sample::<f64, _>(StandardNormal);
                }
                capped += usize::from(g.advance(&mut p, d));
                assert!(
                    g.uniform_coordinate(&p).unwrap() <= 1.0 + 1e-12,
                    "{g:?} {p:?}"
                );
                assert!(g.uniform_coordinate(&p).unwrap() >= 0.0);
            }
            assert_eq!(capped, 0);
            // grazing incidence on a curved wall: left on the wall, inside
            if g.dims() > 1 {
                let mut q = [0.999_999_9, 0.0, 0.0];
                let c = g.advance(&mut q, [0.0, 5.0, 0.0]);
                assert!(c);
                assert!(norm2(&q) <= 1.0);
            }
        }
    }

    #[test]
    fn specular_reflection_in_disk() {
        let g = McGeometry::Cylinder { diameter: 2.0 };
        let mut p = [0.0, 0.0, 0.0];
        assert!(!g.advance(&mut p, [1.5, 0.0, 0.0]));
        assert!((p[0] - 0.5).abs() < 1e-12);
        let mut p = [0.0, 0.0, 0.0];
        assert!(!g.advance(&mut p, [0.0, 0.0, 5.0]));
        assert_eq!(p, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn seed_determinism() {
        let c = config(
            McGeometry::Cylinder { diameter: 8e-6 },
            0.05,
            0.02,
            2000,
            1e-5,
        );
        let a = simulate(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| simulate(&c).unwrap());
        assert_eq!(a, b);
        let mut other = c.clone();
        other.seed = 43;
        assert_ne!(simulate(&other).unwrap(), a);
    }

    #[test]
    fn histogram_of_gaussian_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..200_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let h = histogram_of(&v, 50).unwrap();
        assert!(h.gaussian);
        assert!(h.excess_kurtosis.abs() < 4.0 * h.kurtosis_std_error);
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let u: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>()).collect();
        let hu = histogram_of(&u, 50).unwrap();
        assert!(!hu.gaussian);
        assert!((hu.excess_kurtosis + 1.2).abs() < 0.05);
    }
}
