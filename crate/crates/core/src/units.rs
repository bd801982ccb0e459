//! Physical constants, tissue parameters and the characteristic length scales.
//!
//! Everything inside the crate is strict SI: metres, seconds, tesla and
//! rad s^-1 T^-1. Clinical units only appear through [`convert_units`] and
//! [`parse_quantity`], which the command-line front end uses at its boundary.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectrum;

/// Proton gyromagnetic ratio, rad s^-1 T^-1.
pub const PROTON_GAMMA: f64 = 2.675_221_874_4e8;

/// Restriction length per unit diameter for cylinders perpendicular to the gradient.
pub const CYLINDER_ELL_C_PER_DIAMETER: f64 = 0.37;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Gyromagnetic ratio, rad s^-1 T^-1.
    pub gamma: f64,
}

impl PhysicalConstants {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        Ok(Self { gamma })
    }

    pub fn proton() -> Self {
        Self {
            gamma: PROTON_GAMMA,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::proton()
    }
}

/// Compartment shape restricting the diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    /// Single exponential correlation, characterised by `ell_c` alone.
    GenericLorentzian,
    /// Slab of the given width (m), gradient along the normal.
    Planar { width: f64 },
    /// Cylinder of the given diameter (m), gradient perpendicular to its axis.
    CylinderPerpendicular { diameter: f64 },
    /// Sphere of the given diameter (m).
    Sphere { diameter: f64 },
}

impl Geometry {
    pub fn name(&self) -> &'static str {
        match self {
            Geometry::GenericLorentzian => "lorentzian",
            Geometry::Planar { .. } => "planar",
            Geometry::CylinderPerpendicular { .. } => "cylinder",
            Geometry::Sphere { .. } => "sphere",
        }
    }

    /// Characteristic size (width or diameter), if the geometry has one.
    pub fn size(&self) -> Option<f64> {
        match *self {
            Geometry::GenericLorentzian => None,
            Geometry::Planar { width } => Some(width),
            Geometry::CylinderPerpendicular { diameter } | Geometry::Sphere { diameter } => {
                Some(diameter)
            }
        }
    }

    /// Same shape, new characteristic size.
    pub fn with_size(&self, size: f64) -> Geometry {
        match self {
            Geometry::GenericLorentzian => Geometry::GenericLorentzian,
            Geometry::Planar { .. } => Geometry::Planar { width: size },
            Geometry::CylinderPerpendicular { .. } => {
                Geometry::CylinderPerpendicular { diameter: size }
            }
            Geometry::Sphere { .. } => Geometry::Sphere { diameter: size },
        }
    }
}

/// Tissue compartment: restriction length, free diffusivity, T2 and shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueModel {
    ell_c: f64,
    d0: f64,
    t2: f64,
    geometry: Geometry,
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("must be finite and positive, got {v}"),
        ))
    }
}

fn check_t2(t2: f64) -> Result<()> {
    // infinity is the relaxation-free regime
    if t2 > 0.0 && !t2.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid(
            "t2",
            format!("must be positive or infinite, got {t2}"),
        ))
    }
}

impl TissueModel {
    /// Generic single-Lorentzian tissue with an explicit restriction length.
    pub fn lorentzian(ell_c: f64, d0: f64, t2: f64) -> Result<Self> {
        check_positive("ell_c", ell_c)?;
        check_positive("d0", d0)?;
        check_t2(t2)?;
        Ok(Self {
            ell_c,
            d0,
            t2,
            geometry: Geometry::GenericLorentzian,
        })
    }

    /// Cylinders perpendicular to the gradient, `ell_c = 0.37 d`.
    pub fn cylinder(diameter: f64, d0: f64, t2: f64) -> Result<Self> {
        Self::from_geometry(Geometry::CylinderPerpendicular { diameter }, d0, t2)
    }

    pub fn planar(width: f64, d0: f64, t2: f64) -> Result<Self> {
        Self::from_geometry(Geometry::Planar { width }, d0, t2)
    }

    pub fn sphere(diameter: f64, d0: f64, t2: f64) -> Result<Self> {
        Self::from_geometry(Geometry::Sphere { diameter }, d0, t2)
    }

    /// Builds a tissue from a sized geometry. Cylinders use the 0.37 d rule;
    /// slabs and spheres take the rms correlation length of their eigenmode
    /// expansion.
    pub fn from_geometry(geometry: Geometry, d0: f64, t2: f64) -> Result<Self> {
        check_positive("d0", d0)?;
        check_t2(t2)?;
        let ell_c = match geometry {
            Geometry::GenericLorentzian => {
                return Err(Error::invalid(
                    "geometry",
                    "a generic Lorentzian needs an explicit ell_c",
                ))
            }
            Geometry::CylinderPerpendicular { diameter } => {
                check_positive("diameter", diameter)?;
                CYLINDER_ELL_C_PER_DIAMETER * diameter
            }
            Geometry::Planar { width } => {
                check_positive("width", width)?;
                width * spectrum::ell_c_per_size("planar")?
            }
            Geometry::Sphere { diameter } => {
                check_positive("diameter", diameter)?;
                diameter * spectrum::ell_c_per_size("sphere")?
            }
        };
        Ok(Self {
            ell_c,
            d0,
            t2,
            geometry,
        })
    }

    pub fn ell_c(&self) -> f64 {
        self.ell_c
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Correlation time from the Einstein relation `ell_c^2 = 2 D0 tau_c`.
    pub fn tau_c(&self) -> f64 {
        self.ell_c * self.ell_c / (2.0 * self.d0)
    }

    /// Restriction length recovered from a correlation time.
    pub fn ell_c_from_tau(tau_c: f64, d0: f64) -> f64 {
        (2.0 * d0 * tau_c).sqrt()
    }

    /// Copy with a new restriction length; a sized geometry is rescaled so
    /// that its size stays consistent with `ell_c`.
    pub fn with_ell_c(&self, ell_c: f64) -> Result<Self> {
        check_positive("ell_c", ell_c)?;
        let scale = ell_c / self.ell_c;
        let geometry = match self.geometry.size() {
            Some(size) => self.geometry.with_size(size * scale),
            None => self.geometry,
        };
        Ok(Self {
            ell_c,
            geometry,
            ..*self
        })
    }

    pub fn with_t2(&self, t2: f64) -> Result<Self> {
        check_t2(t2)?;
        Ok(Self { t2, ..*self })
    }

    /// Dimensionless efficiency parameter `gamma^2 G^2 D0 tau_c^3 = (ell_c / ell_G)^6 / 2`.
    pub fn efficiency(&self, gamma: f64, gradient: f64) -> f64 {
        let tau = self.tau_c();
        gamma * gamma * gradient * gradient * self.d0 * tau * tau * tau
    }

    /// Gradient amplitude that realises a given efficiency parameter.
    pub fn gradient_for_efficiency(&self, gamma: f64, efficiency: f64) -> f64 {
        let tau = self.tau_c();
        (efficiency / (gamma * gamma * self.d0 * tau * tau * tau)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthScales {
    /// Dephasing length `(2 D0 / (gamma G))^(1/3)`.
    pub ell_g: f64,
    pub ell_c: f64,
    /// Free diffusion length `sqrt(2 D0 t)`.
    pub ell_d: f64,
    /// Relaxation length `sqrt(2 D0 T2)`; infinite without relaxation.
    pub ell_t2: f64,
}

pub fn length_scales(
    constants: &PhysicalConstants,
    tissue: &TissueModel,
    gradient: f64,
    t: f64,
) -> Result<LengthScales> {
    if !(gradient > 0.0) {
        return Err(Error::Domain(format!(
            "dephasing length needs a positive gradient, got {gradient}"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!(
            "diffusion length needs a positive time, got {t}"
        )));
    }
    let two_d0 = 2.0 * tissue.d0();
    Ok(LengthScales {
        ell_g: (two_d0 / (constants.gamma * gradient)).cbrt(),
        ell_c: tissue.ell_c(),
        ell_d: (two_d0 * t).sqrt(),
        ell_t2: (two_d0 * tissue.t2()).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Gradient,
    Diffusivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Metre,
    Micrometre,
    Second,
    Millisecond,
    TeslaPerMetre,
    MilliteslaPerMetre,
    GaussPerCentimetre,
    SquareMetrePerSecond,
    SquareCentimetrePerSecond,
}

impl Unit {
    pub const ALL: [Unit; 9] = [
        Unit::Metre,
        Unit::Micrometre,
        Unit::Second,
        Unit::Millisecond,
        Unit::TeslaPerMetre,
        Unit::MilliteslaPerMetre,
        Unit::GaussPerCentimetre,
        Unit::SquareMetrePerSecond,
        Unit::SquareCentimetrePerSecond,
    ];

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::Metre | Unit::Micrometre => Dimension::Length,
            Unit::Second | Unit::Millisecond => Dimension::Time,
            Unit::TeslaPerMetre | Unit::MilliteslaPerMetre | Unit::GaussPerCentimetre => {
                Dimension::Gradient
            }
            Unit::SquareMetrePerSecond | Unit::SquareCentimetrePerSecond => Dimension::Diffusivity,
        }
    }

    /// Multiplier taking a value in this unit to SI.
    pub fn si_factor(self) -> f64 {
        match self {
            Unit::Metre | Unit::Second | Unit::TeslaPerMetre | Unit::SquareMetrePerSecond => 1.0,
            Unit::Micrometre => 1e-6,
            Unit::Millisecond | Unit::MilliteslaPerMetre => 1e-3,
            // 1 G = 1e-4 T, 1 cm = 1e-2 m
            Unit::GaussPerCentimetre => 1e-2,
            Unit::SquareCentimetrePerSecond => 1e-4,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Metre => "m",
            Unit::Micrometre => "um",
            Unit::Second => "s",
            Unit::Millisecond => "ms",
            Unit::TeslaPerMetre => "T/m",
            Unit::MilliteslaPerMetre => "mT/m",
            Unit::GaussPerCentimetre => "G/cm",
            Unit::SquareMetrePerSecond => "m2/s",
            Unit::SquareCentimetrePerSecond => "cm2/s",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s.trim() {
            "m" => Unit::Metre,
            "um" | "μm" | "µm" => Unit::Micrometre,
            "s" => Unit::Second,
            "ms" => Unit::Millisecond,
            "T/m" => Unit::TeslaPerMetre,
            "mT/m" => Unit::MilliteslaPerMetre,
            "G/cm" => Unit::GaussPerCentimetre,
            "m2/s" | "m^2/s" | "m²/s" => Unit::SquareMetrePerSecond,
            "cm2/s" | "cm^2/s" | "cm²/s" => Unit::SquareCentimetrePerSecond,
            other => {
                return Err(Error::UnknownUnit {
                    from: other.to_string(),
                    to: "?".to_string(),
                })
            }
        };
        Ok(unit)
    }
}

/// Converts `value` between two units of the same dimension.
pub fn convert_units(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::UnknownUnit {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    if from == to {
        return Ok(value);
    }
    Ok(value * from.si_factor() / to.si_factor())
}

/// Same as [`convert_units`] but with unit symbols, e.g. `"G/cm"` to `"T/m"`.
pub fn convert_units_str(value: f64, from: &str, to: &str) -> Result<f64> {
    let unknown = || Error::UnknownUnit {
        from: from.to_string(),
        to: to.to_string(),
    };
    let f: Unit = from.parse().map_err(|_| unknown())?;
    let t: Unit = to.parse().map_err(|_| unknown())?;
    convert_units(value, f, t).map_err(|_| unknown())
}

/// Parses a number with a mandatory unit suffix (`"10um"`, `"43 ms"`,
/// `"1e-5cm2/s"`) and returns it in SI. `"inf"` is accepted for times.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64> {
    let s = text.trim();
    if dimension == Dimension::Time && matches!(s, "inf" | "infinity" | "Inf") {
        return Ok(f64::INFINITY);
    }
    // longest numeric prefix; the remainder must name a unit
    let split = s
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()))
        .rev()
        .find(|&i| i > 0 && s[..i].trim().parse::<f64>().is_ok());
    let split = match split {
        Some(i) if !s[i..].trim().is_empty() => i,
        _ => {
            return Err(Error::Domain(format!(
                "`{s}` has no unit suffix (expected a {dimension:?} unit)"
            )))
        }
    };
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("cannot parse number in `{s}`")))?;
    let unit: Unit = unit.parse()?;
    if unit.dimension() != dimension {
        return Err(Error::Domain(format!(
            "`{s}` is a {:?}, expected a {dimension:?}",
            unit.dimension()
        )));
    }
    Ok(value * unit.si_factor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dephasing_length_example() {
        let c = PhysicalConstants::new(2.675e8).unwrap();
        let tissue = TissueModel::lorentzian(1e-6, 1e-9, f64::INFINITY).unwrap();
        let s = length_scales(&c, &tissue, 0.1, 0.01).unwrap();
        assert_relative_eq!(s.ell_g, 4.212_779_577_687_511e-6, max_relative = 1e-12);
        assert_relative_eq!(c.gamma * 0.1 * s.ell_g.powi(3), 2e-9, max_relative = 1e-12);
        assert!(s.ell_t2.is_infinite());
    }

    #[test]
    fn cylinder_restriction_length_and_tau() {
        let tissue = TissueModel::cylinder(10e-6, 1e-9, 0.1).unwrap();
        assert_relative_eq!(tissue.ell_c(), 3.7e-6, max_relative = 1e-14);
        assert_relative_eq!(tissue.tau_c(), 6.845e-3, max_relative = 1e-12);
    }

    #[test]
    fn non_positive_inputs_are_domain_errors() {
        let c = PhysicalConstants::proton();
        let tissue = TissueModel::lorentzian(1e-6, 1e-9, 0.1).unwrap();
        assert!(matches!(
            length_scales(&c, &tissue, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            length_scales(&c, &tissue, 0.1, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(length_scales(&c, &tissue, -1.0, 1.0).is_err());
        assert!(TissueModel::lorentzian(0.0, 1e-9, 0.1).is_err());
        assert!(TissueModel::lorentzian(1e-6, -1e-9, 0.1).is_err());
        assert!(TissueModel::lorentzian(1e-6, 1e-9, 0.0).is_err());
        assert!(PhysicalConstants::new(0.0).is_err());
    }

    #[test]
    fn diffusion_length_vanishes_at_short_times() {
        let c = PhysicalConstants::proton();
        let tissue = TissueModel::lorentzian(1e-6, 1e-9, f64::INFINITY).unwrap();
        let s = length_scales(&c, &tissue, 0.1, 1e-30).unwrap();
        assert!(s.ell_d < 1e-19);
    }

    #[test]
    fn unit_examples() {
        assert_relative_eq!(
            convert_units(
                1e-5,
                Unit::SquareCentimetrePerSecond,
                Unit::SquareMetrePerSecond
            )
            .unwrap(),
            1e-9,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            convert_units(100.0, Unit::GaussPerCentimetre, Unit::TeslaPerMetre).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            convert_units(10.0, Unit::Micrometre, Unit::Metre).unwrap(),
            1e-5,
            max_relative = 1e-15
        );
        assert_relative_eq!(convert_units_str(40.0, "mT/m", "T/m").unwrap(), 0.04);
        assert!(convert_units(1.0, Unit::Metre, Unit::Second).is_err());
        assert!(convert_units_str(1.0, "furlong", "m").is_err());
    }

    #[test]
    fn quantity_parsing() {
        assert_relative_eq!(parse_quantity("10um", Dimension::Length).unwrap(), 1e-5);
        assert_relative_eq!(parse_quantity("43 ms", Dimension::Time).unwrap(), 0.043);
        assert_relative_eq!(
            parse_quantity("1e-5cm2/s", Dimension::Diffusivity).unwrap(),
            1e-9,
            max_relative = 1e-15
        );
        assert_relative_eq!(parse_quantity("100G/cm", Dimension::Gradient).unwrap(), 1.0);
        assert_relative_eq!(
            parse_quantity("2.5e2mT/m", Dimension::Gradient).unwrap(),
            0.25
        );
        assert!(parse_quantity("inf", Dimension::Time)
            .unwrap()
            .is_infinite());
        assert!(parse_quantity("10", Dimension::Length).is_err());
        assert!(parse_quantity("10ms", Dimension::Length).is_err());
        assert!(parse_quantity("1e-3", Dimension::Time).is_err());
    }

    proptest! {
        #[test]
        fn scale_relations_hold(d0 in 1e-11f64..1e-7, g in 1e-4f64..10.0, t in 1e-5f64..10.0,
                                gamma in 1e7f64..1e9) {
            let c = PhysicalConstants::new(gamma).unwrap();
            let tissue = TissueModel::lorentzian(1e-6, d0, 0.1).unwrap();
            let s = length_scales(&c, &tissue, g, t).unwrap();
            prop_assert!((s.ell_g.powi(3) * gamma * g / (2.0 * d0) - 1.0).abs() < 1e-12);
            prop_assert!((s.ell_d * s.ell_d / t / (2.0 * d0) - 1.0).abs() < 1e-12);
            prop_assert!(s.ell_g > 0.0 && s.ell_d > 0.0 && s.ell_t2 > 0.0);
        }

        #[test]
        fn tau_round_trip(ell in 1e-8f64..1e-4, d0 in 1e-11f64..1e-7) {
            let tissue = TissueModel::lorentzian(ell, d0, f64::INFINITY).unwrap();
            let back = TissueModel::ell_c_from_tau(tissue.tau_c(), d0);
            prop_assert!((back / ell - 1.0).abs() < 1e-12);
        }

        #[test]
        fn conversions_round_trip(v in -1e6f64..1e6, i in 0usize..9, j in 0usize..9) {
            let (a, b) = (Unit::ALL[i], Unit::ALL[j]);
            if a.dimension() == b.dimension() {
                let back = convert_units(convert_units(v, a, b).unwrap(), b, a).unwrap();
                prop_assert!((back - v).abs() <= 1e-12 * v.abs());
            } else {
                prop_assert!(convert_units(v, a, b).is_err());
            }
        }

        #[test]
        fn ell_g_decreases_with_gradient(g in 1e-3f64..1.0, k in 1.01f64..10.0) {
            let c = PhysicalConstants::proton();
            let tissue = TissueModel::lorentzian(1e-6, 1e-9, 0.1).unwrap();
            let a = length_scales(&c, &tissue, g, 0.01).unwrap();
            let b = length_scales(&c, &tissue, g * k, 0.01 * k).unwrap();
            prop_assert!(b.ell_g < a.ell_g);
            prop_assert!(b.ell_d > a.ell_d);
        }
    }
}
