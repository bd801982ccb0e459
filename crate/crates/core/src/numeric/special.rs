//! Lambert W (principal branch), integer-order Bessel functions and the
//! derivative zeros that define Neumann eigenvalues of disks and balls.

use std::f64::consts::{E, PI};

use super::roots::scan_roots;
use crate::error::{Error, Result};

/// Principal branch `W0(x)`, the solution of `w e^w = x` with `w >= -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch_point = -1.0 / E;
    if x.is_nan() || x < branch_point {
        return Err(Error::Domain(format!(
            "Lambert W0 is defined for x >= -1/e, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch_point {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.25 {
        // series about the branch point
        let p = (2.0 * (E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        0.5 * x.ln_1p() + 0.25 * x / (1.0 + x)
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let r = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = r / (ew * wp1 - (w + 2.0) * r / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

/// Bessel function of the first kind of integer order, from the trapezoid
/// rule on Bessel's integral (spectrally accurate for periodic integrands).
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let points = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / points as f64;
    let nf = n as f64;
    let mut sum = 0.5 * ((0.0f64).cos() + (nf * PI).cos());
    for k in 1..points {
        let th = k as f64 * h;
        sum += (nf * th - x * th.sin()).cos();
    }
    sum * h / PI
}

/// `J1'(x) = (J0(x) - J2(x)) / 2`.
pub fn bessel_j1_prime(x: f64) -> f64 {
    0.5 * (bessel_j(0, x) - bessel_j(2, x))
}

/// `x^3 j1'(x)` for the spherical Bessel function `j1`; same zeros as `j1'`
/// on `x > 0` without the singular prefactor.
pub fn spherical_j1_prime_scaled(x: f64) -> f64 {
    (x * x - 2.0) * x.sin() + 2.0 * x * x.cos()
}

/// First `count` positive zeros of `J1'`, to `xtol` absolute.
pub fn bessel_j1_prime_zeros(count: usize, xtol: f64) -> Result<Vec<f64>> {
    scan_roots(bessel_j1_prime, 0.5, 0.2, count, xtol)
}

/// First `count` positive zeros of the spherical `j1'`, to `xtol` absolute.
pub fn spherical_j1_prime_zeros(count: usize, xtol: f64) -> Result<Vec<f64>> {
    scan_roots(spherical_j1_prime_scaled, 0.5, 0.2, count, xtol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(-1.0 / E).unwrap() + 1.0).abs() < 1e-15);
        assert!(lambert_w0(-0.5).is_err());
    }

    #[test]
    fn lambert_optimal_contrast_argument() {
        let z = -2.0 * (-2.0f64).exp();
        let w = lambert_w0(z).unwrap();
        assert!((w * w.exp() - z).abs() < 1e-12);
        assert!((w - (-0.406_375_739_959_96)).abs() < 1e-13);
    }

    #[test]
    fn lambert_residuals_across_range() {
        for &x in &[
            -0.367_879, -0.3, -0.1, -1e-8, 1e-10, 0.5, 1.0, 2.9, 3.1, 10.0, 1e3, 1e10, 1e300,
        ] {
            let w = lambert_w0(x).unwrap();
            let back = w * w.exp();
            assert!(
                (back - x).abs() <= 1e-14 * x.abs().max(1.0),
                "x={x} w={w} back={back}"
            );
        }
    }

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table values
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j(1, 100.0) - (-0.077_145_352_014_112_16)).abs() < 1e-13);
    }

    #[test]
    fn derivative_zeros() {
        let z = bessel_j1_prime_zeros(3, 1e-13).unwrap();
        assert!((z[0] - 1.841_183_781_340_659).abs() < 1e-12);
        assert!((z[1] - 5.331_442_773_525_033).abs() < 1e-12);
        assert!((z[2] - 8.536_316_366_346_286).abs() < 1e-12);
        let s = spherical_j1_prime_zeros(2, 1e-13).unwrap();
        assert!((s[0] - 2.081_575_977_818_101).abs() < 1e-12);
        assert!((s[1] - 5.940_369_990_572_712).abs() < 1e-12);
    }
}
