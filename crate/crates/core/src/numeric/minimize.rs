//! Derivative-free scalar minimisation: Brent's method on a bracket and a
//! downhill bracket search.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Brent minimisation of `f` on `[lo, hi]`, starting from the interior
/// point `start`. Stops when the bracket shrinks below `rel_tol * |x| + abs_tol`.
pub fn brent_minimize<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    start: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Minimum {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = start.clamp(a, b);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x,
        value: fx,
        evaluations,
    }
}

/// Walks downhill from `seed` with geometrically growing steps, clipped to
/// `[lo, hi]`, and returns `(a, b, c)` with `f(b) <= f(a), f(c)`.
pub fn bracket_downhill<F: Fn(f64) -> f64>(
    f: &F,
    seed: f64,
    step: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64, f64)> {
    let clamp = |x: f64| x.clamp(lo, hi);
    let mut b = clamp(seed);
    let mut fb = f(b);
    let up = clamp(b + step);
    let down = clamp(b - step);
    let (fu, fd) = (f(up), f(down));
    if fb <= fu && fb <= fd {
        return Ok((down, b, up));
    }
    let dir = if fu < fd { 1.0 } else { -1.0 };
    let mut a = if dir > 0.0 { down } else { up };
    let mut h = step;
    for _ in 0..200 {
        let c = clamp(b + dir * h);
        let fc = f(c);
        if fc >= fb {
            return Ok(if dir > 0.0 { (a, b, c) } else { (c, b, a) });
        }
        if c == b {
            // pinned at the boundary
            return Ok(if dir > 0.0 { (a, b, b) } else { (b, b, a) });
        }
        a = b;
        b = c;
        fb = fc;
        h *= 1.618_033_988_749_895;
    }
    Err(Error::NoOptimum(format!(
        "objective keeps decreasing from seed {seed}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let m = brent_minimize(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 0.0, 1e-10, 1e-12);
        assert!((m.x - 1.3).abs() < 1e-7);
        assert!((m.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_smooth() {
        let m = brent_minimize(|x: f64| (x - 0.25).abs(), 0.0, 1.0, 0.9, 1e-12, 1e-12);
        assert!((m.x - 0.25).abs() < 1e-9);
    }

    #[test]
    fn bracket_then_minimize() {
        let f = |x: f64| (x - 7.0).powi(2);
        let (a, b, c) = bracket_downhill(&f, 0.0, 0.5, -100.0, 100.0).unwrap();
        assert!(a <= b && b <= c);
        assert!(f(b) <= f(a) && f(b) <= f(c));
        let m = brent_minimize(f, a, c, b, 1e-12, 1e-12);
        assert!((m.x - 7.0).abs() < 1e-6);
    }

    #[test]
    fn bracket_pinned_at_bound() {
        let f = |x: f64| x;
        let (a, b, _) = bracket_downhill(&f, 0.0, 0.5, -3.0, 3.0).unwrap();
        assert_eq!(b, -3.0);
        assert!(a >= b);
    }
}
