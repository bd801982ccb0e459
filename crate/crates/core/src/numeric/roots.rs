//! Bracketed scalar root finding (Brent-Dekker).

use crate::error::{Error, Result};

/// Root of `f` in `[a, b]`, which must bracket a sign change.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootFinding(format!(
            "[{a}, {b}] does not bracket a root (f = {fa:e}, {fb:e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::RootFinding(format!("no convergence near {b}")))
}

/// First `count` roots of `f` on `(start, inf)`, found by scanning with step
/// `step` for sign changes and polishing each bracket.
pub fn scan_roots<F: Fn(f64) -> f64>(
    f: F,
    start: f64,
    step: f64,
    count: usize,
    xtol: f64,
) -> Result<Vec<f64>> {
    let mut roots = Vec::with_capacity(count);
    let mut x0 = start;
    let mut f0 = f(x0);
    let max_steps = 1_000_000;
    for _ in 0..max_steps {
        if roots.len() == count {
            return Ok(roots);
        }
        let x1 = x0 + step;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0.signum() != f1.signum() && f1 != 0.0 {
            roots.push(brent_root(&f, x0, x1, xtol)?);
        }
        x0 = x1;
        f0 = f1;
    }
    Err(Error::RootFinding(format!(
        "found only {} of {count} roots",
        roots.len()
    )))
}
