//! Bracketed scalar root finding (Brent's method).

use super::NumericsError;

const MAX_ITERATIONS: usize = 200;

/// Root of `f` in `[lo, hi]`; the final bracket is no wider than `tol`.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    find_root_fallible(|x| Ok::<f64, NumericsError>(f(x)), lo, hi, tol)
}

/// As [`find_root`] for functions whose evaluation may fail.
pub fn find_root_fallible<F, E>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<NumericsError>,
{
    if !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(NumericsError::InvalidConfig(format!("bad root bracket [{lo}, {hi}] or tol {tol}")).into());
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(NumericsError::BracketFailure { lo, hi, f_lo: fa, f_hi: fb }.into());
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITERATIONS {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.25 * tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sqrt_two() {
        let r = find_root(|x| x * x - 2.0, 1.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn identity_root() {
        let r = find_root(|x| x, -1.0, 1.0, 1e-14).unwrap();
        assert!(r.abs() < 1e-13);
    }

    #[test]
    fn no_sign_change() {
        let err = find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, NumericsError::BracketFailure { .. }));
    }

    proptest! {
        #[test]
        fn cubic_roots(r in -5.0..5.0f64, w in 0.1..3.0f64) {
            let f = |x: f64| (x - r) * (1.0 + (x - r).powi(2));
            let root = find_root(f, r - w, r + 2.0 * w, 1e-12).unwrap();
            prop_assert!((root - r).abs() < 1e-11);
        }
    }
}
