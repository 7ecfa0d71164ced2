//! Bracketed scalar root finding.

/// Illinois variant of regula falsi on `[lo, hi]`, where `f(lo)` and `f(hi)`
/// have opposite signs (or one is zero). Falls back to bisection when the
/// secant step stalls. Returns the best abscissa found.
pub fn illinois<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo.signum() != fhi.signum(), "root not bracketed");
    let mut side = 0i8;
    for iter in 0..200 {
        let mut x = if iter % 8 == 7 {
            0.5 * (lo + hi)
        } else {
            (lo * fhi - hi * flo) / (fhi - flo)
        };
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 || (hi - lo) < tol {
            return x;
        }
        if fx.signum() == fhi.signum() {
            hi = x;
            fhi = fx;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        } else {
            lo = x;
            flo = fx;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        }
        if fx.abs() < 1e-16 {
            return x;
        }
    }
    0.5 * (lo + hi)
}
