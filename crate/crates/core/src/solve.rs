//! Scalar root bracketing and one-dimensional maximization.

/// Bisection on a bracket `[lo, hi]` where `g(lo) <= 0 <= g(hi)`.
///
/// Stops once `|g(mid)| <= y_tol` or the bracket is narrower than `x_tol`.
/// `g` may be fallible; the first error is returned unchanged.
pub fn bisect<G, E>(mut g: G, mut lo: f64, mut hi: f64, y_tol: f64, x_tol: f64) -> Result<f64, E>
where
    G: FnMut(f64) -> Result<f64, E>,
{
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.abs() <= y_tol || (hi - lo) <= x_tol {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Result of [`maximize`].
#[derive(Debug, Clone, Copy)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Brent's method (golden-section steps with parabolic interpolation) for
/// the maximum of `f` on `[a, b]`, to absolute tolerance `tol` in `x`.
pub fn maximize<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Maximum {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let h = |x: f64| -f(x);

    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + CGOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = h(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut iterations = 0;

    for _ in 0..500 {
        iterations += 1;
        let xm = 0.5 * (a + b);
        let tol1 = tol + f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
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
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = h(u);
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
    Maximum {
        x,
        value: -fx,
        iterations,
    }
}
