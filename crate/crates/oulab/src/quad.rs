//! Adaptive Simpson quadrature with geometric pre-splitting near the left
//! endpoint, where stiff exponential integrands vary fastest.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 40;

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
    err_acc: &mut f64,
) -> f64 {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        *err_acc += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    adapt(
        f,
        a,
        fa,
        m,
        fm,
        left,
        lm,
        flm,
        tol / 2.0,
        depth + 1,
        err_acc,
    ) + adapt(
        f,
        m,
        fm,
        b,
        fb,
        right,
        rm,
        frm,
        tol / 2.0,
        depth + 1,
        err_acc,
    )
}

/// Integrates `f` on `[a,b]` to relative tolerance `rel_tol`. `stiff_scale`
/// is the fastest decay time of the integrand (e.g. `1/|lambda_N|`); the
/// interval is pre-split geometrically from that scale so the adaptive pass
/// starts resolved.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    stiff_scale: f64,
) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut knots = vec![a];
    let mut h = stiff_scale.max(1e-300).min(b - a);
    let mut x = a + h;
    while x < b {
        knots.push(x);
        h *= 2.0;
        x += h;
    }
    knots.push(b);

    // First pass at a crude tolerance to estimate the integral's magnitude.
    let crude: f64 = knots
        .windows(2)
        .map(|w| {
            let (fa, fb) = (f(w[0]), f(w[1]));
            let (s, _, _) = simpson(&f, w[0], fa, w[1], fb);
            s
        })
        .sum();
    let abs_tol = rel_tol * crude.abs().max(1e-12);

    let mut total = 0.0;
    let mut err = 0.0;
    for w in knots.windows(2) {
        let (fa, fb) = (f(w[0]), f(w[1]));
        let (whole, m, fm) = simpson(&f, w[0], fa, w[1], fb);
        let panel_tol = abs_tol * (w[1] - w[0]) / (b - a);
        total += adapt(&f, w[0], fa, w[1], fb, whole, m, fm, panel_tol, 0, &mut err);
    }
    if err > rel_tol * total.abs().max(1e-12) * 20.0 {
        return Err(Error::Numerical {
            context: "adaptive quadrature",
            achieved: err,
            target: abs_tol,
        });
    }
    Ok(total)
}
