//! Quadrature helpers and the standard mollifier bump.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Unnormalized bump exp(-1/(1-x²)) on (-1,1), zero outside.
fn bump_raw(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        // integrand is C^∞ with all derivatives vanishing at ±1
        adaptive_simpson(&bump_raw, -1.0, 1.0, 1e-14, 60).expect("bump normalization")
    })
}

/// Normalized smooth bump χ: even, ≥ 0, supp ⊂ [-1,1], ∫χ = 1.
pub fn bump_chi(x: f64) -> f64 {
    bump_raw(x) / bump_norm()
}

/// CDF of χ: ∫_{-1}^{y} χ(x) dx, clamped to [0,1].
pub fn bump_cdf(y: f64) -> f64 {
    if y <= -1.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        adaptive_simpson(&bump_chi, -1.0, y, 1e-12, 60).expect("bump cdf") // smooth integrand
    }
}

/// Rescaled mollifier δ_κ(x) = κ χ(κ x); unit mass, support [-1/κ, 1/κ].
pub fn delta_kappa(kappa: f64, x: f64) -> f64 {
    kappa * bump_chi(kappa * x)
}

/// Heaviside step with θ(0) = 1.
pub fn theta_step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Composite trapezoid weights for n ≥ 2 uniformly spaced nodes with step h.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2);
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Recursive adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::numeric(format!(
                "adaptive quadrature failed to converge on [{a}, {b}]: residual {delta:e}"
            )));
        }
        let l = rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
        let r = rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
        Ok(l + r)
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::numeric("adaptive quadrature needs finite limits"));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}
