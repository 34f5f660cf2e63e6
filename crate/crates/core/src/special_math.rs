//! Principal-branch Lambert W and the positive root of the frequency cubic.

use crate::error::{Error, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
const MAX_ITERS: usize = 50;

/// Principal branch W0(x) for x >= -1/e, via Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("lambert_w0 of NaN".into()));
    }
    if x <= -INV_E {
        // Rounding of -1/e itself may land a hair below the true branch point.
        if x >= -INV_E * (1.0 + 4.0 * f64::EPSILON) {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("lambert_w0 argument {x} below -1/e")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x < -0.25 {
        // Close to the branch point the shifted form is exact to rounding.
        return Ok(w0_branch_offset(std::f64::consts::E * x + 1.0) - 1.0);
    }
    let mut w = if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        // Cubic convergence: once the step is this small the next is below rounding.
        if step.abs() <= 1e-6 * (1.0 + w.abs()) {
            let ew = w.exp();
            let f = w * ew - x;
            w -= f / (ew * (w + 1.0));
            break;
        }
    }
    Ok(w)
}

/// `1 + W0((y - 1)/e)` for y >= 0, accurate in relative terms as y -> 0.
///
/// Solves `1 - (1 - v) e^v = y` for v >= 0, which avoids forming the
/// cancelling argument `-1/e + y/e` near the branch point.
pub fn w0_branch_offset(y: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y > 0.5 {
        // Far from the branch point the direct evaluation loses nothing.
        return lambert_w0((y - 1.0) * INV_E).map(|w| w + 1.0).unwrap_or(0.0);
    }
    // g(v) = 1 - (1 - v) e^v, g' = v e^v, g'' = (1 + v) e^v.
    let g = |v: f64| -> f64 {
        if v.abs() < 0.1 {
            let mut term = v;
            let mut sum = 0.0;
            for k in 2..24 {
                term *= v / k as f64;
                sum += (k - 1) as f64 * term;
            }
            sum
        } else {
            1.0 - (1.0 - v) * v.exp()
        }
    };
    let p = (2.0 * y).sqrt();
    let mut v = p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    for _ in 0..MAX_ITERS {
        let ev = v.exp();
        let r = g(v) - y;
        let d1 = v * ev;
        let d2 = (1.0 + v) * ev;
        let step = 2.0 * r * d1 / (2.0 * d1 * d1 - r * d2);
        v -= step;
        if step.abs() <= 1e-6 * v.abs() {
            // Halley is cubic, so one Newton step lands at rounding level.
            let r = g(v) - y;
            v -= r / (v * v.exp());
            break;
        }
    }
    v
}

/// Coefficients of `a x^3 + b x^2 + c x + d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        ((self.a * x + self.b) * x + self.c) * x + self.d
    }

    fn deriv(&self, x: f64) -> f64 {
        (3.0 * self.a * x + 2.0 * self.b) * x + self.c
    }

    /// Largest magnitude among the four terms at `x`, used to normalise residuals.
    pub fn scale_at(&self, x: f64) -> f64 {
        (self.a * x * x * x)
            .abs()
            .max((self.b * x * x).abs())
            .max((self.c * x).abs())
            .max(self.d.abs())
    }
}

/// Positive root of the cubic, unclamped. Requires `a > 0` and `d <= 0`.
pub fn cubic_positive_root(cf: CubicCoeffs) -> Result<f64> {
    if !(cf.a > 0.0) || !(cf.d <= 0.0) {
        return Err(Error::Domain(format!(
            "cubic needs a > 0 and d <= 0, got a = {}, d = {}",
            cf.a, cf.d
        )));
    }
    if cf.d == 0.0 && cf.c >= 0.0 && cf.b >= 0.0 {
        return Ok(0.0);
    }
    // Fujiwara bound on the root magnitudes.
    let hi0 = 2.0
        * (cf.b / cf.a)
            .abs()
            .max((cf.c / cf.a).abs().sqrt())
            .max((cf.d / (2.0 * cf.a)).abs().cbrt());
    // With b, c >= 0 the root of a x^3 + d is an upper bound and far tighter.
    let hi0 = if cf.b >= 0.0 && cf.c >= 0.0 {
        (-cf.d / cf.a).cbrt()
    } else {
        hi0
    };
    let mut lo = 0.0;
    let mut hi = hi0.max(f64::MIN_POSITIVE);
    while cf.eval(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut x = hi;
    for _ in 0..200 {
        let fx = cf.eval(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = cf.deriv(x);
        let newton = x - fx / dfx;
        let next = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * next.abs() || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Positive root clamped into `[lo, hi]`.
pub fn solve_cubic_positive_root(cf: CubicCoeffs, bounds: [f64; 2]) -> Result<f64> {
    let r = cubic_positive_root(cf)?;
    Ok(r.clamp(bounds[0], bounds[1]))
}
