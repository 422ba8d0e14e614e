use std::f64::consts::PI;

use num_complex::Complex64;

use super::gamma::{ln_gamma_f64, rgamma_f64, sin_pi};
use super::MLError;

/// `|z|` up to which the power series is tried first.
pub const SERIES_RADIUS: f64 = 5.0;
/// `z ≤ −ASYMPTOTIC_THRESHOLD` uses the asymptotic expansion (for `α ≤ 1`).
pub const ASYMPTOTIC_THRESHOLD: f64 = 50.0;
/// Vertex of the parabolic contour `s(u) = μ(1 + iu)²` when no pole bounds it.
pub const CONTOUR_MU: f64 = 4.0;
/// Trapezoidal step in the contour parameter `u`.
pub const CONTOUR_STEP: f64 = 0.08;

/// Largest ratio between the biggest series term and the sum that the series
/// regime accepts.
const SERIES_CANCELLATION: f64 = 1e3;
/// `e^{−CONTOUR_TAIL}` bounds the truncated contour tail.
const CONTOUR_TAIL: f64 = 46.0;
/// Poles of `1/(s^α − z)` are kept this far (in `u`) right of the contour.
const POLE_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Series,
    Asymptotic,
    Contour,
}

pub(crate) fn check_argument(z: f64) -> Result<(), MLError> {
    if z.is_nan() || z >= 1.0 {
        return Err(MLError::Argument(z));
    }
    Ok(())
}

pub(crate) fn preferred(a: f64, z: f64) -> Regime {
    if z.abs() <= SERIES_RADIUS || z > 0.0 {
        Regime::Series
    } else if z <= -ASYMPTOTIC_THRESHOLD && a <= 1.0 {
        Regime::Asymptotic
    } else {
        Regime::Contour
    }
}

pub(crate) fn evaluate(a: f64, b: f64, z: f64, tol: f64) -> Result<f64, MLError> {
    check_argument(z)?;
    if z == 0.0 {
        return Ok(rgamma_f64(b));
    }
    if z == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if a == 1.0 && b == 1.0 {
        return Ok(z.exp());
    }
    if a == 1.0 && b == 2.0 {
        return Ok(z.exp_m1() / z);
    }
    match preferred(a, z) {
        Regime::Contour => contour(a, b, z),
        first => in_regime(a, b, z, tol, first).or_else(|_| contour(a, b, z)),
    }
}

pub(crate) fn in_regime(a: f64, b: f64, z: f64, tol: f64, regime: Regime) -> Result<f64, MLError> {
    match regime {
        Regime::Series => series(a, b, z),
        Regime::Asymptotic => asymptotic(a, b, z, tol),
        Regime::Contour => contour(a, b, z),
    }
}

/// Neumaier compensated sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn series(a: f64, b: f64, z: f64) -> Result<f64, MLError> {
    let fail = || MLError::NotConverged {
        regime: Regime::Series,
        z,
    };
    let mut acc = Compensated::default();
    let mut zk = 1.0f64;
    let mut prev = f64::INFINITY;
    let mut biggest = 0.0f64;
    for k in 0..5000usize {
        let arg = a * k as f64 + b;
        let term = if arg > 170.0 || !zk.is_finite() {
            let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (k as f64 * z.abs().ln() - ln_gamma_f64(arg)).exp()
        } else {
            zk * rgamma_f64(arg)
        };
        acc.add(term);
        biggest = biggest.max(term.abs());
        let s = acc.value();
        if !s.is_finite() {
            return Err(fail());
        }
        // terms are log-concave in k, so once they decrease they keep decreasing
        if term.abs() < prev && term.abs() <= 1e-2 * f64::EPSILON * s.abs() {
            if biggest > SERIES_CANCELLATION * s.abs() {
                return Err(fail());
            }
            return Ok(s);
        }
        prev = term.abs();
        zk *= z;
    }
    Err(fail())
}

fn asymptotic(a: f64, b: f64, z: f64, tol: f64) -> Result<f64, MLError> {
    let fail = || MLError::NotConverged {
        regime: Regime::Asymptotic,
        z,
    };
    if z >= 0.0 || a > 1.0 {
        return Err(fail());
    }
    let lnz = z.abs().ln();
    let mut acc = Compensated::default();
    let mut prev = f64::INFINITY;
    let mut biggest = 0.0f64;
    for k in 1..400usize {
        let x = b - a * k as f64;
        let s = sin_pi(x);
        let rg_zero = x <= 0.0 && x == x.floor();
        if rg_zero {
            continue;
        }
        // −z^{−k}/Γ(x), with 1/Γ(x) = sin(πx)Γ(1−x)/π for x < 0.5; `env`
        // drops the sine so that near-zeros of 1/Γ do not fake convergence
        let (lenv, sgn, sfac) = if x < 0.5 {
            (
                -(k as f64) * lnz + ln_gamma_f64(1.0 - x) - PI.ln(),
                s.signum(),
                s.abs(),
            )
        } else {
            let r = rgamma_f64(x);
            (-(k as f64) * lnz + r.abs().ln(), r.signum(), 1.0)
        };
        let zsign = if k % 2 == 1 { -1.0 } else { 1.0 };
        let env = lenv.exp();
        if env > prev {
            // past the optimal truncation point
            break;
        }
        let term = -zsign * sgn * env * sfac;
        let sum = acc.value();
        if k > 1 && env <= tol * 1e-3 * sum.abs() {
            if biggest > SERIES_CANCELLATION * sum.abs() {
                return Err(fail());
            }
            return Ok(sum);
        }
        acc.add(term);
        biggest = biggest.max(term.abs());
        prev = env;
    }
    Err(fail())
}

/// Trapezoidal rule for `(1/2πi) ∫ e^s s^{α−β}/(s^α − z) ds` along
/// `s(u) = μ(1 + iu)²`, plus residues of the poles right of the contour.
fn contour(a: f64, b: f64, z: f64) -> Result<f64, MLError> {
    if z >= 0.0 {
        return Err(MLError::NotConverged {
            regime: Regime::Contour,
            z,
        });
    }
    let mut mu = CONTOUR_MU;
    let mut residues = 0.0;
    if a > 1.0 {
        // poles s* = r e^{±iθ}, θ = π/α, on the principal sheet
        let r = z.abs().powf(1.0 / a);
        let theta = PI / a;
        let bound = r * (0.5 * theta).cos().powi(2) / (1.0 + POLE_MARGIN).powi(2);
        mu = mu.min(bound);
        let sp = Complex64::from_polar(r, theta);
        let res = sp.powf(1.0 - b) * sp.exp() / a;
        residues = 2.0 * res.re;
    }
    let h = CONTOUR_STEP;
    let u_max = (1.0 + CONTOUR_TAIL / mu).sqrt();
    let n = (u_max / h).ceil() as usize;
    let g = |u: f64| -> f64 {
        let w = Complex64::new(1.0, u);
        let s = mu * w * w;
        let ls = s.ln();
        let f = ((a - b) * ls).exp() / ((a * ls).exp() - z);
        (s.exp() * f * w).re
    };
    let mut acc = Compensated::default();
    acc.add(0.5 * g(0.0));
    for k in 1..=n {
        acc.add(g(k as f64 * h));
    }
    let v = 2.0 * mu * h / PI * acc.value() + residues;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MLError::NotConverged {
            regime: Regime::Contour,
            z,
        })
    }
}
