//! Gamma function family (Lanczos approximation, g = 7, 9 terms).

use std::f64::consts::PI;

use crate::Scalar;

const G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn lanczos_sum(x: f64) -> f64 {
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// `sin(πx)` with exact argument reduction.
pub(crate) fn sin_pi(x: f64) -> f64 {
    let r = x % 2.0;
    let r = if r > 1.0 {
        r - 2.0
    } else if r < -1.0 {
        r + 2.0
    } else {
        r
    };
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    if r.abs() == 0.5 {
        return r.signum();
    }
    (PI * r).sin()
}

pub(crate) fn gamma_f64(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma_f64(1.0 - x));
    }
    if x > 171.7 {
        return f64::INFINITY;
    }
    if x == 1.0 || x == 2.0 {
        return 1.0;
    }
    if (2.0..40.0).contains(&x) {
        // Γ(x) = (x−1)(x−2)…(x−k) Γ(x−k), which is more accurate than the
        // power in the Lanczos form for moderate x
        let mut p = 1.0;
        let mut y = x;
        while y >= 2.0 {
            y -= 1.0;
            p *= y;
        }
        return p * gamma_f64(y);
    }
    let y = x - 1.0;
    let t = y + G + 0.5;
    // split the power to postpone overflow near the top of the range
    let p = t.powf(0.5 * (y + 0.5));
    (2.0 * PI).sqrt() * p * (p * (-t).exp()) * lanczos_sum(y)
}

/// `ln |Γ(x)|`.
pub(crate) fn ln_gamma_f64(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return (PI / sin_pi(x).abs()).ln() - ln_gamma_f64(1.0 - x);
    }
    if x < 15.0 {
        return gamma_f64(x).abs().ln();
    }
    let y = x - 1.0;
    let t = y + G + 0.5;
    LN_SQRT_2PI + (y + 0.5) * t.ln() - t + lanczos_sum(y).ln()
}

/// `1/Γ(x)`, zero at the poles.
pub(crate) fn rgamma_f64(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x > 171.0 {
        return (-ln_gamma_f64(x)).exp();
    }
    if x < -170.0 {
        // reflection: 1/Γ(x) = sin(πx) Γ(1−x) / π
        let s = sin_pi(x);
        return s.signum() * (ln_gamma_f64(1.0 - x) + (s.abs() / PI).ln()).exp();
    }
    1.0 / gamma_f64(x)
}

pub fn gamma<T: Scalar>(x: T) -> T {
    T::of(gamma_f64(x.to_f64_lossy()))
}

pub fn ln_gamma<T: Scalar>(x: T) -> T {
    T::of(ln_gamma_f64(x.to_f64_lossy()))
}

pub fn rgamma<T: Scalar>(x: T) -> T {
    T::of(rgamma_f64(x.to_f64_lossy()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_and_half_integers() {
        let mut f = 1.0;
        for n in 1..=25 {
            assert!((gamma_f64(n as f64) - f).abs() <= 4e-15 * f, "{n}");
            f *= n as f64;
        }
        let sqrt_pi = PI.sqrt();
        assert!((gamma_f64(0.5) - sqrt_pi).abs() < 1e-15 * sqrt_pi);
        assert!((gamma_f64(-0.5) + 2.0 * sqrt_pi).abs() < 2e-15 * sqrt_pi);
        assert!((gamma_f64(2.5) - 0.75 * sqrt_pi).abs() < 2e-15);
    }

    #[test]
    fn oracle_values() {
        // mpmath, 30 digits
        let cases = [
            (0.3, 2.991_568_987_687_590_6),
            (0.7, 1.298_055_332_647_557_9),
            (1.6, 0.893_515_349_287_690_3),
            (-0.3, -4.326_851_108_825_192),
            (-1.4, 2.659_271_872_880_030_9),
            (33.3, 7.487_577_596_522_632_3e35),
        ];
        for (x, want) in cases {
            let got = gamma_f64(x);
            assert!(
                ((got - want) / want).abs() < 2e-14,
                "Γ({x}) = {got} vs {want}"
            );
        }
        assert!((ln_gamma_f64(200.5) - 860.582_203_509_782_5).abs() < 1e-11);
        assert!((ln_gamma_f64(30.0) - 71.257_038_967_168_01).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_gamma() {
        for k in 0..6 {
            assert_eq!(rgamma_f64(-(k as f64)), 0.0);
        }
        assert!((rgamma_f64(1.0) - 1.0).abs() < 1e-15);
        assert!(rgamma_f64(175.0) > 0.0 && rgamma_f64(175.0) < 1e-300);
        assert_eq!(rgamma_f64(400.0), 0.0);
        let v = rgamma_f64(-150.5);
        assert!(((v + 2.232_916_573_625_751_6e263) / v).abs() < 1e-12);
        assert!((rgamma_f64(-2.5) - 1.0 / gamma_f64(-2.5)).abs() < 1e-15);
        assert!((sin_pi(7.5) + 1.0).abs() == 0.0);
        assert_eq!(sin_pi(-4.0), 0.0);
    }
}
