//! Real gamma function and its reciprocal.
//!
//! Lanczos approximation (g = 607/128, 15 terms) with the reflection
//! formula for arguments below 1/2.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_COEFFS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_747,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_8e-4,
    -0.983_744_753_048_795_6e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_64e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// sin(pi x) with exact zeros at the integers.
pub(crate) fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    // r in [-1, 1]
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    if r.abs() <= 0.25 {
        (PI * r).sin()
    } else if r > 0.0 && r <= 0.75 {
        (PI * (0.5 - r)).cos()
    } else if r > 0.75 {
        (PI * (1.0 - r)).sin()
    } else if r >= -0.75 {
        -(PI * (0.5 + r)).cos()
    } else {
        -(PI * (1.0 + r)).sin()
    }
}

fn lanczos_sum(x: f64) -> f64 {
    let mut acc = LANCZOS_COEFFS[0];
    for (k, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    acc
}

/// ln Γ(x) for x ≥ 1/2.
fn ln_gamma_right(x: f64) -> f64 {
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (xm + 0.5) * t.ln() - t + lanczos_sum(xm).ln()
}

fn gamma_right(x: f64) -> f64 {
    if x == x.floor() && x <= 171.0 {
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return acc;
    }
    if x < 20.0 {
        // shift down to [1/2, 3/2) using the recurrence, keeps Lanczos exact-ish
        let mut y = x;
        let mut scale = 1.0;
        while y >= 1.5 {
            y -= 1.0;
            scale *= y;
        }
        let xm = y - 1.0;
        let t = xm + LANCZOS_G + 0.5;
        let core = (2.0 * PI).sqrt() * t.powf(xm + 0.5) * (-t).exp() * lanczos_sum(xm);
        return scale * core;
    }
    ln_gamma_right(x).exp()
}

/// Γ(x) for real x. Poles return ±∞ (NaN at negative integers).
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.5 {
        if x > 171.7 {
            return f64::INFINITY;
        }
        gamma_right(x)
    } else {
        if x == x.floor() {
            return f64::NAN;
        }
        PI / (sin_pi(x) * gamma_right(1.0 - x))
    }
}

/// 1/Γ(x), exactly zero at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.5 {
        if x > 171.0 {
            return (-ln_gamma_right(x)).exp();
        }
        1.0 / gamma_right(x)
    } else {
        if x == x.floor() {
            return 0.0;
        }
        let g = if 1.0 - x > 171.0 {
            // |1/Γ(x)| = |sin(πx)| Γ(1-x)/π overflows only for absurd x
            return sin_pi(x) * ln_gamma_right(1.0 - x).exp() / PI;
        } else {
            gamma_right(1.0 - x)
        };
        sin_pi(x) * g / PI
    }
}

/// ln|Γ(x)|.
pub fn ln_gamma_abs(x: f64) -> f64 {
    if x >= 0.5 {
        ln_gamma_right(x)
    } else {
        (PI / sin_pi(x).abs()).ln() - ln_gamma_right(1.0 - x)
    }
}
