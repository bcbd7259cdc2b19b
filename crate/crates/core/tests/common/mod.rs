#![allow(dead_code)]

use num_complex::Complex64 as C64;

/// Classical RK4 for `u'' + 2αu' + λu = g(t)`; returns `(u, u')` at `t_end`.
pub fn rk4_oscillator(alpha: f64, lambda: f64, u0: f64, v0: f64, g: impl Fn(f64) -> f64, t_end: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let h = t_end / steps as f64;
    let rhs = |t: f64, u: f64, v: f64| (v, g(t) - 2.0 * alpha * v - lambda * u);
    let (mut u, mut v) = (u0, v0);
    let mut out = vec![(0.0, u, v)];
    for i in 0..steps {
        let t = i as f64 * h;
        let (a1, b1) = rhs(t, u, v);
        let (a2, b2) = rhs(t + h / 2.0, u + h / 2.0 * a1, v + h / 2.0 * b1);
        let (a3, b3) = rhs(t + h / 2.0, u + h / 2.0 * a2, v + h / 2.0 * b2);
        let (a4, b4) = rhs(t + h, u + h * a3, v + h * b3);
        u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        out.push(((i + 1) as f64 * h, u, v));
    }
    out
}

/// Piecewise-linear interpolation of an RK4 path.
pub fn interp(path: &[(f64, f64, f64)], t: f64) -> f64 {
    let h = path[1].0 - path[0].0;
    let i = ((t / h).floor() as usize).min(path.len() - 2);
    let w = (t - path[i].0) / h;
    path[i].1 * (1.0 - w) + path[i + 1].1 * w
}

pub fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn rel_linf(got: &[C64], want: &[C64], skip: usize) -> f64 {
    let num = got.iter().zip(want).skip(skip).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let den = want.iter().skip(skip).map(|b| b.norm()).fold(0.0, f64::max);
    num / den
}
