//! Exact moments of the weakly singular kernels `ξ^{μ-1} E^γ_{ρ,μ}(-s ξ^ρ)`
//! and the tabulated antiderivatives used by product integration.

use num_complex::Complex64 as C64;

use super::mittag_leffler::{eval_unchecked, MlParams};
use crate::error::{Error, Result};

/// `∫₀^x ξ^{μ-1} E^γ_{ρ,μ}(-s ξ^ρ) dξ = x^μ E^γ_{ρ,μ+1}(-s x^ρ)`.
pub fn kernel_segment_integral(rho: f64, mu: f64, gamma: f64, s: C64, x: f64) -> Result<C64> {
    MlParams::new(rho, mu, gamma)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::domain(format!("segment end must be >= 0, got {x}")));
    }
    if !(s.re.is_finite() && s.im.is_finite()) {
        return Err(Error::domain("kernel rate must be finite"));
    }
    if x == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    Ok(eval_unchecked(rho, mu + 1.0, gamma, -s * x.powf(rho)) * x.powf(mu))
}

const CHEB_DEGREE: usize = 24;

/// Piecewise Chebyshev interpolant of `y ↦ E^γ_{ρ,ν}(-s y)` on `[0, y_max]`.
///
/// The map is entire in `y`, so equal panels with `|s|·width` of order one
/// resolve it to round-off; panels are refined until the trailing
/// coefficients fall below `2e-14` of the panel scale (the noise floor of the
/// pointwise evaluations).
#[derive(Debug, Clone)]
pub struct MlTable {
    y_max: f64,
    width: f64,
    panels: Vec<Vec<C64>>,
}

impl MlTable {
    pub fn new(params: MlParams, s: C64, y_max: f64) -> Result<Self> {
        params.validate()?;
        if !(y_max.is_finite() && y_max > 0.0) {
            return Err(Error::domain("table range must be positive"));
        }
        let mut n_panels = ((s.norm() * y_max).ceil() as usize).max(1);
        loop {
            let width = y_max / n_panels as f64;
            let mut panels = Vec::with_capacity(n_panels);
            let mut resolved = true;
            for p in 0..n_panels {
                let a = p as f64 * width;
                let coeffs = chebyshev_fit(a, a + width, |y| {
                    eval_unchecked(params.rho, params.mu, params.gamma, -s * y)
                });
                let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
                let tail = coeffs[CHEB_DEGREE - 2].norm().max(coeffs[CHEB_DEGREE - 1].norm());
                if !scale.is_finite() {
                    return Err(Error::domain("kernel table: non-finite Mittag-Leffler values"));
                }
                if tail > 2e-14 * scale.max(1e-300) {
                    resolved = false;
                    break;
                }
                panels.push(coeffs);
            }
            if resolved {
                return Ok(MlTable {
                    y_max,
                    width,
                    panels,
                });
            }
            if n_panels > 1 << 16 {
                return Err(Error::domain("kernel table failed to resolve"));
            }
            n_panels *= 2;
        }
    }

    #[inline]
    pub fn eval(&self, y: f64) -> C64 {
        let y = y.clamp(0.0, self.y_max);
        let idx = ((y / self.width) as usize).min(self.panels.len() - 1);
        let a = idx as f64 * self.width;
        let x = 2.0 * (y - a) / self.width - 1.0;
        clenshaw(&self.panels[idx], x)
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }
}

fn chebyshev_fit(a: f64, b: f64, f: impl Fn(f64) -> C64) -> Vec<C64> {
    let n = CHEB_DEGREE;
    let values: Vec<C64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let x = theta.cos();
            f(0.5 * (a + b) + 0.5 * (b - a) * x)
        })
        .collect();
    (0..n)
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, v) in values.iter().enumerate() {
                let theta = std::f64::consts::PI * j as f64 * (k as f64 + 0.5) / n as f64;
                acc += v * theta.cos();
            }
            let scale = if j == 0 { 1.0 } else { 2.0 } / n as f64;
            acc * scale
        })
        .collect()
}

#[inline]
fn clenshaw(coeffs: &[C64], x: f64) -> C64 {
    let mut b1 = C64::new(0.0, 0.0);
    let mut b2 = C64::new(0.0, 0.0);
    for c in coeffs.iter().skip(1).rev() {
        let b0 = c + b1 * (2.0 * x) - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + b1 * x - b2
}

/// First and second antiderivatives of a kernel `k` on `[0, ∞)`, the
/// ingredients of piecewise-linear product integration.
pub trait Antiderivatives {
    /// `(K1(x), K2(x))` with `K1 = ∫₀^x k`, `K2 = ∫₀^x K1`.
    fn k1_k2(&self, x: f64) -> (C64, C64);
}

/// One kernel term `ξ^{μ-1} E^γ_{ρ,μ}(-s ξ^ρ)` with tabulated antiderivatives
/// `K1 = x^μ E^γ_{ρ,μ+1}(-s x^ρ)` and `K2 = x^{μ+1} E^γ_{ρ,μ+2}(-s x^ρ)`.
#[derive(Debug, Clone)]
pub struct MlKernelBasis {
    pub rho: f64,
    pub mu: f64,
    pub gamma: f64,
    pub s: C64,
    first: MlTable,
    second: MlTable,
}

impl MlKernelBasis {
    pub fn new(rho: f64, mu: f64, gamma: f64, s: C64, horizon: f64) -> Result<Self> {
        let y_max = horizon.powf(rho) * (1.0 + 1e-12);
        Ok(MlKernelBasis {
            rho,
            mu,
            gamma,
            s,
            first: MlTable::new(MlParams::new(rho, mu + 1.0, gamma)?, s, y_max)?,
            second: MlTable::new(MlParams::new(rho, mu + 2.0, gamma)?, s, y_max)?,
        })
    }

    /// Kernel value `x^{μ-1} E^γ_{ρ,μ}(-s x^ρ)` (direct evaluation).
    pub fn kernel(&self, x: f64) -> C64 {
        eval_unchecked(self.rho, self.mu, self.gamma, -self.s * x.powf(self.rho)) * x.powf(self.mu - 1.0)
    }
}

impl Antiderivatives for MlKernelBasis {
    #[inline]
    fn k1_k2(&self, x: f64) -> (C64, C64) {
        if x <= 0.0 {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let y = x.powf(self.rho);
        let xm = x.powf(self.mu);
        (self.first.eval(y) * xm, self.second.eval(y) * (xm * x))
    }
}

/// Riemann–Liouville power kernel `ξ^{β-1}/Γ(β)`.
#[derive(Debug, Clone, Copy)]
pub struct PowerKernel {
    beta: f64,
    inv_g1: f64,
    inv_g2: f64,
}

impl PowerKernel {
    pub fn new(beta: f64) -> Self {
        PowerKernel {
            beta,
            inv_g1: super::gamma::rgamma(beta + 1.0),
            inv_g2: super::gamma::rgamma(beta + 2.0),
        }
    }
}

impl Antiderivatives for PowerKernel {
    #[inline]
    fn k1_k2(&self, x: f64) -> (C64, C64) {
        if x <= 0.0 {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let xb = x.powf(self.beta);
        (C64::new(xb * self.inv_g1, 0.0), C64::new(xb * x * self.inv_g2, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma::gamma;

    #[test]
    fn power_integral_when_rate_vanishes() {
        let v = kernel_segment_integral(0.5, 0.5, 1.0, C64::new(0.0, 0.0), 4.0).unwrap();
        assert!((v.re - 2.0 / gamma(1.5)).abs() < 1e-14);
        assert!((v.re - 2.256_758_334).abs() < 1e-9);
    }

    #[test]
    fn exponential_kernel_moment() {
        let v = kernel_segment_integral(1.0, 1.0, 1.0, C64::new(1.0, 0.0), 1.0).unwrap();
        assert!((v.re - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn empty_interval_and_bad_input() {
        let v = kernel_segment_integral(0.7, 0.7, 2.0, C64::new(3.0, 1.0), 0.0).unwrap();
        assert_eq!(v, C64::new(0.0, 0.0));
        assert!(kernel_segment_integral(0.7, 0.7, 1.0, C64::new(1.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn derivative_reproduces_kernel() {
        let (rho, mu, gamma_, s) = (0.6, 0.6, 1.0, C64::new(1.5, 2.0));
        let kernel = |x: f64| {
            eval_unchecked(rho, mu, gamma_, -s * x.powf(rho)) * x.powf(mu - 1.0)
        };
        let mut prev = f64::INFINITY;
        for &h in &[1e-2, 5e-3, 2.5e-3] {
            let x = 0.7;
            let d = (kernel_segment_integral(rho, mu, gamma_, s, x + h).unwrap()
                - kernel_segment_integral(rho, mu, gamma_, s, x - h).unwrap())
                / (2.0 * h);
            let err = (d - kernel(x)).norm();
            assert!(err < prev / 3.0, "central difference not O(h^2): {err}");
            prev = err;
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        for &(rho, mu, gamma_, s) in &[
            (0.6, 1.6, 1.0, C64::new(1.5, 7.85)),
            (0.6, 2.2, 2.0, C64::new(2.0, 0.0)),
            (0.3, 1.3, 1.0, C64::new(0.4, 0.0)),
            (1.0, 2.0, 1.0, C64::new(2.0, 1.0)),
        ] {
            let p = MlParams::new(rho, mu, gamma_).unwrap();
            let table = MlTable::new(p, s, 1.0).unwrap_or_else(|e| panic!("{rho} {mu} {gamma_} {s}: {e}"));
            for i in 0..=200 {
                let y = i as f64 / 200.0;
                let want = eval_unchecked(rho, mu, gamma_, -s * y);
                let got = table.eval(y);
                assert!(
                    (got - want).norm() <= 1e-13 * want.norm().max(1e-3),
                    "rho={rho} mu={mu} y={y}: {got} vs {want}"
                );
            }
        }
    }
}
