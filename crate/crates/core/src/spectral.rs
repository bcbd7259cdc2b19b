//! The operator `A` through its eigenpairs, per-mode characteristic roots
//! and the bounded functional `B` through its weights `b_k = B[v_k]`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fractional::{caputo_l1, SampledFunction, TimeGrid};

pub const DEFAULT_RESONANCE_TOLERANCE: f64 = 1e-8;

/// Roots `s± = α ± √(α²-λ)` of `s² - 2αs + λ` for one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSplit {
    pub s_minus: C64,
    pub s_plus: C64,
    /// `1/√(α²-λ)`, absent for the resonant mode.
    pub r_inv: Option<C64>,
    pub resonant: bool,
}

impl ModeSplit {
    /// True when the two roots are complex conjugates.
    pub fn conjugate_pair(&self) -> bool {
        !self.resonant && self.s_minus.im != 0.0 && self.s_minus == self.s_plus.conj()
    }
}

pub fn split_roots(alpha: f64, lambda: f64, tol: f64) -> Result<ModeSplit> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(format!("damping must be positive, got {alpha}")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain(format!("eigenvalue must be positive, got {lambda}")));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::domain("resonance tolerance must be >= 0"));
    }
    let a2 = alpha * alpha;
    let a = C64::new(alpha, 0.0);
    if (lambda - a2).abs() <= tol * a2.max(1.0) {
        return Ok(ModeSplit {
            s_minus: a,
            s_plus: a,
            r_inv: None,
            resonant: true,
        });
    }
    let d = a2 - lambda;
    let root = if d >= 0.0 {
        C64::new(d.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-d).sqrt())
    };
    Ok(ModeSplit {
        s_minus: a - root,
        s_plus: a + root,
        r_inv: Some(root.inv()),
        resonant: false,
    })
}

/// Known eigenfunction families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eigenbasis {
    /// `v_k(x) = √(2/π) sin(kx)` on `(0, π)`.
    DirichletSine,
}

impl Eigenbasis {
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        match self {
            Eigenbasis::DirichletSine => (2.0 / PI).sqrt() * (k as f64 * x).sin(),
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            Eigenbasis::DirichletSine => (0.0, PI),
        }
    }
}

/// Truncated spectral description of `A` with damping `α`.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    alpha: f64,
    resonance_tolerance: f64,
    basis: Option<Eigenbasis>,
    splits: Vec<ModeSplit>,
    resonant: Option<usize>,
}

impl SpectralModel {
    pub fn new(eigenvalues: Vec<f64>, alpha: f64, resonance_tolerance: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::domain("at least one mode is required"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("eigenvalues must be non-decreasing"));
        }
        let splits = eigenvalues
            .iter()
            .map(|&l| split_roots(alpha, l, resonance_tolerance))
            .collect::<Result<Vec<_>>>()?;
        let mut hits = splits.iter().enumerate().filter(|(_, s)| s.resonant).map(|(k, _)| k);
        let resonant = hits.next();
        if hits.next().is_some() {
            return Err(Error::domain("more than one eigenvalue lies in the resonance band"));
        }
        Ok(SpectralModel {
            eigenvalues,
            alpha,
            resonance_tolerance,
            basis: None,
            splits,
            resonant,
        })
    }

    pub fn with_basis(mut self, basis: Eigenbasis) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn resonance_tolerance(&self) -> f64 {
        self.resonance_tolerance
    }

    pub fn basis(&self) -> Option<Eigenbasis> {
        self.basis
    }

    pub fn splits(&self) -> &[ModeSplit] {
        &self.splits
    }

    /// Zero-based index of the resonant mode, if any.
    pub fn resonant_mode(&self) -> Option<usize> {
        self.resonant
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    fn require_basis(&self) -> Result<Eigenbasis> {
        self.basis
            .ok_or_else(|| Error::Unsupported("operator has no eigenfunction evaluator".into()))
    }

    /// `Σ_k h_k v_k(x)`.
    pub fn reconstruct(&self, coeffs: &[C64], x: f64) -> Result<C64> {
        let basis = self.require_basis()?;
        Ok(coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * basis.eval(k + 1, x))
            .sum())
    }
}

/// Dirichlet Laplacian on `(0, π)`: `λ_k = k²`.
pub fn dirichlet_laplacian_1d(modes: usize, alpha: f64) -> Result<SpectralModel> {
    if modes < 1 {
        return Err(Error::domain("mode count must be >= 1"));
    }
    let eigenvalues = (1..=modes).map(|k| (k * k) as f64).collect();
    Ok(SpectralModel::new(eigenvalues, alpha, DEFAULT_RESONANCE_TOLERANCE)?
        .with_basis(Eigenbasis::DirichletSine))
}

/// `(Σ λ_k^{2τ} |h_k|²)^{1/2}`.
pub fn fractional_norm(tau: f64, coeffs: &[C64], eigenvalues: &[f64]) -> Result<f64> {
    if coeffs.len() != eigenvalues.len() {
        return Err(Error::domain("coefficient and eigenvalue counts differ"));
    }
    Ok(coeffs
        .iter()
        .zip(eigenvalues)
        .map(|(h, l)| l.powf(2.0 * tau) * h.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `Σ b_k h_k`.
pub fn functional_apply(b: &[C64], coeffs: &[C64]) -> Result<C64> {
    if b.len() != coeffs.len() {
        return Err(Error::domain("functional and coefficient counts differ"));
    }
    Ok(b.iter().zip(coeffs).map(|(b, h)| b * h).sum())
}

/// Trapezoidal approximation of `(h, v_k)` from samples covering the domain.
pub fn project_samples(model: &SpectralModel, xs: &[f64], values: &[C64]) -> Result<Vec<C64>> {
    let basis = model.require_basis()?;
    if xs.len() != values.len() || xs.len() < 2 {
        return Err(Error::domain("need at least two (x, value) samples of equal count"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("sample abscissae must be strictly increasing"));
    }
    let (a, b) = basis.domain();
    let span = b - a;
    if (xs[0] - a).abs() > 1e-9 * span || (xs[xs.len() - 1] - b).abs() > 1e-9 * span {
        return Err(Error::domain("samples must cover the whole spatial domain"));
    }
    Ok((1..=model.modes())
        .map(|k| {
            let f = |i: usize| values[i] * basis.eval(k, xs[i]);
            (0..xs.len() - 1)
                .map(|i| (f(i) + f(i + 1)) * (0.5 * (xs[i + 1] - xs[i])))
                .sum()
        })
        .collect())
}

/// Weights of `B[u] = ∫_a^b u dx`.
pub fn integral_functional_weights(model: &SpectralModel, a: f64, b: f64) -> Result<Vec<C64>> {
    match model.require_basis()? {
        Eigenbasis::DirichletSine => {
            let (lo, hi) = Eigenbasis::DirichletSine.domain();
            if !(lo <= a && a < b && b <= hi) {
                return Err(Error::domain(format!("integration window [{a}, {b}] outside (0, π)")));
            }
            let c = (2.0 / PI).sqrt();
            Ok((1..=model.modes())
                .map(|k| {
                    let k = k as f64;
                    C64::new(c * ((k * a).cos() - (k * b).cos()) / k, 0.0)
                })
                .collect())
        }
    }
}

/// Weights of `B[u] = u(x0)`.
pub fn point_functional_weights(model: &SpectralModel, x0: f64) -> Result<Vec<C64>> {
    let basis = model.require_basis()?;
    let (lo, hi) = basis.domain();
    if !(lo..=hi).contains(&x0) {
        return Err(Error::domain(format!("evaluation point {x0} outside the domain")));
    }
    Ok((1..=model.modes())
        .map(|k| C64::new(basis.eval(k, x0), 0.0))
        .collect())
}

/// The measurement `ψ` with `D^ρψ` and `(D^ρ)²ψ`.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub psi: SampledFunction,
    pub dpsi: SampledFunction,
    pub ddpsi: SampledFunction,
    /// False when the derivatives were produced by the L1 scheme.
    pub analytic: bool,
}

impl Measurement {
    pub fn analytic(psi: SampledFunction, dpsi: SampledFunction, ddpsi: SampledFunction) -> Result<Self> {
        if !psi.grid().same_as(dpsi.grid()) || !psi.grid().same_as(ddpsi.grid()) {
            return Err(Error::domain("ψ and its derivatives live on different grids"));
        }
        Ok(Measurement {
            psi,
            dpsi,
            ddpsi,
            analytic: true,
        })
    }

    /// Derivatives from samples alone; accuracy is limited by the L1 scheme.
    pub fn from_samples(rho: f64, psi: SampledFunction) -> Result<Self> {
        let dpsi = caputo_l1(rho, &psi)?;
        let ddpsi = caputo_l1(rho, &dpsi)?;
        Ok(Measurement {
            psi,
            dpsi,
            ddpsi,
            analytic: false,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.psi.grid()
    }
}

/// Fourier data of one problem instance.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub phi0: Vec<C64>,
    pub phi1: Vec<C64>,
    pub q: Vec<C64>,
    /// Per-mode samples of `f_k(t)`.
    pub f: Vec<SampledFunction>,
    pub b: Vec<C64>,
    pub measurement: Option<Measurement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEnergy {
    pub phi0: f64,
    pub phi1: f64,
    pub q: f64,
    pub f: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothnessReport {
    pub epsilon: f64,
    /// `Σ λ_k^{2(1+ε)} |q_k|²`.
    pub q_sum: f64,
    /// `max_t Σ λ_k^{2ε} |f_k(t)|²`.
    pub f_sum: f64,
    /// `Σ |b_k|²`.
    pub b_sum: f64,
    /// Energy in the last three retained modes of each series.
    pub tail: TailEnergy,
}

impl DataBundle {
    /// Bundle with zero initial data and zero `f` on `grid`.
    pub fn zeros(modes: usize, grid: &TimeGrid) -> Self {
        let z = vec![C64::new(0.0, 0.0); modes];
        DataBundle {
            phi0: z.clone(),
            phi1: z.clone(),
            q: z.clone(),
            f: vec![SampledFunction::zeros(grid); modes],
            b: z,
            measurement: None,
        }
    }

    pub fn validate(&self, model: &SpectralModel, grid: &TimeGrid) -> Result<()> {
        let n = model.modes();
        for (name, len) in [
            ("phi0", self.phi0.len()),
            ("phi1", self.phi1.len()),
            ("q", self.q.len()),
            ("f", self.f.len()),
            ("b", self.b.len()),
        ] {
            if len != n {
                return Err(Error::domain(format!("{name} has {len} modes, operator has {n}")));
            }
        }
        if self.f.iter().any(|f| !f.grid().same_as(grid)) {
            return Err(Error::domain("f samples are not on the solver grid"));
        }
        if let Some(m) = &self.measurement {
            if !m.grid().same_as(grid) {
                return Err(Error::domain("ψ samples are not on the solver grid"));
            }
        }
        let finite = |v: &[C64]| v.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !(finite(&self.phi0) && finite(&self.phi1) && finite(&self.q) && finite(&self.b))
            || self.f.iter().any(|f| !finite(f.values()))
        {
            return Err(Error::domain("data contain non-finite values"));
        }
        Ok(())
    }

    pub fn bq(&self) -> C64 {
        self.b.iter().zip(&self.q).map(|(b, q)| b * q).sum()
    }

    /// `Bq`, or an error when it vanishes relative to `‖b‖‖q‖`.
    pub fn checked_bq(&self) -> Result<C64> {
        let bq = self.bq();
        let scale = l2(&self.b) * l2(&self.q);
        if bq.norm() == 0.0 || bq.norm() < 1e-14 * scale || scale == 0.0 {
            return Err(Error::DegenerateFunctional { bq: bq.norm() });
        }
        Ok(bq)
    }

    pub fn smoothness(&self, model: &SpectralModel, epsilon: f64) -> SmoothnessReport {
        let lam = model.eigenvalues();
        let q_sum = self
            .q
            .iter()
            .zip(lam)
            .map(|(q, l)| l.powf(2.0 * (1.0 + epsilon)) * q.norm_sqr())
            .sum();
        let nodes = self.f.first().map_or(0, |f| f.values().len());
        let f_sum = (0..nodes)
            .map(|i| {
                self.f
                    .iter()
                    .zip(lam)
                    .map(|(f, l)| l.powf(2.0 * epsilon) * f.values()[i].norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let tail = |v: &[C64]| {
            let from = v.len().saturating_sub(3);
            v[from..].iter().map(|c| c.norm_sqr()).sum()
        };
        let from = self.f.len().saturating_sub(3);
        let f_tail = self.f[from..]
            .iter()
            .map(|f| f.values().iter().map(|c| c.norm_sqr()).fold(0.0, f64::max))
            .sum();
        SmoothnessReport {
            epsilon,
            q_sum,
            f_sum,
            b_sum: self.b.iter().map(|c| c.norm_sqr()).sum(),
            tail: TailEnergy {
                phi0: tail(&self.phi0),
                phi1: tail(&self.phi1),
                q: tail(&self.q),
                f: f_tail,
                b: tail(&self.b),
            },
        }
    }
}

pub(crate) fn l2(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn real_split() {
        let s = split_roots(2.0, 3.0, 1e-8).unwrap();
        assert_eq!((s.s_minus, s.s_plus, s.r_inv), (c(1.0, 0.0), c(3.0, 0.0), Some(c(1.0, 0.0))));
        assert!(!s.resonant);
    }

    #[test]
    fn resonant_split() {
        let s = split_roots(2.0, 4.0, 1e-8).unwrap();
        assert!(s.resonant && s.r_inv.is_none());
        assert!(!split_roots(2.0, 4.0 * (1.0 + 1e-6), 1e-8).unwrap().resonant);
    }

    #[test]
    fn oscillatory_split_uses_principal_branch() {
        let s = split_roots(2.0, 8.0, 1e-8).unwrap();
        assert_eq!(s.s_minus, c(2.0, -2.0));
        assert_eq!(s.s_plus, c(2.0, 2.0));
        assert!((s.r_inv.unwrap() - c(0.0, -0.5)).norm() < 1e-16);
        assert!(s.conjugate_pair());
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_roots(0.0, 1.0, 1e-8).is_err());
        assert!(split_roots(1.0, -1.0, 1e-8).is_err());
    }

    #[test]
    fn norms() {
        let one = [c(1.0, 0.0)];
        assert_eq!(fractional_norm(0.0, &one, &[7.0]).unwrap(), 1.0);
        assert_eq!(fractional_norm(1.0, &[c(1.0, 0.0), c(0.0, 0.0)], &[1.0, 4.0]).unwrap(), 1.0);
        let v = fractional_norm(0.5, &[c(1.0, 0.0), c(1.0, 0.0)], &[1.0, 4.0]).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-15);
        assert!(fractional_norm(0.5, &one, &[1.0, 4.0]).is_err());
    }

    #[test]
    fn functional() {
        let b = [c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(functional_apply(&b, &[c(3.0, 1.0), c(5.0, 0.0)]).unwrap(), c(3.0, 1.0));
        assert_eq!(functional_apply(&b, &[c(0.0, 0.0); 2]).unwrap(), c(0.0, 0.0));
        assert!(functional_apply(&b, &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn laplacian() {
        let m = dirichlet_laplacian_1d(3, 1.5).unwrap();
        assert_eq!(m.eigenvalues(), &[1.0, 4.0, 9.0]);
        assert!((Eigenbasis::DirichletSine.eval(1, PI / 2.0) - 0.797_884_560_8).abs() < 1e-10);
        assert!(dirichlet_laplacian_1d(0, 1.0).is_err());
        assert_eq!(dirichlet_laplacian_1d(8, 2.0).unwrap().resonant_mode(), Some(1));
    }

    #[test]
    fn two_resonant_modes_rejected() {
        assert!(SpectralModel::new(vec![4.0, 4.0], 2.0, 1e-8).is_err());
        assert!(SpectralModel::new(vec![4.0, 1.0], 2.0, 1e-8).is_err());
    }

    #[test]
    fn integral_weights_closed_form() {
        let m = dirichlet_laplacian_1d(4, 1.0).unwrap();
        let b = integral_functional_weights(&m, 0.0, PI).unwrap();
        let c0 = (2.0 / PI).sqrt();
        assert!((b[0].re - 2.0 * c0).abs() < 1e-15);
        assert!(b[1].re.abs() < 1e-15);
        assert!((b[2].re - 2.0 * c0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn projection_needs_basis() {
        let m = SpectralModel::new(vec![1.0], 1.0, 1e-8).unwrap();
        let r = project_samples(&m, &[0.0, PI], &[c(0.0, 0.0); 2]);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn degenerate_functional() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let mut d = DataBundle::zeros(2, &g);
        d.q[0] = c(1.0, 0.0);
        d.b[1] = c(1.0, 0.0);
        assert!(matches!(d.checked_bq(), Err(Error::DegenerateFunctional { .. })));
        d.b[0] = c(0.5, 0.0);
        assert_eq!(d.checked_bq().unwrap(), c(0.5, 0.0));
    }
}
