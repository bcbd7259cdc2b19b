//! Mode-by-mode solution of `(D^ρ)²u + 2αD^ρu + Au = G`, `u(0) = φ₁`,
//! `D^ρu(0) = φ₀`, together with `D^ρu` from its own closed form.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fractional::{caputo_l1, SampledFunction, TimeGrid};
use crate::special::kernel::{Antiderivatives, MlKernelBasis};
use crate::special::mittag_leffler::{eval_unchecked, MlParams};
use crate::spectral::{DataBundle, ModeSplit, SpectralModel};

/// Complex coefficients `[mode][node]` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    coeffs: Vec<Vec<C64>>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, coeffs: Vec<Vec<C64>>) -> Result<Self> {
        if coeffs.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::domain("trajectory rows must match the grid length"));
        }
        Ok(Trajectory { grid, coeffs })
    }

    pub fn zeros(grid: &TimeGrid, modes: usize) -> Self {
        Trajectory {
            grid: grid.clone(),
            coeffs: vec![vec![C64::new(0.0, 0.0); grid.len()]; modes],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn mode(&self, k: usize) -> &[C64] {
        &self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[Vec<C64>] {
        &self.coeffs
    }

    pub fn mode_mut(&mut self, k: usize) -> &mut Vec<C64> {
        &mut self.coeffs[k]
    }

    /// Coefficient vector at node `n`.
    pub fn at(&self, n: usize) -> Vec<C64> {
        self.coeffs.iter().map(|c| c[n]).collect()
    }

    /// `t ↦ Σ_k b_k c_k(t)`.
    pub fn functional(&self, b: &[C64]) -> SampledFunction {
        let values = (0..self.grid.len())
            .map(|n| b.iter().zip(&self.coeffs).map(|(b, c)| b * c[n]).sum())
            .collect();
        SampledFunction::new(self.grid.clone(), values).expect("row length matches grid")
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// `max_n ‖self(t_n) - other(t_n)‖₂`.
    pub fn max_distance(&self, other: &Trajectory) -> f64 {
        (0..self.grid.len())
            .map(|n| {
                self.coeffs
                    .iter()
                    .zip(&other.coeffs)
                    .map(|(a, b)| (a[n] - b[n]).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|n| self.coeffs.iter().map(|c| c[n].norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    basis: usize,
    conj: bool,
    coeff: C64,
}

/// The solution kernel `κ₀` of one mode and the kernel `κ₁ = D^ρ`-image of
/// its convolution, as combinations of tabulated Mittag-Leffler bases.
#[derive(Debug, Clone)]
pub struct ModeKernels {
    bases: Vec<MlKernelBasis>,
    k0: Vec<Term>,
    k1: Vec<Term>,
}

/// Builds `κ₀, κ₁` for one mode on `[0, horizon]`.
pub fn mode_kernels(split: &ModeSplit, alpha: f64, rho: f64, horizon: f64) -> Result<ModeKernels> {
    MlParams::two(rho, rho)?;
    if rho > 1.0 {
        return Err(Error::domain(format!("derivative order must lie in (0, 1], got {rho}")));
    }
    let term = |basis, conj, coeff| Term { basis, conj, coeff };
    if split.resonant {
        let a = C64::new(alpha, 0.0);
        let bases = vec![
            MlKernelBasis::new(rho, 2.0 * rho, 2.0, a, horizon)?,
            MlKernelBasis::new(rho, rho, 1.0, a, horizon)?,
        ];
        let one = C64::new(1.0, 0.0);
        return Ok(ModeKernels {
            bases,
            k0: vec![term(0, false, one)],
            k1: vec![term(1, false, one), term(0, false, -a)],
        });
    }
    let half_r = split.r_inv.expect("non-resonant split carries r_inv") * 0.5;
    let (sm, sp) = (split.s_minus, split.s_plus);
    let minus = MlKernelBasis::new(rho, rho, 1.0, sm, horizon)?;
    let (bases, plus, conj) = if split.conjugate_pair() {
        (vec![minus], 0, true)
    } else {
        (vec![minus, MlKernelBasis::new(rho, rho, 1.0, sp, horizon)?], 1, false)
    };
    Ok(ModeKernels {
        bases,
        k0: vec![term(0, false, half_r), term(plus, conj, -half_r)],
        k1: vec![term(0, false, -half_r * sm), term(plus, conj, half_r * sp)],
    })
}

impl ModeKernels {
    fn combine(terms: &[Term], vals: &[(C64, C64)]) -> (C64, C64) {
        terms.iter().fold((C64::new(0.0, 0.0), C64::new(0.0, 0.0)), |acc, t| {
            let (a, b) = vals[t.basis];
            let (a, b) = if t.conj { (a.conj(), b.conj()) } else { (a, b) };
            (acc.0 + t.coeff * a, acc.1 + t.coeff * b)
        })
    }

    fn point(terms: &[Term], bases: &[MlKernelBasis], x: f64) -> C64 {
        terms
            .iter()
            .map(|t| {
                let v = bases[t.basis].kernel(x);
                t.coeff * if t.conj { v.conj() } else { v }
            })
            .sum()
    }

    /// `κ₀(x)`.
    pub fn kappa0(&self, x: f64) -> C64 {
        Self::point(&self.k0, &self.bases, x)
    }

    /// `κ₁(x)`.
    pub fn kappa1(&self, x: f64) -> C64 {
        Self::point(&self.k1, &self.bases, x)
    }

    /// Antiderivative pairs of `κ₀` and `κ₁`.
    pub fn antiderivatives(&self, x: f64) -> [(C64, C64); 2] {
        let mut vals = [(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); 2];
        for (v, b) in vals.iter_mut().zip(&self.bases) {
            *v = b.k1_k2(x);
        }
        let vals = &vals[..self.bases.len()];
        [Self::combine(&self.k0, vals), Self::combine(&self.k1, vals)]
    }

    /// Product-integration weights of both kernels for node `n`.
    pub(crate) fn row_weights(
        &self,
        nodes: &[f64],
        n: usize,
        scratch: &mut Vec<[(C64, C64); 2]>,
        w0: &mut [C64],
        w1: &mut [C64],
    ) {
        let tn = nodes[n];
        scratch.clear();
        scratch.extend(nodes[..=n].iter().map(|&t| self.antiderivatives(tn - t)));
        let zero = C64::new(0.0, 0.0);
        w0[..=n].fill(zero);
        w1[..=n].fill(zero);
        for j in 0..n {
            let h = nodes[j + 1] - nodes[j];
            for (c, w) in [(0, &mut *w0), (1, &mut *w1)] {
                let (k1_b, k2_b) = scratch[j][c];
                let (k1_a, k2_a) = scratch[j + 1][c];
                let right = (k2_b - k2_a - k1_a * h) / h;
                w[j] += (k1_b - k1_a) - right;
                w[j + 1] += right;
            }
        }
    }

    /// `(∫κ₀(t-τ)g(τ)dτ, ∫κ₁(t-τ)g(τ)dτ)` at every node.
    pub fn convolve(&self, nodes: &[f64], g: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let len = nodes.len();
        let mut scratch = Vec::with_capacity(len);
        let (mut w0, mut w1) = (vec![C64::new(0.0, 0.0); len], vec![C64::new(0.0, 0.0); len]);
        let mut out0 = Vec::with_capacity(len);
        let mut out1 = Vec::with_capacity(len);
        for n in 0..len {
            self.row_weights(nodes, n, &mut scratch, &mut w0, &mut w1);
            out0.push(w0[..=n].iter().zip(&g[..=n]).map(|(w, g)| w * g).sum());
            out1.push(w1[..=n].iter().zip(&g[..=n]).map(|(w, g)| w * g).sum());
        }
        (out0, out1)
    }
}

impl Antiderivatives for ModeKernels {
    /// Antiderivatives of `κ₀`.
    fn k1_k2(&self, x: f64) -> (C64, C64) {
        self.antiderivatives(x)[0]
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::domain(format!("derivative order must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

/// Free response and its `D^ρ` for one mode.
pub fn homogeneous_with_derivative(
    split: &ModeSplit,
    alpha: f64,
    rho: f64,
    phi0: C64,
    phi1: C64,
    grid: &TimeGrid,
) -> Result<(Vec<C64>, Vec<C64>)> {
    check_rho(rho)?;
    let ys = grid.nodes().iter().map(|t| t.powf(rho));
    if split.resonant {
        let a = C64::new(alpha, 0.0);
        Ok(ys
            .map(|y| {
                let e1 = eval_unchecked(rho, 1.0, 1.0, -a * y);
                let e2 = eval_unchecked(rho, rho + 1.0, 2.0, -a * y) * y;
                let u = e1 * phi1 + a * e2 * phi1 + e2 * phi0;
                let du = -a * a * phi1 * e2 + phi0 * (e1 - a * e2);
                (u, du)
            })
            .unzip())
    } else {
        let half_r = split.r_inv.expect("non-resonant split carries r_inv") * 0.5;
        let (sm, sp) = (split.s_minus, split.s_plus);
        let lambda = sm * sp;
        let pair = split.conjugate_pair();
        Ok(ys
            .map(|y| {
                let em = eval_unchecked(rho, 1.0, 1.0, -sm * y);
                let ep = if pair { em.conj() } else { eval_unchecked(rho, 1.0, 1.0, -sp * y) };
                let diff = (em - ep) * half_r;
                let u = (em + ep) * 0.5 * phi1 + diff * alpha * phi1 + diff * phi0;
                let du = -lambda * phi1 * diff + phi0 * half_r * (sp * ep - sm * em);
                (u, du)
            })
            .unzip())
    }
}

/// Free response of one mode.
pub fn homogeneous_mode_response(
    split: &ModeSplit,
    alpha: f64,
    rho: f64,
    phi0: C64,
    phi1: C64,
    grid: &TimeGrid,
) -> Result<Vec<C64>> {
    homogeneous_with_derivative(split, alpha, rho, phi0, phi1, grid).map(|(u, _)| u)
}

/// `∫₀ᵗ κ₀(t-τ) G(τ) dτ` for one mode.
pub fn convolution_response(split: &ModeSplit, alpha: f64, rho: f64, g: &SampledFunction) -> Result<Vec<C64>> {
    check_rho(rho)?;
    let kernels = mode_kernels(split, alpha, rho, g.grid().horizon())?;
    Ok(kernels.convolve(g.grid().nodes(), g.values()).0)
}

/// `u` and `D^ρu` for every mode.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u: Trajectory,
    pub du: Trajectory,
}

/// A model bound to an order `ρ` and a grid, with the kernels built once.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    model: SpectralModel,
    rho: f64,
    grid: TimeGrid,
    kernels: Vec<ModeKernels>,
}

impl ForwardSolver {
    pub fn new(model: &SpectralModel, rho: f64, grid: &TimeGrid) -> Result<Self> {
        check_rho(rho)?;
        let kernels = model
            .splits()
            .iter()
            .map(|s| mode_kernels(s, model.alpha(), rho, grid.horizon()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardSolver {
            model: model.clone(),
            rho,
            grid: grid.clone(),
            kernels,
        })
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn kernels(&self) -> &[ModeKernels] {
        &self.kernels
    }

    fn check_sources(&self, g: &[SampledFunction]) -> Result<()> {
        if g.len() != self.model.modes() {
            return Err(Error::domain(format!(
                "{} source modes for an operator with {}",
                g.len(),
                self.model.modes()
            )));
        }
        if g.iter().any(|g| !g.grid().same_as(&self.grid)) {
            return Err(Error::domain("source samples are not on the solver grid"));
        }
        Ok(())
    }

    pub fn solve(&self, phi0: &[C64], phi1: &[C64], g: &[SampledFunction]) -> Result<ForwardSolution> {
        self.check_sources(g)?;
        let n = self.model.modes();
        if phi0.len() != n || phi1.len() != n {
            return Err(Error::domain("initial data do not match the mode count"));
        }
        let nodes = self.grid.nodes();
        let mut u = Vec::with_capacity(n);
        let mut du = Vec::with_capacity(n);
        for k in 0..n {
            let split = &self.model.splits()[k];
            let (mut uk, mut duk) =
                homogeneous_with_derivative(split, self.model.alpha(), self.rho, phi0[k], phi1[k], &self.grid)?;
            if g[k].max_abs() > 0.0 {
                let (c0, c1) = self.kernels[k].convolve(nodes, g[k].values());
                for i in 0..nodes.len() {
                    uk[i] += c0[i];
                    duk[i] += c1[i];
                }
            }
            u.push(uk);
            du.push(duk);
        }
        Ok(ForwardSolution {
            u: Trajectory::new(self.grid.clone(), u)?,
            du: Trajectory::new(self.grid.clone(), du)?,
        })
    }
}

/// Per-mode source `G_k(t) = p(t) q_k + f_k(t)`.
pub fn source_samples(p: &SampledFunction, bundle: &DataBundle) -> Result<Vec<SampledFunction>> {
    bundle
        .q
        .iter()
        .zip(&bundle.f)
        .map(|(q, f)| {
            if !f.grid().same_as(p.grid()) {
                return Err(Error::domain("p and f live on different grids"));
            }
            let v = p.values().iter().zip(f.values()).map(|(p, f)| p * q + f).collect();
            SampledFunction::new(p.grid().clone(), v)
        })
        .collect()
}

/// Solution trajectory for data `bundle` and per-mode source `g`.
pub fn solve_forward(
    model: &SpectralModel,
    rho: f64,
    bundle: &DataBundle,
    g: &[SampledFunction],
) -> Result<Trajectory> {
    let grid = g
        .first()
        .ok_or_else(|| Error::domain("no source modes supplied"))?
        .grid()
        .clone();
    ForwardSolver::new(model, rho, &grid)?
        .solve(&bundle.phi0, &bundle.phi1, g)
        .map(|s| s.u)
}

/// `‖(D^ρ)²u + 2αD^ρu + Au - G‖` per node, derivatives by the L1 scheme.
/// The node-0 value of `D^ρu` is pinned to `φ₀`; node 0 of the result is 0.
pub fn residual_check(
    model: &SpectralModel,
    rho: f64,
    phi0: &[C64],
    traj: &Trajectory,
    g: &[SampledFunction],
) -> Result<SampledFunction> {
    let grid = traj.grid();
    if grid.len() < 8 {
        return Err(Error::domain("residual check needs at least eight nodes"));
    }
    if g.len() != traj.modes() || phi0.len() != traj.modes() || traj.modes() != model.modes() {
        return Err(Error::domain("mode counts disagree"));
    }
    let mut sq = vec![0.0; grid.len()];
    for k in 0..traj.modes() {
        let u = SampledFunction::new(grid.clone(), traj.mode(k).to_vec())?;
        let du = caputo_l1(rho, &u)?;
        let mut du_vals = du.into_values();
        du_vals[0] = phi0[k];
        let du = SampledFunction::new(grid.clone(), du_vals)?;
        let ddu = caputo_l1(rho, &du)?;
        let lambda = model.eigenvalues()[k];
        #[allow(clippy::needless_range_loop)]
        for n in 1..grid.len() {
            let r = ddu.values()[n] + du.values()[n] * (2.0 * model.alpha()) + u.values()[n] * lambda
                - g[k].values()[n];
            sq[n] += r.norm_sqr();
        }
    }
    let values = sq.iter().map(|s| C64::new(s.sqrt(), 0.0)).collect();
    SampledFunction::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::split_roots;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn classical_damped_oscillator() {
        let s = split_roots(2.0, 3.0, 1e-8).unwrap();
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let u = homogeneous_mode_response(&s, 2.0, 1.0, c(0.0), c(1.0), &g).unwrap();
        assert_eq!(u[0], c(1.0));
        assert!((u[4].re - (3.0 * (-1f64).exp() - (-3f64).exp()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn critically_damped() {
        let s = split_roots(1.0, 1.0, 1e-8).unwrap();
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let u = homogeneous_mode_response(&s, 1.0, 1.0, c(0.0), c(1.0), &g).unwrap();
        assert!((u[4].re - 0.735_758_882_4).abs() < 1e-10);
    }

    #[test]
    fn derivative_starts_at_phi0() {
        for (alpha, lambda) in [(2.0, 3.0), (1.0, 1.0), (1.0, 5.0)] {
            let s = split_roots(alpha, lambda, 1e-8).unwrap();
            let g = TimeGrid::uniform(1.0, 4).unwrap();
            let (u, du) = homogeneous_with_derivative(&s, alpha, 0.6, c(0.7), c(-0.3), &g).unwrap();
            assert!((u[0] - c(-0.3)).norm() < 1e-15);
            assert!((du[0] - c(0.7)).norm() < 1e-14);
        }
    }

    #[test]
    fn kernel_matches_impulse_response_at_rho_one() {
        let s = split_roots(2.0, 3.0, 1e-8).unwrap();
        let k = mode_kernels(&s, 2.0, 1.0, 2.0).unwrap();
        for x in [0.1f64, 0.5, 1.7] {
            let want = ((-x).exp() - (-3.0 * x).exp()) / 2.0;
            assert!((k.kappa0(x) - c(want)).norm() < 1e-14);
            let dwant = (-(-x).exp() + 3.0 * (-3.0 * x).exp()) / 2.0;
            assert!((k.kappa1(x) - c(dwant)).norm() < 1e-13);
        }
    }

    #[test]
    fn constant_forcing_at_rho_one() {
        let s = split_roots(2.0, 3.0, 1e-8).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let g = SampledFunction::from_real(&grid, |_| 3.0);
        let u = convolution_response(&s, 2.0, 1.0, &g).unwrap();
        // exact for constant densities
        assert!((u[64].re - (1.0 - (3.0 * (-1f64).exp() - (-3f64).exp()) / 2.0)).abs() < 1e-12);
        assert!(convolution_response(&s, 2.0, 1.0, &SampledFunction::zeros(&grid))
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
    }

    #[test]
    fn bad_order_rejected() {
        let s = split_roots(2.0, 3.0, 1e-8).unwrap();
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert!(homogeneous_mode_response(&s, 2.0, 1.3, c(0.0), c(1.0), &g).is_err());
        assert!(homogeneous_mode_response(&s, 2.0, 0.0, c(0.0), c(1.0), &g).is_err());
    }

    #[test]
    fn conjugate_modes_stay_real() {
        let s = split_roots(1.0, 5.0, 1e-8).unwrap();
        let grid = TimeGrid::graded(2.0, 64, 2.0).unwrap();
        let (u, du) = homogeneous_with_derivative(&s, 1.0, 0.7, c(0.4), c(1.0), &grid).unwrap();
        let g = SampledFunction::from_real(&grid, |t| t.cos());
        let (k0, k1) = mode_kernels(&s, 1.0, 0.7, 2.0).unwrap().convolve(grid.nodes(), g.values());
        for v in u.iter().chain(&du).chain(&k0).chain(&k1) {
            assert!(v.im.abs() < 1e-12);
        }
    }
}
