#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::PI;

use common::c;
use fractel_core::forward::{mode_kernels, ForwardSolver};
use fractel_core::fractional::{rl_integral, SampledFunction, TimeGrid};
use fractel_core::inverse::{
    assemble_f_and_df, default_grid, manufacture, march_volterra, picard_iterate, relative_error,
    solve_coupled_volterra, solve_inverse_with, stability_probe, CoupledKernel, InverseOptions, InverseResult,
    Manufactured, Method, Perturbation, RowWeights,
};
use fractel_core::special::{gamma, ml2};
use fractel_core::spectral::{dirichlet_laplacian_1d, point_functional_weights, split_roots, DataBundle, Measurement};
use fractel_core::Error;
use num_complex::Complex64 as C64;

struct Fixture {
    solver: ForwardSolver,
    bundle: DataBundle,
    p_true: SampledFunction,
    truth: Manufactured,
}

fn fixture(alpha: f64, steps: usize, p: impl Fn(f64) -> f64) -> Fixture {
    let rho = 0.6;
    let model = dirichlet_laplacian_1d(8, alpha).unwrap();
    let grid = default_grid(1.0, steps, rho).unwrap();
    let solver = ForwardSolver::new(&model, rho, &grid).unwrap();
    let mut bundle = DataBundle::zeros(8, &grid);
    bundle.q[0] = c(1.0);
    bundle.q[1] = c(0.3);
    bundle.b = point_functional_weights(&model, PI / 2.0).unwrap();
    bundle.phi1[0] = c(0.5);
    bundle.phi0[2] = c(0.2);
    bundle.f[2] = SampledFunction::from_real(&grid, |t| 0.1 * t);
    let p_true = SampledFunction::from_real(&grid, p);
    let truth = manufacture(&solver, &bundle, &p_true).unwrap();
    bundle.measurement = Some(truth.measurement.clone());
    Fixture {
        solver,
        bundle,
        p_true,
        truth,
    }
}

fn run(fx: &Fixture, method: Method) -> InverseResult {
    let opts = InverseOptions {
        method,
        ..Default::default()
    };
    solve_inverse_with(&fx.solver, &fx.bundle, &opts).unwrap()
}

#[test]
fn round_trip_recovers_p_and_u() {
    for alpha in [1.5, 2.0] {
        let fx = fixture(alpha, 256, |t| 1.0 + t);
        let r = run(&fx, Method::Volterra);
        assert!(relative_error(&r.p, &fx.p_true) < 5e-4, "alpha {alpha}");
        assert!(r.u.max_distance(&fx.truth.u) < 1e-4 * fx.truth.u.max_norm());
        let psi = &fx.bundle.measurement.as_ref().unwrap().psi;
        assert!(r.diagnostics.overdetermination_residual <= 1e-6 * psi.max_abs());
    }
}

#[test]
fn initial_values_are_honoured() {
    let fx = fixture(1.5, 128, |t| (2.0 * t).sin());
    let r = run(&fx, Method::Volterra);
    for k in 0..8 {
        assert!((r.u.mode(k)[0] - fx.bundle.phi1[k]).norm() < 1e-14);
        assert!((r.w.mode(k)[0] - fx.bundle.phi1[k]).norm() < 1e-14);
    }
    assert!(r.mu.values()[0].norm() < 1e-14);
    assert_eq!(r.diagnostics.mu0, r.mu.values()[0].norm());
    assert!(r.diagnostics.dmu0 < 1e-12);
}

#[test]
fn zero_data_gives_zero_source() {
    let grid = default_grid(1.0, 64, 0.6).unwrap();
    let model = dirichlet_laplacian_1d(4, 1.5).unwrap();
    let solver = ForwardSolver::new(&model, 0.6, &grid).unwrap();
    let mut bundle = DataBundle::zeros(4, &grid);
    bundle.q[0] = c(1.0);
    bundle.b = point_functional_weights(&model, 1.0).unwrap();
    let z = SampledFunction::zeros(&grid);
    bundle.measurement = Some(Measurement::analytic(z.clone(), z.clone(), z).unwrap());
    for method in [Method::Volterra, Method::Picard] {
        let opts = InverseOptions {
            method,
            ..Default::default()
        };
        let r = solve_inverse_with(&solver, &bundle, &opts).unwrap();
        assert_eq!(r.p.max_abs(), 0.0);
        assert_eq!(r.u.max_norm(), 0.0);
        if method == Method::Picard {
            assert!(r.diagnostics.iterations <= r.diagnostics.picard.as_ref().unwrap().windows.len());
        }
    }
}

#[test]
fn degenerate_functional_is_rejected() {
    let mut fx = fixture(1.5, 64, |t| t);
    // b ⟂ q: mode 2 vanishes at π/2, so keep only q_2.
    fx.bundle.q = vec![c(0.0); 8];
    fx.bundle.q[1] = c(1.0);
    let err = solve_inverse_with(&fx.solver, &fx.bundle, &InverseOptions::default()).unwrap_err();
    assert!(matches!(err.root(), Error::DegenerateFunctional { .. }), "{err}");
    assert!(CoupledKernel::new(&fx.solver, &fx.bundle).is_err());
}

#[test]
fn picard_agrees_with_direct_marching() {
    let fx = fixture(1.5, 256, |t| (2.0 * t).sin());
    let direct = run(&fx, Method::Volterra);
    let picard = run(&fx, Method::Picard);
    let tol = InverseOptions::default().tol;
    let rel = |a: &SampledFunction, b: &SampledFunction| {
        let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        d / b.max_abs()
    };
    assert!(rel(&picard.p, &direct.p) <= 10.0 * tol);
    let report = picard.diagnostics.picard.as_ref().unwrap();
    assert!(report.windows.len() > 1);
    for w in &report.windows {
        assert!(w.delta < 1.0);
        assert!(w.measured_ratio <= 1.2 * w.delta, "{w:?}");
    }
    assert_eq!(
        report.windows.iter().map(|w| w.nodes).sum::<usize>(),
        fx.solver.grid().len() - 1
    );
}

/// Trapezoid weights for `c = f + ∫₀ᵗ c`: decoupled scalar equations.
struct Trapezoid;

impl RowWeights for Trapezoid {
    fn row(&self, nodes: &[f64], n: usize, out: &mut Vec<[C64; 4]>) {
        out.clear();
        out.resize(n + 1, [c(0.0); 4]);
        for j in 0..n {
            let h = (nodes[j + 1] - nodes[j]) / 2.0;
            for i in [j, j + 1] {
                out[i][0] += h;
                out[i][3] += h;
            }
        }
    }
}

/// Product trapezoid weights of `-(t-τ)^{ρ-1}/Γ(ρ)` on a uniform grid,
/// acting on the first component only.
struct FractionalRelaxation {
    rho: f64,
}

impl RowWeights for FractionalRelaxation {
    fn row(&self, nodes: &[f64], n: usize, out: &mut Vec<[C64; 4]>) {
        let r = self.rho;
        let h = nodes[1] - nodes[0];
        let scale = -h.powf(r) / gamma(r + 2.0);
        let p = |x: f64| x.powf(r + 1.0);
        let nf = n as f64;
        out.clear();
        out.resize(n + 1, [c(0.0); 4]);
        out[0][0] = c(scale * (p(nf - 1.0) - (nf - 1.0 - r) * nf.powf(r)));
        for j in 1..n {
            let m = (n - j) as f64;
            out[j][0] = c(scale * (p(m + 1.0) - 2.0 * p(m) + p(m - 1.0)));
        }
        out[n][0] = c(scale);
    }
}

#[test]
fn marcher_and_picard_solve_known_scalar_equations() {
    let grid = TimeGrid::uniform(1.0, 400).unwrap();
    let nodes = grid.nodes();
    let ones = vec![c(1.0); nodes.len()];
    let twos = vec![c(2.0); nodes.len()];
    let (c1, c2) = march_volterra(nodes, &ones, &twos, &Trapezoid).unwrap();
    for (n, &t) in nodes.iter().enumerate() {
        assert!((c1[n].re - t.exp()).abs() < 1e-5);
        assert!((c2[n].re - 2.0 * t.exp()).abs() < 2e-5);
    }
    let opts = InverseOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let (p1, _, report) = picard_iterate(nodes, 1.0, &ones, &twos, &Trapezoid, &opts).unwrap();
    assert!(report.max_ratio() <= 1.2 * report.max_delta());
    for n in 0..nodes.len() {
        assert!((p1[n] - c1[n]).norm() < 1e-9);
    }

    let rho = 0.7;
    let zeros = vec![c(0.0); nodes.len()];
    let (e, _) = march_volterra(nodes, &ones, &zeros, &FractionalRelaxation { rho }).unwrap();
    for (n, &t) in nodes.iter().enumerate().skip(1) {
        let want = ml2(rho, 1.0, c(-t.powf(rho))).unwrap();
        assert!((e[n] - want).norm() < 1e-3, "t={t}");
    }
}

#[test]
fn coupled_operator_is_nontrivial_and_causal() {
    let fx = fixture(1.5, 64, |t| t);
    let kernel = CoupledKernel::new(&fx.solver, &fx.bundle).unwrap();
    assert!(!kernel.is_trivial());
    let (f, df) = assemble_f_and_df(&fx.solver, &fx.bundle).unwrap();
    let full = solve_coupled_volterra(&fx.solver, &fx.bundle, &f, &df).unwrap();
    // Truncating the horizon must not change earlier values.
    let nodes = fx.solver.grid().nodes();
    let half = nodes.len() / 2;
    let (c1, _) = march_volterra(
        &nodes[..half],
        &full.forcing1.values()[..half],
        &full.forcing2.values()[..half],
        &kernel,
    )
    .unwrap();
    for n in 0..half {
        assert!((c1[n] - full.c1.values()[n]).norm() < 1e-13 * (1.0 + c1[n].norm()));
    }
}

#[test]
fn resonant_derivative_kernel_matches_integral_form() {
    let (alpha, rho) = (2.0, 0.6);
    let split = split_roots(alpha, alpha * alpha, 1e-8).unwrap();
    assert!(split.resonant);
    let grid = default_grid(1.0, 512, rho).unwrap();
    let kernels = mode_kernels(&split, alpha, rho, 1.0).unwrap();
    let g = SampledFunction::from_real(&grid, |t| 1.0 + t.cos());
    let (k0g, k1g) = kernels.convolve(grid.nodes(), g.values());
    let k0g = SampledFunction::new(grid.clone(), k0g).unwrap();
    let j_k0g = rl_integral(-rho, &k0g).unwrap();
    let j_g = rl_integral(-rho, &g).unwrap();
    let want: Vec<C64> = (0..grid.len())
        .map(|n| k0g.values()[n] * (-2.0 * alpha) - j_k0g.values()[n] * (alpha * alpha) + j_g.values()[n])
        .collect();
    let err = common::rel_linf(&k1g, &want, 1);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn stability_is_linearity() {
    let fx = fixture(1.5, 128, |t| 1.0 + t);
    let grid = fx.solver.grid().clone();
    let mut dir = DataBundle::zeros(8, &grid);
    dir.q = fx.bundle.q.clone();
    dir.b = fx.bundle.b.clone();
    dir.phi0[0] = c(0.3);
    dir.phi1[1] = c(-0.2);
    dir.f[0] = SampledFunction::from_real(&grid, |t| t * t);
    let m = manufacture(&fx.solver, &dir, &SampledFunction::from_real(&grid, |t| (3.0 * t).cos())).unwrap();
    let pert = Perturbation {
        phi0: dir.phi0,
        phi1: dir.phi1,
        f: dir.f,
        measurement: m.measurement,
    };
    let scales = [1e-1, 1e-2, 1e-3, 1e-4];
    let rep = stability_probe(&fx.solver, &fx.bundle, &pert, &scales, &InverseOptions::default()).unwrap();
    assert!(rep.homogeneity_error < 1e-8, "{rep:?}");
    assert!(rep.additivity_error < 1e-8, "{rep:?}");
    assert!(rep.spread < 0.05, "{rep:?}");
    assert!(rep.zero_response < 1e-12);
    assert_eq!(rep.amplification.len(), scales.len());
}
