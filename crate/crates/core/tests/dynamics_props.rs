use proptest::prelude::*;
use volterra_ldp::dynamics::{ControlPath, DiscreteModel, SimulationOptions};
use volterra_ldp::kernel::KernelSpec;
use volterra_ldp::model::{FunctionSpec, Grid, ModelSpec, PathValues};

fn cir(drift: FunctionSpec<f64>, v0: f64) -> ModelSpec<f64> {
    ModelSpec {
        kernel: KernelSpec::Fractional { hurst: 0.3 },
        u_fn: FunctionSpec::Identity,
        sigma_fn: FunctionSpec::ShiftedPower { scale: 0.3, beta: 0.25 },
        drift_fn: drift,
        disp_fn: FunctionSpec::SquareRoot,
        v0,
        rho: -0.5,
        horizon: 1.0,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max error of the recovered control against `fdot_exact` for a driver
/// path known in closed form, on `n` steps.
fn inverse_error(spec: &ModelSpec<f64>, n: usize, phi: impl Fn(f64) -> f64, fdot_exact: impl Fn(f64) -> f64) -> f64 {
    let grid = Grid::new(n, spec.horizon).unwrap();
    let model = DiscreteModel::new(spec.clone(), grid).unwrap();
    let ctrl = model.inverse_control(&PathValues::from_fn(grid, phi)).unwrap();
    let exact: Vec<f64> = (0..n).map(|i| fdot_exact(grid.point(i))).collect();
    max_abs_diff(&ctrl.fdot, &exact)
}

#[test]
fn inverse_control_of_quadratic_cir_path_is_constant() {
    let v0 = 0.04;
    let spec = cir(FunctionSpec::Zero, v0);
    let phi = |t: f64| v0 * (1.0 + t) * (1.0 + t);
    let exact = |_: f64| 2.0 * v0.sqrt();
    let mut prev = f64::INFINITY;
    for n in [50, 100, 200, 400] {
        let err = inverse_error(&spec, n, phi, exact);
        let dt = 1.0 / n as f64;
        assert!(err <= 5.0 * dt, "n={n}: {err}");
        if prev.is_finite() {
            let ratio = prev / err;
            assert!((1.8..2.2).contains(&ratio), "n={n}: error ratio {ratio}");
        }
        prev = err;
    }
}

#[test]
fn inverse_control_error_halves_with_drift() {
    let spec = cir(FunctionSpec::MeanReverting { kappa: 2.0, theta: 0.04 }, 0.09);
    let phi = |t: f64| 0.09 + 0.05 * (2.0 * t).sin();
    let fdot = |t: f64| {
        let v = phi(t);
        (0.1 * (2.0 * t).cos() - 2.0 * (0.04 - v)) / v.sqrt()
    };
    let errs: Vec<f64> = [100, 200, 400].iter().map(|&n| inverse_error(&spec, n, phi, fdot)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..2.2).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn forward_solution_error_halves() {
    // v̇ = κ(θ − v) + √v ḟ with ḟ chosen so that v = 0.09 + 0.05 sin 2t
    let spec = cir(FunctionSpec::MeanReverting { kappa: 2.0, theta: 0.04 }, 0.09);
    let phi = |t: f64| 0.09 + 0.05 * (2.0 * t).sin();
    let fdot = |t: f64| {
        let v = phi(t);
        (0.1 * (2.0 * t).cos() - 2.0 * (0.04 - v)) / v.sqrt()
    };
    let err = |n: usize| {
        let grid = Grid::new(n, 1.0).unwrap();
        let model = DiscreteModel::new(spec.clone(), grid).unwrap();
        let ctrl = ControlPath::new(grid, (0..n).map(|i| fdot(grid.point(i))).collect()).unwrap();
        let path = model.solve_control_ode(&ctrl).unwrap();
        let exact: Vec<f64> = grid.points().into_iter().map(phi).collect();
        max_abs_diff(&path.v, &exact)
    };
    let (e1, e2, e3) = (err(100), err(200), err(400));
    assert!(e1 <= 5.0 / 100.0);
    for ratio in [e1 / e2, e2 / e3] {
        assert!((1.8..2.2).contains(&ratio), "{e1} {e2} {e3}");
    }
}

#[test]
fn mean_reverting_decay_matches_closed_form() {
    let spec = cir(FunctionSpec::MeanReverting { kappa: 2.0, theta: 0.04 }, 0.09);
    let n = 200;
    let grid = Grid::new(n, 1.0).unwrap();
    let model = DiscreteModel::new(spec, grid).unwrap();
    let path = model.solve_control_ode(&ControlPath::zero(grid)).unwrap();
    let exact = 0.04 + 0.05 * (-2.0f64).exp();
    assert!((path.v[n] - exact).abs() <= 2.0 * grid.dt(), "{} vs {exact}", path.v[n]);
}

#[test]
fn check_of_linear_control_under_unit_kernel() {
    let spec = ModelSpec {
        kernel: KernelSpec::Constant { level: 1.0 },
        u_fn: FunctionSpec::Identity,
        sigma_fn: FunctionSpec::Constant { value: 0.2 },
        drift_fn: FunctionSpec::Zero,
        disp_fn: FunctionSpec::Constant { value: 1.0 },
        v0: 0.3,
        rho: 0.0,
        horizon: 1.0,
    };
    let (a, n) = (0.7_f64, 100);
    let grid = Grid::new(n, 1.0).unwrap();
    let model = DiscreteModel::new(spec, grid).unwrap();
    let check = model.check_operator(&ControlPath::constant(grid, a)).unwrap();
    for (i, v) in check.values.iter().enumerate() {
        let t = grid.point(i);
        assert!((v - (0.3 * t + a * t * t / 2.0)).abs() <= 2.0 * grid.dt());
    }
}

proptest! {
    #[test]
    fn discrete_round_trip_is_exact(
        fdot in proptest::collection::vec(-1.0..1.0f64, 30),
        kappa in 0.0..3.0f64,
    ) {
        // a driver that stays positive, so truncation never engages
        let spec = ModelSpec {
            disp_fn: FunctionSpec::AffinePositive { a: 0.5, b: 0.2 },
            ..cir(FunctionSpec::MeanReverting { kappa, theta: 0.5 }, 0.5)
        };
        let grid = Grid::new(fdot.len(), 1.0).unwrap();
        let model = DiscreteModel::new(spec, grid).unwrap();
        let ctrl = ControlPath::new(grid, fdot.clone()).unwrap();
        let path = model.solve_control_ode(&ctrl).unwrap();
        let back = model.inverse_control(&PathValues::new(grid, path.v.clone()).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&back.fdot, &fdot) < 1e-9);
    }

    #[test]
    fn square_root_driver_stays_nonnegative(
        fdot in proptest::collection::vec(-20.0..20.0f64, 40),
        v0 in 0.001..0.2f64,
    ) {
        let spec = cir(FunctionSpec::Zero, v0);
        let grid = Grid::new(fdot.len(), 1.0).unwrap();
        let model = DiscreteModel::new(spec, grid).unwrap();
        let path = model.solve_control_ode(&ControlPath::new(grid, fdot).unwrap()).unwrap();
        prop_assert_eq!(path.v[0], v0);
        prop_assert_eq!(path.vhat[0], 0.0);
        prop_assert!(path.v.iter().all(|&v| v >= 0.0));
        prop_assert!(path.vhat.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn control_energy_is_nonnegative(fdot in proptest::collection::vec(-5.0..5.0f64, 1..50)) {
        let grid = Grid::new(fdot.len(), 2.0).unwrap();
        let ctrl = ControlPath::new(grid, fdot).unwrap();
        prop_assert!(ctrl.energy() >= 0.0);
        prop_assert_eq!(ctrl.values()[0], 0.0);
    }
}

#[test]
fn simulation_is_bit_reproducible() {
    let spec = cir(FunctionSpec::Zero, 0.04);
    let grid = Grid::new(64, 1.0).unwrap();
    let model = DiscreteModel::new(spec, grid).unwrap();
    let opts = SimulationOptions { full_paths: true };
    let a = model.simulate_batch(0.2, 500, 11, opts).unwrap();
    let b = model.simulate_batch(0.2, 500, 11, opts).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a, b);
    let c = model.simulate_batch(0.2, 500, 12, opts).unwrap();
    assert_ne!(a.terminal_logprice, c.terminal_logprice);
    // a path does not depend on how many others are drawn
    let d = model.simulate_batch(0.2, 50, 11, opts).unwrap();
    assert_eq!(a.terminal_logprice[..50], d.terminal_logprice[..]);
}

#[test]
fn simulated_driver_is_nonnegative() {
    let spec = cir(FunctionSpec::Zero, 0.04);
    let grid = Grid::new(64, 1.0).unwrap();
    let model = DiscreteModel::new(spec, grid).unwrap();
    let batch = model.simulate_batch(1.0, 2000, 3, SimulationOptions::default()).unwrap();
    assert!(batch.terminal_driver.iter().all(|&v| v >= 0.0));
    assert!(batch.terminal_vhat.iter().all(|&v| v >= 0.0));
    assert!(batch.terminal_logprice.iter().all(|v| v.is_finite()));
}

/// Driftless square-root diffusion: V^ε started at v₀ equals ε·V started at
/// v₀/ε under the same Brownian increments.
#[test]
fn driftless_cir_scales_pathwise_with_epsilon() {
    let grid = Grid::new(100, 1.0).unwrap();
    let v0 = 0.04;
    for eps in [0.5, 0.1, 0.02] {
        let small = DiscreteModel::new(cir(FunctionSpec::Zero, v0), grid).unwrap();
        let unit = DiscreteModel::new(cir(FunctionSpec::Zero, v0 / eps), grid).unwrap();
        let a = small.simulate_batch(eps, 2000, 5, SimulationOptions::default()).unwrap();
        let b = unit.simulate_batch(1.0, 2000, 5, SimulationOptions::default()).unwrap();
        for (x, y) in a.terminal_driver.iter().zip(&b.terminal_driver) {
            assert!((x - eps * y).abs() <= 1e-12 * (1.0 + x.abs()), "eps={eps}: {x} vs {}", eps * y);
        }
        for (x, y) in a.terminal_vhat.iter().zip(&b.terminal_vhat) {
            assert!((x - eps * y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}

/// For driftless CIR, Var V^ε_T = ε v₀ T exactly; check the ratio across ε.
#[test]
fn driver_variance_is_linear_in_epsilon() {
    let grid = Grid::new(50, 1.0).unwrap();
    let model = DiscreteModel::new(cir(FunctionSpec::Zero, 0.04), grid).unwrap();
    let n = 100_000;
    let var = |eps: f64| {
        let b = model.simulate_batch(eps, n, 21, SimulationOptions::default()).unwrap();
        let m = b.terminal_driver.iter().sum::<f64>() / n as f64;
        b.terminal_driver.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    for eps in [0.1, 0.01] {
        let v = var(eps);
        let exact = eps * 0.04;
        // sample variance of a near-Gaussian has relative sd √(2/n); truncation adds a little
        assert!((v / exact - 1.0).abs() < 0.03, "eps={eps}: {v} vs {exact}");
    }
}

#[test]
fn single_precision_model_runs() {
    let spec: ModelSpec<f32> = cir(FunctionSpec::Zero, 0.04).cast();
    let grid = Grid::<f32>::new(32, 1.0).unwrap();
    let model = volterra_ldp::DiscreteModel32::new(spec, grid).unwrap();
    let path = model.solve_control_ode(&ControlPath::constant(grid, 0.3)).unwrap();
    assert!(path.v.iter().all(|v| v.is_finite() && *v >= 0.0));
    let batch = model.simulate_batch(0.1, 100, 1, SimulationOptions::default()).unwrap();
    assert!(batch.terminal_logprice.iter().all(|v| v.is_finite()));
}
