//! The controlled driver ODE (solution map Γ), the check operator
//! `ǧ = 𝒦(U∘Γ(g))`, the inverse control map, and Monte Carlo simulation of
//! the scaled processes `V^ε`, `V̂^ε`, `X^ε`.
//!
//! All time stepping is explicit Euler at left endpoints. Dispersion
//! families defined through `x⁺` use full truncation: coefficients are
//! evaluated at `max(v, 0)` while the state itself is left untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{build_weights, KernelWeights};
use crate::model::{FunctionSpec, Grid, ModelSpec, PathValues};
use crate::scalar::{lit, Scalar};

/// A control `f ∈ H¹₀` given by its derivative, constant on each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath<S = f64> {
    pub grid: Grid<S>,
    pub fdot: Vec<S>,
}

impl<S: Scalar> ControlPath<S> {
    pub fn new(grid: Grid<S>, fdot: Vec<S>) -> Result<Self> {
        if fdot.len() != grid.n_steps() {
            return Err(Error::Dimension(format!(
                "control has {} cells, grid has {}",
                fdot.len(),
                grid.n_steps()
            )));
        }
        Ok(ControlPath { grid, fdot })
    }

    pub fn zero(grid: Grid<S>) -> Self {
        ControlPath {
            grid,
            fdot: vec![S::zero(); grid.n_steps()],
        }
    }

    pub fn constant(grid: Grid<S>, rate: S) -> Self {
        ControlPath {
            grid,
            fdot: vec![rate; grid.n_steps()],
        }
    }

    /// `f(t_i)`, with `f(0) = 0`.
    pub fn values(&self) -> Vec<S> {
        let dt = self.grid.dt();
        let mut out = Vec::with_capacity(self.fdot.len() + 1);
        let mut acc = S::zero();
        out.push(acc);
        for &d in &self.fdot {
            acc = acc + dt * d;
            out.push(acc);
        }
        out
    }

    /// `∫₀ᵀ ḟ² dt`
    pub fn energy(&self) -> S {
        self.grid.dt() * self.fdot.iter().map(|&d| d * d).sum::<S>()
    }
}

/// Driver values `v` and their kernel transform `v̂` at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath<S = f64> {
    pub grid: Grid<S>,
    pub v: Vec<S>,
    pub vhat: Vec<S>,
}

/// A model bound to a grid, with the kernel weights precomputed.
#[derive(Debug, Clone)]
pub struct DiscreteModel<S = f64> {
    spec: ModelSpec<S>,
    weights: KernelWeights<S>,
}

/// Forward sweep of the controlled driver, kept for the adjoint pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward<S> {
    pub v: Vec<S>,
    /// Transform at `t_0..t_{n-1}` (left endpoints).
    pub check: Vec<S>,
    /// `σ(ǧ_i)` for `i < n`.
    pub sigma: Vec<S>,
}

impl<S: Scalar> DiscreteModel<S> {
    pub fn new(spec: ModelSpec<S>, grid: Grid<S>) -> Result<Self> {
        let scale = spec.horizon.abs().max(S::one());
        if (grid.horizon() - spec.horizon).abs() > scale * lit(1e-12) {
            return Err(Error::Dimension(format!(
                "grid horizon {} differs from model horizon {}",
                grid.horizon(),
                spec.horizon
            )));
        }
        let weights = build_weights(&spec.kernel, &grid)?;
        Ok(DiscreteModel { spec, weights })
    }

    pub fn spec(&self) -> &ModelSpec<S> {
        &self.spec
    }

    pub fn grid(&self) -> &Grid<S> {
        self.weights.grid()
    }

    pub fn weights(&self) -> &KernelWeights<S> {
        &self.weights
    }

    fn clamp(&self, v: S) -> S {
        if self.spec.disp_fn.requires_nonnegative() {
            v.max(S::zero())
        } else {
            v
        }
    }

    fn check_control(&self, ctrl: &ControlPath<S>) -> Result<()> {
        if ctrl.grid != *self.grid() {
            return Err(Error::Dimension("control lives on a different grid".into()));
        }
        Ok(())
    }

    /// Driver path under the control (full-truncation Euler), returning the
    /// positive part of the state where the dispersion needs it, and the
    /// step-function inputs `U(v⁺_k)`.
    fn integrate_driver(&self, fdot: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let n = self.grid().n_steps();
        let dt = self.grid().dt();
        let s = &self.spec;
        let mut v = Vec::with_capacity(n + 1);
        let mut u = Vec::with_capacity(n);
        let mut cur = s.v0;
        v.push(cur);
        for (k, &fd) in fdot.iter().enumerate() {
            let p = self.clamp(cur);
            u.push(s.u_fn.eval(p));
            cur = cur + dt * s.drift_fn.eval(p) + dt * s.disp_fn.eval(p) * fd;
            if !cur.is_finite() {
                return Err(Error::Divergence {
                    index: k + 1,
                    what: "controlled driver".into(),
                });
            }
            v.push(self.clamp(cur));
        }
        Ok((v, u))
    }

    /// Solution map Γ followed by the kernel transform.
    pub fn solve_control_ode(&self, ctrl: &ControlPath<S>) -> Result<DriverPath<S>> {
        self.check_control(ctrl)?;
        let (v, u) = self.integrate_driver(&ctrl.fdot)?;
        let n = self.grid().n_steps();
        let vhat = (0..=n).map(|i| self.weights.apply_row(i, &u)).collect();
        Ok(DriverPath {
            grid: *self.grid(),
            v,
            vhat,
        })
    }

    /// `ǧ = 𝒦(U∘Γ(g))` at the grid points.
    pub fn check_operator(&self, ctrl: &ControlPath<S>) -> Result<PathValues<S>> {
        let d = self.solve_control_ode(ctrl)?;
        Ok(PathValues {
            grid: d.grid,
            values: d.vhat,
        })
    }

    /// Recovers the control that drives the driver along `phi2`:
    /// `ḟ_i = ((φ_{i+1} − φ_i)/Δ − b̄(φ_i)) / σ̄(φ_i)`.
    pub fn inverse_control(&self, phi2: &PathValues<S>) -> Result<ControlPath<S>> {
        if phi2.grid != *self.grid() {
            return Err(Error::Dimension("driver path lives on a different grid".into()));
        }
        let s = &self.spec;
        let tol = lit::<S>(1e-12) * s.v0.abs().max(S::one());
        if (phi2.values[0] - s.v0).abs() > tol {
            return Err(Error::Domain(format!(
                "driver path starts at {}, model has v0 = {}",
                phi2.values[0], s.v0
            )));
        }
        let dt = self.grid().dt();
        let mut fdot = Vec::with_capacity(self.grid().n_steps());
        for (i, w) in phi2.values.windows(2).enumerate() {
            let disp = s.disp_fn.eval(w[0]);
            if disp == S::zero() {
                return Err(Error::SingularControl { index: i });
            }
            fdot.push(((w[1] - w[0]) / dt - s.drift_fn.eval(w[0])) / disp);
        }
        Ok(ControlPath {
            grid: *self.grid(),
            fdot,
        })
    }

    pub(crate) fn forward(&self, fdot: &[S]) -> Result<Forward<S>> {
        let (v, u) = self.integrate_driver(fdot)?;
        let n = self.grid().n_steps();
        let check: Vec<S> = (0..n).map(|i| self.weights.apply_row(i, &u)).collect();
        let sigma = check.iter().map(|&g| self.spec.sigma_fn.eval(g)).collect();
        Ok(Forward { v, check, sigma })
    }

    /// Adds to `grad` the contribution of `∂J/∂σ_i` through
    /// `σ_i = σ(ǧ_i)`, `ǧ = W·U(v⁺)` and the Euler recursion.
    pub(crate) fn backward(&self, fdot: &[S], fwd: &Forward<S>, dsigma: &[S], grad: &mut [S]) {
        let n = self.grid().n_steps();
        let dt = self.grid().dt();
        let s = &self.spec;
        let clamping = s.disp_fn.requires_nonnegative();

        // ǧ_0 = 0 does not depend on the control
        let mut a = vec![S::zero(); n];
        for i in 1..n {
            a[i] = dsigma[i] * s.sigma_fn.deriv(fwd.check[i]);
        }
        let mut du = vec![S::zero(); n];
        self.weights.add_transpose_apply(&a, &mut du);

        let mut lambda = S::zero(); // ∂J/∂v_{k+1}
        for k in (0..n).rev() {
            let vk = fwd.v[k];
            let active = !clamping || vk > S::zero();
            let p = self.clamp(vk);
            grad[k] = grad[k] + lambda * dt * s.disp_fn.eval(p);
            if active {
                let slope = S::one() + dt * (s.drift_fn.deriv(p) + s.disp_fn.deriv(p) * fdot[k]);
                lambda = lambda * slope + du[k] * s.u_fn.deriv(p);
            } else {
                lambda = S::zero();
            }
        }
    }

    /// Simulates `n_paths` independent paths of the scaled model.
    ///
    /// Path `i` draws its Gaussian increments from its own ChaCha stream,
    /// so results do not depend on how paths are split across workers.
    pub fn simulate_batch(&self, epsilon: S, n_paths: usize, seed: u64, opts: SimulationOptions) -> Result<PathBatch<S>>
    where
        StandardNormal: Distribution<S>,
    {
        if !(epsilon >= S::zero()) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        if n_paths == 0 {
            return Err(Error::Domain("need at least one path".into()));
        }
        let n = self.grid().n_steps();
        let outcomes: Vec<PathOutcome<S>> = (0..n_paths)
            .into_par_iter()
            .map_init(
                || vec![S::zero(); n],
                |u, path| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(path as u64);
                    self.simulate_path(epsilon, &mut rng, u, opts.full_paths)
                },
            )
            .collect::<Result<_>>()?;

        let mut batch = PathBatch {
            epsilon,
            n_paths,
            terminal_logprice: Vec::with_capacity(n_paths),
            terminal_driver: Vec::with_capacity(n_paths),
            terminal_vhat: Vec::with_capacity(n_paths),
            paths: opts.full_paths.then(Vec::new),
        };
        for o in outcomes {
            batch.terminal_logprice.push(o.x_t);
            batch.terminal_driver.push(o.v_t);
            batch.terminal_vhat.push(o.vhat_t);
            if let (Some(all), Some(p)) = (batch.paths.as_mut(), o.path) {
                all.push(p);
            }
        }
        Ok(batch)
    }

    fn simulate_path(&self, eps: S, rng: &mut ChaCha8Rng, u: &mut [S], keep: bool) -> Result<PathOutcome<S>>
    where
        StandardNormal: Distribution<S>,
    {
        let s = &self.spec;
        let n = self.grid().n_steps();
        let dt = self.grid().dt();
        let sdt = dt.sqrt();
        let sqrt_eps = eps.sqrt();
        let half = lit::<S>(0.5);
        let (rho, rho_bar) = (s.rho, s.rho_bar());

        let mut path = keep.then(|| Vec::with_capacity(n + 1));
        let mut v = s.v0;
        let mut x = S::zero();
        if let Some(p) = path.as_mut() {
            p.push(x);
        }
        // a constant spot vol does not need the transform along the path
        let fixed_vol = match s.sigma_fn {
            FunctionSpec::Constant { value } => Some(value),
            _ => None,
        };
        for k in 0..n {
            let p = self.clamp(v);
            u[k] = s.u_fn.eval(p);
            let vol = match fixed_vol {
                Some(value) => value,
                None => s.sigma_fn.eval(self.weights.apply_row(k, &u[..k])),
            };
            let zb: S = StandardNormal.sample(rng);
            let zw: S = StandardNormal.sample(rng);
            let db = sdt * zb;
            let dw = sdt * zw;
            x = x - half * eps * vol * vol * dt + sqrt_eps * vol * (rho_bar * dw + rho * db);
            v = v + s.drift_fn.eval(p) * dt + sqrt_eps * s.disp_fn.eval(p) * db;
            if !v.is_finite() || !x.is_finite() {
                return Err(Error::Divergence {
                    index: k + 1,
                    what: "simulated path".into(),
                });
            }
            if let Some(p) = path.as_mut() {
                p.push(x);
            }
        }
        let vhat_t = self.weights.apply_row(n, u);
        Ok(PathOutcome {
            x_t: x,
            v_t: self.clamp(v),
            vhat_t,
            path,
        })
    }
}

struct PathOutcome<S> {
    x_t: S,
    v_t: S,
    vhat_t: S,
    path: Option<Vec<S>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationOptions {
    /// Keep the log-price at every grid point, not just at `T`.
    pub full_paths: bool,
}

/// Terminal values of a simulated batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch<S = f64> {
    pub epsilon: S,
    pub n_paths: usize,
    pub terminal_logprice: Vec<S>,
    pub terminal_driver: Vec<S>,
    pub terminal_vhat: Vec<S>,
    /// Log-price at all grid points per path, when requested.
    pub paths: Option<Vec<Vec<S>>>,
}

impl<S: Scalar> PathBatch<S> {
    /// CSV with header `path_id,x_T`, plus `x_<k>` columns for full paths.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,x_T");
        if let Some(first) = self.paths.as_ref().and_then(|p| p.first()) {
            for k in 0..first.len() {
                out.push_str(&format!(",x_{k}"));
            }
        }
        out.push('\n');
        for (i, x) in self.terminal_logprice.iter().enumerate() {
            out.push_str(&format!("{i},{x:e}"));
            if let Some(p) = self.paths.as_ref() {
                for y in &p[i] {
                    out.push_str(&format!(",{y:e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Convenience wrapper: builds the weights and runs the control ODE.
pub fn solve_control_ode<S: Scalar>(spec: &ModelSpec<S>, ctrl: &ControlPath<S>) -> Result<DriverPath<S>> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.solve_control_ode(ctrl)
}

pub fn check_operator<S: Scalar>(spec: &ModelSpec<S>, ctrl: &ControlPath<S>) -> Result<PathValues<S>> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.check_operator(ctrl)
}

pub fn inverse_control<S: Scalar>(spec: &ModelSpec<S>, phi2: &PathValues<S>) -> Result<ControlPath<S>> {
    DiscreteModel::new(spec.clone(), phi2.grid)?.inverse_control(phi2)
}

pub fn simulate_batch<S: Scalar>(
    spec: &ModelSpec<S>,
    grid: &Grid<S>,
    epsilon: S,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch<S>>
where
    StandardNormal: Distribution<S>,
{
    DiscreteModel::new(spec.clone(), *grid)?.simulate_batch(epsilon, n_paths, seed, SimulationOptions::default())
}
