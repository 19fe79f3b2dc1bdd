//! Energy, variance and covariation functionals of a control, the
//! terminal and path-space rate objectives, and the terminal map Φ with
//! its m-point discretization Φ_m.
//!
//! Every time integral is a left-endpoint sum on the model grid:
//!
//! * `E = Δ Σ ḟ_i²`
//! * `F = Δ Σ σ(ǧ_i)²`
//! * `G = Δ Σ σ(ǧ_i) ḟ_i`
//!
//! with `ǧ = 𝒦(U∘Γ(f))` and `i = 0..n-1`.

use crate::dynamics::{ControlPath, DiscreteModel, Forward};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, PathValues};
use crate::scalar::{from_usize, lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValues<S = f64> {
    /// `∫ ḟ²`
    pub e: S,
    /// `∫ σ(ǧ)²`
    pub f: S,
    /// `∫ σ(ǧ) ḟ`
    pub g: S,
}

fn efg_from<S: Scalar>(dt: S, fdot: &[S], sigma: &[S]) -> FunctionalValues<S> {
    let e = dt * fdot.iter().map(|&d| d * d).sum::<S>();
    let f = dt * sigma.iter().map(|&s| s * s).sum::<S>();
    let g = dt * sigma.iter().zip(fdot).map(|(&s, &d)| s * d).sum::<S>();
    FunctionalValues { e, f, g }
}

// (x − ρG)² / (2ρ̄²F) + E/2
fn scalar_objective<S: Scalar>(rho: S, rho_bar: S, x: S, v: &FunctionalValues<S>) -> S {
    let half = lit::<S>(0.5);
    let r = x - rho * v.g;
    r * r / (lit::<S>(2.0) * rho_bar * rho_bar * v.f) + half * v.e
}

impl<S: Scalar> DiscreteModel<S> {
    fn controlled(&self, ctrl: &ControlPath<S>) -> Result<Forward<S>> {
        if ctrl.grid != *self.grid() {
            return Err(Error::Dimension("control lives on a different grid".into()));
        }
        self.forward(&ctrl.fdot)
    }

    pub fn compute_efg(&self, ctrl: &ControlPath<S>) -> Result<FunctionalValues<S>> {
        let fwd = self.controlled(ctrl)?;
        Ok(efg_from(self.grid().dt(), &ctrl.fdot, &fwd.sigma))
    }

    /// Terminal rate objective `(x − ρG)²/(2ρ̄²F) + E/2`.
    pub fn inner_objective(&self, ctrl: &ControlPath<S>, x: S) -> Result<S> {
        let fwd = self.controlled(ctrl)?;
        let v = efg_from(self.grid().dt(), &ctrl.fdot, &fwd.sigma);
        Ok(scalar_objective(self.spec().rho, self.spec().rho_bar(), x, &v))
    }

    /// Path rate objective
    /// `½ Δ Σ ((ġ_i − ρσ_iḟ_i)/(ρ̄σ_i))² + E/2` for a piecewise-linear `g`.
    pub fn path_rate_integrand(&self, ctrl: &ControlPath<S>, g: &PathValues<S>) -> Result<S> {
        let gdot = self.target_slopes(g)?;
        let fwd = self.controlled(ctrl)?;
        Ok(self.path_value(&ctrl.fdot, &gdot, &fwd.sigma))
    }

    pub(crate) fn target_slopes(&self, g: &PathValues<S>) -> Result<Vec<S>> {
        if g.grid != *self.grid() {
            return Err(Error::Dimension("target path lives on a different grid".into()));
        }
        if g.values[0] != S::zero() {
            return Err(Error::Domain(format!("target path must start at 0, got {}", g.values[0])));
        }
        Ok(g.increments_per_time())
    }

    fn path_value(&self, fdot: &[S], gdot: &[S], sigma: &[S]) -> S {
        let rho = self.spec().rho;
        let rb = self.spec().rho_bar();
        let half = lit::<S>(0.5);
        let dt = self.grid().dt();
        let misfit: S = gdot
            .iter()
            .zip(fdot)
            .zip(sigma)
            .map(|((&gd, &fd), &s)| {
                let d = (gd - rho * s * fd) / (rb * s);
                d * d
            })
            .sum();
        let energy = dt * fdot.iter().map(|&d| d * d).sum::<S>();
        half * dt * misfit + half * energy
    }

    /// Terminal objective and its gradient with respect to `ḟ`.
    pub(crate) fn scalar_objective_grad(&self, fdot: &[S], x: S) -> Result<(S, Vec<S>)> {
        let fwd = self.forward(fdot)?;
        let dt = self.grid().dt();
        let (rho, rb) = (self.spec().rho, self.spec().rho_bar());
        let v = efg_from(dt, fdot, &fwd.sigma);
        let value = scalar_objective(rho, rb, x, &v);

        let two = lit::<S>(2.0);
        let r = x - rho * v.g;
        let dj_dg = -rho * r / (rb * rb * v.f);
        let dj_df = -r * r / (two * rb * rb * v.f * v.f);

        let mut grad: Vec<S> = fdot
            .iter()
            .zip(&fwd.sigma)
            .map(|(&d, &s)| dt * d + dj_dg * dt * s)
            .collect();
        let dsigma: Vec<S> = fdot
            .iter()
            .zip(&fwd.sigma)
            .map(|(&d, &s)| dj_dg * dt * d + dj_df * two * dt * s)
            .collect();
        self.backward(fdot, &fwd, &dsigma, &mut grad);
        Ok((value, grad))
    }

    /// Path objective and its gradient with respect to `ḟ` and to `ġ`.
    pub(crate) fn path_objective_grad(&self, fdot: &[S], gdot: &[S]) -> Result<(S, Vec<S>, Vec<S>)> {
        let fwd = self.forward(fdot)?;
        let dt = self.grid().dt();
        let (rho, rb) = (self.spec().rho, self.spec().rho_bar());
        let value = self.path_value(fdot, gdot, &fwd.sigma);

        let n = fdot.len();
        let mut grad = Vec::with_capacity(n);
        let mut dsigma = Vec::with_capacity(n);
        let mut dgdot = Vec::with_capacity(n);
        for i in 0..n {
            let s = fwd.sigma[i];
            let d = gdot[i] - rho * s * fdot[i];
            let w = dt / (rb * rb * s * s);
            grad.push(dt * fdot[i] - w * rho * s * d);
            dsigma.push(-w * d * gdot[i] / s);
            dgdot.push(w * d);
        }
        self.backward(fdot, &fwd, &dsigma, &mut grad);
        Ok((value, grad, dgdot))
    }

    /// Terminal map `Φ(y, f) = ρ̄√F·y + ρG`, with `y` the standardized
    /// terminal value of the independent noise (rate `y²/2`).
    pub fn phi_functional(&self, y: S, ctrl: &ControlPath<S>) -> Result<S> {
        let v = self.compute_efg(ctrl)?;
        Ok(self.spec().rho_bar() * v.f.sqrt() * y + self.spec().rho * v.g)
    }

    /// Inverse of [`Self::phi_functional`] in `y`.
    pub fn phi_inverse(&self, x: S, ctrl: &ControlPath<S>) -> Result<S> {
        let v = self.compute_efg(ctrl)?;
        Ok((x - self.spec().rho * v.g) / (self.spec().rho_bar() * v.f.sqrt()))
    }
}

pub fn compute_efg<S: Scalar>(spec: &ModelSpec<S>, ctrl: &ControlPath<S>) -> Result<FunctionalValues<S>> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.compute_efg(ctrl)
}

pub fn inner_objective<S: Scalar>(spec: &ModelSpec<S>, ctrl: &ControlPath<S>, x: S) -> Result<S> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.inner_objective(ctrl, x)
}

pub fn path_rate_integrand<S: Scalar>(spec: &ModelSpec<S>, ctrl: &ControlPath<S>, g: &PathValues<S>) -> Result<S> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.path_rate_integrand(ctrl, g)
}

pub fn phi_functional<S: Scalar>(spec: &ModelSpec<S>, y: S, ctrl: &ControlPath<S>) -> Result<S> {
    DiscreteModel::new(spec.clone(), ctrl.grid)?.phi_functional(y, ctrl)
}

/// Path-space `Φ_m` at time `t`:
///
/// `ρ̄ Σ_k σ(l(t_k))(r(t_{k+1}) − r(t_k)) + ρ Σ_k σ(l(t_k))(h(t_{k+1}) − h(t_k))`
///
/// over the coarse cells `t_k = kT/m` below `Ξ(t) = (T/m)⌊mt/T⌋`, plus the
/// stub from `Ξ(t)` to `t`. `r`, `h`, `l` must share a grid whose step
/// count is a multiple of `m`; `r` and `h` are read piecewise linearly.
pub fn phi_m_functional<S: Scalar>(
    spec: &ModelSpec<S>,
    m: usize,
    r: &PathValues<S>,
    h: &PathValues<S>,
    l: &PathValues<S>,
    t: S,
) -> Result<S> {
    let grid = r.grid;
    if h.grid != grid || l.grid != grid {
        return Err(Error::Dimension("r, h and l must share a grid".into()));
    }
    let n = grid.n_steps();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Resolution(format!("{m} coarse cells do not divide {n} grid steps")));
    }
    let horizon = grid.horizon();
    if !(t >= S::zero() && t <= horizon) {
        return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    let stride = n / m;
    let coarse = horizon / from_usize(m);
    // ⌊mt/T⌋, guarded against rounding just below an integer
    let pos = t / coarse;
    let mut k_snap = (pos + lit(1e-9)).floor().to_usize().unwrap_or(0).min(m);
    if from_usize::<S>(k_snap) * coarse > t {
        k_snap = k_snap.saturating_sub(1);
    }

    let sigma = |k: usize| spec.sigma_fn.eval(l.values[k * stride]);
    let mut w_part = S::zero();
    let mut h_part = S::zero();
    for k in 0..k_snap {
        let s = sigma(k);
        w_part = w_part + s * (r.values[(k + 1) * stride] - r.values[k * stride]);
        h_part = h_part + s * (h.values[(k + 1) * stride] - h.values[k * stride]);
    }
    if k_snap < m {
        let s = sigma(k_snap);
        let snap = k_snap * stride;
        w_part = w_part + s * (r.interpolate(t) - r.values[snap]);
        h_part = h_part + s * (h.interpolate(t) - h.values[snap]);
    }
    Ok(spec.rho_bar() * w_part + spec.rho * h_part)
}
