//! Rate functions by discretize-then-optimize.
//!
//! The control `ḟ` is optimized in the scaled coordinates `z = √Δ·ḟ`, in
//! which the Euclidean norm of the gradient equals the `L²` norm of the
//! function-space gradient. Each start runs L-BFGS independently; the best
//! final value wins, ties going to the earlier start, so adding starts can
//! only lower the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{ControlPath, DiscreteModel};
use crate::error::{Error, Result};
use crate::model::PathValues;
use crate::optimize::{lbfgs, LbfgsOptions, LbfgsReport};
use crate::scalar::{from_usize, lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Reverse sweep through σ, the kernel and the Euler recursion.
    Adjoint,
    /// Central differences with step `1e-6·(1 + ‖ḟ‖∞)`.
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<S = f64> {
    pub gtol: S,
    pub ftol: S,
    pub max_iter: usize,
    pub memory: usize,
    /// Random perturbations of the analytic start, on top of the fixed starts.
    pub extra_starts: usize,
    pub seed: u64,
    pub gradient: GradientMode,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        let l = LbfgsOptions::<S>::default();
        SolverOptions {
            gtol: l.gtol,
            ftol: l.ftol,
            max_iter: l.max_iter,
            memory: l.memory,
            extra_starts: 2,
            seed: 1,
            gradient: GradientMode::Adjoint,
        }
    }
}

impl<S: Scalar> SolverOptions<S> {
    fn lbfgs(&self) -> LbfgsOptions<S> {
        LbfgsOptions {
            gtol: self.gtol,
            ftol: self.ftol,
            max_iter: self.max_iter,
            memory: self.memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateTarget<S = f64> {
    /// Terminal log-price level `x`.
    Terminal(S),
    /// Log-price path `g`.
    Path(PathValues<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult<S = f64> {
    pub target: RateTarget<S>,
    pub value: S,
    pub minimizer: ControlPath<S>,
    pub n_starts: usize,
    pub converged: bool,
    pub gradient_norm: S,
    /// Objective per accepted step of the winning start.
    pub objective_history: Vec<S>,
    /// Final value of every start, in start order (`+∞` for failed starts).
    pub start_values: Vec<S>,
    /// The controlled driver reaches 0 where the dispersion is clamped.
    pub touches_zero: bool,
}

/// Joint minimizer of the path rate over targets pinned at `g(T) = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedPathResult<S = f64> {
    pub x: S,
    pub value: S,
    pub control: ControlPath<S>,
    pub path: PathValues<S>,
    pub converged: bool,
    pub gradient_norm: S,
}

/// `σ(ǧ⁰(T))`: the spot vol at maturity along the zero control.
fn reference_vol<S: Scalar>(model: &DiscreteModel<S>) -> Result<S> {
    let chk = model.check_operator(&ControlPath::zero(*model.grid()))?;
    let v = model.spec().sigma_fn.eval(*chk.values.last().expect("grid has points"));
    Ok(v)
}

/// Fixed starts followed by seeded perturbations of the analytic one.
fn start_controls<S: Scalar>(n: usize, anchor: &[S], spread: S, extra: usize, seed: u64) -> Vec<Vec<S>>
where
    StandardNormal: Distribution<S>,
{
    let scaled = |c: S| anchor.iter().map(|&a| a * c).collect::<Vec<S>>();
    let mut out = vec![
        vec![S::zero(); n],
        anchor.to_vec(),
        scaled(lit(0.5)),
        scaled(lit(2.0)),
        vec![spread; n],
        vec![-spread; n],
    ];
    let amp = spread.max(lit(0.1)) * lit(0.5);
    for k in 0..extra {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let p = anchor
            .iter()
            .map(|&a| {
                let z: S = StandardNormal.sample(&mut rng);
                a + amp * z
            })
            .collect();
        out.push(p);
    }
    out.dedup();
    out
}

fn to_z<S: Scalar>(fdot: &[S], sd: S) -> Vec<S> {
    fdot.iter().map(|&d| d * sd).collect()
}

fn from_z<S: Scalar>(z: &[S], sd: S) -> Vec<S> {
    z.iter().map(|&d| d / sd).collect()
}

fn central_difference<S: Scalar>(f: impl Fn(&[S]) -> Result<S>, fdot: &[S]) -> Result<Vec<S>> {
    let sup = fdot.iter().fold(S::zero(), |m, &d| m.max(d.abs()));
    let h = lit::<S>(1e-6) * (S::one() + sup);
    let mut probe = fdot.to_vec();
    let mut grad = Vec::with_capacity(fdot.len());
    for k in 0..fdot.len() {
        probe[k] = fdot[k] + h;
        let up = f(&probe)?;
        probe[k] = fdot[k] - h;
        let dn = f(&probe)?;
        probe[k] = fdot[k];
        grad.push((up - dn) / (h + h));
    }
    Ok(grad)
}

fn best_of<S: Scalar>(runs: Vec<Result<LbfgsReport<S>>>) -> Result<(LbfgsReport<S>, Vec<S>)> {
    let values: Vec<S> = runs
        .iter()
        .map(|r| r.as_ref().map(|r| r.value).unwrap_or(S::infinity()))
        .collect();
    let mut best: Option<LbfgsReport<S>> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.value < b.value) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok((b, values)),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Domain("no starting controls".into())),
    }
}

impl<S: Scalar> DiscreteModel<S>
where
    StandardNormal: Distribution<S>,
{
    fn touches_zero(&self, fdot: &[S]) -> Result<bool> {
        if !self.spec().disp_fn.requires_nonnegative() {
            return Ok(false);
        }
        let fwd = self.forward(fdot)?;
        Ok(fwd.v.iter().any(|&v| v <= S::zero()))
    }

    fn check_rho(&self) -> Result<()> {
        let rho = self.spec().rho;
        if !(rho.abs() < S::one()) {
            return Err(Error::Domain(format!("correlation must lie in (-1, 1), got {rho}")));
        }
        Ok(())
    }

    /// Runs every start of a control-only objective and keeps the best.
    fn multi_start<F>(&self, target: RateTarget<S>, starts: Vec<Vec<S>>, opts: &SolverOptions<S>, eval: F) -> Result<RateResult<S>>
    where
        F: Fn(&[S]) -> Result<(S, Vec<S>)> + Sync,
    {
        let sd = self.grid().dt().sqrt();
        let lopts = opts.lbfgs();
        let n_starts = starts.len();
        let runs: Vec<Result<LbfgsReport<S>>> = starts
            .into_par_iter()
            .map(|f0| {
                let obj = |z: &[S]| {
                    let fdot = from_z(z, sd);
                    let (v, g) = eval(&fdot)?;
                    Ok((v, g.into_iter().map(|d| d / sd).collect()))
                };
                lbfgs(obj, to_z(&f0, sd), &lopts)
            })
            .collect();
        let (best, start_values) = best_of(runs)?;
        let fdot = from_z(&best.x, sd);
        Ok(RateResult {
            target,
            value: best.value,
            touches_zero: self.touches_zero(&fdot)?,
            minimizer: ControlPath::new(*self.grid(), fdot)?,
            n_starts,
            converged: best.converged,
            gradient_norm: best.grad_norm,
            objective_history: best.history,
            start_values,
        })
    }

    fn scalar_eval(&self, x: S, mode: GradientMode) -> impl Fn(&[S]) -> Result<(S, Vec<S>)> + Sync + '_ {
        move |fdot: &[S]| match mode {
            GradientMode::Adjoint => self.scalar_objective_grad(fdot, x),
            GradientMode::CentralDifference => {
                let value = |f: &[S]| self.scalar_objective_grad_free(f, x);
                Ok((value(fdot)?, central_difference(value, fdot)?))
            }
        }
    }

    fn scalar_objective_grad_free(&self, fdot: &[S], x: S) -> Result<S> {
        let ctrl = ControlPath::new(*self.grid(), fdot.to_vec())?;
        self.inner_objective(&ctrl, x)
    }

    fn scalar_starts(&self, x: S, opts: &SolverOptions<S>) -> Result<Vec<Vec<S>>> {
        let n = self.grid().n_steps();
        let horizon = self.grid().horizon();
        let vol = reference_vol(self)?;
        let anchor = vec![self.spec().rho * x / (vol * horizon); n];
        let spread = x.abs() / (vol * horizon);
        Ok(start_controls(n, &anchor, spread, opts.extra_starts, opts.seed))
    }

    /// `I_T(x) = inf_f (x − ρG)²/(2ρ̄²F) + E/2`.
    pub fn minimize_scalar_rate(&self, x: S, opts: &SolverOptions<S>) -> Result<RateResult<S>> {
        self.minimize_scalar_rate_with(x, opts, &[])
    }

    /// As [`Self::minimize_scalar_rate`], with additional starting controls
    /// tried after the standard ones.
    pub fn minimize_scalar_rate_with(&self, x: S, opts: &SolverOptions<S>, warm: &[Vec<S>]) -> Result<RateResult<S>> {
        self.check_rho()?;
        if !x.is_finite() {
            return Err(Error::Domain(format!("target must be finite, got {x}")));
        }
        let mut starts = self.scalar_starts(x, opts)?;
        for w in warm {
            if w.len() != self.grid().n_steps() {
                return Err(Error::Dimension("warm start has the wrong length".into()));
            }
            starts.push(w.clone());
        }
        self.multi_start(RateTarget::Terminal(x), starts, opts, self.scalar_eval(x, opts.gradient))
    }

    /// `Q(g) = inf_f ½∫((ġ − ρσḟ)/(ρ̄σ))² + ½∫ḟ²`.
    pub fn minimize_path_rate(&self, g: &PathValues<S>, opts: &SolverOptions<S>) -> Result<RateResult<S>> {
        self.check_rho()?;
        let gdot = self.target_slopes(g)?;
        let n = self.grid().n_steps();
        let vol = reference_vol(self)?;
        let anchor: Vec<S> = gdot.iter().map(|&d| self.spec().rho * d / vol).collect();
        let mean_abs = gdot.iter().map(|d| d.abs()).sum::<S>() / from_usize(n);
        let starts = start_controls(n, &anchor, mean_abs / vol, opts.extra_starts, opts.seed);
        let mode = opts.gradient;
        let eval = |fdot: &[S]| -> Result<(S, Vec<S>)> {
            match mode {
                GradientMode::Adjoint => {
                    let (v, gf, _) = self.path_objective_grad(fdot, &gdot)?;
                    Ok((v, gf))
                }
                GradientMode::CentralDifference => {
                    let value = |f: &[S]| self.path_objective_grad(f, &gdot).map(|r| r.0);
                    Ok((value(fdot)?, central_difference(value, fdot)?))
                }
            }
        };
        self.multi_start(RateTarget::Path(g.clone()), starts, opts, eval)
    }

    /// Minimizes `Q(g)` jointly over the control and over piecewise-linear
    /// paths `g` with `g(0) = 0`, `g(T) = x`.
    ///
    /// Slopes are `ġ_i = x/T + (w_i − w̄)/√Δ`, which keeps the endpoint
    /// pinned for every `w`.
    pub fn minimize_pinned_path_rate(&self, x: S, opts: &SolverOptions<S>) -> Result<PinnedPathResult<S>> {
        self.check_rho()?;
        let n = self.grid().n_steps();
        let nf = from_usize::<S>(n);
        let sd = self.grid().dt().sqrt();
        let level = x / self.grid().horizon();
        let slopes = |w: &[S]| {
            let mean = w.iter().copied().sum::<S>() / nf;
            w.iter().map(|&wi| level + (wi - mean) / sd).collect::<Vec<S>>()
        };
        let obj = |vars: &[S]| -> Result<(S, Vec<S>)> {
            let (zf, w) = vars.split_at(n);
            let fdot = from_z(zf, sd);
            let gdot = slopes(w);
            let (v, gf, gg) = self.path_objective_grad(&fdot, &gdot)?;
            let gmean = gg.iter().copied().sum::<S>() / nf;
            let mut grad: Vec<S> = gf.into_iter().map(|d| d / sd).collect();
            grad.extend(gg.iter().map(|&d| (d - gmean) / sd));
            Ok((v, grad))
        };
        let lopts = opts.lbfgs();
        let runs: Vec<Result<LbfgsReport<S>>> = self
            .scalar_starts(x, opts)?
            .into_par_iter()
            .map(|f0| {
                let mut vars = to_z(&f0, sd);
                vars.resize(2 * n, S::zero());
                lbfgs(obj, vars, &lopts)
            })
            .collect();
        let (best, _) = best_of(runs)?;
        let (zf, w) = best.x.split_at(n);
        let gdot = slopes(w);
        let dt = self.grid().dt();
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = S::zero();
        values.push(acc);
        for d in &gdot {
            acc = acc + dt * *d;
            values.push(acc);
        }
        Ok(PinnedPathResult {
            x,
            value: best.value,
            control: ControlPath::new(*self.grid(), from_z(zf, sd))?,
            path: PathValues::new(*self.grid(), values)?,
            converged: best.converged,
            gradient_norm: best.grad_norm,
        })
    }

    /// `I_T` over `xs` in the given order, each warm-started from the
    /// previous minimizer.
    pub fn rate_profile(&self, xs: &[S], opts: &SolverOptions<S>) -> Result<RateProfile<S>> {
        let mut results: Vec<RateResult<S>> = Vec::with_capacity(xs.len());
        for &x in xs {
            let warm: Vec<Vec<S>> = results.last().map(|r| vec![r.minimizer.fdot.clone()]).unwrap_or_default();
            results.push(self.minimize_scalar_rate_with(x, opts, &warm)?);
        }
        Ok(RateProfile::new(results))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile<S = f64> {
    pub rows: Vec<(S, RateResult<S>)>,
    /// Values are nondecreasing in `|x|` on each side of 0.
    pub monotone_in_abs: bool,
    pub all_converged: bool,
}

impl<S: Scalar> RateProfile<S> {
    fn new(results: Vec<RateResult<S>>) -> Self {
        let rows: Vec<(S, RateResult<S>)> = results
            .into_iter()
            .map(|r| match r.target {
                RateTarget::Terminal(x) => (x, r),
                RateTarget::Path(_) => unreachable!("profiles hold terminal targets"),
            })
            .collect();
        let side = |positive: bool| {
            let mut pts: Vec<(S, S)> = rows
                .iter()
                .filter(|(x, _)| if positive { *x >= S::zero() } else { *x <= S::zero() })
                .map(|(x, r)| (x.abs(), r.value))
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite targets"));
            pts.windows(2).all(|w| w[1].1 >= w[0].1 * (S::one() - lit(1e-9)))
        };
        RateProfile {
            monotone_in_abs: side(true) && side(false),
            all_converged: rows.iter().all(|(_, r)| r.converged),
            rows,
        }
    }

    /// CSV with header `x,rate,converged,gradient_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,rate,converged,gradient_norm\n");
        for (x, r) in &self.rows {
            out.push_str(&format!("{x:e},{:e},{},{:e}\n", r.value, r.converged, r.gradient_norm));
        }
        out
    }
}

impl<S: Scalar> RateResult<S> {
    /// CSV with header `t,fdot`; `t` is the left end of each cell.
    pub fn minimizer_csv(&self) -> String {
        let g = self.minimizer.grid;
        let mut out = String::from("t,fdot\n");
        for (i, d) in self.minimizer.fdot.iter().enumerate() {
            out.push_str(&format!("{:e},{d:e}\n", g.point(i)));
        }
        out
    }
}

pub fn minimize_scalar_rate<S: Scalar>(
    spec: &crate::model::ModelSpec<S>,
    grid: &crate::model::Grid<S>,
    x: S,
    opts: &SolverOptions<S>,
) -> Result<RateResult<S>>
where
    StandardNormal: Distribution<S>,
{
    DiscreteModel::new(spec.clone(), *grid)?.minimize_scalar_rate(x, opts)
}

pub fn minimize_path_rate<S: Scalar>(
    spec: &crate::model::ModelSpec<S>,
    g: &PathValues<S>,
    opts: &SolverOptions<S>,
) -> Result<RateResult<S>>
where
    StandardNormal: Distribution<S>,
{
    DiscreteModel::new(spec.clone(), g.grid)?.minimize_path_rate(g, opts)
}

pub fn rate_profile<S: Scalar>(
    spec: &crate::model::ModelSpec<S>,
    grid: &crate::model::Grid<S>,
    xs: &[S],
    opts: &SolverOptions<S>,
) -> Result<RateProfile<S>>
where
    StandardNormal: Distribution<S>,
{
    DiscreteModel::new(spec.clone(), *grid)?.rate_profile(xs, opts)
}
