//! Large-strike scaling for the shifted-power model and the small-`x`
//! Taylor expansion of the rate function for the square-transform model.

use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::DiscreteModel;
use crate::error::{Error, Result};
use crate::model::{FunctionSpec, SpecialCase};
use crate::rate::SolverOptions;
use crate::scalar::{lit, Scalar};

/// `γ = 1/(β + ½)`, defined for `β ∈ (0, ½)`.
pub fn strike_exponent<S: Scalar>(beta: S) -> Result<S> {
    let half = lit::<S>(0.5);
    if !(beta > S::zero() && beta < half) {
        return Err(Error::Domain(format!("beta must lie in (0, 1/2), got {beta}")));
    }
    Ok(S::one() / (beta + half))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrikeAsymptotics<S = f64> {
    pub beta: S,
    pub gamma: S,
    /// `I_T(1)`
    pub i1: S,
}

impl<S: Scalar> StrikeAsymptotics<S> {
    pub fn new(beta: S, i1: S) -> Result<Self> {
        Ok(StrikeAsymptotics {
            beta,
            gamma: strike_exponent(beta)?,
            i1,
        })
    }
}

/// Leading-order log-asymptote `exp(−I_T(1)·(log K)^γ)` of digital and
/// vanilla call prices, for `K > 1`.
pub fn call_price_asymptote<S: Scalar>(sa: &StrikeAsymptotics<S>, strike: S) -> Result<S> {
    if !(strike > S::one()) || !strike.is_finite() {
        return Err(Error::Domain(format!("strike must exceed 1, got {strike}")));
    }
    Ok((-sa.i1 * strike.ln().powf(sa.gamma)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow<S = f64> {
    pub c: S,
    pub rate: S,
    /// `c^γ I_T(1)`
    pub predicted: S,
    /// `|I(c) − c^γ I(1)| / (c^γ I(1))`
    pub deviation: S,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport<S = f64> {
    pub gamma: S,
    pub i1: S,
    pub rows: Vec<ScalingRow<S>>,
}

impl<S: Scalar> ScalingReport<S> {
    /// CSV with header `c,rate,predicted,deviation,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,rate,predicted,deviation,converged\n");
        for r in &self.rows {
            out.push_str(&format!("{:e},{:e},{:e},{:e},{}\n", r.c, r.rate, r.predicted, r.deviation, r.converged));
        }
        out
    }

    pub fn max_deviation(&self) -> S {
        self.rows.iter().fold(S::zero(), |m, r| m.max(r.deviation))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport<S = f64> {
    pub xs: Vec<S>,
    pub rates: Vec<S>,
    pub converged: bool,
    /// Fitted `q`, `r` in `I(x) ≈ q x² + r x³`.
    pub q: S,
    pub r: S,
    /// `1/(2σ₀²T)`
    pub q_reference: S,
    pub q_relative_error: S,
    pub residuals: Vec<S>,
    /// Smallest `|x|` used for the minimizer diagnostics.
    pub x_min: S,
    /// `max_t |f^x(t)/x − ρt/(σ₀T)|` at `x_min`.
    pub slope_max_abs_deviation: S,
    /// The above over `|ρ|/σ₀` (or `1/σ₀` when `ρ = 0`).
    pub slope_relative_deviation: S,
    /// `∫ḟ²/x²` of the minimizer at `x_min`.
    pub energy_ratio: S,
}

impl<S: Scalar> TaylorReport<S> {
    /// CSV with header `x,rate,quadratic_fit,cubic_fit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,rate,quadratic_fit,cubic_fit\n");
        for (&x, &i) in self.xs.iter().zip(&self.rates) {
            let quad = self.q_reference * x * x;
            let cubic = self.q * x * x + self.r * x * x * x;
            out.push_str(&format!("{x:e},{i:e},{quad:e},{cubic:e}\n"));
        }
        out
    }
}

/// Least squares for `y ≈ q x² + r x³`.
fn fit_quadratic_cubic<S: Scalar>(xs: &[S], ys: &[S]) -> Result<(S, S)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (S::zero(), S::zero(), S::zero(), S::zero(), S::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (p2, p3) = (x * x, x * x * x);
        a11 = a11 + p2 * p2;
        a12 = a12 + p2 * p3;
        a22 = a22 + p3 * p3;
        b1 = b1 + p2 * y;
        b2 = b2 + p3 * y;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > S::epsilon() * a11 * a22) {
        return Err(Error::Domain("need at least two distinct nonzero |x| with both signs or magnitudes".into()));
    }
    Ok(((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det))
}

impl<S: Scalar> DiscreteModel<S>
where
    StandardNormal: Distribution<S>,
{
    /// Compares `I_T(c)` with `c^γ I_T(1)` for each `c`.
    pub fn scaling_check(&self, cs: &[S], opts: &SolverOptions<S>) -> Result<ScalingReport<S>> {
        let beta = match (self.spec().special_case(), self.spec().sigma_fn) {
            (Some(SpecialCase::Section4), FunctionSpec::ShiftedPower { beta, .. }) => beta,
            _ => {
                return Err(Error::Domain(
                    "scaling check needs U = id, zero drift, square-root dispersion and shifted-power sigma".into(),
                ))
            }
        };
        let gamma = strike_exponent(beta)?;
        let i1 = self.minimize_scalar_rate(S::one(), opts)?;
        let mut rows = Vec::with_capacity(cs.len());
        for &c in cs {
            if !(c > S::zero()) {
                return Err(Error::Domain(format!("scaling levels must be positive, got {c}")));
            }
            let r = if c == S::one() {
                i1.clone()
            } else {
                self.minimize_scalar_rate(c, opts)?
            };
            let predicted = c.powf(gamma) * i1.value;
            rows.push(ScalingRow {
                c,
                rate: r.value,
                predicted,
                deviation: (r.value - predicted).abs() / predicted,
                converged: r.converged && i1.converged,
            });
        }
        Ok(ScalingReport { gamma, i1: i1.value, rows })
    }

    /// Fits `I(x) ≈ q x² + r x³` over small `xs` and compares `q` with
    /// `1/(2σ₀²T)`; checks the minimizer against `ρx t/(σ₀T)`.
    pub fn taylor_check(&self, xs: &[S], opts: &SolverOptions<S>) -> Result<TaylorReport<S>> {
        let spec = self.spec();
        if spec.special_case() != Some(SpecialCase::Section5) || spec.v0 != S::zero() {
            return Err(Error::Domain(
                "Taylor check needs U = x², zero drift, unit dispersion and v0 = 0".into(),
            ));
        }
        if xs.iter().any(|&x| x == S::zero() || !x.is_finite()) {
            return Err(Error::Domain("Taylor points must be finite and nonzero".into()));
        }
        let x_min = xs
            .iter()
            .copied()
            .min_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite"))
            .ok_or_else(|| Error::Domain("no Taylor points".into()))?;

        let results = xs
            .iter()
            .map(|&x| self.minimize_scalar_rate(x, opts))
            .collect::<Result<Vec<_>>>()?;
        let rates: Vec<S> = results.iter().map(|r| r.value).collect();
        let (q, r) = fit_quadratic_cubic(xs, &rates)?;
        let residuals = xs
            .iter()
            .zip(&rates)
            .map(|(&x, &i)| i - (q * x * x + r * x * x * x))
            .collect();

        let sigma0 = spec.sigma0();
        let horizon = spec.horizon;
        let q_reference = S::one() / (lit::<S>(2.0) * sigma0 * sigma0 * horizon);

        let small = &results[xs.iter().position(|&x| x == x_min).expect("x_min is in xs")];
        let f = small.minimizer.values();
        let grid = small.minimizer.grid;
        let slope = spec.rho / (sigma0 * horizon);
        let slope_max_abs_deviation = f
            .iter()
            .enumerate()
            .map(|(i, &fi)| (fi / x_min - slope * grid.point(i)).abs())
            .fold(S::zero(), S::max);
        let scale = if spec.rho == S::zero() {
            S::one() / sigma0
        } else {
            spec.rho.abs() / sigma0
        };

        Ok(TaylorReport {
            xs: xs.to_vec(),
            converged: results.iter().all(|r| r.converged),
            rates,
            q,
            r,
            q_reference,
            q_relative_error: (q - q_reference).abs() / q_reference,
            residuals,
            x_min,
            slope_max_abs_deviation,
            slope_relative_deviation: slope_max_abs_deviation / scale,
            energy_ratio: small.minimizer.energy() / (x_min * x_min),
        })
    }
}
