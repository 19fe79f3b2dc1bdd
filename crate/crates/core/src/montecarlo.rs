//! Tail probabilities of `X_T^ε` by plain Monte Carlo, and the empirical
//! check of the LDP limit `ε log P(X_T^ε ≥ c) → −I_T(c)` along an ε-ladder.

use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{DiscreteModel, SimulationOptions};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Fewer paths than this are rejected by [`DiscreteModel::estimate_tail`].
pub const MIN_PATHS: usize = 1000;

/// Rows with at most this many hits are excluded from extrapolation.
pub const MIN_HITS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate<S = f64> {
    pub epsilon: S,
    pub threshold: S,
    pub n_paths: usize,
    pub hits: usize,
    pub p_hat: S,
    pub wilson_ci: (S, S),
    /// `ε log p̂`; `-∞` when there are no hits.
    pub eps_log_p: S,
    pub eps_log_ci: (S, S),
    pub no_hits: bool,
}

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval<S: Scalar>(hits: usize, n: usize, z: S) -> (S, S) {
    let nf = from_usize::<S>(n);
    let p = from_usize::<S>(hits) / nf;
    let z2 = z * z;
    let denom = S::one() + z2 / nf;
    let center = (p + z2 / (lit::<S>(2.0) * nf)) / denom;
    let half = z / denom * (p * (S::one() - p) / nf + z2 / (lit::<S>(4.0) * nf * nf)).sqrt();
    // the bounds are exact at 0 and n hits; avoid rounding residue there
    let lo = if hits == 0 { S::zero() } else { (center - half).max(S::zero()) };
    let hi = if hits == n { S::one() } else { (center + half).min(S::one()) };
    (lo, hi)
}

impl<S: Scalar> TailEstimate<S> {
    /// Tail estimate of `P(X ≥ c)` from a sample of terminal values.
    pub fn from_sample(epsilon: S, threshold: S, sample: &[S]) -> Self {
        let n = sample.len();
        let hits = sample.iter().filter(|&&x| x >= threshold).count();
        let p_hat = from_usize::<S>(hits) / from_usize(n);
        let (lo, hi) = wilson_interval(hits, n, lit(Z95));
        let eps_log = |p: S| if p > S::zero() { epsilon * p.ln() } else { S::neg_infinity() };
        TailEstimate {
            epsilon,
            threshold,
            n_paths: n,
            hits,
            p_hat,
            wilson_ci: (lo, hi),
            eps_log_p: eps_log(p_hat),
            eps_log_ci: (eps_log(lo), eps_log(hi)),
            no_hits: hits == 0,
        }
    }
}

/// Least-squares polynomial fit `y ≈ Σ_k c_k x^k`, `k ≤ degree`.
fn polyfit<S: Scalar>(x: &[S], y: &[S], degree: usize) -> Option<Vec<S>> {
    let m = degree + 1;
    if x.len() < m {
        return None;
    }
    let mut a = vec![vec![S::zero(); m + 1]; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let pows: Vec<S> = (0..m).map(|k| xi.powi(k as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] = a[r][c] + pows[r] * pows[c];
            }
            a[r][m] = a[r][m] + pows[r] * yi;
        }
    }
    // Gaussian elimination with partial pivoting on the normal equations
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))?;
        if a[piv][col] == S::zero() {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(r);
            for (dst, &src) in bottom[0][col..=m].iter_mut().zip(&top[col][col..=m]) {
                *dst = *dst - f * src;
            }
        }
    }
    let mut coef = vec![S::zero(); m];
    for r in (0..m).rev() {
        let tail: S = (r + 1..m).map(|c| a[r][c] * coef[c]).sum();
        coef[r] = (a[r][m] - tail) / a[r][r];
    }
    Some(coef)
}

/// One extrapolation of `ε log p̂` to `ε = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpFit<S = f64> {
    /// Polynomial coefficients in `ε`, constant term first.
    pub coefficients: Vec<S>,
    /// Observed minus fitted, per valid row.
    pub residuals: Vec<S>,
}

impl<S: Scalar> LdpFit<S> {
    pub fn intercept(&self) -> S {
        self.coefficients[0]
    }

    fn fit(eps: &[S], y: &[S], degree: usize) -> Option<Self> {
        let coefficients = polyfit(eps, y, degree)?;
        let residuals = eps
            .iter()
            .zip(y)
            .map(|(&e, &yi)| {
                let fitted: S = coefficients.iter().enumerate().map(|(k, &c)| c * e.powi(k as i32)).sum();
                yi - fitted
            })
            .collect();
        Some(LdpFit { coefficients, residuals })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpSummary<S = f64> {
    /// `ε log p̂ ≈ a + bε`
    pub linear: LdpFit<S>,
    /// `ε log p̂ − (ε/2) log ε ≈ a + bε`
    pub corrected: LdpFit<S>,
    /// `ε log p̂ − (ε/2) log ε ≈ a + bε + cε²`, with at least four valid rows.
    pub corrected_quadratic: Option<LdpFit<S>>,
    /// The extrapolated limit: the quadratic corrected fit when available,
    /// otherwise the linear corrected fit.
    pub intercept: S,
    /// `−I_T(c)` supplied by the caller.
    pub reference: Option<S>,
    /// `|intercept − reference| / |reference|`
    pub relative_error: Option<S>,
    /// `ε log p̂` strictly increases as ε decreases along the valid rows.
    pub increasing_as_eps_decreases: bool,
    /// The distance `|ε log p̂ − reference|` strictly shrinks along the valid rows.
    pub gap_shrinking: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpRow<S = f64> {
    pub estimate: TailEstimate<S>,
    /// More than [`MIN_HITS`] hits, so the row enters the fits.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpStudy<S = f64> {
    pub threshold: S,
    pub rows: Vec<LdpRow<S>>,
    /// Withheld when fewer than two rows are valid.
    pub summary: Option<LdpSummary<S>>,
}

impl<S: Scalar> LdpStudy<S> {
    /// CSV with header
    /// `epsilon,n_paths,hits,p_hat,ci_lo,ci_hi,eps_log_p,eps_log_lo,eps_log_hi,valid`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,n_paths,hits,p_hat,ci_lo,ci_hi,eps_log_p,eps_log_lo,eps_log_hi,valid\n");
        for r in &self.rows {
            let e = &r.estimate;
            out.push_str(&format!(
                "{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                e.epsilon,
                e.n_paths,
                e.hits,
                e.p_hat,
                e.wilson_ci.0,
                e.wilson_ci.1,
                e.eps_log_p,
                e.eps_log_ci.0,
                e.eps_log_ci.1,
                r.valid
            ));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        match &self.summary {
            None => "summary withheld: fewer than two rows with enough tail hits".into(),
            Some(s) => {
                let mut line = format!(
                    "intercept {:.6} (linear {:.6}, corrected {:.6})",
                    s.intercept,
                    s.linear.intercept(),
                    s.corrected.intercept()
                );
                if let (Some(r), Some(e)) = (s.reference, s.relative_error) {
                    line.push_str(&format!(" vs reference {r:.6}, relative error {e:.4}"));
                }
                line
            }
        }
    }
}

fn summarize<S: Scalar>(rows: &[LdpRow<S>], reference: Option<S>) -> Option<LdpSummary<S>> {
    let valid: Vec<&TailEstimate<S>> = rows.iter().filter(|r| r.valid).map(|r| &r.estimate).collect();
    if valid.len() < 2 {
        return None;
    }
    let eps: Vec<S> = valid.iter().map(|e| e.epsilon).collect();
    let y: Vec<S> = valid.iter().map(|e| e.eps_log_p).collect();
    let half = lit::<S>(0.5);
    let y_corr: Vec<S> = eps.iter().zip(&y).map(|(&e, &v)| v - half * e * e.ln()).collect();
    let linear = LdpFit::fit(&eps, &y, 1)?;
    let corrected = LdpFit::fit(&eps, &y_corr, 1)?;
    let corrected_quadratic = if valid.len() >= 4 {
        LdpFit::fit(&eps, &y_corr, 2)
    } else {
        None
    };
    let intercept = corrected_quadratic
        .as_ref()
        .map(|f| f.intercept())
        .unwrap_or(corrected.intercept());
    // rows are ordered by decreasing ε
    let increasing_as_eps_decreases = y.windows(2).all(|w| w[1] > w[0]);
    let gap_shrinking = reference.map(|r| y.windows(2).all(|w| (w[1] - r).abs() < (w[0] - r).abs()));
    Some(LdpSummary {
        linear,
        corrected,
        corrected_quadratic,
        intercept,
        reference,
        relative_error: reference.map(|r| (intercept - r).abs() / r.abs()),
        increasing_as_eps_decreases,
        gap_shrinking,
    })
}

impl<S: Scalar> DiscreteModel<S>
where
    StandardNormal: Distribution<S>,
{
    /// `P(X_T^ε ≥ c)` from `n_paths` simulated paths.
    pub fn estimate_tail(&self, epsilon: S, threshold: S, n_paths: usize, seed: u64) -> Result<TailEstimate<S>> {
        let mut v = self.estimate_tails(epsilon, &[threshold], n_paths, seed)?;
        Ok(v.remove(0))
    }

    /// Tail estimates at several thresholds from one shared sample.
    pub fn estimate_tails(&self, epsilon: S, thresholds: &[S], n_paths: usize, seed: u64) -> Result<Vec<TailEstimate<S>>> {
        if n_paths < MIN_PATHS {
            return Err(Error::Domain(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
        }
        if !(epsilon > S::zero()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        let batch = self.simulate_batch(epsilon, n_paths, seed, SimulationOptions::default())?;
        Ok(thresholds
            .iter()
            .map(|&c| TailEstimate::from_sample(epsilon, c, &batch.terminal_logprice))
            .collect())
    }

    /// Tail estimates along a strictly decreasing ε-ladder, all with the
    /// same seed, plus extrapolations of `ε log p̂` to `ε = 0`.
    ///
    /// `reference` is the value the limit is compared with, normally
    /// `−I_T(c)` from the rate solver.
    pub fn ldp_convergence_study(
        &self,
        threshold: S,
        ladder: &[S],
        n_paths: usize,
        seed: u64,
        reference: Option<S>,
    ) -> Result<LdpStudy<S>> {
        if ladder.is_empty() {
            return Err(Error::Domain("empty epsilon ladder".into()));
        }
        if !ladder.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::Domain("epsilon ladder must be strictly decreasing".into()));
        }
        let rows: Vec<LdpRow<S>> = ladder
            .iter()
            .map(|&eps| {
                self.estimate_tail(eps, threshold, n_paths, seed).map(|estimate| LdpRow {
                    valid: estimate.hits > MIN_HITS,
                    estimate,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LdpStudy {
            threshold,
            summary: summarize(&rows, reference),
            rows,
        })
    }
}
