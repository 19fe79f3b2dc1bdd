//! Volterra kernels, their L² diagnostics, and the integral operator as a
//! precomputed lower-triangular weight matrix.
//!
//! Integrands are piecewise constant on the grid (left-endpoint values), so
//! each matrix entry is the exact integral of the kernel over one cell:
//!
//! ```text
//! W[i][j] = ∫_{t_j}^{t_{j+1}} K(t_i, s) ds,   j < i
//! ```
//!
//! Power kernels use their antiderivative, which removes the `s → t`
//! singularity for `H < ½` from the numerics entirely.

use crate::error::{Error, Result};
use crate::model::{Grid, PathValues};
use crate::scalar::{from_usize, gamma, gauss_legendre, lit, Scalar};

/// Gauss–Legendre order per cell for smooth kernels.
const CELL_QUADRATURE_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec<S = f64> {
    /// `(t − s)^{H−½} / Γ(H + ½)`
    Fractional { hurst: S },
    /// `(t − s + δ)^{H−½} / Γ(H + ½)`
    ShiftedFractional { hurst: S, shift: S },
    /// `exp(−λ (t − s))`
    Exponential { decay: S },
    /// `level`
    Constant { level: S },
}

impl<S: Scalar> KernelSpec<S> {
    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Fractional { .. } => "fractional",
            KernelSpec::ShiftedFractional { .. } => "shifted-fractional",
            KernelSpec::Exponential { .. } => "exponential",
            KernelSpec::Constant { .. } => "constant",
        }
    }

    pub fn check_params(&self) -> Result<()> {
        let open_unit = |h: S| h > S::zero() && h < S::one();
        match *self {
            KernelSpec::Fractional { hurst } if !open_unit(hurst) => {
                Err(Error::Config(format!("Hurst parameter {hurst} outside (0, 1)")))
            }
            KernelSpec::ShiftedFractional { hurst, .. } if !open_unit(hurst) => {
                Err(Error::Config(format!("Hurst parameter {hurst} outside (0, 1)")))
            }
            KernelSpec::ShiftedFractional { shift, .. } if !(shift > S::zero()) => {
                Err(Error::Config(format!("kernel shift {shift} must be positive")))
            }
            KernelSpec::Exponential { decay } if !decay.is_finite() => {
                Err(Error::Config("kernel decay must be finite".into()))
            }
            KernelSpec::Constant { level } if !level.is_finite() => {
                Err(Error::Config("kernel level must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// `sup_t ∫₀ᵀ K(t, s)² ds` in closed form.
    pub fn l2_sup(&self, horizon: S) -> Result<S> {
        self.check_params()?;
        let two = lit::<S>(2.0);
        Ok(match *self {
            KernelSpec::Fractional { hurst } => {
                let g = gamma(hurst + lit(0.5));
                horizon.powf(two * hurst) / (two * hurst * g * g)
            }
            KernelSpec::ShiftedFractional { hurst, shift } => {
                let g = gamma(hurst + lit(0.5));
                ((horizon + shift).powf(two * hurst) - shift.powf(two * hurst)) / (two * hurst * g * g)
            }
            KernelSpec::Exponential { decay } => {
                if decay == S::zero() {
                    horizon
                } else {
                    (S::one() - (-two * decay * horizon).exp()) / (two * decay)
                }
            }
            KernelSpec::Constant { level } => level * level * horizon,
        })
    }

    pub fn cast<T: Scalar>(&self) -> KernelSpec<T> {
        let c = |x: S| lit::<T>(crate::scalar::to_f64(x));
        match *self {
            KernelSpec::Fractional { hurst } => KernelSpec::Fractional { hurst: c(hurst) },
            KernelSpec::ShiftedFractional { hurst, shift } => KernelSpec::ShiftedFractional {
                hurst: c(hurst),
                shift: c(shift),
            },
            KernelSpec::Exponential { decay } => KernelSpec::Exponential { decay: c(decay) },
            KernelSpec::Constant { level } => KernelSpec::Constant { level: c(level) },
        }
    }
}

/// Pointwise kernel value. Zero for `s > t`; `+∞` on the diagonal of a
/// fractional kernel with `H < ½`.
pub fn kernel_eval<S: Scalar>(spec: &KernelSpec<S>, t: S, s: S) -> S {
    if s > t {
        return S::zero();
    }
    let lag = t - s;
    match *spec {
        KernelSpec::Fractional { hurst } => {
            let a = hurst + lit(0.5);
            if lag == S::zero() {
                let e = hurst - lit(0.5);
                return if e < S::zero() {
                    S::infinity()
                } else if e == S::zero() {
                    S::one() / gamma(a)
                } else {
                    S::zero()
                };
            }
            lag.powf(hurst - lit(0.5)) / gamma(a)
        }
        KernelSpec::ShiftedFractional { hurst, shift } => {
            (lag + shift).powf(hurst - lit(0.5)) / gamma(hurst + lit(0.5))
        }
        KernelSpec::Exponential { decay } => (-decay * lag).exp(),
        KernelSpec::Constant { level } => level,
    }
}

/// Lower-triangular cell weights of the Volterra operator on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights<S = f64> {
    grid: Grid<S>,
    // row-major, (n + 1) × (n + 1)
    w: Vec<S>,
}

impl<S: Scalar> KernelWeights<S> {
    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let n1 = self.grid.n_steps() + 1;
        self.w[i * n1 + j]
    }

    /// The `i` nonzero entries of row `i`.
    pub fn row(&self, i: usize) -> &[S] {
        let n1 = self.grid.n_steps() + 1;
        &self.w[i * n1..i * n1 + i]
    }

    /// `(𝒦h)(t_i)` for a single row; `h` needs at least `i` entries.
    #[inline]
    pub fn apply_row(&self, i: usize, h: &[S]) -> S {
        self.row(i)
            .iter()
            .zip(h)
            .fold(S::zero(), |acc, (&w, &x)| acc + w * x)
    }

    /// Adds `Wᵀ a` into `out`, skipping row 0: `out[j] += Σ_{i>j} W[i][j] a[i]`.
    pub fn add_transpose_apply(&self, a: &[S], out: &mut [S]) {
        let n = self.grid.n_steps();
        for (i, &ai) in a.iter().enumerate().take(n + 1).skip(1) {
            if ai == S::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o = *o + w * ai;
            }
        }
    }

    /// Writes the matrix as CSV with header `i,j,t_i,t_j,w` (nonzero pattern only).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,t_i,t_j,w\n");
        for i in 1..=self.grid.n_steps() {
            for j in 0..i {
                out.push_str(&format!(
                    "{i},{j},{},{},{:e}\n",
                    self.grid.point(i),
                    self.grid.point(j),
                    self.get(i, j)
                ));
            }
        }
        out
    }
}

pub fn build_weights<S: Scalar>(spec: &KernelSpec<S>, grid: &Grid<S>) -> Result<KernelWeights<S>> {
    spec.check_params()?;
    let n = grid.n_steps();
    let n1 = n + 1;
    let dt = grid.dt();
    let mut w = vec![S::zero(); n1 * n1];

    match *spec {
        KernelSpec::Fractional { hurst } => {
            // depends on the lag only
            let a = hurst + lit(0.5);
            let norm = dt.powf(a) / (a * gamma(a));
            let lags: Vec<S> = (0..n)
                .map(|k| {
                    let k1 = from_usize::<S>(k + 1);
                    let k0 = from_usize::<S>(k);
                    norm * (k1.powf(a) - k0.powf(a))
                })
                .collect();
            fill_toeplitz(&mut w, n1, &lags);
        }
        KernelSpec::ShiftedFractional { hurst, shift } => {
            let a = hurst + lit(0.5);
            let norm = S::one() / (a * gamma(a));
            let lags: Vec<S> = (0..n)
                .map(|k| {
                    let hi = from_usize::<S>(k + 1) * dt + shift;
                    let lo = from_usize::<S>(k) * dt + shift;
                    norm * (hi.powf(a) - lo.powf(a))
                })
                .collect();
            fill_toeplitz(&mut w, n1, &lags);
        }
        KernelSpec::Constant { level } => {
            let lags = vec![level * dt; n];
            fill_toeplitz(&mut w, n1, &lags);
        }
        KernelSpec::Exponential { .. } => {
            let (nodes, weights) = gauss_legendre::<S>(CELL_QUADRATURE_ORDER);
            let half = lit::<S>(0.5);
            for i in 1..=n {
                let ti = grid.point(i);
                for j in 0..i {
                    let (a, b) = (grid.point(j), grid.point(j + 1));
                    let mid = half * (a + b);
                    let rad = half * (b - a);
                    let mut acc = S::zero();
                    for (&x, &wq) in nodes.iter().zip(&weights) {
                        acc = acc + wq * kernel_eval(spec, ti, mid + rad * x);
                    }
                    w[i * n1 + j] = acc * rad;
                }
            }
        }
    }

    Ok(KernelWeights { grid: *grid, w })
}

fn fill_toeplitz<S: Scalar>(w: &mut [S], n1: usize, lags: &[S]) {
    for i in 1..n1 {
        for j in 0..i {
            w[i * n1 + j] = lags[i - 1 - j];
        }
    }
}

/// `(𝒦h)(t_i) = Σ_{j<i} W[i][j] h_j` for a step function with value `h_j`
/// on `[t_j, t_{j+1})`.
pub fn apply_kernel<S: Scalar>(w: &KernelWeights<S>, h: &[S]) -> Result<PathValues<S>> {
    let n = w.grid().n_steps();
    if h.len() != n {
        return Err(Error::Dimension(format!(
            "step function has {} cells, grid has {n}",
            h.len()
        )));
    }
    let values = (0..=n).map(|i| w.apply_row(i, h)).collect();
    Ok(PathValues {
        grid: *w.grid(),
        values,
    })
}

/// Estimate of the L² modulus of continuity
/// `M(h) = sup_{|t₁−t₂|≤h} ∫₀ᵀ |K(t₁,s) − K(t₂,s)|² ds`, maximised over
/// pairs of grid points.
pub fn modulus_estimate<S: Scalar>(spec: &KernelSpec<S>, grid: &Grid<S>, h: S) -> Result<S> {
    spec.check_params()?;
    if !(h > S::zero()) || h > grid.horizon() * lit(1.0 + 1e-12) {
        return Err(Error::Domain(format!("modulus lag {h} outside (0, T]")));
    }
    let n = grid.n_steps();
    let tol = grid.dt() * lit(1e-9);
    let quad = GradedQuadrature::new(spec);
    let mut best = S::zero();
    for i in 0..=n {
        for j in (i + 1)..=n {
            let (t1, t2) = (grid.point(i), grid.point(j));
            if t2 - t1 > h + tol {
                break;
            }
            let m = quad.l2_difference(spec, t1, t2);
            if m > best {
                best = m;
            }
        }
    }
    Ok(best)
}

/// Least-squares fit of `log M(h) = log c + r log h` over the given lags.
/// Returns `(c, r)`. Lags with `M(h) = 0` are skipped.
pub fn modulus_fit<S: Scalar>(spec: &KernelSpec<S>, grid: &Grid<S>, lags: &[S]) -> Result<Option<(S, S)>> {
    let mut pts = Vec::new();
    for &h in lags {
        let m = modulus_estimate(spec, grid, h)?;
        if m > S::zero() {
            pts.push((h.ln(), m.ln()));
        }
    }
    if pts.len() < 2 {
        return Ok(None);
    }
    let k = from_usize::<S>(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<S>() / k;
    let my = pts.iter().map(|p| p.1).sum::<S>() / k;
    let sxx: S = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: S = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let r = sxy / sxx;
    Ok(Some(((my - r * mx).exp(), r)))
}

// Composite Gauss–Legendre with power grading towards the right endpoint,
// s = b − (b − a) w^q, which smooths (b − s)^{2H−1}.
struct GradedQuadrature<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
    grading: S,
    panels: usize,
}

impl<S: Scalar> GradedQuadrature<S> {
    fn new(spec: &KernelSpec<S>) -> Self {
        let (nodes, weights) = gauss_legendre(32);
        let grading = match *spec {
            KernelSpec::Fractional { hurst } if hurst < lit(0.5) => {
                (S::one() / hurst).max(lit(4.0))
            }
            _ => S::one(),
        };
        GradedQuadrature {
            nodes,
            weights,
            grading,
            panels: 4,
        }
    }

    fn integrate(&self, a: S, b: S, f: impl Fn(S) -> S) -> S {
        if !(b > a) {
            return S::zero();
        }
        let half = lit::<S>(0.5);
        let q = self.grading;
        let panel = S::one() / from_usize(self.panels);
        let mut acc = S::zero();
        for p in 0..self.panels {
            let lo = from_usize::<S>(p) * panel;
            let mid = lo + half * panel;
            let rad = half * panel;
            for (&x, &wq) in self.nodes.iter().zip(&self.weights) {
                let u = mid + rad * x;
                let s = b - (b - a) * u.powf(q);
                let jac = q * (b - a) * u.powf(q - S::one());
                acc = acc + wq * rad * jac * f(s);
            }
        }
        acc
    }

    fn l2_difference(&self, spec: &KernelSpec<S>, t1: S, t2: S) -> S {
        let left = self.integrate(S::zero(), t1, |s| {
            let d = kernel_eval(spec, t1, s) - kernel_eval(spec, t2, s);
            d * d
        });
        let sliver = self.integrate(t1, t2, |s| {
            let k = kernel_eval(spec, t2, s);
            k * k
        });
        left + sliver
    }
}
