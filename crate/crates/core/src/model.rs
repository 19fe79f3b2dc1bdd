//! Model specification, the registry of coefficient families and the
//! uniform time grid shared by all numerics.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::scalar::{from_usize, lit, Scalar};

/// Which coefficient of the model a [`FunctionSpec`] is used for.
///
/// Each role admits its own closed set of families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// `U`, applied to the driver before the kernel transform.
    U,
    /// `σ`, the spot-volatility map.
    Sigma,
    /// `b̄`, drift of the driver.
    Drift,
    /// `σ̄`, dispersion of the driver.
    Disp,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::U => "u",
            Role::Sigma => "sigma",
            Role::Drift => "drift",
            Role::Disp => "disp",
        }
    }
}

/// A parametric coefficient function.
///
/// Fractional powers clamp negative arguments to zero before exponentiation,
/// so every family is total on the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionSpec<S = f64> {
    /// `x`
    Identity,
    /// `|x - center|^kappa`
    AbsPower { center: S, kappa: S },
    /// `x²`
    Square,
    /// constant `value`
    Constant { value: S },
    /// `scale · (1 + (x⁺)^beta)`
    ShiftedPower { scale: S, beta: S },
    /// `scale · (1 + slope · x)`
    ScaledAffine { scale: S, slope: S },
    /// `0`
    Zero,
    /// `kappa · (theta - x)`
    MeanReverting { kappa: S, theta: S },
    /// `a + b · x`
    Affine { a: S, b: S },
    /// `√(x⁺)`
    SquareRoot,
    /// `(x⁺)^p`
    PositivePower { p: S },
    /// `a + b · x⁺`
    AffinePositive { a: S, b: S },
}

impl<S: Scalar> FunctionSpec<S> {
    /// Family tag as used in config files for the given role.
    pub fn family_name(&self) -> &'static str {
        match self {
            FunctionSpec::Identity => "identity",
            FunctionSpec::AbsPower { .. } => "power",
            FunctionSpec::Square => "square",
            FunctionSpec::Constant { .. } => "constant",
            FunctionSpec::ShiftedPower { .. } => "shifted-power",
            FunctionSpec::ScaledAffine { .. } => "affine",
            FunctionSpec::Zero => "zero",
            FunctionSpec::MeanReverting { .. } => "mean-reverting",
            FunctionSpec::Affine { .. } => "affine",
            FunctionSpec::SquareRoot => "square-root",
            FunctionSpec::PositivePower { .. } => "power",
            FunctionSpec::AffinePositive { .. } => "affine-positive",
        }
    }

    pub fn eval(&self, x: S) -> S {
        let pos = x.max(S::zero());
        match *self {
            FunctionSpec::Identity => x,
            FunctionSpec::AbsPower { center, kappa } => (x - center).abs().powf(kappa),
            FunctionSpec::Square => x * x,
            FunctionSpec::Constant { value } => value,
            FunctionSpec::ShiftedPower { scale, beta } => scale * (S::one() + pos.powf(beta)),
            FunctionSpec::ScaledAffine { scale, slope } => scale * (S::one() + slope * x),
            FunctionSpec::Zero => S::zero(),
            FunctionSpec::MeanReverting { kappa, theta } => kappa * (theta - x),
            FunctionSpec::Affine { a, b } => a + b * x,
            FunctionSpec::SquareRoot => pos.sqrt(),
            FunctionSpec::PositivePower { p } => pos.powf(p),
            FunctionSpec::AffinePositive { a, b } => a + b * pos,
        }
    }

    /// Derivative where it exists. At kinks and at the clamp point of a
    /// fractional power with infinite one-sided slope this returns 0.
    pub fn deriv(&self, x: S) -> S {
        let zero = S::zero();
        match *self {
            FunctionSpec::Identity => S::one(),
            FunctionSpec::AbsPower { center, kappa } => {
                let d = x - center;
                if d == zero {
                    zero
                } else {
                    kappa * d.abs().powf(kappa - S::one()) * d.signum()
                }
            }
            FunctionSpec::Square => lit::<S>(2.0) * x,
            FunctionSpec::Constant { .. } | FunctionSpec::Zero => zero,
            FunctionSpec::ShiftedPower { scale, beta } => scale * power_slope(x, beta),
            FunctionSpec::ScaledAffine { scale, slope } => scale * slope,
            FunctionSpec::MeanReverting { kappa, .. } => -kappa,
            FunctionSpec::Affine { b, .. } => b,
            FunctionSpec::SquareRoot => power_slope(x, lit(0.5)),
            FunctionSpec::PositivePower { p } => power_slope(x, p),
            FunctionSpec::AffinePositive { b, .. } => {
                if x > zero {
                    b
                } else {
                    zero
                }
            }
        }
    }

    /// True for dispersion families defined through `x⁺`: the driver is
    /// then integrated with full truncation.
    pub fn requires_nonnegative(&self) -> bool {
        matches!(
            self,
            FunctionSpec::SquareRoot | FunctionSpec::PositivePower { .. }
        )
    }

    pub fn cast<T: Scalar>(&self) -> FunctionSpec<T> {
        let c = |x: S| lit::<T>(crate::scalar::to_f64(x));
        match *self {
            FunctionSpec::Identity => FunctionSpec::Identity,
            FunctionSpec::AbsPower { center, kappa } => FunctionSpec::AbsPower {
                center: c(center),
                kappa: c(kappa),
            },
            FunctionSpec::Square => FunctionSpec::Square,
            FunctionSpec::Constant { value } => FunctionSpec::Constant { value: c(value) },
            FunctionSpec::ShiftedPower { scale, beta } => FunctionSpec::ShiftedPower {
                scale: c(scale),
                beta: c(beta),
            },
            FunctionSpec::ScaledAffine { scale, slope } => FunctionSpec::ScaledAffine {
                scale: c(scale),
                slope: c(slope),
            },
            FunctionSpec::Zero => FunctionSpec::Zero,
            FunctionSpec::MeanReverting { kappa, theta } => FunctionSpec::MeanReverting {
                kappa: c(kappa),
                theta: c(theta),
            },
            FunctionSpec::Affine { a, b } => FunctionSpec::Affine { a: c(a), b: c(b) },
            FunctionSpec::SquareRoot => FunctionSpec::SquareRoot,
            FunctionSpec::PositivePower { p } => FunctionSpec::PositivePower { p: c(p) },
            FunctionSpec::AffinePositive { a, b } => FunctionSpec::AffinePositive { a: c(a), b: c(b) },
        }
    }

    /// Whether this family is admissible for `role`.
    pub fn allowed_for(&self, role: Role) -> bool {
        use FunctionSpec::*;
        match role {
            Role::U => matches!(self, Identity | AbsPower { .. } | Square | Constant { .. }),
            Role::Sigma => matches!(self, ShiftedPower { .. } | Constant { .. } | ScaledAffine { .. }),
            Role::Drift => matches!(self, Zero | MeanReverting { .. } | Affine { .. }),
            Role::Disp => matches!(
                self,
                SquareRoot | PositivePower { .. } | Constant { .. } | AffinePositive { .. }
            ),
        }
    }
}

// d/dx (x⁺)^e
fn power_slope<S: Scalar>(x: S, e: S) -> S {
    if x > S::zero() {
        e * x.powf(e - S::one())
    } else if x == S::zero() && e == S::one() {
        S::one()
    } else {
        S::zero()
    }
}

/// Evaluates a coefficient family at `x`.
pub fn eval_function<S: Scalar>(spec: &FunctionSpec<S>, x: S) -> S {
    spec.eval(x)
}

/// Structural special cases that relax the standing assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// `U = id`, `b̄ ≡ 0`, `σ̄ = √x`, `σ(x) = σ₀(1 + x^β)` with `β ∈ (0, ½)`:
    /// the large-strike model with a driftless CIR driver.
    Section4,
    /// `U(x) = x²`, `σ̄ ≡ 1`, `b̄ ≡ 0`, smooth `σ`: the driver is the control
    /// itself (shifted by `v₀`).
    Section5,
}

impl SpecialCase {
    pub fn flag(self) -> &'static str {
        match self {
            SpecialCase::Section4 => "special_section4",
            SpecialCase::Section5 => "special_section5",
        }
    }
}

/// Full model description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<S = f64> {
    pub kernel: KernelSpec<S>,
    pub u_fn: FunctionSpec<S>,
    pub sigma_fn: FunctionSpec<S>,
    pub drift_fn: FunctionSpec<S>,
    pub disp_fn: FunctionSpec<S>,
    pub v0: S,
    pub rho: S,
    pub horizon: S,
}

impl<S: Scalar> ModelSpec<S> {
    /// `√(1 − ρ²)`
    pub fn rho_bar(&self) -> S {
        (S::one() - self.rho * self.rho).sqrt()
    }

    pub fn special_case(&self) -> Option<SpecialCase> {
        let half = lit::<S>(0.5);
        match (self.u_fn, self.drift_fn, self.disp_fn, self.sigma_fn) {
            (
                FunctionSpec::Identity,
                FunctionSpec::Zero,
                FunctionSpec::SquareRoot,
                FunctionSpec::ShiftedPower { beta, .. },
            ) if beta > S::zero() && beta < half => Some(SpecialCase::Section4),
            (
                FunctionSpec::Square,
                FunctionSpec::Zero,
                FunctionSpec::Constant { value },
                FunctionSpec::ScaledAffine { .. } | FunctionSpec::Constant { .. },
            ) if value == S::one() => Some(SpecialCase::Section5),
            _ => None,
        }
    }

    /// `σ(0)`, the level of the spot-vol map at a vanishing transform.
    pub fn sigma0(&self) -> S {
        self.sigma_fn.eval(S::zero())
    }

    pub fn cast<T: Scalar>(&self) -> ModelSpec<T> {
        let c = |x: S| lit::<T>(crate::scalar::to_f64(x));
        ModelSpec {
            kernel: self.kernel.cast(),
            u_fn: self.u_fn.cast(),
            sigma_fn: self.sigma_fn.cast(),
            drift_fn: self.drift_fn.cast(),
            disp_fn: self.disp_fn.cast(),
            v0: c(self.v0),
            rho: c(self.rho),
            horizon: c(self.horizon),
        }
    }
}

/// Uniform grid `t_k = k·T/n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<S = f64> {
    n_steps: usize,
    horizon: S,
}

impl<S: Scalar> Grid<S> {
    pub fn new(n_steps: usize, horizon: S) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Grid { n_steps, horizon })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    /// Step width `T/n`.
    pub fn dt(&self) -> S {
        self.horizon / from_usize(self.n_steps)
    }

    pub fn point(&self, k: usize) -> S {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * from_usize::<S>(k) / from_usize(self.n_steps)
        }
    }

    pub fn points(&self) -> Vec<S> {
        (0..=self.n_steps).map(|k| self.point(k)).collect()
    }

    /// Same grid with twice as many steps.
    pub fn refined(&self) -> Self {
        Grid {
            n_steps: 2 * self.n_steps,
            horizon: self.horizon,
        }
    }
}

/// Values of a path at the `n + 1` grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct PathValues<S = f64> {
    pub grid: Grid<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> PathValues<S> {
    pub fn new(grid: Grid<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::Dimension(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.n_steps() + 1
            )));
        }
        Ok(PathValues { grid, values })
    }

    pub fn from_fn(grid: Grid<S>, f: impl Fn(S) -> S) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        PathValues { grid, values }
    }

    /// Slopes on each cell, i.e. the derivative of the piecewise-linear
    /// interpolant.
    pub fn increments_per_time(&self) -> Vec<S> {
        let dt = self.grid.dt();
        self.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    }

    /// Piecewise-linear interpolation at time `t ∈ [0, T]`.
    pub fn interpolate(&self, t: S) -> S {
        let n = self.grid.n_steps();
        let pos = (t / self.grid.dt()).max(S::zero());
        let k = pos.floor().to_usize().unwrap_or(0).min(n);
        if k >= n {
            return self.values[n];
        }
        let frac = pos - from_usize(k);
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Violated by design in one of the recognised special cases.
    FlaggedSpecialCase,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::FlaggedSpecialCase => "flagged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub special_case: Option<SpecialCase>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status_of(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{:<22} {:<8} {}", c.name, c.status.to_string(), c.detail)?;
        }
        match self.special_case {
            Some(sc) => writeln!(f, "special case: {}", sc.flag()),
            None => writeln!(f, "special case: none"),
        }
    }
}

/// Checks the standing assumptions on a model. Never fails; every
/// finding is reported.
pub fn validate_spec<S: Scalar>(spec: &ModelSpec<S>) -> ValidationReport {
    use CheckStatus::*;
    let special = spec.special_case();
    let mut checks = Vec::new();
    let mut push = |name, status, detail: String| checks.push(Check { name, status, detail });

    for (role, f) in [
        (Role::U, &spec.u_fn),
        (Role::Sigma, &spec.sigma_fn),
        (Role::Drift, &spec.drift_fn),
        (Role::Disp, &spec.disp_fn),
    ] {
        if !f.allowed_for(role) {
            push(
                "family_registry",
                Fail,
                format!("family '{}' is not admissible for {}", f.family_name(), role.prefix()),
            );
        }
    }

    match spec.kernel.l2_sup(spec.horizon) {
        Ok(v) if v.is_finite() => push(
            "kernel_l2_bound",
            Pass,
            format!("sup_t ∫ K(t,s)² ds = {v:.6}"),
        ),
        Ok(v) => push("kernel_l2_bound", Fail, format!("sup_t ∫ K(t,s)² ds = {v}")),
        Err(e) => push("kernel_l2_bound", Fail, e.to_string()),
    }

    if spec.rho.abs() < S::one() {
        push("rho_range", Pass, format!("rho = {}", spec.rho));
    } else {
        push("rho_range", Fail, format!("rho = {} outside (-1, 1)", spec.rho));
    }

    if spec.horizon > S::zero() && spec.horizon.is_finite() {
        push("horizon", Pass, format!("T = {}", spec.horizon));
    } else {
        push("horizon", Fail, format!("T = {} must be positive", spec.horizon));
    }

    if spec.v0 > S::zero() {
        push("v0_positive", Pass, format!("v0 = {}", spec.v0));
    } else if spec.v0 == S::zero() && special == Some(SpecialCase::Section5) {
        push(
            "v0_positive",
            FlaggedSpecialCase,
            "v0 = 0 makes the driver equal to the control".into(),
        );
    } else {
        push("v0_positive", Fail, format!("v0 = {} must be positive", spec.v0));
    }

    let (sigma_ok, sigma_detail) = sigma_positive(&spec.sigma_fn);
    push(
        "sigma_positive",
        if sigma_ok { Pass } else { Fail },
        sigma_detail,
    );

    let (u_ok, u_detail) = u_nonnegative(&spec.u_fn, &spec.disp_fn);
    push("u_nonnegative", if u_ok { Pass } else { Fail }, u_detail);

    let drift_at_zero = spec.drift_fn.eval(S::zero());
    let disp_floor = disp_lower_bound(&spec.disp_fn);
    if drift_at_zero > S::zero() {
        push(
            "drift_at_zero",
            Pass,
            format!("b(0) = {drift_at_zero} > 0"),
        );
    } else if disp_floor > S::zero() {
        push(
            "drift_at_zero",
            Pass,
            format!("dispersion bounded below by {disp_floor}"),
        );
    } else if let Some(sc) = special {
        push(
            "drift_at_zero",
            FlaggedSpecialCase,
            format!("b(0) = {drift_at_zero}; accepted as {}", sc.flag()),
        );
    } else {
        push(
            "drift_at_zero",
            Fail,
            format!("b(0) = {drift_at_zero} is not positive and the dispersion can vanish"),
        );
    }

    let growth_ok = match spec.disp_fn {
        FunctionSpec::PositivePower { p } => p >= lit(0.5) && p < S::one(),
        _ => true,
    };
    push(
        "sublinear_growth",
        if growth_ok { Pass } else { Fail },
        if growth_ok {
            "registered drift and dispersion families grow at most linearly".into()
        } else {
            "power dispersion needs p in [1/2, 1)".into()
        },
    );

    ValidationReport {
        checks,
        special_case: special,
    }
}

fn sigma_positive<S: Scalar>(f: &FunctionSpec<S>) -> (bool, String) {
    match *f {
        FunctionSpec::ShiftedPower { scale, beta } => (
            scale > S::zero() && beta > S::zero(),
            format!("sigma0 = {scale}, beta = {beta}"),
        ),
        FunctionSpec::Constant { value } => (value > S::zero(), format!("sigma0 = {value}")),
        FunctionSpec::ScaledAffine { scale, slope } => (
            scale > S::zero() && slope >= S::zero(),
            format!("sigma0 = {scale}, slope = {slope}"),
        ),
        _ => (false, format!("'{}' is not a volatility family", f.family_name())),
    }
}

fn u_nonnegative<S: Scalar>(u: &FunctionSpec<S>, disp: &FunctionSpec<S>) -> (bool, String) {
    match *u {
        FunctionSpec::Identity => {
            if disp.requires_nonnegative() {
                (true, "identity on a nonnegative driver".into())
            } else {
                (false, "identity U on a driver that can become negative".into())
            }
        }
        FunctionSpec::Constant { value } => (value >= S::zero(), format!("level = {value}")),
        FunctionSpec::AbsPower { kappa, .. } => (kappa > S::zero(), format!("kappa = {kappa}")),
        FunctionSpec::Square => (true, "square".into()),
        _ => (false, format!("'{}' is not a U family", u.family_name())),
    }
}

fn disp_lower_bound<S: Scalar>(f: &FunctionSpec<S>) -> S {
    match *f {
        FunctionSpec::Constant { value } => value.abs(),
        FunctionSpec::AffinePositive { a, b } if b >= S::zero() => a,
        _ => S::zero(),
    }
}
