//! Model families pinned by the acceptance suite in `tests/acceptance.rs`.

use std::path::PathBuf;

use volterra_ldp::kernel::KernelSpec;
use volterra_ldp::model::FunctionSpec;
use volterra_ldp::ModelSpec64;

/// Directory holding the shipped model configs.
pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Constant spot volatility over a rough mean-reverting square-root driver;
/// the driver never reaches the log-price.
pub fn constant_vol(sigma0: f64, horizon: f64, rho: f64) -> ModelSpec64 {
    ModelSpec64 {
        kernel: KernelSpec::Fractional { hurst: 0.3 },
        u_fn: FunctionSpec::Identity,
        sigma_fn: FunctionSpec::Constant { value: sigma0 },
        drift_fn: FunctionSpec::MeanReverting { kappa: 1.0, theta: 0.04 },
        disp_fn: FunctionSpec::SquareRoot,
        v0: 0.04,
        rho,
        horizon,
    }
}

/// Squared Gaussian Volterra driver started at 0 with affine spot
/// volatility `σ₀(1 + x)`.
pub fn squared_gaussian(sigma0: f64, rho: f64) -> ModelSpec64 {
    ModelSpec64 {
        kernel: KernelSpec::Fractional { hurst: 0.3 },
        u_fn: FunctionSpec::Square,
        sigma_fn: FunctionSpec::ScaledAffine { scale: sigma0, slope: 1.0 },
        drift_fn: FunctionSpec::Zero,
        disp_fn: FunctionSpec::Constant { value: 1.0 },
        v0: 0.0,
        rho,
        horizon: 1.0,
    }
}
