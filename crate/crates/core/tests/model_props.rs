use proptest::prelude::*;
use volterra_ldp::config::{parse_config, to_config_string};
use volterra_ldp::kernel::KernelSpec;
use volterra_ldp::model::{eval_function, validate_spec, FunctionSpec, ModelSpec};

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![-10.0..10.0f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
}

fn kernel() -> impl Strategy<Value = KernelSpec<f64>> {
    prop_oneof![
        real().prop_map(|hurst| KernelSpec::Fractional { hurst }),
        (real(), real()).prop_map(|(hurst, shift)| KernelSpec::ShiftedFractional { hurst, shift }),
        real().prop_map(|decay| KernelSpec::Exponential { decay }),
        real().prop_map(|level| KernelSpec::Constant { level }),
    ]
}

fn u_fn() -> impl Strategy<Value = FunctionSpec<f64>> {
    prop_oneof![
        Just(FunctionSpec::Identity),
        (real(), real()).prop_map(|(center, kappa)| FunctionSpec::AbsPower { center, kappa }),
        Just(FunctionSpec::Square),
        real().prop_map(|value| FunctionSpec::Constant { value }),
    ]
}

fn sigma_fn() -> impl Strategy<Value = FunctionSpec<f64>> {
    prop_oneof![
        (real(), real()).prop_map(|(scale, beta)| FunctionSpec::ShiftedPower { scale, beta }),
        real().prop_map(|value| FunctionSpec::Constant { value }),
        (real(), real()).prop_map(|(scale, slope)| FunctionSpec::ScaledAffine { scale, slope }),
    ]
}

fn drift_fn() -> impl Strategy<Value = FunctionSpec<f64>> {
    prop_oneof![
        Just(FunctionSpec::Zero),
        (real(), real()).prop_map(|(kappa, theta)| FunctionSpec::MeanReverting { kappa, theta }),
        (real(), real()).prop_map(|(a, b)| FunctionSpec::Affine { a, b }),
    ]
}

fn disp_fn() -> impl Strategy<Value = FunctionSpec<f64>> {
    prop_oneof![
        Just(FunctionSpec::SquareRoot),
        real().prop_map(|p| FunctionSpec::PositivePower { p }),
        real().prop_map(|value| FunctionSpec::Constant { value }),
        (real(), real()).prop_map(|(a, b)| FunctionSpec::AffinePositive { a, b }),
    ]
}

fn model() -> impl Strategy<Value = ModelSpec<f64>> {
    (kernel(), u_fn(), sigma_fn(), drift_fn(), disp_fn(), real(), real(), real()).prop_map(
        |(kernel, u_fn, sigma_fn, drift_fn, disp_fn, v0, rho, horizon)| ModelSpec {
            kernel,
            u_fn,
            sigma_fn,
            drift_fn,
            disp_fn,
            v0,
            rho,
            horizon,
        },
    )
}

/// Families with parameters in their admissible ranges.
fn admissible_function() -> impl Strategy<Value = FunctionSpec<f64>> {
    prop_oneof![
        Just(FunctionSpec::Identity),
        (-1.0..1.0f64, 0.1..3.0f64).prop_map(|(center, kappa)| FunctionSpec::AbsPower { center, kappa }),
        Just(FunctionSpec::Square),
        (0.1..2.0f64).prop_map(|value| FunctionSpec::Constant { value }),
        (0.1..2.0f64, 0.01..0.49f64).prop_map(|(scale, beta)| FunctionSpec::ShiftedPower { scale, beta }),
        (0.1..2.0f64, 0.0..2.0f64).prop_map(|(scale, slope)| FunctionSpec::ScaledAffine { scale, slope }),
        Just(FunctionSpec::Zero),
        (0.0..3.0f64, 0.0..1.0f64).prop_map(|(kappa, theta)| FunctionSpec::MeanReverting { kappa, theta }),
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| FunctionSpec::Affine { a, b }),
        Just(FunctionSpec::SquareRoot),
        (0.5..0.99f64).prop_map(|p| FunctionSpec::PositivePower { p }),
        (0.1..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| FunctionSpec::AffinePositive { a, b }),
    ]
}

proptest! {
    #[test]
    fn config_text_round_trips(spec in model()) {
        let text = to_config_string(&spec);
        let back: ModelSpec<f64> = parse_config(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn registered_families_are_total(f in admissible_function(), x in -1e6..1e6f64) {
        let v = eval_function(&f, x);
        prop_assert!(v.is_finite(), "{:?}({}) = {}", f, x, v);
    }

    #[test]
    fn validation_never_mutates(spec in model()) {
        let before = spec.clone();
        let _ = validate_spec(&spec);
        prop_assert_eq!(before, spec);
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let spec: ModelSpec<f64> = volterra_ldp::config::load_config(&path).unwrap();
            assert!(validate_spec(&spec).passed(), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
