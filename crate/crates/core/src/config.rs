//! Flat `key = value` model configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Each family only accepts
//! its own parameter keys, and every key may appear once.
//!
//! ```text
//! kernel.type = fractional
//! kernel.H = 0.3
//! u.family = identity
//! sigma.family = shifted-power
//! sigma.sigma0 = 0.3
//! sigma.beta = 0.25
//! drift.family = zero
//! disp.family = square-root
//! v0 = 0.04
//! rho = -0.5
//! T = 1
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::{FunctionSpec, ModelSpec, Role};
use crate::scalar::{lit, to_f64, Scalar};

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    used: Vec<String>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
            }
            if map.insert(k.to_string(), (lineno + 1, v.to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        Ok(Entries { map, used: Vec::new() })
    }

    fn text(&mut self, key: &str) -> Result<String> {
        self.optional_text(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    fn optional_text(&mut self, key: &str) -> Result<Option<String>> {
        Ok(self.map.get(key).map(|(_, v)| {
            self.used.push(key.to_string());
            v.clone()
        }))
    }

    fn optional_number(&mut self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Config(format!("line {line}: `{key}` is not a number: `{v}`")))?;
                if !x.is_finite() {
                    return Err(Error::Config(format!("line {line}: `{key}` must be finite")));
                }
                self.used.push(key.to_string());
                Ok(Some(x))
            }
        }
    }

    fn number(&mut self, key: &str) -> Result<f64> {
        self.optional_number(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.used.contains(k)).collect();
        match unknown.first() {
            None => Ok(()),
            Some(k) => Err(Error::Config(format!(
                "unknown key `{k}` (line {})",
                self.map[k.as_str()].0
            ))),
        }
    }
}

fn parse_kernel<S: Scalar>(e: &mut Entries) -> Result<KernelSpec<S>> {
    let family = e.text("kernel.type")?;
    Ok(match family.as_str() {
        "fractional" => KernelSpec::Fractional {
            hurst: lit(e.number("kernel.H")?),
        },
        "shifted-fractional" => KernelSpec::ShiftedFractional {
            hurst: lit(e.number("kernel.H")?),
            shift: lit(e.number("kernel.delta")?),
        },
        "exponential" => KernelSpec::Exponential {
            decay: lit(e.number("kernel.lambda")?),
        },
        "constant" => KernelSpec::Constant {
            level: lit(e.number("kernel.level")?),
        },
        other => return Err(Error::Config(format!("unknown kernel family `{other}`"))),
    })
}

fn parse_function<S: Scalar>(e: &mut Entries, role: Role, v0: f64) -> Result<FunctionSpec<S>> {
    let p = role.prefix();
    let family = e.text(&format!("{p}.family"))?;
    let mut num = |name: &str| e.number(&format!("{p}.{name}")).map(lit::<S>);
    let spec = match (role, family.as_str()) {
        (Role::U, "identity") => FunctionSpec::Identity,
        (Role::U, "power") => {
            let kappa = num("kappa")?;
            let center = e.optional_number("u.center")?.unwrap_or(v0);
            FunctionSpec::AbsPower {
                center: lit(center),
                kappa,
            }
        }
        (Role::U, "square") => FunctionSpec::Square,
        (Role::U, "constant") => FunctionSpec::Constant { value: num("level")? },
        (Role::Sigma, "shifted-power") => FunctionSpec::ShiftedPower {
            scale: num("sigma0")?,
            beta: num("beta")?,
        },
        (Role::Sigma, "constant") => FunctionSpec::Constant { value: num("sigma0")? },
        (Role::Sigma, "affine") => FunctionSpec::ScaledAffine {
            scale: num("sigma0")?,
            slope: num("slope")?,
        },
        (Role::Drift, "zero") => FunctionSpec::Zero,
        (Role::Drift, "mean-reverting") => FunctionSpec::MeanReverting {
            kappa: num("kappa")?,
            theta: num("theta")?,
        },
        (Role::Drift, "affine") => FunctionSpec::Affine {
            a: num("a")?,
            b: num("b")?,
        },
        (Role::Disp, "square-root") => FunctionSpec::SquareRoot,
        (Role::Disp, "power") => FunctionSpec::PositivePower { p: num("p")? },
        (Role::Disp, "constant") => FunctionSpec::Constant { value: num("level")? },
        (Role::Disp, "affine-positive") => FunctionSpec::AffinePositive {
            a: num("a")?,
            b: num("b")?,
        },
        (_, other) => return Err(Error::Config(format!("unknown {p} family `{other}`"))),
    };
    Ok(spec)
}

/// Parses a model from config text. Structural only: assumption checks are
/// left to [`crate::model::validate_spec`].
pub fn parse_config<S: Scalar>(text: &str) -> Result<ModelSpec<S>> {
    let mut e = Entries::parse(text)?;
    let v0 = e.number("v0")?;
    let spec = ModelSpec {
        kernel: parse_kernel(&mut e)?,
        u_fn: parse_function(&mut e, Role::U, v0)?,
        sigma_fn: parse_function(&mut e, Role::Sigma, v0)?,
        drift_fn: parse_function(&mut e, Role::Drift, v0)?,
        disp_fn: parse_function(&mut e, Role::Disp, v0)?,
        v0: lit(v0),
        rho: lit(e.number("rho")?),
        horizon: lit(e.number("T")?),
    };
    e.finish()?;
    Ok(spec)
}

pub fn load_config<S: Scalar>(path: &std::path::Path) -> Result<ModelSpec<S>> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| Error::Config(format!("cannot read {}: {err}", path.display())))?;
    parse_config(&text)
}

// `{:?}` on f64 is the shortest string that parses back to the same value.
fn num<S: Scalar>(x: S) -> String {
    format!("{:?}", to_f64(x))
}

fn function_lines<S: Scalar>(out: &mut Vec<String>, role: Role, f: &FunctionSpec<S>) {
    let p = role.prefix();
    out.push(format!("{p}.family = {}", f.family_name()));
    let params: Vec<(&str, S)> = match (role, *f) {
        (_, FunctionSpec::AbsPower { center, kappa }) => vec![("kappa", kappa), ("center", center)],
        (Role::Sigma, FunctionSpec::Constant { value }) => vec![("sigma0", value)],
        (_, FunctionSpec::Constant { value }) => vec![("level", value)],
        (_, FunctionSpec::ShiftedPower { scale, beta }) => vec![("sigma0", scale), ("beta", beta)],
        (_, FunctionSpec::ScaledAffine { scale, slope }) => vec![("sigma0", scale), ("slope", slope)],
        (_, FunctionSpec::MeanReverting { kappa, theta }) => vec![("kappa", kappa), ("theta", theta)],
        (_, FunctionSpec::Affine { a, b }) | (_, FunctionSpec::AffinePositive { a, b }) => {
            vec![("a", a), ("b", b)]
        }
        (_, FunctionSpec::PositivePower { p }) => vec![("p", p)],
        _ => vec![],
    };
    for (name, v) in params {
        out.push(format!("{p}.{name} = {}", num(v)));
    }
}

/// Serializes a model in the format read by [`parse_config`].
pub fn to_config_string<S: Scalar>(spec: &ModelSpec<S>) -> String {
    let mut out = vec![format!("kernel.type = {}", spec.kernel.family_name())];
    match spec.kernel {
        KernelSpec::Fractional { hurst } => out.push(format!("kernel.H = {}", num(hurst))),
        KernelSpec::ShiftedFractional { hurst, shift } => {
            out.push(format!("kernel.H = {}", num(hurst)));
            out.push(format!("kernel.delta = {}", num(shift)));
        }
        KernelSpec::Exponential { decay } => out.push(format!("kernel.lambda = {}", num(decay))),
        KernelSpec::Constant { level } => out.push(format!("kernel.level = {}", num(level))),
    }
    function_lines(&mut out, Role::U, &spec.u_fn);
    function_lines(&mut out, Role::Sigma, &spec.sigma_fn);
    function_lines(&mut out, Role::Drift, &spec.drift_fn);
    function_lines(&mut out, Role::Disp, &spec.disp_fn);
    out.push(format!("v0 = {}", num(spec.v0)));
    out.push(format!("rho = {}", num(spec.rho)));
    out.push(format!("T = {}", num(spec.horizon)));
    let mut s = out.join("\n");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SECTION4: &str = "\
# large-strike model
kernel.type = fractional
kernel.H = 0.3
u.family = identity
sigma.family = shifted-power
sigma.sigma0 = 0.3
sigma.beta = 0.25
drift.family = zero
disp.family = square-root
v0 = 0.04
rho = -0.5   # leverage
T = 1
";

    #[test]
    fn parses_the_large_strike_model() {
        let s: ModelSpec<f64> = parse_config(SECTION4).unwrap();
        assert_eq!(s.kernel, KernelSpec::Fractional { hurst: 0.3 });
        assert_eq!(s.sigma_fn, FunctionSpec::ShiftedPower { scale: 0.3, beta: 0.25 });
        assert_eq!(s.disp_fn, FunctionSpec::SquareRoot);
        assert_eq!(s.rho, -0.5);
        assert_eq!(s.special_case(), Some(crate::model::SpecialCase::Section4));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{SECTION4}foo = 1\n");
        assert!(matches!(parse_config::<f64>(&text), Err(Error::Config(m)) if m.contains("foo")));
    }

    #[test]
    fn key_of_another_family_is_rejected() {
        let text = format!("{SECTION4}drift.kappa = 1\n");
        assert!(matches!(parse_config::<f64>(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_family_and_missing_key() {
        let bad = SECTION4.replace("square-root", "cube-root");
        assert!(matches!(parse_config::<f64>(&bad), Err(Error::Config(m)) if m.contains("cube-root")));
        let missing = SECTION4.replace("T = 1\n", "");
        assert!(matches!(parse_config::<f64>(&missing), Err(Error::Config(m)) if m.contains("`T`")));
        let dup = format!("{SECTION4}T = 2\n");
        assert!(parse_config::<f64>(&dup).is_err());
        let nan = SECTION4.replace("v0 = 0.04", "v0 = abc");
        assert!(parse_config::<f64>(&nan).is_err());
    }

    #[test]
    fn power_u_centers_at_v0_by_default() {
        let text = SECTION4.replace("u.family = identity", "u.family = power\nu.kappa = 2");
        let s: ModelSpec<f64> = parse_config(&text).unwrap();
        assert_eq!(s.u_fn, FunctionSpec::AbsPower { center: 0.04, kappa: 2.0 });
    }

    #[test]
    fn round_trip_of_the_sample() {
        let s: ModelSpec<f64> = parse_config(SECTION4).unwrap();
        let back: ModelSpec<f64> = parse_config(&to_config_string(&s)).unwrap();
        assert_eq!(s, back);
    }
}
