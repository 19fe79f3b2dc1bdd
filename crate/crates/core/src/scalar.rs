//! Scalar abstraction and the handful of special functions the numerics need.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. Literals are converted with [`lit`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type used throughout the crate.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Sum + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + LowerExp
        + Sum
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into `S`.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a `usize` into `S`.
#[inline]
pub fn from_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize representable in scalar type")
}

#[inline]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real arguments (reflection formula below 1/2).
pub fn gamma<S: Scalar>(x: S) -> S {
    let half = lit::<S>(0.5);
    if x < half {
        let pi = S::PI();
        return pi / ((pi * x).sin() * gamma(S::one() - x));
    }
    let x = x - S::one();
    let mut acc = lit::<S>(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc = acc + lit::<S>(c) / (x + from_usize(i));
    }
    let t = x + lit::<S>(LANCZOS_G) + half;
    (lit::<S>(2.0) * S::PI()).sqrt() * t.powf(x + half) * (-t).exp() * acc
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<S: Scalar>(order: usize) -> (Vec<S>, Vec<S>) {
    assert!(order >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0f64; order];
    let mut weights = vec![0.0f64; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (
        nodes.into_iter().map(lit).collect(),
        weights.into_iter().map(lit).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_matches_factorials_and_half() {
        for (k, fact) in [(1, 1.0), (2, 1.0), (3, 2.0), (5, 24.0), (8, 5040.0)] {
            let g: f64 = gamma(k as f64);
            assert!((g - fact).abs() / fact < 1e-13, "Γ({k}) = {g}");
        }
        let g: f64 = gamma(0.5);
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn gamma_reflection_branch() {
        // Γ(0.2)·Γ(0.8) = π / sin(0.2π)
        let lhs: f64 = gamma(0.2) * gamma(0.8);
        let rhs = std::f64::consts::PI / (0.2 * std::f64::consts::PI).sin();
        assert!((lhs - rhs).abs() / rhs < 1e-13);
    }

    #[test]
    fn gamma_f32() {
        let g: f32 = gamma(1.25f32);
        assert!((g - 0.906_402_5).abs() < 1e-5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre::<f64>(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 30 is within 2n - 1 = 31
        let integral: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(30)).sum();
        assert!((integral - 2.0 / 31.0).abs() < 1e-13);
        let odd: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_odd_order_has_center_node() {
        let (x, w) = gauss_legendre::<f64>(5);
        assert!(x[2].abs() < 1e-15);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);
    }
}
