//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::Result;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions<S = f64> {
    /// Stop once the gradient norm is at most this.
    pub gtol: S,
    /// ... and the last relative decrease of the objective is at most this.
    pub ftol: S,
    pub max_iter: usize,
    /// Number of correction pairs kept.
    pub memory: usize,
}

impl<S: Scalar> Default for LbfgsOptions<S> {
    fn default() -> Self {
        LbfgsOptions {
            gtol: lit(1e-7),
            ftol: lit(1e-10),
            max_iter: 2000,
            memory: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsReport<S = f64> {
    pub x: Vec<S>,
    pub value: S,
    pub grad_norm: S,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<S>,
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

struct Point<S> {
    x: Vec<S>,
    f: S,
    g: Vec<S>,
}

/// Objective wrapper that counts calls and maps evaluation errors to `+∞`
/// once a finite starting point is known.
struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F> Counted<F> {
    fn eval<S: Scalar>(&mut self, x: &[S]) -> (S, Vec<S>)
    where
        F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
    {
        self.calls += 1;
        match (self.f)(x) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|d| d.is_finite()) => (v, g),
            _ => (S::infinity(), vec![S::zero(); x.len()]),
        }
    }
}

/// Minimizes `f`, which returns the value and gradient.
///
/// Errors from `f` at the starting point are returned; later ones are
/// treated as an infinite objective so the line search backs off.
pub fn lbfgs<S, F>(f: F, x0: Vec<S>, opts: &LbfgsOptions<S>) -> Result<LbfgsReport<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
{
    let mut obj = Counted { f, calls: 1 };
    let (f0, g0) = (obj.f)(&x0)?;
    let mut cur = Point { x: x0, f: f0, g: g0 };
    let mut history = vec![cur.f];
    let mut pairs: VecDeque<(Vec<S>, Vec<S>, S)> = VecDeque::new();
    let mut rel_change = S::zero();
    let mut iterations = 0;

    let done = |p: &Point<S>, rel: S| norm(&p.g) <= opts.gtol && rel <= opts.ftol;

    while !done(&cur, rel_change) && iterations < opts.max_iter && cur.f.is_finite() {
        let mut dir = two_loop(&cur.g, &pairs);
        let mut slope = dot(&dir, &cur.g);
        if !(slope < S::zero()) {
            // curvature information went bad: restart from steepest descent
            pairs.clear();
            dir = cur.g.iter().map(|&d| -d).collect();
            slope = dot(&dir, &cur.g);
        }
        let first = if pairs.is_empty() {
            S::one().min(S::one() / norm(&cur.g))
        } else {
            S::one()
        };
        let Some(next) = wolfe_search(&mut obj, &cur, &dir, slope, first) else {
            // the attempt left the objective where it was
            rel_change = S::zero();
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        iterations += 1;
        rel_change = (cur.f - next.f).abs() / cur.f.abs().max(S::one());
        let s: Vec<S> = next.x.iter().zip(&cur.x).map(|(&a, &b)| a - b).collect();
        let y: Vec<S> = next.g.iter().zip(&cur.g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > S::epsilon() * norm(&s) * norm(&y) {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, S::one() / sy));
        }
        cur = next;
        history.push(cur.f);
    }

    let grad_norm = norm(&cur.g);
    Ok(LbfgsReport {
        converged: done(&cur, rel_change),
        x: cur.x,
        value: cur.f,
        grad_norm,
        iterations,
        evaluations: obj.calls,
        history,
    })
}

fn two_loop<S: Scalar>(g: &[S], pairs: &VecDeque<(Vec<S>, Vec<S>, S)>) -> Vec<S> {
    let mut q: Vec<S> = g.to_vec();
    let mut alpha = Vec::with_capacity(pairs.len());
    for (s, y, r) in pairs.iter().rev() {
        let a = *r * dot(s, &q);
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi = *qi - a * yi;
        }
        alpha.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi = *qi * gamma;
        }
    }
    for ((s, y, r), a) in pairs.iter().zip(alpha.into_iter().rev()) {
        let b = *r * dot(y, &q);
        for (qi, &si) in q.iter_mut().zip(s) {
            *qi = *qi + (a - b) * si;
        }
    }
    q.iter().map(|&d| -d).collect()
}

fn step_to<S: Scalar>(x: &[S], dir: &[S], t: S) -> Vec<S> {
    x.iter().zip(dir).map(|(&a, &d)| a + t * d).collect()
}

// Cubic interpolation minimizer on [lo, hi] from values and slopes, with
// bisection as the fallback.
fn cubic_min<S: Scalar>(a: S, fa: S, da: S, b: S, fb: S, db: S) -> S {
    let d1 = da + db - lit::<S>(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mid = (a + b) * lit(0.5);
    if !(disc >= S::zero()) {
        return mid;
    }
    let d2 = disc.sqrt() * (b - a).signum();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + lit::<S>(2.0) * d2);
    let (lo, hi) = (a.min(b), a.max(b));
    let margin = (hi - lo) * lit(0.1);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

/// Strong-Wolfe bracketing and zoom.
fn wolfe_search<S, F>(obj: &mut Counted<F>, p: &Point<S>, dir: &[S], slope0: S, t0: S) -> Option<Point<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
{
    let c1 = lit::<S>(1e-4);
    let c2 = lit::<S>(0.9);
    let mut t_prev = S::zero();
    let mut f_prev = p.f;
    let mut d_prev = slope0;
    let mut t = t0;
    for i in 0..40 {
        let x = step_to(&p.x, dir, t);
        let (f, g) = obj.eval(&x);
        let d = dot(&g, dir);
        if !f.is_finite() {
            t = (t_prev + t) * lit(0.5);
            continue;
        }
        if f > p.f + c1 * t * slope0 || (i > 0 && f >= f_prev) {
            return zoom(obj, p, dir, slope0, (t_prev, f_prev, d_prev), (t, f, d));
        }
        if d.abs() <= -c2 * slope0 {
            return Some(Point { x, f, g });
        }
        if d >= S::zero() {
            return zoom(obj, p, dir, slope0, (t, f, d), (t_prev, f_prev, d_prev));
        }
        t_prev = t;
        f_prev = f;
        d_prev = d;
        t = t * lit(2.0);
    }
    None
}

fn zoom<S, F>(
    obj: &mut Counted<F>,
    p: &Point<S>,
    dir: &[S],
    slope0: S,
    mut lo: (S, S, S),
    mut hi: (S, S, S),
) -> Option<Point<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
{
    let c1 = lit::<S>(1e-4);
    let c2 = lit::<S>(0.9);
    let mut best: Option<Point<S>> = None;
    for _ in 0..60 {
        let t = if hi.1.is_finite() {
            cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
        } else {
            (lo.0 + hi.0) * lit(0.5)
        };
        let x = step_to(&p.x, dir, t);
        let (f, g) = obj.eval(&x);
        let d = dot(&g, dir);
        if f < p.f && best.as_ref().is_none_or(|b| f < b.f) {
            best = Some(Point { x: x.clone(), f, g: g.clone() });
        }
        if f > p.f + c1 * t * slope0 || f >= lo.1 {
            hi = (t, f, d);
        } else {
            if d.abs() <= -c2 * slope0 {
                return Some(Point { x, f, g });
            }
            if d * (hi.0 - lo.0) >= S::zero() {
                hi = lo;
            }
            lo = (t, f, d);
        }
        if (hi.0 - lo.0).abs() <= S::epsilon() * lo.0.abs().max(S::one()) {
            break;
        }
    }
    // Accept any strict decrease found rather than failing outright.
    best
}
