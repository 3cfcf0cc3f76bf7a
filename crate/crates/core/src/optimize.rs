//! Small derivative-free minimizers used by the fitting routines.

use rayon::prelude::*;

const GOLDEN: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

/// Brent's method on `[a, b]`: golden-section steps with parabolic
/// interpolation when it is trusted.
pub fn brent_minimize(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_iter: usize) -> ScalarMin {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evaluations = 1;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMin { x, fx, evaluations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSearchOptions {
    /// Initial step as a fraction of each box side.
    pub initial_step: f64,
    /// Stop once the step (fraction of box side) falls below this.
    pub min_step: f64,
    pub max_evaluations: usize,
}

impl Default for PatternSearchOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.25,
            min_step: 1e-3,
            max_evaluations: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSearchResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    /// Final step, fraction of each box side.
    pub step: f64,
    pub converged: bool,
}

/// Compass search inside the box `[lower, upper]`.
///
/// All `2d` poll points of an iteration are evaluated in parallel; the winner
/// is chosen by value with ties going to the lowest poll index, so the result
/// does not depend on the thread count.
pub fn pattern_search<F>(
    f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &PatternSearchOptions,
) -> PatternSearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = start.len();
    let mut x: Vec<f64> = start
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&s, (&lo, &hi))| s.clamp(lo, hi))
        .collect();
    let mut fx = f(&x);
    let mut evaluations = 1;
    let mut step = options.initial_step;

    while step >= options.min_step && evaluations < options.max_evaluations {
        let polls: Vec<Vec<f64>> = (0..2 * dim)
            .filter_map(|i| {
                let axis = i / 2;
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let mut y = x.clone();
                let width = upper[axis] - lower[axis];
                y[axis] = (y[axis] + sign * step * width).clamp(lower[axis], upper[axis]);
                (y[axis] != x[axis]).then_some(y)
            })
            .collect();
        let values: Vec<f64> = polls.par_iter().map(|y| f(y)).collect();
        evaluations += polls.len();
        let best = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1));
        match best {
            Some((i, &v)) if v < fx => {
                x = polls[i].clone();
                fx = v;
            }
            _ => step *= 0.5,
        }
    }
    PatternSearchResult {
        x,
        fx,
        evaluations,
        step,
        converged: step < options.min_step,
    }
}

/// Evaluates `f` on a tensor grid with `points[i]` nodes per axis and returns
/// the best node. Evaluation runs in parallel, selection is deterministic.
pub fn grid_search<F>(f: F, lower: &[f64], upper: &[f64], points: &[usize]) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let total: usize = points.iter().product();
    let node = |mut idx: usize| -> Vec<f64> {
        let mut x = Vec::with_capacity(points.len());
        for (axis, &n) in points.iter().enumerate() {
            let i = idx % n;
            idx /= n;
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            x.push(lower[axis] + t * (upper[axis] - lower[axis]));
        }
        x
    };
    let values: Vec<f64> = (0..total).into_par_iter().map(|i| f(&node(i))).collect();
    let (best, value) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &v)| (i, v))
        .unwrap_or((0, f64::INFINITY));
    (node(best), value)
}
