//! Small deterministic optimizers: golden-section search and
//! grid-then-refine maximization of smooth periodic functions.

use crate::angle::{wrap_pi, wrap_tau};
use rayon::prelude::*;
use std::f64::consts::TAU;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // the midpoint can lose to an interior probe by rounding
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((x, fx), |best, c| if c.1 > best.1 { c } else { best })
}

/// A located maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak2 {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Maximizes a smooth 2π-periodic function of two angles: scan an `n × n`
/// grid (rows in parallel), then refine the best local maxima.
pub fn maximize_periodic_2d<F>(f: &F, n: usize) -> Peak2
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let step = TAU / n as f64;
    let grid: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = i as f64 * step;
            (0..n).map(move |j| f(a, j as f64 * step))
        })
        .collect();
    maximize_from_grid(f, &grid, n)
}

/// Refinement stage of [`maximize_periodic_2d`] for a precomputed row-major grid.
pub fn maximize_from_grid<F>(f: &F, grid: &[f64], n: usize) -> Peak2
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    const CANDIDATES: usize = 12;
    let step = TAU / n as f64;
    let at = |i: usize, j: usize| grid[(i % n) * n + (j % n)];
    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            let mut is_peak = true;
            'nb: for di in [n - 1, 0, 1] {
                for dj in [n - 1, 0, 1] {
                    if (di, dj) != (0, 0) && at(i + di, j + dj) > v {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push((v, i, j));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    peaks.truncate(CANDIDATES);
    let mut best = Peak2 {
        value: f64::NEG_INFINITY,
        alpha: 0.0,
        beta: 0.0,
    };
    for &(_, i, j) in &peaks {
        let p = refine_2d(f, i as f64 * step, j as f64 * step, step);
        if p.value > best.value {
            best = p;
        }
    }
    best
}

/// Local refinement around `(a, b)`: coordinate golden-section sweeps, then
/// safeguarded Newton steps on finite-difference derivatives.
pub fn refine_2d<F: Fn(f64, f64) -> f64>(f: &F, a: f64, b: f64, h: f64) -> Peak2 {
    let (mut a, mut b) = (a, b);
    let mut v = f(a, b);
    let mut width = h;
    for _ in 0..6 {
        let (na, va) = golden_max(|x| f(x, b), a - width, a + width, 1e-13);
        if va >= v {
            a = na;
            v = va;
        }
        let (nb, vb) = golden_max(|y| f(a, y), b - width, b + width, 1e-13);
        if vb >= v {
            b = nb;
            v = vb;
        }
        width = (width * 0.5).max(1e-6);
    }
    let d = 1e-4;
    for _ in 0..30 {
        let faa = (f(a + d, b) - 2.0 * v + f(a - d, b)) / (d * d);
        let fbb = (f(a, b + d) - 2.0 * v + f(a, b - d)) / (d * d);
        let fab = (f(a + d, b + d) - f(a + d, b - d) - f(a - d, b + d) + f(a - d, b - d))
            / (4.0 * d * d);
        let ga = (f(a + d, b) - f(a - d, b)) / (2.0 * d);
        let gb = (f(a, b + d) - f(a, b - d)) / (2.0 * d);
        let det = faa * fbb - fab * fab;
        let (sa, sb) = if faa < 0.0 && det > 1e-14 {
            ((-fbb * ga + fab * gb) / det, (fab * ga - faa * gb) / det)
        } else {
            (1e-3 * ga, 1e-3 * gb)
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let (ta, tb) = (a + t * sa, b + t * sb);
            let tv = f(ta, tb);
            if tv > v {
                a = ta;
                b = tb;
                v = tv;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (sa.abs() + sb.abs()) * t < 1e-13 {
            break;
        }
    }
    Peak2 {
        value: v,
        alpha: wrap_tau(a),
        beta: wrap_tau(b),
    }
}

/// Maximizes a smooth 2π-periodic function of one angle by scan and golden-section refinement.
pub fn maximize_periodic_1d<F: Fn(f64) -> f64>(f: F, n: usize) -> (f64, f64) {
    let step = TAU / n as f64;
    let vals: Vec<f64> = (0..n).map(|i| f(i as f64 * step)).collect();
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        let v = vals[i];
        if v >= vals[(i + n - 1) % n] && v >= vals[(i + 1) % n] {
            let c = i as f64 * step;
            let (x, fx) = golden_max(&f, c - step, c + step, 1e-14);
            if fx > best.1 {
                best = (wrap_pi(x), fx);
            }
        }
    }
    best
}
