//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use aniso_ident::forces::{total_force, wrap_displacement, Control, ForceParams, Vec2};

/// Force through the public API from a raw (unwrapped) displacement.
pub fn force_at(d: Vec2, u: Control, p: &ForceParams) -> Vec2 {
    total_force(wrap_displacement(d).unwrap(), u, p)
}

/// Fourth-order central difference of a vector-valued function.
pub fn fd4<F: Fn(f64) -> Vec2>(f: F, x: f64, h: f64) -> Vec2 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Minimum of `sum_i cost[i][sigma(i)]` over all permutations (Heap's algorithm).
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Squared periodic distance written out independently of the library.
pub fn torus_sq(a: Vec2, b: Vec2) -> f64 {
    let m = |t: f64| {
        let t = (t % 1.0 + 1.0) % 1.0;
        t.min(1.0 - t)
    };
    m(a.x - b.x).powi(2) + m(a.y - b.y).powi(2)
}

/// Root of `(alpha r^2 + beta) e^{-e_R r} = gamma r e^{-e_A r}` by bisection.
pub fn equilibrium_distance(p: &ForceParams) -> f64 {
    let g = |r: f64| (p.alpha * r * r + p.beta) * (-p.e_r * r).exp() - p.gamma * r * (-p.e_a * r).exp();
    let (mut lo, mut hi) = (1e-6, 1e-2);
    assert!(g(lo) > 0.0 && g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
