//! Brute-force reference solvers used as test oracles. Nothing here calls
//! into the solver code beyond plain data access.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((m, n), || randn(rng))
}

pub fn randn_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || randn(rng))
}

/// Golden-section minimization of `f` on `[lo, hi]` down to width `tol`.
pub fn golden(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// Grid with spacing `step` over `[lo, hi]`, then golden refinement to 1e−10
/// around the best grid point. The bracket endpoints are kept as candidates.
pub fn grid_golden_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let count = ((hi - lo) / step).ceil() as usize;
    let mut best = (lo, f(lo));
    for i in 0..=count {
        let u = (lo + i as f64 * step).min(hi);
        let v = f(u);
        if v < best.1 {
            best = (u, v);
        }
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let refined = golden(f, a, b, 1e-10);
    [refined, (a, f(a)), (b, f(b)), best]
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
}

/// Reference minimizer over `u ≥ 0` of `½(u − t)² + λ·pen(u)` for a
/// nondecreasing penalty; the search interval is `[0, hi]`.
pub fn scalar_prox_oracle(pen: &dyn Fn(f64) -> f64, t: f64, lambda: f64, hi: f64) -> (f64, f64) {
    let f = |u: f64| 0.5 * (u - t) * (u - t) + lambda * pen(u);
    grid_golden_min(&f, 0.0, hi, 1e-4)
}

/// Minimizes the weighted ℓ1 norm `Σ wᵢ|xᵢ|` over `{x : ‖A x − b‖² ≤ σ}`
/// for n ∈ {2, 3} and `‖b‖² > σ`.
///
/// Every `x` is `r·d` with `Σ wᵢ|dᵢ| = 1`, and the smallest feasible `r`
/// along a ray solves a scalar quadratic, so the optimum is the minimum of
/// `r(d)` over directions. Directions are searched on an angle grid (1-D for
/// n = 2, 2-D for n = 3) followed by nested grids of shrinking spacing
/// around the incumbent.
pub fn weighted_l1_grid(a: &Array2<f64>, b: &Array1<f64>, sigma: f64, w: &Array1<f64>) -> (Array1<f64>, f64) {
    let n = a.ncols();
    assert!(n == 2 || n == 3);
    assert!(b.dot(b) > sigma);
    let direction = |angles: &[f64]| -> Array1<f64> {
        let u = if n == 2 {
            Array1::from(vec![angles[0].cos(), angles[0].sin()])
        } else {
            let (theta, phi) = (angles[0], angles[1]);
            Array1::from(vec![phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()])
        };
        let scale: f64 = u.iter().zip(w.iter()).map(|(ui, wi)| wi * ui.abs()).sum();
        u / scale
    };
    let radius = |angles: &[f64]| -> f64 {
        let c = a.dot(&direction(angles));
        let (cc, cb) = (c.dot(&c), c.dot(b));
        let disc = cb * cb - cc * (b.dot(b) - sigma);
        if cb <= 0.0 || disc < 0.0 || cc == 0.0 {
            f64::INFINITY
        } else {
            (cb - disc.sqrt()) / cc
        }
    };

    let dims = n - 1;
    let tau = 2.0 * std::f64::consts::PI;
    let ranges: Vec<(f64, f64)> = if n == 2 { vec![(0.0, tau)] } else { vec![(0.0, tau), (0.0, std::f64::consts::PI)] };
    let coarse: Vec<usize> = if n == 2 { vec![20_000] } else { vec![800, 400] };
    let mut best_angles = vec![0.0; dims];
    let mut best = f64::INFINITY;
    let mut spacing: Vec<f64> = ranges.iter().zip(&coarse).map(|(r, &c)| (r.1 - r.0) / c as f64).collect();
    let total: usize = coarse.iter().map(|c| c + 1).product();
    for idx in 0..total {
        let mut rem = idx;
        let angles: Vec<f64> = (0..dims)
            .map(|j| {
                let i = rem % (coarse[j] + 1);
                rem /= coarse[j] + 1;
                ranges[j].0 + i as f64 * spacing[j]
            })
            .collect();
        let v = radius(&angles);
        if v < best {
            best = v;
            best_angles = angles;
        }
    }
    let k: i64 = if n == 2 { 40 } else { 12 };
    let side = (2 * k + 1) as usize;
    while spacing.iter().any(|&s| s > 1e-13) {
        spacing.iter_mut().for_each(|s| *s *= 4.0 / k as f64);
        let center = best_angles.clone();
        for idx in 0..side.pow(dims as u32) {
            let mut rem = idx;
            let angles: Vec<f64> = (0..dims)
                .map(|j| {
                    let off = (rem % side) as i64 - k;
                    rem /= side;
                    center[j] + off as f64 * spacing[j]
                })
                .collect();
            let v = radius(&angles);
            if v < best {
                best = v;
                best_angles = angles;
            }
        }
    }
    (direction(&best_angles) * best, best)
}

/// Distance from `−c` to the ball of radius `w` in ℝ^d (d ≤ 2), computed by
/// searching directions and projecting onto each ray.
pub fn ball_distance_oracle(c: &[f64], w: f64) -> f64 {
    let dist_on_ray = |ux: f64, uy: f64| {
        let proj = -(ux * c[0] + uy * c.get(1).copied().unwrap_or(0.0));
        let r = proj.clamp(0.0, w);
        let dx = r * ux + c[0];
        let dy = r * uy + c.get(1).copied().unwrap_or(0.0);
        (dx * dx + dy * dy).sqrt()
    };
    if c.len() == 1 {
        return dist_on_ray(1.0, 0.0).min(dist_on_ray(-1.0, 0.0));
    }
    let f = |theta: f64| dist_on_ray(theta.cos(), theta.sin());
    let tau = 2.0 * std::f64::consts::PI;
    let (_, coarse) = grid_golden_min(&f, 0.0, tau, 1e-3);
    coarse
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        g[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// `x = Aᵀ(AAᵀ)⁻¹b` through Gaussian elimination with partial pivoting on
/// the normal equations; an independent check of the least-norm solution.
pub fn least_norm_normal_equations(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let m = a.nrows();
    let mut g = a.dot(&a.t());
    let mut rhs = b.clone();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| g[[i, col]].abs().total_cmp(&g[[j, col]].abs())).unwrap();
        if piv != col {
            for k in 0..m {
                g.swap([col, k], [piv, k]);
            }
            rhs.swap(col, piv);
        }
        for row in col + 1..m {
            let factor = g[[row, col]] / g[[col, col]];
            for k in col..m {
                g[[row, k]] -= factor * g[[col, k]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut y = Array1::zeros(m);
    for row in (0..m).rev() {
        let mut acc = rhs[row];
        for k in row + 1..m {
            acc -= g[[row, k]] * y[k];
        }
        y[row] = acc / g[[row, row]];
    }
    a.t().dot(&y)
}
