//! Dense kernels: Householder QR of `Aᵀ` for the least-norm solution and a
//! power iteration for the top eigenvalue of `AᵀA`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative pivot threshold below which `Aᵀ` is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Thin Householder QR of `Aᵀ` (n×m, m ≤ n), built from the rows of `A`.
///
/// Row `j` of `A` is column `j` of `Aᵀ`, so every reflector is applied to
/// contiguous row slices.
#[derive(Debug, Clone)]
pub struct TransposedQr {
    n: usize,
    /// Unit Householder vectors; reflector `k` acts on coordinates `k..n`.
    reflectors: Vec<Array1<f64>>,
    /// Upper-triangular factor, m×m.
    r: Array2<f64>,
}

impl TransposedQr {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        if m > n {
            return Err(Error::InvalidParameter(format!(
                "expected m <= n, got {m}x{n}"
            )));
        }
        let mut w = a.to_owned();
        let mut r = Array2::<f64>::zeros((m, m));
        let mut reflectors = Vec::with_capacity(m);
        for k in 0..m {
            let mut v = w.row(k).slice(ndarray::s![k..]).to_owned();
            let norm = v.dot(&v).sqrt();
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = v.dot(&v).sqrt();
            if vnorm > 0.0 {
                v /= vnorm;
            }
            r[[k, k]] = alpha;
            for j in (k + 1)..m {
                let mut col = w.row_mut(j);
                let mut tail = col.slice_mut(ndarray::s![k..]);
                let proj = 2.0 * v.dot(&tail);
                tail.scaled_add(-proj, &v);
                r[[k, j]] = tail[0];
            }
            reflectors.push(v);
        }
        Ok(Self { n, reflectors, r })
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    /// min |R_ii| / max |R_ii|.
    pub fn pivot_ratio(&self) -> f64 {
        let diag = self.r.diag();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| {
            (lo.min(d.abs()), hi.max(d.abs()))
        });
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }

    pub fn check_full_rank(&self) -> Result<()> {
        let ratio = self.pivot_ratio();
        if ratio < RANK_TOL {
            Err(Error::RankDeficient { ratio })
        } else {
            Ok(())
        }
    }

    /// Least-norm solution of `A x = b`: `x = Q R⁻ᵀ b`.
    pub fn min_norm_solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let m = self.r.nrows();
        if b.len() != m {
            return Err(Error::Dimension {
                what: "right-hand side",
                expected: m,
                found: b.len(),
            });
        }
        self.check_full_rank()?;
        // Rᵀ y = b, forward substitution.
        let mut y = Array1::<f64>::zeros(m);
        for i in 0..m {
            let mut acc = b[i];
            for k in 0..i {
                acc -= self.r[[k, i]] * y[k];
            }
            y[i] = acc / self.r[[i, i]];
        }
        let mut x = Array1::<f64>::zeros(self.n);
        x.slice_mut(ndarray::s![..m]).assign(&y);
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let mut tail = x.slice_mut(ndarray::s![k..]);
            let proj = 2.0 * v.dot(&tail);
            tail.scaled_add(-proj, v);
        }
        Ok(x)
    }
}

/// Least-norm solution `A†b` for a full-row-rank `A`.
pub fn min_norm_solution(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    TransposedQr::new(a)?.min_norm_solve(b)
}

/// Largest eigenvalue of `AᵀA` by power iteration on `x ↦ Aᵀ(Ax)`.
pub fn lambda_max_ata(a: ArrayView2<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut x = Array1::from_shape_fn(n, |i| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    x /= x.dot(&x).sqrt();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let ax = a.dot(&x);
        let y = a.t().dot(&ax);
        let next = x.dot(&y);
        let norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        x = y / norm;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Scales row `i` of `a` by `scale[i]`.
pub fn scale_rows(a: ArrayView2<f64>, scale: ArrayView1<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for (mut row, &s) in out.axis_iter_mut(Axis(0)).zip(scale.iter()) {
        row *= s;
    }
    out
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}
