//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Cyclic Jacobi eigenvalue iteration; eigenvalues descending.
pub fn jacobi_eig(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = s.nrows();
    let mut a = s.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s_ = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s_ * akq;
                    a[(k, q)] = s_ * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s_ * aqk;
                    a[(q, k)] = s_ * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s_ * vkq;
                    v[(k, q)] = s_ * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| a[(k, k)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}

/// Full clamped knot vector for `order` with the given interior knots on
/// `[lo, hi]`.
pub fn clamped_knots(order: usize, interior: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut t = vec![lo; order];
    t.extend_from_slice(interior);
    t.extend(std::iter::repeat_n(hi, order));
    t
}

/// Cox–de Boor recursion, right-continuous, with the last interval closed.
pub fn cox_de_boor(t: &[f64], i: usize, order: usize, u: f64) -> f64 {
    if order == 1 {
        let last = *t.last().unwrap();
        let inside = t[i] <= u && u < t[i + 1];
        let at_end = u == last && t[i] < t[i + 1] && t[i + 1] == last;
        return if inside || at_end { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = t[i + order - 1] - t[i];
    if d1 > 0.0 {
        v += (u - t[i]) / d1 * cox_de_boor(t, i, order - 1, u);
    }
    let d2 = t[i + order] - t[i + 1];
    if d2 > 0.0 {
        v += (t[i + order] - u) / d2 * cox_de_boor(t, i + 1, order - 1, u);
    }
    v
}

/// `deriv`-th derivative of `B_{i,order}` by the derivative recursion.
pub fn cox_de_boor_deriv(t: &[f64], i: usize, order: usize, u: f64, deriv: usize) -> f64 {
    if deriv == 0 {
        return cox_de_boor(t, i, order, u);
    }
    if order == 1 {
        return 0.0;
    }
    let k = (order - 1) as f64;
    let mut v = 0.0;
    let d1 = t[i + order - 1] - t[i];
    if d1 > 0.0 {
        v += k / d1 * cox_de_boor_deriv(t, i, order - 1, u, deriv - 1);
    }
    let d2 = t[i + order] - t[i + 1];
    if d2 > 0.0 {
        v -= k / d2 * cox_de_boor_deriv(t, i + 1, order - 1, u, deriv - 1);
    }
    v
}

/// Midpoint-rule `∫ B''_a B''_b` over each knot interval with `m` cells.
pub fn bspline_penalty_midpoint(
    order: usize,
    interior: &[f64],
    lo: f64,
    hi: f64,
    m: usize,
) -> DMatrix<f64> {
    let t = clamped_knots(order, interior, lo, hi);
    let k = interior.len() + order;
    let mut breaks = vec![lo];
    breaks.extend_from_slice(interior);
    breaks.push(hi);
    let mut r = DMatrix::zeros(k, k);
    let mut d2 = vec![0.0; k];
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / m as f64;
        for c in 0..m {
            let u = w[0] + (c as f64 + 0.5) * h;
            for (a, slot) in d2.iter_mut().enumerate() {
                *slot = cox_de_boor_deriv(&t, a, order, u, 2);
            }
            for a in 0..k {
                if d2[a] == 0.0 {
                    continue;
                }
                for b in 0..k {
                    r[(a, b)] += h * d2[a] * d2[b];
                }
            }
        }
    }
    r
}

/// Two-pass sample covariance, entry by entry.
pub fn two_pass_covariance(y: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, n) = y.shape();
    let means: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| y[(j, i)]).sum::<f64>() / n as f64)
        .collect();
    DMatrix::from_fn(p, p, |j, k| {
        (0..n)
            .map(|i| (y[(j, i)] - means[j]) * (y[(k, i)] - means[k]))
            .sum::<f64>()
            / (n - 1) as f64
    })
}

/// Orthogonal projector onto the column span of `a`.
pub fn span_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = a.transpose() * a;
    a * gram.try_inverse().expect("full column rank") * a.transpose()
}

/// Small deterministic pseudo-random stream for building fixtures.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64)
    }

    /// Approximately standard normal (sum of twelve uniforms).
    pub fn normal(&mut self) -> f64 {
        (0..12).map(|_| self.uniform()).sum::<f64>() - 6.0
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.normal())
    }
}

/// Richardson-extrapolated midpoint rule (`m` and `2m` cells), exact for the
/// piecewise-quadratic integrands of cubic splines.
pub fn bspline_penalty_oracle(
    order: usize,
    interior: &[f64],
    lo: f64,
    hi: f64,
    m: usize,
) -> DMatrix<f64> {
    let coarse = bspline_penalty_midpoint(order, interior, lo, hi, m);
    let fine = bspline_penalty_midpoint(order, interior, lo, hi, 2 * m);
    (fine * 4.0 - coarse) / 3.0
}
