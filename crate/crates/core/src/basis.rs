//! Fourier and B-spline basis systems and the second-derivative roughness
//! penalty `R[k, l] = ∫ φk''(s) φl''(s) ds`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{FasmError, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FasmError::InvalidBasis(format!(
                "domain [{lo}, {hi}] is not a proper finite interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    /// Map `u` into the interval, tolerating rounding just outside the ends.
    fn admit(&self, u: f64) -> Result<f64> {
        let tol = 1e-12 * self.len().max(1.0);
        if !(u >= self.lo - tol && u <= self.hi + tol) {
            return Err(FasmError::OutOfDomain {
                point: u,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(u.clamp(self.lo, self.hi))
    }
}

/// Scaling of the sine/cosine members of a Fourier basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FourierScale {
    /// Constant is 1; every sine and cosine carries this amplitude.
    Amplitude(f64),
    /// L²-orthonormal over one period: `1/√T` and `√(2/T)`.
    Orthonormal,
}

impl Default for FourierScale {
    fn default() -> Self {
        FourierScale::Amplitude(2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Fourier {
        period: f64,
        scale: FourierScale,
    },
    BSpline {
        order: usize,
        interior_knots: Vec<f64>,
        /// Clamped knot vector: each endpoint repeated `order` times.
        knots: Vec<f64>,
    },
}

/// A family of `K` basis functions on a closed interval.
///
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    kind: BasisKind,
    n_basis: usize,
    domain: Interval,
}

/// Symmetric positive semi-definite roughness penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix(DMatrix<f64>);

impl PenaltyMatrix {
    /// Wrap a user-supplied penalty; it must be square, finite and symmetric.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(FasmError::DimensionMismatch(format!(
                "penalty must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        crate::numerics::check_finite(&m)?;
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-10 * m.amax().max(1.0) {
            return Err(FasmError::InvalidBasis(format!(
                "penalty is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Fourier basis with `n_basis` (odd) functions: the constant followed by
/// `sin(mωu)`, `cos(mωu)` pairs for `m = 1, 2, …` with `ω = 2π / period`.
///
/// The functions use absolute `u`, so with period 1 and amplitude 2 the
/// second function is `2 sin(2πu)`.
pub fn make_fourier_basis(
    n_basis: usize,
    domain: Interval,
    period: f64,
    scale: FourierScale,
) -> Result<BasisSystem> {
    if n_basis == 0 || n_basis.is_multiple_of(2) {
        return Err(FasmError::InvalidBasis(format!(
            "a Fourier basis needs an odd number of functions (constant plus sine/cosine pairs), got {n_basis}"
        )));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(FasmError::InvalidBasis(format!(
            "Fourier period must be positive, got {period}"
        )));
    }
    if let FourierScale::Amplitude(a) = scale {
        if !a.is_finite() {
            return Err(FasmError::InvalidBasis(
                "Fourier amplitude must be finite".into(),
            ));
        }
    }
    Interval::new(domain.lo, domain.hi)?;
    Ok(BasisSystem {
        kind: BasisKind::Fourier { period, scale },
        n_basis,
        domain,
    })
}

/// Clamped B-spline basis of the given order (degree `order - 1`).
/// `K = interior_knots.len() + order`.
pub fn make_bspline_basis(
    order: usize,
    interior_knots: &[f64],
    domain: Interval,
) -> Result<BasisSystem> {
    if order < 2 {
        return Err(FasmError::InvalidBasis(format!(
            "B-spline order must be at least 2, got {order}"
        )));
    }
    Interval::new(domain.lo, domain.hi)?;
    for w in interior_knots.windows(2) {
        if !(w[0] < w[1]) {
            return Err(FasmError::InvalidBasis(format!(
                "interior knots must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(&bad) = interior_knots
        .iter()
        .find(|&&t| !(t > domain.lo && t < domain.hi))
    {
        return Err(FasmError::InvalidBasis(format!(
            "interior knot {bad} is not strictly inside [{}, {}]",
            domain.lo, domain.hi
        )));
    }
    let mut knots = Vec::with_capacity(interior_knots.len() + 2 * order);
    knots.extend(std::iter::repeat_n(domain.lo, order));
    knots.extend_from_slice(interior_knots);
    knots.extend(std::iter::repeat_n(domain.hi, order));
    Ok(BasisSystem {
        kind: BasisKind::BSpline {
            order,
            interior_knots: interior_knots.to_vec(),
            knots,
        },
        n_basis: interior_knots.len() + order,
        domain,
    })
}

/// `n_interior` equally spaced interior knots on `domain`.
pub fn equispaced_knots(n_interior: usize, domain: Interval) -> Vec<f64> {
    let step = domain.len() / (n_interior + 1) as f64;
    (1..=n_interior)
        .map(|i| domain.lo + step * i as f64)
        .collect()
}

/// Smoothing-spline basis: a knot at every grid point, so `K = p + order - 2`.
pub fn make_smoothing_spline_basis(grid: &[f64], order: usize) -> Result<BasisSystem> {
    if grid.len() < 2 {
        return Err(FasmError::InvalidBasis(format!(
            "smoothing spline needs at least 2 grid points, got {}",
            grid.len()
        )));
    }
    for w in grid.windows(2) {
        if w[0] == w[1] {
            return Err(FasmError::InvalidBasis(format!(
                "duplicate grid point {}",
                w[0]
            )));
        }
        if !(w[0] < w[1]) {
            return Err(FasmError::InvalidBasis(
                "grid must be sorted ascending".into(),
            ));
        }
    }
    let domain = Interval::new(grid[0], grid[grid.len() - 1])?;
    make_bspline_basis(order, &grid[1..grid.len() - 1], domain)
}

/// `p` equally spaced points covering `[lo, hi]`, endpoints included.
pub fn equispaced_grid(p: usize, domain: Interval) -> Vec<f64> {
    match p {
        0 => Vec::new(),
        1 => vec![domain.lo],
        _ => {
            let step = domain.len() / (p - 1) as f64;
            let mut g: Vec<f64> = (0..p).map(|j| domain.lo + step * j as f64).collect();
            g[p - 1] = domain.hi;
            g
        }
    }
}

impl BasisSystem {
    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match &self.kind {
            BasisKind::Fourier { period, scale } => {
                format!(
                    "fourier(K={}, period={}, scale={:?})",
                    self.n_basis, period, scale
                )
            }
            BasisKind::BSpline {
                order,
                interior_knots,
                ..
            } => format!(
                "bspline(order={}, interior_knots={}, K={})",
                order,
                interior_knots.len(),
                self.n_basis
            ),
        }
    }

    /// `p × K` matrix of basis values, entry `(j, k) = φk(u_j)`.
    pub fn eval(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        self.eval_derivative(points, 0)
    }

    /// `p × K` matrix of second derivatives. B-splines use the
    /// right-continuous value at interior knots.
    pub fn eval_deriv2(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        self.eval_derivative(points, 2)
    }

    fn eval_derivative(&self, points: &[f64], deriv: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(points.len(), self.n_basis);
        match &self.kind {
            BasisKind::Fourier { period, scale } => {
                let mut row = vec![0.0; self.n_basis];
                for (j, &u) in points.iter().enumerate() {
                    let u = self.domain.admit(u)?;
                    fourier_row(self.n_basis, *period, *scale, u, deriv, &mut row);
                    for (k, v) in row.iter().enumerate() {
                        out[(j, k)] = *v;
                    }
                }
            }
            BasisKind::BSpline { order, knots, .. } => {
                let mut ws = BSplineWork::new(*order);
                for (j, &u) in points.iter().enumerate() {
                    let u = self.domain.admit(u)?;
                    let span = find_span(knots, self.n_basis, *order, u);
                    ws.eval(knots, *order, span, u, deriv);
                    let first = span + 1 - order;
                    for a in 0..*order {
                        out[(j, first + a)] = ws.ders[deriv][a];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Roughness penalty `∫ D²Φ(s) D²Φ(s)' ds` over the domain.
    pub fn penalty_matrix(&self) -> PenaltyMatrix {
        let k = self.n_basis;
        let mut r = DMatrix::zeros(k, k);
        match &self.kind {
            BasisKind::Fourier { period, scale } => {
                let terms: Vec<Cosine> = (0..k).map(|i| fourier_term(i, *period, *scale)).collect();
                for a in 0..k {
                    for b in a..k {
                        let v = fourier_penalty_entry(&terms[a], &terms[b], self.domain);
                        r[(a, b)] = v;
                        r[(b, a)] = v;
                    }
                }
            }
            BasisKind::BSpline { order, knots, .. } => {
                let order = *order;
                if order < 3 {
                    // Piecewise-linear functions have zero second derivative a.e.
                    return PenaltyMatrix(r);
                }
                // Integrand is piecewise polynomial of degree 2(order - 3).
                let n_nodes = (order - 2).max(2);
                let (nodes, weights) = gauss_legendre(n_nodes);
                let mut ws = BSplineWork::new(order);
                for span in (order - 1)..k {
                    let (a, b) = (knots[span], knots[span + 1]);
                    if !(b > a) {
                        continue;
                    }
                    let half = 0.5 * (b - a);
                    let mid = 0.5 * (a + b);
                    let first = span + 1 - order;
                    for (x, w) in nodes.iter().zip(&weights) {
                        let u = mid + half * x;
                        ws.eval(knots, order, span, u, 2);
                        let d2 = &ws.ders[2];
                        for i in 0..order {
                            for j in i..order {
                                r[(first + i, first + j)] += w * half * d2[i] * d2[j];
                            }
                        }
                    }
                }
                for i in 0..k {
                    for j in (i + 1)..k {
                        r[(j, i)] = r[(i, j)];
                    }
                }
            }
        }
        PenaltyMatrix(r)
    }
}

/// `eval_basis(basis, points)`.
pub fn eval_basis(basis: &BasisSystem, points: &[f64]) -> Result<DMatrix<f64>> {
    basis.eval(points)
}

/// `eval_basis_deriv2(basis, points)`.
pub fn eval_basis_deriv2(basis: &BasisSystem, points: &[f64]) -> Result<DMatrix<f64>> {
    basis.eval_deriv2(points)
}

/// `penalty_matrix(basis)`.
pub fn penalty_matrix(basis: &BasisSystem) -> PenaltyMatrix {
    basis.penalty_matrix()
}

// ---------------------------------------------------------------------------
// Fourier

/// `amp · cos(freq · u + phase)`.
#[derive(Debug, Clone, Copy)]
struct Cosine {
    amp: f64,
    freq: f64,
    phase: f64,
}

fn fourier_term(index: usize, period: f64, scale: FourierScale) -> Cosine {
    let (c0, a) = match scale {
        FourierScale::Amplitude(a) => (1.0, a),
        FourierScale::Orthonormal => (1.0 / period.sqrt(), (2.0 / period).sqrt()),
    };
    if index == 0 {
        return Cosine {
            amp: c0,
            freq: 0.0,
            phase: 0.0,
        };
    }
    let m = index.div_ceil(2) as f64;
    let freq = 2.0 * PI * m / period;
    let phase = if index % 2 == 1 { -0.5 * PI } else { 0.0 };
    Cosine {
        amp: a,
        freq,
        phase,
    }
}

fn fourier_row(
    n_basis: usize,
    period: f64,
    scale: FourierScale,
    u: f64,
    deriv: usize,
    row: &mut [f64],
) {
    for (k, slot) in row.iter_mut().enumerate().take(n_basis) {
        let t = fourier_term(k, period, scale);
        let arg = t.freq * u;
        // sin/cos evaluated directly rather than through the phase shift.
        let base = if k == 0 {
            1.0
        } else if k % 2 == 1 {
            arg.sin()
        } else {
            arg.cos()
        };
        *slot = match deriv {
            0 => t.amp * base,
            2 => -t.freq * t.freq * t.amp * base,
            _ => unreachable!("only values and second derivatives are exposed"),
        };
    }
}

/// `∫_lo^hi cos(w u + θ) du`.
fn cos_integral(w: f64, theta: f64, dom: Interval) -> f64 {
    if w == 0.0 {
        dom.len() * theta.cos()
    } else {
        ((w * dom.hi + theta).sin() - (w * dom.lo + theta).sin()) / w
    }
}

fn fourier_penalty_entry(a: &Cosine, b: &Cosine, dom: Interval) -> f64 {
    let weight = a.freq * a.freq * b.freq * b.freq * a.amp * b.amp;
    if weight == 0.0 {
        return 0.0;
    }
    0.5 * weight
        * (cos_integral(a.freq - b.freq, a.phase - b.phase, dom)
            + cos_integral(a.freq + b.freq, a.phase + b.phase, dom))
}

// ---------------------------------------------------------------------------
// B-splines

/// Index `i` with `knots[i] <= u < knots[i + 1]`, restricted to
/// `order - 1 ..= n_basis - 1`; the right endpoint maps to the last span.
fn find_span(knots: &[f64], n_basis: usize, order: usize, u: f64) -> usize {
    let low = order - 1;
    let high = n_basis - 1;
    if u >= knots[high + 1] {
        return high;
    }
    if u <= knots[low] {
        return low;
    }
    // Last index in [low, high] whose knot is <= u.
    let slice = &knots[low..=high];
    low + slice.partition_point(|&t| t <= u) - 1
}

/// Scratch space for derivative evaluation of the `order` nonzero B-splines
/// on a span (de Boor's triangular scheme with derivative coefficients).
struct BSplineWork {
    ndu: Vec<Vec<f64>>,
    left: Vec<f64>,
    right: Vec<f64>,
    a: [Vec<f64>; 2],
    /// `ders[d][i]`: d-th derivative of the i-th nonzero function (d ≤ 2).
    ders: [Vec<f64>; 3],
}

impl BSplineWork {
    fn new(order: usize) -> Self {
        Self {
            ndu: vec![vec![0.0; order]; order],
            left: vec![0.0; order],
            right: vec![0.0; order],
            a: [vec![0.0; order], vec![0.0; order]],
            ders: [vec![0.0; order], vec![0.0; order], vec![0.0; order]],
        }
    }

    fn eval(&mut self, knots: &[f64], order: usize, span: usize, u: f64, max_deriv: usize) {
        let deg = order - 1;
        let ndu = &mut self.ndu;
        ndu[0][0] = 1.0;
        for j in 1..=deg {
            self.left[j] = u - knots[span + 1 - j];
            self.right[j] = knots[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                // Lower triangle holds knot differences, upper the values.
                ndu[j][r] = self.right[r + 1] + self.left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + self.right[r + 1] * temp;
                saved = self.left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=deg {
            self.ders[0][j] = ndu[j][deg];
        }
        for d in 1..=2 {
            self.ders[d].iter_mut().for_each(|v| *v = 0.0);
        }
        let n = max_deriv.min(deg);
        if n == 0 {
            return;
        }
        for r in 0..=deg {
            let (mut s1, mut s2) = (0usize, 1usize);
            self.a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = deg - k;
                if rk >= 0 {
                    let rk = rk as usize;
                    self.a[s2][0] = self.a[s1][0] / ndu[pk + 1][rk];
                    d = self.a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize) - 1 <= pk as isize {
                    k - 1
                } else {
                    deg - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    self.a[s2][j] = (self.a[s1][j] - self.a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += self.a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    self.a[s2][k] = -self.a[s1][k - 1] / ndu[pk + 1][r];
                    d += self.a[s2][k] * ndu[r][pk];
                }
                self.ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = deg as f64;
        for k in 1..=n {
            for v in self.ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (deg - k) as f64;
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
