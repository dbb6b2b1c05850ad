//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex64`. The
//! pieces the rest of the crate relies on are a partially pivoted LU with an
//! explicit singularity threshold, a deterministic eigendecomposition built
//! on the complex Schur form, dense Lyapunov solvers and compensated sums.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Relative pivot threshold for declaring a matrix singular.
pub const PIVOT_TOL: f64 = 1e-14;

/// Relative eigenvalue separation below which a matrix counts as defective.
pub const EIG_SEPARATION_TOL: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| c(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn max_imag(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.im.abs()))
}

pub fn norm_inf(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_diagonal(m: &CMat, tol: f64) -> bool {
    let scale = frobenius(m).max(1e-300);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)].norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: CMat,
    perm: Vec<usize>,
}

impl Lu {
    /// Factor `a`; fails when a pivot drops below `PIVOT_TOL * ‖a‖∞`.
    pub fn factor(a: &CMat) -> std::result::Result<Self, ()> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU of a non-square matrix");
        let thresh = PIVOT_TOL * norm_inf(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].norm();
            for i in (k + 1)..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if !(best > thresh) || best == 0.0 {
                return Err(());
            }
            if piv != k {
                lu.swap_rows(k, piv);
                perm.swap(k, piv);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != C64::new(0.0, 0.0) {
                    for j in (k + 1)..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solve `A X = rhs`.
    pub fn solve(&self, rhs: &CMat) -> CMat {
        let n = self.dim();
        let mut x = CMat::zeros(n, rhs.ncols());
        for col in 0..rhs.ncols() {
            for i in 0..n {
                x[(i, col)] = rhs[(self.perm[i], col)];
            }
            for i in 0..n {
                let mut s = x[(i, col)];
                for j in 0..i {
                    s -= self.lu[(i, j)] * x[(j, col)];
                }
                x[(i, col)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for j in (i + 1)..n {
                    s -= self.lu[(i, j)] * x[(j, col)];
                }
                x[(i, col)] = s / self.lu[(i, i)];
            }
        }
        x
    }

    /// Solve `A* X = rhs` reusing the factorization.
    pub fn solve_adjoint(&self, rhs: &CMat) -> CMat {
        // A* = U* L* P, so solve U* z = rhs, L* w = z, then x = Pᵀ w.
        let n = self.dim();
        let mut out = CMat::zeros(n, rhs.ncols());
        let mut w = vec![C64::new(0.0, 0.0); n];
        for col in 0..rhs.ncols() {
            for i in 0..n {
                let mut s = rhs[(i, col)];
                for j in 0..i {
                    s -= self.lu[(j, i)].conj() * w[j];
                }
                w[i] = s / self.lu[(i, i)].conj();
            }
            for i in (0..n).rev() {
                let mut s = w[i];
                for j in (i + 1)..n {
                    s -= self.lu[(j, i)].conj() * w[j];
                }
                w[i] = s;
            }
            for i in 0..n {
                out[(self.perm[i], col)] = w[i];
            }
        }
        out
    }

    pub fn determinant(&self) -> C64 {
        let n = self.dim();
        let mut det = C64::new(1.0, 0.0);
        for i in 0..n {
            det *= self.lu[(i, i)];
        }
        // parity of the permutation
        let mut seen = vec![false; n];
        let mut sign = 1.0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                sign = -sign;
            }
        }
        det * sign
    }
}

/// Determinant through LU, zero when the factorization is singular.
pub fn determinant(a: &CMat) -> C64 {
    match Lu::factor(a) {
        Ok(lu) => lu.determinant(),
        Err(()) => C64::new(0.0, 0.0),
    }
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    let lu = Lu::factor(a).ok()?;
    Some(lu.solve(&CMat::identity(a.nrows(), a.ncols())))
}

/// Order complex values by real part, then imaginary part. Values whose real
/// parts agree to a relative tolerance are treated as tied.
pub fn sorted_order(values: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re));
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let anchor = values[idx[start]].re;
        let mut end = start + 1;
        while end < idx.len() && (values[idx[end]].re - anchor).abs() <= tol {
            end += 1;
        }
        let mut group = idx[start..end].to_vec();
        group.sort_by(|&a, &b| values[a].im.total_cmp(&values[b].im));
        out.extend(group);
        start = end;
    }
    out
}

/// Scale to unit 2-norm with the first non-negligible entry real positive.
pub fn normalize_vector(v: &mut CVec) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    let amax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lead = v
        .iter()
        .find(|z| z.norm() > 1e-8 * amax)
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = lead.conj() / lead.norm();
    for z in v.iter_mut() {
        *z = *z * phase / nrm;
    }
}

/// Right eigendecomposition `A T = T diag(values)` with distinct eigenvalues.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMat,
}

/// Complex Schur form `A = Q U Q*`.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0)));
    }
    let sch = nalgebra::linalg::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::NotDiagonalizable("Schur iteration did not converge".into()))?;
    let (q, mut u) = sch.unpack();
    for i in 0..n {
        for j in 0..i {
            u[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok((q, u))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    let (_, u) = schur(a)?;
    Ok((0..a.nrows()).map(|i| u[(i, i)]).collect())
}

pub fn spectral_abscissa(a: &CMat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn min_separation(values: &[C64]) -> f64 {
    let mut sep = f64::INFINITY;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            sep = sep.min((values[i] - values[j]).norm());
        }
    }
    sep
}

/// Eigendecomposition with sorted eigenvalues and normalized eigenvectors.
///
/// Fails with `NotDiagonalizable` when two eigenvalues are closer than
/// `EIG_SEPARATION_TOL * max|λ|`.
pub fn eig(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let (q, u) = schur(a)?;
    let raw: Vec<C64> = (0..n).map(|i| u[(i, i)]).collect();
    let scale = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if n > 1 {
        let sep = min_separation(&raw);
        if !(sep > EIG_SEPARATION_TOL * scale) {
            return Err(Error::NotDiagonalizable(format!(
                "eigenvalue separation {sep:e} relative to magnitude {scale:e}"
            )));
        }
    }
    let unorm = frobenius(&u).max(1e-300);
    let mut vecs = CMat::zeros(n, n);
    for k in 0..n {
        let mut y = vec![C64::new(0.0, 0.0); n];
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += u[(i, j)] * y[j];
            }
            let mut d = u[(i, i)] - u[(k, k)];
            if d.norm() < f64::EPSILON * unorm {
                d = C64::new(f64::EPSILON * unorm, 0.0);
            }
            y[i] = -s / d;
        }
        let yv = CVec::from_vec(y);
        let mut v = &q * yv;
        normalize_vector(&mut v);
        vecs.set_column(k, &v);
    }
    let order = sorted_order(&raw);
    let values: Vec<C64> = order.iter().map(|&i| raw[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &vecs.column(src));
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Solve `A P + P Aᵀ + Q = 0` through the Kronecker-vectorized system
/// `(I ⊗ A + A ⊗ I) vec(P) = -vec(Q)`.
pub fn lyapunov_kronecker(a: &RMat, q: &RMat) -> Result<RMat> {
    let n = a.nrows();
    let nn = n * n;
    let mut k = CMat::zeros(nn, nn);
    // column-major vec: vec(P)[i + n j] = P[i, j]
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                // (A P)[i, j] = Σ_l A[i, l] P[l, j]
                k[(row, l + n * j)] += c(a[(i, l)], 0.0);
                // (P Aᵀ)[i, j] = Σ_l P[i, l] A[j, l]
                k[(row, i + n * l)] += c(a[(j, l)], 0.0);
            }
        }
    }
    let mut rhs = CMat::zeros(nn, 1);
    for j in 0..n {
        for i in 0..n {
            rhs[(i + n * j, 0)] = c(-q[(i, j)], 0.0);
        }
    }
    let lu = Lu::factor(&k).map_err(|_| Error::SingularAtPoint(C64::new(0.0, 0.0)))?;
    let x = lu.solve(&rhs);
    let mut p = RMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = x[(i + n * j, 0)].re;
        }
    }
    Ok((&p + p.transpose()) * 0.5)
}

/// Solve `A P + P Aᵀ + Q = 0` by the Bartels–Stewart method on the complex
/// Schur form of `A`.
pub fn lyapunov_schur(a: &RMat, q: &RMat) -> Result<RMat> {
    let n = a.nrows();
    let (z, u) = schur(&to_complex(a))?;
    // A = Z U Z*, so U Y + Y U* = -Z* Q Z with P = Z Y Z*.
    let f = -(z.adjoint() * to_complex(q) * &z);
    let mut y = CMat::zeros(n, n);
    // Solve column by column from the last: for column j,
    // U y_j + Σ_{k≥j} y_k conj(U[j,k]) = f_j.
    for j in (0..n).rev() {
        let mut rhs = f.column(j).into_owned();
        for kk in (j + 1)..n {
            let coef = u[(j, kk)].conj();
            for i in 0..n {
                rhs[i] -= y[(i, kk)] * coef;
            }
        }
        let shift = u[(j, j)].conj();
        // (U + shift I) y_j = rhs, upper triangular
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for l in (i + 1)..n {
                s -= u[(i, l)] * y[(l, j)];
            }
            let d = u[(i, i)] + shift;
            if d.norm() == 0.0 {
                return Err(Error::UnstableSystem(0.0));
            }
            y[(i, j)] = s / d;
        }
    }
    let p = &z * y * z.adjoint();
    let pr = real_part(&p);
    Ok((&pr + pr.transpose()) * 0.5)
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum_re: f64,
    comp_re: f64,
    sum_im: f64,
    comp_im: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    pub fn add(&mut self, z: C64) {
        neumaier(&mut self.sum_re, &mut self.comp_re, z.re);
        neumaier(&mut self.sum_im, &mut self.comp_im, z.im);
    }

    pub fn value(&self) -> C64 {
        c(self.sum_re + self.comp_re, self.sum_im + self.comp_im)
    }
}

/// Entry-wise compensated accumulator for matrices of fixed shape.
#[derive(Debug, Clone)]
pub struct MatrixSum {
    rows: usize,
    cols: usize,
    acc: Vec<CompensatedSum>,
}

impl MatrixSum {
    pub fn new(rows: usize, cols: usize) -> Self {
        MatrixSum { rows, cols, acc: vec![CompensatedSum::default(); rows * cols] }
    }

    pub fn add_scaled(&mut self, m: &CMat, w: C64) {
        debug_assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        for j in 0..self.cols {
            for i in 0..self.rows {
                self.acc[i + self.rows * j].add(m[(i, j)] * w);
            }
        }
    }

    pub fn value(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.acc[i + self.rows * j].value())
    }
}

/// Neumaier sum of real values.
pub fn compensated_sum_f64<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut comp) = (0.0, 0.0);
    for x in it {
        neumaier(&mut s, &mut comp, x);
    }
    s + comp
}
