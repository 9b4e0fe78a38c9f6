//! Small dense helpers: complex vector kernels and a one-sided Jacobi SVD
//! for the projected matrices produced by the Krylov engines.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex64;
pub type CVec = Vec<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// `x* y`, conjugating the first argument.
#[inline]
pub fn dotc(x: &[C64], y: &[C64]) -> C64 {
    debug_assert_eq!(x.len(), y.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    C64::new(re, im)
}

/// `y += a x`.
#[inline]
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn scale(a: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

#[inline]
pub fn scale_real(a: f64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

#[inline]
pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

#[inline]
pub fn norm(x: &[C64]) -> f64 {
    norm_sqr(x).sqrt()
}

pub fn sub(x: &[C64], y: &[C64]) -> CVec {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn zeros(n: usize) -> CVec {
    vec![ZERO; n]
}

/// Index of the entry with the largest modulus (first on ties).
pub fn argmax_abs(x: &[C64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in x.iter().enumerate() {
        let m = z.norm_sqr();
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((i, m));
        }
    }
    best.map(|(i, _)| i)
}

/// Multiplies `x` by the unit phase that makes its largest-magnitude entry
/// real and positive. Returns the applied phase.
pub fn fix_phase(x: &mut [C64]) -> C64 {
    match argmax_abs(x) {
        Some(i) if x[i].norm() > 0.0 => {
            let p = x[i].conj() / x[i].norm();
            scale(p, x);
            p
        }
        _ => ONE,
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Vector with independent uniform entries in `[-1,1] + i[-1,1]`.
pub fn random_cvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
        .collect()
}

/// Result of a dense SVD `a = u diag(s) v*`; `s` is sorted descending and
/// `u`, `v` have `min(m, n)` orthonormal columns.
#[derive(Clone, Debug)]
pub struct DenseSvd {
    pub u: DMatrix<C64>,
    pub s: Vec<f64>,
    pub v: DMatrix<C64>,
}

/// Thin SVD of a small complex matrix by one-sided (Hestenes) Jacobi
/// rotations. Accurate to working precision in the singular values,
/// including the small ones.
pub fn jacobi_svd(a: &DMatrix<C64>) -> DenseSvd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.adjoint());
        return DenseSvd { u: t.v, s: t.s, v: t.u };
    }
    if n == 0 {
        return DenseSvd { u: DMatrix::zeros(m, 0), s: vec![], v: DMatrix::zeros(0, 0) };
    }
    let mut cols: Vec<CVec> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    let mut vcols: Vec<CVec> = (0..n)
        .map(|j| {
            let mut c = zeros(n);
            c[j] = ONE;
            c
        })
        .collect();
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norm_sqr(&cols[p]);
                let beta = norm_sqr(&cols[q]);
                let gamma = dotc(&cols[p], &cols[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q by the phase of gamma so the pair becomes real.
                let ph = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate_pair(&mut lo[p], &mut hi[0], ph, c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate_pair(&mut lo[p], &mut hi[0], ph, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, f64)> = cols.iter().enumerate().map(|(j, c)| (j, norm(c))).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let s: Vec<f64> = order.iter().map(|&(_, v)| v).collect();
    let smax = s[0];
    let mut ucols: Vec<CVec> = Vec::with_capacity(n);
    let mut vout: Vec<CVec> = Vec::with_capacity(n);
    for &(j, sj) in &order {
        vout.push(vcols[j].clone());
        if sj > eps * smax * (n as f64) {
            let mut u = cols[j].clone();
            scale_real(1.0 / sj, &mut u);
            ucols.push(u);
        } else {
            ucols.push(Vec::new());
        }
    }
    complete_orthonormal(&mut ucols, m);
    DenseSvd {
        u: DMatrix::from_fn(m, n, |i, j| ucols[j][i]),
        s,
        v: DMatrix::from_fn(n, n, |i, j| vout[j][i]),
    }
}

fn rotate_pair(x: &mut [C64], y: &mut [C64], ph: C64, c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let bq = *b * ph;
        let na = *a * c - bq * s;
        let nb = *a * s + bq * c;
        *a = na;
        *b = nb;
    }
}

/// Fills empty entries of `cols` with unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [CVec], m: usize) {
    let mut next_basis = 0usize;
    for j in 0..cols.len() {
        if !cols[j].is_empty() {
            continue;
        }
        loop {
            assert!(next_basis < m, "cannot complete orthonormal basis");
            let mut cand = zeros(m);
            cand[next_basis] = ONE;
            next_basis += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let h = dotc(other, &cand);
                    axpy(-h, other, &mut cand);
                }
            }
            let nn = norm(&cand);
            if nn > 1e-6 {
                scale_real(1.0 / nn, &mut cand);
                cols[j] = cand;
                break;
            }
        }
    }
}

/// Matrix whose columns are the given vectors.
pub fn columns_to_matrix(cols: &[CVec], rows: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// `sum_j coeffs[j] * basis[j]`.
pub fn combine(basis: &[CVec], coeffs: impl IntoIterator<Item = C64>, len: usize) -> CVec {
    let mut out = zeros(len);
    for (b, c) in basis.iter().zip(coeffs) {
        if c != ZERO {
            axpy(c, b, &mut out);
        }
    }
    out
}
