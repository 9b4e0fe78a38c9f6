//! Dense reference computations used as test oracles: materialized
//! tensors, matrix square roots of metrics, and full dense SVD/EVD based
//! thresholding. Only nalgebra's dense factorizations are used here, never
//! the Krylov engines under test.
#![allow(dead_code)]

use liftkit::linalg::{random_cvec, CVec, C64};
use liftkit::lowrank::{FactoredTensor, HermitianFactored};
use liftkit::metric::Metric;
use nalgebra::DMatrix;
use rand::Rng;

pub type CMat = DMatrix<C64>;

pub fn col(x: &[C64]) -> CMat {
    DMatrix::from_column_slice(x.len(), 1, x)
}

pub fn vec_diff(x: &[C64], y: &CMat) -> f64 {
    (col(x) - y).norm()
}

pub fn to_dense_c(h: &DMatrix<f64>) -> CMat {
    h.map(|v| C64::new(v, 0.0))
}

/// Well-conditioned random symmetric positive definite matrix.
pub fn random_spd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / (n as f64) + DMatrix::identity(n, n) * 0.5
}

pub fn dense_metric(h: &DMatrix<f64>) -> Metric {
    Metric::dense(h.clone()).unwrap()
}

/// Matrix of any metric, assembled column by column.
pub fn metric_matrix(m: &Metric) -> CMat {
    let n = m.dim();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[j] = C64::new(1.0, 0.0);
        let c = m.apply(&e).unwrap();
        for i in 0..n {
            out[(i, j)] = c[i];
        }
    }
    out
}

/// Hermitian positive definite square root.
pub fn sqrtm(h: &CMat) -> CMat {
    let e = h.clone().symmetric_eigen();
    let d = CMat::from_diagonal(&e.eigenvalues.map(|v| C64::new(v.sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

pub fn inv_sqrtm(h: &CMat) -> CMat {
    let e = h.clone().symmetric_eigen();
    let d = CMat::from_diagonal(&e.eigenvalues.map(|v| C64::new(1.0 / v.sqrt(), 0.0)));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Random vectors orthonormalized in `metric` by a dense Cholesky-free route:
/// `Q = H^{-1/2} qr(H^{1/2} X)`.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, r: usize, metric: &Metric, rng: &mut R) -> Vec<CVec> {
    let h = metric_matrix(metric);
    let hs = sqrtm(&h);
    let his = inv_sqrtm(&h);
    let x = CMat::from_fn(n, r, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let q = (hs * x).qr().q();
    let q = his * q;
    (0..r).map(|j| q.column(j).iter().copied().collect()).collect()
}

pub fn random_factored<R: Rng + ?Sized>(
    n1: usize,
    n2: usize,
    r: usize,
    m1: &Metric,
    m2: &Metric,
    rng: &mut R,
) -> FactoredTensor {
    let u = random_orthonormal(n1, r, m1, rng);
    let v = random_orthonormal(n2, r, m2, rng);
    let mut s: Vec<f64> = (0..r).map(|_| rng.random_range(0.5..3.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    FactoredTensor::from_triples(n1, n2, s.into_iter().zip(u).zip(v).map(|((s, u), v)| (s, u, v)).collect()).unwrap()
}

pub fn random_hermitian_factored<R: Rng + ?Sized>(n: usize, r: usize, m: &Metric, rng: &mut R) -> HermitianFactored {
    let u = random_orthonormal(n, r, m, rng);
    let l: Vec<f64> = (0..r)
        .map(|_| {
            let v: f64 = rng.random_range(0.5..3.0);
            if rng.random_bool(0.3) {
                -v
            } else {
                v
            }
        })
        .collect();
    HermitianFactored::from_pairs(n, l.into_iter().zip(u).collect()).unwrap()
}

pub fn random_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> CMat {
    let v = random_cvec(rng, m * n);
    CMat::from_vec(m, n, v)
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let a = random_matrix(n, n, rng);
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `sum_k s_k v_k u_k*`.
pub fn materialize_factored(w: &FactoredTensor) -> CMat {
    let (n1, n2) = w.dims();
    let mut out = CMat::zeros(n2, n1);
    for ((s, u), v) in w.values.iter().zip(&w.right).zip(&w.left) {
        out += col(v) * col(u).adjoint() * C64::new(*s, 0.0);
    }
    out
}

pub fn materialize_hermitian(w: &HermitianFactored) -> CMat {
    let n = w.dim();
    let mut out = CMat::zeros(n, n);
    for (l, u) in w.values.iter().zip(&w.factors) {
        out += col(u) * col(u).adjoint() * C64::new(*l, 0.0);
    }
    out
}

/// `<w1, w2> = Re tr(w2* H2 w1 H1)` on materialized tensors.
pub fn tensor_inner(w1: &CMat, w2: &CMat, h1: &CMat, h2: &CMat) -> f64 {
    (w2.adjoint() * h2 * w1 * h1).trace().re
}

pub fn tensor_norm(w: &CMat, h1: &CMat, h2: &CMat) -> f64 {
    tensor_inner(w, w, h1, h2).max(0.0).sqrt()
}

/// Hermitian dilation `[[0, x], [x*, 0]]`; its eigenvalues are `+-s_j`
/// plus `|m - n|` zeros, and an odd spectral function of it carries the
/// same function of the singular values of `x` in its upper right block.
/// Used instead of a complex SVD, whose dense implementation in nalgebra
/// is unreliable for rank-deficient complex input.
pub fn dilation(x: &CMat) -> CMat {
    let (m, n) = x.shape();
    let mut d = CMat::zeros(m + n, m + n);
    d.view_mut((0, m), (m, n)).copy_from(x);
    d.view_mut((m, 0), (n, m)).copy_from(&x.adjoint());
    d
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(x: &CMat) -> Vec<f64> {
    let (m, n) = x.shape();
    let mut ev: Vec<f64> = dilation(x).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.truncate(m.min(n));
    ev.iter().map(|v| v.max(0.0)).collect()
}

/// Singular values of `w` with respect to `(H1, H2)`: those of
/// `H2^{1/2} w H1^{1/2}`.
pub fn metric_singular_values(w: &CMat, h1: &CMat, h2: &CMat) -> Vec<f64> {
    singular_values(&(sqrtm(h2) * w * sqrtm(h1)))
}

/// Odd spectral function `f` applied to the singular values of `x`.
fn odd_spectral(x: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (m, n) = x.shape();
    let e = dilation(x).symmetric_eigen();
    let d = CMat::from_diagonal(&e.eigenvalues.map(|v| C64::new(f(v), 0.0)));
    let full = &e.eigenvectors * d * e.eigenvectors.adjoint();
    full.view((0, m), (m, n)).into_owned()
}

/// Singular value soft-thresholding in the metric pair, materialized.
pub fn dense_svt(w: &CMat, h1: &CMat, h2: &CMat, tau: f64) -> CMat {
    let x = sqrtm(h2) * w * sqrtm(h1);
    let y = odd_spectral(&x, |t| t.signum() * (t.abs() - tau).max(0.0));
    inv_sqrtm(h2) * y * inv_sqrtm(h1)
}

/// Positive eigenvalue thresholding of a Hermitian tensor, materialized.
pub fn dense_evt(w: &CMat, h: &CMat, tau: f64) -> CMat {
    let hs = sqrtm(h);
    let x = &hs * w * &hs;
    let x = (&x + x.adjoint()) * C64::new(0.5, 0.0);
    let e = x.symmetric_eigen();
    let d = CMat::from_diagonal(&e.eigenvalues.map(|v| C64::new((v - tau).max(0.0), 0.0)));
    let his = inv_sqrtm(h);
    &his * (&e.eigenvectors * d * e.eigenvectors.adjoint()) * &his
}
