//! Inner-product structures on complex vector spaces: Euclidean, discrete
//! Sobolev on an image grid, explicit dense matrices, and low-rank
//! reweightings of any of these.
//!
//! Every metric `H` is Hermitian positive definite and acts as a complex
//! matrix. Scalar inner products use the real part `Re[y* H x]`; the
//! complex pairing `x* H y` is exposed separately because factor
//! coefficients of matrix actions need it.

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dotc, fix_phase, norm_sqr, scale_real, zeros, CVec, C64, ZERO};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Forward-difference weights `H = mu_i I + mu_d1 D1*D1 + mu_d2 D2*D2` on an
/// `height x width` grid stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sobolev {
    pub height: usize,
    pub width: usize,
    pub mu_i: f64,
    pub mu_d1: f64,
    pub mu_d2: f64,
}

impl Sobolev {
    pub fn new(height: usize, width: usize, mu: (f64, f64, f64)) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter("Sobolev grid must be non-empty".into()));
        }
        let (mu_i, mu_d1, mu_d2) = mu;
        if !(mu_i > 0.0) || !(mu_d1 >= 0.0) || !(mu_d2 >= 0.0) || !(mu_i + mu_d1 + mu_d2).is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Sobolev weights must satisfy mu_i > 0, mu_d1, mu_d2 >= 0; got {mu:?}"
            )));
        }
        Ok(Sobolev { height, width, mu_i, mu_d1, mu_d2 })
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    /// Horizontal differences, `height x (width-1)` row-major.
    pub fn d1(&self, u: &[C64]) -> CVec {
        let (h, w) = (self.height, self.width);
        let mut out = Vec::with_capacity(h * w.saturating_sub(1));
        for r in 0..h {
            for c in 0..w.saturating_sub(1) {
                out.push(u[r * w + c + 1] - u[r * w + c]);
            }
        }
        out
    }

    pub fn d1_adjoint(&self, v: &[C64]) -> CVec {
        let (h, w) = (self.height, self.width);
        let mut out = zeros(h * w);
        if w < 2 {
            return out;
        }
        for r in 0..h {
            for c in 0..w - 1 {
                let x = v[r * (w - 1) + c];
                out[r * w + c + 1] += x;
                out[r * w + c] -= x;
            }
        }
        out
    }

    /// Vertical differences, `(height-1) x width` row-major.
    pub fn d2(&self, u: &[C64]) -> CVec {
        let (h, w) = (self.height, self.width);
        let mut out = Vec::with_capacity(h.saturating_sub(1) * w);
        for r in 0..h.saturating_sub(1) {
            for c in 0..w {
                out.push(u[(r + 1) * w + c] - u[r * w + c]);
            }
        }
        out
    }

    pub fn d2_adjoint(&self, v: &[C64]) -> CVec {
        let (h, w) = (self.height, self.width);
        let mut out = zeros(h * w);
        for r in 0..h.saturating_sub(1) {
            for c in 0..w {
                let x = v[r * w + c];
                out[(r + 1) * w + c] += x;
                out[r * w + c] -= x;
            }
        }
        out
    }

    /// `H u` by stencils.
    pub fn apply(&self, u: &[C64]) -> CVec {
        let (h, w) = (self.height, self.width);
        let mut out: CVec = u.iter().map(|z| z * self.mu_i).collect();
        if self.mu_d1 != 0.0 {
            for r in 0..h {
                let row = r * w;
                for c in 0..w.saturating_sub(1) {
                    let d = (u[row + c + 1] - u[row + c]) * self.mu_d1;
                    out[row + c + 1] += d;
                    out[row + c] -= d;
                }
            }
        }
        if self.mu_d2 != 0.0 {
            for r in 0..h.saturating_sub(1) {
                for c in 0..w {
                    let d = (u[(r + 1) * w + c] - u[r * w + c]) * self.mu_d2;
                    out[(r + 1) * w + c] += d;
                    out[r * w + c] -= d;
                }
            }
        }
        out
    }

    /// Conjugate gradients on the stencil, relative residual `1e-12`,
    /// at most `10 N` iterations.
    pub fn solve(&self, b: &[C64]) -> Result<CVec> {
        let n = self.dim();
        let bnorm2 = norm_sqr(b);
        let mut x = zeros(n);
        if bnorm2 == 0.0 {
            return Ok(x);
        }
        if self.mu_d1 == 0.0 && self.mu_d2 == 0.0 {
            return Ok(b.iter().map(|z| z / self.mu_i).collect());
        }
        let tol2 = 1e-24 * bnorm2;
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut rr = bnorm2;
        for _ in 0..10 * n {
            let hp = self.apply(&p);
            let php = dotc(&p, &hp).re;
            if !(php > 0.0) {
                return Err(Error::SolverFailure("Sobolev CG lost positive definiteness".into()));
            }
            let a = rr / php;
            axpy(C64::new(a, 0.0), &p, &mut x);
            axpy(C64::new(-a, 0.0), &hp, &mut r);
            let rr_new = norm_sqr(&r);
            if rr_new <= tol2 {
                return Ok(x);
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + *pi * beta;
            }
        }
        Err(Error::SolverFailure(format!(
            "Sobolev CG did not reach relative residual 1e-12 within {} iterations",
            10 * n
        )))
    }
}

/// A base metric with promoted directions `phi_k` whose weights are
/// reduced from 1 to `1 - lambda_k`:
/// `H(Xi) = H - sum_k lambda_k (H phi_k)(H phi_k)*`.
#[derive(Clone, Debug)]
pub struct Reweighting {
    base: Box<Metric>,
    phi: Vec<CVec>,
    phi_h: Vec<CVec>,
    lambda: Vec<f64>,
}

impl Reweighting {
    pub fn base(&self) -> &Metric {
        &self.base
    }
    pub fn directions(&self) -> &[CVec] {
        &self.phi
    }
    pub fn transformed_directions(&self) -> &[CVec] {
        &self.phi_h
    }
    pub fn weights(&self) -> &[f64] {
        &self.lambda
    }
}

/// An explicit real symmetric positive definite matrix, for small problems
/// and reference computations.
#[derive(Clone, Debug)]
pub struct DenseMetric {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl DenseMetric {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn apply(&self, u: &[C64]) -> CVec {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut acc = ZERO;
                for j in 0..n {
                    acc += u[j] * self.matrix[(i, j)];
                }
                acc
            })
            .collect()
    }

    fn solve(&self, b: &[C64]) -> CVec {
        let re = self.chol.solve(&DVector::from_iterator(b.len(), b.iter().map(|z| z.re)));
        let im = self.chol.solve(&DVector::from_iterator(b.len(), b.iter().map(|z| z.im)));
        re.iter().zip(im.iter()).map(|(&a, &c)| C64::new(a, c)).collect()
    }
}

#[derive(Clone, Debug)]
pub enum Metric {
    Euclidean(usize),
    Sobolev(Sobolev),
    Dense(DenseMetric),
    Reweighted(Reweighting),
}

impl Metric {
    pub fn euclidean(n: usize) -> Self {
        Metric::Euclidean(n)
    }

    pub fn sobolev(height: usize, width: usize, mu: (f64, f64, f64)) -> Result<Self> {
        Ok(Metric::Sobolev(Sobolev::new(height, width, mu)?))
    }

    /// Metric given by an explicit symmetric positive definite matrix.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension("dense metric must be a non-empty square matrix".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax() {
            return Err(Error::InvalidParameter("dense metric must be symmetric".into()));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::InvalidParameter("dense metric must be positive definite".into()))?;
        Ok(Metric::Dense(DenseMetric { matrix, chol }))
    }

    /// Reweights `base` along `directions` with weights `lambda_k` in `[0,1)`.
    ///
    /// The directions are orthonormalized in the base metric first; a
    /// reweighted base is replaced by its own base, so promotions always
    /// refer to the original space.
    pub fn reweighted(base: &Metric, directions: &[CVec], lambda: &[f64]) -> Result<Self> {
        let base = base.base_metric().clone();
        if directions.len() != lambda.len() {
            return Err(Error::Dimension(format!(
                "{} directions but {} weights",
                directions.len(),
                lambda.len()
            )));
        }
        for &l in lambda {
            if !(0.0..1.0).contains(&l) {
                return Err(Error::InvalidParameter(format!("reweighting weight {l} outside [0,1)")));
            }
        }
        for d in directions {
            check_len("promoted direction", d.len(), base.dim())?;
        }
        let (phi, dropped) = base.orthonormalize_raw(directions);
        if dropped > 0 {
            return Err(Error::InvalidParameter("promoted directions are linearly dependent".into()));
        }
        let phi_h = phi.iter().map(|p| base.apply_base(p)).collect();
        Ok(Metric::Reweighted(Reweighting { base: Box::new(base), phi, phi_h, lambda: lambda.to_vec() }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Euclidean(n) => *n,
            Metric::Sobolev(s) => s.dim(),
            Metric::Dense(d) => d.matrix.nrows(),
            Metric::Reweighted(r) => r.base.dim(),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Metric::Euclidean(_))
    }

    /// The unweighted metric underneath any reweighting.
    pub fn base_metric(&self) -> &Metric {
        match self {
            Metric::Reweighted(r) => &r.base,
            m => m,
        }
    }

    fn apply_base(&self, u: &[C64]) -> CVec {
        match self {
            Metric::Euclidean(_) => u.to_vec(),
            Metric::Sobolev(s) => s.apply(u),
            Metric::Dense(d) => d.apply(u),
            Metric::Reweighted(r) => r.base.apply_base(u),
        }
    }

    /// `H u`.
    pub fn apply(&self, u: &[C64]) -> Result<CVec> {
        check_len("metric apply", u.len(), self.dim())?;
        Ok(self.apply_unchecked(u))
    }

    pub(crate) fn apply_unchecked(&self, u: &[C64]) -> CVec {
        match self {
            Metric::Euclidean(_) => u.to_vec(),
            Metric::Sobolev(s) => s.apply(u),
            Metric::Dense(d) => d.apply(u),
            Metric::Reweighted(r) => {
                let mut out = r.base.apply_base(u);
                for (pt, &l) in r.phi_h.iter().zip(&r.lambda) {
                    // (H phi)* u = phi* H u
                    let c = dotc(pt, u);
                    axpy(-c * l, pt, &mut out);
                }
                out
            }
        }
    }

    /// Solves `H x = b`.
    pub fn apply_inv(&self, b: &[C64]) -> Result<CVec> {
        check_len("metric inverse", b.len(), self.dim())?;
        match self {
            Metric::Euclidean(_) => Ok(b.to_vec()),
            Metric::Sobolev(s) => s.solve(b),
            Metric::Dense(d) => Ok(d.solve(b)),
            Metric::Reweighted(r) => {
                let mut x = r.base.apply_inv(b)?;
                for (p, &l) in r.phi.iter().zip(&r.lambda) {
                    let c = dotc(p, b);
                    axpy(c * (l / (1.0 - l)), p, &mut x);
                }
                Ok(x)
            }
        }
    }

    /// `T(Xi) u = u - sum_k (1 - 1/(1-lambda_k)) (H phi_k)(phi_k* u)`, the
    /// factor with `T(Xi) = H H(Xi)^{-1}`; with `adjoint` set, `T(Xi)* u`.
    /// Unweighted metrics give the identity.
    pub fn transform(&self, u: &[C64], adjoint: bool) -> Result<CVec> {
        check_len("metric transform", u.len(), self.dim())?;
        let mut out = u.to_vec();
        if let Metric::Reweighted(r) = self {
            for ((p, pt), &l) in r.phi.iter().zip(&r.phi_h).zip(&r.lambda) {
                let c = 1.0 - 1.0 / (1.0 - l);
                if adjoint {
                    let s = dotc(pt, u);
                    axpy(-s * c, p, &mut out);
                } else {
                    let s = dotc(p, u);
                    axpy(-s * c, pt, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Complex pairing `x* H y`.
    pub fn pair(&self, x: &[C64], y: &[C64]) -> C64 {
        match self {
            Metric::Euclidean(_) => dotc(x, y),
            _ => dotc(x, &self.apply_unchecked(y)),
        }
    }

    /// Real inner product `Re[y* H x]`.
    pub fn inner(&self, x: &[C64], y: &[C64]) -> Result<f64> {
        check_len("inner product", x.len(), self.dim())?;
        check_len("inner product", y.len(), self.dim())?;
        Ok(self.pair(y, x).re)
    }

    pub fn norm(&self, x: &[C64]) -> f64 {
        match self {
            Metric::Euclidean(_) => norm_sqr(x).sqrt(),
            _ => self.pair(x, x).re.max(0.0).sqrt(),
        }
    }

    /// Orthonormalizes `vectors` in this metric by modified Gram-Schmidt,
    /// dropping vectors that are dependent on earlier ones. Each output is
    /// phase-normalized so that its largest-magnitude entry is real and
    /// positive. Returns the basis and the number of dropped vectors.
    pub fn reorthonormalize(&self, vectors: &[CVec]) -> Result<(Vec<CVec>, usize)> {
        for v in vectors {
            check_len("reorthonormalize", v.len(), self.dim())?;
        }
        let (mut out, dropped) = self.orthonormalize_raw(vectors);
        for v in out.iter_mut() {
            fix_phase(v);
        }
        Ok((out, dropped))
    }

    pub(crate) fn orthonormalize_raw(&self, vectors: &[CVec]) -> (Vec<CVec>, usize) {
        let mut basis: Vec<CVec> = Vec::with_capacity(vectors.len());
        let mut hbasis: Vec<CVec> = Vec::with_capacity(vectors.len());
        let mut dropped = 0;
        for v in vectors {
            match orthonormalize_against(self, &basis, &hbasis, v.clone()) {
                Some((q, hq)) => {
                    basis.push(q);
                    hbasis.push(hq);
                }
                None => dropped += 1,
            }
        }
        (basis, dropped)
    }
}

/// Relative size below which a vector is considered dependent on a basis.
pub(crate) const DEPENDENCE_TOL: f64 = 1e-10;

/// Removes the components of `v` along the orthonormal `basis` (with
/// `hbasis[j] = H basis[j]`) twice and normalizes. Returns the new unit
/// vector and its `H` image, or `None` if `v` is numerically dependent.
pub(crate) fn orthonormalize_against(
    metric: &Metric,
    basis: &[CVec],
    hbasis: &[CVec],
    mut v: CVec,
) -> Option<(CVec, CVec)> {
    let n0 = metric.norm(&v);
    if !(n0 > 0.0) || !n0.is_finite() {
        return None;
    }
    for _ in 0..2 {
        for (b, hb) in basis.iter().zip(hbasis) {
            let c = dotc(hb, &v);
            if c != ZERO {
                axpy(-c, b, &mut v);
            }
        }
    }
    let mut hv = metric.apply_unchecked(&v);
    let n1 = dotc(&v, &hv).re.max(0.0).sqrt();
    if n1 <= DEPENDENCE_TOL * n0 {
        return None;
    }
    scale_real(1.0 / n1, &mut v);
    scale_real(1.0 / n1, &mut hv);
    Some((v, hv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm, random_cvec, rng_from_seed, sub, ONE};
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> CVec {
        let mut v = zeros(n);
        v[i] = ONE;
        v
    }

    /// Dense matrix of a linear map given by its action.
    fn materialize(n: usize, f: impl Fn(&[C64]) -> CVec) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = f(&e(n, j));
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Dense assembly of D1 as an explicit matrix, independent of the stencil code.
    fn dense_d1(h: usize, w: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(h * (w - 1), h * w);
        for r in 0..h {
            for c in 0..w - 1 {
                d[(r * (w - 1) + c, r * w + c + 1)] = 1.0;
                d[(r * (w - 1) + c, r * w + c)] = -1.0;
            }
        }
        d
    }

    fn dense_d2(h: usize, w: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros((h - 1) * w, h * w);
        for r in 0..h - 1 {
            for c in 0..w {
                d[(r * w + c, (r + 1) * w + c)] = 1.0;
                d[(r * w + c, r * w + c)] = -1.0;
            }
        }
        d
    }

    #[test]
    fn euclidean_inner_examples() {
        let m = Metric::euclidean(3);
        assert_eq!(m.inner(&e(3, 0), &e(3, 0)).unwrap(), 1.0);
        let ie0: CVec = e(3, 0).iter().map(|z| z * C64::i()).collect();
        assert_eq!(m.inner(&ie0, &e(3, 0)).unwrap(), 0.0);
        assert!(m.inner(&e(2, 0), &e(3, 0)).is_err());
    }

    #[test]
    fn sobolev_identity_weights_match_euclidean() {
        let s = Metric::sobolev(3, 4, (1.0, 0.0, 0.0)).unwrap();
        let mut rng = rng_from_seed(1);
        let x = random_cvec(&mut rng, 12);
        let y = random_cvec(&mut rng, 12);
        let eu = Metric::euclidean(12);
        assert!((s.inner(&x, &y).unwrap() - eu.inner(&x, &y).unwrap()).abs() < 1e-14);
        assert_eq!(s.apply(&x).unwrap(), x);
    }

    #[test]
    fn sobolev_matches_dense_assembly() {
        // 2x2 grid, mu = (0,1,0), indicator of pixel (0,0).
        let s = Sobolev { height: 2, width: 2, mu_i: 0.0, mu_d1: 1.0, mu_d2: 0.0 };
        let d1 = dense_d1(2, 2);
        let dd = d1.transpose() * &d1;
        let got = s.apply(&e(4, 0));
        for i in 0..4 {
            assert!((got[i].re - dd[(i, 0)]).abs() < 1e-15 && got[i].im == 0.0);
        }
        assert_eq!(got, vec![ONE, -ONE, ZERO, ZERO]);

        // Full weights on a 3x4 grid.
        let s = Sobolev::new(3, 4, (0.25, 1.0, 2.0)).unwrap();
        let (d1, d2) = (dense_d1(3, 4), dense_d2(3, 4));
        let h = DMatrix::<f64>::identity(12, 12) * 0.25 + d1.transpose() * &d1 + d2.transpose() * &d2 * 2.0;
        let m = materialize(12, |u| s.apply(u));
        for i in 0..12 {
            for j in 0..12 {
                assert!((m[(i, j)].re - h[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sobolev_constant_image() {
        let s = Sobolev::new(4, 5, (0.25, 1.0, 1.0)).unwrap();
        let u = vec![C64::new(2.0, -1.0); 20];
        let hu = s.apply(&u);
        for z in hu {
            assert!((z - C64::new(0.5, -0.25)).norm() < 1e-15);
        }
        assert!(s.d1(&u).iter().all(|z| *z == ZERO));
        assert!(s.d2(&u).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn sobolev_inverse_roundtrip() {
        let m = Metric::sobolev(8, 6, (0.25, 1.0, 1.0)).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..5 {
            let u = random_cvec(&mut rng, 48);
            let x = m.apply_inv(&m.apply(&u).unwrap()).unwrap();
            assert!(norm(&sub(&x, &u)) <= 1e-9 * norm(&u));
        }
    }

    fn random_reweighted(base: &Metric, s: usize, seed: u64) -> Metric {
        let mut rng = rng_from_seed(seed);
        let dirs: Vec<CVec> = (0..s).map(|_| random_cvec(&mut rng, base.dim())).collect();
        let lam: Vec<f64> = (0..s).map(|k| 0.9 / (k as f64 + 1.0)).collect();
        Metric::reweighted(base, &dirs, &lam).unwrap()
    }

    #[test]
    fn reweighted_examples() {
        let base = Metric::sobolev(3, 3, (0.25, 1.0, 1.0)).unwrap();
        let mut rng = rng_from_seed(3);
        let u = random_cvec(&mut rng, 9);
        let m0 = Metric::reweighted(&base, &[], &[]).unwrap();
        assert_eq!(m0.apply(&u).unwrap(), base.apply(&u).unwrap());

        let m1 = random_reweighted(&base, 1, 4);
        let Metric::Reweighted(r) = &m1 else { unreachable!() };
        let (phi, pt, l) = (&r.directions()[0], &r.transformed_directions()[0], r.weights()[0]);
        let got = m1.apply(phi).unwrap();
        let want: CVec = pt.iter().map(|z| z * (1.0 - l)).collect();
        assert!(norm(&sub(&got, &want)) < 1e-12 * norm(&want));
        assert!((m1.norm(phi).powi(2) - (1.0 - l)).abs() < 1e-12);

        let inv = m1.apply_inv(pt).unwrap();
        let want: CVec = phi.iter().map(|z| z / (1.0 - l)).collect();
        assert!(norm(&sub(&inv, &want)) < 1e-9 * norm(&want));

        // A base-orthogonal vector is unaffected by the promotion.
        let mut v = random_cvec(&mut rng, 9);
        let c = base.pair(phi, &v);
        axpy(-c, phi, &mut v);
        let a = m1.apply(&v).unwrap();
        let b = base.apply(&v).unwrap();
        assert!(norm(&sub(&a, &b)) < 1e-12 * norm(&b));
    }

    #[test]
    fn reweighting_is_always_over_the_original_base() {
        let base = Metric::euclidean(5);
        let m1 = random_reweighted(&base, 2, 5);
        let m2 = random_reweighted(&m1, 1, 6);
        assert!(m2.base_metric().is_euclidean());
        let Metric::Reweighted(r) = &m2 else { unreachable!() };
        assert_eq!(r.weights().len(), 1);
        assert!(Metric::reweighted(&base, &[e(5, 0)], &[1.0]).is_err());
    }

    #[test]
    fn transform_is_h_times_reweighted_inverse() {
        for base in [Metric::euclidean(12), Metric::sobolev(3, 4, (0.25, 1.0, 1.0)).unwrap()] {
            let m = random_reweighted(&base, 3, 7);
            let mut rng = rng_from_seed(8);
            let u = random_cvec(&mut rng, 12);
            let want = base.apply(&m.apply_inv(&u).unwrap()).unwrap();
            let got = m.transform(&u, false).unwrap();
            assert!(norm(&sub(&got, &want)) <= 1e-10 * norm(&want));
            // T* = H(Xi)^{-1} H
            let want = m.apply_inv(&base.apply(&u).unwrap()).unwrap();
            let got = m.transform(&u, true).unwrap();
            assert!(norm(&sub(&got, &want)) <= 1e-10 * norm(&want));
        }
        let zero = Metric::reweighted(&Metric::euclidean(3), &[e(3, 1)], &[0.0]).unwrap();
        let u = vec![ONE, C64::i(), ONE];
        assert_eq!(zero.transform(&u, false).unwrap(), u);
        let m = random_reweighted(&Metric::euclidean(4), 1, 9);
        let Metric::Reweighted(r) = &m else { unreachable!() };
        let mut v = e(4, 2);
        let c = dotc(&r.directions()[0], &v);
        axpy(-c, &r.directions()[0].clone(), &mut v);
        let t = m.transform(&v, false).unwrap();
        assert!(norm(&sub(&t, &v)) < 1e-14);
    }

    #[test]
    fn reorthonormalize_examples() {
        let m = Metric::euclidean(2);
        let (b, dropped) = m.reorthonormalize(&[vec![ONE, ZERO], vec![ONE, ONE]]).unwrap();
        assert_eq!(dropped, 0);
        assert!(norm(&sub(&b[0], &e(2, 0))) < 1e-15);
        assert!(norm(&sub(&b[1], &e(2, 1))) < 1e-15);

        let v = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0)];
        let (b, dropped) = m.reorthonormalize(&[v.clone(), v.clone()]).unwrap();
        assert_eq!((b.len(), dropped), (1, 1));
        assert!((norm(&b[0]) - 1.0).abs() < 1e-15);

        let (b, d) = m.reorthonormalize(&[]).unwrap();
        assert!(b.is_empty() && d == 0);

        // Already orthonormal input is reproduced up to phase.
        let q = vec![vec![C64::new(0.0, 1.0), ZERO], vec![ZERO, ONE]];
        let (b, _) = m.reorthonormalize(&q).unwrap();
        assert_eq!(b, vec![e(2, 0), e(2, 1)]);
    }

    #[test]
    fn reorthonormalize_sobolev_is_orthonormal() {
        let m = Metric::sobolev(4, 4, (0.25, 1.0, 1.0)).unwrap();
        let mut rng = rng_from_seed(10);
        let vs: Vec<CVec> = (0..6).map(|_| random_cvec(&mut rng, 16)).collect();
        let (b, dropped) = m.reorthonormalize(&vs).unwrap();
        assert_eq!(dropped, 0);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { ONE } else { ZERO };
                assert!((m.pair(&b[i], &b[j]) - want).norm() < 1e-10);
            }
        }
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = CVec> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn difference_adjoints(u in arb_vec(20), v1 in arb_vec(16), v2 in arb_vec(15)) {
            let s = Sobolev::new(4, 5, (0.25, 1.0, 1.0)).unwrap();
            let l = dotc(&v1, &s.d1(&u)).re;
            let r = dotc(&s.d1_adjoint(&v1), &u).re;
            prop_assert!((l - r).abs() <= 1e-12);
            let l = dotc(&v2, &s.d2(&u)).re;
            let r = dotc(&s.d2_adjoint(&v2), &u).re;
            prop_assert!((l - r).abs() <= 1e-12);
        }

        #[test]
        fn positive_definite_and_symmetric(x in arb_vec(12), y in arb_vec(12), s in 0usize..4, seed in 0u64..1000) {
            let bases = [Metric::euclidean(12), Metric::sobolev(3, 4, (0.25, 1.0, 1.0)).unwrap()];
            for base in bases {
                let m = random_reweighted(&base, s, seed);
                let xx = m.inner(&x, &x).unwrap();
                prop_assert!(xx > 0.0 || norm(&x) == 0.0);
                let xy = m.inner(&x, &y).unwrap();
                let yx = m.inner(&y, &x).unwrap();
                prop_assert!((xy - yx).abs() <= 1e-12 * (1.0 + xy.abs()));
                let z = zeros(12);
                prop_assert_eq!(m.inner(&z, &z).unwrap(), 0.0);
            }
        }

        #[test]
        fn reweighted_inverse_identity(x in arb_vec(12), seed in 0u64..1000) {
            for s in [0usize, 1, 3] {
                for base in [Metric::euclidean(12), Metric::sobolev(4, 3, (0.25, 1.0, 1.0)).unwrap()] {
                    let m = random_reweighted(&base, s, seed);
                    let back = m.apply(&m.apply_inv(&x).unwrap()).unwrap();
                    prop_assert!(norm(&sub(&back, &x)) <= 1e-10 * norm(&x).max(1e-300));
                    let back = m.apply_inv(&m.apply(&x).unwrap()).unwrap();
                    prop_assert!(norm(&sub(&back, &x)) <= 1e-10 * norm(&x).max(1e-300));
                }
            }
        }
    }
}
