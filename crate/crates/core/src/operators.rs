//! Bilinear and quadratic forward maps, their liftings, and the adjoint
//! actions that feed the thresholding oracles.
//!
//! A map is described by its Hilbert-Schmidt adjoint `G(y)`, the matrix
//! with `Re <B(w), y> = Re tr(G(y)* w)` in the Euclidean structures. All
//! metric-dependent adjoints are derived from it by
//! `B*(y) = H2^{-1} G(K y) H1^{-1}`.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dotc, random_cvec, rng_from_seed, scale_real, CVec, C64};
use crate::lowrank::{FactoredTensor, HermitianFactored};
use crate::metric::Metric;
use crate::partial_svd::ActionOracle;

/// A map `B(u, v)`, antilinear in `u` and linear in `v`, with the lifting
/// `B(v u*) = B(u, v)`.
pub trait BilinearMap: Sync {
    /// `(N1, N2)`: lengths of `u` and `v`.
    fn domain_dims(&self) -> (usize, usize);
    fn data_len(&self) -> usize;
    fn apply(&self, u: &[C64], v: &[C64]) -> Result<CVec>;
    /// `G(y) e`, length `N2`.
    fn hs_right(&self, y: &[C64], e: &[C64]) -> Result<CVec>;
    /// `G(y)* f`, length `N1`.
    fn hs_left(&self, y: &[C64], f: &[C64]) -> Result<CVec>;
}

/// A quadratic map `Q(u) = B_Q(u, u)` with Hermitian measurement kernels,
/// so `G(y)* = G(conj y)` and Hermitian tensors lift to real data.
pub trait QuadraticMap: Sync {
    fn dim(&self) -> usize;
    fn data_len(&self) -> usize;
    fn apply(&self, u: &[C64]) -> Result<CVec>;
    /// The associated bilinear map `B_Q(u, v)`.
    fn bilinear(&self, u: &[C64], v: &[C64]) -> Result<CVec>;
    /// `G(y) e` for complex `y`.
    fn hs_adjoint(&self, y: &[C64], e: &[C64]) -> Result<CVec>;
    /// Symmetric adjoint `G(Re y) e`, the Hilbert-Schmidt adjoint on
    /// Hermitian tensors.
    fn hs_sym_adjoint(&self, y: &[C64], e: &[C64]) -> Result<CVec> {
        let re: CVec = y.iter().map(|z| C64::new(z.re, 0.0)).collect();
        self.hs_adjoint(&re, e)
    }
}

/// The associated bilinear map of a quadratic map.
pub struct Polarized<'a, Q: QuadraticMap + ?Sized>(pub &'a Q);

impl<Q: QuadraticMap + ?Sized> BilinearMap for Polarized<'_, Q> {
    fn domain_dims(&self) -> (usize, usize) {
        (self.0.dim(), self.0.dim())
    }
    fn data_len(&self) -> usize {
        self.0.data_len()
    }
    fn apply(&self, u: &[C64], v: &[C64]) -> Result<CVec> {
        self.0.bilinear(u, v)
    }
    fn hs_right(&self, y: &[C64], e: &[C64]) -> Result<CVec> {
        self.0.hs_adjoint(y, e)
    }
    fn hs_left(&self, y: &[C64], f: &[C64]) -> Result<CVec> {
        let yc: CVec = y.iter().map(|z| z.conj()).collect();
        self.0.hs_adjoint(&yc, f)
    }
}

/// `B(w) = sum_k s_k B(u_k, v_k)`.
pub fn lifted_apply<B: BilinearMap + ?Sized>(map: &B, w: &FactoredTensor) -> Result<CVec> {
    let (n1, n2) = map.domain_dims();
    if w.dims() != (n1, n2) {
        return Err(Error::Dimension(format!("tensor is {:?}, map expects {:?}", w.dims(), (n1, n2))));
    }
    let mut out = vec![C64::new(0.0, 0.0); map.data_len()];
    for ((s, u), v) in w.values.iter().zip(&w.right).zip(&w.left) {
        axpy(C64::new(*s, 0.0), &map.apply(u, v)?, &mut out);
    }
    Ok(out)
}

/// `Q(w) = sum_k l_k Q(u_k)`.
pub fn lifted_apply_quadratic<Q: QuadraticMap + ?Sized>(map: &Q, w: &HermitianFactored) -> Result<CVec> {
    check_len("tensor", w.dim(), map.dim())?;
    let mut out = vec![C64::new(0.0, 0.0); map.data_len()];
    for (l, u) in w.values.iter().zip(&w.factors) {
        axpy(C64::new(*l, 0.0), &map.apply(u)?, &mut out);
    }
    Ok(out)
}

/// `[B(e, .)]*(y) = H2^{-1} G(K y) e`; `ky` is `K y`.
pub fn partial_adjoint_left<B: BilinearMap + ?Sized>(map: &B, h2: &Metric, ky: &[C64], e: &[C64]) -> Result<CVec> {
    h2.apply_inv(&map.hs_right(ky, e)?)
}

/// `[B(., f)]*(y) = H1^{-1} G(K y)* f`.
pub fn partial_adjoint_right<B: BilinearMap + ?Sized>(map: &B, h1: &Metric, ky: &[C64], f: &[C64]) -> Result<CVec> {
    h1.apply_inv(&map.hs_left(ky, f)?)
}

/// `Q*(y) H e = H^{-1} G(Re K y) e`.
pub fn sym_adjoint_action<Q: QuadraticMap + ?Sized>(map: &Q, h: &Metric, ky: &[C64], e: &[C64]) -> Result<CVec> {
    h.apply_inv(&map.hs_sym_adjoint(ky, e)?)
}

/// The same action for a reweighted metric, routed through the
/// transformation `T*(Xi)` applied to the base-metric action instead of
/// the reweighted inverse.
pub fn transformed_adjoint_action(metric: &Metric, base_action: &[C64]) -> Result<CVec> {
    match metric {
        Metric::Reweighted(_) => metric.transform(base_action, true),
        _ => Ok(base_action.to_vec()),
    }
}

/// Actions of `w - step * B*(y)` for a factored `w` (bilinear case).
pub struct BilinearStep<'a, B: BilinearMap + ?Sized> {
    pub map: &'a B,
    pub w: &'a FactoredTensor,
    pub step: f64,
    /// `K y`.
    pub ky: &'a [C64],
    pub h1: &'a Metric,
    pub h2: &'a Metric,
}

impl<B: BilinearMap + ?Sized> ActionOracle for BilinearStep<'_, B> {
    fn dims(&self) -> (usize, usize) {
        self.map.domain_dims()
    }
    fn metric1(&self) -> &Metric {
        self.h1
    }
    fn metric2(&self) -> &Metric {
        self.h2
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        let mut out = self.w.right_action(self.h1, e)?;
        if self.step != 0.0 {
            axpy(C64::new(-self.step, 0.0), &partial_adjoint_left(self.map, self.h2, self.ky, e)?, &mut out);
        }
        Ok(out)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        let mut out = self.w.left_action(self.h2, f)?;
        if self.step != 0.0 {
            axpy(C64::new(-self.step, 0.0), &partial_adjoint_right(self.map, self.h1, self.ky, f)?, &mut out);
        }
        Ok(out)
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.w.values.first().copied()
    }
}

/// Actions of `w - step * Q*(y)` for a Hermitian `w` (quadratic case).
pub struct QuadraticStep<'a, Q: QuadraticMap + ?Sized> {
    pub map: &'a Q,
    pub w: &'a HermitianFactored,
    pub step: f64,
    pub ky: &'a [C64],
    pub h: &'a Metric,
}

impl<Q: QuadraticMap + ?Sized> QuadraticStep<'_, Q> {
    fn action(&self, e: &[C64]) -> Result<CVec> {
        let mut out = self.w.action(self.h, e)?;
        if self.step != 0.0 {
            axpy(C64::new(-self.step, 0.0), &sym_adjoint_action(self.map, self.h, self.ky, e)?, &mut out);
        }
        Ok(out)
    }
}

impl<Q: QuadraticMap + ?Sized> ActionOracle for QuadraticStep<'_, Q> {
    fn dims(&self) -> (usize, usize) {
        (self.map.dim(), self.map.dim())
    }
    fn metric1(&self) -> &Metric {
        self.h
    }
    fn metric2(&self) -> &Metric {
        self.h
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        self.action(e)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        self.action(f)
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.w.values.iter().map(|v| v.abs()).reduce(f64::max)
    }
}

/// A factored tensor seen through its plain actions.
pub struct TensorOracle<'a> {
    pub w: &'a FactoredTensor,
    pub h1: &'a Metric,
    pub h2: &'a Metric,
}

impl ActionOracle for TensorOracle<'_> {
    fn dims(&self) -> (usize, usize) {
        self.w.dims()
    }
    fn metric1(&self) -> &Metric {
        self.h1
    }
    fn metric2(&self) -> &Metric {
        self.h2
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        self.w.right_action(self.h1, e)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        self.w.left_action(self.h2, f)
    }
}

pub struct HermitianOracle<'a> {
    pub w: &'a HermitianFactored,
    pub h: &'a Metric,
}

impl ActionOracle for HermitianOracle<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.w.dim(), self.w.dim())
    }
    fn metric1(&self) -> &Metric {
        self.h
    }
    fn metric2(&self) -> &Metric {
        self.h
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        self.w.action(self.h, e)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        self.w.action(self.h, f)
    }
}

/// Estimate of `|B| = sup |B(u, v)|_K / (|u|_{H1} |v|_{H2})`.
#[derive(Clone, Copy, Debug)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
}

/// Alternating power iteration in `u` and `v`. The value is attained by
/// unit vectors, so it never exceeds the true norm; callers add a safety
/// factor before using it in step size rules.
pub fn operator_norm<B: BilinearMap + ?Sized>(
    map: &B,
    h1: &Metric,
    h2: &Metric,
    k: &Metric,
    iters: usize,
    seed: u64,
) -> Result<NormEstimate> {
    let (n1, n2) = map.domain_dims();
    check_len("first metric", h1.dim(), n1)?;
    check_len("second metric", h2.dim(), n2)?;
    check_len("data metric", k.dim(), map.data_len())?;
    let mut rng = rng_from_seed(seed);
    let unit = |m: &Metric, mut x: CVec| -> Option<CVec> {
        let n = m.norm(&x);
        (n > 0.0 && n.is_finite()).then(|| {
            scale_real(1.0 / n, &mut x);
            x
        })
    };
    let mut u = unit(h1, random_cvec(&mut rng, n1)).unwrap_or_else(|| vec![C64::new(0.0, 0.0); n1]);
    let mut v = unit(h2, random_cvec(&mut rng, n2)).unwrap_or_else(|| vec![C64::new(0.0, 0.0); n2]);
    let mut best: f64 = 0.0;
    let mut done = 0;
    for it in 0..iters.max(1) {
        done = it + 1;
        let b = map.apply(&u, &v)?;
        best = best.max(k.norm(&b));
        let kb = k.apply(&b)?;
        // Maximize over v with u fixed, then over u with v fixed.
        let Some(nv) = unit(h2, partial_adjoint_left(map, h2, &kb, &u)?) else { break };
        v = nv;
        let b = map.apply(&u, &v)?;
        best = best.max(k.norm(&b));
        let kb = k.apply(&b)?;
        let Some(nu) = unit(h1, partial_adjoint_right(map, h1, &kb, &v)?) else { break };
        u = nu;
    }
    let b = map.apply(&u, &v)?;
    best = best.max(k.norm(&b));
    Ok(NormEstimate { value: best, iterations: done })
}

/// A bilinear map given by kernels `M_i` (each `N2 x N1`):
/// `B(u, v)_i = u* M_i* v`, `G(y) = sum_i y_i M_i`.
#[derive(Clone, Debug)]
pub struct DenseBilinear {
    pub kernels: Vec<DMatrix<C64>>,
}

impl DenseBilinear {
    pub fn new(kernels: Vec<DMatrix<C64>>) -> Result<Self> {
        let Some(first) = kernels.first() else {
            return Err(Error::InvalidParameter("at least one kernel required".into()));
        };
        if kernels.iter().any(|m| m.shape() != first.shape()) {
            return Err(Error::Dimension("kernels differ in shape".into()));
        }
        Ok(DenseBilinear { kernels })
    }

    fn gram(&self, y: &[C64]) -> DMatrix<C64> {
        let mut g = DMatrix::zeros(self.kernels[0].nrows(), self.kernels[0].ncols());
        for (yi, m) in y.iter().zip(&self.kernels) {
            g += m * *yi;
        }
        g
    }
}

impl BilinearMap for DenseBilinear {
    fn domain_dims(&self) -> (usize, usize) {
        (self.kernels[0].ncols(), self.kernels[0].nrows())
    }
    fn data_len(&self) -> usize {
        self.kernels.len()
    }
    fn apply(&self, u: &[C64], v: &[C64]) -> Result<CVec> {
        let (n1, n2) = self.domain_dims();
        check_len("u", u.len(), n1)?;
        check_len("v", v.len(), n2)?;
        Ok(self.kernels.iter().map(|m| dotc(u, &mat_vec(&m.adjoint(), v))).collect())
    }
    fn hs_right(&self, y: &[C64], e: &[C64]) -> Result<CVec> {
        check_len("data", y.len(), self.data_len())?;
        check_len("e", e.len(), self.domain_dims().0)?;
        Ok(mat_vec(&self.gram(y), e))
    }
    fn hs_left(&self, y: &[C64], f: &[C64]) -> Result<CVec> {
        check_len("data", y.len(), self.data_len())?;
        check_len("f", f.len(), self.domain_dims().1)?;
        Ok(mat_vec(&self.gram(y).adjoint(), f))
    }
}

/// A quadratic map with Hermitian kernels: `Q(u)_i = u* M_i u`.
#[derive(Clone, Debug)]
pub struct DenseQuadratic {
    inner: DenseBilinear,
}

impl DenseQuadratic {
    pub fn new(kernels: Vec<DMatrix<C64>>) -> Result<Self> {
        let inner = DenseBilinear::new(kernels)?;
        for m in &inner.kernels {
            if !m.is_square() || (m - m.adjoint()).norm() > 1e-12 * (1.0 + m.norm()) {
                return Err(Error::InvalidParameter("quadratic kernels must be Hermitian".into()));
            }
        }
        Ok(DenseQuadratic { inner })
    }
    pub fn kernels(&self) -> &[DMatrix<C64>] {
        &self.inner.kernels
    }
}

impl QuadraticMap for DenseQuadratic {
    fn dim(&self) -> usize {
        self.inner.domain_dims().0
    }
    fn data_len(&self) -> usize {
        self.inner.data_len()
    }
    fn apply(&self, u: &[C64]) -> Result<CVec> {
        self.inner.apply(u, u)
    }
    fn bilinear(&self, u: &[C64], v: &[C64]) -> Result<CVec> {
        self.inner.apply(u, v)
    }
    fn hs_adjoint(&self, y: &[C64], e: &[C64]) -> Result<CVec> {
        self.inner.hs_right(y, e)
    }
}

fn mat_vec(m: &DMatrix<C64>, x: &[C64]) -> CVec {
    (m * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()
}
