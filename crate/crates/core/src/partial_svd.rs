//! Leading singular triples of a tensor that is only available through its
//! actions `e -> w H1 e` and `f -> w* H2 f`.
//!
//! Two engines are provided: subspace iteration with a Rayleigh-Ritz step
//! ([`subspace_iterate`]) and Golub-Kahan-Lanczos bidiagonalization with
//! full reorthogonalization and augmented restarts ([`augmented_restart`]).
//! All orthogonality is with respect to the metrics of the oracle, so the
//! returned factors are `H1`- and `H2`-orthonormal.

use std::cell::Cell;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{combine, dotc, jacobi_svd, random_cvec, rng_from_seed, scale_real, CVec, C64, ZERO};
use crate::metric::{orthonormalize_against, Metric};

/// Largest admissible Krylov dimension.
pub const MAX_KRYLOV_DIM: usize = 256;

/// Access to a tensor `w` from `H1 = C^{n1}` to `H2 = C^{n2}` through its
/// actions only.
pub trait ActionOracle {
    /// `(n1, n2)`.
    fn dims(&self) -> (usize, usize);
    fn metric1(&self) -> &Metric;
    fn metric2(&self) -> &Metric;
    /// `w H1 e`, a vector of length `n2`.
    fn right(&self, e: &[C64]) -> Result<CVec>;
    /// `w* H2 f`, a vector of length `n1`.
    fn left(&self, f: &[C64]) -> Result<CVec>;
    /// A known lower bound for the leading singular value, if any.
    fn norm_estimate(&self) -> Option<f64> {
        None
    }
}

/// Oracle defined by a pair of closures.
pub struct FnOracle<'a> {
    pub n1: usize,
    pub n2: usize,
    pub metric1: &'a Metric,
    pub metric2: &'a Metric,
    pub right: Box<dyn Fn(&[C64]) -> Result<CVec> + 'a>,
    pub left: Box<dyn Fn(&[C64]) -> Result<CVec> + 'a>,
    pub norm_hint: Option<f64>,
}

impl ActionOracle for FnOracle<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }
    fn metric1(&self) -> &Metric {
        self.metric1
    }
    fn metric2(&self) -> &Metric {
        self.metric2
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        (self.right)(e)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        (self.left)(f)
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.norm_hint
    }
}

/// An explicit `n2 x n1` matrix with metrics; for small problems and tests.
pub struct DenseOracle {
    pub matrix: DMatrix<C64>,
    pub metric1: Metric,
    pub metric2: Metric,
}

impl DenseOracle {
    pub fn euclidean(matrix: DMatrix<C64>) -> Self {
        let (n2, n1) = matrix.shape();
        DenseOracle { matrix, metric1: Metric::euclidean(n1), metric2: Metric::euclidean(n2) }
    }
}

impl ActionOracle for DenseOracle {
    fn dims(&self) -> (usize, usize) {
        (self.matrix.ncols(), self.matrix.nrows())
    }
    fn metric1(&self) -> &Metric {
        &self.metric1
    }
    fn metric2(&self) -> &Metric {
        &self.metric2
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        let he = self.metric1.apply(e)?;
        Ok((&self.matrix * nalgebra::DVector::from_vec(he)).iter().copied().collect())
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        let hf = self.metric2.apply(f)?;
        Ok((self.matrix.adjoint() * nalgebra::DVector::from_vec(hf)).iter().copied().collect())
    }
}

/// Counts oracle evaluations and checks output lengths.
struct Counted<'a, O: ActionOracle + ?Sized> {
    inner: &'a O,
    right_calls: Cell<usize>,
    left_calls: Cell<usize>,
}

impl<'a, O: ActionOracle + ?Sized> Counted<'a, O> {
    fn new(inner: &'a O) -> Self {
        Counted { inner, right_calls: Cell::new(0), left_calls: Cell::new(0) }
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        self.right_calls.set(self.right_calls.get() + 1);
        let out = self.inner.right(e)?;
        check_len("right action output", out.len(), self.inner.dims().1)?;
        finite(&out)?;
        Ok(out)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        self.left_calls.set(self.left_calls.get() + 1);
        let out = self.inner.left(f)?;
        check_len("left action output", out.len(), self.inner.dims().0)?;
        finite(&out)?;
        Ok(out)
    }
}

fn finite(v: &[C64]) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("oracle returned a non-finite value".into()))
    }
}

/// Leading singular triples `w H1 u_m = s_m v_m`, `w* H2 v_m = s_m u_m`.
#[derive(Clone, Debug, Default)]
pub struct PartialSvd {
    pub values: Vec<f64>,
    /// Right singular vectors, `H1`-orthonormal.
    pub right: Vec<CVec>,
    /// Left singular vectors, `H2`-orthonormal.
    pub left: Vec<CVec>,
    /// Residual estimates `|w* H2 v_m - s_m u_m|_{H1}`.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    /// All requested triples converged (or the stop criterion was met).
    pub all_converged: bool,
    /// An invariant subspace was found; the triples are exact.
    pub exact: bool,
    /// Restart cycles (Lanczos) or sweeps (subspace iteration).
    pub iterations: usize,
    pub right_actions: usize,
    pub left_actions: usize,
    /// Largest leading singular value seen.
    pub norm_estimate: f64,
    /// Ritz values after each sweep (subspace iteration only).
    pub ritz_history: Vec<Vec<f64>>,
}

impl PartialSvd {
    pub fn actions(&self) -> usize {
        self.right_actions + self.left_actions
    }

    fn truncate(&mut self, n: usize) {
        self.values.truncate(n);
        self.right.truncate(n);
        self.left.truncate(n);
        self.residuals.truncate(n);
        self.converged.truncate(n);
    }
}

/// Unit vector in `metric`, normalized from `v` or drawn at random if `v`
/// is absent or zero.
fn start_vector(metric: &Metric, v: Option<&[C64]>, seed: u64) -> CVec {
    if let Some(v) = v {
        let n = metric.norm(v);
        if n > 0.0 && n.is_finite() {
            let mut out = v.to_vec();
            scale_real(1.0 / n, &mut out);
            return out;
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut out = random_cvec(&mut rng, metric.dim());
    let n = metric.norm(&out);
    scale_real(1.0 / n, &mut out);
    out
}

/// Power iteration on `w* H2 w H1`; returns a lower bound for the leading
/// singular value (the largest observed `|w H1 x|_{H2}` over unit `x`).
pub fn estimate_operator_norm<O: ActionOracle + ?Sized>(oracle: &O, iters: usize, seed: u64) -> Result<f64> {
    let (m1, m2) = (oracle.metric1(), oracle.metric2());
    let mut x = start_vector(m1, None, seed);
    let mut best: f64 = 0.0;
    for _ in 0..iters.max(1) {
        let y = oracle.right(&x)?;
        let s = m2.norm(&y);
        best = best.max(s);
        if s == 0.0 {
            break;
        }
        let z = oracle.left(&y)?;
        let nz = m1.norm(&z);
        if nz == 0.0 {
            break;
        }
        x = z;
        scale_real(1.0 / nz, &mut x);
    }
    Ok(best)
}

/// Index of the first value below `tau`, if any among the first `l`.
fn first_below(values: &[f64], l: usize, tau: Option<f64>) -> Option<usize> {
    let tau = tau?;
    values.iter().take(l).position(|&s| s < tau)
}

/// Whether the leading triples needed for the caller have converged: all
/// `l` of them, or all up to and including the first one below `tau`.
fn enough_converged(values: &[f64], conv: &[bool], l: usize, tau: Option<f64>) -> bool {
    let needed = match first_below(values, l, tau) {
        Some(j) => j + 1,
        None => l.min(values.len()),
    };
    conv.iter().take(needed).all(|&c| c)
}

/// Subspace iteration with Ritz acceleration for the `l` leading triples.
///
/// `start` holds initial left vectors (in `H2`); missing ones are drawn at
/// random from `seed`. Converged when `|w* H2 v_m - s_m u_m|_{H1} <=
/// delta s_0` for all `m < l`.
pub fn subspace_iterate<O: ActionOracle + ?Sized>(
    oracle: &O,
    l: usize,
    delta: f64,
    max_sweeps: usize,
    start: &[CVec],
    seed: u64,
) -> Result<PartialSvd> {
    subspace_engine(oracle, l, l, delta, max_sweeps, start, seed, None)
}

/// Subspace iteration on `block >= l` vectors; only the leading `l` must
/// converge, the rest speed up convergence when values cluster.
#[allow(clippy::too_many_arguments)]
pub(crate) fn subspace_engine<O: ActionOracle + ?Sized>(
    oracle: &O,
    l: usize,
    block: usize,
    delta: f64,
    max_sweeps: usize,
    start: &[CVec],
    seed: u64,
    stop_below: Option<f64>,
) -> Result<PartialSvd> {
    let (n1, n2) = oracle.dims();
    if l == 0 || l > n1.min(n2) {
        return Err(Error::InvalidParameter(format!("subspace size {l} must be in 1..={}", n1.min(n2))));
    }
    let block = block.clamp(l, n1.min(n2));
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let (m1, m2) = (oracle.metric1(), oracle.metric2());
    let counted = Counted::new(oracle);

    let mut v = fill_basis(m2, start, block, seed);
    let mut out = PartialSvd::default();
    let mut norm_est = oracle.norm_estimate().unwrap_or(0.0);
    let mut have_ritz = false;

    for sweep in 0..=max_sweeps {
        let lv: Vec<CVec> = v.iter().map(|x| counted.left(x)).collect::<Result<_>>()?;
        if have_ritz {
            let mut conv = Vec::with_capacity(out.values.len());
            let mut res = Vec::with_capacity(out.values.len());
            for (m, lm) in lv.iter().enumerate() {
                let mut r = lm.clone();
                crate::linalg::axpy(C64::new(-out.values[m], 0.0), &out.right[m], &mut r);
                let rn = m1.norm(&r);
                res.push(rn);
                conv.push(rn <= delta * norm_est);
            }
            out.residuals = res;
            out.converged = conv;
            if enough_converged(&out.values, &out.converged, l, stop_below) {
                out.all_converged = true;
                break;
            }
            if sweep == max_sweeps {
                break;
            }
        }
        let (e, _) = m1.orthonormalize_raw(&lv);
        if e.is_empty() {
            out = PartialSvd { all_converged: true, exact: true, ritz_history: out.ritz_history, ..Default::default() };
            out.iterations = sweep;
            break;
        }
        let r: Vec<CVec> = e.iter().map(|x| counted.right(x)).collect::<Result<_>>()?;
        let (f, _) = m2.orthonormalize_raw(&r);
        if f.is_empty() {
            out = PartialSvd { all_converged: true, exact: true, ritz_history: out.ritz_history, ..Default::default() };
            out.iterations = sweep;
            break;
        }
        let hf: Vec<CVec> = f.iter().map(|x| m2.apply_unchecked(x)).collect();
        let cross = DMatrix::from_fn(f.len(), e.len(), |i, j| dotc(&hf[i], &r[j]));
        let svd = jacobi_svd(&cross);
        let count = svd.s.len();
        out.values = svd.s.clone();
        out.right = (0..count).map(|j| combine(&e, svd.v.column(j).iter().copied(), n1)).collect();
        out.left = (0..count).map(|j| combine(&f, svd.u.column(j).iter().copied(), n2)).collect();
        out.residuals = vec![f64::INFINITY; count];
        out.converged = vec![false; count];
        out.ritz_history.push(svd.s.clone());
        out.iterations = sweep + 1;
        norm_est = norm_est.max(svd.s[0]);
        have_ritz = true;
        v = out.left.clone();
    }
    drop_zero_triples(&mut out);
    out.truncate(l);
    out.norm_estimate = norm_est;
    out.right_actions = counted.right_calls.get();
    out.left_actions = counted.left_calls.get();
    Ok(out)
}

/// `start` completed to `l` orthonormal vectors with seeded random ones.
fn fill_basis(metric: &Metric, start: &[CVec], l: usize, seed: u64) -> Vec<CVec> {
    let n = metric.dim();
    let mut rng = rng_from_seed(seed);
    let mut basis: Vec<CVec> = Vec::with_capacity(l);
    let mut hbasis: Vec<CVec> = Vec::with_capacity(l);
    for s in start.iter().filter(|s| s.len() == n) {
        if basis.len() == l {
            break;
        }
        if let Some((q, hq)) = orthonormalize_against(metric, &basis, &hbasis, s.clone()) {
            basis.push(q);
            hbasis.push(hq);
        }
    }
    let mut attempts = 0;
    while basis.len() < l && attempts < 10 * l + 10 {
        attempts += 1;
        let cand = random_cvec(&mut rng, n);
        if let Some((q, hq)) = orthonormalize_against(metric, &basis, &hbasis, cand) {
            basis.push(q);
            hbasis.push(hq);
        }
    }
    basis
}

fn drop_zero_triples(out: &mut PartialSvd) {
    let lead = out.values.first().copied().unwrap_or(0.0);
    let keep = out.values.iter().take_while(|&&s| s > 0.0 && s > 1e-14 * lead).count();
    out.truncate(keep);
}

/// The projected matrix `F* H2 w H1 E` of a (possibly augmented) Lanczos
/// bidiagonalization. Columns are stored as computed coefficient vectors;
/// for a plain run the matrix is upper bidiagonal with diagonal `beta` and
/// superdiagonal `gamma`, after an augmented restart the first `lead`
/// columns are diagonal Ritz values and column `lead` carries the coupling
/// coefficients `rho`.
#[derive(Clone, Debug)]
pub struct BidiagonalSystem {
    columns: Vec<Vec<C64>>,
    rows: usize,
    pub lead: usize,
}

impl BidiagonalSystem {
    pub fn from_bidiagonal(beta: &[f64], gamma: &[f64]) -> Self {
        let k = beta.len();
        let columns = (0..k)
            .map(|j| {
                let mut c = vec![ZERO; j + 1];
                c[j] = C64::new(beta[j], 0.0);
                if j > 0 {
                    c[j - 1] = C64::new(gamma[j - 1], 0.0);
                }
                c
            })
            .collect();
        BidiagonalSystem { columns, rows: k, lead: 0 }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols());
        for (j, c) in self.columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate().take(self.rows) {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Diagonal entries `beta_m` (real parts).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols())).map(|j| self.entry(j, j).re).collect()
    }

    /// Superdiagonal entries `gamma_m` (real parts).
    pub fn superdiagonal(&self) -> Vec<f64> {
        (1..self.cols()).filter(|&j| j <= self.rows).map(|j| self.entry(j - 1, j).re).collect()
    }

    /// Coupling coefficients `rho_m` of the first augmented column.
    pub fn coupling(&self) -> Vec<C64> {
        if self.lead == 0 || self.cols() <= self.lead {
            return vec![];
        }
        (0..self.lead).map(|i| self.entry(i, self.lead)).collect()
    }

    fn entry(&self, i: usize, j: usize) -> C64 {
        self.columns.get(j).and_then(|c| c.get(i)).copied().unwrap_or(ZERO)
    }
}

/// Output of a Lanczos bidiagonalization run.
#[derive(Clone, Debug)]
pub struct Bidiagonalization {
    pub system: BidiagonalSystem,
    /// `H1`-orthonormal right basis.
    pub e: Vec<CVec>,
    /// `H2`-orthonormal left basis.
    pub f: Vec<CVec>,
    /// Continuation vector: the part of `w* H2 f_last` outside `span(e)`.
    pub p: CVec,
    /// `|p|_{H1}`.
    pub gamma: f64,
    /// The recursion broke down on an invariant subspace.
    pub exact: bool,
    pub right_actions: usize,
    pub left_actions: usize,
}

struct Lanczos<'a, O: ActionOracle + ?Sized> {
    oracle: Counted<'a, O>,
    n1: usize,
    n2: usize,
    e: Vec<CVec>,
    he: Vec<CVec>,
    f: Vec<CVec>,
    hf: Vec<CVec>,
    columns: Vec<Vec<C64>>,
    lead: usize,
    p: CVec,
    gamma: f64,
    exact: bool,
    scale: f64,
    /// Source of fresh directions after a breakdown; `None` stops instead.
    refill: Option<rand_chacha::ChaCha8Rng>,
}

/// Relative size of a recursion coefficient treated as zero.
const BREAKDOWN_TOL: f64 = 1e-12;

impl<'a, O: ActionOracle + ?Sized> Lanczos<'a, O> {
    fn new(oracle: &'a O, start: CVec) -> Self {
        let (n1, n2) = oracle.dims();
        let gamma = oracle.metric1().norm(&start);
        Lanczos {
            oracle: Counted::new(oracle),
            n1,
            n2,
            e: vec![],
            he: vec![],
            f: vec![],
            hf: vec![],
            columns: vec![],
            lead: 0,
            p: start,
            gamma,
            exact: false,
            scale: oracle.norm_estimate().unwrap_or(0.0),
            refill: None,
        }
    }

    /// A random unit vector orthogonal to `basis`, if the space is not exhausted.
    fn fresh(&mut self, metric: &Metric, basis: &[CVec], hbasis: &[CVec], n: usize) -> Option<(CVec, CVec)> {
        let rng = self.refill.as_mut()?;
        if basis.len() >= n {
            return None;
        }
        (0..5).find_map(|_| orthonormalize_against(metric, basis, hbasis, random_cvec(rng, n)))
    }

    fn tol(&self) -> f64 {
        BREAKDOWN_TOL * self.scale
    }

    /// Extends the bases until `k` left vectors exist or the recursion breaks down.
    fn extend(&mut self, k: usize) -> Result<()> {
        let (m1, m2) = (self.oracle.inner.metric1(), self.oracle.inner.metric2());
        while self.f.len() < k && !self.exact {
            let next = if self.gamma <= self.tol() || self.gamma == 0.0 {
                None
            } else {
                let mut pe = std::mem::take(&mut self.p);
                scale_real(1.0 / self.gamma, &mut pe);
                orthonormalize_against(m1, &self.e, &self.he, pe)
            };
            // On breakdown the Krylov space is invariant; continue with a
            // fresh direction so that the leading triples are not missed.
            let next = match next {
                Some(x) => Some(x),
                None => {
                    let (e, he) = (std::mem::take(&mut self.e), std::mem::take(&mut self.he));
                    let x = self.fresh(m1, &e, &he, self.n1);
                    self.e = e;
                    self.he = he;
                    x
                }
            };
            let Some((e, he)) = next else {
                self.exact = true;
                break;
            };
            let mut q = self.oracle.right(&e)?;
            self.e.push(e);
            self.he.push(he);
            let mut coeffs = vec![ZERO; self.f.len()];
            for _ in 0..2 {
                for (i, hf) in self.hf.iter().enumerate() {
                    let c = dotc(hf, &q);
                    coeffs[i] += c;
                    crate::linalg::axpy(-c, &self.f[i], &mut q);
                }
            }
            let mut hq = m2.apply_unchecked(&q);
            let beta = dotc(&q, &hq).re.max(0.0).sqrt();
            self.scale = self.scale.max(beta).max(coeffs.iter().fold(0.0, |a, c| a.max(c.norm())));
            if beta <= self.tol() || beta == 0.0 {
                let (f, hf) = (std::mem::take(&mut self.f), std::mem::take(&mut self.hf));
                let fresh = self.fresh(m2, &f, &hf, self.n2);
                self.f = f;
                self.hf = hf;
                match fresh {
                    Some((fq, fhq)) => {
                        coeffs.push(ZERO);
                        q = fq;
                        hq = fhq;
                    }
                    None => {
                        self.columns.push(coeffs);
                        self.exact = true;
                        break;
                    }
                }
            } else {
                coeffs.push(C64::new(beta, 0.0));
                scale_real(1.0 / beta, &mut q);
                scale_real(1.0 / beta, &mut hq);
            }
            self.columns.push(coeffs);
            let mut r = self.oracle.left(&q)?;
            self.f.push(q);
            self.hf.push(hq);
            for _ in 0..2 {
                for (i, he) in self.he.iter().enumerate() {
                    let c = dotc(he, &r);
                    crate::linalg::axpy(-c, &self.e[i], &mut r);
                }
            }
            self.gamma = m1.norm(&r);
            self.scale = self.scale.max(self.gamma);
            self.p = r;
        }
        // With a complete right basis the continuation is orthogonal to the
        // whole space; whatever is left of it is rounding.
        if !self.exact && (self.gamma <= self.tol() || self.e.len() == self.n1) {
            self.exact = true;
        }
        Ok(())
    }

    fn system(&self) -> BidiagonalSystem {
        BidiagonalSystem { columns: self.columns.clone(), rows: self.f.len(), lead: self.lead }
    }

    /// Ritz triples of the current projected matrix, all of them.
    fn ritz(&self) -> PartialSvd {
        let sys = self.system();
        ritz_from(&sys, &self.e, &self.f, self.gamma, self.exact, self.n1, self.n2)
    }

    /// Keeps the `l` leading Ritz triples as the new bases.
    fn restart(&mut self, ritz: &PartialSvd, l: usize) {
        let l = l.min(ritz.values.len());
        let (m1, m2) = (self.oracle.inner.metric1(), self.oracle.inner.metric2());
        self.e = ritz.right[..l].to_vec();
        self.f = ritz.left[..l].to_vec();
        self.he = self.e.iter().map(|x| m1.apply_unchecked(x)).collect();
        self.hf = self.f.iter().map(|x| m2.apply_unchecked(x)).collect();
        self.columns = (0..l)
            .map(|j| {
                let mut c = vec![ZERO; j + 1];
                c[j] = C64::new(ritz.values[j], 0.0);
                c
            })
            .collect();
        self.lead = l;
    }
}

fn ritz_from(
    sys: &BidiagonalSystem,
    e: &[CVec],
    f: &[CVec],
    gamma: f64,
    exact: bool,
    n1: usize,
    n2: usize,
) -> PartialSvd {
    let mut out = PartialSvd { exact, ..Default::default() };
    if sys.rows() == 0 || sys.cols() == 0 {
        out.all_converged = exact;
        return out;
    }
    let svd = jacobi_svd(&sys.matrix());
    let count = svd.s.len();
    let last = sys.rows() - 1;
    for j in 0..count {
        out.values.push(svd.s[j]);
        out.right.push(combine(e, svd.v.column(j).iter().copied(), n1));
        out.left.push(combine(f, svd.u.column(j).iter().copied(), n2));
        let res = if exact { 0.0 } else { gamma * svd.u[(last, j)].norm() };
        out.residuals.push(res);
        out.converged.push(false);
    }
    out
}

/// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization,
/// started from `start` (normalized in `H1`), producing up to `k` columns.
pub fn lanczos_bidiagonalize<O: ActionOracle + ?Sized>(oracle: &O, start: &[C64], k: usize) -> Result<Bidiagonalization> {
    let (n1, n2) = oracle.dims();
    check_len("start vector", start.len(), n1)?;
    if k == 0 || k > n1.min(n2) || k > MAX_KRYLOV_DIM {
        return Err(Error::InvalidParameter(format!("Krylov dimension {k} out of range")));
    }
    let nrm = oracle.metric1().norm(start);
    if !(nrm > 0.0) {
        return Err(Error::InvalidParameter("zero start vector".into()));
    }
    let mut s = start.to_vec();
    scale_real(1.0 / nrm, &mut s);
    let mut lz = Lanczos::new(oracle, s);
    lz.extend(k)?;
    Ok(Bidiagonalization {
        system: lz.system(),
        e: lz.e.clone(),
        f: lz.f.clone(),
        p: lz.p.clone(),
        gamma: lz.gamma,
        exact: lz.exact,
        right_actions: lz.oracle.right_calls.get(),
        left_actions: lz.oracle.left_calls.get(),
    })
}

/// Ritz triples from a projected matrix and its bases, in descending order.
pub fn ritz_factorize(system: &BidiagonalSystem, e: &[CVec], f: &[CVec], gamma: f64, exact: bool) -> PartialSvd {
    let n1 = e.first().map_or(0, |v| v.len());
    let n2 = f.first().map_or(0, |v| v.len());
    ritz_from(system, e, f, gamma, exact, n1, n2)
}

/// Augmented restarted Lanczos bidiagonalization for the `l` leading
/// triples using Krylov spaces of dimension `k`.
///
/// `start` is the initial right vector (random from `seed` when absent).
/// Converged when the residual estimate of each of the `l` leading Ritz
/// triples is at most `delta` times the largest leading value seen.
pub fn augmented_restart<O: ActionOracle + ?Sized>(
    oracle: &O,
    l: usize,
    k: usize,
    delta: f64,
    max_restarts: usize,
    start: Option<&[C64]>,
    seed: u64,
) -> Result<PartialSvd> {
    augmented_engine(oracle, l, k, delta, max_restarts, start, seed, None)
}

/// The adjoint tensor `w*`, with the roles of the two spaces exchanged.
struct Adjoint<'a, O: ActionOracle + ?Sized>(&'a O);

impl<O: ActionOracle + ?Sized> ActionOracle for Adjoint<'_, O> {
    fn dims(&self) -> (usize, usize) {
        let (n1, n2) = self.0.dims();
        (n2, n1)
    }
    fn metric1(&self) -> &Metric {
        self.0.metric2()
    }
    fn metric2(&self) -> &Metric {
        self.0.metric1()
    }
    fn right(&self, e: &[C64]) -> Result<CVec> {
        self.0.left(e)
    }
    fn left(&self, f: &[C64]) -> Result<CVec> {
        self.0.right(f)
    }
    fn norm_estimate(&self) -> Option<f64> {
        self.0.norm_estimate()
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn augmented_engine<O: ActionOracle + ?Sized>(
    oracle: &O,
    l: usize,
    k: usize,
    delta: f64,
    max_restarts: usize,
    start: Option<&[C64]>,
    seed: u64,
    stop_below: Option<f64>,
) -> Result<PartialSvd> {
    let (n1, n2) = oracle.dims();
    // A Krylov space as large as the smaller side is only invariant when it
    // lives in that side, so such requests run on the adjoint.
    if k == n2 && n2 < n1 && k <= MAX_KRYLOV_DIM {
        if let Some(s) = start {
            check_len("start vector", s.len(), n1)?;
        }
        let mapped = start.map(|s| oracle.right(s)).transpose()?;
        let mut p = augmented_engine_in(&Adjoint(oracle), l, k, delta, max_restarts, mapped.as_deref(), seed, stop_below)?;
        std::mem::swap(&mut p.right, &mut p.left);
        std::mem::swap(&mut p.right_actions, &mut p.left_actions);
        return Ok(p);
    }
    augmented_engine_in(oracle, l, k, delta, max_restarts, start, seed, stop_below)
}

#[allow(clippy::too_many_arguments)]
fn augmented_engine_in<O: ActionOracle + ?Sized>(
    oracle: &O,
    l: usize,
    k: usize,
    delta: f64,
    max_restarts: usize,
    start: Option<&[C64]>,
    seed: u64,
    stop_below: Option<f64>,
) -> Result<PartialSvd> {
    let (n1, n2) = oracle.dims();
    let nmin = n1.min(n2);
    // l == k is only meaningful when the Krylov space is the whole space.
    let valid = l >= 1 && l <= k && k <= nmin && k <= MAX_KRYLOV_DIM && (l < k || k == nmin);
    if !valid {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= l < k <= min(n1, n2) = {nmin} and k <= {MAX_KRYLOV_DIM}; got l = {l}, k = {k}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    if let Some(s) = start {
        check_len("start vector", s.len(), n1)?;
    }
    let s = start_vector(oracle.metric1(), start, seed);
    let mut lz = Lanczos::new(oracle, s);
    lz.refill = Some(rng_from_seed(seed ^ 0x5DEE_CE66_D1CE_4E5B));
    lz.extend(k)?;
    let mut norm_est = oracle.norm_estimate().unwrap_or(0.0);
    let mut restarts = 0;
    let mut ritz;
    loop {
        ritz = lz.ritz();
        if let Some(&s0) = ritz.values.first() {
            norm_est = norm_est.max(s0);
        }
        let conv: Vec<bool> = ritz.residuals.iter().map(|&r| r <= delta * norm_est).collect();
        ritz.converged = conv;
        if ritz.exact || enough_converged(&ritz.values, &ritz.converged, l, stop_below) {
            ritz.all_converged = true;
            break;
        }
        if restarts >= max_restarts {
            break;
        }
        restarts += 1;
        lz.restart(&ritz, l);
        lz.extend(k)?;
    }
    if ritz.exact {
        ritz.converged.iter_mut().for_each(|c| *c = true);
    }
    drop_zero_triples(&mut ritz);
    ritz.truncate(l);
    ritz.iterations = restarts;
    ritz.norm_estimate = norm_est;
    ritz.right_actions = lz.oracle.right_calls.get();
    ritz.left_actions = lz.oracle.left_calls.get();
    Ok(ritz)
}

/// Orthonormal random vectors in `metric`, completing `basis`.
pub fn random_orthonormal_completion(metric: &Metric, basis: &[CVec], count: usize, seed: u64) -> Vec<CVec> {
    let all = fill_basis(metric, basis, basis.len() + count, seed);
    all.into_iter().skip(basis.len()).collect()
}
