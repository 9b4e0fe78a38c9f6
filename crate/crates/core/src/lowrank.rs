//! Factored storage of the lifted variable.
//!
//! A [`FactoredTensor`] represents the matrix `w = sum_k s_k v_k u_k*`
//! (right factors `u_k`, left factors `v_k`); a [`HermitianFactored`]
//! represents `w = sum_k l_k u_k u_k*`. The matrices are never formed.

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, fix_phase, scale, zeros, CVec, C64};
use crate::metric::Metric;

/// Values below this fraction of the leading value are discarded.
pub const PRUNE_RELATIVE: f64 = 1e-14;
/// Default upper bound on stored ranks.
pub const DEFAULT_RANK_CAP: usize = 64;

#[derive(Clone, Debug, Default)]
pub struct FactoredTensor {
    pub right: Vec<CVec>,
    pub left: Vec<CVec>,
    pub values: Vec<f64>,
    n1: usize,
    n2: usize,
}

impl FactoredTensor {
    pub fn zero(n1: usize, n2: usize) -> Self {
        FactoredTensor { right: vec![], left: vec![], values: vec![], n1, n2 }
    }

    /// Builds from triples `(s_k, u_k, v_k)`; sorts by descending value and
    /// prunes values that are not positive or below `1e-14 s_0`.
    pub fn from_triples(n1: usize, n2: usize, triples: Vec<(f64, CVec, CVec)>) -> Result<Self> {
        let mut t = triples;
        for (s, u, v) in &t {
            check_len("right factor", u.len(), n1)?;
            check_len("left factor", v.len(), n2)?;
            if !s.is_finite() {
                return Err(Error::Numerical("non-finite singular value".into()));
            }
        }
        t.sort_by(|a, b| b.0.total_cmp(&a.0));
        let lead = t.first().map_or(0.0, |x| x.0);
        t.retain(|x| x.0 > 0.0 && x.0 > PRUNE_RELATIVE * lead);
        let mut out = FactoredTensor::zero(n1, n2);
        for (s, u, v) in t {
            out.values.push(s);
            out.right.push(u);
            out.left.push(v);
        }
        Ok(out)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `w H1 e = sum_k s_k (u_k* H1 e) v_k`.
    pub fn right_action(&self, metric1: &Metric, e: &[C64]) -> Result<CVec> {
        check_len("right action", e.len(), self.n1)?;
        check_len("right action metric", metric1.dim(), self.n1)?;
        let mut out = zeros(self.n2);
        if self.is_empty() {
            return Ok(out);
        }
        let he = metric1.apply_unchecked(e);
        for ((s, u), v) in self.values.iter().zip(&self.right).zip(&self.left) {
            let c = crate::linalg::dotc(u, &he) * *s;
            axpy(c, v, &mut out);
        }
        Ok(out)
    }

    /// `w* H2 f = sum_k s_k (v_k* H2 f) u_k`.
    pub fn left_action(&self, metric2: &Metric, f: &[C64]) -> Result<CVec> {
        check_len("left action", f.len(), self.n2)?;
        check_len("left action metric", metric2.dim(), self.n2)?;
        let mut out = zeros(self.n1);
        if self.is_empty() {
            return Ok(out);
        }
        let hf = metric2.apply_unchecked(f);
        for ((s, u), v) in self.values.iter().zip(&self.right).zip(&self.left) {
            let c = crate::linalg::dotc(v, &hf) * *s;
            axpy(c, u, &mut out);
        }
        Ok(out)
    }

    /// Sum of the singular values (projective norm for orthonormal factors).
    pub fn projective_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Normalized `sum_k s_k u_k`, used to warm-start Krylov methods.
    pub fn warm_start(&self) -> Option<CVec> {
        weighted_sum(self.n1, &self.values, &self.right)
    }
}

#[derive(Clone, Debug, Default)]
pub struct HermitianFactored {
    pub factors: Vec<CVec>,
    pub values: Vec<f64>,
    n: usize,
}

impl HermitianFactored {
    pub fn zero(n: usize) -> Self {
        HermitianFactored { factors: vec![], values: vec![], n }
    }

    /// Builds from eigenpairs, sorted by descending value; pairs with
    /// `|l| <= 1e-14 max|l|` or `l == 0` are dropped.
    pub fn from_pairs(n: usize, pairs: Vec<(f64, CVec)>) -> Result<Self> {
        let mut p = pairs;
        for (l, u) in &p {
            check_len("eigenvector", u.len(), n)?;
            if !l.is_finite() {
                return Err(Error::Numerical("non-finite eigenvalue".into()));
            }
        }
        let lead = p.iter().fold(0.0f64, |m, x| m.max(x.0.abs()));
        p.retain(|x| x.0 != 0.0 && x.0.abs() > PRUNE_RELATIVE * lead);
        p.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out = HermitianFactored::zero(n);
        for (l, u) in p {
            out.values.push(l);
            out.factors.push(u);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `w H e = sum_k l_k (u_k* H e) u_k`.
    pub fn action(&self, metric: &Metric, e: &[C64]) -> Result<CVec> {
        check_len("hermitian action", e.len(), self.n)?;
        check_len("hermitian action metric", metric.dim(), self.n)?;
        let mut out = zeros(self.n);
        if self.is_empty() {
            return Ok(out);
        }
        let he = metric.apply_unchecked(e);
        for (l, u) in self.values.iter().zip(&self.factors) {
            let c = crate::linalg::dotc(u, &he) * *l;
            axpy(c, u, &mut out);
        }
        Ok(out)
    }

    /// `sqrt(l_0) u_0`, phase-normalized so the largest entry is real positive.
    pub fn leading_rank_one(&self) -> Result<CVec> {
        match self.values.first() {
            Some(&l) if l > 0.0 => {
                let mut u = self.factors[0].clone();
                scale(C64::new(l.sqrt(), 0.0), &mut u);
                fix_phase(&mut u);
                Ok(u)
            }
            Some(_) => Err(Error::NoSolution("leading eigenvalue is not positive".into())),
            None => Err(Error::NoSolution("empty factorization".into())),
        }
    }

    /// Normalized `sum_k |l_k| u_k`, used to warm-start Krylov methods.
    pub fn warm_start(&self) -> Option<CVec> {
        let w: Vec<f64> = self.values.iter().map(|l| l.abs()).collect();
        weighted_sum(self.n, &w, &self.factors)
    }

    /// The same tensor viewed as a general factorization with `v_k = sign(l_k) u_k`.
    pub fn to_factored(&self) -> FactoredTensor {
        let mut t = FactoredTensor::zero(self.n, self.n);
        for (l, u) in self.values.iter().zip(&self.factors) {
            let v: CVec = u.iter().map(|z| z * l.signum()).collect();
            t.values.push(l.abs());
            t.right.push(u.clone());
            t.left.push(v);
        }
        let mut idx: Vec<usize> = (0..t.values.len()).collect();
        idx.sort_by(|&a, &b| t.values[b].total_cmp(&t.values[a]));
        FactoredTensor {
            right: idx.iter().map(|&i| t.right[i].clone()).collect(),
            left: idx.iter().map(|&i| t.left[i].clone()).collect(),
            values: idx.iter().map(|&i| t.values[i]).collect(),
            n1: self.n,
            n2: self.n,
        }
    }
}

fn weighted_sum(n: usize, w: &[f64], vs: &[CVec]) -> Option<CVec> {
    if vs.is_empty() {
        return None;
    }
    let mut out = zeros(n);
    for (s, v) in w.iter().zip(vs) {
        axpy(C64::new(*s, 0.0), v, &mut out);
    }
    if crate::linalg::norm(&out) > 0.0 {
        Some(out)
    } else {
        None
    }
}

/// Eigenvalue of a Hermitian tensor from one of its singular triples:
/// `l = s Re<v, u>_H`.
pub fn svd_to_evd(sigma: f64, u: &[C64], v: &[C64], metric: &Metric) -> f64 {
    sigma * metric.pair(v, u).re
}
