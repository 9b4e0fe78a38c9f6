//! Proximal maps: scalar soft thresholding, dual-ball shrinkage, and
//! singular value / positive eigenvalue thresholding of tensors given by
//! action oracles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, scale_real, CVec, C64};
use crate::lowrank::{svd_to_evd, FactoredTensor, HermitianFactored, DEFAULT_RANK_CAP};
use crate::metric::Metric;
use crate::partial_svd::{augmented_engine, subspace_engine, ActionOracle, PartialSvd, MAX_KRYLOV_DIM};

/// `S_tau(t)`.
pub fn soft(t: f64, tau: f64) -> f64 {
    if t > tau {
        t - tau
    } else if t < -tau {
        t + tau
    } else {
        0.0
    }
}

/// `S_tau^+(t)`.
pub fn soft_plus(t: f64, tau: f64) -> f64 {
    if t > tau {
        t - tau
    } else {
        0.0
    }
}

/// Projection-type shrinkage `P_gamma(z)`: zero inside the ball of radius
/// `gamma` in `metric`, otherwise `(1 - gamma/|z|) z`.
pub fn shrink(z: &[C64], gamma: f64, metric: &Metric) -> CVec {
    let n = metric.norm(z);
    if n <= gamma {
        return vec![C64::new(0.0, 0.0); z.len()];
    }
    let mut out = z.to_vec();
    scale_real(1.0 - gamma / n, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Subspace,
    AugmentedLanczos,
    /// Materializes the tensor and uses a full dense decomposition.
    Dense,
}

#[derive(Clone, Debug)]
pub struct ThresholdConfig {
    pub tau: f64,
    /// Initial number of leading triples.
    pub l: usize,
    /// Krylov dimension for Lanczos, block size for subspace iteration.
    pub k: usize,
    pub delta: f64,
    pub engine: Engine,
    pub rank_cap: usize,
    /// Restart cycles (Lanczos) or sweeps (subspace) per engine call.
    pub max_iterations: usize,
    /// Return unconverged results instead of failing.
    pub accept_unconverged: bool,
    pub seed: u64,
}

impl ThresholdConfig {
    pub fn new(tau: f64) -> Self {
        ThresholdConfig {
            tau,
            l: 5,
            k: 10,
            delta: 1e-10,
            engine: Engine::AugmentedLanczos,
            rank_cap: DEFAULT_RANK_CAP,
            max_iterations: 1000,
            accept_unconverged: false,
            seed: 0,
        }
    }

    pub fn with_engine(self, engine: Engine) -> Self {
        ThresholdConfig { engine, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("threshold {} must be nonnegative", self.tau)));
        }
        if self.l == 0 || (self.engine == Engine::AugmentedLanczos && self.k <= self.l) {
            return Err(Error::InvalidParameter(format!("need 0 < l < k, got l = {}, k = {}", self.l, self.k)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        if self.rank_cap == 0 {
            return Err(Error::InvalidParameter("rank cap must be positive".into()));
        }
        Ok(())
    }
}

/// Thresholded tensor with bookkeeping from the spectral computation.
#[derive(Clone, Debug)]
pub struct Thresholded<T> {
    pub tensor: T,
    /// Leading singular values of the input that were computed.
    pub singular_values: Vec<f64>,
    pub restarts: usize,
    pub actions: usize,
    pub converged: bool,
}

/// Warm start for the spectral engine.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    /// Right start vector for Lanczos (in `H1`).
    pub right: Option<CVec>,
    /// Left start vectors for subspace iteration (in `H2`).
    pub left: Vec<CVec>,
}

impl WarmStart {
    pub fn from_factored(w: &FactoredTensor) -> Self {
        WarmStart { right: w.warm_start(), left: w.left.clone() }
    }
    pub fn from_hermitian(w: &HermitianFactored) -> Self {
        WarmStart { right: w.warm_start(), left: w.factors.clone() }
    }
}

/// Leading singular triples with rank adaptation: the subspace grows
/// while every computed value is above the threshold.
fn adaptive_triples<O: ActionOracle + ?Sized>(oracle: &O, cfg: &ThresholdConfig, warm: &WarmStart) -> Result<(PartialSvd, usize, usize, bool)> {
    cfg.validate()?;
    let (n1, n2) = oracle.dims();
    let nmin = n1.min(n2);
    let cap = cfg.rank_cap.min(nmin);
    let mut l = cfg.l.min(cap);
    let mut k = cfg.k.max(l + 1).min(nmin).min(MAX_KRYLOV_DIM);
    if l >= k {
        l = k;
    }
    let mut restarts = 0;
    let mut actions = 0;
    let mut right_start = warm.right.clone();
    let mut left_start = warm.left.clone();
    let mut round = 0u64;
    loop {
        let seed = cfg.seed.wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let psvd = match cfg.engine {
            Engine::AugmentedLanczos | Engine::Dense => {
                augmented_engine(oracle, l, k, cfg.delta, cfg.max_iterations, right_start.as_deref(), seed, Some(cfg.tau))?
            }
            Engine::Subspace => subspace_engine(oracle, l, k.max(l), cfg.delta, cfg.max_iterations, &left_start, seed, Some(cfg.tau))?,
        };
        restarts += psvd.iterations;
        actions += psvd.actions();
        if !psvd.all_converged && !cfg.accept_unconverged {
            return Err(Error::NotConverged {
                message: format!("{} leading triples after {} iterations", l, psvd.iterations),
                partial: Box::new(psvd),
            });
        }
        let s0 = psvd.values.first().copied().unwrap_or(0.0);
        let tie = cfg.delta * s0;
        let all_above = !psvd.values.is_empty() && psvd.values.iter().all(|&s| s > cfg.tau - tie);
        let full = psvd.values.len() >= l;
        if all_above && full && l < cap {
            l = (2 * l).min(cap);
            k = (2 * l).max(k).min(nmin).min(MAX_KRYLOV_DIM);
            if l >= k {
                l = k;
            }
            right_start = weighted_start(&psvd);
            left_start = psvd.left.clone();
            round += 1;
            continue;
        }
        let converged = psvd.all_converged;
        return Ok((psvd, restarts, actions, converged));
    }
}

fn weighted_start(p: &PartialSvd) -> Option<CVec> {
    let n = p.right.first()?.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (s, u) in p.values.iter().zip(&p.right) {
        crate::linalg::axpy(C64::new(*s, 0.0), u, &mut out);
    }
    Some(out)
}

/// Singular value soft thresholding `sum_n S_tau(s_n) u_n (x) v_n` of the
/// tensor behind `oracle`.
pub fn svt<O: ActionOracle + ?Sized>(oracle: &O, cfg: &ThresholdConfig, warm: &WarmStart) -> Result<Thresholded<FactoredTensor>> {
    let (n1, n2) = oracle.dims();
    if cfg.engine == Engine::Dense {
        return materialized_svt(oracle, cfg);
    }
    let (p, restarts, actions, converged) = adaptive_triples(oracle, cfg, warm)?;
    let triples = p
        .values
        .iter()
        .zip(p.right.iter().zip(&p.left))
        .filter(|(&s, _)| s > cfg.tau)
        .map(|(&s, (u, v))| (soft(s, cfg.tau), u.clone(), v.clone()))
        .collect();
    Ok(Thresholded {
        tensor: FactoredTensor::from_triples(n1, n2, triples)?,
        singular_values: p.values,
        restarts,
        actions,
        converged,
    })
}

/// Positive eigenvalue thresholding `sum_n S_tau^+(l_n) u_n (x) u_n` of a
/// Hermitian tensor (left and right actions coincide, shared metric).
pub fn evt<O: ActionOracle + ?Sized>(oracle: &O, cfg: &ThresholdConfig, warm: &WarmStart) -> Result<Thresholded<HermitianFactored>> {
    let (n1, n2) = oracle.dims();
    if n1 != n2 {
        return Err(Error::Dimension(format!("eigenvalue thresholding needs a square tensor, got {n1} x {n2}")));
    }
    if cfg.engine == Engine::Dense {
        return materialized_evt(oracle, cfg);
    }
    let (p, restarts, actions, converged) = adaptive_triples(oracle, cfg, warm)?;
    let metric = oracle.metric1();
    let pairs = p
        .values
        .iter()
        .zip(p.right.iter().zip(&p.left))
        .map(|(&s, (u, v))| (svd_to_evd(s, u, v, metric), u))
        .filter(|(l, _)| *l > cfg.tau)
        .map(|(l, u)| (soft_plus(l, cfg.tau), u.clone()))
        .collect();
    Ok(Thresholded {
        tensor: HermitianFactored::from_pairs(n1, pairs)?,
        singular_values: p.values,
        restarts,
        actions,
        converged,
    })
}

/// Dense matrix of `metric` and its Cholesky factor `H = L L*`.
fn metric_factor(metric: &Metric) -> Result<Option<DMatrix<C64>>> {
    if metric.is_euclidean() {
        return Ok(None);
    }
    let n = metric.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let c = metric.apply(&e)?;
        e[j] = C64::new(0.0, 0.0);
        h.set_column(j, &nalgebra::DVector::from_vec(c));
    }
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let chol = nalgebra::Cholesky::new(h).ok_or_else(|| Error::Numerical("metric is not positive definite".into()))?;
    Ok(Some(chol.l()))
}

/// `L* R L^{-*}` where the columns of `R` are the right actions on the unit
/// vectors, i.e. `R = w H1`.
fn transformed_dense<O: ActionOracle + ?Sized>(oracle: &O) -> Result<(DMatrix<C64>, Option<DMatrix<C64>>, Option<DMatrix<C64>>)> {
    let (n1, n2) = oracle.dims();
    let l1 = metric_factor(oracle.metric1())?;
    let l2 = metric_factor(oracle.metric2())?;
    let mut r = DMatrix::zeros(n2, n1);
    let mut e = vec![C64::new(0.0, 0.0); n1];
    for j in 0..n1 {
        e[j] = C64::new(1.0, 0.0);
        let c = oracle.right(&e)?;
        e[j] = C64::new(0.0, 0.0);
        r.set_column(j, &nalgebra::DVector::from_vec(c));
    }
    let mut x = match &l2 {
        Some(l) => l.adjoint() * r,
        None => r,
    };
    if let Some(l) = &l1 {
        // x L^{-*}: solve (L^{-1} x*)* via the triangular factor.
        let xt = l.solve_lower_triangular(&x.adjoint()).ok_or_else(|| Error::Numerical("singular metric factor".into()))?;
        x = xt.adjoint();
    }
    Ok((x, l1, l2))
}

/// `L^{-*} y`.
fn back_transform(l: &Option<DMatrix<C64>>, y: CVec) -> Result<CVec> {
    match l {
        None => Ok(y),
        Some(l) => {
            let v = l
                .adjoint()
                .solve_upper_triangular(&nalgebra::DVector::from_vec(y))
                .ok_or_else(|| Error::Numerical("singular metric factor".into()))?;
            Ok(v.iter().copied().collect())
        }
    }
}

fn materialized_svt<O: ActionOracle + ?Sized>(oracle: &O, cfg: &ThresholdConfig) -> Result<Thresholded<FactoredTensor>> {
    let (n1, n2) = oracle.dims();
    let (x, l1, l2) = transformed_dense(oracle)?;
    let svd = jacobi_svd(&x);
    let mut triples = Vec::new();
    let mut values = svd.s.clone();
    for (j, &s) in svd.s.iter().enumerate() {
        if s > cfg.tau {
            let right = back_transform(&l1, svd.v.column(j).iter().copied().collect())?;
            let left = back_transform(&l2, svd.u.column(j).iter().copied().collect())?;
            triples.push((s - cfg.tau, right, left));
        }
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(Thresholded { tensor: FactoredTensor::from_triples(n1, n2, triples)?, singular_values: values, restarts: 0, actions: n1, converged: true })
}

fn materialized_evt<O: ActionOracle + ?Sized>(oracle: &O, cfg: &ThresholdConfig) -> Result<Thresholded<HermitianFactored>> {
    let (n, _) = oracle.dims();
    let (x, l1, _) = transformed_dense(oracle)?;
    let x = (&x + x.adjoint()) * C64::new(0.5, 0.0);
    let eig = x.symmetric_eigen();
    let mut pairs = Vec::new();
    let mut values: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cfg.tau {
            pairs.push((l - cfg.tau, back_transform(&l1, eig.eigenvectors.column(j).iter().copied().collect())?));
        }
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(Thresholded { tensor: HermitianFactored::from_pairs(n, pairs)?, singular_values: values, restarts: 0, actions: n, converged: true })
}
