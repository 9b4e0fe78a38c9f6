//! Proximal iterations on factored tensors: primal-dual for exact,
//! Tikhonov and epsilon-ball fidelities, forward-backward splitting, and
//! the reweighting of the Hilbert spaces every few iterations.
//!
//! The data is rescaled to unit norm before iterating and the result is
//! scaled back, so the fidelity parameters `alpha` and `epsilon` are
//! measured relative to `|g|`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, CVec, C64};
use crate::lowrank::{svd_to_evd, FactoredTensor, HermitianFactored};
use crate::metric::Metric;
use crate::operators::{
    lifted_apply, lifted_apply_quadratic, operator_norm, BilinearMap, BilinearStep, HermitianOracle, Polarized,
    QuadraticMap, QuadraticStep, TensorOracle,
};
use crate::partial_svd::{augmented_restart, PartialSvd};
use crate::thresholding::{evt, shrink, svt, Engine, ThresholdConfig, Thresholded, WarmStart};

/// Safety factor applied to the estimated operator norm.
pub const NORM_SAFETY: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fidelity {
    Exact,
    Tikhonov { alpha: f64 },
    EpsBall { epsilon: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReweightConfig {
    pub enabled: bool,
    /// Relative weight of the leading direction, in `[0, 1)`.
    pub lambda: f64,
    /// Reweight every `period` iterations.
    pub period: usize,
    /// Largest number of promoted directions.
    pub max_directions: usize,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        ReweightConfig { enabled: true, lambda: 0.5, period: 10, max_directions: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSettings {
    pub l: usize,
    pub k: usize,
    pub delta: f64,
    pub engine: Engine,
    pub rank_cap: usize,
    pub max_restarts: usize,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        ThresholdSettings { l: 5, k: 10, delta: 1e-10, engine: Engine::AugmentedLanczos, rank_cap: 5, max_restarts: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Primal step; derived from the operator norm when absent.
    pub tau: Option<f64>,
    /// Dual step; derived from the operator norm when absent.
    pub sigma: Option<f64>,
    pub theta: f64,
    pub fidelity: Fidelity,
    /// Weight of the nuclear norm for the exact and epsilon-ball
    /// fidelities (0 means 1). Tikhonov carries its own weight.
    pub alpha_reg: f64,
    pub reweight: ReweightConfig,
    pub threshold: ThresholdSettings,
    pub max_iter: usize,
    /// Stop when `|B(w) - g| <= tolerance |g|`.
    pub tolerance: f64,
    pub seed: u64,
    /// Reject step sizes violating `tau sigma |B|^2 < 1`.
    pub validate_steps: bool,
    pub norm_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: None,
            sigma: None,
            theta: 1.0,
            fidelity: Fidelity::Exact,
            alpha_reg: 0.0,
            reweight: ReweightConfig::default(),
            threshold: ThresholdSettings::default(),
            max_iter: 1000,
            tolerance: 1e-10,
            seed: 0,
            validate_steps: false,
            norm_iterations: 30,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (name, v) in [("tau", self.tau), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        match self.fidelity {
            Fidelity::Tikhonov { alpha } if !(alpha > 0.0 && alpha.is_finite()) => return bad(format!("alpha must be positive, got {alpha}")),
            Fidelity::EpsBall { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                return bad(format!("epsilon must be positive, got {epsilon}"))
            }
            _ => {}
        }
        if !(self.alpha_reg >= 0.0 && self.alpha_reg.is_finite()) {
            return bad(format!("alpha_reg must be nonnegative, got {}", self.alpha_reg));
        }
        let r = &self.reweight;
        if r.enabled {
            // lambda = 1 would make the reweighted metric singular.
            if !(0.0..1.0).contains(&r.lambda) {
                return bad(format!("reweighting lambda must lie in [0, 1), got {}", r.lambda));
            }
            if r.period == 0 || r.max_directions == 0 {
                return bad("reweighting period and direction count must be positive".into());
            }
        }
        let t = &self.threshold;
        if t.l == 0 || t.rank_cap == 0 || !(t.delta > 0.0) {
            return bad("threshold settings need l > 0, rank_cap > 0, delta > 0".into());
        }
        if t.engine == Engine::AugmentedLanczos && t.k <= t.l {
            return bad(format!("need k > l, got l = {}, k = {}", t.l, t.k));
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be nonnegative".into());
        }
        if self.norm_iterations == 0 {
            return bad("norm_iterations must be positive".into());
        }
        Ok(())
    }

    /// Weight multiplying the threshold.
    pub fn regularization_weight(&self) -> f64 {
        match self.fidelity {
            Fidelity::Tikhonov { alpha } => alpha,
            _ if self.alpha_reg > 0.0 => self.alpha_reg,
            _ => 1.0,
        }
    }

    fn threshold_config(&self, tau: f64, n: usize) -> ThresholdConfig {
        let t = &self.threshold;
        ThresholdConfig {
            tau,
            l: t.l.min(t.rank_cap),
            k: t.k,
            delta: t.delta,
            engine: t.engine,
            rank_cap: t.rank_cap,
            max_iterations: t.max_restarts,
            // The rank cap makes early iterations inexact by design.
            accept_unconverged: true,
            seed: self.seed.wrapping_add(n as u64),
        }
    }
}

/// A lifted problem: forward map, metrics, and the proximal step.
pub trait LiftedProblem {
    type Tensor: Clone + std::fmt::Debug;
    type Metrics: Clone;

    fn base_metrics(&self) -> Self::Metrics;
    fn data_metric(&self) -> &Metric;
    fn data_len(&self) -> usize;
    fn zero(&self) -> Self::Tensor;
    fn lift(&self, w: &Self::Tensor) -> Result<CVec>;
    /// Thresholding of `w - step * B*(y)` in `metrics`; `ky` is `K y`.
    fn prox(&self, metrics: &Self::Metrics, w: &Self::Tensor, step: f64, ky: &[C64], cfg: &ThresholdConfig) -> Result<Thresholded<Self::Tensor>>;
    /// Leading triples of `w` in the base metrics.
    fn base_spectrum(&self, w: &Self::Tensor, count: usize, cfg: &ThresholdConfig) -> Result<PartialSvd>;
    /// Metrics promoting the given leading directions.
    fn promote(&self, spectrum: &PartialSvd, lambda: &[f64]) -> Result<Self::Metrics>;
    /// Estimate of the bilinear norm `|B|` in the base metrics.
    fn operator_norm(&self, iters: usize, seed: u64) -> Result<f64>;
    /// The same tensor decomposed in the base metrics.
    fn rebase(&self, w: &Self::Tensor, cfg: &ThresholdConfig) -> Result<Self::Tensor>;
    fn values(w: &Self::Tensor) -> &[f64];
    fn rank(w: &Self::Tensor) -> usize {
        Self::values(w).len()
    }
    fn scaled(w: &Self::Tensor, c: f64) -> Self::Tensor;
}

/// Bilinear problem `B(u, v) = g`.
pub struct BilinearProblem<'a, B: BilinearMap + ?Sized> {
    pub map: &'a B,
    pub h1: Metric,
    pub h2: Metric,
    pub k: Metric,
}

impl<'a, B: BilinearMap + ?Sized> BilinearProblem<'a, B> {
    pub fn euclidean(map: &'a B) -> Self {
        let (n1, n2) = map.domain_dims();
        BilinearProblem { map, h1: Metric::euclidean(n1), h2: Metric::euclidean(n2), k: Metric::euclidean(map.data_len()) }
    }
}

impl<B: BilinearMap + ?Sized> LiftedProblem for BilinearProblem<'_, B> {
    type Tensor = FactoredTensor;
    type Metrics = (Metric, Metric);

    fn base_metrics(&self) -> Self::Metrics {
        (self.h1.clone(), self.h2.clone())
    }
    fn data_metric(&self) -> &Metric {
        &self.k
    }
    fn data_len(&self) -> usize {
        self.map.data_len()
    }
    fn zero(&self) -> FactoredTensor {
        let (n1, n2) = self.map.domain_dims();
        FactoredTensor::zero(n1, n2)
    }
    fn lift(&self, w: &FactoredTensor) -> Result<CVec> {
        lifted_apply(self.map, w)
    }
    fn prox(&self, m: &Self::Metrics, w: &FactoredTensor, step: f64, ky: &[C64], cfg: &ThresholdConfig) -> Result<Thresholded<FactoredTensor>> {
        let oracle = BilinearStep { map: self.map, w, step, ky, h1: &m.0, h2: &m.1 };
        svt(&oracle, cfg, &WarmStart::from_factored(w))
    }
    fn base_spectrum(&self, w: &FactoredTensor, count: usize, cfg: &ThresholdConfig) -> Result<PartialSvd> {
        let oracle = TensorOracle { w, h1: &self.h1, h2: &self.h2 };
        leading_of_rank(&oracle, w.rank(), count, cfg, w.warm_start())
    }
    fn promote(&self, s: &PartialSvd, lambda: &[f64]) -> Result<Self::Metrics> {
        let n = lambda.len();
        Ok((Metric::reweighted(&self.h1, &s.right[..n], lambda)?, Metric::reweighted(&self.h2, &s.left[..n], lambda)?))
    }
    fn operator_norm(&self, iters: usize, seed: u64) -> Result<f64> {
        Ok(operator_norm(self.map, &self.h1, &self.h2, &self.k, iters, seed)?.value)
    }
    fn rebase(&self, w: &FactoredTensor, cfg: &ThresholdConfig) -> Result<FactoredTensor> {
        if w.is_empty() {
            return Ok(w.clone());
        }
        let s = self.base_spectrum(w, w.rank(), cfg)?;
        let (n1, n2) = w.dims();
        FactoredTensor::from_triples(n1, n2, s.values.into_iter().zip(s.right).zip(s.left).map(|((v, u), f)| (v, u, f)).collect())
    }
    fn values(w: &FactoredTensor) -> &[f64] {
        &w.values
    }
    fn scaled(w: &FactoredTensor, c: f64) -> FactoredTensor {
        let mut out = w.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Quadratic problem `Q(u) = g` lifted to Hermitian tensors.
pub struct QuadraticProblem<'a, Q: QuadraticMap + ?Sized> {
    pub map: &'a Q,
    pub h: Metric,
    pub k: Metric,
}

impl<'a, Q: QuadraticMap + ?Sized> QuadraticProblem<'a, Q> {
    pub fn new(map: &'a Q, h: Metric) -> Self {
        let k = Metric::euclidean(map.data_len());
        QuadraticProblem { map, h, k }
    }
}

impl<Q: QuadraticMap + ?Sized> LiftedProblem for QuadraticProblem<'_, Q> {
    type Tensor = HermitianFactored;
    type Metrics = Metric;

    fn base_metrics(&self) -> Metric {
        self.h.clone()
    }
    fn data_metric(&self) -> &Metric {
        &self.k
    }
    fn data_len(&self) -> usize {
        self.map.data_len()
    }
    fn zero(&self) -> HermitianFactored {
        HermitianFactored::zero(self.map.dim())
    }
    fn lift(&self, w: &HermitianFactored) -> Result<CVec> {
        lifted_apply_quadratic(self.map, w)
    }
    fn prox(&self, m: &Metric, w: &HermitianFactored, step: f64, ky: &[C64], cfg: &ThresholdConfig) -> Result<Thresholded<HermitianFactored>> {
        let oracle = QuadraticStep { map: self.map, w, step, ky, h: m };
        evt(&oracle, cfg, &WarmStart::from_hermitian(w))
    }
    fn base_spectrum(&self, w: &HermitianFactored, count: usize, cfg: &ThresholdConfig) -> Result<PartialSvd> {
        let oracle = HermitianOracle { w, h: &self.h };
        leading_of_rank(&oracle, w.rank(), count, cfg, w.warm_start())
    }
    fn promote(&self, s: &PartialSvd, lambda: &[f64]) -> Result<Metric> {
        Metric::reweighted(&self.h, &s.right[..lambda.len()], lambda)
    }
    fn operator_norm(&self, iters: usize, seed: u64) -> Result<f64> {
        Ok(operator_norm(&Polarized(self.map), &self.h, &self.h, &self.k, iters, seed)?.value)
    }
    fn rebase(&self, w: &HermitianFactored, cfg: &ThresholdConfig) -> Result<HermitianFactored> {
        if w.is_empty() {
            return Ok(w.clone());
        }
        let s = self.base_spectrum(w, w.rank(), cfg)?;
        let pairs = s.values.iter().zip(&s.right).zip(&s.left).map(|((&v, u), f)| (svd_to_evd(v, u, f, &self.h), u.clone())).collect();
        HermitianFactored::from_pairs(w.dim(), pairs)
    }
    fn values(w: &HermitianFactored) -> &[f64] {
        &w.values
    }
    fn scaled(w: &HermitianFactored, c: f64) -> HermitianFactored {
        let mut out = w.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Leading `count` triples of a tensor of known rank `r`.
fn leading_of_rank<O: crate::partial_svd::ActionOracle>(
    oracle: &O,
    r: usize,
    count: usize,
    cfg: &ThresholdConfig,
    warm: Option<CVec>,
) -> Result<PartialSvd> {
    let (n1, n2) = oracle.dims();
    let nmin = n1.min(n2);
    let l = count.min(r).max(1).min(nmin);
    let k = (r.max(l) + 1).min(nmin).min(crate::partial_svd::MAX_KRYLOV_DIM);
    let l = l.min(k);
    augmented_restart(oracle, l, k, cfg.delta, cfg.max_iterations, warm.as_deref(), cfg.seed)
}

/// Per-iteration log entry.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    pub rank: usize,
    /// `|B(w) - g|_K / |g|_K`.
    pub fidelity: f64,
    pub values: Vec<f64>,
    pub restarts: usize,
    pub actions: usize,
    pub reweighted: bool,
    pub ms: f64,
}

/// Iterate of the primal-dual method, in normalized data units.
#[derive(Clone, Debug)]
pub struct SolverState<P: LiftedProblem> {
    pub w: P::Tensor,
    pub w_prev: P::Tensor,
    pub y: CVec,
    pub metrics: P::Metrics,
    pub n: usize,
    lifted: CVec,
    lifted_prev: CVec,
}

impl<P: LiftedProblem> SolverState<P> {
    pub fn new(problem: &P) -> Self {
        let zero = vec![C64::new(0.0, 0.0); problem.data_len()];
        SolverState {
            w: problem.zero(),
            w_prev: problem.zero(),
            y: zero.clone(),
            metrics: problem.base_metrics(),
            n: 0,
            lifted: zero.clone(),
            lifted_prev: zero,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverOutcome<T> {
    /// Solution in the original data scale, decomposed in the base
    /// metrics. Iteration records report values in the metric in force.
    pub w: T,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub tau: f64,
    pub sigma: f64,
    pub norm_estimate: f64,
    /// `|g|_K`; the iteration ran on `g / data_scale`.
    pub data_scale: f64,
    pub warnings: Vec<String>,
}

/// `y + sigma ((1 + theta) B(w_n) - theta B(w_{n-1}) - g)` followed by the
/// fidelity's dual resolvent.
pub fn dual_step(
    y: &[C64],
    lifted: &[C64],
    lifted_prev: &[C64],
    g: &[C64],
    sigma: f64,
    theta: f64,
    fidelity: Fidelity,
    k: &Metric,
) -> Result<CVec> {
    check_len("lifted image", lifted.len(), y.len())?;
    check_len("previous lifted image", lifted_prev.len(), y.len())?;
    check_len("data", g.len(), y.len())?;
    let mut z = y.to_vec();
    for i in 0..z.len() {
        z[i] += (lifted[i] * (1.0 + theta) - lifted_prev[i] * theta - g[i]) * sigma;
    }
    Ok(match fidelity {
        Fidelity::Exact => z,
        Fidelity::Tikhonov { .. } => {
            z.iter_mut().for_each(|v| *v /= 1.0 + sigma);
            z
        }
        Fidelity::EpsBall { epsilon } => shrink(&z, sigma * epsilon, k),
    })
}

/// Thresholding step `S(w - tau B*(y))` with the threshold `tau * weight`.
pub fn primal_step<P: LiftedProblem>(
    problem: &P,
    state: &SolverState<P>,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<Thresholded<P::Tensor>> {
    let ky = problem.data_metric().apply(&state.y)?;
    let tcfg = cfg.threshold_config(tau * cfg.regularization_weight(), state.n);
    problem.prox(&state.metrics, &state.w, tau, &ky, &tcfg)
}

/// New metrics promoting the leading base-metric directions of `w`:
/// `lambda_k = lambda s_k / s_0`. An empty `w` clears all promotions.
pub fn reweight_step<P: LiftedProblem>(problem: &P, w: &P::Tensor, cfg: &SolverConfig) -> Result<P::Metrics> {
    if P::rank(w) == 0 {
        return Ok(problem.base_metrics());
    }
    let r = &cfg.reweight;
    let tcfg = ThresholdConfig { accept_unconverged: false, ..cfg.threshold_config(0.0, 0) };
    let spectrum = problem.base_spectrum(w, r.max_directions, &tcfg)?;
    if !spectrum.all_converged {
        return Err(Error::NotConverged { message: "base-metric decomposition for reweighting".into(), partial: Box::new(spectrum) });
    }
    let count = spectrum.values.len().min(r.max_directions);
    if count == 0 {
        return Ok(problem.base_metrics());
    }
    let s0 = spectrum.values[0];
    let lambda: Vec<f64> = spectrum.values[..count].iter().map(|s| r.lambda * s / s0).collect();
    problem.promote(&spectrum, &lambda)
}

/// Step sizes from the config or from the estimated operator norm, valid
/// for every metric the reweighting can produce.
pub fn step_sizes<P: LiftedProblem>(problem: &P, cfg: &SolverConfig) -> Result<(f64, f64, f64)> {
    let norm = problem.operator_norm(cfg.norm_iterations, cfg.seed)?;
    // Promoting directions with weight lambda shrinks tensor norms by at
    // most 1 - lambda, so |B| in any reweighted space is below this bound.
    let bound = NORM_SAFETY * norm / reweight_shrink(cfg);
    let default = if bound > 0.0 { 0.99 / bound } else { 1.0 };
    let tau = cfg.tau.unwrap_or(default);
    let sigma = cfg.sigma.unwrap_or(default);
    if cfg.validate_steps && tau * sigma * bound * bound >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "step sizes violate tau sigma |B|^2 < 1: tau = {tau}, sigma = {sigma}, |B| <= {bound}"
        )));
    }
    Ok((tau, sigma, norm))
}

fn reweight_shrink(cfg: &SolverConfig) -> f64 {
    if cfg.reweight.enabled {
        1.0 - cfg.reweight.lambda
    } else {
        1.0
    }
}

fn normalized_data(g: &[C64], k: &Metric) -> Result<(CVec, f64)> {
    check_len("data", g.len(), k.dim())?;
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("data contains non-finite values".into()));
    }
    let scale = k.norm(g);
    if scale == 0.0 {
        return Ok((g.to_vec(), 0.0));
    }
    Ok((g.iter().map(|z| z / scale).collect(), scale))
}

fn check_finite(v: &[C64], what: &str, n: usize) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} at iteration {n}")))
    }
}

fn residual_norm(lifted: &[C64], g: &[C64], k: &Metric) -> f64 {
    let mut r = lifted.to_vec();
    axpy(C64::new(-1.0, 0.0), g, &mut r);
    k.norm(&r)
}

/// Tensor-free primal-dual iteration from the zero start, with optional
/// reweighting. Each record is passed to `sink` as soon as it exists.
pub fn run_primal_dual<P: LiftedProblem>(
    problem: &P,
    g: &[C64],
    cfg: &SolverConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverOutcome<P::Tensor>> {
    cfg.validate()?;
    let k = problem.data_metric();
    let (g, scale) = normalized_data(g, k)?;
    let (tau, sigma, norm) = step_sizes(problem, cfg)?;
    let mut state = SolverState::new(problem);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = scale == 0.0;
    while !converged && state.n < cfg.max_iter {
        let start = Instant::now();
        let n = state.n;
        state.y = dual_step(&state.y, &state.lifted, &state.lifted_prev, &g, sigma, cfg.theta, cfg.fidelity, k)?;
        check_finite(&state.y, "dual variable", n)?;
        let step = primal_step(problem, &state, tau, cfg).map_err(|e| with_context(e, n))?;
        let lifted = problem.lift(&step.tensor)?;
        check_finite(&lifted, "lifted image", n)?;
        state.w_prev = std::mem::replace(&mut state.w, step.tensor);
        state.lifted_prev = std::mem::replace(&mut state.lifted, lifted);
        let mut reweighted = false;
        if cfg.reweight.enabled && (n + 1) % cfg.reweight.period == 0 {
            match reweight_step(problem, &state.w, cfg) {
                Ok(m) => {
                    state.metrics = m;
                    reweighted = true;
                }
                Err(e) => warnings.push(format!("iteration {n}: reweighting skipped: {e}")),
            }
        }
        let fidelity = residual_norm(&state.lifted, &g, k);
        let record = IterationRecord {
            n,
            rank: P::rank(&state.w),
            fidelity,
            values: P::values(&state.w).to_vec(),
            restarts: step.restarts,
            actions: step.actions,
            reweighted,
            ms: start.elapsed().as_secs_f64() * 1e3,
        };
        sink(&record);
        records.push(record);
        state.n += 1;
        converged = fidelity <= cfg.tolerance;
    }
    let w = finish(problem, &state, cfg, &mut warnings)?;
    Ok(SolverOutcome {
        w: P::scaled(&w, if scale > 0.0 { scale } else { 1.0 }),
        records,
        converged,
        tau,
        sigma,
        norm_estimate: norm,
        data_scale: scale,
        warnings,
    })
}

/// Forward-backward splitting `w <- S(w - tau B*(B(w) - g))` for the
/// Tikhonov functional. The default step is `0.99 / |B|^2`.
pub fn run_forward_backward<P: LiftedProblem>(
    problem: &P,
    g: &[C64],
    cfg: &SolverConfig,
    sink: &mut dyn FnMut(&IterationRecord),
) -> Result<SolverOutcome<P::Tensor>> {
    cfg.validate()?;
    if !matches!(cfg.fidelity, Fidelity::Tikhonov { .. }) {
        return Err(Error::InvalidParameter("forward-backward splitting needs the Tikhonov fidelity".into()));
    }
    let k = problem.data_metric();
    let (g, scale) = normalized_data(g, k)?;
    let norm = problem.operator_norm(cfg.norm_iterations, cfg.seed)?;
    let bound = NORM_SAFETY * norm / reweight_shrink(cfg);
    let tau = cfg.tau.unwrap_or(if bound > 0.0 { 0.99 / (bound * bound) } else { 1.0 });
    if cfg.validate_steps && tau * bound * bound >= 2.0 {
        return Err(Error::InvalidParameter(format!("step {tau} violates tau |B|^2 < 2 with |B| <= {bound}")));
    }
    let mut state = SolverState::new(problem);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = scale == 0.0;
    while !converged && state.n < cfg.max_iter {
        let start = Instant::now();
        let n = state.n;
        // The dual slot holds the residual B(w) - g.
        state.y = state.lifted.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = primal_step(problem, &state, tau, cfg).map_err(|e| with_context(e, n))?;
        let lifted = problem.lift(&step.tensor)?;
        check_finite(&lifted, "lifted image", n)?;
        state.w_prev = std::mem::replace(&mut state.w, step.tensor);
        state.lifted_prev = std::mem::replace(&mut state.lifted, lifted);
        let mut reweighted = false;
        if cfg.reweight.enabled && (n + 1) % cfg.reweight.period == 0 {
            match reweight_step(problem, &state.w, cfg) {
                Ok(m) => {
                    state.metrics = m;
                    reweighted = true;
                }
                Err(e) => warnings.push(format!("iteration {n}: reweighting skipped: {e}")),
            }
        }
        let fidelity = residual_norm(&state.lifted, &g, k);
        let record = IterationRecord {
            n,
            rank: P::rank(&state.w),
            fidelity,
            values: P::values(&state.w).to_vec(),
            restarts: step.restarts,
            actions: step.actions,
            reweighted,
            ms: start.elapsed().as_secs_f64() * 1e3,
        };
        sink(&record);
        records.push(record);
        state.n += 1;
        converged = fidelity <= cfg.tolerance;
    }
    let w = finish(problem, &state, cfg, &mut warnings)?;
    Ok(SolverOutcome {
        w: P::scaled(&w, if scale > 0.0 { scale } else { 1.0 }),
        records,
        converged,
        tau,
        sigma: 0.0,
        norm_estimate: norm,
        data_scale: scale,
        warnings,
    })
}

/// Final iterate in the base metrics; on failure the reweighted
/// decomposition is returned with a warning.
fn finish<P: LiftedProblem>(problem: &P, state: &SolverState<P>, cfg: &SolverConfig, warnings: &mut Vec<String>) -> Result<P::Tensor> {
    if !cfg.reweight.enabled {
        return Ok(state.w.clone());
    }
    let tcfg = ThresholdConfig { accept_unconverged: false, ..cfg.threshold_config(0.0, state.n) };
    match problem.rebase(&state.w, &tcfg) {
        Ok(w) => Ok(w),
        Err(e) => {
            warnings.push(format!("final base-metric decomposition failed: {e}"));
            Ok(state.w.clone())
        }
    }
}

fn with_context(e: Error, n: usize) -> Error {
    match e {
        Error::NotConverged { message, partial } => Error::NotConverged { message: format!("iteration {n}: {message}"), partial },
        Error::Numerical(m) => Error::Numerical(format!("iteration {n}: {m}")),
        Error::SolverFailure(m) => Error::SolverFailure(format!("iteration {n}: {m}")),
        other => other,
    }
}
