//! Engine comparison on a fixed phase retrieval problem: wall time and
//! average restarts of the thresholding for a range of Krylov sizes.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::phase_retrieval::{blob_image, rademacher_masks, recover, DomainMetric, PRProblem, PhaseRetrieval};
use crate::solver::SolverConfig;
use crate::thresholding::Engine;

/// Image seed of the benchmark problem.
pub const BENCH_IMAGE_SEED: u64 = 1;
/// Mask seed of the benchmark problem; every pixel of the 16x16 image is
/// seen by at least one of the eight masks.
pub const BENCH_MASK_SEED: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchSetting {
    pub label: String,
    pub engine: Engine,
    /// Krylov dimension and retained Ritz vectors for the Lanczos engine.
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub reweighting: bool,
}

impl BenchSetting {
    pub fn dense() -> Self {
        BenchSetting { label: "dense".into(), engine: Engine::Dense, k: None, l: None, reweighting: false }
    }
    pub fn subspace(l: usize) -> Self {
        BenchSetting { label: format!("subspace l={l}"), engine: Engine::Subspace, k: None, l: Some(l), reweighting: false }
    }
    pub fn lanczos(k: usize, l: usize, reweighting: bool) -> Self {
        let suffix = if reweighting { " +rw" } else { "" };
        BenchSetting { label: format!("lanczos {k}/{l}{suffix}"), engine: Engine::AugmentedLanczos, k: Some(k), l: Some(l), reweighting }
    }

    /// The full table: dense, subspace, four Krylov sizes, and the
    /// smallest size with reweighting.
    pub fn table() -> Vec<Self> {
        let mut s = vec![Self::dense(), Self::subspace(5)];
        s.extend([(100, 50), (50, 25), (20, 10), (10, 5)].map(|(k, l)| Self::lanczos(k, l, false)));
        s.push(Self::lanczos(10, 5, true));
        s
    }

    /// Solver configuration for this column. The rank cap equals `l`.
    pub fn config(&self, iterations: usize, seed: u64) -> SolverConfig {
        let mut cfg = SolverConfig { max_iter: iterations, tolerance: 0.0, seed, ..Default::default() };
        cfg.reweight.enabled = self.reweighting;
        cfg.threshold.engine = self.engine;
        if let Some(l) = self.l {
            cfg.threshold.l = l;
            cfg.threshold.rank_cap = l;
        }
        if let Some(k) = self.k {
            cfg.threshold.k = k;
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub setting: BenchSetting,
    pub iterations: usize,
    pub seconds: f64,
    pub average_restarts: f64,
    pub final_rank: usize,
    pub error: Option<f64>,
}

/// `size x size` blob image, `masks` Rademacher masks, doubled transform,
/// Euclidean metric, noiseless data.
pub fn bench_problem(size: usize, masks: usize, seed: u64) -> Result<PRProblem> {
    let truth = blob_image(size, size, BENCH_IMAGE_SEED.wrapping_add(seed))?;
    let op = PhaseRetrieval::with_double_padding(rademacher_masks(size, size, masks, BENCH_MASK_SEED.wrapping_add(seed))?)?;
    PRProblem::synthetic(op, DomainMetric::Euclidean, truth, 0.0, 0)
}

/// Runs a fixed number of iterations and measures the wall time.
pub fn run_setting(problem: &PRProblem, setting: &BenchSetting, iterations: usize, seed: u64) -> Result<BenchResult> {
    let cfg = setting.config(iterations, seed);
    let mut restarts = 0usize;
    let start = Instant::now();
    let rec = recover(problem, &cfg, &mut |r| restarts += r.restarts)?;
    let seconds = start.elapsed().as_secs_f64();
    let done = rec.outcome.records.len().max(1);
    Ok(BenchResult {
        setting: setting.clone(),
        iterations: rec.outcome.records.len(),
        seconds,
        average_restarts: restarts as f64 / done as f64,
        final_rank: rec.tensor.rank(),
        error: rec.error,
    })
}

/// Table with one column per setting: Krylov size, retained vectors,
/// seconds and average restarts.
pub fn format_table(results: &[BenchResult]) -> String {
    let cell = |s: String| format!("{s:>14}");
    let mut rows = [String::from("setting          "), String::from("Lanczos k        "), String::from("iteration l      "), String::from("time (s)         "), String::from("avg restarts     ")];
    for r in results {
        let s = &r.setting;
        let dense = s.engine == Engine::Dense;
        let name = if dense {
            "dense".to_string()
        } else if s.engine == Engine::Subspace {
            "subspace".to_string()
        } else if s.reweighting {
            "reweighting".to_string()
        } else {
            "lanczos".to_string()
        };
        rows[0] += &cell(name);
        rows[1] += &cell(s.k.map_or("inf".into(), |k| k.to_string()));
        rows[2] += &cell(s.l.map_or("-".into(), |l| l.to_string()));
        rows[3] += &cell(format!("{:.2}", r.seconds));
        rows[4] += &cell(if dense { "-".into() } else { format!("{:.2}", r.average_restarts) });
    }
    rows.join("\n") + "\n"
}
