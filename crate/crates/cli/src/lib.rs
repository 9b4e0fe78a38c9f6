//! Command implementations behind the `liftkit` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use liftkit::bench::{self, BenchResult, BenchSetting};
use liftkit::io::{self, DataHeader};
use liftkit::phase_retrieval::{
    blob_image, coverage_map, error_up_to_phase, gaussian_masks, pixel_errors, rademacher_masks, recover, ComplexImage, DomainMetric,
    MaskKind, MaskSet, PRProblem, PhaseRetrieval, Recovery,
};
use liftkit::solver::{IterationRecord, SolverConfig};
use liftkit::HermitianFactored;

/// Exit code for invalid configurations, arguments and input files.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures of the solver.
pub const EXIT_NUMERICAL: i32 = 3;
/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "LIFTKIT_THREADS";

/// An error in the command line or a configuration file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<liftkit::Error>() {
            return match e {
                liftkit::Error::Numerical(_)
                | liftkit::Error::SolverFailure(_)
                | liftkit::Error::NotConverged { .. }
                | liftkit::Error::NoSolution(_) => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_CONFIG;
        }
    }
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenerateMasks,
    GenerateData,
    Solve,
    Evaluate,
    Demo,
    BenchSvt,
}

/// A solve described as JSON. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    /// Ground-truth image, used for evaluation only.
    pub image: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub metric: DomainMetric,
    pub solver: SolverConfig,
}

/// Parses and validates a run configuration.
pub fn parse_run_config(text: &str) -> anyhow::Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).context("run configuration")?;
    cfg.solver.validate().map_err(|e| config_error(e.to_string()))?;
    if let DomainMetric::Sobolev { mu } = cfg.metric {
        if !(mu.0 > 0.0 && mu.1 >= 0.0 && mu.2 >= 0.0 && [mu.0, mu.1, mu.2].iter().all(|x| x.is_finite())) {
            return Err(config_error(format!("invalid Sobolev weights {mu:?}")));
        }
    }
    Ok(cfg)
}

pub fn read_run_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_run_config(&text).with_context(|| format!("in {}", path.display()))
}

/// Parses `HxW`.
pub fn parse_shape(s: &str) -> anyhow::Result<(usize, usize)> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| config_error(format!("shape {s:?} is not of the form HxW")))?;
    let h: usize = h.trim().parse().map_err(|_| config_error(format!("bad height in {s:?}")))?;
    let w: usize = w.trim().parse().map_err(|_| config_error(format!("bad width in {s:?}")))?;
    if h == 0 || w == 0 {
        return Err(config_error(format!("shape {s:?} has a zero side")));
    }
    Ok((h, w))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Record of a command run: configuration hash, seed and artifact checksums.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> anyhow::Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_sha256: sha256_hex(&serde_json::to_vec(&config)?),
            config,
            artifacts: Vec::new(),
            summary: Default::default(),
        })
    }

    /// Adds a written file (and its header, if present) relative to `dir`.
    pub fn add(&mut self, dir: &Path, path: &Path) -> anyhow::Result<()> {
        for p in [path.to_path_buf(), io::header_path(path)] {
            if p == path || p.exists() {
                let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
                let rel = p.strip_prefix(dir).unwrap_or(&p).display().to_string();
                self.artifacts.push(Artifact { path: rel, sha256: sha256_hex(&bytes) });
            }
        }
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> anyhow::Result<()> {
        self.summary.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Fraction and count of pixels not seen by any mask.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CoverageStats {
    pub pixels: usize,
    pub uncovered: usize,
    pub uncovered_fraction: f64,
    /// `histogram[c]` pixels are seen by exactly `c` masks.
    pub histogram: Vec<usize>,
}

pub fn coverage_stats(masks: &MaskSet) -> CoverageStats {
    let cov = coverage_map(masks);
    let mut histogram = vec![0; masks.count() + 1];
    for &c in &cov {
        histogram[c] += 1;
    }
    CoverageStats { pixels: cov.len(), uncovered: histogram[0], uncovered_fraction: histogram[0] as f64 / cov.len() as f64, histogram }
}

#[derive(Clone, Debug, Serialize)]
pub struct MaskArgs {
    pub kind: MaskKind,
    pub shape: (usize, usize),
    pub count: usize,
    pub seed: u64,
}

pub fn generate_masks(args: &MaskArgs, out: &Path) -> anyhow::Result<(PathBuf, CoverageStats)> {
    let (h, w) = args.shape;
    let masks = match args.kind {
        MaskKind::Rademacher => rademacher_masks(h, w, args.count, args.seed)?,
        MaskKind::Gaussian => gaussian_masks(h, w, args.count, args.seed)?,
        MaskKind::Custom => return Err(config_error("custom masks cannot be generated")),
    };
    ensure_dir(out)?;
    let path = out.join("masks.bin");
    io::write_masks(&path, &masks)?;
    let stats = coverage_stats(&masks);
    let mut m = Manifest::new("gen-masks", args.seed, args)?;
    m.add(out, &path)?;
    m.note("coverage", &stats)?;
    m.write(out)?;
    Ok((path, stats))
}

#[derive(Clone, Debug, Serialize)]
pub struct DataArgs {
    pub masks: PathBuf,
    /// Ground truth; a blob image is synthesized from `seed` when absent.
    pub image: Option<PathBuf>,
    /// Transform size, twice the image size when absent.
    pub transform: Option<(usize, usize)>,
    pub noise: f64,
    pub seed: u64,
}

pub fn generate_data(args: &DataArgs, out: &Path) -> anyhow::Result<PathBuf> {
    let masks = io::read_masks(&args.masks).with_context(|| format!("reading masks {}", args.masks.display()))?;
    let (h, w) = masks.shape();
    ensure_dir(out)?;
    let truth_path = out.join("truth.bin");
    let truth = match &args.image {
        Some(p) => io::read_image(p).with_context(|| format!("reading image {}", p.display()))?,
        None => blob_image(h, w, args.seed)?,
    };
    if truth.shape() != (h, w) {
        return Err(config_error(format!("image {:?} does not match masks {:?}", truth.shape(), (h, w))));
    }
    io::write_images(&truth_path, std::slice::from_ref(&truth))?;
    let (m2, m1) = args.transform.unwrap_or((2 * h, 2 * w));
    let count = masks.count();
    let op = PhaseRetrieval::new(masks, m2, m1)?;
    let clean = op.forward_real(&truth)?;
    let g = liftkit::phase_retrieval::add_noise(&clean, args.noise, args.seed)?;
    let path = out.join("data.bin");
    io::write_data(&path, &DataHeader { count, m2, m1 }, &g)?;
    let mut m = Manifest::new("gen-data", args.seed, args)?;
    m.add(out, &path)?;
    m.add(out, &truth_path)?;
    m.note("truth", "truth.bin")?;
    m.write(out)?;
    Ok(path)
}

/// Loads the problem described by `cfg` (masks, data and optional truth).
pub fn load_problem(cfg: &RunConfig) -> anyhow::Result<PRProblem> {
    let masks_path = cfg.masks.as_ref().ok_or_else(|| config_error("no masks file given"))?;
    let data_path = cfg.data.as_ref().ok_or_else(|| config_error("no data file given"))?;
    let masks = io::read_masks(masks_path).with_context(|| format!("reading masks {}", masks_path.display()))?;
    let (header, g) = io::read_data(data_path).with_context(|| format!("reading data {}", data_path.display()))?;
    if header.count != masks.count() {
        return Err(config_error(format!("data has {} blocks but there are {} masks", header.count, masks.count())));
    }
    let op = PhaseRetrieval::new(masks, header.m2, header.m1)?;
    let truth = match &cfg.image {
        Some(p) => Some(io::read_image(p).with_context(|| format!("reading image {}", p.display()))?),
        None => None,
    };
    Ok(PRProblem::new(op, cfg.metric, g, truth)?)
}

pub const CSV_HEADER: [&str; 8] = ["n", "rank", "fidelity", "sigma0", "sigma1", "sigma2", "restarts", "ms"];

/// Writes one CSV row per iteration as soon as it is produced.
pub struct IterationLog<W: Write> {
    writer: csv::Writer<W>,
    error: Option<csv::Error>,
}

impl<W: Write> IterationLog<W> {
    pub fn new(inner: W) -> anyhow::Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(CSV_HEADER)?;
        writer.flush()?;
        Ok(IterationLog { writer, error: None })
    }

    pub fn push(&mut self, r: &IterationRecord) {
        if self.error.is_some() {
            return;
        }
        let s = |i: usize| r.values.get(i).copied().unwrap_or(0.0).to_string();
        let row = [r.n.to_string(), r.rank.to_string(), r.fidelity.to_string(), s(0), s(1), s(2), r.restarts.to_string(), format!("{:.3}", r.ms)];
        let res = self.writer.write_record(&row).and_then(|_| self.writer.flush().map_err(csv::Error::from));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    pub fn finish(mut self) -> anyhow::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.writer.into_inner().map_err(|e| anyhow::anyhow!("flushing iteration log: {}", e.error()))
    }
}

/// Final factorization: eigenvalues and factors as `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FactorsFile {
    pub dim: usize,
    pub values: Vec<f64>,
    pub factors: Vec<Vec<[f64; 2]>>,
}

impl From<&HermitianFactored> for FactorsFile {
    fn from(w: &HermitianFactored) -> Self {
        FactorsFile {
            dim: w.dim(),
            values: w.values.clone(),
            factors: w.factors.iter().map(|u| u.iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }
}

pub struct SolveOutput {
    pub recovery: Recovery,
    pub image: PathBuf,
    pub log: PathBuf,
}

/// Runs a recovery and writes the image, the factors, the iteration log
/// and a manifest into `out`.
pub fn solve(cfg: &RunConfig, out: &Path) -> anyhow::Result<SolveOutput> {
    let problem = load_problem(cfg)?;
    ensure_dir(out)?;
    let log_path = out.join("iterations.csv");
    let file = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut log = IterationLog::new(std::io::BufWriter::new(file))?;
    let recovery = recover(&problem, &cfg.solver, &mut |r| log.push(r))?;
    log.finish()?.flush()?;
    let image_path = out.join("recovered.bin");
    io::write_images(&image_path, std::slice::from_ref(&recovery.image))?;
    let factors_path = out.join("factors.json");
    fs::write(&factors_path, serde_json::to_string(&FactorsFile::from(&recovery.tensor))? + "\n")?;
    let mut m = Manifest::new("solve", cfg.solver.seed, cfg)?;
    for p in [&image_path, &factors_path, &log_path] {
        m.add(out, p)?;
    }
    let o = &recovery.outcome;
    m.note("iterations", o.records.len())?;
    m.note("converged", o.converged)?;
    m.note("final_rank", recovery.tensor.rank())?;
    m.note("final_fidelity", o.records.last().map(|r| r.fidelity))?;
    m.note("tau", o.tau)?;
    m.note("sigma", o.sigma)?;
    m.note("norm_estimate", o.norm_estimate)?;
    m.note("error_up_to_phase", recovery.error)?;
    m.note("warnings", &o.warnings)?;
    m.write(out)?;
    Ok(SolveOutput { recovery, image: image_path, log: log_path })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Evaluation {
    pub relative_error: f64,
    pub uncovered_pixels: Option<usize>,
    /// `|e|/|u_ref|` restricted to pixels no mask sees.
    pub uncovered_relative_error: Option<f64>,
    /// `|e|/|u_ref|` restricted to the covered pixels.
    pub covered_relative_error: Option<f64>,
}

pub fn evaluate(recovered: &ComplexImage, reference: &ComplexImage, masks: Option<&MaskSet>) -> anyhow::Result<Evaluation> {
    let relative_error = error_up_to_phase(recovered, reference)?;
    let mut ev = Evaluation { relative_error, uncovered_pixels: None, uncovered_relative_error: None, covered_relative_error: None };
    if let Some(m) = masks {
        if m.shape() != reference.shape() {
            return Err(config_error("masks do not match the images"));
        }
        let err = pixel_errors(recovered, reference)?;
        let cov = coverage_map(m);
        let ratio = |seen: bool| {
            let (mut e, mut r) = (0.0, 0.0);
            for i in 0..cov.len() {
                if (cov[i] > 0) == seen {
                    e += err[i] * err[i];
                    r += reference.data()[i].norm_sqr();
                }
            }
            (r > 0.0).then(|| (e / r).sqrt())
        };
        ev.uncovered_pixels = Some(cov.iter().filter(|&&c| c == 0).count());
        ev.uncovered_relative_error = ratio(false);
        ev.covered_relative_error = ratio(true);
    }
    Ok(ev)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchArgs {
    pub size: usize,
    pub masks: usize,
    pub iterations: usize,
    pub seed: u64,
    pub settings: Vec<BenchSetting>,
}

pub fn bench_svt(args: &BenchArgs, mut progress: impl FnMut(&BenchResult)) -> anyhow::Result<Vec<BenchResult>> {
    if args.size == 0 || args.masks == 0 || args.iterations == 0 {
        return Err(config_error("size, mask count and iterations must be positive"));
    }
    let problem = bench::bench_problem(args.size, args.masks, args.seed)?;
    let mut out = Vec::new();
    for s in &args.settings {
        let r = bench::run_setting(&problem, s, args.iterations, args.seed)?;
        progress(&r);
        out.push(r);
    }
    Ok(out)
}

pub fn write_bench(args: &BenchArgs, results: &[BenchResult], out: &Path) -> anyhow::Result<()> {
    ensure_dir(out)?;
    let path = out.join("bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["setting", "k", "l", "reweighting", "iterations", "seconds", "average_restarts", "final_rank", "error"])?;
    for r in results {
        let s = &r.setting;
        w.write_record([
            s.label.clone(),
            s.k.map_or(String::new(), |k| k.to_string()),
            s.l.map_or(String::new(), |l| l.to_string()),
            s.reweighting.to_string(),
            r.iterations.to_string(),
            r.seconds.to_string(),
            r.average_restarts.to_string(),
            r.final_rank.to_string(),
            r.error.map_or(String::new(), |e| e.to_string()),
        ])?;
    }
    w.flush()?;
    let mut m = Manifest::new("bench-svt", args.seed, args)?;
    m.add(out, &path)?;
    m.write(out)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoArgs {
    pub size: usize,
    pub masks: usize,
    pub noise: f64,
    pub seed: u64,
    pub metric: DomainMetric,
    pub solver: SolverConfig,
}

/// Masks, data, recovery and evaluation of a synthetic image in one go.
pub fn demo(args: &DemoArgs, out: &Path) -> anyhow::Result<(SolveOutput, Evaluation)> {
    let (masks_path, _) = generate_masks(&MaskArgs { kind: MaskKind::Rademacher, shape: (args.size, args.size), count: args.masks, seed: args.seed }, out)?;
    let data_path = generate_data(&DataArgs { masks: masks_path.clone(), image: None, transform: None, noise: args.noise, seed: args.seed }, out)?;
    let cfg = RunConfig {
        mode: Some(Mode::Demo),
        image: Some(out.join("truth.bin")),
        masks: Some(masks_path),
        data: Some(data_path),
        output: Some(out.to_path_buf()),
        seed: args.seed,
        metric: args.metric,
        solver: args.solver.clone(),
    };
    let solved = solve(&cfg, out)?;
    let truth = io::read_image(&out.join("truth.bin"))?;
    let masks = io::read_masks(cfg.masks.as_ref().expect("set above"))?;
    let ev = evaluate(&solved.recovery.image, &truth, Some(&masks))?;
    Ok((solved, ev))
}

/// Sizes the global thread pool from an explicit count or the environment.
pub fn configure_threads(explicit: Option<usize>) -> anyhow::Result<()> {
    let n = match explicit {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| config_error(format!("{THREADS_ENV}={v:?} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(config_error("thread count must be positive"));
        }
        // A second initialization (tests, embedding) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
