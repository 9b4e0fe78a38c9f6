use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use liftkit::bench::{format_table, BenchSetting};
use liftkit::io;
use liftkit::phase_retrieval::{DomainMetric, MaskKind, DEFAULT_SOBOLEV_WEIGHTS};
use liftkit::solver::Fidelity;
use liftkit::thresholding::Engine;
use liftkit_cli::*;

#[derive(Parser)]
#[command(name = "liftkit", version, about = "Low-rank lifted phase retrieval")]
struct Cli {
    /// Worker threads (default: LIFTKIT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rademacher,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Sobolev,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    Exact,
    Tikhonov,
    EpsBall,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Lanczos,
    Subspace,
    Dense,
}

#[derive(clap::Args, Default)]
struct SolverArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    fidelity: Option<FidelityArg>,
    /// Tikhonov weight (implies --fidelity tikhonov).
    #[arg(long)]
    alpha: Option<f64>,
    /// Data tolerance (implies --fidelity eps-ball).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    no_reweight: bool,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Krylov dimension.
    #[arg(long)]
    k: Option<usize>,
    /// Retained Ritz vectors.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    rank_cap: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random masks and report how many pixels they leave unseen.
    GenMasks {
        #[arg(long, value_enum, default_value = "rademacher")]
        kind: KindArg,
        /// Image shape as HxW.
        #[arg(long, default_value = "16x16")]
        shape: String,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate measurements of an image (a synthetic blob by default).
    GenData {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        /// Transform shape as M2xM1; twice the image by default.
        #[arg(long)]
        transform: Option<String>,
        /// Relative noise level.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Recover an image from measurements.
    Solve {
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Ground truth for reporting the error.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compare a recovered image with a reference up to a global phase.
    Eval {
        #[arg(long)]
        recovered: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Masks for the uncovered-pixel error.
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Time the thresholding engines on a fixed problem.
    BenchSvt {
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        masks: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only the fast settings.
        #[arg(long)]
        quick: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Masks, data, recovery and evaluation of a synthetic image.
    Demo {
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        masks: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn base_config(args: &SolverArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_run_config(p)?,
        None => RunConfig::default(),
    };
    let s = &mut cfg.solver;
    if let Some(m) = args.metric {
        cfg.metric = match m {
            MetricArg::Euclidean => DomainMetric::Euclidean,
            MetricArg::Sobolev => DomainMetric::Sobolev { mu: DEFAULT_SOBOLEV_WEIGHTS },
        };
    }
    let fidelity = match (args.fidelity, args.alpha, args.epsilon) {
        (Some(FidelityArg::Exact), None, None) => Some(Fidelity::Exact),
        (Some(FidelityArg::Tikhonov) | None, Some(alpha), None) => Some(Fidelity::Tikhonov { alpha }),
        (Some(FidelityArg::EpsBall) | None, None, Some(epsilon)) => Some(Fidelity::EpsBall { epsilon }),
        (None, None, None) => None,
        (Some(FidelityArg::Tikhonov), None, None) => anyhow::bail!(ConfigError("--fidelity tikhonov needs --alpha".into())),
        (Some(FidelityArg::EpsBall), None, None) => anyhow::bail!(ConfigError("--fidelity eps-ball needs --epsilon".into())),
        _ => anyhow::bail!(ConfigError("conflicting fidelity options".into())),
    };
    if let Some(f) = fidelity {
        s.fidelity = f;
    }
    if args.no_reweight {
        s.reweight.enabled = false;
    }
    if let Some(e) = args.engine {
        s.threshold.engine = match e {
            EngineArg::Lanczos => Engine::AugmentedLanczos,
            EngineArg::Subspace => Engine::Subspace,
            EngineArg::Dense => Engine::Dense,
        };
    }
    if let Some(k) = args.k {
        s.threshold.k = k;
    }
    if let Some(l) = args.l {
        s.threshold.l = l;
    }
    if let Some(r) = args.rank_cap {
        s.threshold.rank_cap = r;
    }
    if let Some(n) = args.max_iter {
        s.max_iter = n;
    }
    if let Some(t) = args.tolerance {
        s.tolerance = t;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
        cfg.seed = seed;
    }
    // Re-validate after the overrides.
    parse_run_config(&serde_json::to_string(&cfg)?)
}

fn print_recovery(out: &SolveOutput) {
    let o = &out.recovery.outcome;
    let last = o.records.last();
    println!(
        "iterations {}  converged {}  rank {}  fidelity {:.3e}",
        o.records.len(),
        o.converged,
        out.recovery.tensor.rank(),
        last.map_or(f64::NAN, |r| r.fidelity)
    );
    if let Some(e) = out.recovery.error {
        println!("relative error up to phase {e:.4e}");
    }
    for w in &o.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::GenMasks { kind, shape, count, seed, out } => {
            let kind = match kind {
                KindArg::Rademacher => MaskKind::Rademacher,
                KindArg::Gaussian => MaskKind::Gaussian,
            };
            let (path, stats) = generate_masks(&MaskArgs { kind, shape: parse_shape(&shape)?, count, seed }, &out)?;
            println!("wrote {}", path.display());
            println!("uncovered pixels {} of {} ({:.4})", stats.uncovered, stats.pixels, stats.uncovered_fraction);
        }
        Command::GenData { masks, image, transform, noise, seed, out } => {
            let transform = transform.as_deref().map(parse_shape).transpose()?;
            let path = generate_data(&DataArgs { masks, image, transform, noise, seed }, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Solve { masks, data, truth, out, solver } => {
            let mut cfg = base_config(&solver)?;
            cfg.mode = Some(Mode::Solve);
            cfg.masks = masks.or(cfg.masks);
            cfg.data = data.or(cfg.data);
            cfg.image = truth.or(cfg.image);
            cfg.output = out.or(cfg.output);
            let dir = cfg.output.clone().ok_or_else(|| ConfigError("no output directory given".into()))?;
            let res = solve(&cfg, &dir)?;
            print_recovery(&res);
            println!("wrote {}", res.image.display());
        }
        Command::Eval { recovered, reference, masks } => {
            let u = io::read_image(&recovered).with_context(|| format!("reading {}", recovered.display()))?;
            let r = io::read_image(&reference).with_context(|| format!("reading {}", reference.display()))?;
            let m = masks.as_deref().map(io::read_masks).transpose()?;
            let ev = evaluate(&u, &r, m.as_ref())?;
            println!("{}", serde_json::to_string_pretty(&ev)?);
        }
        Command::BenchSvt { size, masks, iterations, seed, quick, out } => {
            let settings = if quick {
                vec![BenchSetting::dense(), BenchSetting::lanczos(20, 10, true), BenchSetting::lanczos(10, 5, true)]
            } else {
                BenchSetting::table()
            };
            let args = BenchArgs { size, masks, iterations, seed, settings };
            let results = bench_svt(&args, |r| eprintln!("{:<22} {:>8.2} s  {:>6.2} restarts", r.setting.label, r.seconds, r.average_restarts))?;
            print!("{}", format_table(&results));
            if let Some(dir) = out {
                write_bench(&args, &results, &dir)?;
            }
        }
        Command::Demo { size, masks, noise, out, solver } => {
            let cfg = base_config(&solver)?;
            let args = DemoArgs { size, masks, noise, seed: cfg.seed, metric: cfg.metric, solver: cfg.solver };
            let (res, ev) = demo(&args, &out)?;
            print_recovery(&res);
            println!("{}", serde_json::to_string_pretty(&ev)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
