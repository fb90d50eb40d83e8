use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use critbubble::experiments::{
    bisect_threshold, constants_table, refine_study, rendered_output, run, to_json_pretty, write_atomic,
    ExperimentConfig, ExperimentKind, Predicate, RecordStore, StudyTarget, CACHE_ENV,
};

#[derive(Parser, Debug)]
#[command(name = "critbubble", version, about = "Numerical lab for weighted critical-exponent elliptic problems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Lab configuration (`key=value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; JSON or CSV depending on the command. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run record cache directory.
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sobolev, bubble and threshold constants.
    Constants {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 2.0)]
        diam: f64,
    },
    /// Truncated bubble energy expansion in ε.
    Expansion {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        p0: f64,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long)]
        eps_min: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long, default_value_t = 8)]
        points: usize,
    },
    /// Translated bubble family: E, Γ, F and the mountain-pass scale.
    Family {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0)]
        sigma_axis: usize,
        #[arg(long, default_value_t = 64)]
        scale: u32,
        /// Defaults to the largest radius meeting the continuity condition.
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long = "R0")]
        big_r0: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        theta: f64,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Minimize the Rayleigh quotient at fixed λ.
    Minimize {
        #[arg(long)]
        lambda: f64,
        #[arg(long = "grid-M")]
        grid_m: Option<usize>,
        /// Repeat on the refined grid and classify concentration.
        #[arg(long)]
        refine: bool,
    },
    /// First eigenvalue of the weighted Dirichlet operator.
    Eigen,
    /// Radial solution on the annulus at λ = 0.
    Annulus {
        #[arg(long)]
        hole: f64,
    },
    /// S_λ over an increasing λ grid.
    Curve {
        #[arg(long)]
        lambda_from: f64,
        #[arg(long)]
        lambda_to: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Pohozaev identity terms for a stored or freshly computed solution.
    Pohozaev {
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        lambda: f64,
    },
    /// Nonexistence certificate at λ.
    Certify {
        #[arg(long)]
        lambda: f64,
    },
    /// Bisect λ for the flip of a predicate.
    Bisect {
        #[arg(long)]
        lambda_lo: f64,
        #[arg(long)]
        lambda_hi: f64,
        #[arg(long, value_enum, default_value_t = PredicateArg::SlopeSign)]
        predicate: PredicateArg,
    },
    /// Rerun a solver over several grid sizes.
    Refine {
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[arg(long, value_enum, default_value_t = TargetArg::Eigen)]
        target: TargetArg,
        #[arg(long)]
        lambda: Option<f64>,
        /// Exact value, when known, for error-based orders.
        #[arg(long)]
        reference: Option<f64>,
    },
    /// Run a full experiment file (must contain `kind=`).
    Run,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PredicateArg {
    SlopeSign,
    Achieved,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Minimize,
    Eigen,
}

fn load(path: Option<&Path>, kind: ExperimentKind) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let has_kind = text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("kind"));
    let text = if has_kind { text } else { format!("{text}\nkind={}\n", kind.name()) };
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.kind = kind;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(j) = g.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("configuring worker threads")?;
    }
    let store = g.cache_dir.clone().map(RecordStore::new);
    let config = g.config.as_deref();
    let mut cfg = match &cli.command {
        Command::Constants { n, k, beta, diam } => {
            let table = constants_table(*n, *k, *beta, *diam)?;
            return emit(g.out.as_deref(), &to_json_pretty(&table)?);
        }
        Command::Expansion { n, k, beta, p0, lambda, eps_min, eps_max, points } => {
            let mut c = load(config, ExperimentKind::Expansion)?;
            (c.lab.n, c.lab.k, c.lab.beta, c.lab.p0) = (*n, *k, *beta, *p0);
            c.lab.weight()?;
            c.params.lambda = Some(*lambda);
            c.params.eps_min = *eps_min;
            c.params.eps_max = *eps_max;
            c.params.points = Some(*points);
            c
        }
        Command::Family { n, t, sigma_axis, scale, r0, big_r0, theta, k, beta } => {
            let mut c = load(config, ExperimentKind::Family)?;
            c.lab.n = *n;
            if let Some(k) = k {
                c.lab.k = *k;
            }
            if let Some(b) = beta {
                c.lab.beta = *b;
            }
            c.params.t = Some(*t);
            c.params.sigma_axis = Some(*sigma_axis);
            c.params.scale_index = Some(*scale);
            c.params.r0 = *r0;
            c.params.big_r0 = *big_r0;
            c.params.family_theta = Some(*theta);
            c
        }
        Command::Minimize { lambda, grid_m, refine } => {
            let mut c = load(config, ExperimentKind::Minimize)?;
            c.params.lambda = Some(*lambda);
            c.params.refine = Some(*refine);
            if let Some(m) = grid_m {
                c.lab.grid_m = *m;
            }
            c
        }
        Command::Eigen => load(config, ExperimentKind::Eigen)?,
        Command::Annulus { hole } => {
            let mut c = load(config, ExperimentKind::Annulus)?;
            c.lab.eps_hole = *hole;
            c
        }
        Command::Curve { lambda_from, lambda_to, steps } => {
            let mut c = load(config, ExperimentKind::Curve)?;
            c.params.lambda_from = Some(*lambda_from);
            c.params.lambda_to = Some(*lambda_to);
            c.params.steps = Some(*steps);
            c
        }
        Command::Pohozaev { solution, lambda } => {
            let mut c = load(config, ExperimentKind::Pohozaev)?;
            c.params.lambda = Some(*lambda);
            c.params.solution = solution.clone();
            c
        }
        Command::Certify { lambda } => {
            let mut c = load(config, ExperimentKind::Certify)?;
            c.params.lambda = Some(*lambda);
            c
        }
        Command::Bisect { lambda_lo, lambda_hi, predicate } => {
            let c = load(config, ExperimentKind::Expansion)?;
            let p = match predicate {
                PredicateArg::SlopeSign => Predicate::SlopeSign,
                PredicateArg::Achieved => Predicate::Achieved,
            };
            let b = bisect_threshold(&c, *lambda_lo, *lambda_hi, p)?;
            return emit(g.out.as_deref(), &to_json_pretty(&b)?);
        }
        Command::Refine { grids, target, lambda, reference } => {
            let mut c = load(config, ExperimentKind::Minimize)?;
            c.params.lambda = *lambda;
            let t = match target {
                TargetArg::Minimize => StudyTarget::Minimize,
                TargetArg::Eigen => StudyTarget::Eigen,
            };
            let table = refine_study(&c, grids, t, *reference)?;
            return emit(g.out.as_deref(), &to_json_pretty(&table)?);
        }
        Command::Run => {
            let Some(path) = config else { bail!("`run` needs --config FILE") };
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::parse(&text)?
        }
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if g.out.is_some() {
        cfg.output = g.out.clone();
    }
    let rec = run(&cfg, store.as_ref())?;
    if g.verbose {
        eprintln!("cache key {}", rec.cache_key);
        for c in &rec.checks {
            let status = if c.pass { "ok" } else { "FAILED" };
            eprintln!("check {status}: {} (expected {:e}, observed {:e})", c.name, c.expected, c.observed);
        }
    }
    if cfg.output.is_none() {
        print!("{}", rendered_output(&rec)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
