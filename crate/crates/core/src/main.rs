use clap::{Parser, Subcommand, ValueEnum};
use fabernet::cli::{report_sweep, verify_all, ExperimentConfig, VerifyConfig};
use fabernet::corpus;
use fabernet::error::{Error, Result};
use fabernet::faber::{fmt_f64, read_expansion, write_expansion, FaberExpansion};
use fabernet::function::Differentiable;
use fabernet::index::{
    enumerate_full, enumerate_notched, enumerate_smolyak, grid_points, IndexSet,
};
use fabernet::metrics::{lp_error, w1p_error, QuadratureSpec, Scheme};
use fabernet::relunet::{read_network, write_network, ReluNetwork};
use fabernet::sampling::{build_r, recovery_error_bound, ApproxConfig, Lp};
use fabernet::Function;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "fabernet",
    about = "Sparse-grid hat-function interpolation compiled into deep ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    Notched,
    Smolyak,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate a multi-index set (and optionally its dyadic grid points).
    Grid {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long)]
        m: u32,
        #[arg(long, value_enum, default_value_t = GridKind::Notched)]
        kind: GridKind,
        /// Emit grid points as exact dyadic rationals instead of indices.
        #[arg(long)]
        points: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the sampling operator for a corpus function and save the expansion.
    Sample {
        #[arg(long)]
        func: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        p: Lp,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        dim: usize,
        /// Drop terms with coefficients below this magnitude before writing.
        #[arg(long)]
        prune_tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a corpus function into a deep ReLU network file.
    Compile {
        #[arg(long)]
        func: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        p: Lp,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        dim: usize,
        /// Build the narrow-deep chained variant instead of the wide one.
        #[arg(long)]
        narrow: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure a distance between two objects (functions, expansions, networks).
    Measure {
        /// One of func:<id>, expansion:<path>, net:<path>.
        #[arg(long)]
        lhs: String,
        #[arg(long)]
        rhs: String,
        #[arg(long)]
        p: Lp,
        /// tensor | mc
        #[arg(long, default_value = "tensor")]
        scheme: String,
        /// Nodes per axis for the tensor scheme.
        #[arg(long, default_value_t = 64)]
        n: u32,
        /// Sample count for the Monte-Carlo scheme.
        #[arg(long = "N", default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Dimension (required when a side is a corpus function).
        #[arg(long)]
        dim: Option<usize>,
        /// Smoothness used to resolve corpus ids.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Measure values (L_p) instead of the gradient seminorm.
        #[arg(long)]
        values: bool,
    },
    /// Corpus catalog operations.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Run the full bound-verification suite; exit 1 on any FAIL.
    Verify {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Accuracies for the end-to-end checks.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Run a parameter sweep and write CSV reports.
    Sweep {
        #[arg(long, default_value = "sweep-out")]
        out_dir: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "2")]
        dims: Vec<usize>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "2.0")]
        alphas: Vec<f64>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "3.0")]
        betas: Vec<f64>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "2")]
        ps: Vec<Lp>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        epsilons: Vec<f64>,
        #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "poly_tent")]
        funcs: Vec<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Print the catalog of registered test functions.
    List,
}

fn write_out(out: Option<&PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(body.as_bytes())?;
            Ok(())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn enumerate(kind: GridKind, dim: usize, beta: f64, m: u32) -> Result<IndexSet> {
    match kind {
        GridKind::Notched => enumerate_notched(dim, beta, m),
        GridKind::Smolyak => enumerate_smolyak(dim, m),
        GridKind::Full => enumerate_full(dim, m),
    }
}

enum Side {
    Func(corpus::CorpusFunction),
    Expansion(FaberExpansion),
    Net(ReluNetwork),
}

impl Side {
    fn parse(spec: &str, dim: Option<usize>, alpha: f64) -> Result<Self> {
        if let Some(id) = spec.strip_prefix("func:") {
            let d = dim.ok_or_else(|| {
                Error::invalid("--dim is required when a side is a corpus function")
            })?;
            Ok(Side::Func(corpus::resolve(id, d, alpha)?))
        } else if let Some(path) = spec.strip_prefix("expansion:") {
            let f = BufReader::new(File::open(path)?);
            Ok(Side::Expansion(read_expansion(f)?))
        } else if let Some(path) = spec.strip_prefix("net:") {
            let f = BufReader::new(File::open(path)?);
            Ok(Side::Net(read_network(f)?))
        } else {
            Err(Error::invalid(format!(
                "cannot parse side '{spec}' (expected func:<id>, expansion:<path>, or net:<path>)"
            )))
        }
    }

    fn dim(&self) -> usize {
        match self {
            Side::Func(f) => f.dim(),
            Side::Expansion(e) => e.dim(),
            Side::Net(n) => n.input_dim(),
        }
    }

    fn as_diff(&self) -> &dyn Differentiable {
        match self {
            Side::Func(f) => f,
            Side::Expansion(e) => e,
            Side::Net(n) => n,
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Grid {
            dim,
            beta,
            m,
            kind,
            points,
            out,
        } => {
            let set = enumerate(kind, dim, beta, m)?;
            let mut body = String::new();
            if points {
                let grid = grid_points(&set)?;
                for p in grid.points() {
                    let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
                    body.push_str(&coords.join(" "));
                    body.push('\n');
                }
            } else {
                for k in set.entries() {
                    body.push_str(&k.to_string());
                    body.push('\n');
                }
            }
            write_out(out.as_ref(), &body)?;
            Ok(true)
        }
        Command::Sample {
            func,
            alpha,
            beta,
            p,
            m,
            dim,
            prune_tol,
            out,
        } => {
            let cfg = ApproxConfig::new(dim, alpha, beta, p, None)?;
            let f = corpus::resolve(&func, dim, alpha)?;
            let mut r = build_r(&f, &cfg, m)?;
            if let Some(tol) = prune_tol {
                r = r.pruned(tol);
            }
            let file = BufWriter::new(File::create(&out)?);
            write_expansion(&r, file)?;
            let grid = grid_points(&enumerate_notched(dim, beta, m)?)?;
            println!(
                "terms={} grid={} bound={}",
                r.num_terms(),
                grid.len(),
                fmt_f64(recovery_error_bound(&cfg, m))
            );
            Ok(true)
        }
        Command::Compile {
            func,
            alpha,
            beta,
            p,
            eps,
            dim,
            narrow,
            out,
        } => {
            let cfg = ApproxConfig::new(dim, alpha, beta, p, Some(eps))?;
            let f = corpus::resolve(&func, dim, alpha)?;
            let (plan, terms, net) = if narrow {
                let c = fabernet::constructors::compile_narrow(&f, &cfg)?;
                (c.plan, c.expansion.num_terms(), c.net)
            } else {
                let c = fabernet::constructors::compile(&f, &cfg)?;
                (c.plan, c.expansion.num_terms(), c.net)
            };
            let stats = net.stats();
            let file = BufWriter::new(File::create(&out)?);
            write_network(&net, file)?;
            println!(
                "m={} delta={} terms={} W={} L={} Nw={} eps0={} B={}",
                plan.m,
                fmt_f64(plan.delta),
                terms,
                stats.size,
                stats.depth,
                stats.width,
                fmt_f64(plan.eps0),
                fmt_f64(plan.b),
            );
            Ok(true)
        }
        Command::Measure {
            lhs,
            rhs,
            p,
            scheme,
            n,
            samples,
            seed,
            dim,
            alpha,
            values,
        } => {
            let left = Side::parse(&lhs, dim, alpha)?;
            let right = Side::parse(&rhs, dim.or(Some(left.dim())), alpha)?;
            let sch = match scheme.as_str() {
                "tensor" => Scheme::TensorMidpoint { n },
                "mc" => Scheme::MonteCarlo { n: samples, seed },
                other => {
                    return Err(Error::invalid(format!(
                        "unknown scheme '{other}' (tensor|mc)"
                    )))
                }
            };
            let spec = QuadratureSpec { scheme: sch, p };
            let start = Instant::now();
            let meas = if values {
                lp_error(left.as_diff(), right.as_diff(), &spec)?
            } else {
                w1p_error(left.as_diff(), right.as_diff(), &spec)?
            };
            let runtime_ms = start.elapsed().as_millis();
            println!(
                "{lhs},{rhs},{p},{},{},{},{runtime_ms}",
                spec.describe(),
                fmt_f64(meas.value),
                meas.std_error.map(fmt_f64).unwrap_or_default(),
            );
            Ok(true)
        }
        Command::Corpus { action } => match action {
            CorpusAction::List => {
                println!("id,d_range,alpha_range,certification");
                for e in corpus::list() {
                    println!("{},{},{},{}", e.id, e.d_range, e.alpha_range, e.certified);
                }
                Ok(true)
            }
        },
        Command::Verify { out_dir, eps } => {
            let mut cfg = VerifyConfig {
                out_dir,
                ..VerifyConfig::default()
            };
            if let Some(eps) = eps {
                cfg.eps = eps;
            }
            let report = verify_all(&cfg)?;
            let mut stdout = std::io::stdout().lock();
            report.write_csv(&mut stdout)?;
            let ok = report.passed();
            writeln!(stdout, "# overall: {}", if ok { "PASS" } else { "FAIL" })?;
            Ok(ok)
        }
        Command::Sweep {
            out_dir,
            dims,
            alphas,
            betas,
            ps,
            epsilons,
            funcs,
            seed,
        } => {
            let cfg = ExperimentConfig {
                dims,
                alphas,
                betas,
                ps,
                epsilons,
                funcs,
                out_dir,
                seed,
            };
            let path = report_sweep(&cfg)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() {
    if let Ok(threads) = std::env::var("FABER_RELU_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => std::process::exit(0),
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
