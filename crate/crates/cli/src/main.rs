//! `lorentz` — command-line laboratory for the planar periodic Lorentz gas
//! with infinite horizon.
//!
//! Subcommands cover the billiard table and its corridors, orbit traces,
//! Lyapunov estimation, invariance tests of the collision measure, the cell
//! structure near supersingular points, the two countable-state Markov
//! chains over cell indices, shadowing of symbol words by real orbits, a
//! bundled plot-ready report, and bit-exact re-execution of recorded runs.
//!
//! Every run writes `<out>/<command>/<timestamp>/` with a `manifest.json`
//! recording the resolved parameters and a SHA-256 digest per data file.
//! Exit codes: 0 success, 1 domain/construction/runtime failure, 2 argument
//! errors.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use commands::{CellsCmd, ChainMeasureCmd};
use config::Cfg;
use output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// A library-level domain, construction, or numerical failure (exit 1).
    Core(lorentz_core::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
    /// A re-executed manifest failed to reproduce its outputs (exit 1).
    Reproduce(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Json(e) => write!(f, "json error: {e}"),
            CliError::Reproduce(m) => write!(f, "{m}"),
        }
    }
}

impl From<lorentz_core::Error> for CliError {
    fn from(e: lorentz_core::Error) -> Self {
        CliError::Core(e)
    }
}
impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Json(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Global flags, also accepted after any subcommand. Each has a JSON config
/// counterpart under the same (underscored) key; explicit flags win.
#[derive(Args, Debug, Clone)]
pub struct Globals {
    /// Disc radius, 0 < r < 1/2.
    #[arg(long, global = true)]
    r: Option<f64>,
    /// Root seed; every random stream in a run derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of per-row data files (structured reports are always JSON).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Flight-length threshold beyond which a trajectory counts as escaped.
    #[arg(long = "tau-max", global = true)]
    tau_max: Option<f64>,
    /// Worker threads (0 = library default). Outputs never depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file with the same keys as the flags; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Parser, Debug)]
#[command(
    name = "lorentz",
    version,
    about = "Numerical laboratory for the infinite-horizon periodic Lorentz gas"
)]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the table: corridor inventory and grazing anchor points.
    Table {
        /// Largest |direction| component enumerated for corridors.
        #[arg(long)]
        cutoff: Option<u32>,
    },
    /// Trace one orbit collision by collision.
    Orbit {
        /// Number of collisions to trace.
        #[arg(long)]
        steps: Option<u64>,
        /// Starting arclength (requires --phi0; default: a seeded draw).
        #[arg(long)]
        s0: Option<f64>,
        /// Starting outgoing angle in (-pi/2, pi/2).
        #[arg(long)]
        phi0: Option<f64>,
    },
    /// Estimate the positive Lyapunov exponent along a random orbit.
    Lyapunov {
        /// Number of collisions averaged.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Compare test-function moments before and after one map step.
    Invariance {
        /// Number of phase points sampled from the collision measure.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Probe the cell structure near a supersingular point.
    Cells {
        #[command(subcommand)]
        action: CellsCmd,
    },
    /// Build and interrogate the countable-state Markov chains.
    Chain {
        #[command(subcommand)]
        measure: ChainMeasureCmd,
    },
    /// Locate orbit segments realizing symbol words.
    Shadow {
        /// Number of random words when none are given explicitly.
        #[arg(long)]
        count: Option<usize>,
        /// Length of random words.
        #[arg(long)]
        len: Option<usize>,
        /// Smallest random symbol.
        #[arg(long)]
        sym_lo: Option<u64>,
        /// Largest random symbol.
        #[arg(long)]
        sym_hi: Option<u64>,
        /// Landing tolerance of the per-leg solves.
        #[arg(long)]
        tol: Option<f64>,
        /// Tie-break position inside the terminal band, in [0, 1].
        #[arg(long)]
        tie: Option<f64>,
        /// Anchor index the words are located at.
        #[arg(long)]
        anchor: Option<usize>,
        /// Explicit word, symbols separated by ';' (repeatable).
        #[arg(long = "word")]
        words: Vec<String>,
    },
    /// Bundle the standard analyses into one plot-ready dataset.
    Report {
        /// Shrink every section to a fast smoke-test size.
        #[arg(long)]
        quick: bool,
    },
    /// Re-execute a recorded run and verify bit-identical outputs.
    Rerun {
        /// Path to the manifest.json of the run to reproduce.
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => {
                    eprintln!("run `lorentz --help` for usage");
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = Cfg::load(cli.globals.config.as_deref())?;
    let g = resolve_globals(&cli.globals, &cfg)?;
    if g.threads > 0 {
        // The pool is process-global; results are thread-count independent
        // by construction (fixed-chunk ordered reductions everywhere).
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {} threads: {e}", g.threads)))?;
    }

    if let Command::Rerun { manifest } = &cli.command {
        let report = commands::rerun(manifest, &g)?;
        println!("{report}");
        return Ok(());
    }

    let resolved = commands::resolve(&cli.command, &g, &cfg)?;
    let name = resolved.name();
    let mut run_dir = output::RunDir::create(&g.out, &name)?;
    let summary = commands::execute(&resolved, &mut run_dir)?;
    let dir = run_dir.dir.clone();
    let (manifest_path, _) = run_dir.finish(&name, g.threads, resolved.params_json()?)?;
    println!("{summary}");
    println!(
        "run recorded at {} ({} data files + manifest)",
        dir.display(),
        output::read_manifest(&manifest_path)?.outputs.len()
    );
    Ok(())
}

/// Globals after merging flags, config file, and defaults.
#[derive(Debug, Clone)]
pub struct ResolvedGlobals {
    pub r: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub tau_max: f64,
    pub threads: usize,
}

fn resolve_globals(g: &Globals, cfg: &Cfg) -> CliResult<ResolvedGlobals> {
    let r = g.r.or(cfg.f64("r")?).unwrap_or(0.25);
    let seed = g.seed.or(cfg.u64("seed")?).unwrap_or(7);
    let out = g
        .out
        .clone()
        .or(cfg.string("out")?.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let format = match (&g.format, cfg.string("format")?) {
        (Some(f), _) => *f,
        (None, Some(s)) => match s.as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            other => {
                return Err(CliError::Usage(format!(
                    "config key `format` must be \"csv\" or \"json\", got \"{other}\""
                )))
            }
        },
        (None, None) => Format::Csv,
    };
    let tau_max = g
        .tau_max
        .or(cfg.f64("tau_max")?)
        .unwrap_or(lorentz_core::geometry::TAU_MAX);
    if !(tau_max > 0.0) || !tau_max.is_finite() {
        return Err(CliError::Usage(format!(
            "--tau-max must be a positive finite flight length, got {tau_max}"
        )));
    }
    let threads = g.threads.or(cfg.usize("threads")?).unwrap_or(0);
    Ok(ResolvedGlobals {
        r,
        seed,
        out,
        format,
        tau_max,
        threads,
    })
}
