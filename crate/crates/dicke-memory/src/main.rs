//! Thin command line front end. All substance lives in the library; this
//! file parses flags, formats output, and maps errors to exit codes:
//! 0 success, 2 config/usage, 3 capacity, 4 integration.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use dicke_memory::dynamics::IntegratorConfig;
use dicke_memory::harness::{
    canonical_hash, catalog, load_config, measure_state, regime_name, resolve, run_experiment,
    RunOptions,
};
use dicke_memory::linalg::C64;
use dicke_memory::memory::{default_window, MemoryOptions};
use dicke_memory::model::{HalfInt, InitialState, SystemSpec};
use dicke_memory::{Error, Result};

/// println! that treats a closed stdout pipe as normal termination.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            eprintln!("stdout: {e}");
            std::process::exit(2);
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "dicke-memory",
    version,
    about = "Memory effects and superradiance of atoms in a lossy cavity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file or a bare catalog id;
    /// writes CSV files plus a manifest under a content-addressed directory
    /// and is a no-op when that directory is already populated.
    Run {
        /// Config file path, or an id from `list` for its defaults.
        config: String,
        /// Result root; overrides the DICKE_MEMORY_RESULTS variable and the
        /// config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute even when cached results exist.
        #[arg(long)]
        force: bool,
        /// Worker threads (0 = all logical cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Evaluate one state and print a single-line JSON summary of its
    /// memory and radiation characteristics.
    Measure {
        /// ground | excited | dicke:J,M | dephased:J,M,LAMBDA |
        /// mixture:P0,P1,... | factorized:RHO_EE,RHO_EG[,PHASE]
        #[arg(long, default_value = "excited")]
        state: String,
        /// Atom count; defaults to 2J for dicke/dephased states, else 2.
        #[arg(long)]
        n_atoms: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        gamma_over_g: f64,
        /// Memory-grid window in units of 1/g (default picked per regime).
        #[arg(long)]
        window: Option<f64>,
        /// Points per grid axis.
        #[arg(long, default_value_t = 41)]
        grid: usize,
        /// Skip the golden-section refinement of the grid maximum.
        #[arg(long)]
        no_refine: bool,
    },
    /// List the experiment catalog.
    List,
    /// Parse, validate, and hash a config without running anything.
    Validate {
        /// Config file path or bare catalog id.
        config: String,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) | Error::Io(_) => 2,
        Error::Capacity(_) => 3,
        Error::Integration(_) => 4,
    }
}

fn parse_floats(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("{what}: cannot parse '{tok}' as a number")))
        })
        .collect()
}

/// Parses a state flag and settles the atom count: dicke/dephased pin it
/// at 2J, everything else takes the flag (default 2).
fn parse_state(raw: &str, n_atoms: Option<usize>) -> Result<(InitialState, usize)> {
    let (kind, args) = match raw.split_once(':') {
        Some((k, a)) => (k, a),
        None => (raw, ""),
    };
    let flag_n = n_atoms.unwrap_or(2);
    let half_n = HalfInt::from_doubled(flag_n as i32);
    let (state, n) = match kind {
        "ground" => (
            InitialState::Dicke { j: half_n, m: HalfInt::from_doubled(-(flag_n as i32)) },
            flag_n,
        ),
        "excited" => (InitialState::Dicke { j: half_n, m: half_n }, flag_n),
        "dicke" => {
            let v = parse_floats(args, "--state dicke:J,M")?;
            if v.len() != 2 {
                return Err(Error::Usage("--state dicke needs exactly J,M".into()));
            }
            let j = HalfInt::try_from_f64(v[0])?;
            let state =
                InitialState::Dicke { j, m: HalfInt::try_from_f64(v[1])? };
            (state, j.doubled().max(0) as usize)
        }
        "dephased" => {
            let v = parse_floats(args, "--state dephased:J,M,LAMBDA")?;
            if v.len() != 3 {
                return Err(Error::Usage("--state dephased needs exactly J,M,LAMBDA".into()));
            }
            let j = HalfInt::try_from_f64(v[0])?;
            let state = InitialState::DephasedDicke {
                j,
                m: HalfInt::try_from_f64(v[1])?,
                lambda: v[2],
            };
            (state, j.doubled().max(0) as usize)
        }
        "mixture" => {
            let populations = parse_floats(args, "--state mixture:P0,P1,...")?;
            (InitialState::DickeMixture { j: half_n, populations }, flag_n)
        }
        "factorized" => {
            let v = parse_floats(args, "--state factorized:RHO_EE,RHO_EG[,PHASE]")?;
            if v.len() != 2 && v.len() != 3 {
                return Err(Error::Usage(
                    "--state factorized needs RHO_EE,RHO_EG and an optional phase".into(),
                ));
            }
            let phase = v.get(2).copied().unwrap_or(0.0);
            let state = InitialState::FactorizedIdentical {
                n_atoms: flag_n,
                rho_ee: v[0],
                rho_eg: C64::from_polar(v[1], phase),
            };
            (state, flag_n)
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown state '{other}'; expected ground, excited, dicke:J,M, \
                 dephased:J,M,LAMBDA, mixture:P0,P1,..., or factorized:RHO_EE,RHO_EG[,PHASE]"
            )))
        }
    };
    if let Some(explicit) = n_atoms {
        if explicit != n {
            return Err(Error::Config(format!(
                "state '{raw}' describes {n} atoms but --n-atoms says {explicit}"
            )));
        }
    }
    state.validate()?;
    Ok((state, n))
}

fn cmd_run(config: &str, out: Option<PathBuf>, force: bool, jobs: usize) -> Result<()> {
    let opts = RunOptions {
        out_override: out,
        force,
        jobs: if jobs == 0 { None } else { Some(jobs) },
    };
    let summary = run_experiment(config, &opts)?;
    if summary.cached {
        out!(
            "{}: cached at {} ({} files, hash {})",
            summary.experiment,
            summary.dir.display(),
            summary.files.len(),
            summary.hash
        );
    } else {
        out!(
            "{}: wrote {} files to {} in {:.1}s (hash {})",
            summary.experiment,
            summary.files.len(),
            summary.dir.display(),
            summary.wall_seconds,
            summary.hash
        );
    }
    for (key, value) in &summary.headline {
        out!("  {key} = {value:.6e}");
    }
    Ok(())
}

fn cmd_measure(
    state: &str,
    n_atoms: Option<usize>,
    gamma_over_g: f64,
    window: Option<f64>,
    grid: usize,
    no_refine: bool,
) -> Result<()> {
    let (init, n_atoms) = parse_state(state, n_atoms)?;
    let spec = SystemSpec::new(n_atoms, 1.0, gamma_over_g)?;
    let t_window = window.unwrap_or_else(|| default_window(gamma_over_g));
    let opts = MemoryOptions {
        grid_points: grid,
        a_duration: None,
        refine: !no_refine,
        integrator: IntegratorConfig::default(),
    };
    let out = measure_state(&spec, &init, t_window, &opts, None)?;
    let line = serde_json::json!({
        "n_m": out.report.n_m,
        "n_m_ind": out.report.n_m_ind,
        "enhancement": out.report.enhancement,
        "n_p": out.radiation.n_p,
        "s": out.radiation.s.unwrap_or(0.0),
        "regime": regime_name(out.report.regime),
    });
    out!("{line}");
    Ok(())
}

fn cmd_list() {
    for entry in catalog() {
        let marker = if entry.expensive { "  [hours at defaults]" } else { "" };
        out!("{:8} {}{}", entry.id, entry.summary, marker);
    }
}

fn cmd_validate(config: &str) -> Result<()> {
    let parsed = load_config(config)?;
    let resolved = resolve(&parsed)?;
    let hash = canonical_hash(&resolved)?;
    out!(
        "ok: {} (n_atoms {}, gamma/g {}, hash {hash})",
        resolved.experiment, resolved.n_atoms, resolved.gamma_over_g
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, force, jobs } => cmd_run(&config, out, force, jobs),
        Command::Measure { state, n_atoms, gamma_over_g, window, grid, no_refine } => {
            cmd_measure(&state, n_atoms, gamma_over_g, window, grid, no_refine)
        }
        Command::List => {
            cmd_list();
            Ok(())
        }
        Command::Validate { config } => cmd_validate(&config),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("{err}");
        std::process::exit(exit_code(&err));
    }
}
