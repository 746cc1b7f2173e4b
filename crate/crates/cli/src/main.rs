use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use optomech::model::AlphaConvention;
use optomech_cli::config::{parse_config, OutputKind, ScenarioConfig};
use optomech_cli::pipeline::{run_scenario, sweep};
use optomech_cli::CliError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlphaConventionArg {
    Derived,
    Literal,
}

#[derive(Parser)]
#[command(
    name = "simulator",
    version,
    about = "Dissipative preparation of non-Gaussian mechanical states in a three-mode optomechanical system"
)]
struct Cli {
    /// Scenario configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the coupling-prefactor convention from the config.
    #[arg(long, global = true, value_enum)]
    alpha_convention: Option<AlphaConventionArg>,
    /// Worker pool size for sweeps (default: available parallelism).
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the selective detuning and write selectivity.json.
    SolveDetuning,
    /// Stationary phonon populations (populations.csv).
    SteadyState,
    /// Wigner function of the stationary state (wigner.csv).
    Wigner,
    /// Scalar metrics under both coupling conventions (metrics.json).
    Metrics,
    /// Reduced-scale full three-mode validation (validation.json).
    ValidateFull,
    /// Every output requested by the config.
    Run,
    /// Grid sweep with one subdirectory per point plus aggregate.csv.
    Sweep,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        None => "{}".to_string(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(conv) = cli.alpha_convention {
        cfg.params.alpha_convention = match conv {
            AlphaConventionArg::Derived => AlphaConvention::Derived,
            AlphaConventionArg::Literal => AlphaConvention::Literal,
        };
    }
    if let Some(n) = cli.parallel {
        cfg.parallel = Some(n);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let out_dir = cfg
        .out_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| cli.out.clone());

    let filter: Option<Vec<OutputKind>> = match cli.command {
        Command::SolveDetuning => Some(vec![OutputKind::Selectivity]),
        Command::SteadyState => Some(vec![OutputKind::Populations]),
        Command::Wigner => Some(vec![OutputKind::Wigner]),
        Command::Metrics => Some(vec![OutputKind::Metrics]),
        Command::ValidateFull => Some(vec![OutputKind::FullModelValidation]),
        Command::Run => None,
        Command::Sweep => {
            let outcome = sweep(&cfg, &out_dir)?;
            println!(
                "sweep: {} point(s), {} failed; aggregate at {}",
                outcome.rows.len(),
                outcome.failed,
                out_dir.join("aggregate.csv").display()
            );
            if outcome.failed > 0 {
                return Err(CliError::PartialSweep {
                    failed: outcome.failed,
                });
            }
            return Ok(());
        }
    };

    // requested outputs must be computed even if the config's output list
    // omits them, so subcommands force their own kind into the set
    let mut cfg = cfg;
    if let Some(f) = &filter {
        for kind in f {
            if !cfg.outputs.contains(kind) {
                cfg.outputs.push(*kind);
            }
        }
    }

    let outcome = run_scenario(&cfg, filter.as_deref(), &out_dir)?;
    for entry in &outcome.manifest.files {
        println!("wrote {} ({} bytes, sha256 {})", entry.path, entry.bytes, &entry.sha256[..12]);
    }
    if let Some(m) = &outcome.metrics {
        println!(
            "delta_a = {:.6}; g2(0): derived = {:.6}, literal = {:.6}; delta: derived = {:.6}, literal = {:.6}",
            m.delta_a, m.derived.g2, m.literal.g2, m.derived.delta_fock, m.literal.delta_fock
        );
    }
    println!("manifest at {}", out_dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
