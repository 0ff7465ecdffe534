use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use regime_rkf::model::FieldCoupling;
use regime_rkf_cli::commands::{self, CliError, ConvergeSpec, RunOptions};
use regime_rkf_cli::output;

#[derive(Parser)]
#[command(
    name = "regime-rkf",
    version,
    about = "American put pricing under Markov regime switching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Coupling {
    Stage,
    Frozen,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    config: PathBuf,
    /// Directory for CSV output and run.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Boundary data seen by the field stages.
    #[arg(long, value_enum, default_value = "stage")]
    field_coupling: Coupling,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive solve to maturity; writes prices.csv, boundary.csv, steps.csv, profile.csv.
    Price {
        #[command(flatten)]
        common: Common,
        /// Decimal places in prices.csv (overrides outputs.digits).
        #[arg(long)]
        digits: Option<usize>,
    },
    /// Fixed-step spatial convergence study; writes converge.csv.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Grid spacings, each half the previous.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025,0.0125")]
        h: Vec<f64>,
        /// Fixed time step.
        #[arg(long, default_value_t = 2.5e-6)]
        k: f64,
        /// Time to expiry at which the fields are compared.
        #[arg(long, default_value_t = 0.2)]
        t_short: f64,
        /// Regime (1-based) the error norm is taken over, or "all".
        #[arg(long, default_value = "1")]
        regime: String,
    },
    /// Identical-regime model against the one-regime model; exit 0 iff within 1e-8.
    CollapseCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Print the configuration with every default made explicit.
    Normalize { config: PathBuf },
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        out_dir: c.out_dir.clone(),
        field_coupling: match c.field_coupling {
            Coupling::Stage => FieldCoupling::StageCoupled,
            Coupling::Frozen => FieldCoupling::Frozen,
        },
    }
}

fn parse_regime(text: &str) -> Result<Option<usize>, CliError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    match text.parse::<usize>() {
        Ok(r) if r >= 1 => Ok(Some(r - 1)),
        _ => Err(regime_rkf_cli::config::SchemaError::new("--regime", "expected a 1-based index or \"all\"").into()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    commands::init_threads(std::env::var("REGIME_RKF_THREADS").ok().as_deref())?;
    match cli.command {
        Command::Price { common, digits } => {
            let cfg = commands::load_config(&common.config)?;
            let run = commands::price(&cfg, &options(&common), digits)?;
            let accepted = run.solution.accepted_steps().count();
            println!(
                "priced {} regimes, {} accepted of {} attempted steps",
                run.surface.num_regimes(),
                accepted,
                run.solution.steps.len()
            );
        }
        Command::Converge {
            common,
            h,
            k,
            t_short,
            regime,
        } => {
            let cfg = commands::load_config(&common.config)?;
            let spec = ConvergeSpec {
                hs: h,
                fixed_k: k,
                t_short,
                regime: parse_regime(&regime)?,
            };
            let rows = commands::converge(&cfg, &options(&common), &spec)?;
            println!("h,max_error_u,order_u,max_error_w,order_w");
            for r in &rows {
                println!(
                    "{},{},{},{},{}",
                    r.h,
                    output::number(r.max_error_u, None),
                    output::number(r.order_u, None),
                    output::number(r.max_error_w, None),
                    output::number(r.order_w, None)
                );
                if let Some(e) = &r.failure {
                    eprintln!("h = {}: {}", r.h, e);
                }
            }
        }
        Command::CollapseCheck { common, inject_fault } => {
            let cfg = commands::load_config(&common.config)?;
            let d = commands::collapse_check(&cfg, &options(&common), inject_fault)?;
            println!(
                "collapse discrepancy {:e} (tolerance {:e}): pass",
                d,
                commands::COLLAPSE_TOL
            );
        }
        Command::Normalize { config } => {
            let cfg = commands::load_config(&config)?;
            println!("{}", cfg);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
