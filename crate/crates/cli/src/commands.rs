//! The `price`, `converge` and `collapse-check` commands.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use regime_rkf::model::{FieldCoupling, GeneratorMatrix, MarketModel, StepControlConfig};
use regime_rkf::pricing::{assemble_convergence, check_study, fixed_step_outcome, PriceSurface};
use regime_rkf::rkf::{Integrator, Solution};
use regime_rkf::SolverError;
use serde_json::{json, Value};

use crate::config::{parse_config, ConfigError, RunConfig, SchemaError};
use crate::output;

/// Largest field discrepancy tolerated by `collapse-check`.
pub const COLLAPSE_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] SolverError),
    #[error("regime collapse discrepancy {discrepancy:e} exceeds {COLLAPSE_TOL:e}")]
    CollapseBreach { discrepancy: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Config(ConfigError::Schema(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::CollapseBreach { .. } => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub field_coupling: FieldCoupling,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(parse_config(&text)?)
}

fn control(cfg: &RunConfig, opts: &RunOptions) -> StepControlConfig {
    StepControlConfig {
        field_coupling: opts.field_coupling,
        ..cfg.step_control()
    }
}

fn coupling_name(c: FieldCoupling) -> &'static str {
    match c {
        FieldCoupling::Frozen => "frozen",
        FieldCoupling::StageCoupled => "stage",
    }
}

/// Run metadata kept apart from the data files.
fn write_metadata(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    opts: &RunOptions,
    started: Instant,
    extra: Value,
) -> io::Result<()> {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "finished_unix": unix,
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "field_coupling": coupling_name(opts.field_coupling),
        "config": cfg.to_json(),
        "result": extra,
    });
    let text = serde_json::to_string_pretty(&meta).map_err(io::Error::other)?;
    fs::write(dir.join("run.json"), text + "\n")
}

/// Outcome of `price`.
#[derive(Debug, Clone)]
pub struct PriceRun {
    pub solution: Solution,
    pub surface: PriceSurface,
}

/// Adaptive solve to maturity; writes `prices.csv`, `boundary.csv`,
/// `steps.csv`, `profile.csv` and `run.json`.
pub fn price(cfg: &RunConfig, opts: &RunOptions, digits: Option<usize>) -> Result<PriceRun, CliError> {
    let started = Instant::now();
    let model = cfg.model();
    let grid = cfg.grid_spec().map_err(ConfigError::from)?;
    let integrator = Integrator::new(model.clone(), grid, control(cfg, opts)).map_err(ConfigError::from)?;
    let solution = integrator.solve(cfg.outputs.gamma)?;
    let surface = PriceSurface::from_state(&model, &grid, &solution.state);
    let digits = digits.or(cfg.outputs.digits);

    fs::create_dir_all(&opts.out_dir)?;
    let dir = &opts.out_dir;
    output::write_prices(
        &dir.join("prices.csv"),
        &surface,
        &cfg.outputs.spots,
        cfg.outputs.gamma,
        digits,
    )?;
    output::write_boundary(&dir.join("boundary.csv"), &solution)?;
    output::write_steps(&dir.join("steps.csv"), &solution.steps)?;
    output::write_profile(&dir.join("profile.csv"), &surface)?;
    let accepted = solution.accepted_steps().count();
    write_metadata(
        dir,
        "price",
        cfg,
        opts,
        started,
        json!({
            "accepted_steps": accepted,
            "rejected_steps": solution.steps.len() - accepted,
            "final_boundary": surface.sf,
        }),
    )?;
    Ok(PriceRun { solution, surface })
}

/// Settings of `converge`.
#[derive(Debug, Clone)]
pub struct ConvergeSpec {
    pub hs: Vec<f64>,
    pub fixed_k: f64,
    pub t_short: f64,
    /// Zero-based regime the error norm is taken over; `None` for all.
    pub regime: Option<usize>,
}

/// Fixed-step spatial convergence study; writes `converge.csv`.
pub fn converge(
    cfg: &RunConfig,
    opts: &RunOptions,
    spec: &ConvergeSpec,
) -> Result<Vec<regime_rkf::pricing::ConvergenceRow>, CliError> {
    let started = Instant::now();
    if check_study(&spec.hs, spec.fixed_k, spec.t_short).is_err() {
        return Err(SchemaError::new(
            "--h",
            "grid spacings must be positive and halve at every step; --k and --t-short must be positive",
        )
        .into());
    }
    if let Some(r) = spec.regime {
        if r >= cfg.regimes.len() {
            return Err(SchemaError::new("--regime", format!("config has {} regimes", cfg.regimes.len())).into());
        }
    }
    let model = cfg.model();
    let ctl = control(cfg, opts);
    let outcomes = spec
        .hs
        .par_iter()
        .map(|&h| fixed_step_outcome(&model, cfg.grid.x_max, h, spec.fixed_k, spec.t_short, &ctl))
        .collect::<Result<Vec<_>, _>>()
        .map_err(ConfigError::from)?;
    let rows = assemble_convergence(&spec.hs, &outcomes, spec.regime);

    fs::create_dir_all(&opts.out_dir)?;
    output::write_convergence(&opts.out_dir.join("converge.csv"), &rows)?;
    let failures: Vec<Value> = rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|e| json!({"h": r.h, "error": e.to_string()})))
        .collect();
    write_metadata(
        &opts.out_dir,
        "converge",
        cfg,
        opts,
        started,
        json!({
            "h": spec.hs,
            "fixed_k": spec.fixed_k,
            "t_short": spec.t_short,
            "regime": spec.regime.map(|r| r + 1),
            "failed_grids": failures,
        }),
    )?;
    Ok(rows)
}

/// Every regime takes regime 0's rate and volatility.
pub fn collapsed_model(model: &MarketModel) -> MarketModel {
    let mut m = model.clone();
    let p = m.regimes[0];
    m.regimes.iter_mut().for_each(|r| *r = p);
    m
}

/// Raises the switching intensities by 10% without touching the diagonal,
/// leaving rows that no longer sum to zero. Negative control for `collapse-check`.
pub fn break_coupling(model: &MarketModel) -> MarketModel {
    let n = model.num_regimes();
    let rows = (0..n)
        .map(|m| {
            (0..n)
                .map(|l| {
                    let q = model.generator.get(m, l);
                    if l == m {
                        q
                    } else {
                        1.1 * q
                    }
                })
                .collect()
        })
        .collect();
    MarketModel {
        generator: GeneratorMatrix::from_rows(rows),
        ..model.clone()
    }
}

/// Max difference over regimes, nodes and boundary positions between the
/// collapsed I-regime solve and the one-regime solve.
pub fn collapse_discrepancy(multi: &Solution, single: &Solution) -> f64 {
    let s = &single.state;
    let mut d = 0.0_f64;
    for m in 0..multi.state.num_regimes() {
        let st = &multi.state;
        d = d.max((st.sf[m] - s.sf[0]).abs());
        for (a, b) in st.u[m].iter().zip(&s.u[0]).chain(st.w[m].iter().zip(&s.w[0])) {
            d = d.max((a - b).abs());
        }
    }
    d
}

/// Runs the collapsed I-regime model against the one-regime model.
pub fn collapse_check(cfg: &RunConfig, opts: &RunOptions, inject_fault: bool) -> Result<f64, CliError> {
    let started = Instant::now();
    if cfg.regimes.len() < 2 {
        return Err(SchemaError::new("regimes", "collapse-check needs at least two regimes").into());
    }
    let base = cfg.model();
    let mut multi = collapsed_model(&base);
    if inject_fault {
        multi = break_coupling(&multi);
    }
    let single = MarketModel::single_regime(base.strike, base.maturity, base.regimes[0]);
    let grid = cfg.grid_spec().map_err(ConfigError::from)?;
    let ctl = control(cfg, opts);
    let a = Integrator::new(multi, grid, ctl).map_err(ConfigError::from)?;
    let b = Integrator::new(single, grid, ctl).map_err(ConfigError::from)?;
    let (ra, rb) = rayon::join(|| a.solve(false), || b.solve(false));
    let discrepancy = collapse_discrepancy(&ra?, &rb?);

    fs::create_dir_all(&opts.out_dir)?;
    write_metadata(
        &opts.out_dir,
        "collapse-check",
        cfg,
        opts,
        started,
        json!({
            "discrepancy": discrepancy,
            "tolerance": COLLAPSE_TOL,
            "passed": discrepancy <= COLLAPSE_TOL,
        }),
    )?;
    if discrepancy <= COLLAPSE_TOL {
        Ok(discrepancy)
    } else {
        Err(CliError::CollapseBreach { discrepancy })
    }
}

/// Caps the global thread pool from `REGIME_RKF_THREADS` (0 or unset: auto).
pub fn init_threads(value: Option<&str>) -> Result<(), CliError> {
    let n = match value {
        None => 0,
        Some(v) => v.trim().parse::<usize>().map_err(|_| {
            SchemaError::new(
                "REGIME_RKF_THREADS",
                format!("expected a non-negative integer, got {:?}", v),
            )
        })?,
    };
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
