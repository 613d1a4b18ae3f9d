//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use storage_scaling_core::allocation::{self, Allocation};
use storage_scaling_core::fit::{self, FitOptions};
use storage_scaling_core::plan;
use storage_scaling_core::ridge::{self, LambdaPolicy};
use storage_scaling_core::theory;
use storage_scaling_core::{model, Error, StreamKey};

use crate::{io, sweep, LabError};

#[derive(Debug, Parser)]
#[command(name = "storage-scaling-lab", version, about = "Storage scaling-law experiments: simulate, fit, optimize, plan")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo ridge sweep over an (n, m) lattice; writes an observation grid.
    SimulateSweep(SimulateArgs),
    /// Deterministic-equivalent test error over an (n, m) lattice.
    PredictTheory(TheoryArgs),
    /// Fit Err* + A n^-alpha + B L^-beta to an observation grid.
    Fit(FitArgs),
    /// Storage-optimal (n, L) splits for a list of budgets.
    Optimize(OptimizeArgs),
    /// Randomized compression levels for a catalog under a byte budget.
    PlanRandomized(PlanArgs),
    /// Exponents predicted by the spectrum parameters.
    Exponents(ExponentsArgs),
}

fn policy(raw: &str) -> Result<LambdaPolicy, String> {
    raw.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Spectrum configuration (JSON).
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// Finest kept level for each column of the lattice.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_list: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    /// oracle-grid, theorem, lemma-bound, lemma-proof or a fixed value.
    #[arg(long, default_value = "oracle-grid", value_parser = policy)]
    pub lambda_policy: LambdaPolicy,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_list: Vec<usize>,
    /// Same choices as --lambda-policy of simulate-sweep.
    #[arg(long, default_value = "oracle-grid", value_parser = policy)]
    pub lambda: LambdaPolicy,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Observation grid CSV.
    pub grid: PathBuf,
    /// Ignore the stderr column and weight all rows equally.
    #[arg(long)]
    pub unweighted: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Fit JSON, or a bare {err_star, A, B, alpha, beta} object.
    pub fit: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<f64>,
    /// Also report fixed-size baselines at these bytes per sample.
    #[arg(long, value_delimiter = ',')]
    pub fixed_l: Vec<f64>,
    /// Also report the uncompressed baseline at this size per sample.
    #[arg(long)]
    pub original_l: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Item catalog CSV.
    pub catalog: PathBuf,
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep a class-stratified fraction of the catalog first.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub level_min: f64,
    #[arg(long, default_value_t = 15.0)]
    pub level_cap: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExponentsArgs {
    pub config: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::SimulateSweep(args) => simulate(args),
        Command::PredictTheory(args) => predict_theory(args),
        Command::Fit(args) => fit_grid(args),
        Command::Optimize(args) => optimize(args),
        Command::PlanRandomized(args) => plan_randomized(args),
        Command::Exponents(args) => exponents(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<(), LabError> {
    let config = io::load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.seed);
    let cells = sweep::sweep_cells_parallel(
        &config,
        &args.n_list,
        &args.m_list,
        args.lambda_policy,
        args.replicates,
        seed,
    )?;
    for c in cells.iter().filter(|c| c.grid_edge_hits > 0) {
        eprintln!(
            "warning: n = {}, m = {}: {} of {} replicates chose a lambda on the edge of the grid",
            c.n, c.m, c.grid_edge_hits, c.replicates
        );
    }
    let grid = ridge::cells_to_grid(&cells)?;
    io::emit(args.out.as_ref(), |out| io::write_grid(&grid, out, Some(seed)))
}

fn predict_theory(args: TheoryArgs) -> Result<(), LabError> {
    let config = io::load_config(&args.config)?;
    ridge::check_sweep(&config, &args.n_list, &args.m_list)?;
    let norms = config.theta_norms();
    let mut lines = Vec::new();
    for &n in &args.n_list {
        for &m in &args.m_list {
            let coords = model::stored_coords(&config, m)?;
            let risk = match args.lambda.scheduled(&config, n) {
                Some(lambda) => theory::predicted_error(&config, &norms, n, m, lambda),
                None => theory::predicted_error_oracle(&config, &norms, n, m),
            };
            lines.push(match risk {
                Ok(r) => format!(
                    "{n},{m},{coords},{},{},{},{},{},{},{},ok",
                    r.lambda, r.lambda_star, r.dof, r.bias, r.variance, r.tail, r.total
                ),
                Err(Error::DegenerateDof { .. }) => {
                    let lambda = args.lambda.scheduled(&config, n).map(|l| l.to_string()).unwrap_or_default();
                    format!("{n},{m},{coords},{lambda},,,,,,,degenerate")
                }
                Err(e) => return Err(e.into()),
            });
        }
    }
    io::emit(args.out.as_ref(), |out| {
        writeln!(out, "{}", io::provenance(None))?;
        writeln!(out, "n,m,L,lambda,lambda_star,dof,bias,variance,tail,total,status")?;
        lines.iter().try_for_each(|line| writeln!(out, "{line}"))
    })
}

fn fit_grid(args: FitArgs) -> Result<(), LabError> {
    let grid = io::load_grid(&args.grid)?;
    let options = FitOptions { use_stderr_weights: !args.unweighted, ..FitOptions::default() };
    let report = fit::fit(&grid, &options)?;
    let p = report.params;
    eprintln!(
        "Err* = {:.6}, A = {:.6}, B = {:.6}, alpha = {:.4}, beta = {:.4}, R^2 = {:.6}",
        p.err_star, p.a, p.b, p.alpha, p.beta, report.r_squared
    );
    if !report.converged {
        eprintln!("warning: refinement stopped at the iteration cap");
    }
    match args.out {
        Some(path) => io::store_fit(&report, &path),
        None => {
            let file = io::FitFile { provenance: io::provenance(None), report };
            let text = serde_json::to_string_pretty(&file).expect("fit report serializes");
            println!("{text}");
            Ok(())
        }
    }
}

fn optimize(args: OptimizeArgs) -> Result<(), LabError> {
    let params = io::load_params(&args.fit)?;
    let mut rows: Vec<Allocation> = Vec::new();
    for &s in &args.budgets {
        rows.push(allocation::optimal_allocation(&params, s)?);
        for &l in &args.fixed_l {
            rows.push(allocation::fixed_level_plan(&params, s, l)?);
        }
        if let Some(l) = args.original_l {
            rows.push(allocation::original_format_plan(&params, s, l)?);
        }
    }
    io::emit(args.out.as_ref(), |out| io::write_allocations(&rows, out))
}

fn plan_randomized(args: PlanArgs) -> Result<(), LabError> {
    let catalog = io::load_catalog(&args.catalog)?;
    let key = StreamKey::new(args.seed);
    let subset: Vec<String> = if args.fraction < 1.0 {
        plan::stratified_subset(&catalog, args.fraction, &mut key.child(0).rng())?
    } else if args.fraction == 1.0 {
        catalog.items().iter().map(|i| i.id.clone()).collect()
    } else {
        return Err(LabError::Usage(format!("--fraction must lie in (0, 1], got {}", args.fraction)));
    };
    let plan = plan::randomized_levels(
        &catalog,
        &subset,
        args.budget,
        args.level_min,
        args.level_cap,
        &mut key.child(1).rng(),
    )?;
    eprintln!(
        "{} items, levels [{:.4}, {:.4}], {} bytes for a budget of {}",
        plan.assignments.len(),
        plan.level_min,
        plan.level_max,
        plan.total_bytes,
        plan.target_bytes
    );
    io::emit(args.out.as_ref(), |out| io::write_plan(&plan, out, args.seed))
}

fn exponents(args: ExponentsArgs) -> Result<(), LabError> {
    let config = io::load_config(&args.config)?;
    if !config.theorem_regime() {
        eprintln!("warning: r * p >= 1; the exponent formulas assume r * p < 1");
    }
    let (alpha, beta) = fit::theoretical_exponents(&config);
    let nu = alpha * beta / (alpha + beta);
    println!("{}", io::provenance(Some(config.seed)));
    println!("alpha,beta,nu");
    println!("{alpha},{beta},{nu}");
    Ok(())
}
