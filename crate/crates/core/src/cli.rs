//! Command-line interface: plan, sample, sweep, verify, bounds.
//!
//! Every command is a pure function of its flags and the resolved seed, so
//! repeated invocations write identical bytes. `--seed` falls back to the
//! `PLUGIN_MDP_SEED` environment variable, then to 0. `--workers` sizes the
//! rayon pool and never changes results, only wall time.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 verification failure,
//! 3 internal error.

use std::ffi::OsString;
use std::num::NonZeroUsize;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bounds::{self, BoundParams};
use crate::error::{Error, Result};
use crate::harness::{
    generate_mdp, plan, run_sweep, MdpFamily, MdpFamilySpec, Planner, SweepConfig,
};
use crate::io;
use crate::mdp::TabularMdp;
use crate::stream::RngSeed;
use crate::verify::{reports_exit_code, run_suite, VerifyConfig};

pub const SEED_ENV_VAR: &str = "PLUGIN_MDP_SEED";

fn parse_gamma(s: &str) -> std::result::Result<f64, String> {
    let g: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if g > 0.0 && g < 1.0 {
        Ok(g)
    } else {
        Err(format!("discount must lie strictly in (0, 1), got {g}"))
    }
}

fn parse_probability(s: &str) -> std::result::Result<f64, String> {
    let d: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if d > 0.0 && d < 1.0 {
        Ok(d)
    } else {
        Err(format!("probability must lie strictly in (0, 1), got {d}"))
    }
}

/// A comma-separated, strictly increasing list of sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGrid(pub Vec<u64>);

impl std::str::FromStr for NGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let grid: Vec<u64> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| format!("'{t}' is not a sample count"))
            })
            .collect::<std::result::Result<_, _>>()?;
        if grid.is_empty() {
            return Err("the grid must name at least one sample count".into());
        }
        if !grid.windows(2).all(|w| w[0] < w[1]) {
            return Err("sample counts must be strictly increasing".into());
        }
        if grid.contains(&0) {
            return Err("sample counts must be positive".into());
        }
        Ok(NGrid(grid))
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "plugin-mdp",
    version,
    about = "Tabular-MDP plug-in planning: sample, plan, verify, and sweep"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Random seed; falls back to $PLUGIN_MDP_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallel trials (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<NonZeroUsize>,

    /// Output file; most commands print to stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Flags describing a generated MDP instance.
#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    /// MDP family: dirichlet, garnet, chain, or twostate-hard.
    #[arg(long, default_value = "dirichlet")]
    pub family: MdpFamily,

    #[arg(long, default_value_t = 5)]
    pub states: usize,

    #[arg(long, default_value_t = 3)]
    pub actions: usize,

    /// Discount factor in (0, 1).
    #[arg(long, default_value_t = 0.9, value_parser = parse_gamma)]
    pub gamma: f64,

    /// Garnet only: transition support size.
    #[arg(long)]
    pub branching: Option<usize>,

    /// Dirichlet only: symmetric concentration.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
}

impl FamilyArgs {
    fn spec(&self, seed: u64) -> MdpFamilySpec {
        MdpFamilySpec {
            family: self.family,
            n_states: self.states,
            n_actions: self.actions,
            discount: self.gamma,
            branching: self.branching,
            concentration: self.concentration,
            seed,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve an MDP and print its optimal policy and values.
    Plan {
        /// MDP file to solve; a family instance is generated when omitted.
        #[arg(long, value_name = "PATH")]
        mdp: Option<PathBuf>,

        #[command(flatten)]
        family: FamilyArgs,

        #[arg(long, default_value = "pi")]
        planner: Planner,

        /// Optimization-oracle accuracy for the vi planner.
        #[arg(long, default_value_t = 1e-6)]
        eps_opt: f64,
    },

    /// Draw N generative-model samples per pair and emit the plug-in MDP.
    Sample {
        /// MDP file to sample from; a family instance when omitted.
        #[arg(long, value_name = "PATH")]
        mdp: Option<PathBuf>,

        #[command(flatten)]
        family: FamilyArgs,

        /// Samples per state-action pair.
        #[arg(long)]
        n: u64,
    },

    /// Monte-Carlo sweep over sample sizes; CSV records plus a JSON summary.
    Sweep {
        #[command(flatten)]
        family: FamilyArgs,

        /// Comma-separated, strictly increasing sample counts.
        #[arg(long)]
        n_grid: NGrid,

        #[arg(long, default_value_t = 50)]
        trials: u32,

        #[arg(long, default_value_t = 1e-6)]
        eps_opt: f64,

        #[arg(long, default_value = "vi")]
        planner: Planner,

        #[arg(long, default_value_t = 0.1, value_parser = parse_probability)]
        delta: f64,

        /// Record real wall time per trial (breaks byte-for-byte
        /// reproducibility of the CSV).
        #[arg(long)]
        timing: bool,
    },

    /// Run the lemma-verification battery and emit JSON-line reports.
    Verify {
        #[command(flatten)]
        family: FamilyArgs,

        /// Samples per pair for the sample-based checks.
        #[arg(long, default_value_t = 8192)]
        n: u64,

        #[arg(long, default_value_t = 0.1, value_parser = parse_probability)]
        delta: f64,

        #[arg(long, default_value_t = 500)]
        trials: u64,

        #[arg(long, default_value_t = 1e-6)]
        eps_opt: f64,

        /// Accuracy target of the end-to-end guarantee check.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,

        /// Absolute constant in the refined bounds.
        #[arg(long, default_value_t = bounds::DEFAULT_C)]
        c: f64,

        #[arg(long, default_value = "vi")]
        planner: Planner,

        /// Cap on the value-grid size of the union-bound check.
        #[arg(long, default_value_t = 4096)]
        grid_cap: usize,

        /// Reject discounts below 1/2 instead of warning.
        #[arg(long)]
        enforce_gamma_half: bool,
    },

    /// Print the closed-form bounds and the sample size the guarantee needs.
    Bounds {
        #[arg(long, default_value_t = 5)]
        states: usize,

        #[arg(long, default_value_t = 3)]
        actions: usize,

        #[arg(long, default_value_t = 0.9, value_parser = parse_gamma)]
        gamma: f64,

        #[arg(long, default_value_t = 0.1, value_parser = parse_probability)]
        delta: f64,

        /// Target accuracy.
        #[arg(long)]
        epsilon: f64,

        /// Evaluate the bound table at this N instead of the required one.
        #[arg(long)]
        n: Option<u64>,

        #[arg(long, default_value_t = bounds::DEFAULT_C)]
        c: f64,

        #[arg(long, default_value_t = 1e-6)]
        eps_opt: f64,
    },
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text.parse().map_err(|_| {
            Error::invalid(format!("{SEED_ENV_VAR} must be an unsigned integer, got '{text}'"))
        }),
        Err(_) => Ok(0),
    }
}

fn load_or_generate(
    mdp: &Option<PathBuf>,
    family: &FamilyArgs,
    seed: u64,
) -> Result<TabularMdp> {
    match mdp {
        Some(path) => io::load_mdp(path),
        None => generate_mdp(&family.spec(seed)),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_plan(
    cli: &Cli,
    mdp: &Option<PathBuf>,
    family: &FamilyArgs,
    planner: Planner,
    eps_opt: f64,
) -> Result<i32> {
    let seed = resolve_seed(cli.seed)?;
    let m = load_or_generate(mdp, family, seed)?;
    let (pi, q) = plan(&m, planner, eps_opt)?;
    let (v, _) = crate::mdp::policy_value_exact(&m, &pi)?;
    let mut text = format!("planner: {}\n", planner.name());
    for s in 0..m.n_states() {
        text.push_str(&format!(
            "state {s}: action {} value {}\n",
            pi.action(s),
            v.value(s)
        ));
    }
    let _ = q;
    emit(&cli.out, &text)?;
    Ok(0)
}

fn cmd_sample(
    cli: &Cli,
    mdp: &Option<PathBuf>,
    family: &FamilyArgs,
    n: u64,
) -> Result<i32> {
    let seed = resolve_seed(cli.seed)?;
    let m = load_or_generate(mdp, family, seed)?;
    let model = crate::generative::build_empirical_model(&m, n, RngSeed::new(seed, 0))?;
    let m_hat = crate::generative::empirical_mdp(&m, &model)?;
    emit(&cli.out, &io::format_mdp(&m_hat))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    cli: &Cli,
    family: &FamilyArgs,
    n_grid: &NGrid,
    trials: u32,
    eps_opt: f64,
    planner: Planner,
    delta: f64,
    timing: bool,
) -> Result<i32> {
    let seed = resolve_seed(cli.seed)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Error::invalid("sweep requires --out for the CSV records"))?;
    let cfg = SweepConfig {
        family: family.spec(seed),
        n_grid: n_grid.0.clone(),
        trials_per_n: trials,
        eps_opt,
        planner,
        delta,
        seed,
        measure_wall_time: timing,
    };
    let records = run_sweep(&cfg)?;
    std::fs::write(out, io::sweep_records_csv(&records))?;
    let summary = io::sweep_summary(&records);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::internal(format!("summary serialization failed: {e}")))?;
    println!("{json}");
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    cli: &Cli,
    family: &FamilyArgs,
    n: u64,
    delta: f64,
    trials: u64,
    eps_opt: f64,
    epsilon: f64,
    c: f64,
    planner: Planner,
    grid_cap: usize,
    enforce_gamma_half: bool,
) -> Result<i32> {
    let seed = resolve_seed(cli.seed)?;
    let cfg = VerifyConfig {
        family: family.spec(seed),
        n,
        delta,
        eps_opt,
        epsilon,
        trials,
        seed,
        c,
        planner,
        grid_cap,
        enforce_gamma_half,
    };
    let reports = run_suite(&cfg)?;
    emit(&cli.out, &io::reports_jsonl(&reports)?)?;
    Ok(reports_exit_code(&reports))
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    cli: &Cli,
    states: usize,
    actions: usize,
    gamma: f64,
    delta: f64,
    epsilon: f64,
    n: Option<u64>,
    c: f64,
    eps_opt: f64,
) -> Result<i32> {
    let base = BoundParams::new(states, actions, gamma, delta, 1, c)?;
    let required = bounds::required_n(epsilon, &base)?;
    let at_n = n.unwrap_or(required);
    let p = BoundParams::new(states, actions, gamma, delta, at_n, c)?;
    let mut text = format!(
        "S={states} A={actions} gamma={gamma} delta={delta} c={c}\n\
         epsilon     = {epsilon}\n\
         required N  = {required}\n\
         at N = {at_n}:\n"
    );
    text.push_str(&format!("  Delta_crude = {}\n", bounds::crude_delta(&p)));
    text.push_str(&format!("  Delta_prime = {}\n", bounds::delta_prime(&p)));
    text.push_str(&format!("  alpha       = {}\n", bounds::alpha(&p)));
    match bounds::final_bound_rhs(&p, eps_opt) {
        Ok((rhs_pihat, rhs_pistar)) => {
            text.push_str(&format!("  final bound (planned policy) = {rhs_pihat}\n"));
            text.push_str(&format!("  final bound (optimal policy) = {rhs_pistar}\n"));
        }
        Err(Error::BoundVacuous { alpha }) => {
            text.push_str(&format!(
                "  final bound: vacuous (alpha = {alpha} >= 1; increase N)\n"
            ));
        }
        Err(e) => return Err(e),
    }
    emit(&cli.out, &text)?;
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Plan {
            mdp,
            family,
            planner,
            eps_opt,
        } => cmd_plan(cli, mdp, family, *planner, *eps_opt),
        Command::Sample { mdp, family, n } => cmd_sample(cli, mdp, family, *n),
        Command::Sweep {
            family,
            n_grid,
            trials,
            eps_opt,
            planner,
            delta,
            timing,
        } => cmd_sweep(
            cli, family, n_grid, *trials, *eps_opt, *planner, *delta, *timing,
        ),
        Command::Verify {
            family,
            n,
            delta,
            trials,
            eps_opt,
            epsilon,
            c,
            planner,
            grid_cap,
            enforce_gamma_half,
        } => cmd_verify(
            cli,
            family,
            *n,
            *delta,
            *trials,
            *eps_opt,
            *epsilon,
            *c,
            *planner,
            *grid_cap,
            *enforce_gamma_half,
        ),
        Command::Bounds {
            states,
            actions,
            gamma,
            delta,
            epsilon,
            n,
            c,
            eps_opt,
        } => cmd_bounds(
            cli, *states, *actions, *gamma, *delta, *epsilon, *n, *c, *eps_opt,
        ),
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Internal(_) => 3,
        _ => 1,
    }
}

/// Parse and execute; the entry point for both the binary and tests.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 1;
        }
    };
    let result = match cli.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w.get()).build();
            match pool {
                Ok(pool) => pool.install(|| dispatch(&cli)),
                Err(e) => Err(Error::internal(format!("worker pool: {e}"))),
            }
        }
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn run_from_env() -> i32 {
    run_from(std::env::args_os())
}
