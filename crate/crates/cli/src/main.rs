use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panoc_cli::config::load_chain_params;
use panoc_cli::{
    run_compare, run_mpc, run_solve, run_sweep, Accelerator, CliError, Disturbance, ExitStatus, Format, RunConfig,
    Start,
};

/// PANOC⁺ with Gauss-Newton acceleration on the chain-of-masses benchmark.
///
/// Settings come from the built-in defaults, then `--config`, then the
/// flags. Exit codes: 0 all solves converged, 2 configuration error,
/// 3 solver failure, 4 some sweep instances failed.
#[derive(Debug, Parser)]
#[command(name = "panoc", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and write its iteration trace.
    Solve,
    /// Solve one instance with each accelerator in turn.
    Compare {
        #[arg(long, value_delimiter = ',')]
        accelerators: Option<Vec<Accelerator>>,
    },
    /// Random instances over a range of horizons.
    Sweep {
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        n_step: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        accelerators: Option<Vec<Accelerator>>,
        /// Worker threads; 1 gives contention-free timings.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Closed-loop simulation after a disturbance.
    Mpc {
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        starts: Option<Vec<Start>>,
        #[arg(long, value_delimiter = ',')]
        accelerators: Option<Vec<Accelerator>>,
        #[arg(long)]
        tracking_tol: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// TOML chain parameters; overrides the config file.
    #[arg(long, global = true)]
    chain: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// `random` or three comma-separated velocities.
    #[arg(long, global = true, allow_hyphen_values = true)]
    disturbance: Option<Disturbance>,
    #[arg(long, global = true)]
    disturbance_steps: Option<usize>,
    #[arg(long, global = true)]
    gamma0: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    k_gn: Option<usize>,
    #[arg(long, global = true)]
    lbfgs_mem: Option<usize>,
    #[arg(long, global = true, value_enum)]
    accelerator: Option<Accelerator>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &c.chain {
        cfg.chain = load_chain_params(path)?;
        cfg.chain_file = Some(path.clone());
    }
    set(&mut cfg.output.dir, c.out.clone());
    set(&mut cfg.output.format, c.format);
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.chain.horizon, c.horizon);
    set(&mut cfg.solver.alpha, c.alpha);
    set(&mut cfg.solver.beta, c.beta);
    set(&mut cfg.solver.tol, c.tol);
    set(&mut cfg.solver.max_iter, c.max_iter);
    set(&mut cfg.solver.k_gn, c.k_gn);
    set(&mut cfg.solver.accelerator, c.accelerator);
    if c.gamma0.is_some() {
        cfg.solver.gamma0 = c.gamma0;
    }
    if c.lbfgs_mem.is_some() {
        cfg.solver.lbfgs_mem = c.lbfgs_mem;
    }
    match &cli.command {
        Command::Solve => {}
        Command::Compare { accelerators } => set(&mut cfg.compare.accelerators, accelerators.clone()),
        Command::Sweep {
            n_min,
            n_max,
            n_step,
            instances,
            accelerators,
            jobs,
        } => {
            let sw = &mut cfg.sweep;
            set(&mut sw.n_min, *n_min);
            set(&mut sw.n_max, *n_max);
            set(&mut sw.n_step, *n_step);
            set(&mut sw.instances, *instances);
            set(&mut sw.accelerators, accelerators.clone());
            set(&mut sw.jobs, *jobs);
            set(&mut sw.disturbance_steps, c.disturbance_steps);
        }
        Command::Mpc {
            duration,
            starts,
            accelerators,
            tracking_tol,
        } => {
            let m = &mut cfg.mpc;
            set(&mut m.duration, *duration);
            set(&mut m.starts, starts.clone());
            set(&mut m.accelerators, accelerators.clone());
            set(&mut m.tracking_tol, *tracking_tol);
            set(&mut m.disturbance, c.disturbance);
            set(&mut m.disturbance_steps, c.disturbance_steps);
        }
    }
    if !matches!(cli.command, Command::Mpc { .. }) {
        set(&mut cfg.instance.disturbance, c.disturbance);
        set(&mut cfg.instance.disturbance_steps, c.disturbance_steps);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<ExitStatus, CliError> {
    let cfg = build_config(cli)?;
    let (status, files) = match cli.command {
        Command::Solve => {
            let r = run_solve(&cfg)?;
            eprintln!(
                "{}: {:?} after {} iterations, residual {:.3e}",
                r.summary.accelerator,
                r.summary.status,
                r.summary.iterations,
                r.summary.residual.unwrap_or(f64::NAN)
            );
            (r.exit_status(), r.write(&cfg)?)
        }
        Command::Compare { .. } => {
            let r = run_compare(&cfg)?;
            for s in &r.summaries {
                eprintln!("{}: {:?} after {} iterations", s.accelerator, s.status, s.iterations);
            }
            (r.exit_status(), r.write(&cfg)?)
        }
        Command::Sweep { .. } => {
            let r = run_sweep(&cfg)?;
            for a in &r.timing_aggregates {
                eprintln!(
                    "N={:3} {:6} median {:.3} ms",
                    a.horizon,
                    a.accelerator,
                    a.median_s * 1e3
                );
            }
            if r.failures() > 0 {
                eprintln!("{} of {} solves failed", r.failures(), r.rows.len());
            }
            (r.exit_status(), r.write(&cfg)?)
        }
        Command::Mpc { .. } => {
            let r = run_mpc(&cfg)?;
            for s in &r.summaries {
                eprintln!(
                    "{} {}: {}/{} converged, final error {:.3e}",
                    s.accelerator, s.start, s.converged, s.steps, s.final_tracking_error
                );
            }
            (r.exit_status(), r.write(&cfg)?)
        }
    };
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::ConfigError as u8
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
