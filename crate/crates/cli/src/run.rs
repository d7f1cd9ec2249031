//! The four experiments behind the subcommands.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chain_bench::ChainProblem;
use nalgebra::DVector;
use panoc_gn::{solve, Dynamics, SolveOutput64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Accelerator, Disturbance, RunConfig, Start};
use crate::records::{
    median, quantile, trace_rows, write_rows, AggregateRow, MpcRow, MpcSummaryRow, RunStatus, SummaryRow,
    TimingAggregateRow, TimingRow, TraceRow,
};
use crate::{CliError, ExitStatus};

/// `steps` inputs uniform in `[-1, 1]³`. Each `stream` gives an independent
/// sequence for the same seed.
pub fn random_inputs(seed: u64, stream: u64, steps: usize) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..steps)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
        .collect()
}

pub fn disturbance_inputs(d: Disturbance, seed: u64, stream: u64, steps: usize) -> Vec<[f64; 3]> {
    match d {
        Disturbance::Fixed(v) => vec![v; steps],
        Disturbance::Random(_) => random_inputs(seed, stream, steps),
    }
}

/// Previous solution advanced by one stage, repeating the last input.
pub fn shift_warm_start(u: &DVector<f64>, nu: usize) -> DVector<f64> {
    let n = u.len();
    let mut out = DVector::zeros(n);
    if n == 0 {
        return out;
    }
    out.rows_mut(0, n - nu).copy_from(&u.rows(nu, n - nu));
    out.rows_mut(n - nu, nu).copy_from(&u.rows(n - nu, nu));
    out
}

struct Solved {
    summary: SummaryRow,
    wall_time_s: f64,
    output: Option<SolveOutput64>,
}

#[allow(clippy::too_many_arguments)]
fn solve_instance(
    cfg: &RunConfig,
    problem: &ChainProblem,
    acc: Accelerator,
    horizon: usize,
    instance: usize,
    x_init: &DVector<f64>,
    u0: &DVector<f64>,
    record_trace: bool,
) -> Result<Solved, CliError> {
    let ocp = problem.ocp_with_horizon(horizon, x_init.clone())?;
    let params = cfg.solver.params(acc, horizon, record_trace);
    let t = Instant::now();
    let res = solve(&ocp, &params, u0);
    let elapsed = t.elapsed().as_secs_f64();
    Ok(match res {
        Ok(out) => Solved {
            summary: SummaryRow::new(acc, horizon, instance, &out.stats),
            wall_time_s: out.stats.wall_time.as_secs_f64(),
            output: Some(out),
        },
        Err(panoc_gn::Error::InvalidParams(m)) => return Err(CliError::Config(m)),
        Err(_) => Solved {
            summary: SummaryRow::failed(acc, horizon, instance),
            wall_time_s: elapsed,
            output: None,
        },
    })
}

fn timing(s: &Solved, start: Start, step: usize) -> TimingRow {
    TimingRow {
        accelerator: s.summary.accelerator,
        horizon: s.summary.horizon,
        instance: s.summary.instance,
        start,
        step,
        wall_time_s: s.wall_time_s,
    }
}

fn all_converged<'a>(statuses: impl IntoIterator<Item = &'a RunStatus>) -> bool {
    statuses.into_iter().all(|s| *s == RunStatus::Converged)
}

fn initial_state(cfg: &RunConfig, problem: &ChainProblem) -> DVector<f64> {
    let inputs = disturbance_inputs(cfg.instance.disturbance, cfg.seed, 0, cfg.instance.disturbance_steps);
    problem.disturb(&inputs)
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub summary: SummaryRow,
    pub trace: Vec<TraceRow>,
    pub timing: TimingRow,
    pub u: Option<DVector<f64>>,
}

impl SolveReport {
    pub fn exit_status(&self) -> ExitStatus {
        if self.summary.status == RunStatus::Converged {
            ExitStatus::Success
        } else {
            ExitStatus::SolverFailure
        }
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let (dir, f) = (&cfg.output.dir, cfg.output.format);
        Ok(vec![
            write_rows(dir, "solve_summary", f, std::slice::from_ref(&self.summary))?,
            write_rows(dir, "solve_trace", f, &self.trace)?,
            write_rows(dir, "solve_timing", f, std::slice::from_ref(&self.timing))?,
        ])
    }
}

/// One chain instance with `solver.accelerator`, starting from zero.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    cfg.validate()?;
    let problem = ChainProblem::new(cfg.chain.clone())?;
    let x_init = initial_state(cfg, &problem);
    let n = cfg.chain.horizon;
    let acc = cfg.solver.accelerator;
    let s = solve_instance(cfg, &problem, acc, n, 0, &x_init, &DVector::zeros(3 * n), true)?;
    Ok(SolveReport {
        timing: timing(&s, Start::Cold, 0),
        trace: s.output.as_ref().map_or_else(Vec::new, |o| trace_rows(acc, o)),
        u: s.output.map(|o| o.u),
        summary: s.summary,
    })
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub summaries: Vec<SummaryRow>,
    pub trace: Vec<TraceRow>,
    pub timing: Vec<TimingRow>,
}

impl CompareReport {
    pub fn exit_status(&self) -> ExitStatus {
        if all_converged(self.summaries.iter().map(|s| &s.status)) {
            ExitStatus::Success
        } else {
            ExitStatus::SolverFailure
        }
    }

    /// Trace rows of one accelerator.
    pub fn trace_of(&self, acc: Accelerator) -> Vec<&TraceRow> {
        self.trace.iter().filter(|r| r.accelerator == acc).collect()
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let (dir, f) = (&cfg.output.dir, cfg.output.format);
        Ok(vec![
            write_rows(dir, "compare_summary", f, &self.summaries)?,
            write_rows(dir, "compare_trace", f, &self.trace)?,
            write_rows(dir, "compare_timing", f, &self.timing)?,
        ])
    }
}

/// The same instance once per accelerator in `compare.accelerators`.
pub fn run_compare(cfg: &RunConfig) -> Result<CompareReport, CliError> {
    cfg.validate()?;
    let problem = ChainProblem::new(cfg.chain.clone())?;
    let x_init = initial_state(cfg, &problem);
    let n = cfg.chain.horizon;
    let mut report = CompareReport {
        summaries: Vec::new(),
        trace: Vec::new(),
        timing: Vec::new(),
    };
    for &acc in &cfg.compare.accelerators {
        let s = solve_instance(cfg, &problem, acc, n, 0, &x_init, &DVector::zeros(3 * n), true)?;
        report.timing.push(timing(&s, Start::Cold, 0));
        if let Some(o) = &s.output {
            report.trace.extend(trace_rows(acc, o));
        }
        report.summaries.push(s.summary);
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Sorted by horizon, instance, accelerator.
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<AggregateRow>,
    pub timing: Vec<TimingRow>,
    pub timing_aggregates: Vec<TimingAggregateRow>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != RunStatus::Converged).count()
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.failures() == 0 {
            ExitStatus::Success
        } else {
            ExitStatus::PartialSweepFailure
        }
    }

    pub fn median_time(&self, horizon: usize, acc: Accelerator) -> Option<f64> {
        self.timing_aggregates
            .iter()
            .find(|a| a.horizon == horizon && a.accelerator == acc)
            .map(|a| a.median_s)
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let (dir, f) = (&cfg.output.dir, cfg.output.format);
        Ok(vec![
            write_rows(dir, "sweep", f, &self.rows)?,
            write_rows(dir, "sweep_summary", f, &self.aggregates)?,
            write_rows(dir, "sweep_timing", f, &self.timing)?,
            write_rows(dir, "sweep_timing_summary", f, &self.timing_aggregates)?,
        ])
    }
}

/// Every accelerator on `instances` random initial states per horizon.
///
/// Instance `i` uses the same disturbance at every horizon. Failed solves are
/// recorded and the sweep continues.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport, CliError> {
    cfg.validate()?;
    let sw = &cfg.sweep;
    let problem = ChainProblem::new(cfg.chain.clone())?;
    let x_inits: Vec<DVector<f64>> = (0..sw.instances)
        .map(|i| problem.disturb(&random_inputs(cfg.seed, i as u64, sw.disturbance_steps)))
        .collect();
    let mut tasks = Vec::new();
    for n in sw.horizons() {
        for i in 0..sw.instances {
            for &acc in &sw.accelerators {
                tasks.push((n, i, acc));
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Solved>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let first_error: Mutex<Option<CliError>> = Mutex::new(None);
    let worker = || loop {
        let t = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(n, i, acc)) = tasks.get(t) else { break };
        match solve_instance(cfg, &problem, acc, n, i, &x_inits[i], &DVector::zeros(3 * n), false) {
            Ok(mut s) => {
                s.output = None;
                results.lock().unwrap()[t] = Some(s);
            }
            Err(e) => {
                first_error.lock().unwrap().get_or_insert(e);
                next.store(tasks.len(), Ordering::Relaxed);
            }
        }
    };
    std::thread::scope(|scope| {
        for _ in 1..sw.jobs {
            scope.spawn(worker);
        }
        worker();
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let solved: Vec<Solved> = results.into_inner().unwrap().into_iter().map(Option::unwrap).collect();

    let mut report = SweepReport {
        rows: Vec::new(),
        aggregates: Vec::new(),
        timing: solved.iter().map(|s| timing(s, Start::Cold, 0)).collect(),
        timing_aggregates: Vec::new(),
    };
    for n in sw.horizons() {
        for &acc in &sw.accelerators {
            let group: Vec<&Solved> = solved
                .iter()
                .filter(|s| s.summary.horizon == n && s.summary.accelerator == acc)
                .collect();
            let iters: Vec<f64> = group.iter().map(|s| s.summary.iterations as f64).collect();
            let times: Vec<f64> = group.iter().map(|s| s.wall_time_s).collect();
            report.aggregates.push(AggregateRow {
                horizon: n,
                accelerator: acc,
                count: group.len(),
                converged: group
                    .iter()
                    .filter(|s| s.summary.status == RunStatus::Converged)
                    .count(),
                iterations_median: median(&iters),
                iterations_p10: quantile(&iters, 0.1),
                iterations_p90: quantile(&iters, 0.9),
            });
            report.timing_aggregates.push(TimingAggregateRow {
                horizon: n,
                accelerator: acc,
                count: group.len(),
                median_s: median(&times),
                p10_s: quantile(&times, 0.1),
                p90_s: quantile(&times, 0.9),
            });
        }
    }
    report.rows = solved.into_iter().map(|s| s.summary).collect();
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct MpcReport {
    pub steps: Vec<MpcRow>,
    pub summaries: Vec<MpcSummaryRow>,
    pub timing: Vec<TimingRow>,
}

impl MpcReport {
    pub fn exit_status(&self) -> ExitStatus {
        if all_converged(self.steps.iter().map(|s| &s.status)) {
            ExitStatus::Success
        } else {
            ExitStatus::SolverFailure
        }
    }

    /// Wall times of one closed-loop run, in step order.
    pub fn times(&self, acc: Accelerator, start: Start) -> Vec<f64> {
        self.timing
            .iter()
            .filter(|t| t.accelerator == acc && t.start == start)
            .map(|t| t.wall_time_s)
            .collect()
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
        let (dir, f) = (&cfg.output.dir, cfg.output.format);
        Ok(vec![
            write_rows(dir, "mpc", f, &self.steps)?,
            write_rows(dir, "mpc_summary", f, &self.summaries)?,
            write_rows(dir, "mpc_timing", f, &self.timing)?,
        ])
    }
}

/// Disturbs the chain, then closes the loop for `mpc.duration` simulated
/// seconds with each accelerator and start mode.
///
/// The plant is the prediction model. A failed solve applies the first input
/// of its initial guess.
pub fn run_mpc(cfg: &RunConfig) -> Result<MpcReport, CliError> {
    cfg.validate()?;
    let mpc = &cfg.mpc;
    let problem = ChainProblem::new(cfg.chain.clone())?;
    let n = cfg.chain.horizon;
    let nu = 3;
    let x0 = problem.disturb(&disturbance_inputs(mpc.disturbance, cfg.seed, 0, mpc.disturbance_steps));
    let steps = (mpc.duration / cfg.chain.dt).round().max(1.0) as usize;
    let mut report = MpcReport {
        steps: Vec::new(),
        summaries: Vec::new(),
        timing: Vec::new(),
    };
    for &acc in &mpc.accelerators {
        for &start in &mpc.starts {
            let mut x = x0.clone();
            let mut guess = DVector::zeros(nu * n);
            let mut converged = 0;
            let mut total_iterations = 0;
            for step in 0..steps {
                let u0 = match start {
                    Start::Warm => guess.clone(),
                    Start::Cold => DVector::zeros(nu * n),
                };
                let s = solve_instance(cfg, &problem, acc, n, 0, &x, &u0, false)?;
                let u = s.output.as_ref().map_or(u0, |o| o.u.clone());
                let applied = [u[0], u[1], u[2]];
                report.timing.push(timing(&s, start, step));
                report.steps.push(MpcRow {
                    accelerator: acc,
                    start,
                    step,
                    time: step as f64 * cfg.chain.dt,
                    status: s.summary.status,
                    iterations: s.summary.iterations,
                    psi: s.summary.psi,
                    residual: s.summary.residual,
                    tracking_error: (&x - &problem.x_eq).norm(),
                    u_x: applied[0],
                    u_y: applied[1],
                    u_z: applied[2],
                });
                converged += usize::from(s.summary.status == RunStatus::Converged);
                total_iterations += s.summary.iterations;
                x = problem.dynamics.eval(x.as_slice(), &applied);
                guess = shift_warm_start(&u, nu);
            }
            let final_err = (&x - &problem.x_eq).norm();
            report.summaries.push(MpcSummaryRow {
                accelerator: acc,
                start,
                steps,
                converged,
                total_iterations,
                final_tracking_error: final_err,
                tracked: final_err <= mpc.tracking_tol,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_repeats_last_input() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(shift_warm_start(&u, 2).as_slice(), &[3.0, 4.0, 5.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn random_inputs_are_reproducible_and_in_range() {
        let a = random_inputs(7, 3, 5);
        assert_eq!(a, random_inputs(7, 3, 5));
        assert_ne!(a, random_inputs(7, 4, 5));
        assert_ne!(a, random_inputs(8, 3, 5));
        assert!(a.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn fixed_disturbance_repeats() {
        let d = disturbance_inputs(Disturbance::Fixed([-1.0, 1.0, 1.0]), 0, 0, 5);
        assert_eq!(d, vec![[-1.0, 1.0, 1.0]; 5]);
    }
}
