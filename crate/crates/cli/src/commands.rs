//! The four harness commands: convergence sweeps, method comparison tables,
//! sampling runs and budget-plan inspection. All tabular output lands in CSV
//! with the schema `solver,schedule,problem,nfe,steps,h_max,rms_error,seed`,
//! aggregated in fixed index order so results are byte-identical for a given
//! (config, seed) no matter how many worker threads run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use dpmkit_core::baseline::{solve_baseline, BaselineKind, BaselineMethod};
use dpmkit_core::oracle::{
    estimate_order, gaussian_flow_exact, reference_solve, rms_error, ErrorReport,
};
use dpmkit_core::predictor::NoisePredictor;
use dpmkit_core::rng::standard_normal_vec;
use dpmkit_core::schedule::NoiseSchedule;
use dpmkit_core::solver::{
    dpm1_step, dpm2_step, dpm3_step, solve_adaptive, solve_fixed, SolveResult, StepPlan, TimeGrid,
};

use crate::config::{RunConfig, ScheduleName, SolverConfig};
use crate::CliError;

/// Fine-step count backing the reference solution for mixture problems.
const REFERENCE_STEPS: usize = 20_000;

/// Worker-thread cap: `DPMKIT_THREADS` when set, otherwise the machine's
/// available parallelism.
pub fn max_threads() -> Result<usize, CliError> {
    match std::env::var("DPMKIT_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!(
                "DPMKIT_THREADS must be a positive integer, got {s:?}"
            ))),
        },
        Err(std::env::VarError::NotPresent) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
        Err(e) => Err(CliError::Config(format!(
            "DPMKIT_THREADS is not valid unicode: {e}"
        ))),
    }
}

/// Apply `f` to every item on up to `threads` workers, returning results in
/// item order. The first failure (by item index) wins, so errors are as
/// deterministic as successes.
fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R, CliError> + Sync,
{
    let threads = threads.min(items.len()).max(1);
    let cursor = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<R, CliError>)>();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let f = &f;
            let cursor = &cursor;
            scope.spawn(move || loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                if tx.send((i, f(i, &items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });
    let mut tagged: Vec<(usize, Result<R, CliError>)> = rx.into_iter().collect();
    tagged.sort_by_key(|(i, _)| *i);
    tagged.into_iter().map(|(_, r)| r).collect()
}

/// 17 significant digits, enough to roundtrip an f64 exactly.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
struct Row {
    solver: String,
    schedule: &'static str,
    problem: &'static str,
    nfe: u64,
    steps: u64,
    h_max: f64,
    rms_error: f64,
    seed: u64,
}

fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut out = String::from("solver,schedule,problem,nfe,steps,h_max,rms_error,seed\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.solver,
            r.schedule,
            r.problem,
            r.nfe,
            r.steps,
            fmt_float(r.h_max),
            fmt_float(r.rms_error),
            r.seed
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// A fixed-grid method the sweep commands can run.
#[derive(Debug, Clone, Copy)]
enum Method {
    Dpm { order: u8, r1: f64, r2: f64 },
    Baseline(BaselineKind),
}

impl Method {
    fn name(&self) -> String {
        match self {
            Method::Dpm { order, .. } => format!("dpm{order}"),
            Method::Baseline(kind) => kind.name().to_string(),
        }
    }

    fn nfe_per_step(&self) -> u64 {
        match self {
            Method::Dpm { order, .. } => *order as u64,
            Method::Baseline(kind) => kind.nfe_per_step(),
        }
    }

    /// Solve one initial state and measure it against the oracle state.
    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        model: &NoisePredictor<f64>,
        sched: &NoiseSchedule<f64>,
        x_start: &[f64],
        t_start: f64,
        eps: f64,
        m: usize,
        oracle: &[f64],
    ) -> Result<ErrorReport<f64>, CliError> {
        let r = self.run(model, sched, x_start, t_start, eps, m)?;
        Ok(ErrorReport {
            solver_name: self.name(),
            nfe: r.nfe,
            h_max: r.h_max(),
            rms_error: rms_error(&r.final_state, oracle)?,
        })
    }

    fn run(
        &self,
        model: &NoisePredictor<f64>,
        sched: &NoiseSchedule<f64>,
        x_start: &[f64],
        t_start: f64,
        eps: f64,
        m: usize,
    ) -> Result<SolveResult<f64>, CliError> {
        match self {
            Method::Dpm { order, r1, r2 } => {
                let grid = TimeGrid::uniform_lambda(sched, t_start, eps, m)?;
                let mut p = model.counted();
                let mut x = x_start.to_vec();
                for i in 0..m {
                    let (s, t) = (grid.times()[i], grid.times()[i + 1]);
                    x = match order {
                        1 => dpm1_step(&mut p, sched, &x, s, t)?,
                        2 => dpm2_step(&mut p, sched, &x, s, t, *r1)?,
                        _ => dpm3_step(&mut p, sched, &x, s, t, *r1, *r2)?,
                    };
                }
                Ok(SolveResult {
                    final_state: x,
                    nfe: p.nfe(),
                    accepted_steps: m as u64,
                    rejected_steps: 0,
                    trace: (1..=m)
                        .map(|i| dpmkit_core::solver::StepRecord {
                            t: grid.times()[i],
                            lambda: grid.lambdas()[i],
                            h: grid.step_width(i),
                            order: *order,
                        })
                        .collect(),
                })
            }
            Method::Baseline(kind) => Ok(solve_baseline(
                BaselineMethod::paired(*kind),
                model,
                sched,
                x_start,
                t_start,
                eps,
                m,
            )?),
        }
    }
}

fn method_from_solver(solver: &SolverConfig) -> Result<Method, CliError> {
    Ok(match solver {
        SolverConfig::Dpm1 => Method::Dpm {
            order: 1,
            r1: 0.5,
            r2: 2.0 / 3.0,
        },
        SolverConfig::Dpm2 { r1 } => Method::Dpm {
            order: 2,
            r1: *r1,
            r2: 2.0 / 3.0,
        },
        SolverConfig::Dpm3 { r1, r2 } => Method::Dpm {
            order: 3,
            r1: *r1,
            r2: *r2,
        },
        SolverConfig::Ddim => Method::Baseline(BaselineKind::Ddim),
        SolverConfig::Rk2T => Method::Baseline(BaselineKind::Rk2T),
        SolverConfig::Rk2Lambda => Method::Baseline(BaselineKind::Rk2Lambda),
        SolverConfig::Rk3T => Method::Baseline(BaselineKind::Rk3T),
        SolverConfig::Rk3Lambda => Method::Baseline(BaselineKind::Rk3Lambda),
        SolverConfig::Fast | SolverConfig::Adaptive { .. } => return Err(CliError::Config(
            "convergence sweeps need a fixed-order solver (dpm1/dpm2/dpm3, ddim or an rk variant)"
                .into(),
        )),
    })
}

/// Ground truth at the end time for one initial state: the closed-form flow
/// for Gaussian problems, a 20k-step reference integration otherwise.
fn oracle_state(
    cfg: &RunConfig,
    model: &NoisePredictor<f64>,
    sched: &NoiseSchedule<f64>,
    x_start: &[f64],
    t_start: f64,
    eps: f64,
) -> Result<Vec<f64>, CliError> {
    if let Some(prob) = cfg.gaussian_problem() {
        Ok(gaussian_flow_exact(sched, &prob, x_start, t_start, eps)?)
    } else {
        Ok(reference_solve(
            model,
            sched,
            x_start,
            t_start,
            eps,
            REFERENCE_STEPS,
        )?)
    }
}

fn initial_states(cfg: &RunConfig) -> Vec<Vec<f64>> {
    (0..cfg.n_samples)
        .map(|i| standard_normal_vec(cfg.seed, i as u64, cfg.effective_dim()))
        .collect()
}

/// `convergence`: sweep the segment counts in `m_list` with the configured
/// solver, one CSV row per M with the RMS error against the oracle averaged
/// over the samples; prints the fitted order at the end.
pub fn run_convergence(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let sched = cfg.build_schedule();
    let model = cfg.build_predictor(&sched)?;
    let method = method_from_solver(&cfg.solver)?;
    let t_start = cfg.t_start_or_default();
    let eps = cfg.eps_for_convergence();
    let threads = max_threads()?;

    let states = initial_states(cfg);
    let oracles = parallel_map(&states, threads, |_, x| {
        oracle_state(cfg, &model, &sched, x, t_start, eps)
    })?;

    // One task per (M, sample), aggregated per M afterwards.
    let tasks: Vec<(usize, usize)> = cfg
        .m_list
        .iter()
        .flat_map(|&m| (0..cfg.n_samples).map(move |s| (m, s)))
        .collect();
    let solved = parallel_map(&tasks, threads, |_, &(m, s)| {
        method.measure(&model, &sched, &states[s], t_start, eps, m, &oracles[s])
    })?;

    let mut rows = Vec::with_capacity(cfg.m_list.len());
    for (i, &m) in cfg.m_list.iter().enumerate() {
        let chunk = &solved[i * cfg.n_samples..(i + 1) * cfg.n_samples];
        let mean_err = chunk.iter().map(|r| r.rms_error).sum::<f64>() / chunk.len() as f64;
        rows.push(Row {
            solver: chunk[0].solver_name.clone(),
            schedule: cfg.schedule_name(),
            problem: cfg.problem_name(),
            nfe: chunk[0].nfe,
            steps: m as u64,
            h_max: chunk[0].h_max,
            rms_error: mean_err,
            seed: cfg.seed,
        });
    }

    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("convergence.csv"));
    write_csv(&path, &rows)?;

    let hs: Vec<f64> = rows.iter().map(|r| r.h_max).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.rms_error).collect();
    match estimate_order(&hs, &errs) {
        Ok(slope) => println!("fitted order for {}: {:.3}", method.name(), slope),
        Err(e) => println!("fitted order for {}: not available ({e})", method.name()),
    }
    Ok(path)
}

/// The methods `compare` tabulates. DPM-1 rides along with the seven
/// headline methods so the table itself witnesses the DDIM identity.
fn compare_methods() -> Vec<Method> {
    vec![
        Method::Baseline(BaselineKind::Rk2T),
        Method::Baseline(BaselineKind::Rk2Lambda),
        Method::Dpm {
            order: 2,
            r1: 0.5,
            r2: 2.0 / 3.0,
        },
        Method::Baseline(BaselineKind::Rk3T),
        Method::Baseline(BaselineKind::Rk3Lambda),
        Method::Dpm {
            order: 3,
            r1: 1.0 / 3.0,
            r2: 2.0 / 3.0,
        },
        Method::Baseline(BaselineKind::Ddim),
        Method::Dpm {
            order: 1,
            r1: 0.5,
            r2: 2.0 / 3.0,
        },
    ]
}

/// `compare`: run every method at each NFE in `nfe_list`; one row per
/// (method, NFE) with the measured NFE and the oracle error.
pub fn run_compare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let sched = cfg.build_schedule();
    let model = cfg.build_predictor(&sched)?;
    let t_start = cfg.t_start_or_default();
    let threads = max_threads()?;
    let states = initial_states(cfg);
    let methods = compare_methods();

    // Oracles depend on eps, which follows the per-budget default rule.
    let eps_values: Vec<f64> = cfg
        .nfe_list
        .iter()
        .map(|&n| cfg.eps_for_budget(n))
        .collect();
    let mut unique_eps: Vec<f64> = eps_values.clone();
    unique_eps.sort_by(f64::total_cmp);
    unique_eps.dedup();
    let oracle_tasks: Vec<(f64, usize)> = unique_eps
        .iter()
        .flat_map(|&e| (0..cfg.n_samples).map(move |s| (e, s)))
        .collect();
    let oracle_states = parallel_map(&oracle_tasks, threads, |_, &(e, s)| {
        oracle_state(cfg, &model, &sched, &states[s], t_start, e)
    })?;
    let oracle_for = |eps: f64, s: usize| -> &Vec<f64> {
        let ei = unique_eps
            .iter()
            .position(|&e| e == eps)
            .expect("eps was registered");
        &oracle_states[ei * cfg.n_samples + s]
    };

    let tasks: Vec<(usize, u64, f64)> = (0..methods.len())
        .flat_map(|mi| {
            cfg.nfe_list
                .iter()
                .zip(&eps_values)
                .map(move |(&n, &e)| (mi, n, e))
        })
        .collect();
    let results = parallel_map(&tasks, threads, |_, &(mi, nfe_target, eps)| {
        let method = methods[mi];
        let m = (nfe_target / method.nfe_per_step()).max(1) as usize;
        let mut nfe = 0;
        let mut h_max: f64 = 0.0;
        let mut err_sum = 0.0;
        for (s, state) in states.iter().enumerate() {
            let report =
                method.measure(&model, &sched, state, t_start, eps, m, oracle_for(eps, s))?;
            nfe = report.nfe;
            h_max = h_max.max(report.h_max);
            err_sum += report.rms_error;
        }
        Ok(Row {
            solver: method.name(),
            schedule: cfg.schedule_name(),
            problem: cfg.problem_name(),
            nfe,
            steps: m as u64,
            h_max,
            rms_error: err_sum / cfg.n_samples as f64,
            seed: cfg.seed,
        })
    })?;

    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("compare.csv"));
    write_csv(&path, &results)?;
    Ok(path)
}

/// `sample`: draw `n_samples` initial states and solve each with the
/// fixed-budget plan (`fast`) or the adaptive controller; final states go to
/// CSV, per-sample accounting to stdout and a trailing summary comment.
pub fn run_sample(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let sched = cfg.build_schedule();
    let model = cfg.build_predictor(&sched)?;
    let t_start = cfg.t_start_or_default();
    let threads = max_threads()?;
    let states = initial_states(cfg);

    enum Mode {
        Fast(StepPlan),
        Adaptive(dpmkit_core::solver::AdaptiveConfig<f64>),
    }
    let (mode, eps) = match &cfg.solver {
        SolverConfig::Fast => (
            Mode::Fast(StepPlan::budget(cfg.nfe)?),
            cfg.eps_for_budget(cfg.nfe),
        ),
        SolverConfig::Adaptive { .. } => {
            let acfg = cfg.build_adaptive_config().expect("adaptive solver config");
            acfg.validate()?;
            // Adaptive runs spend well over 15 NFE at the default tolerances.
            (Mode::Adaptive(acfg), cfg.eps.unwrap_or(1e-4))
        }
        _ => {
            return Err(CliError::Config(
                "sample needs solver \"fast\" (budgeted plan) or \"adaptive\"".into(),
            ))
        }
    };

    let results = parallel_map(&states, threads, |_, x| {
        Ok(match &mode {
            Mode::Fast(plan) => solve_fixed(&model, &sched, x, t_start, eps, plan)?,
            Mode::Adaptive(acfg) => solve_adaptive(&model, &sched, x, t_start, eps, acfg)?,
        })
    })?;

    let dim = cfg.effective_dim();
    let mut out = String::new();
    write!(out, "sample").expect("write to String");
    for d in 0..dim {
        write!(out, ",x{d}").expect("write to String");
    }
    out.push('\n');
    for (i, r) in results.iter().enumerate() {
        write!(out, "{i}").expect("write to String");
        for v in &r.final_state {
            write!(out, ",{}", fmt_float(*v)).expect("write to String");
        }
        out.push('\n');
    }
    let (nfe, acc, rej) = results.iter().fold((0, 0, 0), |(n, a, r), res| {
        (n + res.nfe, a + res.accepted_steps, r + res.rejected_steps)
    });
    writeln!(out, "# summary: nfe={nfe} accepted={acc} rejected={rej}").expect("write to String");

    let path = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("samples.csv"));
    std::fs::write(&path, out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    for (i, r) in results.iter().enumerate() {
        println!(
            "sample {i}: nfe={} accepted={} rejected={}",
            r.nfe, r.accepted_steps, r.rejected_steps
        );
    }
    println!("summary: nfe={nfe} accepted={acc} rejected={rej}");
    Ok(path)
}

/// `plan`: show the order sequence for an NFE budget and the uniform
/// half-logSNR segment boundaries it would run over.
pub fn run_plan(
    nfe: u64,
    schedule: ScheduleName,
    t_start: Option<f64>,
    eps: Option<f64>,
) -> Result<String, CliError> {
    if nfe < 1 {
        return Err(CliError::Config("--nfe must be at least 1".into()));
    }
    let sched = match schedule {
        ScheduleName::Linear => NoiseSchedule::linear(0.1, 20.0),
        ScheduleName::Cosine => NoiseSchedule::cosine(0.008),
    };
    let t_start = t_start.unwrap_or_else(|| sched.t_max());
    let eps = eps.unwrap_or(if nfe <= 15 { 1e-3 } else { 1e-4 });
    let plan = StepPlan::budget(nfe)?;
    let grid = TimeGrid::uniform_lambda(&sched, t_start, eps, plan.segments())?;

    let mut out = String::new();
    let orders: Vec<String> = plan.orders().iter().map(|o| o.to_string()).collect();
    writeln!(out, "{}", orders.join(" ")).expect("write to String");
    writeln!(out, "total nfe: {}", plan.total_nfe()).expect("write to String");
    writeln!(out, "segments ({}):", plan.segments()).expect("write to String");
    for i in 0..plan.segments() {
        writeln!(
            out,
            "  t {:>12.6e} -> {:>12.6e}   lambda {:+.6} -> {:+.6}   order {}",
            grid.times()[i],
            grid.times()[i + 1],
            grid.lambdas()[i],
            grid.lambdas()[i + 1],
            plan.orders()[i]
        )
        .expect("write to String");
    }
    Ok(out)
}
