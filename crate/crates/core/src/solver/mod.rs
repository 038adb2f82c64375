//! Exponential-integrator solvers in the half-logSNR domain.
//!
//! The fixed drivers split `[lambda_T, lambda_eps]` uniformly and apply one
//! solver step per segment with the order given by a [`StepPlan`]; the
//! adaptive driver pairs two orders and controls the step from their
//! disagreement. The end time is `eps > 0` and no extra denoising step is
//! appended: integration runs from `T` to `eps` and stops.

mod adaptive;
mod grid;
mod phi;
mod step;

pub use adaptive::{solve_adaptive, AdaptiveConfig, AdaptivePair, MAX_ADAPTIVE_ITERATIONS};
pub use grid::{StepPlan, TimeGrid};
pub use phi::phi;
pub use step::{dpm1_step, dpm2_step, dpm3_step};

use crate::error::{Error, Result};
use crate::predictor::NoisePredictor;
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use step::endpoint;

/// One accepted solver step, for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<F> {
    /// Destination time of the step.
    pub t: F,
    /// Destination half-logSNR.
    pub lambda: F,
    /// Half-logSNR width the step covered.
    pub h: F,
    /// Solver order used (for adaptive runs, the NFE cost of the pair).
    pub order: u8,
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveResult<F> {
    pub final_state: Vec<F>,
    /// Function evaluations actually spent (the predictor counter delta).
    pub nfe: u64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub trace: Vec<StepRecord<F>>,
}

impl<F: Real> SolveResult<F> {
    /// Largest half-logSNR step taken.
    pub fn h_max(&self) -> F {
        self.trace
            .iter()
            .map(|r| r.h)
            .fold(F::zero(), |a, b| a.max(b))
    }
}

/// All states visited by a fixed-grid solve, including the initial one.
#[derive(Debug, Clone)]
pub struct GridRun<F> {
    pub iterates: Vec<Vec<F>>,
    pub nfe: u64,
}

impl<F: Real> GridRun<F> {
    pub fn final_state(&self) -> &[F] {
        self.iterates
            .last()
            .expect("grid run holds at least the initial state")
    }
}

/// Step through an explicit grid with one order per segment, keeping every
/// iterate. `orders.len()` must equal `grid.segments()`.
pub fn solve_on_grid<F: Real>(
    model: &NoisePredictor<F>,
    sched: &NoiseSchedule<F>,
    x_start: &[F],
    grid: &TimeGrid<F>,
    orders: &[u8],
) -> Result<GridRun<F>> {
    if orders.len() != grid.segments() {
        return Err(Error::LengthMismatch {
            left: orders.len(),
            right: grid.segments(),
        });
    }
    let times = grid.times();
    let mut p = model.counted();
    let mut iterates = Vec::with_capacity(orders.len() + 1);
    iterates.push(x_start.to_vec());
    let mut x = x_start.to_vec();
    for (i, &order) in orders.iter().enumerate() {
        let (s, t) = (times[i], times[i + 1]);
        x = match order {
            1 => {
                let from = endpoint(sched, s)?;
                let to = endpoint(sched, t)?;
                let eps_s = p.eval_counted(&x, s)?;
                step::order1_update(&from, &to, &x, &eps_s)
            }
            2 => dpm2_step(&mut p, sched, &x, s, t, F::of(0.5))?,
            3 => dpm3_step(&mut p, sched, &x, s, t, F::of(1.0 / 3.0), F::of(2.0 / 3.0))?,
            k => return Err(Error::parameter("orders", format!("unsupported order {k}"))),
        };
        iterates.push(x.clone());
    }
    Ok(GridRun {
        iterates,
        nfe: p.nfe(),
    })
}

/// Fixed-budget solve from `t_start` down to `eps` over a uniform
/// half-logSNR grid with one segment per plan entry.
pub fn solve_fixed<F: Real>(
    model: &NoisePredictor<F>,
    sched: &NoiseSchedule<F>,
    x_start: &[F],
    t_start: F,
    eps: F,
    plan: &StepPlan,
) -> Result<SolveResult<F>> {
    let grid = TimeGrid::uniform_lambda(sched, t_start, eps, plan.segments())?;
    let run = solve_on_grid(model, sched, x_start, &grid, plan.orders())?;
    let trace = plan
        .orders()
        .iter()
        .enumerate()
        .map(|(i, &order)| StepRecord {
            t: grid.times()[i + 1],
            lambda: grid.lambdas()[i + 1],
            h: grid.step_width(i + 1),
            order,
        })
        .collect();
    Ok(SolveResult {
        final_state: run.iterates.last().expect("nonempty").clone(),
        nfe: run.nfe,
        accepted_steps: plan.segments() as u64,
        rejected_steps: 0,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::ddim_step;
    use crate::oracle::{gaussian_flow_exact, rms_error};
    use crate::predictor::GaussianProblem;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::default()
    }

    #[test]
    fn order1_plan_reproduces_ddim_trajectory() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.5, -1.0], 0.8).unwrap();
        let model = NoisePredictor::gaussian(&sched, &prob);
        let x_t = vec![1.3, -0.2];
        let m = 12;
        let plan = StepPlan::repeated(1, m).unwrap();
        let r = solve_fixed(&model, &sched, &x_t, 1.0, 1e-3, &plan).unwrap();
        assert_eq!(r.nfe, m as u64);

        let grid = TimeGrid::uniform_lambda(&sched, 1.0, 1e-3, m).unwrap();
        let mut p = model.counted();
        let mut x = x_t.clone();
        for i in 0..m {
            x = ddim_step(&mut p, &sched, &x, grid.times()[i], grid.times()[i + 1]).unwrap();
        }
        assert!(rms_error(&r.final_state, &x).unwrap() <= 1e-12);
    }

    /// On the stationary toy the exact solution is the identity. Nine
    /// evaluations resolve it to 1e-3 once the per-segment lambda widths are
    /// inside the asymptotic regime (about 0.5 here); over the full
    /// [1e-3, 1] span a 4-segment grid is far too coarse for that bound.
    #[test]
    fn stationary_toy_budget9_hits_identity() {
        let sched = sched();
        let prob = GaussianProblem::standard(4);
        let model = NoisePredictor::gaussian(&sched, &prob);
        let x_t = crate::rng::standard_normal_vec(17, 0, 4);
        let plan = StepPlan::budget(9).unwrap();
        assert_eq!(plan.orders(), &[3, 3, 2, 1]);
        let r = solve_fixed(&model, &sched, &x_t, 0.1, 0.01, &plan).unwrap();
        let err = rms_error(&r.final_state, &x_t).unwrap();
        assert!(err <= 1e-3, "stationary error {err}");
        assert_eq!(r.nfe, 9);
    }

    #[test]
    fn reported_nfe_matches_counter_delta() {
        let sched = sched();
        let model = NoisePredictor::gaussian(&sched, &GaussianProblem::standard(3));
        let x_t = vec![0.1, 0.2, 0.3];
        for k in [1u64, 2, 5, 9, 14] {
            let plan = StepPlan::budget(k).unwrap();
            let r = solve_fixed(&model, &sched, &x_t, 1.0, 1e-3, &plan).unwrap();
            assert_eq!(r.nfe, k);
            assert_eq!(r.accepted_steps, plan.segments() as u64);
        }
    }

    #[test]
    fn solve_fixed_accuracy_improves_with_budget() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.3, 0.9, -0.7], 0.5).unwrap();
        let model = NoisePredictor::gaussian(&sched, &prob);
        let x_t = vec![0.4, -1.1, 0.8];
        let want = gaussian_flow_exact(&sched, &prob, &x_t, 1.0, 1e-3).unwrap();
        let err_at = |k: u64| {
            let r = solve_fixed(
                &model,
                &sched,
                &x_t,
                1.0,
                1e-3,
                &StepPlan::budget(k).unwrap(),
            )
            .unwrap();
            rms_error(&r.final_state, &want).unwrap()
        };
        let e15 = err_at(15);
        let e30 = err_at(30);
        assert!(e15 < 5e-2, "budget-15 error {e15}");
        assert!(e30 < e15 / 4.0, "budget-30 error {e30} vs budget-15 {e15}");
    }

    #[test]
    fn grid_and_orders_must_agree() {
        let sched = sched();
        let model = NoisePredictor::zero();
        let grid = TimeGrid::uniform_lambda(&sched, 1.0, 1e-3, 3).unwrap();
        assert!(solve_on_grid(&model, &sched, &[1.0], &grid, &[3, 3]).is_err());
        assert!(solve_on_grid(&model, &sched, &[1.0], &grid, &[3, 3, 4]).is_err());
    }
}
