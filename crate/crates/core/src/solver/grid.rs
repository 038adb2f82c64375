//! Time grids in the half-logSNR domain and step plans for fixed NFE budgets.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::schedule::NoiseSchedule;

/// `M + 1` strictly decreasing times from `t_0 = T` down to `t_M = eps`,
/// together with the corresponding strictly increasing half-logSNR values.
#[derive(Debug, Clone)]
pub struct TimeGrid<F> {
    times: Vec<F>,
    lambdas: Vec<F>,
}

impl<F: Real> TimeGrid<F> {
    /// Validating constructor; times must strictly decrease and lambdas
    /// strictly increase, one lambda per time.
    pub fn new(times: Vec<F>, lambdas: Vec<F>) -> Result<Self> {
        if times.len() != lambdas.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: lambdas.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::parameter("times", "a grid needs at least 2 points"));
        }
        if times.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::parameter("times", "must be strictly decreasing"));
        }
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::parameter("lambdas", "must be strictly increasing"));
        }
        Ok(TimeGrid { times, lambdas })
    }

    /// Uniform split of `[lambda(t_start), lambda(eps)]` into `m` segments;
    /// the endpoint times are kept exact rather than roundtripped.
    pub fn uniform_lambda(sched: &NoiseSchedule<F>, t_start: F, eps: F, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::parameter("m", "need at least one segment"));
        }
        if !(eps < t_start) {
            return Err(Error::parameter(
                "eps",
                format!("end time {eps} must be below start {t_start}"),
            ));
        }
        let lam_start = sched.half_log_snr(t_start)?;
        let lam_end = sched.half_log_snr(eps)?;
        let mut times = Vec::with_capacity(m + 1);
        let mut lambdas = Vec::with_capacity(m + 1);
        times.push(t_start);
        lambdas.push(lam_start);
        for i in 1..m {
            let frac = F::of(i as f64 / m as f64);
            let lam = lam_start + frac * (lam_end - lam_start);
            times.push(sched.time_of_lambda(lam)?);
            lambdas.push(lam);
        }
        times.push(eps);
        lambdas.push(lam_end);
        TimeGrid::new(times, lambdas)
    }

    /// Grid through the given strictly increasing lambda values, with times
    /// recovered through the schedule's analytic inverse. Lets two schedules
    /// share one lambda discretization.
    pub fn from_lambdas(sched: &NoiseSchedule<F>, lambdas: &[F]) -> Result<Self> {
        let times = lambdas
            .iter()
            .map(|&lam| sched.time_of_lambda(lam))
            .collect::<Result<Vec<F>>>()?;
        TimeGrid::new(times, lambdas.to_vec())
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn lambdas(&self) -> &[F] {
        &self.lambdas
    }

    /// `h_i = lambda_i - lambda_{i-1} > 0` for segment `i` in `1..=segments()`.
    pub fn step_width(&self, i: usize) -> F {
        self.lambdas[i] - self.lambdas[i - 1]
    }

    pub fn max_step(&self) -> F {
        (1..self.times.len())
            .map(|i| self.step_width(i))
            .fold(F::zero(), |a, b| a.max(b))
    }
}

/// Per-segment solver orders for a fixed-budget solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepPlan {
    orders: Vec<u8>,
}

impl StepPlan {
    pub fn from_orders(orders: Vec<u8>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::EmptyPlan);
        }
        if orders.iter().any(|&k| !(1..=3).contains(&k)) {
            return Err(Error::parameter("orders", "every order must be 1, 2 or 3"));
        }
        Ok(StepPlan { orders })
    }

    /// Spend a budget of exactly `k` function evaluations.
    ///
    /// With `R = k mod 3` and `M = floor(k/3) + 1` segments: `R = 0` ends
    /// with one order-2 then one order-1 step; `R = 1` ends with one order-1
    /// step; `R = 2` ends with one order-2 step; all earlier segments are
    /// order 3. Degenerate budgets take the single highest-order step that
    /// fits: `k = 1 -> [1]`, `k = 2 -> [2]`.
    pub fn budget(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::parameter("k", "budget must be at least 1"));
        }
        let orders = match k {
            1 => vec![1],
            2 => vec![2],
            _ => {
                let m = (k / 3 + 1) as usize;
                let mut orders;
                match k % 3 {
                    0 => {
                        orders = vec![3u8; m - 2];
                        orders.push(2);
                        orders.push(1);
                    }
                    1 => {
                        orders = vec![3u8; m - 1];
                        orders.push(1);
                    }
                    _ => {
                        orders = vec![3u8; m - 1];
                        orders.push(2);
                    }
                }
                orders
            }
        };
        debug_assert_eq!(orders.iter().map(|&o| o as u64).sum::<u64>(), k);
        Ok(StepPlan { orders })
    }

    /// `[k] * m`: every segment at the same order.
    pub fn repeated(order: u8, m: usize) -> Result<Self> {
        Self::from_orders(vec![order; m])
    }

    pub fn orders(&self) -> &[u8] {
        &self.orders
    }

    pub fn segments(&self) -> usize {
        self.orders.len()
    }

    pub fn total_nfe(&self) -> u64 {
        self.orders.iter().map(|&o| o as u64).sum()
    }
}
