//! Adaptive step-size driver pairing two solver orders.
//!
//! Each iteration proposes a lower- and a higher-order update that share
//! their function evaluations, accepts when the scaled difference is below 1
//! and grows or shrinks the half-logSNR step accordingly. This solves one
//! sample at a time; to drive a batch with a single step sequence, take the
//! maximum of the per-sample error norms when deciding acceptance.

use crate::error::{Error, Result};
use crate::predictor::NoisePredictor;
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::solver::step::{dpm12_pair, dpm23_pair};
use crate::solver::{SolveResult, StepRecord};

/// Hard cap on controller iterations before giving up.
pub const MAX_ADAPTIVE_ITERATIONS: u64 = 10_000;

/// Which orders the controller pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptivePair {
    /// Orders 1 and 2; 2 NFE per iteration, step exponent 1/2.
    Order12,
    /// Orders 2 and 3; 3 NFE per iteration, step exponent 1/3.
    Order23,
}

impl AdaptivePair {
    pub fn nfe_per_iteration(self) -> u64 {
        match self {
            AdaptivePair::Order12 => 2,
            AdaptivePair::Order23 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveConfig<F> {
    pub rtol: F,
    pub atol: F,
    pub h_init: F,
    /// Safety factor applied to the step update; must be below 1.
    pub theta: F,
    pub pair: AdaptivePair,
}

impl<F: Real> Default for AdaptiveConfig<F> {
    fn default() -> Self {
        AdaptiveConfig {
            rtol: F::of(0.05),
            atol: F::of(0.0078),
            h_init: F::of(0.05),
            theta: F::of(0.9),
            pair: AdaptivePair::Order23,
        }
    }
}

impl<F: Real> AdaptiveConfig<F> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_init", self.h_init),
        ] {
            if !(v > F::zero()) {
                return Err(Error::parameter(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.theta > F::zero() && self.theta < F::one()) {
            return Err(Error::parameter(
                "theta",
                format!("must lie in (0, 1), got {}", self.theta),
            ));
        }
        Ok(())
    }
}

/// Integrate from `t_start` down to `eps` with the adaptive controller.
///
/// Per iteration: propose `x_lo`, `x_hi`; scale the difference by
/// `delta = max(atol, rtol * max(|x_lo|, |x_prev|))` elementwise; accept when
/// `E = ||(x_lo - x_hi)/delta||_2 / sqrt(D) <= 1` (taking the higher-order
/// state); then `h <- min(theta h E^{-1/q}, lambda_eps - lambda_s)`. The loop
/// stops once `|s - eps| <= 1e-5`, matching the reference control flow.
pub fn solve_adaptive<F: Real>(
    model: &NoisePredictor<F>,
    sched: &NoiseSchedule<F>,
    x_start: &[F],
    t_start: F,
    eps: F,
    cfg: &AdaptiveConfig<F>,
) -> Result<SolveResult<F>> {
    cfg.validate()?;
    if !(eps < t_start) {
        return Err(Error::parameter(
            "eps",
            format!("end time {eps} must be below start {t_start}"),
        ));
    }
    let lam_eps = sched.half_log_snr(eps)?;
    let mut lam_s = sched.half_log_snr(t_start)?;
    let mut s = t_start;
    // Clamp immediately so the first candidate never overshoots eps.
    let mut h = cfg.h_init.min(lam_eps - lam_s);
    let mut x = x_start.to_vec();
    let mut x_prev = x_start.to_vec();
    let dim = F::of(x.len() as f64);
    let exponent = -F::one() / F::of(cfg.pair.nfe_per_iteration() as f64);

    let mut p = model.counted();
    let mut accepted = 0u64;
    let mut rejected = 0u64;
    let mut trace = Vec::new();
    let stop_gap = F::of(1e-5);

    let mut iterations = 0u64;
    while (s - eps).abs() > stop_gap {
        iterations += 1;
        if iterations > MAX_ADAPTIVE_ITERATIONS {
            return Err(Error::NonTermination {
                max_iterations: MAX_ADAPTIVE_ITERATIONS,
            });
        }
        let lam_t = lam_s + h;
        let t = sched.time_of_lambda(lam_t)?;
        let (x_lo, x_hi) = match cfg.pair {
            AdaptivePair::Order12 => dpm12_pair(&mut p, sched, &x, s, t)?,
            AdaptivePair::Order23 => dpm23_pair(&mut p, sched, &x, s, t)?,
        };
        let mut err_sq = F::zero();
        for i in 0..x.len() {
            let delta = cfg.atol.max(cfg.rtol * x_lo[i].abs().max(x_prev[i].abs()));
            let e = (x_lo[i] - x_hi[i]) / delta;
            err_sq = err_sq + e * e;
        }
        let err = (err_sq / dim).sqrt();
        if err <= F::one() {
            x_prev = x_lo;
            x = x_hi;
            s = t;
            lam_s = lam_t;
            accepted += 1;
            trace.push(StepRecord {
                t,
                lambda: lam_t,
                h,
                order: cfg.pair.nfe_per_iteration() as u8,
            });
        } else {
            rejected += 1;
        }
        h = (cfg.theta * h * err.powf(exponent)).min(lam_eps - lam_s);
    }

    Ok(SolveResult {
        final_state: x,
        nfe: p.nfe(),
        accepted_steps: accepted,
        rejected_steps: rejected,
        trace,
    })
}
