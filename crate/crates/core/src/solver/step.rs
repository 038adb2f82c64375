//! Single steps of the exponential-integrator solvers, orders 1 to 3.
//!
//! Every step advances from time `s` to an earlier time `t` over the
//! half-logSNR gap `h = lambda(t) - lambda(s) > 0`. The linear part of the
//! ODE is applied exactly through the `alpha_t / alpha_s` factor; only the
//! exponentially weighted integral of the predictor is approximated. All
//! `e^h - 1` factors go through `expm1` (or the series-backed `phi`).

use crate::error::{Error, Result};
use crate::predictor::CountedPredictor;
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::solver::phi::phi;

/// Schedule data at one grid point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Endpoint<F> {
    pub t: F,
    pub alpha: F,
    pub sigma: F,
    pub lambda: F,
}

pub(crate) fn endpoint<F: Real>(sched: &NoiseSchedule<F>, t: F) -> Result<Endpoint<F>> {
    let (alpha, sigma) = sched.alpha_sigma(t)?;
    Ok(Endpoint {
        t,
        alpha,
        sigma,
        lambda: sched.half_log_snr(t)?,
    })
}

fn endpoint_at_lambda<F: Real>(sched: &NoiseSchedule<F>, lambda: F) -> Result<Endpoint<F>> {
    let t = sched.time_of_lambda(lambda)?;
    let (alpha, sigma) = sched.alpha_sigma(t)?;
    Ok(Endpoint {
        t,
        alpha,
        sigma,
        lambda,
    })
}

/// `ratio * x - coef * eps` elementwise.
fn update2<F: Real>(ratio: F, x: &[F], coef: F, eps: &[F]) -> Vec<F> {
    x.iter()
        .zip(eps)
        .map(|(&xi, &ei)| ratio * xi - coef * ei)
        .collect()
}

/// `ratio * x - c1 * eps - c2 * d` elementwise.
fn update3<F: Real>(ratio: F, x: &[F], c1: F, eps: &[F], c2: F, d: &[F]) -> Vec<F> {
    x.iter()
        .zip(eps.iter().zip(d))
        .map(|(&xi, (&ei, &di))| ratio * xi - c1 * ei - c2 * di)
        .collect()
}

// ---------------------------------------------------------------------------
// kernels operating on precomputed endpoint data and predictor values; the
// adaptive driver uses these directly so the two orders of a pair can share
// function evaluations.
// ---------------------------------------------------------------------------

pub(crate) fn order1_update<F: Real>(
    from: &Endpoint<F>,
    to: &Endpoint<F>,
    x: &[F],
    eps_s: &[F],
) -> Vec<F> {
    let h = to.lambda - from.lambda;
    update2(to.alpha / from.alpha, x, to.sigma * h.exp_m1(), eps_s)
}

/// Intermediate point of the order-2 step: endpoint at `lambda_s + r1 h` and
/// the state proposed there from the evaluation at `s`.
pub(crate) fn order2_midpoint<F: Real>(
    sched: &NoiseSchedule<F>,
    from: &Endpoint<F>,
    to: &Endpoint<F>,
    r1: F,
    x: &[F],
    eps_s: &[F],
) -> Result<(Endpoint<F>, Vec<F>)> {
    let h = to.lambda - from.lambda;
    let mid = endpoint_at_lambda(sched, from.lambda + r1 * h)?;
    let u = update2(
        mid.alpha / from.alpha,
        x,
        mid.sigma * (r1 * h).exp_m1(),
        eps_s,
    );
    Ok((mid, u))
}

pub(crate) fn order2_update<F: Real>(
    from: &Endpoint<F>,
    to: &Endpoint<F>,
    r1: F,
    x: &[F],
    eps_s: &[F],
    eps_mid: &[F],
) -> Vec<F> {
    let h = to.lambda - from.lambda;
    let growth = h.exp_m1();
    let d: Vec<F> = eps_mid.iter().zip(eps_s).map(|(&a, &b)| a - b).collect();
    update3(
        to.alpha / from.alpha,
        x,
        to.sigma * growth,
        eps_s,
        to.sigma / (F::of(2.0) * r1) * growth,
        &d,
    )
}

/// Second intermediate point of the order-3 step, corrected by the first
/// difference `d1 = eps(u1, s1) - eps(x, s)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn order3_second_midpoint<F: Real>(
    sched: &NoiseSchedule<F>,
    from: &Endpoint<F>,
    to: &Endpoint<F>,
    r1: F,
    r2: F,
    x: &[F],
    eps_s: &[F],
    d1: &[F],
) -> Result<(Endpoint<F>, Vec<F>)> {
    let h = to.lambda - from.lambda;
    let mid = endpoint_at_lambda(sched, from.lambda + r2 * h)?;
    let phi1m1 = phi(1, r2 * h)? - F::one();
    let u2 = update3(
        mid.alpha / from.alpha,
        x,
        mid.sigma * (r2 * h).exp_m1(),
        eps_s,
        mid.sigma * r2 / r1 * phi1m1,
        d1,
    );
    Ok((mid, u2))
}

pub(crate) fn order3_update<F: Real>(
    from: &Endpoint<F>,
    to: &Endpoint<F>,
    r2: F,
    x: &[F],
    eps_s: &[F],
    d2: &[F],
) -> Result<Vec<F>> {
    let h = to.lambda - from.lambda;
    let phi1m1 = phi(1, h)? - F::one();
    Ok(update3(
        to.alpha / from.alpha,
        x,
        to.sigma * h.exp_m1(),
        eps_s,
        to.sigma / r2 * phi1m1,
        d2,
    ))
}

// ---------------------------------------------------------------------------
// public single steps
// ---------------------------------------------------------------------------

/// First-order step from `s` to `t < s`:
/// `x_t = (alpha_t/alpha_s) x - sigma_t expm1(h) eps(x, s)`. Costs 1 NFE and
/// is identical to a DDIM update.
pub fn dpm1_step<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
) -> Result<Vec<F>> {
    let from = endpoint(sched, s)?;
    let to = endpoint(sched, t)?;
    let eps_s = p.eval_counted(x, s)?;
    Ok(order1_update(&from, &to, x, &eps_s))
}

/// Second-order step with intermediate ratio `r1` in `(0, 1)` (midpoint rule
/// at `r1 = 1/2`). Costs 2 NFE.
pub fn dpm2_step<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
    r1: F,
) -> Result<Vec<F>> {
    if !(r1 > F::zero() && r1 < F::one()) {
        return Err(Error::parameter(
            "r1",
            format!("must lie in (0, 1), got {r1}"),
        ));
    }
    let from = endpoint(sched, s)?;
    let to = endpoint(sched, t)?;
    let eps_s = p.eval_counted(x, s)?;
    let (mid, u) = order2_midpoint(sched, &from, &to, r1, x, &eps_s)?;
    let eps_mid = p.eval_counted(&u, mid.t)?;
    Ok(order2_update(&from, &to, r1, x, &eps_s, &eps_mid))
}

/// Third-order step with intermediate ratios `0 < r1 < r2 < 1` (defaults in
/// the drivers: `r1 = 1/3`, `r2 = 2/3`). Costs 3 NFE.
pub fn dpm3_step<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
    r1: F,
    r2: F,
) -> Result<Vec<F>> {
    if !(r1 > F::zero() && r1 < r2 && r2 < F::one()) {
        return Err(Error::parameter(
            "r1/r2",
            format!("must satisfy 0 < r1 < r2 < 1, got r1={r1}, r2={r2}"),
        ));
    }
    let from = endpoint(sched, s)?;
    let to = endpoint(sched, t)?;
    let eps_s = p.eval_counted(x, s)?;
    let (mid1, u1) = order2_midpoint(sched, &from, &to, r1, x, &eps_s)?;
    let eps_u1 = p.eval_counted(&u1, mid1.t)?;
    let d1: Vec<F> = eps_u1.iter().zip(&eps_s).map(|(&a, &b)| a - b).collect();
    let (mid2, u2) = order3_second_midpoint(sched, &from, &to, r1, r2, x, &eps_s, &d1)?;
    let eps_u2 = p.eval_counted(&u2, mid2.t)?;
    let d2: Vec<F> = eps_u2.iter().zip(&eps_s).map(|(&a, &b)| a - b).collect();
    order3_update(&from, &to, r2, x, &eps_s, &d2)
}

/// Proposals from the order-1/order-2 pair sharing the evaluation at `s`
/// (`r1 = 1/2`); costs 2 NFE total.
pub(crate) fn dpm12_pair<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
) -> Result<(Vec<F>, Vec<F>)> {
    let from = endpoint(sched, s)?;
    let to = endpoint(sched, t)?;
    let r1 = F::of(0.5);
    let eps_s = p.eval_counted(x, s)?;
    let x1 = order1_update(&from, &to, x, &eps_s);
    let (mid, u) = order2_midpoint(sched, &from, &to, r1, x, &eps_s)?;
    let eps_mid = p.eval_counted(&u, mid.t)?;
    let x2 = order2_update(&from, &to, r1, x, &eps_s, &eps_mid);
    Ok((x1, x2))
}

/// Proposals from the order-2/order-3 pair sharing the evaluations at `s`
/// and at the first intermediate point (`r1 = 1/3`, `r2 = 2/3`); costs 3 NFE
/// total.
pub(crate) fn dpm23_pair<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
) -> Result<(Vec<F>, Vec<F>)> {
    let from = endpoint(sched, s)?;
    let to = endpoint(sched, t)?;
    let r1 = F::of(1.0 / 3.0);
    let r2 = F::of(2.0 / 3.0);
    let eps_s = p.eval_counted(x, s)?;
    let (mid1, u1) = order2_midpoint(sched, &from, &to, r1, x, &eps_s)?;
    let eps_u1 = p.eval_counted(&u1, mid1.t)?;
    let x2 = order2_update(&from, &to, r1, x, &eps_s, &eps_u1);
    let d1: Vec<F> = eps_u1.iter().zip(&eps_s).map(|(&a, &b)| a - b).collect();
    let (mid2, u2) = order3_second_midpoint(sched, &from, &to, r1, r2, x, &eps_s, &d1)?;
    let eps_u2 = p.eval_counted(&u2, mid2.t)?;
    let d2: Vec<F> = eps_u2.iter().zip(&eps_s).map(|(&a, &b)| a - b).collect();
    let x3 = order3_update(&from, &to, r2, x, &eps_s, &d2)?;
    Ok((x2, x3))
}
