//! Reference integrators to compare the dedicated solvers against: DDIM,
//! explicit midpoint (RK2) and Heun's third-order method (RK3), the latter
//! two over either the time-domain or the half-logSNR-domain vector field.

use crate::error::{Error, Result};
use crate::predictor::{CountedPredictor, NoisePredictor};
use crate::real::Real;
use crate::schedule::NoiseSchedule;
use crate::solver::{SolveResult, StepRecord, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Ddim,
    Rk2T,
    Rk3T,
    Rk2Lambda,
    Rk3Lambda,
}

impl BaselineKind {
    pub fn nfe_per_step(self) -> u64 {
        match self {
            BaselineKind::Ddim => 1,
            BaselineKind::Rk2T | BaselineKind::Rk2Lambda => 2,
            BaselineKind::Rk3T | BaselineKind::Rk3Lambda => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Ddim => "ddim",
            BaselineKind::Rk2T => "rk2_t",
            BaselineKind::Rk3T => "rk3_t",
            BaselineKind::Rk2Lambda => "rk2_lambda",
            BaselineKind::Rk3Lambda => "rk3_lambda",
        }
    }
}

/// How a baseline discretizes the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStyle {
    UniformT,
    UniformLambda,
    /// Quadratic spacing concentrating steps near the end time:
    /// `t_i = eps + ((M - i)/M)^2 (T - eps)` for `i = 0..=M`.
    QuadraticT,
}

/// A baseline method paired with its grid convention. The customary pairing
/// puts RK(t) on uniform-t grids and RK(lambda) and DDIM on uniform-lambda
/// grids; quadratic-t is an alternative DDIM convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineMethod {
    pub kind: BaselineKind,
    pub grid_style: GridStyle,
}

impl BaselineMethod {
    /// The conventional grid pairing for each method.
    pub fn paired(kind: BaselineKind) -> Self {
        let grid_style = match kind {
            BaselineKind::Rk2T | BaselineKind::Rk3T => GridStyle::UniformT,
            _ => GridStyle::UniformLambda,
        };
        BaselineMethod { kind, grid_style }
    }
}

/// One DDIM step from `s` to `t <= s`:
/// `x_t = (alpha_t/alpha_s) x - alpha_t (sigma_s/alpha_s - sigma_t/alpha_t) eps(x, s)`.
/// Costs 1 NFE and agrees with `dpm1_step` to rounding.
pub fn ddim_step<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    s: F,
    t: F,
) -> Result<Vec<F>> {
    let (a_s, s_s) = sched.alpha_sigma(s)?;
    let (a_t, s_t) = sched.alpha_sigma(t)?;
    let eps = p.eval_counted(x, s)?;
    let coef = a_t * (s_s / a_s - s_t / a_t);
    Ok(x.iter()
        .zip(&eps)
        .map(|(&xi, &ei)| a_t / a_s * xi - coef * ei)
        .collect())
}

/// Time-domain vector field `f(t) x + g^2(t)/(2 sigma_t) eps(x, t)`; 1 NFE.
pub fn ode_field_t<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    t: F,
) -> Result<Vec<F>> {
    let (f, g2) = sched.drift_diffusion(t)?;
    let (_, sigma) = sched.alpha_sigma(t)?;
    let eps = p.eval_counted(x, t)?;
    let coef = g2 / (F::of(2.0) * sigma);
    Ok(x.iter()
        .zip(&eps)
        .map(|(&xi, &ei)| f * xi + coef * ei)
        .collect())
}

/// Half-logSNR-domain vector field `sigma_lam^2 x - sigma_lam eps(x, lam)`,
/// with the predictor evaluated at the time `t(lam)`; 1 NFE.
pub fn ode_field_lambda<F: Real>(
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    lam: F,
) -> Result<Vec<F>> {
    let t = sched.time_of_lambda(lam)?;
    let (_, sigma) = sched.alpha_sigma(t)?;
    let eps = p.eval_counted(x, t)?;
    Ok(x.iter()
        .zip(&eps)
        .map(|(&xi, &ei)| sigma * sigma * xi - sigma * ei)
        .collect())
}

fn axpy<F: Real>(x: &[F], a: F, k: &[F]) -> Vec<F> {
    x.iter().zip(k).map(|(&xi, &ki)| xi + a * ki).collect()
}

/// One explicit Runge-Kutta step over the field selected by `method.kind`,
/// between the coordinates `from` and `to` (times for the `_t` variants,
/// half-logSNR values for the `_lambda` variants, signed width either way).
///
/// RK2 is the explicit midpoint rule (2 NFE); RK3 is Heun's third-order
/// method with nodes at 1/3 and 2/3 (3 NFE).
pub fn rk_step<F: Real>(
    method: BaselineMethod,
    p: &mut CountedPredictor<'_, F>,
    sched: &NoiseSchedule<F>,
    x: &[F],
    from: F,
    to: F,
) -> Result<Vec<F>> {
    let field = |x: &[F], tau: F, p: &mut CountedPredictor<'_, F>| -> Result<Vec<F>> {
        match method.kind {
            BaselineKind::Rk2T | BaselineKind::Rk3T => ode_field_t(p, sched, x, tau),
            BaselineKind::Rk2Lambda | BaselineKind::Rk3Lambda => ode_field_lambda(p, sched, x, tau),
            BaselineKind::Ddim => Err(Error::parameter(
                "method",
                "DDIM is not a Runge-Kutta method",
            )),
        }
    };
    let h = to - from;
    match method.kind {
        BaselineKind::Rk2T | BaselineKind::Rk2Lambda => {
            let half = F::of(0.5);
            let k1 = field(x, from, p)?;
            let u = axpy(x, half * h, &k1);
            let k2 = field(&u, from + half * h, p)?;
            Ok(axpy(x, h, &k2))
        }
        BaselineKind::Rk3T | BaselineKind::Rk3Lambda => {
            let r1 = F::of(1.0 / 3.0);
            let r2 = F::of(2.0 / 3.0);
            let k1 = field(x, from, p)?;
            let u1 = axpy(x, r1 * h, &k1);
            let k2 = field(&u1, from + r1 * h, p)?;
            let u2 = axpy(x, r2 * h, &k2);
            let k3 = field(&u2, from + r2 * h, p)?;
            Ok(x.iter()
                .zip(k1.iter().zip(&k3))
                .map(|(&xi, (&a, &c))| xi + h * (F::of(0.25) * a + F::of(0.75) * c))
                .collect())
        }
        BaselineKind::Ddim => Err(Error::parameter(
            "method",
            "DDIM is not a Runge-Kutta method",
        )),
    }
}

/// Grid coordinates for a baseline run: the points the stepper walks
/// through, in the method's own domain (t or lambda).
fn baseline_coords<F: Real>(
    method: BaselineMethod,
    sched: &NoiseSchedule<F>,
    t_start: F,
    eps: F,
    m: usize,
) -> Result<Vec<F>> {
    if m < 1 {
        return Err(Error::parameter("m", "need at least one step"));
    }
    if !(eps < t_start) {
        return Err(Error::parameter(
            "eps",
            format!("end time {eps} must be below start {t_start}"),
        ));
    }
    let in_lambda = matches!(
        method.kind,
        BaselineKind::Rk2Lambda | BaselineKind::Rk3Lambda
    );
    match method.grid_style {
        GridStyle::UniformT => Ok((0..=m)
            .map(|i| t_start + F::of(i as f64 / m as f64) * (eps - t_start))
            .collect()),
        GridStyle::UniformLambda => {
            let grid = TimeGrid::uniform_lambda(sched, t_start, eps, m)?;
            Ok(if in_lambda {
                grid.lambdas().to_vec()
            } else {
                grid.times().to_vec()
            })
        }
        GridStyle::QuadraticT => Ok((0..=m)
            .map(|i| {
                let frac = F::of((m - i) as f64 / m as f64);
                eps + frac * frac * (t_start - eps)
            })
            .collect()),
    }
    .and_then(|coords| {
        if in_lambda && method.grid_style != GridStyle::UniformLambda {
            // lambda-domain steppers need lambda coordinates.
            coords.iter().map(|&t| sched.half_log_snr(t)).collect()
        } else {
            Ok(coords)
        }
    })
}

/// Drive a baseline method over `m` steps from `t_start` down to `eps`.
pub fn solve_baseline<F: Real>(
    method: BaselineMethod,
    model: &NoisePredictor<F>,
    sched: &NoiseSchedule<F>,
    x_start: &[F],
    t_start: F,
    eps: F,
    m: usize,
) -> Result<SolveResult<F>> {
    let coords = baseline_coords(method, sched, t_start, eps, m)?;
    let mut p = model.counted();
    let mut x = x_start.to_vec();
    let mut trace = Vec::with_capacity(m);
    for i in 0..m {
        let (from, to) = (coords[i], coords[i + 1]);
        x = match method.kind {
            BaselineKind::Ddim => ddim_step(&mut p, sched, &x, from, to)?,
            _ => rk_step(method, &mut p, sched, &x, from, to)?,
        };
        let in_lambda = matches!(
            method.kind,
            BaselineKind::Rk2Lambda | BaselineKind::Rk3Lambda
        );
        let (t, lambda) = if in_lambda {
            (sched.time_of_lambda(to)?, to)
        } else {
            (to, sched.half_log_snr(to)?)
        };
        trace.push(StepRecord {
            t,
            lambda,
            h: (to - from).abs(),
            order: method.kind.nfe_per_step() as u8,
        });
    }
    Ok(SolveResult {
        final_state: x,
        nfe: p.nfe(),
        accepted_steps: m as u64,
        rejected_steps: 0,
        trace,
    })
}
