//! Variance-preserving noise schedules with analytic forward and inverse maps.
//!
//! A schedule defines `alpha(t)` and `sigma(t)` with `alpha^2 + sigma^2 = 1`,
//! the half-logSNR `lambda(t) = ln(alpha/sigma)` (strictly decreasing in `t`),
//! and the analytic inverse `t(lambda)`. Two classic parameterizations are
//! provided: the linear-beta schedule and the cosine schedule with its usual
//! hard clip of the maximum time.

use crate::error::{Error, Result};
use crate::real::Real;

/// Smallest time at which the inverse map `t(lambda)` is considered valid.
pub const EPS_MIN: f64 = 1e-6;

/// Hard clip for the cosine schedule's maximum usable time.
pub const COSINE_T_MAX: f64 = 0.9946;

/// Floor applied to `sigma` so logarithms stay finite as `t -> 0`.
const SIGMA_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    LinearVp,
    CosineVp,
}

/// A variance-preserving noise schedule.
///
/// Immutable after construction; every method is pure, so a schedule can be
/// shared freely across threads.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSchedule<F> {
    kind: ScheduleKind,
    beta0: F,
    beta1: F,
    cosine_s: F,
    t_max: F,
    /// log cos(pi/2 * s/(1+s)), the cosine schedule's normalization offset.
    cosine_offset: F,
    /// lambda at t_max (most negative reachable value).
    lambda_min: F,
    /// lambda at EPS_MIN (largest value the inverse accepts).
    lambda_max: F,
}

impl<F: Real> Default for NoiseSchedule<F> {
    fn default() -> Self {
        Self::linear(F::of(0.1), F::of(20.0))
    }
}

impl<F: Real> NoiseSchedule<F> {
    /// Linear-beta schedule: `log alpha(t) = -(b1-b0)/4 t^2 - b0/2 t`, `t_max = 1`.
    pub fn linear(beta0: F, beta1: F) -> Self {
        let mut sched = NoiseSchedule {
            kind: ScheduleKind::LinearVp,
            beta0,
            beta1,
            cosine_s: F::of(0.008),
            t_max: F::one(),
            cosine_offset: F::zero(),
            lambda_min: F::zero(),
            lambda_max: F::zero(),
        };
        sched.seal();
        sched
    }

    /// Cosine schedule: `log alpha(t) = ln cos(pi/2 (t+s)/(1+s)) - ln cos(pi/2 s/(1+s))`,
    /// clipped at `t_max = 0.9946`.
    pub fn cosine(s: F) -> Self {
        let half_pi = F::of(core::f64::consts::FRAC_PI_2);
        let offset = (half_pi * s / (F::one() + s)).cos().ln();
        let mut sched = NoiseSchedule {
            kind: ScheduleKind::CosineVp,
            beta0: F::of(0.1),
            beta1: F::of(20.0),
            cosine_s: s,
            t_max: F::of(COSINE_T_MAX),
            cosine_offset: offset,
            lambda_min: F::zero(),
            lambda_max: F::zero(),
        };
        sched.seal();
        sched
    }

    /// Default cosine schedule with `s = 0.008`.
    pub fn cosine_default() -> Self {
        Self::cosine(F::of(0.008))
    }

    fn seal(&mut self) {
        self.lambda_min = self.lambda_unchecked(self.t_max);
        self.lambda_max = self.lambda_unchecked(F::of(EPS_MIN));
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn t_max(&self) -> F {
        self.t_max
    }

    /// Invertible half-logSNR range `[lambda(t_max), lambda(EPS_MIN)]`.
    pub fn lambda_range(&self) -> (F, F) {
        (self.lambda_min, self.lambda_max)
    }

    fn check_time(&self, t: F) -> Result<F> {
        if !(t > F::zero()) {
            return Err(Error::TimeOutOfDomain {
                t: t.to_f64().unwrap_or(f64::NAN),
                t_max: self.t_max.to_f64().unwrap_or(f64::NAN),
            });
        }
        // Allow a hair of roundoff from lambda->t roundtrips, then clamp.
        let slack = F::of(1e-9) * self.t_max;
        if t > self.t_max + slack {
            return Err(Error::TimeOutOfDomain {
                t: t.to_f64().unwrap_or(f64::NAN),
                t_max: self.t_max.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(t.min(self.t_max))
    }

    fn log_alpha(&self, t: F) -> F {
        match self.kind {
            ScheduleKind::LinearVp => {
                let quarter = F::of(0.25);
                let half = F::of(0.5);
                -(self.beta1 - self.beta0) * quarter * t * t - self.beta0 * half * t
            }
            ScheduleKind::CosineVp => {
                let half_pi = F::of(core::f64::consts::FRAC_PI_2);
                let arg = half_pi * (t + self.cosine_s) / (F::one() + self.cosine_s);
                arg.cos().ln() - self.cosine_offset
            }
        }
    }

    /// `1 - alpha^2` evaluated as `-expm1(2 log alpha)` so it stays accurate
    /// when alpha is close to 1.
    fn sigma_squared(&self, log_alpha: F) -> F {
        (-((log_alpha + log_alpha).exp_m1())).max(F::of(SIGMA_FLOOR * SIGMA_FLOOR))
    }

    fn lambda_unchecked(&self, t: F) -> F {
        let la = self.log_alpha(t);
        la - F::of(0.5) * self.sigma_squared(la).ln()
    }

    /// `(alpha(t), sigma(t))` with `alpha^2 + sigma^2 = 1`.
    pub fn alpha_sigma(&self, t: F) -> Result<(F, F)> {
        let t = self.check_time(t)?;
        let la = self.log_alpha(t);
        let alpha = la.exp();
        let sigma = self.sigma_squared(la).sqrt().max(F::of(SIGMA_FLOOR));
        Ok((alpha, sigma))
    }

    /// Half-logSNR `lambda(t) = ln alpha - ln sigma`; strictly decreasing in `t`.
    pub fn half_log_snr(&self, t: F) -> Result<F> {
        let t = self.check_time(t)?;
        Ok(self.lambda_unchecked(t))
    }

    /// Analytic inverse of [`half_log_snr`](Self::half_log_snr).
    ///
    /// Accepts `lambda` in `[lambda(t_max), lambda(EPS_MIN)]`.
    pub fn time_of_lambda(&self, lam: F) -> Result<F> {
        let slack = F::of(1e-9) * (F::one() + lam.abs());
        if !(lam >= self.lambda_min - slack && lam <= self.lambda_max + slack) {
            return Err(Error::LambdaOutOfRange {
                lambda: lam.to_f64().unwrap_or(f64::NAN),
                min: self.lambda_min.to_f64().unwrap_or(f64::NAN),
                max: self.lambda_max.to_f64().unwrap_or(f64::NAN),
            });
        }
        let lam = lam.max(self.lambda_min).min(self.lambda_max);
        // log(e^{-2 lambda} + 1) without overflow or precision loss.
        let log1p_exp = softplus(-(lam + lam));
        let t = match self.kind {
            ScheduleKind::LinearVp => {
                let two = F::of(2.0);
                let disc = self.beta0 * self.beta0 + two * (self.beta1 - self.beta0) * log1p_exp;
                // Rationalized form of the quadratic root; avoids cancellation
                // between sqrt(disc) and beta0 near t = 0.
                two * log1p_exp / (disc.sqrt() + self.beta0)
            }
            ScheduleKind::CosineVp => {
                let half = F::of(0.5);
                let log_alpha = -half * log1p_exp;
                let half_pi = F::of(core::f64::consts::FRAC_PI_2);
                let arg = (log_alpha + self.cosine_offset).exp().min(F::one());
                (F::one() + self.cosine_s) / half_pi * arg.acos() - self.cosine_s
            }
        };
        Ok(t.max(F::of(f64::MIN_POSITIVE)).min(self.t_max))
    }

    /// Drift `f(t) = d log alpha / dt` and squared diffusion
    /// `g^2(t) = d sigma^2/dt - 2 f(t) sigma^2`.
    ///
    /// For a variance-preserving schedule the definition collapses to
    /// `g^2 = -2 f`, which also equals `-2 sigma^2 dlambda/dt`.
    pub fn drift_diffusion(&self, t: F) -> Result<(F, F)> {
        let t = self.check_time(t)?;
        let f = match self.kind {
            ScheduleKind::LinearVp => {
                let half = F::of(0.5);
                -(self.beta1 - self.beta0) * half * t - self.beta0 * half
            }
            ScheduleKind::CosineVp => {
                let half_pi = F::of(core::f64::consts::FRAC_PI_2);
                let scale = half_pi / (F::one() + self.cosine_s);
                let arg = half_pi * (t + self.cosine_s) / (F::one() + self.cosine_s);
                -scale * arg.tan()
            }
        };
        Ok((f, -(f + f)))
    }
}

/// `ln(1 + e^x)` stable for any sign of `x`.
fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
