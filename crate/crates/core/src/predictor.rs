//! Pluggable noise-prediction models `eps(x, t)` with per-solve evaluation
//! counting, analytic ground-truth instances, and the discrete-time and
//! classifier-guidance wrappers.
//!
//! A predictor is an immutable closure; the NFE counter lives in a
//! [`CountedPredictor`] owned by a single solve, so independent solves never
//! interfere and a predictor may be shared across threads.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::schedule::NoiseSchedule;

type EvalFn<F> = dyn Fn(&[F], F) -> Result<Vec<F>> + Send + Sync;

/// A noise-prediction model. Evaluations must be deterministic: identical
/// `(x, t)` inputs yield identical outputs.
#[derive(Clone)]
pub struct NoisePredictor<F> {
    eval_fn: Arc<EvalFn<F>>,
}

impl<F: Real> NoisePredictor<F> {
    pub fn from_fn(f: impl Fn(&[F], F) -> Result<Vec<F>> + Send + Sync + 'static) -> Self {
        NoisePredictor {
            eval_fn: Arc::new(f),
        }
    }

    /// `eps(x, t) = 0`; the ODE is then purely linear.
    pub fn zero() -> Self {
        Self::from_fn(|x, _| Ok(vec![F::zero(); x.len()]))
    }

    /// `eps(x, t) = c` independent of both arguments.
    pub fn constant(c: Vec<F>) -> Self {
        Self::from_fn(move |_, _| Ok(c.clone()))
    }

    /// Exact noise predictor for data drawn from `N(mean, scale^2 I)`:
    /// `eps(x, t) = sigma_t (x - alpha_t mean) / (alpha_t^2 scale^2 + sigma_t^2)`,
    /// which equals `-sigma_t grad_x log q_t(x)`.
    pub fn gaussian(sched: &NoiseSchedule<F>, prob: &GaussianProblem<F>) -> Self {
        let sched = *sched;
        let prob = prob.clone();
        Self::from_fn(move |x, t| {
            if x.len() != prob.dim() {
                return Err(Error::LengthMismatch {
                    left: x.len(),
                    right: prob.dim(),
                });
            }
            let (alpha, sigma) = sched.alpha_sigma(t)?;
            let v = alpha * alpha * prob.scale * prob.scale + sigma * sigma;
            Ok(x.iter()
                .zip(&prob.mean)
                .map(|(&xi, &mi)| sigma * (xi - alpha * mi) / v)
                .collect())
        })
    }

    /// Exact noise predictor for an isotropic Gaussian mixture data
    /// distribution, computed with log-sum-exp stabilization.
    ///
    /// Weights must be positive and sum to 1 within 1e-12.
    pub fn mixture(
        sched: &NoiseSchedule<F>,
        weights: Vec<F>,
        means: Vec<Vec<F>>,
        scales: Vec<F>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != scales.len() {
            return Err(Error::parameter(
                "mixture",
                format!(
                    "component counts disagree: {} weights, {} means, {} scales",
                    weights.len(),
                    means.len(),
                    scales.len()
                ),
            ));
        }
        let dim = means[0].len();
        if means.iter().any(|m| m.len() != dim) {
            return Err(Error::parameter(
                "means",
                "components have different dimensions",
            ));
        }
        if weights.iter().any(|&w| !(w > F::zero())) {
            return Err(Error::InvalidMixture {
                sum: weights
                    .iter()
                    .fold(F::zero(), |a, &b| a + b)
                    .to_f64()
                    .unwrap_or(f64::NAN),
            });
        }
        if scales.iter().any(|&s| !(s > F::zero())) {
            return Err(Error::parameter("scales", "must all be positive"));
        }
        let sum = weights.iter().fold(F::zero(), |a, &b| a + b);
        if (sum - F::one()).abs() > F::of(1e-12) {
            return Err(Error::InvalidMixture {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }

        let sched = *sched;
        let log_w: Vec<F> = weights.iter().map(|w| w.ln()).collect();
        Ok(Self::from_fn(move |x, t| {
            if x.len() != dim {
                return Err(Error::LengthMismatch {
                    left: x.len(),
                    right: dim,
                });
            }
            let (alpha, sigma) = sched.alpha_sigma(t)?;
            let half = F::of(0.5);
            // Per-component marginal variance and log joint weight.
            let mut log_post = Vec::with_capacity(log_w.len());
            let mut vs = Vec::with_capacity(log_w.len());
            for j in 0..log_w.len() {
                let v = alpha * alpha * scales[j] * scales[j] + sigma * sigma;
                let sq = x
                    .iter()
                    .zip(&means[j])
                    .map(|(&xi, &mi)| {
                        let d = xi - alpha * mi;
                        d * d
                    })
                    .fold(F::zero(), |a, b| a + b);
                let d_half = F::of(dim as f64) * half;
                log_post.push(log_w[j] - d_half * v.ln() - half * sq / v);
                vs.push(v);
            }
            let m = log_post.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
            let mut gamma: Vec<F> = log_post.iter().map(|&l| (l - m).exp()).collect();
            let z = gamma.iter().fold(F::zero(), |a, &b| a + b);
            for g in &mut gamma {
                *g = *g / z;
            }
            let mut out = vec![F::zero(); dim];
            for j in 0..gamma.len() {
                for (o, (&xi, &mi)) in out.iter_mut().zip(x.iter().zip(&means[j])) {
                    *o = *o + gamma[j] * (xi - alpha * mi) / vs[j];
                }
            }
            for o in &mut out {
                *o = sigma * *o;
            }
            Ok(out)
        }))
    }

    /// Adapter for models trained on `n_steps` discrete times: maps the
    /// continuous `t` to a (possibly fractional) discrete index and calls
    /// `inner` at that index.
    pub fn discrete(spec: DiscreteModelSpec<F>) -> Self {
        Self::from_fn(move |x, t| {
            let idx = spec.index_of(t)?;
            (spec.inner.eval_fn)(x, idx)
        })
    }

    /// Classifier-guidance wrapper:
    /// `eps'(x, t) = eps(x, t) - scale * sigma_t * grad_log_classifier(x, t)`.
    ///
    /// The classifier gradient is not a predictor call, so a guided
    /// evaluation still costs exactly one NFE. (Real guided sampling pays
    /// for the classifier separately; this accounting counts predictor
    /// calls only.)
    pub fn with_guidance(
        &self,
        sched: &NoiseSchedule<F>,
        scale: F,
        grad_log_classifier: impl Fn(&[F], F) -> Vec<F> + Send + Sync + 'static,
    ) -> Self {
        let inner = self.clone();
        let sched = *sched;
        Self::from_fn(move |x, t| {
            let base = (inner.eval_fn)(x, t)?;
            if scale == F::zero() {
                return Ok(base);
            }
            let (_, sigma) = sched.alpha_sigma(t)?;
            let grad = grad_log_classifier(x, t);
            if grad.len() != base.len() {
                return Err(Error::LengthMismatch {
                    left: grad.len(),
                    right: base.len(),
                });
            }
            Ok(base
                .iter()
                .zip(&grad)
                .map(|(&b, &g)| b - scale * sigma * g)
                .collect())
        })
    }

    /// Evaluate without counting. Solvers should go through
    /// [`counted`](Self::counted) instead so NFE accounting stays exact.
    pub fn eval_uncounted(&self, x: &[F], t: F) -> Result<Vec<F>> {
        (self.eval_fn)(x, t)
    }

    /// Start a fresh per-solve evaluation counter.
    pub fn counted(&self) -> CountedPredictor<'_, F> {
        CountedPredictor {
            model: self,
            nfe: 0,
        }
    }
}

impl<F> core::fmt::Debug for NoisePredictor<F> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("NoisePredictor")
    }
}

/// A borrowed predictor plus the NFE counter for one solve.
#[derive(Debug)]
pub struct CountedPredictor<'a, F> {
    model: &'a NoisePredictor<F>,
    nfe: u64,
}

impl<F: Real> CountedPredictor<'_, F> {
    /// Evaluate the model and charge exactly one function evaluation.
    pub fn eval_counted(&mut self, x: &[F], t: F) -> Result<Vec<F>> {
        self.nfe += 1;
        (self.model.eval_fn)(x, t)
    }

    pub fn nfe(&self) -> u64 {
        self.nfe
    }
}

/// Parameters of a Gaussian data distribution `N(mean, scale^2 I)`.
#[derive(Debug, Clone)]
pub struct GaussianProblem<F> {
    pub mean: Vec<F>,
    pub scale: F,
}

impl<F: Real> GaussianProblem<F> {
    pub fn new(mean: Vec<F>, scale: F) -> Result<Self> {
        if !(scale > F::zero()) {
            return Err(Error::parameter(
                "scale",
                format!("must be positive, got {scale}"),
            ));
        }
        Ok(GaussianProblem { mean, scale })
    }

    /// Standard normal data: the probability-flow is stationary and the exact
    /// solution map is the identity.
    pub fn standard(dim: usize) -> Self {
        GaussianProblem {
            mean: vec![F::zero(); dim],
            scale: F::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// How continuous times map onto the index grid of an `n_steps`-step model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteTimeMode {
    /// Index `1000 * max(t - T/N, 0)`; every `t` below `T/N` hits index 0.
    Type1,
    /// Index `1000 * (N-1) t / (N T)`; `t = 0` hits index 0.
    Type2,
}

/// Description of a discrete-time model wrapped for continuous-time use.
pub struct DiscreteModelSpec<F> {
    pub n_steps: u32,
    pub horizon: F,
    pub mode: DiscreteTimeMode,
    /// Model evaluated at the mapped (possibly fractional) index.
    pub inner: NoisePredictor<F>,
}

impl<F: Real> DiscreteModelSpec<F> {
    /// The discrete index for a continuous time; piecewise linear and
    /// nondecreasing in `t`, ranging over `[0, 1000 (N-1)/N]` on `[0, T]`.
    pub fn index_of(&self, t: F) -> Result<F> {
        if t < F::zero() || t > self.horizon * (F::one() + F::of(1e-12)) {
            return Err(Error::TimeOutOfDomain {
                t: t.to_f64().unwrap_or(f64::NAN),
                t_max: self.horizon.to_f64().unwrap_or(f64::NAN),
            });
        }
        let n = F::of(self.n_steps as f64);
        let thousand = F::of(1000.0);
        Ok(match self.mode {
            DiscreteTimeMode::Type1 => thousand * (t - self.horizon / n).max(F::zero()),
            DiscreteTimeMode::Type2 => thousand * (n - F::one()) * t / (n * self.horizon),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::default()
    }

    #[test]
    fn counting_and_determinism() {
        let p = NoisePredictor::<f64>::gaussian(&sched(), &GaussianProblem::standard(3));
        let mut c = p.counted();
        let x = [0.3, -1.2, 0.7];
        let a = c.eval_counted(&x, 0.5).unwrap();
        let b = c.eval_counted(&x, 0.5).unwrap();
        assert_eq!(c.nfe(), 2);
        assert_eq!(a, b, "identical inputs must give bit-identical outputs");
    }

    #[test]
    fn zero_predictor() {
        let p = NoisePredictor::<f64>::zero();
        let mut c = p.counted();
        assert_eq!(c.eval_counted(&[1.0, 2.0], 0.3).unwrap(), vec![0.0, 0.0]);
        assert_eq!(c.nfe(), 1);
    }

    #[test]
    fn gaussian_centered_input_gives_zero() {
        let prob = GaussianProblem::new(vec![1.5, -0.5], 0.7).unwrap();
        let p = NoisePredictor::gaussian(&sched(), &prob);
        let (alpha, _) = sched().alpha_sigma(0.4).unwrap();
        let x = [alpha * 1.5, alpha * -0.5];
        let eps = p.eval_uncounted(&x, 0.4).unwrap();
        assert!(eps.iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn gaussian_standard_is_sigma_x() {
        let p = NoisePredictor::gaussian(&sched(), &GaussianProblem::standard(2));
        let (_, sigma) = sched().alpha_sigma(0.6).unwrap();
        let eps = p.eval_uncounted(&[2.0, -3.0], 0.6).unwrap();
        assert_relative_eq!(eps[0], sigma * 2.0, max_relative = 1e-14);
        assert_relative_eq!(eps[1], sigma * -3.0, max_relative = 1e-14);
    }

    // ----- finite-difference score oracle (test-only, independent path) ----

    /// log N(x; alpha*mean, (alpha^2 scale^2 + sigma^2) I), written directly
    /// from the density formula.
    fn gauss_log_density(
        sched: &NoiseSchedule<f64>,
        mean: &[f64],
        scale: f64,
        x: &[f64],
        t: f64,
    ) -> f64 {
        let (alpha, sigma) = sched.alpha_sigma(t).unwrap();
        let v = alpha * alpha * scale * scale + sigma * sigma;
        let d = x.len() as f64;
        let sq: f64 = x
            .iter()
            .zip(mean)
            .map(|(xi, mi)| (xi - alpha * mi).powi(2))
            .sum();
        -0.5 * d * (core::f64::consts::TAU * v).ln() - 0.5 * sq / v
    }

    fn mixture_log_density(
        sched: &NoiseSchedule<f64>,
        weights: &[f64],
        means: &[Vec<f64>],
        scales: &[f64],
        x: &[f64],
        t: f64,
    ) -> f64 {
        let terms: Vec<f64> = (0..weights.len())
            .map(|j| weights[j].ln() + gauss_log_density(sched, &means[j], scales[j], x, t))
            .collect();
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }

    fn fd_score(log_density: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (log_density(&xp) - log_density(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gaussian_matches_finite_difference_score() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.8, -1.1, 0.2], 0.6).unwrap();
        let p = NoisePredictor::gaussian(&sched, &prob);
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let x = crate::rng::standard_normal_vec(11, k, 3);
            let t = 0.02 + 0.96 * crate::rng::counter_unit(12, k, 0);
            let (_, sigma) = sched.alpha_sigma(t).unwrap();
            let eps = p.eval_uncounted(&x, t).unwrap();
            let score = fd_score(
                |y| gauss_log_density(&sched, &prob.mean, prob.scale, y, t),
                &x,
            );
            let rms: f64 = eps
                .iter()
                .zip(&score)
                .map(|(e, s)| (e + sigma * s).powi(2))
                .sum::<f64>()
                .sqrt()
                / (3f64).sqrt();
            worst = worst.max(rms);
        }
        assert!(worst < 1e-6, "worst RMS deviation {worst}");
    }

    #[test]
    fn mixture_matches_finite_difference_score() {
        let sched = sched();
        let weights = vec![0.3, 0.45, 0.25];
        let means = vec![vec![1.0, -1.0], vec![-0.5, 0.7], vec![0.2, 1.4]];
        let scales = vec![0.5, 0.9, 0.7];
        let p = NoisePredictor::mixture(&sched, weights.clone(), means.clone(), scales.clone())
            .unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let x = crate::rng::standard_normal_vec(21, k, 2);
            let t = 0.02 + 0.96 * crate::rng::counter_unit(22, k, 0);
            let (_, sigma) = sched.alpha_sigma(t).unwrap();
            let eps = p.eval_uncounted(&x, t).unwrap();
            let score = fd_score(
                |y| mixture_log_density(&sched, &weights, &means, &scales, y, t),
                &x,
            );
            let rms: f64 = eps
                .iter()
                .zip(&score)
                .map(|(e, s)| (e + sigma * s).powi(2))
                .sum::<f64>()
                .sqrt()
                / (2f64).sqrt();
            worst = worst.max(rms);
        }
        assert!(worst < 1e-6, "worst RMS deviation {worst}");
    }

    #[test]
    fn single_component_mixture_equals_gaussian() {
        let sched = sched();
        let mean = vec![0.4, -0.9, 1.3];
        let g = NoisePredictor::gaussian(&sched, &GaussianProblem::new(mean.clone(), 0.8).unwrap());
        let m = NoisePredictor::mixture(&sched, vec![1.0], vec![mean], vec![0.8]).unwrap();
        for k in 0..20 {
            let x = crate::rng::standard_normal_vec(5, k, 3);
            let t = 0.05 + 0.9 * crate::rng::counter_unit(6, k, 0);
            let a = g.eval_uncounted(&x, t).unwrap();
            let b = m.eval_uncounted(&x, t).unwrap();
            for (ai, bi) in a.iter().zip(&b) {
                assert!((ai - bi).abs() <= 1e-14 * ai.abs().max(1.0));
            }
        }
    }

    #[test]
    fn symmetric_mixture_vanishes_at_origin() {
        let sched = sched();
        let mu = vec![1.2, -0.7];
        let neg: Vec<f64> = mu.iter().map(|v| -v).collect();
        let p =
            NoisePredictor::mixture(&sched, vec![0.5, 0.5], vec![mu, neg], vec![0.6, 0.6]).unwrap();
        let eps = p.eval_uncounted(&[0.0, 0.0], 0.5).unwrap();
        assert!(eps.iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let sched = sched();
        assert!(matches!(
            NoisePredictor::mixture(
                &sched,
                vec![0.5, 0.6],
                vec![vec![0.0], vec![1.0]],
                vec![1.0, 1.0]
            ),
            Err(Error::InvalidMixture { .. })
        ));
        assert!(NoisePredictor::mixture(
            &sched,
            vec![0.5, 0.5],
            vec![vec![0.0], vec![1.0, 2.0]],
            vec![1.0, 1.0]
        )
        .is_err());
    }

    // ----- discrete wrapper ----

    fn discrete_spec(mode: DiscreteTimeMode) -> DiscreteModelSpec<f64> {
        DiscreteModelSpec {
            n_steps: 1000,
            horizon: 1.0,
            mode,
            inner: NoisePredictor::zero(),
        }
    }

    #[test]
    fn discrete_index_endpoints() {
        let t1 = discrete_spec(DiscreteTimeMode::Type1);
        let t2 = discrete_spec(DiscreteTimeMode::Type2);
        // Times at or below T/N map to index 0 under Type-1.
        assert_eq!(t1.index_of(5e-4).unwrap(), 0.0);
        assert_eq!(t2.index_of(0.0).unwrap(), 0.0);
        assert_relative_eq!(t1.index_of(1.0).unwrap(), 999.0, max_relative = 1e-12);
        assert_relative_eq!(t2.index_of(1.0).unwrap(), 999.0, max_relative = 1e-12);
        assert!(t1.index_of(1.5).is_err());
    }

    /// The toy discrete model evaluates the analytic Gaussian predictor at
    /// time `index / 1000 * T`; fractional indices are fine.
    #[test]
    fn discrete_wrapper_roundtrips_through_toy_model() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.5, 0.5], 0.9).unwrap();
        let direct = NoisePredictor::gaussian(&sched, &prob);
        let toy = {
            let direct = direct.clone();
            NoisePredictor::from_fn(move |x, idx| {
                direct.eval_uncounted(x, (idx / 1000.0).max(1e-9))
            })
        };
        let wrapped = NoisePredictor::discrete(DiscreteModelSpec {
            n_steps: 1000,
            horizon: 1.0,
            mode: DiscreteTimeMode::Type2,
            inner: toy,
        });
        // Type-2 index/1000*T = (N-1)/N * t, so the toy model sees a slightly
        // shifted time; at N=1000 the shift is 0.1%.
        let x = [0.2, -0.4];
        let got = wrapped.eval_uncounted(&x, 0.5).unwrap();
        let want = direct.eval_uncounted(&x, 0.5 * 999.0 / 1000.0).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_discrete_index_monotone(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, type1 in any::<bool>()) {
            let mode = if type1 { DiscreteTimeMode::Type1 } else { DiscreteTimeMode::Type2 };
            let spec = discrete_spec(mode);
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            prop_assert!(spec.index_of(lo).unwrap() <= spec.index_of(hi).unwrap());
        }
    }

    // ----- guidance wrapper ----

    #[test]
    fn guidance_identities() {
        let sched = sched();
        let base = NoisePredictor::gaussian(&sched, &GaussianProblem::standard(2));
        let x = [0.7, -0.2];
        let t = 0.4;
        let plain = base.eval_uncounted(&x, t).unwrap();

        let off = base.with_guidance(&sched, 0.0, |x, _| vec![1.0; x.len()]);
        assert_eq!(off.eval_uncounted(&x, t).unwrap(), plain);

        let null = base.with_guidance(&sched, 2.5, |x, _| vec![0.0; x.len()]);
        assert_eq!(null.eval_uncounted(&x, t).unwrap(), plain);

        let c = [0.3, -1.0];
        let guided = base.with_guidance(&sched, 1.0, move |_, _| c.to_vec());
        let (_, sigma) = sched.alpha_sigma(t).unwrap();
        let got = guided.eval_uncounted(&x, t).unwrap();
        for i in 0..2 {
            assert_relative_eq!(got[i], plain[i] - sigma * c[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn guidance_charges_one_nfe() {
        let sched = sched();
        let base = NoisePredictor::gaussian(&sched, &GaussianProblem::standard(2));
        let guided = base.with_guidance(&sched, 1.0, |x, _| vec![0.1; x.len()]);
        let mut c = guided.counted();
        c.eval_counted(&[0.0, 0.0], 0.5).unwrap();
        assert_eq!(c.nfe(), 1);
    }
}
