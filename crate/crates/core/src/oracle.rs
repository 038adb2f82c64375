//! Ground-truth machinery: the closed-form flow map for Gaussian data,
//! a high-accuracy reference integrator for everything else, and the error
//! metrics used by the convergence harness.

use crate::error::{Error, Result};
use crate::predictor::{GaussianProblem, NoisePredictor};
use crate::real::Real;
use crate::schedule::NoiseSchedule;

/// One measured point of a solver-accuracy experiment.
#[derive(Debug, Clone)]
pub struct ErrorReport<F> {
    pub solver_name: String,
    pub nfe: u64,
    pub h_max: F,
    pub rms_error: F,
}

/// Exact solution map of the probability-flow ODE for Gaussian data
/// `N(mean, scale^2 I)`:
///
/// `x_t = alpha_t mean + sqrt(v_t / v_s) (x_s - alpha_s mean)` with
/// `v_tau = alpha_tau^2 scale^2 + sigma_tau^2`. The marginal variance `v`
/// satisfies `dv/dtau = 2 f v + g^2`, so this map solves the ODE exactly in
/// both directions.
pub fn gaussian_flow_exact<F: Real>(
    sched: &NoiseSchedule<F>,
    prob: &GaussianProblem<F>,
    x_s: &[F],
    s: F,
    t: F,
) -> Result<Vec<F>> {
    if x_s.len() != prob.dim() {
        return Err(Error::LengthMismatch {
            left: x_s.len(),
            right: prob.dim(),
        });
    }
    let (a_s, s_s) = sched.alpha_sigma(s)?;
    let (a_t, s_t) = sched.alpha_sigma(t)?;
    let v_s = a_s * a_s * prob.scale * prob.scale + s_s * s_s;
    let v_t = a_t * a_t * prob.scale * prob.scale + s_t * s_t;
    let shrink = (v_t / v_s).sqrt();
    Ok(x_s
        .iter()
        .zip(&prob.mean)
        .map(|(&xi, &mi)| a_t * mi + shrink * (xi - a_s * mi))
        .collect())
}

/// High-accuracy reference: classical RK4 over the half-logSNR-domain field
/// with `n_fine >= 1000` uniform lambda steps. Deterministic; used to measure
/// solver errors on problems without a closed-form flow.
pub fn reference_solve<F: Real>(
    model: &NoisePredictor<F>,
    sched: &NoiseSchedule<F>,
    x_start: &[F],
    t_start: F,
    eps: F,
    n_fine: usize,
) -> Result<Vec<F>> {
    if n_fine < 1000 {
        return Err(Error::parameter(
            "n_fine",
            format!("need at least 1000 steps, got {n_fine}"),
        ));
    }
    if !(eps < t_start) {
        return Err(Error::parameter(
            "eps",
            format!("end time {eps} must be below start {t_start}"),
        ));
    }
    let lam_start = sched.half_log_snr(t_start)?;
    let lam_end = sched.half_log_snr(eps)?;
    let h = (lam_end - lam_start) / F::of(n_fine as f64);
    let half = F::of(0.5);
    let sixth = F::of(1.0 / 6.0);
    let two = F::of(2.0);

    // The field in lambda: sigma^2 x - sigma eps(x, t(lambda)).
    let field = |x: &[F], lam: F| -> Result<Vec<F>> {
        let t = sched.time_of_lambda(lam)?;
        let (_, sigma) = sched.alpha_sigma(t)?;
        let eps_val = model.eval_uncounted(x, t)?;
        Ok(x.iter()
            .zip(&eps_val)
            .map(|(&xi, &ei)| sigma * sigma * xi - sigma * ei)
            .collect())
    };

    let mut x = x_start.to_vec();
    for i in 0..n_fine {
        let lam = lam_start + F::of(i as f64) * h;
        let k1 = field(&x, lam)?;
        let x2: Vec<F> = x
            .iter()
            .zip(&k1)
            .map(|(&xi, &k)| xi + half * h * k)
            .collect();
        let k2 = field(&x2, lam + half * h)?;
        let x3: Vec<F> = x
            .iter()
            .zip(&k2)
            .map(|(&xi, &k)| xi + half * h * k)
            .collect();
        let k3 = field(&x3, lam + half * h)?;
        let x4: Vec<F> = x.iter().zip(&k3).map(|(&xi, &k)| xi + h * k).collect();
        let k4 = field(&x4, lam + h)?;
        for j in 0..x.len() {
            x[j] = x[j] + sixth * h * (k1[j] + two * k2[j] + two * k3[j] + k4[j]);
        }
    }
    Ok(x)
}

/// Root-mean-square difference `||a - b||_2 / sqrt(D)`.
pub fn rms_error<F: Real>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let sum = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, v| acc + v);
    Ok((sum / F::of(a.len() as f64)).sqrt())
}

/// Errors below this are considered roundoff plateau and excluded from
/// order fits.
pub const ORDER_FIT_ERROR_FLOOR: f64 = 1e-13;

/// Least-squares slope of `log(error)` against `log(h)`.
///
/// Points with error at or below [`ORDER_FIT_ERROR_FLOOR`] are dropped; at
/// least 3 usable points are required.
pub fn estimate_order<F: Real>(hs: &[F], errors: &[F]) -> Result<F> {
    if hs.len() != errors.len() {
        return Err(Error::LengthMismatch {
            left: hs.len(),
            right: errors.len(),
        });
    }
    if hs.iter().any(|&h| !(h > F::zero())) {
        return Err(Error::parameter("hs", "step widths must be positive"));
    }
    if errors.iter().any(|&e| !(e >= F::zero())) {
        return Err(Error::parameter("errors", "errors must be nonnegative"));
    }
    let floor = F::of(ORDER_FIT_ERROR_FLOOR);
    let pts: Vec<(F, F)> = hs
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > floor)
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints { got: pts.len() });
    }
    let n = F::of(pts.len() as f64);
    let sx = pts.iter().fold(F::zero(), |a, p| a + p.0);
    let sy = pts.iter().fold(F::zero(), |a, p| a + p.1);
    let sxx = pts.iter().fold(F::zero(), |a, p| a + p.0 * p.0);
    let sxy = pts.iter().fold(F::zero(), |a, p| a + p.0 * p.1);
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::default()
    }

    #[test]
    fn stationary_flow_is_identity() {
        let prob = GaussianProblem::standard(3);
        let x = vec![0.3, -1.0, 2.2];
        let got = gaussian_flow_exact(&sched(), &prob, &x, 0.9, 0.1).unwrap();
        for (g, xi) in got.iter().zip(&x) {
            assert_relative_eq!(g, xi, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_width_flow_is_identity() {
        let prob = GaussianProblem::new(vec![1.0, 2.0], 0.5).unwrap();
        let x = vec![0.7, -0.7];
        let got = gaussian_flow_exact(&sched(), &prob, &x, 0.6, 0.6).unwrap();
        assert_eq!(got, x);
    }

    /// Flow maps compose: s -> r -> t equals s -> t.
    #[test]
    fn flow_semigroup_property() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.2, -0.9, 1.1], 0.8).unwrap();
        let x = vec![1.4, 0.3, -0.6];
        let direct = gaussian_flow_exact(&sched, &prob, &x, 0.9, 0.1).unwrap();
        let mid = gaussian_flow_exact(&sched, &prob, &x, 0.9, 0.45).unwrap();
        let via = gaussian_flow_exact(&sched, &prob, &mid, 0.45, 0.1).unwrap();
        for (d, v) in direct.iter().zip(&via) {
            assert!((d - v).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    /// Run the fine-step integrator against the closed form before trusting
    /// it anywhere else.
    #[test]
    fn closed_form_matches_fine_reference() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.5, -0.3, 0.8, 1.2], 0.7).unwrap();
        let model = NoisePredictor::gaussian(&sched, &prob);
        for k in 0..3u64 {
            let x = crate::rng::standard_normal_vec(51, k, 4);
            let exact = gaussian_flow_exact(&sched, &prob, &x, 1.0, 1e-3).unwrap();
            let fine = reference_solve(&model, &sched, &x, 1.0, 1e-3, 100_000).unwrap();
            assert!(rms_error(&exact, &fine).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn reference_zero_predictor_hits_linear_solution() {
        let sched = sched();
        let model = NoisePredictor::zero();
        let x = vec![1.0, -2.0];
        let got = reference_solve(&model, &sched, &x, 1.0, 1e-3, 20_000).unwrap();
        let (a_s, _) = sched.alpha_sigma(1.0).unwrap();
        let (a_t, _) = sched.alpha_sigma(1e-3).unwrap();
        for (g, xi) in got.iter().zip(&x) {
            assert_relative_eq!(*g, a_t / a_s * xi, max_relative = 1e-10);
        }
    }

    /// A sharp mixture keeps the n in {1000, 1400, 2000} errors above the
    /// 1e-13 fit floor; smoother fields hit roundoff before three points
    /// survive.
    #[test]
    fn reference_self_convergence_is_fourth_order() {
        let sched = sched();
        let model = NoisePredictor::mixture(
            &sched,
            vec![0.5, 0.5],
            vec![vec![2.0, -1.5], vec![-1.8, 1.2]],
            vec![0.25, 0.3],
        )
        .unwrap();
        let x = vec![0.55, -1.05];
        let truth = reference_solve(&model, &sched, &x, 1.0, 1e-3, 32_000).unwrap();
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for n in [1000usize, 1400, 2000] {
            let got = reference_solve(&model, &sched, &x, 1.0, 1e-3, n).unwrap();
            hs.push(1.0 / n as f64);
            errs.push(rms_error(&got, &truth).unwrap());
        }
        let slope = estimate_order(&hs, &errs).unwrap();
        assert!(
            (3.5..4.8).contains(&slope),
            "RK4 self-convergence slope {slope}"
        );
    }

    #[test]
    fn reference_doubling_is_converged_at_a_hundred_thousand_steps() {
        let sched = sched();
        let prob = GaussianProblem::new(vec![0.4, -0.9], 0.8).unwrap();
        let model = NoisePredictor::gaussian(&sched, &prob);
        let x = vec![1.2, -0.3];
        let a = reference_solve(&model, &sched, &x, 1.0, 1e-3, 100_000).unwrap();
        let b = reference_solve(&model, &sched, &x, 1.0, 1e-3, 200_000).unwrap();
        assert!(rms_error(&a, &b).unwrap() < 1e-10);
    }

    #[test]
    fn reference_rejects_coarse_grids() {
        let model = NoisePredictor::zero();
        assert!(reference_solve(&model, &sched(), &[1.0], 1.0, 1e-3, 999).is_err());
    }

    #[test]
    fn rms_error_hand_values() {
        assert_eq!(rms_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // a - b = (3, 4)/sqrt(2): ||.||_2 = 5/sqrt(2), / sqrt(2) = 2.5
        let s = core::f64::consts::SQRT_2;
        let a = [3.0 / s, 4.0 / s];
        let b = [0.0, 0.0];
        assert_relative_eq!(rms_error(&a, &b).unwrap(), 2.5, max_relative = 1e-14);
        assert_eq!(rms_error(&a, &b).unwrap(), rms_error(&b, &a).unwrap());
        assert!(rms_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn order_fit_on_constructed_data() {
        let hs = [0.4, 0.2, 0.1];
        let errs: Vec<f64> = hs.iter().map(|h| 3.7 * h * h).collect();
        let slope = estimate_order(&hs, &errs).unwrap();
        assert_relative_eq!(slope, 2.0, max_relative = 1e-10);

        let flat = [1e-3, 1e-3, 1e-3];
        assert_relative_eq!(estimate_order(&hs, &flat).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn order_fit_guards() {
        // Points under the floor are dropped, leaving too few.
        let hs = [0.4, 0.2, 0.1];
        let errs = [1e-15, 1e-15, 1e-3];
        assert!(matches!(
            estimate_order(&hs, &errs),
            Err(Error::InsufficientPoints { got: 1 })
        ));
        assert!(estimate_order(&[0.1, -0.2, 0.3], &[1.0, 1.0, 1.0]).is_err());
        assert!(estimate_order(&[0.1, 0.2], &[1.0, 1.0, 1.0]).is_err());
    }
}
