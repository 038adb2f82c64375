//! The `phi_k` functions of exponential integrators:
//! `phi_k(z) = int_0^1 e^{(1-d) z} d^{k-1}/(k-1)! dd`, with `phi_k(0) = 1/k!`
//! and the recurrence `phi_{k+1}(z) = (phi_k(z) - phi_k(0)) / z`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Below this magnitude the closed forms lose digits to cancellation, so the
/// power series takes over. The series converges to working precision in
/// under 25 terms there, keeping both branches accurate to ~1 ulp.
const SERIES_THRESHOLD: f64 = 0.5;

/// Evaluate `phi_k(z)` for `k` in `1..=3`.
///
/// Closed forms (`expm1`-based) are used for `|z| >= 0.5` and the Taylor
/// series `sum_n z^n / (n+k)!` below, so small steps never suffer
/// cancellation blowup.
pub fn phi<F: Real>(k: u32, z: F) -> Result<F> {
    if !(1..=3).contains(&k) {
        return Err(Error::UnsupportedPhiOrder { k });
    }
    if z.abs() < F::of(SERIES_THRESHOLD) {
        return Ok(phi_series(k, z));
    }
    let z2 = z * z;
    Ok(match k {
        1 => z.exp_m1() / z,
        2 => (z.exp_m1() - z) / z2,
        _ => (z.exp_m1() - z - z2 * F::of(0.5)) / (z2 * z),
    })
}

fn phi_series<F: Real>(k: u32, z: F) -> F {
    let mut term = F::of(1.0 / factorial(k));
    let mut sum = term;
    for n in 1..=40u32 {
        term = term * z / F::of((n + k) as f64);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    sum
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Frozen with a 60-digit evaluation of (e^z - 1)/z and friends.
    const PHI1_AT_1: f64 = 1.7182818284590453;
    const PHI2_AT_HALF: f64 = 0.5948850828005126;
    const PHI3_AT_2: f64 = 0.2986320123663313;

    #[test]
    fn values_at_zero() {
        assert_eq!(phi::<f64>(1, 0.0).unwrap(), 1.0);
        assert_eq!(phi::<f64>(2, 0.0).unwrap(), 0.5);
        assert_relative_eq!(phi::<f64>(3, 0.0).unwrap(), 1.0 / 6.0, max_relative = 1e-15);
    }

    #[test]
    fn frozen_values() {
        assert_relative_eq!(phi::<f64>(1, 1.0).unwrap(), PHI1_AT_1, max_relative = 1e-14);
        assert_relative_eq!(
            phi::<f64>(2, 0.5).unwrap(),
            PHI2_AT_HALF,
            max_relative = 1e-14
        );
        assert_relative_eq!(phi::<f64>(3, 2.0).unwrap(), PHI3_AT_2, max_relative = 1e-14);
    }

    #[test]
    fn recurrence_at_moderate_arguments() {
        for &z in &[0.5f64, -0.5, 2.0, -2.0] {
            let p1 = phi::<f64>(1, z).unwrap();
            let p2 = phi::<f64>(2, z).unwrap();
            let p3 = phi::<f64>(3, z).unwrap();
            assert_relative_eq!(p2, (p1 - 1.0) / z, max_relative = 1e-12);
            assert_relative_eq!(p3, (p2 - 0.5) / z, max_relative = 1e-12);
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(matches!(
            phi::<f64>(0, 1.0),
            Err(Error::UnsupportedPhiOrder { k: 0 })
        ));
        assert!(matches!(
            phi::<f64>(4, 1.0),
            Err(Error::UnsupportedPhiOrder { k: 4 })
        ));
    }

    #[test]
    fn no_cancellation_at_tiny_arguments() {
        for k in 1..=3u32 {
            let v = phi::<f64>(k, 1e-12).unwrap();
            let at0 = phi::<f64>(k, 0.0).unwrap();
            assert!(v.is_finite());
            assert!((v - at0).abs() < 1e-12, "phi_{k} blew up near zero: {v}");
        }
    }

    #[test]
    fn f32_instantiation() {
        let v = phi::<f32>(2, 0.25f32).unwrap();
        assert!((v - 0.544_406_7).abs() < 1e-6);
    }

    /// 50-term reference series, evaluated in descending order (Horner) so it
    /// is an independent oracle for the closed forms.
    fn phi_reference(k: u32, z: f64) -> f64 {
        let mut acc = 0.0f64;
        for n in (0..50u32).rev() {
            let fact: f64 = (1..=(n + k)).map(|i| i as f64).product();
            acc = acc * z + 1.0 / fact;
        }
        acc
    }

    proptest! {
        #[test]
        fn prop_matches_reference_series(z in -4.0f64..4.0, k in 1u32..=3) {
            let got = phi::<f64>(k, z).unwrap();
            let want = phi_reference(k, z);
            prop_assert!((got - want).abs() <= 1e-13 * want.abs().max(1e-3));
        }
    }
}
