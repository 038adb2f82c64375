//! Counter-based deterministic random numbers (splitmix64 finalizer).
//!
//! Sampling runs must be reproducible across platforms and across any
//! internal parallelism, so instead of a stateful generator we derive every
//! draw from `(seed, stream, counter)` through the splitmix64 output mix.
//! Standard normals come from the Box-Muller transform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output mix.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `counter`-th raw output of stream `stream` under `seed`.
pub fn counter_u64(seed: u64, stream: u64, counter: u64) -> u64 {
    let base = mix(seed ^ mix(stream.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)));
    mix(base.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform draw in the open interval (0, 1).
pub fn counter_unit(seed: u64, stream: u64, counter: u64) -> f64 {
    // 53 random bits, offset by half an ulp so 0 and 1 are unreachable.
    ((counter_u64(seed, stream, counter) >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal vector of length `dim` for sample index `stream`.
pub fn standard_normal_vec(seed: u64, stream: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let u1 = counter_unit(seed, stream, 2 * i as u64);
            let u2 = counter_unit(seed, stream, 2 * i as u64 + 1);
            (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
        })
        .collect()
}
