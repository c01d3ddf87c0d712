use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four 32-bit words of the keystream per voxel.
const WORDS_PER_VOXEL: u128 = 4;

/// Maps one ground-truth plane to intensities `mean + N(0, σ²)`, clamped to `[0, 1]`.
///
/// Voxel `i` (linear index in the full volume) draws from keystream words
/// `4i..4i+4` of a ChaCha8 generator keyed by `rng_seed`, so values do not
/// depend on the order in which planes are produced.
pub fn noisy_plane(mask: &[bool], first_index: u64, rng_seed: u64, sigma: f64, bg_mean: f64, fg_mean: f64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_word_pos(first_index as u128 * WORDS_PER_VOXEL);
    mask.iter()
        .map(|&fg| {
            let (a, b) = (rng.next_u64(), rng.next_u64());
            let mean = if fg { fg_mean } else { bg_mean };
            if sigma == 0.0 {
                return mean as f32;
            }
            let u1 = 1.0 - (a >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let n = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            (mean + sigma * n).clamp(0.0, 1.0) as f32
        })
        .collect()
}

/// Overlapping coefficient of `N(μ₁, σ²)` and `N(μ₂, σ²)`: `2Φ(−|μ₁ − μ₂| / 2σ)`.
///
/// ```
/// let ovl = hrw_core::synth::overlap_coefficient(0.3, 0.7, 0.1);
/// assert!((ovl - 0.0455).abs() < 1e-4);
/// ```
pub fn overlap_coefficient(mu1: f64, mu2: f64, sigma: f64) -> f64 {
    statrs::function::erf::erfc((mu1 - mu2).abs() / (2.0 * sigma) / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_two_valued() {
        let v = noisy_plane(&[true, false, true], 0, 7, 0.0, 0.3, 0.7);
        assert_eq!(v, vec![0.7, 0.3, 0.7]);
    }

    #[test]
    fn order_independent() {
        let mask = vec![false; 100];
        let whole = noisy_plane(&mask, 0, 3, 0.1, 0.3, 0.7);
        let tail = noisy_plane(&mask[40..], 40, 3, 0.1, 0.3, 0.7);
        assert_eq!(&whole[40..], &tail[..]);
        assert_ne!(whole, noisy_plane(&mask, 0, 4, 0.1, 0.3, 0.7));
    }
}
