use rand::Rng;

use crate::frontend::MAX_CROP;

/// Largest pitch shift drawn for the equivariance terms.
pub const MAX_SHIFT: i64 = 12;

/// Draw a crop `c` uniformly from `0..=15` and a shift `k` uniformly from
/// `-12..=12`, redrawing `k` until `c + k` is a valid crop.
pub fn sample_intervals<R: Rng + ?Sized>(rng: &mut R) -> (i64, i64) {
    let max = MAX_CROP as i64;
    let c = rng.gen_range(0..=max);
    loop {
        let k = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
        if (0..=max).contains(&(c + k)) {
            return (c, k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constraints_and_uniform_crop_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 16];
        let n = 100_000;
        for _ in 0..n {
            let (c, k) = sample_intervals(&mut rng);
            assert!((0..=15).contains(&c));
            assert!((0..=15).contains(&(c + k)));
            assert!((-12..=12).contains(&k));
            if c == 15 {
                assert!(k <= 0);
            }
            if c == 0 {
                assert!(k >= 0);
            }
            counts[c as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 1% critical value of chi-square with 15 degrees of freedom
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }
}
