use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Scalar, Tensor};

/// He (Kaiming) normal initialization: `N(0, sqrt(2 / fan_in))`.
pub fn he_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::from_f64(normal.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn variance(t: &Tensor<f64>) -> f64 {
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn sample_variance_close_to_two_over_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t: Tensor<f64> = he_normal(&[100_000], 36, &mut rng);
        let want = 2.0 / 36.0;
        assert!((variance(&t) - want).abs() / want < 0.05);
    }

    #[test]
    fn same_seed_same_tensor() {
        let a: Tensor<f32> = he_normal(&[4, 3, 9], 27, &mut ChaCha8Rng::seed_from_u64(1));
        let b: Tensor<f32> = he_normal(&[4, 3, 9], 27, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }

    #[test]
    fn doubling_fan_in_shrinks_std_by_sqrt_two() {
        let a: Tensor<f64> = he_normal(&[200_000], 16, &mut ChaCha8Rng::seed_from_u64(3));
        let b: Tensor<f64> = he_normal(&[200_000], 32, &mut ChaCha8Rng::seed_from_u64(4));
        let ratio = (variance(&a) / variance(&b)).sqrt();
        assert!((ratio - 2f64.sqrt()).abs() < 0.02);
    }
}
