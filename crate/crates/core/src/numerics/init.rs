use rand::Rng;

use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Xavier/Glorot uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| T::from_f64_lossy(rng.gen_range(-a..a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_seeded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a: Matrix<f64> = xavier_uniform(64, 32, &mut r1);
        let b: Matrix<f64> = xavier_uniform(64, 32, &mut r2);
        assert_eq!(a, b);
        let bound = (6.0f64 / 96.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() < bound));
    }
}
